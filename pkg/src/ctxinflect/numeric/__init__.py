from . import ops
from .ops import forward_op, logsumexp
from .optim import ParameterStore, adam_step, clip_gradients, global_norm, uniform_init
from .tensor import Tape, Tensor, as_tensor, active_tape, backward, no_grad

__all__ = [
    "ops", "forward_op", "logsumexp", "ParameterStore", "adam_step",
    "clip_gradients", "global_norm", "uniform_init", "Tape", "Tensor",
    "as_tensor", "active_tape", "backward", "no_grad",
]
