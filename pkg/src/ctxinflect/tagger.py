"""Linear-chain CRF over atomic morphological tags.

Lattice layout: ``scores[i, p, m]`` is the log-potential of label ``m`` at
position ``i`` given previous label ``p``.  Row ``p = 0`` stands for the
start symbol and is only read at ``i = 0``; rows ``1..K`` stand for labels
``0..K-1`` and are read for ``i >= 1``.  There is no end transition.

Decoding ties are broken toward the lower label index at every max, which
makes the best path the one whose label sequence, read right to left, is
lexicographically smallest among equal-scoring paths.  The k-best lists use
the same order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, LabelError
from .numeric import ParameterStore, Tensor, ops, uniform_init
from .numeric.ops import _lse


@dataclass
class ScoreLattice:
    scores: np.ndarray
    tensor: Optional[Tensor] = None

    def __post_init__(self):
        s = self.scores
        if s.ndim != 3 or s.shape[1] != s.shape[2] + 1:
            raise DomainError(f"lattice must have shape (n, K+1, K), got {s.shape}")
        if not np.isfinite(s).all():
            raise DomainError("lattice contains non-finite scores")

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def n_labels(self) -> int:
        return self.scores.shape[2]

    def score(self, i: int, prev: Optional[int], label: int) -> float:
        return float(self.scores[i, 0 if prev is None else prev + 1, label])

    def path_score(self, labels) -> float:
        total = self.scores[0, 0, labels[0]]
        for i in range(1, len(labels)):
            total = total + self.scores[i, labels[i - 1] + 1, labels[i]]
        return float(total)

    @classmethod
    def from_parts(cls, start, trans, unary) -> "ScoreLattice":
        """Assemble from start scores (K,), transitions (K, K) and unaries (n, K)."""
        table = np.vstack([np.asarray(start)[None, :], np.asarray(trans)])
        unary = np.asarray(unary)
        return cls(table[None, :, :] + unary[:, None, :])


class CrfTagger:
    """Transition matrix A (K+1, K) and tag embeddings o_m stacked as (K, dim)."""

    def __init__(self, store: ParameterStore, n_labels: int, dim: int, rng: np.random.Generator):
        self.n_labels = n_labels
        self.trans = store.add("crf.trans", rng.uniform(-0.1, 0.1, (n_labels + 1, n_labels)))
        self.tag_emb = store.add("crf.tag_emb", uniform_init(rng, (n_labels, dim)))


def build_lattice(encoding: Tensor, crf: CrfTagger) -> ScoreLattice:
    """``scores[i, p, m] = A[p, m] + o_m . h_i``, kept on the tape."""
    if encoding.shape[0] == 0:
        raise DomainError("empty encoding")
    unary = ops.matmul(encoding, ops.transpose(crf.tag_emb))
    n, k = unary.shape
    t = ops.reshape(crf.trans, (1, k + 1, k)) + ops.reshape(unary, (n, 1, k))
    return ScoreLattice(t.data, t)


def _as_tensor(lattice) -> Tensor:
    if isinstance(lattice, ScoreLattice):
        return lattice.tensor if lattice.tensor is not None else Tensor(lattice.scores)
    return lattice


def log_partition(lattice: ScoreLattice) -> float:
    """Forward algorithm in log space."""
    s = lattice.scores
    alpha = s[0, 0]
    for i in range(1, s.shape[0]):
        alpha = _lse(alpha[:, None] + s[i, 1:], axis=0)
    return float(_lse(alpha, axis=0))


def log_partition_tensor(lattice) -> Tensor:
    """Differentiable forward algorithm; returns a scalar Tensor."""
    t = _as_tensor(lattice)
    n, rows, k = t.shape
    alpha = t[0, 0]
    for i in range(1, n):
        alpha = ops.logsumexp(ops.reshape(alpha, (k, 1)) + t[i, 1:], axis=0)
    return ops.logsumexp(alpha, axis=0)


def _check_labels(labels, n, k):
    labels = [int(x) for x in labels]
    if len(labels) != n:
        raise LabelError(f"{len(labels)} gold labels for a lattice of length {n}")
    for x in labels:
        if not 0 <= x < k:
            raise LabelError(f"label {x} outside [0, {k})")
    return labels


def gold_score_tensor(lattice, labels) -> Tensor:
    t = _as_tensor(lattice)
    n, _, k = t.shape
    labels = _check_labels(labels, n, k)
    prev = np.array([0] + [x + 1 for x in labels[:-1]])
    picked = t[np.arange(n), prev, np.array(labels)]
    return ops.sum(picked)


def crf_nll(lattice, labels) -> Tensor:
    """``log Z - score(gold path)`` as a scalar on the tape."""
    return ops.sub(log_partition_tensor(lattice), gold_score_tensor(lattice, labels))


def crf_log_prob(lattice: ScoreLattice, labels) -> float:
    labels = _check_labels(labels, lattice.n, lattice.n_labels)
    return lattice.path_score(labels) - log_partition(lattice)


def viterbi(lattice: ScoreLattice):
    """Best label sequence and its score."""
    s = lattice.scores
    n, _, k = s.shape
    delta = s[0, 0].copy()
    back = []
    cols = np.arange(k)
    for i in range(1, n):
        cand = delta[:, None] + s[i, 1:]
        best = np.argmax(cand, axis=0)
        back.append(best)
        delta = cand[best, cols]
    last = int(np.argmax(delta))
    path = [last]
    for best in reversed(back):
        path.append(int(best[path[-1]]))
    path.reverse()
    return path, float(delta[last])


def kbest_viterbi(lattice: ScoreLattice, k: int):
    """Up to ``k`` highest-scoring distinct sequences, best first.

    Each state keeps its own list of the k best partial paths; candidate
    lists are merged with a stable sort so ties follow the label-index rule.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    s = lattice.scores
    n, _, nl = s.shape
    lists = np.full((nl, k), -np.inf)
    lists[:, 0] = s[0, 0]
    back = []
    for i in range(1, n):
        cand = (lists[:, :, None] + s[i, 1:][:, None, :]).reshape(nl * k, nl)
        order = np.argsort(-cand, axis=0, kind="stable")[:k]
        new = np.take_along_axis(cand, order, axis=0)
        if new.shape[0] < k:
            pad = k - new.shape[0]
            new = np.vstack([new, np.full((pad, nl), -np.inf)])
            order = np.vstack([order, np.zeros((pad, nl), dtype=order.dtype)])
        lists = new.T.copy()
        back.append(order)
    final = lists.reshape(-1)
    ranked = np.argsort(-final, kind="stable")[:k]
    results = []
    for flat in ranked:
        score = final[flat]
        if not np.isfinite(score):
            break
        label, r = divmod(int(flat), k)
        path = [label]
        for order in reversed(back):
            prev, r = divmod(int(order[r, label]), k)
            label = prev
            path.append(label)
        path.reverse()
        results.append((path, float(score)))
    return results
