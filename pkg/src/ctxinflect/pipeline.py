"""Joint training, two-stage decoding, evaluation and model files."""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .corpus import (EmbeddingTable, Sentence, TaskInstance, Vocab,
                     build_vocabs, make_task_instance)
from .encoder import SentenceEncoder
from .errors import AlignmentError, CorruptError, DataError, VersionError
from .inflector import Inflector, form_nll
from .numeric import ParameterStore, Tape, adam_step, backward, clip_gradients, ops
from .tagger import (CrfTagger, build_lattice, crf_log_prob, crf_nll,
                     kbest_viterbi, viterbi)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"CTXINFL\x00"


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 0.001
    seed: int = 0
    word_dim: int = 300
    char_dim: int = 100
    char_hidden: int = 100
    hidden_dim: int = 200
    infl_hidden: int = 200
    act_dim: int = 100
    feat_dim: int = 100
    clip_norm: float = 5.0
    mode: str = "joint"
    freeze_embeddings: bool = False
    slots: str = "all_slots"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and not v > 0 and f.name != "seed":
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.mode not in ("joint", "direct"):
            raise ValueError(f"mode must be joint or direct, got {self.mode!r}")
        if self.slots not in ("all_slots", "given_slots"):
            raise ValueError(f"slots must be all_slots or given_slots, got {self.slots!r}")

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class ModelBundle:
    """Vocabularies, configuration and every trained parameter."""

    def __init__(self, vocab: Vocab, config: TrainConfig, embeddings: EmbeddingTable = None):
        self.vocab, self.config = vocab, config
        self.store = ParameterStore()
        rng = np.random.default_rng(config.seed)
        c = config
        self.encoder = SentenceEncoder(
            self.store, vocab, rng, char_dim=c.char_dim, char_hidden=c.char_hidden,
            word_dim=c.word_dim, hidden=c.hidden_dim, embeddings=embeddings,
            freeze_embeddings=c.freeze_embeddings)
        self.crf = CrfTagger(self.store, vocab.n_labels, self.encoder.out_dim, rng)
        self.inflector = Inflector(
            self.store, vocab, rng, mode=c.mode, char_dim=c.char_dim, hidden=c.infl_hidden,
            act_dim=c.act_dim, feat_dim=c.feat_dim, context_dim=self.encoder.out_dim)
        self.format_version = FORMAT_VERSION

    @property
    def mode(self) -> str:
        return self.config.mode

    def labels(self, tags) -> list:
        return [self.vocab.label_of(t) for t in tags]


# --- training -------------------------------------------------------------

def sentence_loss(bundle: ModelBundle, sentence: Sentence, inst: TaskInstance):
    """Negative log of the joint model for one sentence.

    Returns ``(loss, crf_part, per_word_logprob)``; the loss is the CRF NLL
    over every position plus the inflector NLL of every slot token.
    """
    enc = bundle.encoder.encode(inst.visible)
    lattice = build_lattice(enc, bundle.crf)
    crf_part = crf_nll(lattice, bundle.labels(sentence.tags))
    slots = [i for i, s in enumerate(inst.slots) if s]
    if not slots:
        return crf_part, crf_part, np.zeros(0)
    toks = [sentence.tokens[i] for i in slots]
    tags = [t.tag for t in toks]
    infl = bundle.inflector
    if infl.mode == "joint":
        cond = infl.tag_condition(tags)
    else:
        cond = ops.embedding_lookup(enc, slots)
    form_part, per_word = infl.batch_nll([t.lemma for t in toks], tags,
                                         [t.form for t in toks], cond)
    return ops.add(crf_part, form_part), crf_part, per_word


def train(corpus, config: TrainConfig = None, *, vocab: Vocab = None,
          embeddings: EmbeddingTable = None, on_epoch=None, stop=None) -> ModelBundle:
    """Fit all parameters with per-sentence Adam updates.

    ``on_epoch(epoch, total_loss, bundle)`` is called after each epoch;
    ``stop(epoch, bundle)`` may return True to end training early.
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot train on an empty corpus")
    config = config or TrainConfig()
    vocab = vocab or build_vocabs(corpus)
    bundle = ModelBundle(vocab, config, embeddings)
    insts = [make_task_instance(s, config.slots) for s in corpus]
    rng = np.random.default_rng([config.seed, 1])
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for idx in rng.permutation(len(corpus)):
            with Tape():
                loss, _, _ = sentence_loss(bundle, corpus[idx], insts[idx])
            backward(loss)
            clip_gradients(bundle.store, config.clip_norm)
            adam_step(bundle.store, config.lr)
            total += loss.item()
        log.info("epoch %d loss %.4f", epoch, total)
        if on_epoch is not None:
            on_epoch(epoch, total, bundle)
        if stop is not None and stop(epoch, bundle):
            break
    return bundle


# --- prediction -------------------------------------------------------------

@dataclass
class Prediction:
    tags: list
    forms: list
    tags_used: list
    truncated: list
    kbest: list = field(default_factory=list)
    best_score: float = 0.0
    log_z: float = 0.0


def sentence_lattice(bundle: ModelBundle, inst: TaskInstance):
    enc = bundle.encoder.encode(inst.visible)
    return enc, build_lattice(enc, bundle.crf)


def predict_sentence(bundle: ModelBundle, inst: TaskInstance, *, k: int = 1,
                     gold_tags=None) -> Prediction:
    """Viterbi tags for every position, then greedy forms for slot tokens.

    With ``gold_tags`` the inflector is conditioned on them instead of the
    decoded tags.  Direct-mode models never condition generation on tags.
    """
    enc, lattice = sentence_lattice(bundle, inst)
    labels, best = viterbi(lattice)
    tags = [bundle.vocab.tag_of(x) for x in labels]
    kbest = kbest_viterbi(lattice, k) if k > 1 else [(labels, best)]
    used = list(gold_tags) if gold_tags is not None else tags
    infl = bundle.inflector
    forms, truncated = [], []
    for i, (form, slot) in enumerate(zip(inst.forms, inst.slots)):
        if not slot:
            forms.append(form)
            truncated.append(False)
            continue
        lemma = inst.lemmas[i]
        if infl.mode == "joint":
            out, cut = infl.greedy(lemma, used[i], infl.tag_condition([used[i]]))
        else:
            out, cut = infl.greedy(lemma, None, enc[i])
        forms.append(out)
        truncated.append(cut)
    return Prediction(tags, forms, used if infl.mode == "joint" else [None] * len(tags),
                      truncated, kbest, best)


def joint_log_prob(bundle: ModelBundle, sentence: Sentence, inst: TaskInstance = None):
    """log p(w, m | l) computed two ways.

    Returns ``(joint, crf_logprob, form_logprobs)`` where ``joint`` is the
    negated training loss and the other two come from separate per-part
    computations (CRF forward algorithm, one inflector pass per word).
    """
    inst = inst or make_task_instance(sentence, bundle.config.slots)
    loss, _, _ = sentence_loss(bundle, sentence, inst)
    enc, lattice = sentence_lattice(bundle, inst)
    crf_lp = crf_log_prob(lattice, bundle.labels(sentence.tags))
    infl = bundle.inflector
    form_lps = []
    for i, tok in enumerate(sentence.tokens):
        if not inst.slots[i]:
            continue
        cond = infl.tag_condition([tok.tag]) if infl.mode == "joint" else enc[i]
        form_lps.append(-form_nll(infl, tok.lemma, tok.tag, tok.form, cond).item())
    return -loss.item(), crf_lp, form_lps


# --- evaluation ---------------------------------------------------------------

@dataclass
class Metrics:
    k: int = 10
    n_sentences: int = 0
    n_slots: int = 0
    n_tag_scored: int = 0
    tag_correct: int = 0
    tag_in_kbest: int = 0
    form_correct: int = 0
    copy_correct: int = 0
    truncated: int = 0
    attr_correct: dict = field(default_factory=dict)
    attr_total: dict = field(default_factory=dict)

    @staticmethod
    def _ratio(a, b):
        return a / b if b else 0.0

    @property
    def tag_accuracy_1best(self):
        return self._ratio(self.tag_correct, self.n_tag_scored)

    @property
    def tag_precision_at_k(self):
        return self._ratio(self.tag_in_kbest, self.n_tag_scored)

    @property
    def form_accuracy(self):
        return self._ratio(self.form_correct, self.n_slots)

    @property
    def copy_baseline(self):
        return self._ratio(self.copy_correct, self.n_slots)

    @property
    def per_attribute(self):
        return {a: self._ratio(self.attr_correct.get(a, 0), n)
                for a, n in sorted(self.attr_total.items())}

    def merge(self, other: "Metrics") -> "Metrics":
        out = Metrics(self.k)
        for f in ("n_sentences", "n_slots", "n_tag_scored", "tag_correct", "tag_in_kbest",
                  "form_correct", "copy_correct", "truncated"):
            setattr(out, f, getattr(self, f) + getattr(other, f))
        for src in (self, other):
            for a, n in src.attr_total.items():
                out.attr_total[a] = out.attr_total.get(a, 0) + n
            for a, n in src.attr_correct.items():
                out.attr_correct[a] = out.attr_correct.get(a, 0) + n
        return out

    def to_json(self) -> dict:
        return {
            "tag_accuracy_1best": self.tag_accuracy_1best,
            "form_accuracy": self.form_accuracy,
            "tag_precision_at_k": self.tag_precision_at_k,
            "k": self.k,
            "per_attribute": self.per_attribute,
            "copy_baseline": self.copy_baseline,
            "n_sentences": self.n_sentences,
            "n_slots": self.n_slots,
            "n_tag_scored": self.n_tag_scored,
            "truncated": self.truncated,
        }

    def table(self) -> str:
        rows = [("tag accuracy (1-best)", self.tag_accuracy_1best),
                (f"tag precision@{self.k}", self.tag_precision_at_k),
                ("form accuracy", self.form_accuracy),
                ("copy baseline", self.copy_baseline)]
        rows += [(f"  attr {a}", v) for a, v in self.per_attribute.items()]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {100 * v:6.2f}" for name, v in rows]
        lines.append(f"{'slots scored':<{width}}  {self.n_slots:6d}")
        return "\n".join(lines)


def score_sentence(metrics: Metrics, gold: Sentence, inst: TaskInstance, pred_tags,
                   pred_forms, kbest_tags=None, truncated=None) -> None:
    """Accumulate one sentence's counts into ``metrics``."""
    n = len(gold)
    if len(inst) != n or len(pred_tags) != n or len(pred_forms) != n:
        raise AlignmentError(
            f"gold has {n} tokens but prediction has {len(pred_forms)} forms, {len(pred_tags)} tags")
    metrics.n_sentences += 1
    for i, tok in enumerate(gold.tokens):
        if not inst.slots[i]:
            continue
        metrics.n_slots += 1
        metrics.form_correct += pred_forms[i] == tok.form
        metrics.copy_correct += tok.form == tok.lemma
        if truncated is not None:
            metrics.truncated += bool(truncated[i])
        if tok.tag is None or tok.tag.is_empty:
            continue
        metrics.n_tag_scored += 1
        pred = pred_tags[i]
        metrics.tag_correct += pred == tok.tag
        cands = kbest_tags[i] if kbest_tags is not None else {pred}
        metrics.tag_in_kbest += tok.tag in cands
        pattrs = pred.attributes() if pred is not None else {}
        for attr, val in tok.tag.attributes().items():
            metrics.attr_total[attr] = metrics.attr_total.get(attr, 0) + 1
            metrics.attr_correct[attr] = metrics.attr_correct.get(attr, 0) + (pattrs.get(attr) == val)


def _kbest_tag_sets(bundle, kbest, n):
    sets = [set() for _ in range(n)]
    for labels, _ in kbest:
        for i, x in enumerate(labels):
            sets[i].add(bundle.vocab.tag_of(x))
    return sets


def evaluate(bundle: ModelBundle, corpus, slots: str = "all_slots", k: int = 10,
             gold_tags: bool = False) -> Metrics:
    """1-best tag and form accuracy over slot tokens, plus precision@k.

    precision@k counts a position as correct when its gold tag appears at
    that position in any of the k best CRF sequences.
    """
    metrics = Metrics(k)
    for sent in corpus:
        inst = make_task_instance(sent, slots)
        pred = predict_sentence(bundle, inst, k=k,
                                gold_tags=sent.tags if gold_tags else None)
        score_sentence(metrics, sent, inst, pred.tags, pred.forms,
                       _kbest_tag_sets(bundle, pred.kbest, len(sent)), pred.truncated)
    return metrics


def evaluate_gold_tags(bundle: ModelBundle, corpus, slots: str = "all_slots", k: int = 10) -> Metrics:
    """As :func:`evaluate`, but words are inflected from the gold tags."""
    return evaluate(bundle, corpus, slots, k, gold_tags=True)


def score_predictions(bundle: Optional[ModelBundle], gold_corpus, predicted_corpus,
                      slots: str = "all_slots", k: int = 10) -> Metrics:
    """Score an external prediction corpus against gold.

    Tags and forms come from ``predicted_corpus``; precision@k needs
    ``bundle`` and otherwise degenerates to 1-best accuracy.
    """
    gold_corpus, predicted_corpus = list(gold_corpus), list(predicted_corpus)
    if len(gold_corpus) != len(predicted_corpus):
        raise AlignmentError(f"{len(gold_corpus)} gold sentences vs {len(predicted_corpus)} predicted")
    metrics = Metrics(k)
    for gold, pred in zip(gold_corpus, predicted_corpus):
        inst = make_task_instance(gold, slots)
        sets = None
        if bundle is not None and len(pred) == len(gold):
            _, lattice = sentence_lattice(bundle, inst)
            sets = _kbest_tag_sets(bundle, kbest_viterbi(lattice, k), len(gold))
            for i, t in enumerate(pred.tags):
                sets[i].add(t)
        score_sentence(metrics, gold, inst, pred.tags, pred.forms, sets)
    return metrics


# --- persistence --------------------------------------------------------------

def save_model(bundle: ModelBundle, path, dtype: str = "float64") -> None:
    """Write the versioned container: magic, header length, JSON header, payload."""
    if dtype not in ("float64", "float32"):
        raise ValueError("dtype must be float64 or float32")
    np_dtype = np.dtype("<f8" if dtype == "float64" else "<f4")
    arrays, chunks, offset = [], [], 0
    for name in sorted(bundle.store):
        data = np.ascontiguousarray(bundle.store[name].data, dtype=np_dtype).tobytes()
        arrays.append({"name": name, "shape": list(bundle.store[name].shape),
                       "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    header = {
        "format_version": bundle.format_version,
        "dtype": np_dtype.str,
        "config": asdict(bundle.config),
        "vocab": bundle.vocab.to_json(),
        "arrays": arrays,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 or not raw.startswith(MAGIC):
        raise CorruptError(f"{path}: not a model file")
    (hlen,) = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptError(f"{path}: unreadable header") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    payload = raw[start + hlen:]
    expected = sum(a["nbytes"] for a in header["arrays"])
    if len(payload) != expected or hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptError(f"{path}: parameter payload is truncated or damaged")
    bundle = ModelBundle(Vocab.from_json(header["vocab"]), TrainConfig.from_json(header["config"]))
    dt = np.dtype(header["dtype"])
    names = set(bundle.store)
    for a in header["arrays"]:
        if a["name"] not in names:
            raise CorruptError(f"{path}: unexpected parameter {a['name']}")
        arr = np.frombuffer(payload, dtype=dt, count=a["nbytes"] // dt.itemsize, offset=a["offset"])
        bundle.store.set_value(a["name"], arr.reshape(a["shape"]).astype(np.float64))
        names.discard(a["name"])
    if names:
        raise CorruptError(f"{path}: missing parameters {sorted(names)}")
    return bundle


__all__ = [
    "TrainConfig", "ModelBundle", "Prediction", "Metrics", "train", "sentence_loss",
    "predict_sentence", "joint_log_prob", "evaluate", "evaluate_gold_tags",
    "score_predictions", "score_sentence", "save_model", "load_model",
]
