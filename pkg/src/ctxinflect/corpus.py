"""CoNLL-U ingestion, morphological tags, vocabularies and task instances."""
from __future__ import annotations

import io
import unicodedata
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import DataError, FormatError, LabelError, ParseError

BOW, EOW, UNK, PAD = "<w>", "</w>", "<unk>", "<pad>"
START_TAG = "<s>"
SLOT_FLAG = "Slot=Yes"


@dataclass(frozen=True, order=True)
class MorphTag:
    """A part of speech plus attribute-value pairs, kept sorted by attribute."""

    pos: str
    features: tuple = ()

    def __post_init__(self):
        feats = tuple(sorted(self.features))
        attrs = [a for a, _ in feats]
        if len(set(attrs)) != len(attrs):
            raise ParseError(f"duplicate attribute in tag {feats}")
        object.__setattr__(self, "features", feats)

    @property
    def is_empty(self) -> bool:
        return self.pos == "_" and not self.features

    def symbols(self) -> list:
        """Feature symbols in canonical order, e.g. ``['POS=V', 'Tense=PAST']``."""
        return [f"POS={self.pos}"] + [f"{a}={v}" for a, v in self.features]

    def canonical(self) -> str:
        return "|".join(self.symbols())

    def attributes(self) -> dict:
        out = {"POS": self.pos}
        out.update(self.features)
        return out

    def feats_column(self) -> str:
        return "|".join(f"{a}={v}" for a, v in self.features) or "_"

    def __str__(self):
        return self.canonical()

    @classmethod
    def from_canonical(cls, text: str) -> "MorphTag":
        head, _, rest = text.partition("|")
        if not head.startswith("POS="):
            raise ParseError(f"canonical tag must start with POS=: {text!r}")
        return parse_feats(head[4:], rest or "_")


def parse_feats(upos: str, feats: str) -> MorphTag:
    """Build a tag from the UPOS and FEATS columns of a CoNLL-U row."""
    pairs = []
    if feats != "_" and feats != "":
        for item in feats.split("|"):
            attr, eq, val = item.partition("=")
            if not eq or not attr or not val:
                raise ParseError(f"malformed feature pair {item!r}")
            pairs.append((attr, val))
    return MorphTag(upos, tuple(pairs))


@dataclass
class Token:
    form: str
    lemma: str
    tag: Optional[MorphTag] = None
    is_slot: bool = False


@dataclass
class Sentence:
    tokens: list

    def __post_init__(self):
        if not self.tokens:
            raise DataError("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    @property
    def lemmas(self):
        return [t.lemma for t in self.tokens]

    @property
    def tags(self):
        return [t.tag for t in self.tokens]


# --- CoNLL-U -------------------------------------------------------------

def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def iter_conllu_lines(text: str) -> Iterator[tuple]:
    """Yield ``(line_no, kind, payload)`` for every line of a CoNLL-U stream.

    ``kind`` is one of ``"token"`` (payload: the 10 columns), ``"blank"``,
    ``"comment"`` or ``"skip"`` (range and empty-node rows).  Used by both the
    parser and the prediction writer so that they agree line for line.
    """
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            yield n, "blank", line
            continue
        if line.startswith("#"):
            yield n, "comment", line
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"expected 10 tab-separated columns, found {len(cols)}", line=n)
        tid = cols[0]
        if "-" in tid or "." in tid:
            yield n, "skip", cols
            continue
        yield n, "token", cols


def _read_text(source) -> str:
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_conllu(source) -> list:
    """Parse CoNLL-U text (a string or a readable stream) into sentences.

    Uses FORM, LEMMA, UPOS and FEATS.  A token is a slot when its MISC column
    contains ``Slot=Yes``.
    """
    sentences, current = [], []
    for n, kind, payload in iter_conllu_lines(_read_text(source)):
        if kind == "blank":
            if current:
                sentences.append(Sentence(current))
                current = []
        elif kind == "token":
            cols = payload
            try:
                tag = parse_feats(cols[3], cols[5])
            except ParseError as exc:
                raise ParseError(str(exc), line=n) from None
            misc = cols[9].split("|")
            current.append(Token(_nfc(cols[1]), _nfc(cols[2]), tag, SLOT_FLAG in misc))
    if current:
        sentences.append(Sentence(current))
    return sentences


def read_conllu(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_conllu(fh)


def format_token_line(i: int, form: str, lemma: str, tag: Optional[MorphTag],
                      is_slot: bool) -> str:
    upos = tag.pos if tag is not None else "_"
    feats = tag.feats_column() if tag is not None else "_"
    misc = SLOT_FLAG if is_slot else "_"
    return "\t".join([str(i), form, lemma, upos, "_", feats, "_", "_", "_", misc])


def write_conllu(sentences: Iterable[Sentence], stream=None) -> str:
    """Serialize sentences; unpredicted columns carry ``_``."""
    out = io.StringIO()
    for sent in sentences:
        for i, tok in enumerate(sent.tokens, start=1):
            out.write(format_token_line(i, tok.form, tok.lemma, tok.tag, tok.is_slot) + "\n")
        out.write("\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


# --- vocabularies --------------------------------------------------------

class SymbolTable:
    """Dense symbol <-> index mapping with an optional UNK fallback."""

    def __init__(self, symbols, unk: Optional[str] = None):
        self.symbols = list(symbols)
        self.index = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise DataError("duplicate symbols in vocabulary")
        self.unk = unk
        self.unk_id = self.index[unk] if unk is not None else None

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self.index

    def __getitem__(self, sym) -> int:
        return self.lookup(sym)

    def lookup(self, sym) -> int:
        i = self.index.get(sym)
        if i is None:
            if self.unk_id is None:
                raise LabelError(f"unknown symbol {sym!r}")
            return self.unk_id
        return i

    def symbol(self, i: int):
        return self.symbols[i]

    def __eq__(self, other):
        return isinstance(other, SymbolTable) and self.symbols == other.symbols and self.unk == other.unk


@dataclass
class Vocab:
    words: SymbolTable
    chars: SymbolTable
    tags: SymbolTable      # index 0 is the start symbol, never predicted
    feats: SymbolTable

    @property
    def n_labels(self) -> int:
        """Number of predictable tag labels (excludes the start symbol)."""
        return len(self.tags) - 1

    def label_of(self, tag: MorphTag) -> int:
        """CRF label index in ``[0, n_labels)`` for a tag; LabelError if unseen."""
        key = tag.canonical()
        if key not in self.tags.index:
            raise LabelError(f"tag {key} not in the label set")
        return self.tags.index[key] - 1

    def tag_of(self, label: int) -> MorphTag:
        return MorphTag.from_canonical(self.tags.symbol(label + 1))

    def char_ids(self, s: str) -> list:
        return [self.chars.lookup(ch) for ch in s]

    def to_json(self) -> dict:
        return {"words": self.words.symbols, "chars": self.chars.symbols,
                "tags": self.tags.symbols, "feats": self.feats.symbols}

    @classmethod
    def from_json(cls, d: dict) -> "Vocab":
        return cls(SymbolTable(d["words"], UNK), SymbolTable(d["chars"], UNK),
                   SymbolTable(d["tags"]), SymbolTable(d["feats"], UNK))


def build_vocabs(corpus) -> Vocab:
    """Vocabularies from training data; symbol lists are sorted for determinism."""
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot build vocabularies from an empty corpus")
    words, chars, tags, feats = set(), set(), set(), set()
    for sent in corpus:
        for tok in sent.tokens:
            words.update((tok.lemma, tok.form))
            chars.update(tok.lemma)
            chars.update(tok.form)
            if tok.tag is not None:
                tags.add(tok.tag.canonical())
                feats.update(tok.tag.symbols())
    return Vocab(
        words=SymbolTable([PAD, UNK] + sorted(words), UNK),
        chars=SymbolTable([PAD, UNK, BOW, EOW] + sorted(chars), UNK),
        tags=SymbolTable([START_TAG] + sorted(tags)),
        feats=SymbolTable([PAD, UNK] + sorted(feats), UNK),
    )


# --- pretrained embeddings -------------------------------------------------

@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return word in self.vectors

    def get(self, word):
        return self.vectors.get(word)


def load_embeddings(stream, dim_expected: int) -> EmbeddingTable:
    """Read word vectors in the fastText/word2vec text format.

    An optional ``<count> <dim>`` header is recognized on the first line.
    """
    table = EmbeddingTable(dim_expected)
    for n, line in enumerate(_read_text(stream).splitlines(), start=1):
        parts = line.rstrip("\r\n").split()
        if not parts:
            continue
        if n == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            if int(parts[1]) != dim_expected:
                raise FormatError(f"header declares dim {parts[1]}, expected {dim_expected}", line=n)
            continue
        word, values = parts[0], parts[1:]
        if len(values) != dim_expected:
            raise FormatError(f"vector for {word!r} has {len(values)} values, expected {dim_expected}", line=n)
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise FormatError(f"non-numeric value in vector for {word!r}", line=n) from None
        table.vectors[_nfc(word)] = vec
    return table


# --- task instances --------------------------------------------------------

@dataclass(frozen=True)
class TaskInstance:
    """What a system sees: lemmas at slot positions, surface forms elsewhere."""

    lemmas: tuple
    forms: tuple
    slots: tuple

    def __len__(self):
        return len(self.lemmas)

    @property
    def visible(self) -> tuple:
        return tuple(l if s else f for l, f, s in zip(self.lemmas, self.forms, self.slots))

    @property
    def n_slots(self) -> int:
        return int(sum(self.slots))


def make_task_instance(sentence: Sentence, mode: str = "all_slots") -> TaskInstance:
    if mode in ("all_slots", "all"):
        slots = tuple(True for _ in sentence.tokens)
    elif mode in ("given_slots", "given"):
        slots = tuple(t.is_slot for t in sentence.tokens)
    else:
        raise ValueError(f"unknown slot mode {mode!r}")
    return TaskInstance(tuple(sentence.lemmas), tuple(sentence.forms), slots)


def with_slots(sentence: Sentence, mode: str) -> Sentence:
    """Copy of ``sentence`` whose ``is_slot`` flags follow ``mode``."""
    inst = make_task_instance(sentence, mode)
    return Sentence([replace(t, is_slot=s) for t, s in zip(sentence.tokens, inst.slots)])
