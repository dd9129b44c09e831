"""Character-composed word vectors and the sentence-level BiLSTM.

Every lemma is read by a character BiLSTM; its two final states are joined
with a (possibly pretrained) word embedding and linearly projected.  The
projected vectors run through a sentence BiLSTM whose forward and backward
states are concatenated into one context vector per position.
"""
from __future__ import annotations

import numpy as np

from .corpus import BOW, EOW, PAD, EmbeddingTable, Vocab
from .errors import DomainError, ShapeError
from .numeric import ParameterStore, Tensor, ops, uniform_init


class LSTM:
    """Weights ``W_x`` (in, 4H), ``W_h`` (H, 4H) and ``b`` (4H) in a store."""

    def __init__(self, store: ParameterStore, prefix: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.in_dim, self.hidden = in_dim, hidden
        self.w_x = store.add(f"{prefix}.w_x", uniform_init(rng, (in_dim, 4 * hidden), in_dim, hidden))
        self.w_h = store.add(f"{prefix}.w_h", uniform_init(rng, (hidden, 4 * hidden), hidden, hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget gate
        self.b = store.add(f"{prefix}.b", bias)

    def initial_state(self, batch: int):
        z = np.zeros((batch, self.hidden))
        return Tensor(z), Tensor(z)

    def run(self, xs: Tensor, mask=None):
        """Run over ``xs`` of shape (T, B, in); returns (outputs (T, B, H), h_T)."""
        steps, batch = xs.shape[0], xs.shape[1]
        if xs.shape[2] != self.in_dim:
            raise ShapeError(f"LSTM expects input dim {self.in_dim}, got {xs.shape[2]}")
        gx = ops.matmul(ops.reshape(xs, (steps * batch, self.in_dim)), self.w_x) + self.b
        gx = ops.reshape(gx, (steps, batch, 4 * self.hidden))
        h, c = self.initial_state(batch)
        outs = []
        for t in range(steps):
            m = None if mask is None else mask[t]
            h, c = ops.lstm_cell(gx[t], h, c, self.w_h, m)
            outs.append(h)
        return ops.stack(outs, axis=0), h


def lstm_step(x, h_prev, c_prev, lstm: LSTM):
    """Single LSTM step on one input vector or a (B, in) batch."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-1] != lstm.in_dim:
        raise ShapeError(f"lstm_step expects input dim {lstm.in_dim}, got {x.shape[-1]}")
    gx = ops.matmul(x, lstm.w_x) + lstm.b
    return ops.lstm_cell(gx, h_prev, c_prev, lstm.w_h)


def _reverse_index(lengths, steps):
    """Index arrays mapping padded time t of each row to position len-1-t."""
    lengths = np.asarray(lengths)
    t = np.arange(steps)[:, None]
    rev = lengths[None, :] - 1 - t
    rev = np.where(rev >= 0, rev, 0)
    cols = np.broadcast_to(np.arange(len(lengths))[None, :], rev.shape)
    return rev, cols


class BiLSTM:
    def __init__(self, store, prefix, in_dim, hidden, rng):
        self.fwd = LSTM(store, f"{prefix}.fwd", in_dim, hidden, rng)
        self.bwd = LSTM(store, f"{prefix}.bwd", in_dim, hidden, rng)
        self.hidden = hidden

    def run(self, xs: Tensor, lengths):
        """Encode a left-aligned padded batch ``xs`` (T, B, in).

        Returns ``(fwd_out, bwd_out, fwd_last, bwd_last)``; both output
        tensors are aligned with the input positions (padding rows are junk).
        The two directions advance together through one stacked recurrence.
        """
        steps, batch, in_dim = xs.shape
        lengths = np.asarray(lengths)
        if (lengths != steps).any():
            mask = (np.arange(steps)[:, None] < lengths[None, :]).astype(float)
            rev = _reverse_index(lengths, steps)
        else:
            mask, rev = None, np.arange(steps)[::-1]
        xs_rev = xs[rev]
        gx = []
        for cell, seq in ((self.fwd, xs), (self.bwd, xs_rev)):
            flat = ops.matmul(ops.reshape(seq, (steps * batch, in_dim)), cell.w_x) + cell.b
            gx.append(ops.reshape(flat, (steps, batch, 4 * self.hidden)))
        gx = ops.stack(gx, axis=1)
        w_h = ops.stack([self.fwd.w_h, self.bwd.w_h], axis=0)
        zeros = Tensor(np.zeros((2, batch, self.hidden)))
        h, c = zeros, zeros
        outs = []
        for t in range(steps):
            h, c = ops.lstm_cell(gx[t], h, c, w_h, None if mask is None else mask[t])
            outs.append(h)
        out = ops.stack(outs, axis=0)
        return out[:, 0], out[:, 1][rev], h[0], h[1]


def pad_ids(seqs, pad_id: int):
    """Stack integer sequences into a (T, B) array padded with ``pad_id``."""
    lengths = [len(s) for s in seqs]
    out = np.full((max(lengths), len(seqs)), pad_id, dtype=np.intp)
    for b, s in enumerate(seqs):
        out[:len(s), b] = s
    return out, lengths


class SentenceEncoder:
    """Parameters and forward computation of the context encoder."""

    def __init__(self, store: ParameterStore, vocab: Vocab, rng: np.random.Generator, *,
                 char_dim=100, char_hidden=100, word_dim=300, hidden=200,
                 embeddings: EmbeddingTable = None, freeze_embeddings=False):
        self.vocab = vocab
        self.hidden = hidden
        self.word_dim = word_dim
        self.char_emb = store.add("enc.char_emb", rng.uniform(-0.1, 0.1, (len(vocab.chars), char_dim)))
        self.char_lstm = BiLSTM(store, "enc.char", char_dim, char_hidden, rng)
        table = rng.uniform(-0.1, 0.1, (len(vocab.words), word_dim))
        if embeddings is not None:
            if embeddings.dim != word_dim:
                raise ShapeError(f"embedding dim {embeddings.dim} != word_dim {word_dim}")
            for w, i in vocab.words.index.items():
                vec = embeddings.get(w)
                if vec is not None:
                    table[i] = vec
        self.word_emb = store.add("enc.word_emb", table, trainable=not freeze_embeddings)
        fused = 2 * char_hidden + word_dim
        self.proj_w = store.add("enc.proj.w", uniform_init(rng, (fused, word_dim)))
        self.proj_b = store.add("enc.proj.b", np.zeros(word_dim))
        self.sent_lstm = BiLSTM(store, "enc.sent", word_dim, hidden, rng)

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def word_vectors(self, words) -> Tensor:
        """Projected word vectors, shape (n, word_dim)."""
        chars = self.vocab.chars
        seqs = [[chars.lookup(BOW)] + self.vocab.char_ids(w) + [chars.lookup(EOW)] for w in words]
        ids, lengths = pad_ids(seqs, chars.lookup(PAD))
        xs = ops.embedding_lookup(self.char_emb, ids)
        _, _, f_last, b_last = self.char_lstm.run(xs, lengths)
        wv = ops.embedding_lookup(self.word_emb, [self.vocab.words.lookup(w) for w in words])
        fused = ops.concat([f_last, b_last, wv], axis=-1)
        return ops.matmul(fused, self.proj_w) + self.proj_b

    def encode(self, words) -> Tensor:
        """Context vectors h_1..h_n as one (n, 2 * hidden) tensor."""
        words = list(words)
        if not words:
            raise DomainError("cannot encode an empty sentence")
        vecs = self.word_vectors(words)
        xs = ops.reshape(vecs, (len(words), 1, self.word_dim))
        f_out, b_out, _, _ = self.sent_lstm.run(xs, [len(words)])
        n = len(words)
        return ops.concat([ops.reshape(f_out, (n, self.hidden)),
                           ops.reshape(b_out, (n, self.hidden))], axis=-1)


def encode_word(lemma: str, encoder: SentenceEncoder) -> Tensor:
    if not lemma:
        raise DomainError("empty lemma")
    return ops.reshape(encoder.word_vectors([lemma]), (encoder.word_dim,))


def encode_sentence(lemmas, encoder: SentenceEncoder) -> Tensor:
    return encoder.encode(lemmas)
