"""Hard-attention character transducer over write/step actions.

The input is the tag's feature symbols followed by ``<w> lemma </w>``.  A
pointer starts on the first lemma character; the decoder either writes an
output character, steps the pointer one position to the right, or ends the
word.  Training is teacher-forced on an edit-distance oracle.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .corpus import BOW, EOW, PAD, UNK, MorphTag, Vocab
from .encoder import LSTM, BiLSTM, pad_ids
from .numeric import ParameterStore, Tensor, ops, uniform_init

STEP = "<step>"
NEG = -1e9

COPY, SUB, INS, DEL = "copy", "sub", "ins", "del"


def build_input(lemma: str, tag: Optional[MorphTag]) -> list:
    """``['POS=V', 'Tense=PAST', '<w>', 't', 'a', 'l', 'k', '</w>']``.

    With ``tag=None`` (tag-free direct mode) no feature symbols are added.
    """
    feats = tag.symbols() if tag is not None else []
    return feats + [BOW] + list(lemma) + [EOW]


def _edit_ops(src: str, tgt: str) -> list:
    n, m = len(src), len(tgt)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = d[i - 1, j - 1] + (src[i - 1] != tgt[j - 1])
            d[i, j] = min(diag, d[i - 1, j] + 1, d[i, j - 1] + 1)
    out = []
    i, j = n, m
    while i or j:
        cur = d[i, j]
        if i and j and src[i - 1] == tgt[j - 1] and d[i - 1, j - 1] == cur:
            out.append((COPY, tgt[j - 1]))
            i, j = i - 1, j - 1
        elif i and j and d[i - 1, j - 1] + 1 == cur:
            out.append((SUB, tgt[j - 1]))
            i, j = i - 1, j - 1
        elif j and d[i, j - 1] + 1 == cur:
            out.append((INS, tgt[j - 1]))
            j -= 1
        else:
            out.append((DEL, None))
            i -= 1
    out.reverse()
    return out


def align_oracle(lemma: str, form: str) -> list:
    """Write/step program turning ``lemma`` into ``form``.

    Characters stand for WRITE actions; ``STEP`` advances the pointer and the
    final ``</w>`` ends the word.  Minimum edit distance with unit costs;
    ties prefer copy, substitution, insertion, deletion (in that order) while
    tracing back from the end of both strings.
    """
    actions = []
    for op, ch in _edit_ops(lemma, form):
        if op in (COPY, SUB):
            actions += [ch, STEP]
        elif op == INS:
            actions.append(ch)
        else:
            actions.append(STEP)
    actions.append(EOW)
    return actions


def replay(actions) -> str:
    out = []
    for a in actions:
        if a == EOW:
            break
        if a != STEP:
            out.append(a)
    return "".join(out)


class Inflector:
    """Parameters of the transducer for one conditioning mode.

    ``mode="joint"`` conditions on a tag (feature symbols in the input plus
    the mean feature embedding in every decoder input); ``mode="direct"``
    sees only the lemma and a sentence-context vector.
    """

    def __init__(self, store: ParameterStore, vocab: Vocab, rng: np.random.Generator, *,
                 mode="joint", char_dim=100, hidden=200, act_dim=100, feat_dim=100,
                 context_dim=400):
        if mode not in ("joint", "direct"):
            raise ValueError(f"unknown inflector mode {mode!r}")
        self.vocab, self.mode = vocab, mode
        self.n_chars = len(vocab.chars)
        self.step_id = self.n_chars
        self.eow_id = self.n_chars + 1
        self.bos_id = self.n_chars + 2
        self.n_actions = self.n_chars + 2
        self.hidden = hidden
        n_in = self.n_chars + len(vocab.feats)
        self.in_emb = store.add("infl.in_emb", rng.uniform(-0.1, 0.1, (n_in, char_dim)))
        self.enc = BiLSTM(store, "infl.enc", char_dim, hidden, rng)
        self.act_emb = store.add("infl.act_emb", rng.uniform(-0.1, 0.1, (self.n_actions + 1, act_dim)))
        if mode == "joint":
            self.feat_emb = store.add("infl.feat_emb", rng.uniform(-0.1, 0.1, (len(vocab.feats), feat_dim)))
            self.cond_dim = feat_dim
        else:
            self.feat_emb = None
            self.cond_dim = context_dim
        self.dec = LSTM(store, "infl.dec", 2 * hidden + self.cond_dim + act_dim, hidden, rng)
        self.out_w = store.add("infl.out.w", uniform_init(rng, (hidden, self.n_actions)))
        self.out_b = store.add("infl.out.b", np.zeros(self.n_actions))
        # control symbols and UNK are never written as output characters
        base = np.zeros(self.n_actions)
        for sym in (PAD, UNK, BOW, EOW):
            base[vocab.chars.lookup(sym)] = NEG
        self._mask_open = base
        self._mask_last = base.copy()
        self._mask_last[self.step_id] = NEG

    # --- symbols --------------------------------------------------------

    def input_symbols(self, lemma: str, tag: Optional[MorphTag]) -> list:
        return build_input(lemma, tag if self.mode == "joint" else None)

    def input_ids(self, symbols) -> list:
        chars, feats = self.vocab.chars, self.vocab.feats
        out = []
        for s in symbols:
            if s in chars.index or len(s) == 1:
                out.append(chars.lookup(s))
            else:
                out.append(self.n_chars + feats.lookup(s))
        return out

    def action_ids(self, actions) -> list:
        lookup = self.vocab.chars.lookup
        return [self.step_id if a == STEP else self.eow_id if a == EOW else lookup(a)
                for a in actions]

    def action_symbol(self, a: int) -> str:
        if a == self.step_id:
            return STEP
        if a == self.eow_id:
            return EOW
        return self.vocab.chars.symbol(a)

    # --- conditioning ---------------------------------------------------

    def tag_condition(self, tags) -> Tensor:
        """Mean feature-symbol embedding per tag, shape (B, feat_dim)."""
        feats = self.vocab.feats
        avg = np.zeros((len(tags), len(feats)))
        for b, tag in enumerate(tags):
            ids = [feats.lookup(s) for s in tag.symbols()]
            for i in ids:
                avg[b, i] += 1.0 / len(ids)
        return ops.matmul(Tensor(avg), self.feat_emb)

    # --- encoder --------------------------------------------------------

    def encode_inputs(self, symbol_lists):
        """BiLSTM over padded inputs; returns ((T*B, 2H) rows, T, B).

        Row ``t * B + b`` holds x_t of item ``b``.
        """
        ids, lengths = pad_ids([self.input_ids(s) for s in symbol_lists],
                               self.vocab.chars.lookup(PAD))
        steps, batch = ids.shape
        xs = ops.embedding_lookup(self.in_emb, ids)
        f_out, b_out, _, _ = self.enc.run(xs, lengths)
        x = ops.concat([f_out, b_out], axis=-1)
        return ops.reshape(x, (steps * batch, 2 * self.hidden)), steps, batch

    # --- teacher-forced likelihood ---------------------------------------

    def batch_nll(self, lemmas, tags, forms, cond: Tensor):
        """Summed NLL of the oracle programs for a batch of words.

        Returns ``(total, per_word)`` where ``per_word`` is a numpy array of
        each word's log-likelihood (negated NLL).
        """
        symbols = [self.input_symbols(l, t) for l, t in zip(lemmas, tags)]
        x_rows, _, batch = self.encode_inputs(symbols)
        programs = [self.action_ids(align_oracle(l, f)) for l, f in zip(lemmas, forms)]
        n_steps = max(len(p) for p in programs)
        att = np.zeros((n_steps, batch), dtype=np.intp)
        prev = np.full((n_steps, batch), self.bos_id, dtype=np.intp)
        target = np.zeros((n_steps, batch), dtype=np.intp)
        valid = np.zeros((n_steps, batch))
        masks = np.zeros((n_steps, batch, self.n_actions))
        for b, (prog, sym) in enumerate(zip(programs, symbols)):
            pos = sym.index(BOW) + 1
            last = len(sym) - 1
            for s, a in enumerate(prog):
                att[s, b] = pos * batch + b
                prev[s, b] = self.bos_id if s == 0 else prog[s - 1]
                target[s, b] = a
                valid[s, b] = 1.0
                masks[s, b] = self._mask_last if pos == last else self._mask_open
                if a == self.step_id:
                    pos += 1
        z = ops.concat([
            ops.embedding_lookup(x_rows, att),
            ops.index(cond, np.broadcast_to(np.arange(batch), (n_steps, batch))),
            ops.embedding_lookup(self.act_emb, prev),
        ], axis=-1)
        outs, _ = self.dec.run(z, valid if (valid == 0).any() else None)
        flat = ops.reshape(outs, (n_steps * batch, self.hidden))
        logits = ops.matmul(flat, self.out_w) + self.out_b
        logp = ops.log_softmax(logits + masks.reshape(n_steps * batch, self.n_actions))
        picked = ops.index(logp, (np.arange(n_steps * batch), target.reshape(-1)))
        weighted = ops.mul(picked, valid.reshape(-1))
        per_word = weighted.data.reshape(n_steps, batch).sum(axis=0)
        return ops.neg(ops.sum(weighted)), per_word

    # --- decoding ---------------------------------------------------------

    def decoder_step(self, x_att: Tensor, cond: Tensor, prev: int, state, at_last: bool):
        """One decoder transition; returns (action distribution, new state)."""
        z = ops.concat([ops.reshape(x_att, (1, -1)),
                        ops.reshape(cond, (1, -1)),
                        ops.embedding_lookup(self.act_emb, [prev])], axis=-1)
        if state is None:
            state = self.dec.initial_state(1)
        h, c = ops.lstm_cell(ops.matmul(z, self.dec.w_x) + self.dec.b, state[0], state[1], self.dec.w_h)
        logits = ops.matmul(h, self.out_w) + self.out_b
        mask = self._mask_last if at_last else self._mask_open
        probs = ops.softmax(logits + mask)
        return ops.reshape(probs, (self.n_actions,)), (h, c)

    def greedy(self, lemma: str, tag: Optional[MorphTag], cond: Tensor, max_len=None):
        """Greedy decode; returns ``(form, truncated)``.

        ``max_len`` caps the number of written characters (default
        ``2 * len(lemma) + 10``).
        """
        if max_len is None:
            max_len = 2 * len(lemma) + 10
        sym = self.input_symbols(lemma, tag)
        x_rows, _, _ = self.encode_inputs([sym])
        pos, last = sym.index(BOW) + 1, len(sym) - 1
        prev, state, out = self.bos_id, None, []
        cond = ops.reshape(cond, (self.cond_dim,))
        while True:
            probs, state = self.decoder_step(x_rows[pos], cond, prev, state, pos == last)
            a = int(np.argmax(probs.data))
            if a == self.eow_id:
                return "".join(out), False
            if a == self.step_id:
                pos += 1
            else:
                out.append(self.vocab.chars.symbol(a))
                if len(out) >= max_len:
                    return "".join(out), True
            prev = a


def encode_lemma_input(symbols, inflector: Inflector) -> Tensor:
    """x_1..x_J for one augmented input, shape (J, 2 * hidden)."""
    x_rows, _, _ = inflector.encode_inputs([symbols])
    return x_rows


def decoder_step(inflector: Inflector, x_att, cond, prev, state, at_last=False):
    return inflector.decoder_step(x_att, cond, prev, state, at_last)


def form_nll(inflector: Inflector, lemma: str, tag, form: str, cond: Tensor) -> Tensor:
    """Teacher-forced NLL of the oracle program for one word."""
    cond = ops.reshape(cond, (1, inflector.cond_dim))
    total, _ = inflector.batch_nll([lemma], [tag], [form], cond)
    return total


def greedy_inflect(inflector: Inflector, lemma: str, tag, cond: Tensor, max_len=None) -> str:
    return inflector.greedy(lemma, tag, cond, max_len)[0]
