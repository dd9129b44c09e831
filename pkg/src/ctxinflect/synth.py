"""Deterministic synthetic agreement corpus.

Sentences look like ``[cue] [dem] quant [adj] noun verb-phrase [cue] .``.
Nouns and verbs are drawn from a Zipf distribution over a lexicon whose
head is irregular and whose long tail is regular, so rare lemmas show up
in only some of their forms.
The quantifier fixes grammatical number, which the demonstrative, the noun
and a present-tense verb or auxiliary must agree with.  Tense is inherent:
it is signalled by a time adverb (``yesterday``/``now``...) in most
sentences and left to chance in the rest, which keeps a tagger honest but
imperfect.  Inflectable tokens carry the slot flag.
"""
from __future__ import annotations

import numpy as np

from .corpus import MorphTag, Sentence, Token, parse_feats

# lemma -> (singular, plural)
NOUNS = {
    "cat": ("cat", "cats"), "dog": ("dog", "dogs"), "fox": ("fox", "foxes"),
    "bird": ("bird", "birds"), "city": ("city", "cities"), "bus": ("bus", "buses"),
    "child": ("child", "children"), "mouse": ("mouse", "mice"), "baby": ("baby", "babies"),
    "horse": ("horse", "horses"), "wolf": ("wolf", "wolves"), "box": ("box", "boxes"),
    "puppy": ("puppy", "puppies"), "goose": ("goose", "geese"), "bench": ("bench", "benches"),
}

# lemma -> (3sg present, plural present, past, present participle)
VERBS = {
    "walk": ("walks", "walk", "walked", "walking"),
    "jump": ("jumps", "jump", "jumped", "jumping"),
    "sleep": ("sleeps", "sleep", "slept", "sleeping"),
    "play": ("plays", "play", "played", "playing"),
    "watch": ("watches", "watch", "watched", "watching"),
    "carry": ("carries", "carry", "carried", "carrying"),
    "cry": ("cries", "cry", "cried", "crying"),
    "sit": ("sits", "sit", "sat", "sitting"),
    "run": ("runs", "run", "ran", "running"),
    "eat": ("eats", "eat", "ate", "eating"),
    "sing": ("sings", "sing", "sang", "singing"),
    "wait": ("waits", "wait", "waited", "waiting"),
}

_REGULAR_NOUNS = (
    "table chair lamp book car tree house garden river lake road farmer teacher doctor "
    "student girl boy friend monkey donkey key toy rabbit tiger lion snake frog duck cow "
    "goat window door cup plate bottle glass dish brush church beach story party lady "
    "pony berry cherry flower apple candle basket pencil island valley tower bridge"
).split()

_REGULAR_VERBS = (
    "help call climb cook dance kick laugh learn listen look paint pull push rest roll "
    "smile talk touch turn wash work yell fix kiss miss pass reach bark hunt visit count "
    "point clean dream fill guard land lift melt plant print roar rush search shout sniff "
    "spell start test trust want warn wish wonder worry hurry study move hope bake race "
    "chase wave share arrive taste"
).split()

_SIBILANT = ("s", "sh", "ch", "x", "z")


def _add_s(word):
    if word.endswith(_SIBILANT):
        return word + "es"
    if word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


def _past(word):
    if word.endswith("e"):
        return word + "d"
    if word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ied"
    return word + "ed"


def _ing(word):
    if word.endswith("e") and not word.endswith("ee"):
        return word[:-1] + "ing"
    return word + "ing"


for _w in _REGULAR_NOUNS:
    NOUNS.setdefault(_w, (_w, _add_s(_w)))
for _w in _REGULAR_VERBS:
    VERBS.setdefault(_w, (_add_s(_w), _w, _past(_w), _ing(_w)))

# head of the distribution = listing order above (irregulars first)
NOUN_LIST = tuple(NOUNS)
VERB_LIST = tuple(VERBS)


def _zipf(n):
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


_NOUN_P = _zipf(len(NOUN_LIST))
_VERB_P = _zipf(len(VERB_LIST))

BE = {("Sing", "Pres"): "is", ("Plur", "Pres"): "are",
      ("Sing", "Past"): "was", ("Plur", "Past"): "were"}

# lemma -> (number, tag)
QUANTS = {
    "a": ("Sing", "DET|Number=Sing"),
    "every": ("Sing", "DET|Number=Sing"),
    "one": ("Sing", "NUM|NumType=Card"),
    "two": ("Plur", "NUM|NumType=Card"),
    "three": ("Plur", "NUM|NumType=Card"),
    "many": ("Plur", "DET|Number=Plur"),
    "several": ("Plur", "DET|Number=Plur"),
}
NUMERALS = ("one", "two", "three")

DEMS = {"this": ("this", "these"), "that": ("that", "those")}
ADJS = ("big", "small", "old", "red", "happy")
CUES = {"yesterday": "Past", "earlier": "Past", "now": "Pres", "today": "Pres"}

INFLECTABLE = {"NOUN", "VERB", "AUX"}


def _tag(spec: str) -> MorphTag:
    pos, _, feats = spec.partition("|")
    return parse_feats(pos, feats or "_")


def _noun_tag(number):
    return _tag(f"NOUN|Number={number}")


def _verb_tag(number, tense, pos="VERB"):
    if tense == "Past" and pos == "VERB":
        return _tag("VERB|Mood=Ind|Tense=Past|VerbForm=Fin")
    return _tag(f"{pos}|Mood=Ind|Number={number}|Person=3|Tense={tense}|VerbForm=Fin")


def generate_sentence(rng: np.random.Generator, cue_prob: float = 0.9) -> Sentence:
    toks = []

    def add(form, lemma, spec_or_tag):
        tag = spec_or_tag if isinstance(spec_or_tag, MorphTag) else _tag(spec_or_tag)
        toks.append(Token(form, lemma, tag, tag.pos in INFLECTABLE or lemma in DEMS))

    tense = "Past" if rng.random() < 0.5 else "Pres"
    cue = None
    if rng.random() < cue_prob:
        cands = sorted(c for c, t in CUES.items() if t == tense)
        cue = cands[rng.integers(len(cands))]
    cue_first = rng.random() < 0.5
    if cue and cue_first:
        add(cue, cue, "ADV")

    quant = sorted(QUANTS)[rng.integers(len(QUANTS))]
    number, qtag = QUANTS[quant]
    if quant in NUMERALS and rng.random() < 0.4:
        dem = sorted(DEMS)[rng.integers(len(DEMS))]
        sg, pl = DEMS[dem]
        add(sg if number == "Sing" else pl, dem, f"DET|Number={number}|PronType=Dem")
    add(quant, quant, qtag)
    if rng.random() < 0.4:
        adj = ADJS[rng.integers(len(ADJS))]
        add(adj, adj, "ADJ|Degree=Pos")
    noun = NOUN_LIST[rng.choice(len(NOUN_LIST), p=_NOUN_P)]
    add(NOUNS[noun][number == "Plur"], noun, _noun_tag(number))

    verb = VERB_LIST[rng.choice(len(VERB_LIST), p=_VERB_P)]
    forms = VERBS[verb]
    if rng.random() < 0.35:
        add(BE[number, tense], "be", _verb_tag(number, tense, "AUX"))
        add(forms[3], verb, "VERB|Tense=Pres|VerbForm=Part")
    else:
        form = forms[2] if tense == "Past" else forms[0 if number == "Sing" else 1]
        add(form, verb, _verb_tag(number, tense))
    if cue and not cue_first:
        add(cue, cue, "ADV")
    add(".", ".", "PUNCT")
    return Sentence(toks)


def generate_corpus(size: int, seed: int = 0, cue_prob: float = 0.9) -> list:
    """``size`` sentences with pairwise distinct lemma sequences."""
    rng = np.random.default_rng(seed)
    seen, out = set(), []
    attempts = 0
    while len(out) < size:
        attempts += 1
        if attempts > 100 * size + 1000:
            raise RuntimeError("synthetic grammar exhausted; lower the corpus size")
        sent = generate_sentence(rng, cue_prob)
        key = tuple(sent.lemmas)
        if key in seen:
            continue
        seen.add(key)
        out.append(sent)
    return out


def check_agreement(sentence: Sentence) -> list:
    """Return a list of agreement or morphology violations (empty when fine)."""
    problems = []
    number = tense_cue = None
    for tok in sentence.tokens:
        if tok.lemma in QUANTS:
            number = QUANTS[tok.lemma][0]
        if tok.lemma in CUES:
            tense_cue = CUES[tok.lemma]
    if number is None:
        return ["no quantifier"]
    for tok in sentence.tokens:
        feats = dict(tok.tag.features)
        if tok.lemma in DEMS:
            want = DEMS[tok.lemma][number == "Plur"]
            if tok.form != want or feats.get("Number") != number:
                problems.append(f"demonstrative {tok.form} disagrees with {number}")
        elif tok.tag.pos == "NOUN":
            if feats.get("Number") != number or tok.form != NOUNS[tok.lemma][number == "Plur"]:
                problems.append(f"noun {tok.form} disagrees with {number}")
        elif tok.tag.pos == "AUX":
            tense = feats.get("Tense")
            if feats.get("Number") != number or tok.form != BE[number, tense]:
                problems.append(f"auxiliary {tok.form} disagrees with {number}")
            if tense_cue and tense != tense_cue:
                problems.append(f"auxiliary tense {tense} contradicts cue {tense_cue}")
        elif tok.tag.pos == "VERB" and feats.get("VerbForm") == "Fin":
            tense = feats.get("Tense")
            forms = VERBS[tok.lemma]
            want = forms[2] if tense == "Past" else forms[0 if number == "Sing" else 1]
            if tok.form != want or (tense == "Pres" and feats.get("Number") != number):
                problems.append(f"verb {tok.form} disagrees with {number}/{tense}")
            if tense_cue and tense != tense_cue:
                problems.append(f"verb tense {tense} contradicts cue {tense_cue}")
    return problems
