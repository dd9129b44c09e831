"""Command-line entry point: ``ctxinflect {train,predict,evaluate,synth}``.

Exit codes: 0 success, 2 usage or missing file, 3 unparsable input,
4 model file or model/input mismatch, 5 gold/prediction misalignment.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import (format_token_line, iter_conllu_lines, load_embeddings, make_task_instance,
                     parse_conllu, write_conllu)
from .errors import (AlignmentError, CorruptError, LabelError, ParseError, VersionError)
from .pipeline import (TrainConfig, evaluate, load_model, predict_sentence, save_model,
                       score_predictions, train)
from .synth import check_agreement, generate_corpus

SLOT_MODES = {"all": "all_slots", "given": "given_slots"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}", 2)
    return p.read_text(encoding="utf-8")


def _corpus(path):
    return parse_conllu(_read(path))


def _model(path):
    if not Path(path).is_file():
        raise CliError(f"no such model file: {path}", 2)
    return load_model(path)


def _config(args) -> TrainConfig:
    overrides = {
        "epochs": args.epochs, "lr": args.lr, "seed": args.seed, "mode": args.mode,
        "word_dim": args.word_dim, "char_dim": args.char_dim, "char_hidden": args.char_hidden,
        "hidden_dim": args.hidden_dim, "infl_hidden": args.infl_hidden,
        "act_dim": args.act_dim, "feat_dim": args.feat_dim, "clip_norm": args.clip_norm,
    }
    cfg = {k: v for k, v in overrides.items() if v is not None}
    cfg["freeze_embeddings"] = args.freeze_embeddings
    cfg["slots"] = SLOT_MODES[args.slots]
    return TrainConfig(**cfg)


def cmd_train(args) -> int:
    corpus = _corpus(args.train)
    dev = _corpus(args.dev) if args.dev else None
    config = _config(args)
    embeddings = None
    if args.embeddings:
        embeddings = load_embeddings(_read(args.embeddings), config.word_dim)

    def report(epoch, loss, bundle):
        line = f"epoch {epoch:3d}  loss {loss:.4f}"
        if dev:
            m = evaluate(bundle, dev, config.slots, k=1)
            line += f"  dev tag {m.tag_accuracy_1best:.4f}  dev form {m.form_accuracy:.4f}"
        print(line, flush=True)

    bundle = train(corpus, config, embeddings=embeddings, on_epoch=report)
    save_model(bundle, args.out, "float32" if args.float32 else "float64")
    print(f"wrote {args.out}")
    return 0


def _check_mode(bundle, args):
    if args.mode is not None and args.mode != bundle.mode:
        raise CliError(f"model was trained in {bundle.mode} mode, not {args.mode}", 4)


def cmd_predict(args) -> int:
    bundle = _model(args.model)
    _check_mode(bundle, args)
    text = _read(args.test)
    sentences = parse_conllu(text)
    slots = SLOT_MODES[args.slots]
    preds = [predict_sentence(bundle, make_task_instance(s, slots)) for s in sentences]
    out_lines, sent_i, tok_i, in_sentence = [], 0, 0, False
    for _, kind, payload in iter_conllu_lines(text):
        if kind == "token":
            tok = sentences[sent_i].tokens[tok_i]
            pred = preds[sent_i]
            slot = make_task_instance(sentences[sent_i], slots).slots[tok_i]
            tag = pred.tags[tok_i] if slot else None
            line = format_token_line(tok_i + 1, pred.forms[tok_i], tok.lemma, tag, slot)
            out_lines.append("\t".join([payload[0]] + line.split("\t")[1:]))
            tok_i += 1
            in_sentence = True
        elif kind == "blank":
            if in_sentence:
                sent_i, tok_i, in_sentence = sent_i + 1, 0, False
            out_lines.append(payload)
        elif kind == "comment":
            out_lines.append(payload)
        else:
            out_lines.append("\t".join(payload))
    result = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.out:
        Path(args.out).write_text(result, encoding="utf-8")
    else:
        sys.stdout.write(result)
    return 0


def cmd_evaluate(args) -> int:
    bundle = _model(args.model)
    _check_mode(bundle, args)
    gold = _corpus(args.test)
    slots = SLOT_MODES[args.slots]
    if args.predictions:
        metrics = score_predictions(bundle, gold, _corpus(args.predictions), slots, args.k)
    else:
        metrics = evaluate(bundle, gold, slots, args.k, gold_tags=args.gold_tags)
    record = metrics.to_json()
    record["setting"] = "gold" if args.gold_tags else bundle.mode
    print(metrics.table())
    print(json.dumps(record, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    corpus = generate_corpus(args.size, args.seed, args.cue_prob)
    for sent in corpus:
        problems = check_agreement(sent)
        if problems:
            raise AssertionError(f"generator produced a bad sentence: {problems}")
    text = write_conllu(corpus)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxinflect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_required=True):
        p.add_argument("--model", required=model_required)
        p.add_argument("--mode", choices=["joint", "direct"])
        p.add_argument("--slots", choices=sorted(SLOT_MODES), default="all")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model on a CoNLL-U file")
    common(p, model_required=False)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--float32", action="store_true", help="store parameters as 32-bit floats")
    for name in ("word-dim", "char-dim", "char-hidden", "hidden-dim", "infl-hidden",
                 "act-dim", "feat-dim"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--clip-norm", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tag and inflect a lemmatized CoNLL-U file")
    common(p)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model against gold CoNLL-U")
    common(p)
    p.add_argument("--test", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gold-tags", action="store_true",
                   help="inflect from gold tags instead of decoded tags")
    p.add_argument("--predictions", help="score this prediction file instead of decoding")
    p.add_argument("--out", help="also write the metrics record here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="emit a synthetic agreement corpus")
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cue-prob", type=float, default=0.9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, UnicodeDecodeError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 3
    except (VersionError, CorruptError, LabelError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4
    except AlignmentError as exc:
        print(f"alignment error: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
