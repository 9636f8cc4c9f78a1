"""Command-line entry point.

Exit codes: 0 success, 1 failed verification or unusable data, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CorpusFormatError, GeneratorConfig, generate_corpus, load_corpus, save_corpus
from .estimator import LatentAlignmentParser, corpus_scores
from .evaluate import smatch
from .graph import GraphError, PenmanError, parse_penman, serialize_penman
from .model import EncoderConfig, coerce_fields, read_config_values
from .oracles import check_gradients, oracle_suite
from .training import MODES, ObjectiveConfig

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="latamr", description="Latent-alignment graph parser.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen-corpus", parents=[common], help="write the synthetic train/dev/test corpus")
    g.add_argument("--out", type=Path, required=True, help="output directory")

    t = sub.add_parser("train", parents=[common], help="train a parser")
    t.add_argument("--data", type=Path, required=True, help="directory holding train.jsonl and dev.jsonl")
    t.add_argument("--out", type=Path, required=True, help="model directory to write")
    t.add_argument("--mode", choices=MODES, default="joint")
    t.add_argument("--preset", choices=("desk", "full"), default="desk")
    t.add_argument("--epochs", type=int)
    t.add_argument("--restarts", type=int, default=4, help="Smatch restarts for model selection")

    pa = sub.add_parser("parse", parents=[common], help="parse whitespace-tokenized sentences, one per line")
    pa.add_argument("--model", type=Path, required=True)
    pa.add_argument("--input", type=Path, help="input file (default stdin)")
    pa.add_argument("--out", type=Path, help="output file (default stdout)")

    e = sub.add_parser("eval", parents=[common], help="score predicted graphs against gold")
    e.add_argument("--pred", type=Path, required=True, help="PENMAN file or corpus .jsonl")
    e.add_argument("--gold", type=Path, required=True, help="PENMAN file or corpus .jsonl")
    e.add_argument("--restarts", type=int, default=4)
    e.add_argument("--out", type=Path, help="write per-instance records here (default: only the summary)")

    a = sub.add_parser("align-inspect", parents=[common], help="show relaxed alignments for corpus records")
    a.add_argument("--model", type=Path, required=True)
    a.add_argument("--data", type=Path, required=True, help="corpus .jsonl")
    a.add_argument("--ids", help="comma-separated record ids (default: the first --limit records)")
    a.add_argument("--limit", type=int, default=3)

    gc = sub.add_parser("grad-check", parents=[common], help="finite-difference check of the relaxed objective")
    gc.add_argument("--instances", type=int, default=20)
    gc.add_argument("--tolerance", type=float, default=1e-4)

    oc = sub.add_parser("oracle-check", parents=[common], help="run the brute-force oracle suite")
    oc.add_argument("--full", action="store_true", help="use full trial counts (slower)")
    return p


# ---------------------------------------------------------------------------
# helpers


def _config_values(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    if not path.exists():
        raise _UsageError(f"config file {path} does not exist")
    return read_config_values(path)


def _read_graphs(path: Path):
    if not path.exists():
        raise _UsageError(f"{path} does not exist")
    if path.suffix == ".jsonl":
        return [r.amr() for r in load_corpus(path)]
    text = path.read_text(encoding="utf-8")
    blocks = [b for b in text.split("\n\n") if b.strip()]
    out = []
    for b in blocks:
        lines = [ln for ln in b.splitlines() if not ln.lstrip().startswith("#")]
        out.append(parse_penman("\n".join(lines)))
    return out


def _load_model(path: Path) -> LatentAlignmentParser:
    if not (path / "meta.json").exists():
        raise _UsageError(f"{path} is not a saved model directory")
    return LatentAlignmentParser.load(path)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_corpus(args) -> int:
    values = _config_values(args.config)
    values.setdefault("seed", str(args.seed))
    cfg = GeneratorConfig(**coerce_fields(GeneratorConfig, values))
    corpus = generate_corpus(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for split, records in corpus.items():
        save_corpus(records, args.out / f"{split}.jsonl")
    print(" ".join(f"{k}={len(v)}" for k, v in corpus.items()), f"-> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {}
    values = _config_values(args.config)
    enc_fields = {f.name for f in dataclasses.fields(EncoderConfig)}
    enc = {k: v for k, v in values.items() if k in enc_fields}
    obj = {k: v for k, v in values.items() if k not in enc_fields}
    overrides.update(coerce_fields(EncoderConfig, enc))
    overrides.update(coerce_fields(ObjectiveConfig, obj))
    for key in ("mode", "seed", "epochs"):
        overrides.pop(key, None)
    for split in ("train", "dev"):
        if not (args.data / f"{split}.jsonl").exists():
            raise _UsageError(f"{args.data} lacks {split}.jsonl")
    train = load_corpus(args.data / "train.jsonl")
    dev = load_corpus(args.data / "dev.jsonl")
    parser = LatentAlignmentParser(
        mode=args.mode,
        preset=args.preset,
        seed=args.seed,
        epochs=args.epochs if args.epochs is not None else (int(values["epochs"]) if "epochs" in values else None),
        restarts=args.restarts,
        overrides=overrides or None,
    )
    have_alignments = all(r.alignment is not None for r in train)
    have_dev_alignments = all(r.alignment is not None for r in dev)

    def report(rec):
        al = "" if rec.alignment is None else f" alignment {rec.alignment:.3f}"
        print(
            f"{rec.stage} epoch {rec.epoch}: objective {rec.objective:.3f} concepts {rec.concepts:.3f} "
            f"smatch {rec.smatch:.3f}{al} ({rec.seconds:.1f}s)",
            flush=True,
        )

    parser.fit(
        [r.tokens for r in train],
        [r.amr() for r in train],
        alignments=[r.alignment for r in train] if have_alignments else None,
        X_dev=[r.tokens for r in dev],
        y_dev=[r.amr() for r in dev],
        dev_alignments=[r.alignment for r in dev] if have_dev_alignments else None,
        on_epoch=report,
    )
    parser.save(args.out)
    (args.out / "report.jsonl").write_text(parser.report_.to_jsonl(), encoding="utf-8")
    print(parser.report_.summary())
    print(f"best epoch {parser.report_.best_epoch}: dev smatch {parser.report_.best_smatch:.4f} -> {args.out}")
    return EXIT_OK


def cmd_parse(args) -> int:
    parser = _load_model(args.model)
    if args.input is not None:
        if not args.input.exists():
            raise _UsageError(f"{args.input} does not exist")
        text = args.input.read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    blocks = [serialize_penman(g, indent=4) for g in parser.predict(lines)] if lines else []
    out = "".join(b + "\n\n" for b in blocks)
    if args.out is not None:
        args.out.write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred, gold = _read_graphs(args.pred), _read_graphs(args.gold)
    if len(pred) != len(gold):
        raise _UsageError(f"{len(pred)} predicted graphs but {len(gold)} gold graphs")
    if args.out is not None:
        with args.out.open("w", encoding="utf-8") as fh:
            for i, (p, g) in enumerate(zip(pred, gold)):
                r = smatch(p, g, restarts=args.restarts, seed=args.seed + i)
                rec = {"index": i, "matched": r.matched, "pred": r.n_pred, "gold": r.n_gold, "f1": r.f1}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    s = corpus_scores(pred, gold, restarts=args.restarts, seed=args.seed)
    print(f"{'Metric':<10}{'F1':>8}")
    print(f"{'Smatch':<10}{s['smatch']:>8.4f}   (P {s['precision']:.4f}  R {s['recall']:.4f})")
    print(f"{'Unlabeled':<10}{s['unlabeled']:>8.4f}")
    print(f"{'Concepts':<10}{s['concepts']:>8.4f}")
    return EXIT_OK


_SHADES = " .:-=+*#%@"


def _heat(a: np.ndarray, rows: Sequence[str], cols: Sequence[str]) -> str:
    width = max(len(r) for r in rows) if rows else 0
    lines = [" " * (width + 1) + " ".join(f"{k:>2}" for k in range(len(cols)))]
    for r, row in zip(rows, a):
        cells = " ".join(f" {_SHADES[min(len(_SHADES) - 1, int(v * len(_SHADES)))]}" for v in row)
        lines.append(f"{r:>{width}} {cells}")
    lines.append("words: " + " ".join(f"{k}:{w}" for k, w in enumerate(cols)))
    return "\n".join(lines)


def cmd_align_inspect(args) -> int:
    parser = _load_model(args.model)
    if not args.data.exists():
        raise _UsageError(f"{args.data} does not exist")
    records = load_corpus(args.data)
    if args.ids:
        wanted = args.ids.split(",")
        by_id = {r.id: r for r in records}
        missing = [i for i in wanted if i not in by_id]
        if missing:
            raise _UsageError(f"unknown record ids: {', '.join(missing)}")
        records = [by_id[i] for i in wanted]
    else:
        records = records[: args.limit]
    from .preprocess import recategorize

    mats = parser.align([r.tokens for r in records], [r.amr() for r in records])
    for rec, a in zip(records, mats):
        concepts = [c.label for c in recategorize(rec.amr()).concepts]
        print(f"# {rec.id}: {' '.join(rec.tokens)}")
        print(_heat(a, concepts, rec.tokens))
        pred = a.argmax(axis=1) if a.size else []
        for i, c in enumerate(concepts):
            gold = "" if rec.alignment is None else f"  gold {rec.alignment[i]}"
            mark = "" if rec.alignment is None else ("  ok" if rec.alignment[i] == pred[i] else "  MISS")
            print(f"  {c:<16} -> {int(pred[i])} {rec.tokens[int(pred[i])]!r}{gold}{mark}")
        print()
    return EXIT_OK


def cmd_grad_check(args) -> int:
    r = check_gradients(args.instances, seed=args.seed)
    ok = r["worst_rel_err"] < args.tolerance
    print(
        f"{'PASS' if ok else 'FAIL'}  max relative error {r['worst_rel_err']:.2e} over {r['instances']} instances"
        f" (scale-aware {r['worst_scaled_err']:.2e}, max abs {r['worst_abs_err']:.2e})"
    )
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle_check(args) -> int:
    results = oracle_suite(seed=args.seed, quick=not args.full)
    for r in results:
        print(r.line(), flush=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "align-inspect": cmd_align_inspect,
    "grad-check": cmd_grad_check,
    "oracle-check": cmd_oracle_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"latamr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, PenmanError, GraphError, ValueError) as exc:
        print(f"latamr {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
