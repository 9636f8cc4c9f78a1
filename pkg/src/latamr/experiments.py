"""Seeded end-to-end runs on the synthetic corpus, used for threshold
calibration and the ablation-ordering checks.

``python -m latamr.experiments --modes joint two_stage --seeds 0 1 2``
prints one JSON record per run followed by per-mode medians.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .corpus import GeneratorConfig, generate_corpus
from .estimator import LatentAlignmentParser
from .training import MODES, EpochRecord

__all__ = ["RunResult", "train_on_corpus", "run_grid", "medians"]

# the stopping rule shared by calibration and the acceptance checks
MAX_EPOCHS = 30
PATIENCE = 5


@dataclass(frozen=True)
class RunResult:
    mode: str
    seed: int
    best_epoch: int
    epochs_run: int
    smatch: float
    concepts: float
    alignment: float | None
    seconds: float


def train_on_corpus(
    mode: str,
    seed: int,
    corpus: dict | None = None,
    epochs: int = MAX_EPOCHS,
    patience: int = PATIENCE,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> RunResult:
    """Fit one desk-preset parser on the train split and report its selected dev epoch."""
    corpus = corpus if corpus is not None else generate_corpus(GeneratorConfig(seed=0))
    train, dev = corpus["train"], corpus["dev"]
    start = time.perf_counter()
    parser = LatentAlignmentParser(mode=mode, seed=seed, epochs=epochs, overrides={"patience": patience})
    parser.fit(
        [r.tokens for r in train],
        [r.amr() for r in train],
        alignments=[r.alignment for r in train],
        X_dev=[r.tokens for r in dev],
        y_dev=[r.amr() for r in dev],
        dev_alignments=[r.alignment for r in dev],
        on_epoch=on_epoch,
    )
    last_stage = parser.report_.epochs[-1].stage
    stage = [e for e in parser.report_.epochs if e.stage == last_stage]
    best = next(e for e in stage if e.best)
    return RunResult(
        mode=mode,
        seed=seed,
        best_epoch=best.epoch,
        epochs_run=len(parser.report_.epochs),
        smatch=best.smatch,
        concepts=best.concepts,
        alignment=best.alignment,
        seconds=time.perf_counter() - start,
    )


def run_grid(
    modes: Sequence[str],
    seeds: Sequence[int],
    corpus: dict | None = None,
    report: Callable[[RunResult], None] | None = None,
    **kwargs,
) -> list[RunResult]:
    corpus = corpus if corpus is not None else generate_corpus(GeneratorConfig(seed=0))
    out = []
    for mode in modes:
        for seed in seeds:
            r = train_on_corpus(mode, seed, corpus, **kwargs)
            out.append(r)
            if report is not None:
                report(r)
    return out


def medians(results: Sequence[RunResult], field: str = "smatch") -> dict[str, float]:
    by_mode: dict[str, list[float]] = {}
    for r in results:
        by_mode.setdefault(r.mode, []).append(getattr(r, field))
    return {m: statistics.median(v) for m, v in by_mode.items()}


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="python -m latamr.experiments", description=__doc__.splitlines()[0])
    ap.add_argument("--modes", nargs="+", default=["joint"], choices=MODES)
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=MAX_EPOCHS)
    ap.add_argument("--patience", type=int, default=PATIENCE)
    args = ap.parse_args(argv)
    results = run_grid(
        args.modes,
        args.seeds,
        epochs=args.epochs,
        patience=args.patience,
        report=lambda r: print(json.dumps(asdict(r), sort_keys=True), flush=True),
    )
    for name in ("smatch", "concepts", "alignment"):
        print(f"median {name}: " + json.dumps(medians(results, name), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
