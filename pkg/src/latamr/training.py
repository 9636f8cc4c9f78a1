"""The relaxed variational objective, its optimiser, staged training schedules
and exact-enumeration oracles for tiny instances."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ParserModel, Instance
from .preprocess import extend_alignment
from .sinkhorn import (
    SinkhornConfig,
    gumbel_kl,
    gumbel_sinkhorn,
    gumbel_softmax_rows,
    overlap_penalty,
    sample_gumbel,
    _perm_table,
)
from .tensor import Tensor, backward, log_softmax, logsumexp, no_grad, tensor

log = logging.getLogger(__name__)

__all__ = [
    "MODES",
    "ObjectiveConfig",
    "Adam",
    "concept_loss",
    "relation_loss",
    "root_loss",
    "relaxed_alignment",
    "instance_objective",
    "training_step",
    "run_training",
    "TrainReport",
    "EpochRecord",
    "enumerate_log_joint",
    "exact_log_marginal",
    "exact_posterior",
    "discrete_elbo",
    "parameter_checksum",
]

MODES = (
    "joint",
    "two_stage",
    "two_stage_tune_align",
    "fixed_align_baseline",
    "one_pass_ablation",
    "factorized_align_ablation",
    "no_overlap_reg_ablation",
    "hard_hierarchical_loss_ablation",
)
TERMS = ("concept", "rel", "kl", "omega", "root")


@dataclass(frozen=True)
class ObjectiveConfig:
    mode: str = "joint"
    alpha: float = 0.5
    t: float = 1.0
    t0: float = 5.0
    iters: int = 10
    iters_two_stage: int = 5
    lam: float = 10.0
    w_concept: float = 1.0
    w_rel: float = 1.0
    w_kl: float = 1.0
    w_root: float = 1.0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    grad_clip: float = 0.0
    batch_size: int = 64
    stage1_batch_size: int = 512
    epochs: int = 30
    patience: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.batch_size < 1 or self.stage1_batch_size < 1 or self.epochs < 1:
            raise ValueError("batch sizes and epochs must be positive")
        SinkhornConfig(self.t, self.t0, self.iters, self.lam)

    @classmethod
    def desk(cls, **overrides) -> ObjectiveConfig:
        """Larger steps and smaller batches suited to a few hundred synthetic sentences."""
        base = dict(lr=3e-3, batch_size=8, stage1_batch_size=8, epochs=30, grad_clip=5.0, w_kl=0.01)
        base.update(overrides)
        return cls(**base)

    @property
    def two_stage(self) -> bool:
        return self.mode in ("two_stage", "two_stage_tune_align")

    def sinkhorn(self) -> SinkhornConfig:
        iters = self.iters_two_stage if self.two_stage else self.iters
        lam = 0.0 if self.mode == "no_overlap_reg_ablation" else self.lam
        return SinkhornConfig(self.t, self.t0, iters, lam)

    @property
    def effective_alpha(self) -> float:
        return 1.0 if self.mode == "hard_hierarchical_loss_ablation" else self.alpha


# ---------------------------------------------------------------------------
# losses


def concept_loss(a_hat: Tensor, concept_logprobs: Tensor, alpha: float = 0.5, log_a_hat: Tensor | None = None) -> Tensor:
    """-sum_i log sum_k (a_hat[i, k] * P(c_i | a_i = k))^alpha."""
    a_hat = a_hat if isinstance(a_hat, Tensor) else tensor(a_hat)
    if np.any(a_hat.data < 0):
        raise ValueError("relaxed alignment has negative entries")
    log_a = a_hat.log() if log_a_hat is None else log_a_hat
    return -logsumexp((log_a + concept_logprobs) * alpha, axis=1).sum()


def relation_loss(model: ParserModel, inst: Instance, a_hat, rng=None, one_pass: bool | None = None) -> Tensor:
    """-sum over scored pairs of log P(gold relation or NULL | expected states, concepts)."""
    logp = model.relation_logprobs(inst, a_hat, rng=rng, one_pass=one_pass)
    if logp is None:
        return tensor(0.0)
    P, R = logp.shape
    return -logp.reshape(-1)[np.arange(P) * R + inst.gold_rel].sum()


def root_loss(model: ParserModel, inst: Instance, a_hat, rng=None) -> Tensor:
    if inst.root_concept is None:
        return tensor(0.0)
    logits = model.root_logits(inst, a_hat, rng=rng)
    return -log_softmax(logits, axis=0)[inst.root_concept]


def gold_permutation_matrix(inst: Instance) -> np.ndarray:
    if inst.gold_alignment is None:
        raise ValueError("instance carries no gold alignment")
    perm = extend_alignment(list(inst.gold_alignment), inst.m, inst.n)
    a = np.zeros((inst.N, inst.N))
    a[np.arange(inst.N), perm] = 1.0
    return a


def relaxed_alignment(model: ParserModel, inst: Instance, cfg: ObjectiveConfig, noise, rng=None):
    """(phi or None, a_hat, log a_hat) for the configured relaxation."""
    if cfg.mode == "fixed_align_baseline":
        a = gold_permutation_matrix(inst)
        with np.errstate(divide="ignore"):
            return None, tensor(a), tensor(np.log(a))
    phi = model.alignment_scores(inst, rng=rng)
    if cfg.mode == "factorized_align_ablation":
        a, log_a = gumbel_softmax_rows(phi, noise, cfg.t)
    else:
        a, log_a = gumbel_sinkhorn(phi, noise, cfg.sinkhorn())
    return phi, a, log_a


def instance_objective(
    model: ParserModel,
    inst: Instance,
    cfg: ObjectiveConfig,
    noise: np.ndarray | None,
    rng=None,
    terms: Sequence[str] = TERMS,
) -> dict[str, Tensor]:
    """Weighted terms of the relaxed bound for one instance plus their sum under ``total``."""
    phi, a_hat, log_a = relaxed_alignment(model, inst, cfg, noise, rng)
    out: dict[str, Tensor] = {}
    if "concept" in terms:
        L = model.concept_logprobs(inst, rng=rng)
        out["concept"] = concept_loss(a_hat, L, cfg.effective_alpha, log_a) * cfg.w_concept
    if "rel" in terms:
        one_pass = cfg.mode == "one_pass_ablation"
        out["rel"] = relation_loss(model, inst, a_hat, rng, one_pass) * cfg.w_rel
    if phi is not None and "kl" in terms:
        out["kl"] = gumbel_kl(phi, cfg.t, cfg.t0) * cfg.w_kl
    if phi is not None and "omega" in terms and cfg.mode != "factorized_align_ablation":
        lam = cfg.sinkhorn().lam
        if lam > 0:
            out["omega"] = overlap_penalty(a_hat, lam)
    if "root" in terms:
        out["root"] = root_loss(model, inst, a_hat.detach(), rng) * cfg.w_root
    total = None
    for v in out.values():
        total = v if total is None else total + v
    out["total"] = total if total is not None else tensor(0.0)
    out["_phi"] = phi
    out["_a_hat"] = a_hat
    return out


# ---------------------------------------------------------------------------
# optimiser


class Adam:
    """Adam with L2 weight decay added to the gradient."""

    def __init__(self, params: dict[str, Tensor], lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-5):
        self.params = params
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k in sorted(self.params):
            p = self.params[k]
            g = grads.get(k)
            g = np.zeros_like(p.data) if g is None else g
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def parameter_checksum(params: dict[str, Tensor], prefixes: Sequence[str] = ()) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        if not prefixes or k.split(".", 1)[0] in prefixes:
            h.update(k.encode())
            h.update(np.ascontiguousarray(params[k].data).tobytes())
    return h.hexdigest()


def _noise_stream(seed: int, *counter: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *counter])))


def _instance_key(inst: Instance) -> tuple:
    return (inst.sentence.tokens, tuple((c.category, c.label) for c in inst.concepts), inst.gold_alignment or ())


def training_step(
    model: ParserModel,
    batch: Sequence[Instance],
    optimizer: Adam,
    cfg: ObjectiveConfig,
    step: int,
    terms: Sequence[str] = TERMS,
    dropout: bool = True,
) -> dict[str, float]:
    """One averaged gradient step over ``batch``; returns mean term values.

    Instances are processed in a canonical content order, so the noise each
    one receives and the gradient summation order do not depend on how the
    batch was listed.
    """
    batch = sorted(batch, key=_instance_key)
    noise_rng = _noise_stream(cfg.seed, 1, step)
    drop_rng = _noise_stream(cfg.seed, 2, step) if dropout else None
    names = sorted(optimizer.params)
    grads = {k: np.zeros_like(optimizer.params[k].data) for k in names}
    sums: dict[str, float] = {}
    for inst in batch:
        for p in model.params.values():
            p.grad = None
        noise = sample_gumbel(inst.N, noise_rng)
        out = instance_objective(model, inst, cfg, noise, drop_rng, terms)
        total = out["total"]
        if not np.isfinite(total.item()):
            phi, a = out["_phi"], out["_a_hat"]
            detail = "" if phi is None else f" phi in [{phi.data.min():.3g}, {phi.data.max():.3g}]"
            raise FloatingPointError(
                f"non-finite objective at step {step};{detail} a_hat in [{a.data.min():.3g}, {a.data.max():.3g}]"
            )
        backward(total)
        for k in names:
            g = optimizer.params[k].grad
            if g is not None:
                grads[k] += g
        for key, v in out.items():
            if not key.startswith("_"):
                sums[key] = sums.get(key, 0.0) + v.item()
    scale = 1.0 / len(batch)
    for k in names:
        grads[k] *= scale
    if cfg.grad_clip > 0:
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > cfg.grad_clip:
            for k in names:
                grads[k] *= cfg.grad_clip / norm
    optimizer.step(grads)
    for p in model.params.values():
        p.grad = None
    return {k: v * scale for k, v in sums.items()}


# ---------------------------------------------------------------------------
# schedules


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    objective: float
    kl: float
    omega: float
    concepts: float
    smatch: float
    alignment: float | None
    seconds: float
    best: bool = False


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_smatch: float | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(dataclasses.asdict(e), sort_keys=True) + "\n" for e in self.epochs)

    def summary(self) -> str:
        lines = [f"{'stage':<8}{'epoch':>6}{'objective':>12}{'kl':>10}{'omega':>8}{'concepts':>10}{'smatch':>8}{'align':>8}"]
        for e in self.epochs:
            al = "" if e.alignment is None else f"{e.alignment:.3f}"
            mark = " *" if e.best else ""
            lines.append(
                f"{e.stage:<8}{e.epoch:>6}{e.objective:>12.3f}{e.kl:>10.2f}{e.omega:>8.3f}"
                f"{e.concepts:>10.3f}{e.smatch:>8.3f}{al:>8}{mark}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class _Stage:
    name: str
    groups: tuple[str, ...]
    terms: tuple[str, ...]
    batch_size: int
    select: str  # dev metric used to keep the best epoch


def stages_for(cfg: ObjectiveConfig) -> list[_Stage]:
    if cfg.two_stage:
        stage2_groups = ("rel", "root", "align") if cfg.mode == "two_stage_tune_align" else ("rel", "root")
        stage2_terms = TERMS if cfg.mode == "two_stage_tune_align" else ("rel", "root")
        return [
            _Stage("stage1", ("concept", "align"), ("concept", "kl", "omega"), cfg.stage1_batch_size, "concepts"),
            _Stage("stage2", stage2_groups, stage2_terms, cfg.batch_size, "smatch"),
        ]
    return [_Stage("joint", ("concept", "align", "rel", "root"), TERMS, cfg.batch_size, "smatch")]


def run_training(
    model: ParserModel,
    train: Sequence[Instance],
    evaluate: Callable[[ParserModel], dict],
    cfg: ObjectiveConfig,
    dev_size: int | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainReport:
    """Train in place; leaves ``model`` holding the parameters of the best dev epoch.

    ``evaluate(model)`` must return ``smatch`` and ``concepts`` (and
    optionally ``alignment``) on the development set.
    """
    if dev_size is not None and dev_size < 1:
        raise ValueError("the development set is empty")
    if not train:
        raise ValueError("no training instances")
    report = TrainReport()
    step = 0
    for s_idx, stage in enumerate(stages_for(cfg)):
        trainable = {k: p for k, p in model.params.items() if k.split(".", 1)[0] in stage.groups}
        opt = Adam(trainable, cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
        best_value, best_state, since_best = -1.0, None, 0
        for epoch in range(1, cfg.epochs + 1):
            start = time.perf_counter()
            order = np.random.default_rng([cfg.seed, s_idx, epoch]).permutation(len(train))
            totals: dict[str, float] = {}
            n_batches = 0
            for b in range(0, len(order), stage.batch_size):
                batch = [train[i] for i in order[b : b + stage.batch_size]]
                metrics = training_step(model, batch, opt, cfg, step, stage.terms)
                step += 1
                n_batches += 1
                for k, v in metrics.items():
                    totals[k] = totals.get(k, 0.0) + v
            scores = evaluate(model)
            rec = EpochRecord(
                stage=stage.name,
                epoch=epoch,
                objective=totals.get("total", 0.0) / n_batches,
                kl=totals.get("kl", 0.0) / n_batches,
                omega=totals.get("omega", 0.0) / n_batches,
                concepts=float(scores.get("concepts", 0.0)),
                smatch=float(scores.get("smatch", 0.0)),
                alignment=scores.get("alignment"),
                seconds=time.perf_counter() - start,
            )
            value = float(scores.get(stage.select, 0.0))
            if value > best_value:
                best_value, best_state, since_best = value, model.state_dict(), 0
                rec.best = True
            else:
                since_best += 1
            report.epochs.append(rec)
            log.info("%s epoch %d: objective %.3f concepts %.3f smatch %.3f", stage.name, epoch, rec.objective, rec.concepts, rec.smatch)
            if on_epoch is not None:
                on_epoch(rec)
            if cfg.patience and since_best >= cfg.patience:
                break
        if best_state is not None:
            model.load_state_dict(best_state)
        stage_recs = [e for e in report.epochs if e.stage == stage.name]
        best = max(stage_recs, key=lambda e: (getattr(e, stage.select), -e.epoch))
        for e in stage_recs:
            e.best = e is best
        report.best_epoch, report.best_smatch = best.epoch, best.smatch
    return report


# ---------------------------------------------------------------------------
# exact oracles


def enumerate_log_joint(model: ParserModel, inst: Instance, max_n: int = 6, one_pass: bool | None = None):
    """Every permutation of the padded instance with log P(c | a, w) + log P(R | a, w, c)."""
    N = inst.N
    if N > max_n:
        raise ValueError(f"exact enumeration limited to n <= {max_n}, got {N}")
    perms = _perm_table(N)
    out = np.empty(len(perms))
    with no_grad():
        L = model.concept_logprobs(inst).data
        for p_idx, perm in enumerate(perms):
            a = np.zeros((N, N))
            a[np.arange(N), perm] = 1.0
            rel = relation_loss(model, inst, a, one_pass=one_pass).item()
            out[p_idx] = L[np.arange(N), perm].sum() - rel
    return perms, out


def _lse(x: np.ndarray) -> float:
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def exact_log_marginal(model: ParserModel, inst: Instance, max_n: int = 6) -> float:
    """log sum_a P(a) P(c | a, w) P(R | a, w, c) with a uniform prior over permutations."""
    _, lj = enumerate_log_joint(model, inst, max_n)
    return _lse(lj) - math.lgamma(inst.N + 1)


def exact_posterior(log_joint: np.ndarray) -> np.ndarray:
    return np.exp(log_joint - _lse(log_joint))


def discrete_elbo(log_joint: np.ndarray, q: np.ndarray) -> float:
    """E_q[log P(a) + log P(c, R | a)] - E_q[log q] over enumerated permutations."""
    q = np.asarray(q, dtype=np.float64)
    log_prior = -math.lgamma(int(round(_perm_count_to_n(len(log_joint)))) + 1)
    mask = q > 0
    return float(np.sum(q[mask] * (log_joint[mask] + log_prior - np.log(q[mask]))))


def _perm_count_to_n(count: int) -> int:
    n, f = 1, 1
    while f < count:
        n += 1
        f *= n
    if f != count:
        raise ValueError(f"{count} is not a factorial")
    return n
