"""Gumbel-Sinkhorn relaxation of latent permutations.

The alignment posterior is a Gumbel-perturbed score matrix pushed through
Sinkhorn normalisation.  This module holds the noise sampler, the relaxed
operator, the exact perturb-and-max argmax it approximates, the closed-form
Gumbel KL used in the relaxed bound, and the column-overlap penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import ShapeError, Tensor, _lift, is_grad_enabled, logsumexp, relu, tensor

__all__ = [
    "EULER_GAMMA",
    "SinkhornConfig",
    "sample_gumbel",
    "gumbel_sinkhorn",
    "sinkhorn_log",
    "gumbel_softmax_rows",
    "perturb_and_max",
    "gumbel_kl",
    "gumbel_kl_monte_carlo",
    "overlap_penalty",
]

EULER_GAMMA = 0.5772156649015329
_U_EPS = 1e-12


@dataclass(frozen=True)
class SinkhornConfig:
    t: float = 1.0
    t0: float = 5.0
    iters: int = 10
    lam: float = 10.0

    def __post_init__(self):
        if self.t <= 0 or self.t0 <= 0:
            raise ValueError("temperatures must be positive")
        if self.iters < 1:
            raise ValueError("need at least one Sinkhorn iteration")
        if self.lam < 0:
            raise ValueError("overlap weight must be nonnegative")


def sample_gumbel(n: int, seed=None, m: int | None = None) -> np.ndarray:
    """Standard Gumbel noise, shape (n, m or n), from a Philox counter-based stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    u = rng.random((n, n if m is None else m))
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    return -np.log(-np.log(u))


def _square(phi: Tensor, noise) -> tuple[Tensor, np.ndarray]:
    phi = _lift(phi)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ShapeError(f"expected a square score matrix, got {phi.shape}")
    noise = np.zeros(phi.shape) if noise is None else np.asarray(noise, dtype=np.float64)
    if noise.shape != phi.shape:
        raise ShapeError(f"noise {noise.shape} does not match scores {phi.shape}")
    return phi, noise


def _lse_np(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def sinkhorn_log(x: Tensor, iters: int) -> Tensor:
    """``iters`` rounds of row then column normalisation in log space, then a final row pass."""
    if not (is_grad_enabled() and x.requires_grad):
        # nothing to differentiate: skip the tape
        a = x.data
        for _ in range(iters):
            a = a - _lse_np(a, 1)
            a = a - _lse_np(a, 0)
        return tensor(a - _lse_np(a, 1))
    for _ in range(iters):
        x = x - logsumexp(x, axis=1, keepdims=True)
        x = x - logsumexp(x, axis=0, keepdims=True)
    return x - logsumexp(x, axis=1, keepdims=True)


def gumbel_sinkhorn(phi, noise=None, config: SinkhornConfig = SinkhornConfig()) -> tuple[Tensor, Tensor]:
    """Relaxed permutation ``S_t(phi, noise)``; returns (a_hat, log a_hat)."""
    phi, noise = _square(phi, noise)
    log_a = sinkhorn_log((phi + noise) * (1.0 / config.t), config.iters)
    return log_a.exp(), log_a


def gumbel_softmax_rows(phi, noise=None, t: float = 1.0) -> tuple[Tensor, Tensor]:
    """Independent per-row relaxation (no column coupling)."""
    phi, noise = _square(phi, noise)
    x = (phi + noise) * (1.0 / t)
    log_a = x - logsumexp(x, axis=1, keepdims=True)
    return log_a.exp(), log_a


@lru_cache(maxsize=None)
def _perm_table(n: int) -> np.ndarray:
    return np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)


def perturb_and_max(phi, noise=None) -> tuple[int, ...]:
    """argmax over permutations of sum_i (phi + noise)[i, a_i].

    Exhaustive (first maximiser in lexicographic order) for n <= 8, otherwise
    the Hungarian solver.
    """
    x = np.asarray(phi.data if isinstance(phi, Tensor) else phi, dtype=np.float64)
    if noise is not None:
        x = x + np.asarray(noise, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeError(f"expected a square score matrix, got {x.shape}")
    n = x.shape[0]
    if n <= 8:
        perms = _perm_table(n)
        scores = x[np.arange(n), perms].sum(axis=1)
        return tuple(int(k) for k in perms[int(np.argmax(scores))])
    rows, cols = linear_sum_assignment(x, maximize=True)
    return tuple(int(c) for c in cols[np.argsort(rows)])


def gumbel_kl(phi, t: float, t0: float) -> Tensor:
    """Sum over entries of KL(Gumbel(phi/t, 1/t) || Gumbel(0, 1/t0)).

    For G(mu1, b1) against G(mu2, b2):
    ln(b2/b1) + gamma (b1/b2 - 1) - 1 + (mu1 - mu2)/b2 + exp((mu2 - mu1)/b2) Gamma(1 + b1/b2).
    """
    if t <= 0 or t0 <= 0:
        raise ValueError("temperatures must be positive")
    phi = _lift(phi)
    ratio = t0 / t  # b1 / b2
    const = math.log(t / t0) + EULER_GAMMA * (ratio - 1.0) - 1.0
    shift = phi * ratio  # (mu1 - mu2) / b2
    per_entry = shift + (-shift).exp() * math.gamma(1.0 + ratio) + const
    return per_entry.sum()


def gumbel_kl_monte_carlo(phi: float, t: float, t0: float, samples: int, seed=0) -> tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of the single-entry KL."""
    rng = np.random.Generator(np.random.Philox(seed))
    mu1, b1, b2 = phi / t, 1.0 / t, 1.0 / t0
    x = mu1 + b1 * -np.log(-np.log(np.clip(rng.random(samples), _U_EPS, 1 - _U_EPS)))

    def logpdf(v, mu, b):
        z = (v - mu) / b
        return -math.log(b) - z - np.exp(-z)

    d = logpdf(x, mu1, b1) - logpdf(x, 0.0, b2)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(samples))


def overlap_penalty(a_hat, lam: float) -> Tensor:
    """lam * sum_j max(sum_i a_hat[i, j] - 1, 0)."""
    a_hat = _lift(a_hat)
    if np.any(a_hat.data < 0):
        raise ValueError("relaxed alignment has negative entries")
    return relu(a_hat.sum(axis=0) - 1.0).sum() * lam
