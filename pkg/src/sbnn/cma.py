"""Covariance Matrix Adaptation Evolution Strategy with an ask/tell interface.

Standard (mu/mu_w, lambda) CMA-ES with cumulative step-size adaptation,
rank-one and rank-mu covariance updates. ``tell`` takes fitnesses to
*maximize*; they are negated internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class CovarianceError(FloatingPointError):
    pass


def population_size(n: int) -> int:
    return 4 + int(math.floor(3 * math.log(n)))


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    lam: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chi_n: float
    cov: np.ndarray
    pc: np.ndarray
    ps: np.ndarray
    B: np.ndarray
    D: np.ndarray
    inv_sqrt: np.ndarray
    rng: np.random.Generator
    generation: int = 0
    evaluations: int = 0
    eigen_evaluations: int = 0
    best_fitness: float = -math.inf
    best_genome: np.ndarray | None = None
    _pending: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.mean)


def cma_init(n: int, seed: int | None = None, sigma: float = 0.5, mean=None) -> CmaState:
    """Fresh state: mean 0 (unless given), identity covariance, default
    strategy parameters for dimension ``n``."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    lam = population_size(n)
    mu = lam // 2
    raw = math.log((lam + 1) / 2) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mueff = 1.0 / float(np.sum(weights**2))
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    m = np.zeros(n) if mean is None else np.array(mean, dtype=float)
    if m.shape != (n,):
        raise ValueError(f"mean must have shape ({n},)")
    return CmaState(
        mean=m,
        sigma=float(sigma),
        lam=lam,
        mu=mu,
        weights=weights,
        mueff=mueff,
        cc=cc,
        cs=cs,
        c1=c1,
        cmu=cmu,
        damps=damps,
        chi_n=chi_n,
        cov=np.eye(n),
        pc=np.zeros(n),
        ps=np.zeros(n),
        B=np.eye(n),
        D=np.ones(n),
        inv_sqrt=np.eye(n),
        rng=np.random.default_rng(seed),
    )


def _refresh_eigen(state: CmaState) -> None:
    state.cov = np.triu(state.cov) + np.triu(state.cov, 1).T
    eigvals, eigvecs = np.linalg.eigh(state.cov)
    if not np.all(np.isfinite(eigvals)) or eigvals.min() <= 0:
        raise CovarianceError(f"covariance lost positive definiteness (min eigenvalue {eigvals.min():g})")
    state.D = np.sqrt(eigvals)
    state.B = eigvecs
    state.inv_sqrt = eigvecs @ np.diag(1 / state.D) @ eigvecs.T
    state.eigen_evaluations = state.evaluations


def ask(state: CmaState) -> np.ndarray:
    """``lam`` candidates, one per row: mean + sigma * B diag(D) z."""
    lazy_gap = state.lam / (state.c1 + state.cmu) / state.n / 10
    if state.evaluations - state.eigen_evaluations > lazy_gap:
        _refresh_eigen(state)
    z = state.rng.standard_normal((state.lam, state.n))
    y = (z * state.D) @ state.B.T
    state._pending = state.mean + state.sigma * y
    return state._pending.copy()


def tell(state: CmaState, genomes, fitnesses) -> CmaState:
    """Update from one evaluated batch (higher fitness is better)."""
    x = np.asarray(genomes, dtype=float)
    f = np.asarray(fitnesses, dtype=float)
    if x.shape != (state.lam, state.n) or f.shape != (state.lam,):
        raise ValueError(f"expected {state.lam} genomes of length {state.n} with one fitness each")
    if not np.all(np.isfinite(f)):
        raise ValueError("fitnesses must be finite")
    n = state.n
    state.evaluations += state.lam
    state.generation += 1

    top = int(np.argmax(f))
    if f[top] > state.best_fitness:
        state.best_fitness = float(f[top])
        state.best_genome = x[top].copy()

    order = np.argsort(-f, kind="stable")[: state.mu]
    selected = x[order]
    old = state.mean
    state.mean = state.weights @ selected
    y = (state.mean - old) / state.sigma

    state.ps = (1 - state.cs) * state.ps + math.sqrt(state.cs * (2 - state.cs) * state.mueff) * (
        state.inv_sqrt @ y
    )
    ps_norm = float(np.linalg.norm(state.ps))
    hsig = ps_norm / math.sqrt(1 - (1 - state.cs) ** (2 * state.generation)) / state.chi_n < 1.4 + 2 / (n + 1)
    state.pc = (1 - state.cc) * state.pc + hsig * math.sqrt(state.cc * (2 - state.cc) * state.mueff) * y

    steps = (selected - old) / state.sigma
    rank_mu = (steps.T * state.weights) @ steps
    rank_one = np.outer(state.pc, state.pc) + (1 - hsig) * state.cc * (2 - state.cc) * state.cov
    state.cov = (1 - state.c1 - state.cmu) * state.cov + state.c1 * rank_one + state.cmu * rank_mu
    state.cov = (state.cov + state.cov.T) / 2

    state.sigma *= math.exp((state.cs / state.damps) * (ps_norm / state.chi_n - 1))
    state._pending = None
    return state


def minimize(fn, n: int, budget: int, seed: int | None = None, sigma: float = 0.5, mean=None):
    """Convenience loop for tests and benchmarks. Returns the final state."""
    state = cma_init(n, seed, sigma, mean)
    while state.evaluations < budget:
        xs = ask(state)
        tell(state, xs, [-fn(x) for x in xs])
    return state
