"""Entropy and varentropy rates for Markov pair sources.

The per-string conditional information decomposes into a sum of a
block function f over sliding (d+1)-blocks of pair symbols plus a
boundary term bounded by a constant delta.  The blocks themselves form
a first-order chain, so the rates come from its stationary law: the
entropy rate is the stationary mean of f and the variance rate solves
the Poisson equation.  Monte Carlo helpers sample paths and probe how
fast the normalized conditional information approaches the Gaussian.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .models import (
    DerivedYChain,
    MarkovPairModel,
    class_period,
    closed_classes,
    derive_y_chain,
    stationary_context_law,
)

_STATIONARY_TOL = 1e-10
_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ZChain:
    """First-order chain of overlapping (d+1)-blocks of pair symbols.

    Only blocks of positive stationary probability are retained, so
    ``stationary`` is strictly positive and ``f`` is finite on every
    state.
    """

    order: int
    states: tuple[tuple[int, ...], ...]
    transition: np.ndarray
    stationary: np.ndarray
    f: np.ndarray

    def __post_init__(self) -> None:
        rows = np.abs(self.transition.sum(axis=1) - 1.0)
        if rows.max(initial=0.0) > _ROW_SUM_TOL:
            raise ValueError("block-chain transition rows do not sum to 1")
        gap = np.abs(self.stationary @ self.transition - self.stationary).sum()
        if gap > _STATIONARY_TOL:
            raise ValueError("block-chain stationary law fails pi P = pi")


@dataclass(frozen=True)
class MarkovAnalysis:
    """Rates and boundary constant of a Markov pair source.

    ``delta`` bounds the absolute gap between the conditional
    information of a length-n prefix and the n-window sum of f, for
    every positive-probability path and every n.
    """

    h_rate: float
    sigma2_rate: float
    delta: float
    block_f: dict[tuple[int, ...], float]
    z_chain: ZChain
    y_chain: DerivedYChain


def _check_ergodic(model: MarkovPairModel) -> list[int]:
    succ = model.context_digraph()
    closed = closed_classes(succ)
    if len(closed) != 1:
        raise ValueError("pair chain has several closed context classes")
    if class_period(succ, closed[0]) != 1:
        raise ValueError("pair context chain is periodic")
    return closed[0]


def block_function(
    model: MarkovPairModel, y_chain: DerivedYChain | None = None
) -> dict[tuple[int, ...], float]:
    """f over (d+1)-blocks of pair symbols, in bits.

    ``f(block) = log2 P_y(y_last | y-context) - log2 T(pair context,
    last pair)``; blocks whose pair transition is zero are omitted.
    """
    if y_chain is None:
        y_chain = derive_y_chain(model)
    ny = len(model.y_alphabet)
    table: dict[tuple[int, ...], float] = {}
    for ctx in range(model.num_contexts):
        symbols = model.context_symbols(ctx)
        yctx = y_chain.y_context_index([s % ny for s in symbols])
        for s in range(model.num_pair_symbols):
            p = model.transition_f[ctx, s]
            if p <= 0.0:
                continue
            py = y_chain.transition[yctx, s % ny]
            if py <= 0.0:
                # y-context never seen in stationarity; no f value
                continue
            table[symbols + (s,)] = math.log2(py) - math.log2(p)
    return table


def build_z_chain(
    model: MarkovPairModel, y_chain: DerivedYChain | None = None
) -> ZChain:
    """Overlapping-block chain restricted to positive stationary states."""
    _check_ergodic(model)
    if y_chain is None:
        y_chain = derive_y_chain(model)
    pi_ctx = stationary_context_law(model)
    f_table = block_function(model, y_chain)
    states: list[tuple[int, ...]] = []
    weights: list[float] = []
    pos: dict[tuple[int, int], int] = {}
    for ctx in np.flatnonzero(pi_ctx > 0.0):
        ctx = int(ctx)
        symbols = model.context_symbols(ctx)
        for s in range(model.num_pair_symbols):
            p = model.transition_f[ctx, s]
            if p <= 0.0:
                continue
            pos[(ctx, s)] = len(states)
            states.append(symbols + (s,))
            weights.append(float(pi_ctx[ctx]) * float(p))
    m = len(states)
    P = np.zeros((m, m))
    for (ctx, s), i in pos.items():
        nxt = model.shift_context(ctx, s)
        for s2 in range(model.num_pair_symbols):
            p = model.transition_f[nxt, s2]
            if p > 0.0:
                P[i, pos[(nxt, s2)]] = p
    pi = np.array(weights)
    pi /= pi.sum()
    f = np.array([f_table[states[i]] for i in range(m)])
    return ZChain(order=model.order, states=tuple(states), transition=P,
                  stationary=pi, f=f)


def _poisson_solve(P: np.ndarray, pi: np.ndarray, fbar: np.ndarray) -> np.ndarray:
    """Solve g - P g = fbar with E_pi[g] = 0."""
    m = P.shape[0]
    if m <= 2000:
        A = np.eye(m) - P + np.outer(np.ones(m), pi)
        return np.linalg.solve(A, fbar)
    g = fbar.copy()
    term = fbar.copy()
    for _ in range(200_000):
        term = P @ term
        term -= (pi @ term) * np.ones(m)
        g += term
        if np.abs(term).max() <= 1e-14:
            return g
    raise RuntimeError("Poisson iteration did not converge")


def _boundary_delta(
    model: MarkovPairModel,
    f_table: dict[tuple[int, ...], float],
) -> float:
    """Bound on the boundary gap, first-block plus trailing-window parts.

    The gap depends only on the first d pair symbols (an initial
    information value, always nonnegative) and a signed sum of f over
    the last d windows; maximizing each part separately over
    positive-probability blocks bounds the gap for every n.
    """
    ny = len(model.y_alphabet)
    init = model.initial_f
    y_mass: dict[tuple[int, ...], float] = {}
    for ctx in np.flatnonzero(init > 0.0):
        ctx = int(ctx)
        ypart = tuple(s % ny for s in model.context_symbols(ctx))
        y_mass[ypart] = y_mass.get(ypart, 0.0) + float(init[ctx])
    t1_max = 0.0
    for ctx in np.flatnonzero(init > 0.0):
        ctx = int(ctx)
        ypart = tuple(s % ny for s in model.context_symbols(ctx))
        t1 = math.log2(y_mass[ypart]) - math.log2(float(init[ctx]))
        t1_max = max(t1_max, t1)

    # extreme window sums over d consecutive f values from any
    # positive-stationary context
    d = model.order
    pi_ctx = stationary_context_law(model)
    best = 0.0
    worst = 0.0

    def walk(ctx: int, depth: int, acc: float) -> None:
        nonlocal best, worst
        if depth == d:
            best = max(best, acc)
            worst = min(worst, acc)
            return
        symbols = model.context_symbols(ctx)
        for s in range(model.num_pair_symbols):
            if model.transition_f[ctx, s] <= 0.0:
                continue
            fv = f_table.get(symbols + (s,))
            if fv is None:
                continue
            walk(model.shift_context(ctx, s), depth + 1, acc + fv)

    for ctx in np.flatnonzero(pi_ctx > 0.0):
        walk(int(ctx), 0, 0.0)
    return t1_max + max(best, -worst)


def markov_rates(model: MarkovPairModel) -> MarkovAnalysis:
    """Entropy rate, varentropy rate (via the Poisson equation), delta."""
    y_chain = derive_y_chain(model)
    if y_chain.markovianity_defect > 1e-9:
        warnings.warn(
            "side-information marginal is not Markov at this order "
            f"(defect {y_chain.markovianity_defect:.3g}); rates describe "
            "the Markov approximation of the marginal",
            RuntimeWarning,
            stacklevel=2,
        )
    zc = build_z_chain(model, y_chain)
    pi, P, f = zc.stationary, zc.transition, zc.f
    h = float(pi @ f)
    fbar = f - h
    g = _poisson_solve(P, pi, fbar)
    sigma2 = float(pi @ (fbar * fbar) + 2.0 * (pi @ (fbar * (P @ g))))
    if sigma2 < 0.0:
        if sigma2 < -1e-10:
            raise RuntimeError("variance rate came out negative")
        sigma2 = 0.0
    f_table = block_function(model, y_chain)
    delta = _boundary_delta(model, f_table)
    return MarkovAnalysis(h_rate=h, sigma2_rate=sigma2, delta=delta,
                          block_f=f_table, z_chain=zc, y_chain=y_chain)


def _initial_context_pmf(model: MarkovPairModel) -> np.ndarray:
    p = np.clip(model.initial_f, 0.0, None)
    return p / p.sum()


def simulate_pair(
    model: MarkovPairModel, n: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """One pair path of length n as (x-index, y-index) arrays."""
    xs, ys = _simulate_paths(model, n, 1, np.random.default_rng(seed))
    return xs[0], ys[0]


def _simulate_paths(
    model: MarkovPairModel, n: int, trials: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample pair paths, vectorized over trials; shape (trials, n)."""
    d, S = model.order, model.num_pair_symbols
    ny = len(model.y_alphabet)
    ctx = rng.choice(model.num_contexts, size=trials, p=_initial_context_pmf(model))
    sym = np.empty((trials, n), dtype=np.int64)
    head = np.array([model.context_symbols(c) for c in range(model.num_contexts)])
    sym[:, :min(d, n)] = head[ctx][:, :min(d, n)]
    cum = np.cumsum(model.transition_f, axis=1)
    for i in range(d, n):
        u = rng.random(trials)
        s = (u[:, None] > cum[ctx]).sum(axis=1)
        sym[:, i] = s
        ctx = (ctx * S + s) % model.num_contexts
    return sym // ny, sym % ny


@dataclass(frozen=True)
class PathStatistics:
    """Sampled conditional informations and their window sums (bits)."""

    info: np.ndarray
    window_sum: np.ndarray


def sample_path_statistics(
    model: MarkovPairModel, n: int, trials: int, seed: int,
    analysis: MarkovAnalysis | None = None,
) -> PathStatistics:
    """Monte Carlo draws of -log2 P(x_1^n | y_1^n) and the n-window f-sum.

    The conditional information uses the chain rule through the
    derived y-chain; the window sum runs over a path extended by d
    extra symbols, so ``info - window_sum`` is exactly the boundary
    term that ``delta`` bounds.
    """
    if analysis is None:
        analysis = markov_rates(model)
    y_chain = analysis.y_chain
    d, S = model.order, model.num_pair_symbols
    ny = len(model.y_alphabet)
    if n < d:
        raise ValueError("need n >= order")
    rng = np.random.default_rng(seed)

    init = _initial_context_pmf(model)
    y_mass = np.zeros(ny**d)
    yctx_of = np.empty(model.num_contexts, dtype=np.int64)
    for c in range(model.num_contexts):
        ypart = [s % ny for s in model.context_symbols(c)]
        yctx_of[c] = y_chain.y_context_index(ypart)
        y_mass[yctx_of[c]] += init[c]

    with np.errstate(divide="ignore"):
        lg_t = np.log2(model.transition_f)
        lg_py = np.log2(y_chain.transition)
        lg_init = np.log2(init)
        lg_ymass = np.log2(y_mass)

    ctx = rng.choice(model.num_contexts, size=trials, p=init)
    info = lg_ymass[yctx_of[ctx]] - lg_init[ctx]
    window = np.zeros(trials)
    yctx = yctx_of[ctx]
    cum = np.cumsum(model.transition_f, axis=1)
    for i in range(d, n + d):
        u = rng.random(trials)
        s = (u[:, None] > cum[ctx]).sum(axis=1)
        step = lg_py[yctx, s % ny] - lg_t[ctx, s]
        window += step
        if i < n:
            info += step
        ctx = (ctx * S + s) % model.num_contexts
        yctx = (yctx * ny + s % ny) % ny**d
    return PathStatistics(info=info, window_sum=window)


@dataclass(frozen=True)
class ProbeRow:
    n: int
    distance: float
    scaled: float


@dataclass(frozen=True)
class ProbeResult:
    """Gaussian-approach probe for the normalized conditional information.

    ``scaled = distance * sqrt(n)`` should stay bounded along the
    grid; ``a_hat`` is its maximum, the fitted constant.
    """

    rows: tuple[ProbeRow, ...]
    a_hat: float
    non_exploding: bool


def _kolmogorov_vs_gaussian(z: np.ndarray) -> float:
    z = np.sort(z)
    m = len(z)
    cdf = np.array([0.5 * math.erfc(-v / math.sqrt(2.0)) for v in z])
    grid = np.arange(m + 1) / m
    return float(np.maximum(np.abs(cdf - grid[:-1]), np.abs(cdf - grid[1:])).max())


def berry_esseen_probe(
    model: MarkovPairModel, n_grid: list[int], trials: int, seed: int
) -> ProbeResult:
    """Kolmogorov distance to the Gaussian across a grid of lengths."""
    analysis = markov_rates(model)
    h, s2 = analysis.h_rate, analysis.sigma2_rate
    if s2 <= 1e-15:
        raise ValueError("variance rate is degenerate; nothing to normalize")
    seeds = np.random.SeedSequence(seed).generate_state(len(n_grid))
    rows = []
    for n, sub in zip(n_grid, seeds):
        stats = sample_path_statistics(model, n, trials, int(sub), analysis)
        z = (stats.info - n * h) / math.sqrt(s2 * n)
        dist = _kolmogorov_vs_gaussian(z)
        rows.append(ProbeRow(n=n, distance=dist, scaled=dist * math.sqrt(n)))
    scaled = [r.scaled for r in rows]
    return ProbeResult(
        rows=tuple(rows),
        a_hat=max(scaled),
        non_exploding=max(scaled) <= 3.0 * min(scaled) + 1e-9,
    )
