"""Posterior g-computation: marginal survival curves and their contrast.

For each posterior draw m the confounder distribution gets a fresh Bayesian
bootstrap weight vector pi ~ Dirichlet(1, ..., 1). Under each intervention
a in {0, 1}, every subject's design row is rewritten (treatment column and
all interaction columns involving it), B event times are simulated from the
piecewise-exponential hazard by inverse-CDF, and the conditional survival
curves are averaged over subjects with the bootstrap weights. The contrast
ate(t) is the survival difference between the intervened arms.

Simulated times never extrapolate: a simulation whose cumulative hazard
budget outlives the partition is recorded as the sentinel ``max time + dtau``
("survived past the horizon"), and evaluation grids beyond the maximum
observed time are rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .formula import Term
from .hazard_model import ParameterState, Partition

__all__ = ["BBWeights", "GcompResult", "draw_bb_weights", "apply_intervention",
           "simulate_event_times", "conditional_survival", "gcompute",
           "exact_marginal_survival"]


@dataclass(frozen=True)
class BBWeights:
    """One Bayesian-bootstrap draw: nonnegative weights summing to one."""

    pi: np.ndarray

    def __post_init__(self):
        if np.any(self.pi < 0) or abs(float(self.pi.sum()) - 1.0) > 1e-12:
            raise DataError("weights must be nonnegative and sum to 1")


@dataclass(frozen=True)
class GcompResult:
    """Posterior draws of marginal survival per arm and their difference.

    ``surv_ref`` is the curve under treatment == ref_level, ``surv_trt`` the
    curve under the other arm; ``ate = surv_trt - surv_ref`` elementwise.
    """

    times: np.ndarray       # (T,) evaluation grid
    surv_ref: np.ndarray    # (M, T)
    surv_trt: np.ndarray    # (M, T)
    ate: np.ndarray         # (M, T)
    ref_level: int
    B: int
    seed: int
    grid_source: str        # "midpoints" or "user"


def draw_bb_weights(n: int, rng: np.random.Generator) -> BBWeights:
    """Dirichlet(1,...,1) via normalized unit exponentials."""
    if n < 1:
        raise DataError(f"need n >= 1, got {n}")
    g = rng.standard_exponential(n)
    return BBWeights(pi=g / g.sum())


def apply_intervention(X: np.ndarray, terms: tuple[Term, ...],
                       columns: tuple[str, ...], treat_col: str,
                       a: int) -> np.ndarray:
    """Design matrix with treatment set to ``a`` for every subject.

    The treatment main-effect column becomes the constant ``a``; every
    interaction column involving the treatment is recomputed from the
    intervened value and the partner column. Other columns are untouched.
    """
    if a not in (0, 1):
        raise DataError(f"intervention must be 0 or 1, got {a!r}")
    if treat_col not in columns:
        raise DataError(f"treatment column {treat_col!r} not in design")
    out = np.array(X, dtype=float)
    by_name = {name: j for j, name in enumerate(columns)}
    out[:, by_name[treat_col]] = float(a)
    for j, term in enumerate(terms):
        if not term.is_interaction or treat_col not in term.components:
            continue
        u, v = term.components
        if u == treat_col and v == treat_col:
            out[:, j] = float(a) * float(a)
        else:
            partner = v if u == treat_col else u
            out[:, j] = float(a) * X[:, by_name[partner]]
    return out


def _cum_hazard_knots(theta_levels: np.ndarray, dtau: float) -> np.ndarray:
    """Cumulative baseline hazard at the partition endpoints, (K+1,)."""
    return np.concatenate(([0.0], dtau * np.cumsum(theta_levels)))


def _invert_cum_hazard(targets: np.ndarray, theta_levels: np.ndarray,
                       partition: Partition) -> np.ndarray:
    """Solve Lambda0(t) = target for each target; sentinel past the horizon."""
    knots = _cum_hazard_knots(theta_levels, partition.dtau)
    shape = targets.shape
    flat = targets.reshape(-1)
    idx = np.searchsorted(knots, flat, side="left").clip(1, len(knots) - 1)
    j = idx - 1
    times = partition.endpoints[j] + (flat - knots[j]) / theta_levels[j]
    times[flat > knots[-1]] = partition.max_time + partition.dtau
    return times.reshape(shape)


def simulate_event_times(state: ParameterState, partition: Partition,
                         x_row: np.ndarray, b: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw ``b`` event times from the hazard at one (intervened) design row.

    Inverse-CDF: E ~ Exp(1) is solved against the piecewise-linear cumulative
    hazard Lambda(t) = exp(x'beta) * Lambda0(t), interpolating linearly inside
    the crossed interval. Draws with E beyond Lambda(max time) return the
    sentinel ``max time + dtau``.
    """
    if b < 1:
        raise DataError(f"need b >= 1, got {b}")
    rate = float(np.exp(np.dot(x_row, state.beta)))
    targets = rng.standard_exponential(b) / rate
    return _invert_cum_hazard(targets, np.exp(state.theta_tilde), partition)


def conditional_survival(sim_times: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Empirical survival of one simulation set on a time grid."""
    sim_times = np.asarray(sim_times, dtype=float)
    grid = np.asarray(grid, dtype=float)
    return (sim_times[:, None] > grid[None, :]).mean(axis=0)


def _survival_curves(times: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Rowwise empirical survival: times (n, B) against grid (T,) -> (n, T)."""
    n, b = times.shape
    order = np.argsort(grid, kind="stable")
    sorted_grid = grid[order]
    out = np.empty((n, len(grid)))
    times_sorted = np.sort(times, axis=1)
    for i in range(n):
        counts = np.searchsorted(times_sorted[i], sorted_grid, side="right")
        out[i, order] = 1.0 - counts / b
    return out


def _validate_grid(grid: np.ndarray, partition: Partition) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DataError("empty evaluation grid")
    beyond = grid[grid > partition.max_time]
    if beyond.size:
        raise DataError(
            f"time {beyond[0]:g} is greater than the maximum observed time "
            f"{partition.max_time:g}; inference past the horizon is not "
            "identified")
    if np.any(grid < 0):
        raise DataError("evaluation times must be nonnegative")
    return grid


def gcompute(posterior, ref: int = 0, b: int = 1000,
             grid: np.ndarray | None = None, seed: int | None = None,
             bb_weights: bool = True) -> GcompResult:
    """Posterior g-computation over a HazardPosterior.

    ``grid`` defaults to the partition midpoints. ``seed`` defaults to the
    fit's seed; per-draw RNG streams are derived from it, so results are
    reproducible and independent of evaluation order. ``bb_weights=False``
    replaces the Bayesian bootstrap with fixed uniform weights 1/n.
    """
    if ref not in (0, 1):
        raise DataError(f"ref must be 0 or 1, got {ref!r}")
    if b < 1:
        raise DataError(f"B must be >= 1, got {b}")
    partition = posterior.partition
    if grid is None:
        grid = partition.midpoints.copy()
        grid_source = "midpoints"
    else:
        grid = _validate_grid(grid, partition)
        grid_source = "user"

    if seed is None:
        seed = posterior.config.seed
    design = posterior.design
    n = design.n
    arms = {a: apply_intervention(design.X, design.terms, design.columns,
                                  posterior.treat_col, a) for a in (0, 1)}
    theta_draws = posterior.hazard_draws
    beta_draws = posterior.beta_draws
    M = theta_draws.shape[0]
    T = len(grid)

    surv = {0: np.empty((M, T)), 1: np.empty((M, T))}
    # disjoint from the sampler's chain spawn keys (c,)
    root = np.random.SeedSequence(seed, spawn_key=(0x6C0,))
    streams = root.spawn(M)
    for m in range(M):
        rng = np.random.Generator(np.random.Philox(streams[m]))
        if bb_weights:
            pi = draw_bb_weights(n, rng).pi
        else:
            pi = np.full(n, 1.0 / n)
        theta_m = theta_draws[m]
        for a in (0, 1):
            rate = np.exp(arms[a] @ beta_draws[m])          # (n,)
            targets = rng.standard_exponential((n, b)) / rate[:, None]
            times = _invert_cum_hazard(targets, theta_m, partition)
            surv[a][m] = pi @ _survival_curves(times, grid)
    surv_ref = surv[ref]
    surv_trt = surv[1 - ref]
    return GcompResult(times=grid, surv_ref=surv_ref, surv_trt=surv_trt,
                       ate=surv_trt - surv_ref, ref_level=ref, B=b, seed=seed,
                       grid_source=grid_source)


def exact_marginal_survival(posterior, ref: int, grid: np.ndarray,
                            weights: np.ndarray | None = None):
    """Simulation-free marginal survival per arm: exp(-exp(x'beta) Lambda0(t)).

    Plug-in version of the g-formula used as an internal consistency oracle
    for the Monte Carlo path; weights default to uniform 1/n.
    """
    from .hazard_model import cum_base_hazard

    if ref not in (0, 1):
        raise DataError(f"ref must be 0 or 1, got {ref!r}")
    partition = posterior.partition
    grid = _validate_grid(grid, partition)
    design = posterior.design
    n = design.n
    pi = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float)
    arms = {a: apply_intervention(design.X, design.terms, design.columns,
                                  posterior.treat_col, a) for a in (0, 1)}
    theta_draws = posterior.hazard_draws
    beta_draws = posterior.beta_draws
    M = theta_draws.shape[0]
    out = {0: np.empty((M, len(grid))), 1: np.empty((M, len(grid)))}
    for m in range(M):
        lam0 = cum_base_hazard(theta_draws[m], partition, grid)   # (T,)
        for a in (0, 1):
            rate = np.exp(arms[a] @ beta_draws[m])                # (n,)
            out[a][m] = pi @ np.exp(-rate[:, None] * lam0[None, :])
    return out[ref], out[1 - ref], out[1 - ref] - out[ref]
