"""Adaptation over a nested family of signal sets by index selection.

Given X^1 c X^2 c ... c X^K, one estimator is built per level at confidence
eps/K and radius ln(2K/eps).  On data, the selected index is the smallest k
whose estimate agrees with every coarser level k' >= k within

    |ghat_k' - ghat_k| <= Phi_k + Phi_k' + 2*delta,

where Phi_k is the certified dual value of level k.  Level K is always
selectable, and the aggregate estimate inherits the risk bound
``vartheta(K, eps) * Phi_k + 3*delta`` on each X^k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .estimator import AffineEstimator, construct, evaluate, evaluate_many
from .problems import ChannelGroup, EstimationProblem
from .sets import SignalSet


def vartheta(n_levels: int, epsilon: float) -> float:
    """Adaptive inflation factor 3 ln(2K/eps) / ln(2/eps); equals 3 at K=1."""
    if n_levels < 1:
        raise ValidationError(f"need at least one level, got {n_levels}", "K")
    if not 0.0 < epsilon < 0.25:
        raise ValidationError(f"epsilon must lie in (0, 0.25), got {epsilon}",
                              "epsilon")
    return 3.0 * np.log(2.0 * n_levels / epsilon) / np.log(2.0 / epsilon)


@dataclass(frozen=True)
class NestedProblem:
    """Channel structure shared by all levels, plus the nested sets."""

    groups: tuple[ChannelGroup, ...]
    g: np.ndarray
    epsilon: float
    sets: tuple[SignalSet, ...]
    delta: float | None = None        # defaulted from the coarsest level
    delta_prime: float | None = None  # defaults to delta / 2

    def __post_init__(self):
        sets = tuple(self.sets)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "g", np.atleast_1d(np.asarray(self.g, float)))
        if not sets:
            raise ValidationError("need at least one level", "sets")
        for k in range(len(sets) - 1):
            _check_nested(sets[k], sets[k + 1], k)
        if self.delta is not None and self.delta <= 0:
            raise ValidationError("delta must be positive", "delta")
        if self.delta_prime is not None:
            if self.delta is None or not 0 < self.delta_prime < self.delta:
                raise ValidationError("delta_prime must lie in (0, delta)",
                                      "delta_prime")

    @property
    def n_levels(self) -> int:
        return len(self.sets)

    def level_problem(self, k: int) -> EstimationProblem:
        """0-based level k at confidence epsilon / K."""
        return EstimationProblem(self.sets[k], self.groups, self.g,
                                 self.epsilon / self.n_levels)


def _check_nested(inner: SignalSet, outer: SignalSet, k: int):
    for v in inner.vertices():
        if not outer.contains(v, tol=1e-9):
            raise ValidationError(
                f"sets[{k}] is not contained in sets[{k + 1}]: vertex "
                f"{v.tolist()} escapes", "sets")


@dataclass(frozen=True)
class LevelEstimate:
    estimator: AffineEstimator
    phi_star: float    # certified dual value of the level's program, halved
    bound: float       # phi_star + delta; what the selection rule uses
    problem: EstimationProblem


@dataclass(frozen=True)
class AdaptiveEstimator:
    levels: tuple[LevelEstimate, ...]
    delta: float
    delta_prime: float
    epsilon: float

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def risk_bound(self, k: int) -> float:
        """Certified bound for signals in X^{k+1} (0-based k)."""
        return (vartheta(self.n_levels, self.epsilon) * self.levels[k].phi_star
                + 3.0 * self.delta)


def build_levels(nested: NestedProblem, tol: float | None = None) -> AdaptiveEstimator:
    """Construct all per-level estimators with gaps folded into delta_prime."""
    n_levels = nested.n_levels
    delta = nested.delta
    if delta is None:
        # Scale the slack off the coarsest level's certified value.
        top = nested.level_problem(n_levels - 1)
        from .saddle import hellinger_dual
        top_phi = hellinger_dual(top, top.r_upper).phi_star
        delta = 1e-4 * (top_phi + 1.0)
    delta_prime = nested.delta_prime if nested.delta_prime is not None else delta / 2
    solve_tol = min(2.0 * delta_prime, tol) if tol is not None else 2.0 * delta_prime

    levels = []
    phi_floor = 0.0
    for k in range(n_levels):
        problem = nested.level_problem(k)
        est = construct(problem, tol=solve_tol)
        # dual values grow along the nest; running max absorbs solver wobble
        phi_star = max(est.dual_value / 2.0, phi_floor)
        phi_floor = phi_star
        levels.append(LevelEstimate(est, phi_star, phi_star + delta, problem))
    return AdaptiveEstimator(tuple(levels), delta, delta_prime, nested.epsilon)


def select_and_estimate(adaptive: AdaptiveEstimator, observations,
                        delta: float | None = None) -> tuple[int, float]:
    """Smallest selectable index and its estimate; returns (k, value), k 1-based."""
    delta = adaptive.delta if delta is None else delta
    values = [evaluate(lv.estimator, observations) for lv in adaptive.levels]
    phis = [lv.phi_star for lv in adaptive.levels]
    n_levels = adaptive.n_levels
    for k in range(n_levels):
        ok = all(abs(values[kp] - values[k]) <= phis[k] + phis[kp] + 2.0 * delta
                 for kp in range(k + 1, n_levels))
        if ok:
            return k + 1, values[k]
    return n_levels, values[-1]  # unreachable: K is always selectable


def select_and_estimate_many(adaptive: AdaptiveEstimator, observations,
                             delta: float | None = None):
    """Vectorized selection over batched observations; returns (k_arr, values)."""
    delta = adaptive.delta if delta is None else delta
    vals = np.stack([evaluate_many(lv.estimator, observations)
                     for lv in adaptive.levels])
    phis = np.array([lv.phi_star for lv in adaptive.levels])
    n_levels, n = vals.shape
    chosen = np.full(n, n_levels - 1, dtype=int)
    undecided = np.ones(n, dtype=bool)
    for k in range(n_levels - 1):
        good = undecided.copy()
        for kp in range(k + 1, n_levels):
            thresh = phis[k] + phis[kp] + 2.0 * delta
            good &= np.abs(vals[kp] - vals[k]) <= thresh
        chosen[good] = k
        undecided &= ~good
    return chosen + 1, vals[chosen, np.arange(n)]
