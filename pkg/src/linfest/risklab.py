"""Independent verification of constructed estimators.

Three tools: Monte-Carlo coverage of a certified risk bound (with Wilson
score intervals so the assertions are stable in CI), the affinity-based
minimax lower bound, and the exact two-point testing bound for coin flips
used by the benchmark table.

Replications draw from counter-based streams keyed (seed, stream), so
reports are reproducible and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ValidationError
from .estimator import AffineEstimator, evaluate_many
from .gaussian import erfinv_tail
from .problems import EstimationProblem
from .saddle import hellinger_dual
from .streams import stream_rng

#: One-sided Wilson confidence used in all coverage assertions.
WILSON_CONFIDENCE = 0.999


def wilson_upper(violations: int, n: int,
                 confidence: float = WILSON_CONFIDENCE) -> float:
    """One-sided Wilson score upper bound for a binomial proportion."""
    if n <= 0:
        raise ValidationError("need a positive number of trials", "n")
    z = erfinv_tail(1.0 - confidence)
    phat = violations / n
    denom = 1.0 + z * z / n
    center = phat + z * z / (2.0 * n)
    half = z * np.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n))
    return float((center + half) / denom)


@dataclass
class PointRisk:
    x: list
    true_value: float
    violations: int
    frequency: float
    wilson_upper: float
    max_abs_error: float


@dataclass
class RiskReport:
    bound: float
    epsilon: float
    n_reps: int
    certified: bool
    per_x: list[PointRisk] = field(default_factory=list)

    @property
    def worst_frequency(self) -> float:
        return max(p.frequency for p in self.per_x)

    @property
    def worst_wilson(self) -> float:
        return max(p.wilson_upper for p in self.per_x)

    @property
    def passed(self) -> bool:
        """Every probe point keeps its Wilson bound below epsilon."""
        return self.worst_wilson < self.epsilon

    def to_json(self) -> dict:
        return {
            "bound": self.bound, "epsilon": self.epsilon,
            "n_reps": self.n_reps, "certified": self.certified,
            "worst_frequency": self.worst_frequency,
            "worst_wilson_upper": self.worst_wilson,
            "per_x": [{"x": p.x, "true_value": p.true_value,
                       "violations": p.violations, "frequency": p.frequency,
                       "wilson_upper": p.wilson_upper,
                       "max_abs_error": p.max_abs_error} for p in self.per_x],
        }


def sample_observations(problem: EstimationProblem, x, n_reps: int,
                        rng: np.random.Generator) -> list:
    """Per-channel observation arrays for ``n_reps`` independent draws."""
    obs = []
    for grp in problem.groups:
        mu = grp.amap.apply(np.asarray(x, dtype=float))
        for _ in range(grp.count):
            obs.append(grp.family.sample_many(mu, n_reps, rng))
    return obs


def estimate_deviations(problem: EstimationProblem, estimator: AffineEstimator,
                        x, n_reps: int, rng: np.random.Generator) -> np.ndarray:
    """|ghat(omega) - g@x| over ``n_reps`` simulated observation tuples."""
    x = np.asarray(x, dtype=float)
    obs = sample_observations(problem, x, n_reps, rng)
    values = evaluate_many(estimator, obs)
    return np.abs(values - float(problem.g @ x))


def mc_risk(problem: EstimationProblem, estimator: AffineEstimator, x_list,
            n_reps: int = 100_000, seed: int = 0,
            bound: float | None = None) -> RiskReport:
    """Empirical violation frequency of the risk bound at each probe signal."""
    if n_reps < 10_000:
        raise ValidationError(f"n_reps must be at least 10^4, got {n_reps}",
                              "n_reps")
    bound = estimator.risk_bound if bound is None else bound
    report = RiskReport(bound=bound, epsilon=estimator.epsilon, n_reps=n_reps,
                        certified=estimator.certified)
    for i, x in enumerate(x_list):
        x = np.asarray(x, dtype=float)
        if not problem.signal_set.contains(x, tol=1e-7):
            raise DomainError(f"x_list[{i}] lies outside the signal set")
        devs = estimate_deviations(problem, estimator, x, n_reps,
                                   stream_rng(seed, i))
        viol = int(np.count_nonzero(devs > bound))
        report.per_x.append(PointRisk(
            x=x.tolist(), true_value=float(problem.g @ x), violations=viol,
            frequency=viol / n_reps, wilson_upper=wilson_upper(viol, n_reps),
            max_abs_error=float(devs.max())))
    return report


def default_probe_points(problem: EstimationProblem,
                         estimator: AffineEstimator, n_random: int = 10,
                         seed: int = 0) -> list:
    """The dual extremal point plus random feasible signals."""
    pts = []
    if estimator.dual_x is not None:
        pts.append(np.asarray(estimator.dual_x, dtype=float))
    rng = stream_rng(seed, 991)
    pts.extend(problem.signal_set.sample_point(rng) for _ in range(n_random))
    return pts


def lower_bound_hellinger(problem: EstimationProblem) -> float:
    """Certified lower bound on the minimax epsilon-risk.

    Half the value of the affinity program at radius (1/2) ln(1/(4 eps)):
    no estimator, affine or not, can beat it.
    """
    return hellinger_dual(problem, problem.r_lower).phi_star


def binomial_tv(n: int, p: float, q: float) -> float:
    """Exact total variation between Binomial(n, p) and Binomial(n, q)."""
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}", "n")
    ks = np.arange(n + 1)
    return float(0.5 * np.abs(stats.binom.pmf(ks, n, p)
                              - stats.binom.pmf(ks, n, q)).sum())


def bernoulli_testing_lower_bound(n_flips: int, epsilon: float,
                                  tol: float = 1e-12) -> float:
    """Largest d such that coins 1/2 + d and 1/2 - d cannot be told apart.

    "Cannot be told apart" means the best test's summed error probabilities,
    1 - TV between the two binomial laws, stay at least 2*epsilon.  This is
    a valid lower bound on the minimax epsilon-risk of the coin problem.
    """
    if not 0.0 < epsilon < 0.25:
        raise ValidationError(f"epsilon must lie in (0, 0.25), got {epsilon}",
                              "epsilon")

    def indistinct(d):
        return 1.0 - binomial_tv(n_flips, 0.5 + d, 0.5 - d) >= 2.0 * epsilon

    lo, hi = 0.0, 0.5 - 1e-15
    if indistinct(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if indistinct(mid):
            lo = mid
        else:
            hi = mid
    return lo
