"""Affine estimators: construction, evaluation, serialization.

An estimator is ``ghat(omega_1..omega_L) = sum_l phi_l(omega_l) + c`` with one
test function per channel group.  ``construct`` pins the coefficients at the
outer minimizer, centers them with ``c = (U - V)/2`` from one refinement solve
of the two inner maximizations, and certifies ``risk_bound = (U + V)/2 +
alpha*r``, which bounds the epsilon-risk whenever the solve certified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import families as fam
from .errors import DimensionMismatchError, SolverCapError, ValidationError
from .problems import ChannelGroup, EstimationProblem
from .saddle import TOL_INNER, SaddleSolution, minimize_outer, outer_parts


def theta_epsilon(epsilon: float) -> float:
    """Suboptimality factor 2 ln(2/eps) / ln(1/(4 eps)) of the certified bound."""
    if not 0.0 < epsilon < 0.25:
        raise ValidationError(f"epsilon must lie in (0, 0.25), got {epsilon}",
                              "epsilon")
    return 2.0 * np.log(2.0 / epsilon) / np.log(1.0 / (4.0 * epsilon))


@dataclass(frozen=True)
class AffineEstimator:
    """A constructed affine estimate together with its certificate."""

    groups: tuple[ChannelGroup, ...]
    phi: tuple          # per-group coefficient arrays
    c: float
    risk_bound: float
    epsilon: float
    gap: float
    certified: bool
    fingerprint: str
    alpha: float = float("nan")
    r: float = float("nan")
    dual_value: float = float("nan")
    dual_x: np.ndarray | None = None
    dual_y: np.ndarray | None = None

    @property
    def n_channels(self) -> int:
        return sum(grp.count for grp in self.groups)

    def per_channel_phi(self) -> list:
        """Coefficients expanded to one entry per channel."""
        out = []
        for grp, p in zip(self.groups, self.phi):
            out.extend([p] * grp.count)
        return out


def construct(problem: EstimationProblem, tol: float | None = None,
              lbfgs_maxiter: int = 400,
              polyak_maxiter: int = 4000) -> AffineEstimator:
    """Build the certified affine estimator for a problem.

    Runs the outer minimization at ``r = ln(2/epsilon)``.  If the solver hits
    its cap the estimator is still returned, built from the best iterate and
    flagged ``certified=False``.
    """
    r = problem.r_upper
    try:
        sol = minimize_outer(problem, r, tol=tol)
        certified = True
    except SolverCapError as exc:
        sol = exc.solution
        certified = False
    return _estimator_from_solution(problem, sol, certified)


def _estimator_from_solution(problem, sol: SaddleSolution,
                             certified: bool) -> AffineEstimator:
    # One refinement solve of the two inner maximizations at the returned
    # (phi, alpha); their certified values define c and the risk bound.
    res_u, res_v, _ = outer_parts(problem, sol.phi, sol.alpha, sol.r,
                                  x0=sol.dual_x, y0=sol.dual_y,
                                  gap_tol=TOL_INNER)
    u = res_u.value + res_u.gap
    v = res_v.value + res_v.gap
    c = 0.5 * (res_u.value - res_v.value)
    risk = 0.5 * (u + v) + sol.alpha * sol.r
    return AffineEstimator(groups=problem.groups, phi=sol.phi, c=c,
                           risk_bound=risk, epsilon=problem.epsilon,
                           gap=sol.gap, certified=certified,
                           fingerprint=problem.fingerprint(),
                           alpha=sol.alpha, r=sol.r,
                           dual_value=sol.dual_value,
                           dual_x=sol.dual_x, dual_y=sol.dual_y)


def evaluate(est: AffineEstimator, observations) -> float:
    """ghat at one observation tuple (one entry per channel, group order)."""
    obs = list(observations)
    if len(obs) != est.n_channels:
        raise DimensionMismatchError(
            f"expected {est.n_channels} observations, got {len(obs)}")
    total = est.c
    k = 0
    for grp, p in zip(est.groups, est.phi):
        for _ in range(grp.count):
            total += grp.family.tf_value(p, obs[k])
            k += 1
    return float(total)


def evaluate_many(est: AffineEstimator, observations) -> np.ndarray:
    """Vectorized ghat over per-channel observation arrays.

    ``observations[k]`` holds the k-th channel's draws: shape (n,) for counts
    and categories, (n, dim) for vector channels.
    """
    obs = list(observations)
    if len(obs) != est.n_channels:
        raise DimensionMismatchError(
            f"expected {est.n_channels} observation arrays, got {len(obs)}")
    total = None
    k = 0
    for grp, p in zip(est.groups, est.phi):
        for _ in range(grp.count):
            term = grp.family.tf_value_many(p, obs[k])
            total = term if total is None else total + term
            k += 1
    return total + est.c


# -- JSON ----------------------------------------------------------------------


def estimator_to_json(est: AffineEstimator) -> dict:
    return {
        "channels": [
            {"family": grp.family.to_json(),
             "map": {"A": grp.amap.matrix.tolist(), "b": grp.amap.offset.tolist()},
             "count": grp.count,
             "phi": np.asarray(p).tolist()}
            for grp, p in zip(est.groups, est.phi)
        ],
        "c": est.c,
        "risk_bound": est.risk_bound,
        "epsilon": est.epsilon,
        "gap": est.gap,
        "certified": est.certified,
        "fingerprint": est.fingerprint,
        "alpha": est.alpha,
        "r": est.r,
        "dual_value": est.dual_value,
        "dual_x": None if est.dual_x is None else np.asarray(est.dual_x).tolist(),
        "dual_y": None if est.dual_y is None else np.asarray(est.dual_y).tolist(),
    }


def estimator_from_json(obj: dict) -> AffineEstimator:
    from .problems import AffineMap  # local import keeps module load cheap

    if not isinstance(obj, dict) or "channels" not in obj:
        raise ValidationError("estimator document needs a 'channels' list")
    groups = []
    phi = []
    for k, ch in enumerate(obj["channels"]):
        family = fam.family_from_json(ch["family"], f"channels[{k}].family")
        amap = AffineMap(np.asarray(ch["map"]["A"], float),
                         np.asarray(ch["map"]["b"], float))
        groups.append(ChannelGroup(family, amap, int(ch.get("count", 1))))
        phi.append(np.asarray(ch["phi"], dtype=float))
    return AffineEstimator(
        groups=tuple(groups), phi=tuple(phi), c=float(obj["c"]),
        risk_bound=float(obj["risk_bound"]), epsilon=float(obj["epsilon"]),
        gap=float(obj.get("gap", float("nan"))),
        certified=bool(obj.get("certified", True)),
        fingerprint=str(obj.get("fingerprint", "")),
        alpha=float(obj.get("alpha", float("nan"))),
        r=float(obj.get("r", float("nan"))),
        dual_value=float(obj.get("dual_value", float("nan"))),
        dual_x=None if obj.get("dual_x") is None else np.asarray(obj["dual_x"], float),
        dual_y=None if obj.get("dual_y") is None else np.asarray(obj["dual_y"], float),
    )


def save_estimator(est: AffineEstimator, path: str):
    with open(path, "w") as fh:
        json.dump(estimator_to_json(est), fh, indent=2)
        fh.write("\n")


def load_estimator(path: str) -> AffineEstimator:
    with open(path) as fh:
        return estimator_from_json(json.load(fh))
