"""Saddle solver: certified minimization of the outer risk functional.

For a problem with channels ``l = 1..L`` and radius ``r``, the convex-concave
function driving everything is

    Phi_r(x, y; phi, alpha) = g@x - g@y
        + alpha * sum_l [ lem_l(-phi_l/alpha, A_l(x)) + lem_l(phi_l/alpha, A_l(y)) ]
        + 2*alpha*r,

concave in (x, y) over X x X and convex in (phi, alpha > 0).  Its outer
envelope ``Phi_bar_r(phi, alpha) = sup_{x,y} Phi_r`` splits into two
independent concave maximizations (U for the x-side, V for the y-side), and
its saddle value equals the value of the affinity program

    max { g@x - g@y :  sum_l log_affinity_l(A_l(x), A_l(y)) >= -r },

which :func:`hellinger_dual` solves directly.  The dual value is used three
ways: as the certified lower bound, as the stopping certificate of the outer
descent, and to warm-start that descent (the optimal test function is
``alpha * (1/2) log-likelihood-ratio`` at the dual maximizers, with
``alpha = lambda/2`` for the dual multiplier ``lambda``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import families as fam
from .errors import (DimensionMismatchError, DomainError, InnerSolveError,
                     SolverCapError)
from .optim import (MaxResult, constrained_linear_max, maximize_concave,
                    minimize_with_target, pair_of)
from .problems import EstimationProblem

#: Certified-gap tolerance of every inner (exact) maximization.
TOL_INNER = 1e-10

#: Default outer stopping rule: gap <= DEFAULT_TOL_SCALE * (1 + |dual value|).
DEFAULT_TOL_SCALE = 1e-6


@dataclass
class DualSolution:
    """Solution of the affinity-constrained variation program at radius r."""

    x: np.ndarray
    y: np.ndarray
    value: float        # g@x - g@y at the returned feasible pair = 2*Phi_*(r)
    upper: float        # Lagrangian certificate: true value <= upper
    lam: float          # multiplier of the affinity constraint
    con_value: float    # achieved log-affinity (>= -r)
    r: float
    iterations: int
    converged: bool

    @property
    def phi_star(self) -> float:
        return 0.5 * self.value


@dataclass
class SaddleSolution:
    """Certified output of the outer minimization at radius r."""

    phi: tuple          # test-function coefficients, one entry per group
    alpha: float
    upper: float        # Phi_bar_r(phi, alpha), certified from above
    dual_x: np.ndarray
    dual_y: np.ndarray
    dual_value: float   # g@dual_x - g@dual_y, certified from below
    gap: float          # upper - dual_value >= 0 up to inner tolerances
    r: float
    iterations: int
    converged: bool


# -- Phi_r and its exact inner maximizations ---------------------------------


def _check_phi(problem: EstimationProblem, phi):
    phi = tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in phi)
    if len(phi) != len(problem.groups):
        raise DimensionMismatchError(
            f"expected {len(problem.groups)} per-group test functions, "
            f"got {len(phi)}")
    for p, grp in zip(phi, problem.groups):
        if p.shape != (grp.family.coef_len,):
            raise DimensionMismatchError(
                f"group with family {grp.family.kind}: coefficient shape "
                f"{p.shape} != ({grp.family.coef_len},)")
    return phi


def phi_r(problem: EstimationProblem, x, y, phi, alpha: float, r: float) -> float:
    """Evaluate Phi_r at a primal-dual probe point."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")
    phi = _check_phi(problem, phi)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for point, name in ((x, "x"), (y, "y")):
        if not problem.signal_set.contains(point, tol=1e-7):
            raise DomainError(f"{name} lies outside the signal set")
    g = problem.g
    total = float(g @ x - g @ y) + 2.0 * alpha * r
    for grp, p in zip(problem.groups, phi):
        mu = grp.amap.apply(x)
        nu = grp.amap.apply(y)
        total += alpha * grp.count * (grp.family.lem(-p / alpha, mu)
                                      + grp.family.lem(p / alpha, nu))
    return total


def _half_problem(problem, psis, alpha, sign):
    """Value/gradient/Hessian of z -> sign*g@z + alpha*sum count*lem(psi, A z)."""
    groups = problem.groups
    g = sign * problem.g

    def fg(z):
        val = float(g @ z)
        grad = g.copy()
        for grp, psi in zip(groups, psis):
            mu = grp.amap.apply(z)
            val += alpha * grp.count * grp.family.lem(psi, mu)
            grad += alpha * grp.count * (
                grp.amap.matrix.T @ grp.family.lem_grad_mu(psi, mu))
        return val, grad

    def hess(z):
        h = np.zeros((problem.signal_set.dim, problem.signal_set.dim))
        for grp, psi in zip(groups, psis):
            if grp.family.linear_in_param:
                continue
            mu = grp.amap.apply(z)
            hm = grp.family.lem_hess_mu(psi, mu)
            h += alpha * grp.count * (grp.amap.matrix.T @ hm @ grp.amap.matrix)
        return h

    linear = all(grp.family.linear_in_param for grp in groups)
    return fg, hess, linear


def _inner_max(problem, psis, alpha, sign, x0=None, gap_tol=TOL_INNER) -> MaxResult:
    """Exactly maximize one half of Phi_bar over the signal set."""
    fg, hess, linear = _half_problem(problem, psis, alpha, sign)
    sset = problem.signal_set
    if linear:
        # lem is affine in the parameter, so the objective is affine in z.
        _, grad = fg(sset.center())
        z, _ = sset.lin_max(grad)
        val, _ = fg(z)
        return MaxResult(z, val, 0.0, 0, True)
    res = maximize_concave(fg, sset, x0=x0, gap_tol=gap_tol, hess=hess)
    if not res.converged:
        raise InnerSolveError(
            f"inner maximization stalled at certified gap {res.gap:.3e} "
            f"(tolerance {gap_tol:.1e})",
            best_x=res.x, value=res.value, residual=res.gap)
    return res


def outer_parts(problem, phi, alpha, r, x0=None, y0=None, gap_tol=TOL_INNER):
    """U, V maximizations at (phi, alpha); returns both results and the total.

    ``U = max_x g@x + alpha*sum lem(-phi/alpha, A(x))`` and
    ``V = max_y -g@y + alpha*sum lem(phi/alpha, A(y))``; the outer value is
    ``U + V + 2*alpha*r`` and each part carries its linear-oracle gap, so
    ``value + res_u.gap + res_v.gap`` is a certified upper bound.
    """
    phi = _check_phi(problem, phi)
    psis_x = tuple(-p / alpha for p in phi)
    psis_y = tuple(p / alpha for p in phi)
    res_u = _inner_max(problem, psis_x, alpha, +1.0, x0=x0, gap_tol=gap_tol)
    res_v = _inner_max(problem, psis_y, alpha, -1.0, x0=y0, gap_tol=gap_tol)
    value = res_u.value + res_v.value + 2.0 * alpha * r
    return res_u, res_v, value


def outer_value(problem, phi, alpha, r, x0=None, y0=None, gap_tol=TOL_INNER):
    """Phi_bar_r(phi, alpha) with the two inner maximizers."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    res_u, res_v, value = outer_parts(problem, phi, alpha, r,
                                      x0=x0, y0=y0, gap_tol=gap_tol)
    return value, res_u.x, res_v.x


# -- the affinity program (dual side) -----------------------------------------


def _dual_constraint(problem):
    n = problem.signal_set.dim
    groups = problem.groups
    gaussian_hess_cache = {}

    def con_fg(z):
        x, y = z[:n], z[n:]
        val = 0.0
        gx = np.zeros(n)
        gy = np.zeros(n)
        for grp in groups:
            mu = grp.amap.apply(x)
            nu = grp.amap.apply(y)
            val += grp.count * grp.family.hellinger_affinity_log(mu, nu)
            gm, gn = grp.family.affinity_log_grad(mu, nu)
            gx += grp.count * (grp.amap.matrix.T @ gm)
            gy += grp.count * (grp.amap.matrix.T @ gn)
        return val, np.concatenate([gx, gy])

    def con_hess(z):
        x, y = z[:n], z[n:]
        h = np.zeros((2 * n, 2 * n))
        for gi, grp in enumerate(groups):
            mu = grp.amap.apply(x)
            nu = grp.amap.apply(y)
            if isinstance(grp.family, fam.Gaussian):
                if gi not in gaussian_hess_cache:
                    gaussian_hess_cache[gi] = grp.family.affinity_log_hess(mu, nu)
                hf = gaussian_hess_cache[gi]
            else:
                hf = grp.family.affinity_log_hess(mu, nu)
            m = grp.family.param_dim
            a = grp.amap.matrix
            hxx = a.T @ hf[:m, :m] @ a
            hxy = a.T @ hf[:m, m:] @ a
            hyy = a.T @ hf[m:, m:] @ a
            h[:n, :n] += grp.count * hxx
            h[:n, n:] += grp.count * hxy
            h[n:, :n] += grp.count * hxy.T
            h[n:, n:] += grp.count * hyy
        return h

    return con_fg, con_hess


def hellinger_dual(problem: EstimationProblem, r: float,
                   gap_tol: float = 1e-11) -> DualSolution:
    """Solve max {g@x - g@y : product affinity >= exp(-r)} over X x X.

    Bisection on the Lagrange multiplier of the (concave) log-affinity
    constraint; each subproblem is a smooth concave maximization.  The
    returned pair is feasible, so ``value`` is a certified lower bound on
    2*Phi_*(r); ``upper`` bounds it from above.
    """
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")
    n = problem.signal_set.dim
    pair = pair_of(problem.signal_set)
    c = np.concatenate([problem.g, -problem.g])
    con_fg, con_hess = _dual_constraint(problem)
    anchor = np.concatenate([problem.signal_set.center()] * 2)
    res = constrained_linear_max(pair, c, con_fg, -r, anchor,
                                 con_hess=con_hess, gap_tol=gap_tol)
    return DualSolution(x=res.z[:n], y=res.z[n:], value=res.value,
                        upper=res.upper, lam=res.lam, con_value=res.con_value,
                        r=r, iterations=res.iterations, converged=res.converged)


# -- outer minimization --------------------------------------------------------


def _pack(phi, alpha):
    return np.concatenate([np.ravel(p) for p in phi] + [[np.log(alpha)]])


def _unpack(problem, theta):
    phi = []
    k = 0
    for grp in problem.groups:
        m = grp.family.coef_len
        phi.append(theta[k:k + m].copy())
        k += m
    alpha = float(np.exp(theta[k]))
    return tuple(phi), alpha


def _outer_fg(problem, r, warm):
    """Phi_bar_r as a function of theta = (phi..., log alpha), with gradient.

    Danskin: the gradient is evaluated at the exact inner maximizers, which
    are kept in ``warm`` so consecutive solves start close.
    """

    def fg(theta):
        phi, alpha = _unpack(problem, theta)
        res_u, res_v, value = outer_parts(problem, phi, alpha, r,
                                          x0=warm.get("x"), y0=warm.get("y"))
        warm["x"], warm["y"] = res_u.x, res_v.x
        grad = np.empty_like(theta)
        k = 0
        dv_dalpha = 2.0 * r
        for grp, p in zip(problem.groups, phi):
            m = grp.family.coef_len
            mu = grp.amap.apply(res_u.x)
            nu = grp.amap.apply(res_v.x)
            gu = grp.family.lem_grad_coef(-p / alpha, mu)
            gv = grp.family.lem_grad_coef(p / alpha, nu)
            grad[k:k + m] = grp.count * (gv - gu)
            dv_dalpha += grp.count * (
                grp.family.lem(-p / alpha, mu) + grp.family.lem(p / alpha, nu)
                + float(gu @ p - gv @ p) / alpha)
            k += m
        grad[k] = alpha * dv_dalpha
        return value, grad

    return fg


def minimize_outer(problem: EstimationProblem, r: float,
                   tol: float | None = None, lbfgs_maxiter: int = 400,
                   polyak_maxiter: int = 4000) -> SaddleSolution:
    """Minimize Phi_bar_r over (phi, alpha > 0) with a certified gap.

    The affinity dual is solved first; its value is the stopping target and
    its maximizers provide the warm start ``phi = (lambda/2) * (1/2) llr``,
    ``alpha = lambda/2``.  Raises :class:`SolverCapError` carrying the best
    solution when the gap cannot be brought below ``tol``.
    """
    if r <= 0:
        raise DomainError(f"estimator construction needs r > 0, got {r}")
    dual = hellinger_dual(problem, r)
    if tol is None:
        tol = DEFAULT_TOL_SCALE * (1.0 + abs(dual.value))

    phi_bar = tuple(
        fam.tf_scale(grp.family,
                     grp.family.log_likelihood_ratio(grp.amap.apply(dual.x),
                                                     grp.amap.apply(dual.y)),
                     0.5)
        for grp in problem.groups)
    warm = {"x": dual.x.copy(), "y": dual.y.copy()}
    evals = 0

    def solution_at(phi, alpha, value, converged):
        return SaddleSolution(phi=phi, alpha=alpha, upper=value,
                              dual_x=dual.x, dual_y=dual.y,
                              dual_value=dual.value,
                              gap=value - dual.value, r=r,
                              iterations=evals + dual.iterations,
                              converged=converged)

    alpha0 = 0.5 * dual.lam
    if alpha0 > 1e-12:
        phi0 = tuple(alpha0 * p for p in phi_bar)
        _, _, value = outer_parts(problem, phi0, alpha0, r,
                                  x0=warm["x"], y0=warm["y"])
        evals += 1
        if value - dual.value <= tol:
            return solution_at(phi0, alpha0, value, True)
        theta0 = _pack(phi0, alpha0)
    else:
        # Inactive affinity constraint: the infimum is approached as
        # alpha -> 0 along phi = alpha * phi_bar; shrink until certified.
        best = None
        for alpha0 in (1e-12, 1e-15, 1e-9, 1e-6):
            phi0 = tuple(alpha0 * p for p in phi_bar)
            _, _, value = outer_parts(problem, phi0, alpha0, r,
                                      x0=warm["x"], y0=warm["y"])
            evals += 1
            if best is None or value < best[2]:
                best = (phi0, alpha0, value)
            if value - dual.value <= tol:
                return solution_at(phi0, alpha0, value, True)
        theta0 = _pack(best[0], best[1])

    fg = _outer_fg(problem, r, warm)
    n_coef = sum(grp.family.coef_len for grp in problem.groups)
    bounds = [(None, None)] * n_coef + [(-46.0, 46.0)]
    res = minimize_with_target(fg, theta0, dual.value, tol, bounds=bounds,
                               lbfgs_maxiter=lbfgs_maxiter,
                               polyak_maxiter=polyak_maxiter)
    evals += res.iterations
    phi_best, alpha_best = _unpack(problem, res.theta)
    sol = solution_at(phi_best, alpha_best, res.value, res.converged)
    if not res.converged:
        raise SolverCapError(
            f"outer descent stopped with gap {sol.gap:.3e} > tol {tol:.3e}",
            solution=sol)
    return sol


def phi_star_concavity_check(problem: EstimationProblem, r_list) -> dict:
    """Evaluate Phi_*(r) on a grid and probe its shape properties.

    Checks nonnegativity, monotonicity, chord concavity on consecutive
    triples, and the scaling inequality Phi_*(t r) >= t Phi_*(r); report
    only, never raises.
    """
    r_arr = [float(r) for r in r_list]
    if any(r < 0 for r in r_arr) or sorted(r_arr) != r_arr:
        raise DomainError("r_list must be nonnegative and sorted")
    tol = 1e-6
    values = [hellinger_dual(problem, r).phi_star for r in r_arr]
    nonneg = all(v >= -tol for v in values)
    monotone = all(values[i + 1] >= values[i] - tol for i in range(len(values) - 1))
    triples = []
    for i in range(len(r_arr) - 2):
        ra, rb, rc = r_arr[i], r_arr[i + 1], r_arr[i + 2]
        if rc == ra:
            continue
        t = (rb - ra) / (rc - ra)
        chord = (1 - t) * values[i] + t * values[i + 2]
        triples.append({"r": (ra, rb, rc),
                        "ok": bool(values[i + 1] >= chord - tol)})
    pairs = []
    for i in range(len(r_arr)):
        for j in range(i + 1, len(r_arr)):
            if r_arr[j] <= 0:
                continue
            t = r_arr[i] / r_arr[j]
            pairs.append({"t": t, "r": r_arr[j],
                          "ok": bool(values[i] >= t * values[j] - tol)})
    passed = (nonneg and monotone and all(e["ok"] for e in triples)
              and all(e["ok"] for e in pairs))
    return {"r": r_arr, "phi_star": values, "nonnegative": nonneg,
            "monotone": monotone, "concave_triples": triples,
            "scaling_pairs": pairs, "passed": passed}
