"""Small dense optimization engines used by the solvers.

Everything here works over a :class:`~linfest.sets.SignalSet` through its two
oracles only.  Inner maximizations terminate on an *exact* linear-oracle
optimality gap (one ``lin_max`` call bounds the remaining suboptimality of a
concave objective), so the values they return carry a computable certificate
instead of a heuristic gradient-norm test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from .sets import Box, SignalSet


@dataclass
class MaxResult:
    x: np.ndarray
    value: float
    gap: float          # certified suboptimality bound: max f <= value + gap
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PairSet(SignalSet):
    """Cartesian product of two sets; vectors are the concatenation (x, y)."""

    first: SignalSet
    second: SignalSet

    def __post_init__(self):
        object.__setattr__(self, "dim", self.first.dim + self.second.dim)

    def _split(self, z):
        return z[: self.first.dim], z[self.first.dim:]

    def lin_max(self, c):
        c = self._check_vec(c)
        ca, cb = self._split(c)
        xa, va = self.first.lin_max(ca)
        xb, vb = self.second.lin_max(cb)
        return np.concatenate([xa, xb]), va + vb

    def project(self, z):
        z = self._check_vec(z)
        za, zb = self._split(z)
        return np.concatenate([self.first.project(za), self.second.project(zb)])

    def vertices(self):
        va, vb = self.first.vertices(), self.second.vertices()
        out = np.empty((len(va) * len(vb), self.dim))
        k = 0
        for a in va:
            for b in vb:
                out[k, : self.first.dim] = a
                out[k, self.first.dim:] = b
                k += 1
        return out

    def center(self):
        return np.concatenate([self.first.center(), self.second.center()])

    def sample_point(self, rng):
        return np.concatenate([self.first.sample_point(rng),
                               self.second.sample_point(rng)])


def pair_of(sset: SignalSet) -> SignalSet:
    """The product X x X; two boxes merge into one box so Newton steps apply."""
    if isinstance(sset, Box):
        return Box(np.concatenate([sset.lo, sset.lo]),
                   np.concatenate([sset.hi, sset.hi]))
    return PairSet(sset, sset)


def _fw_gap(sset, x, grad, fx_lin):
    """Exact concave-suboptimality bound max_y grad@(y - x) via one lin_max."""
    _, sup = sset.lin_max(grad)
    return max(sup - fx_lin, 0.0)


def maximize_concave(fg, sset, x0=None, gap_tol=1e-9, max_iter=100000,
                     hess=None) -> MaxResult:
    """Maximize a smooth concave function over a set.

    ``fg(x) -> (value, grad)``.  On boxes with an analytic Hessian the solver
    runs projected Newton; otherwise accelerated projected gradient with
    function restarts.  Stops when the linear-oracle gap falls below
    ``gap_tol`` (an absolute bound on the remaining suboptimality).
    """
    if hess is not None and isinstance(sset, Box):
        return _projected_newton_box(fg, hess, sset, x0, gap_tol, max_iter)
    return _fista(fg, sset, x0, gap_tol, max_iter)


def _projected_newton_box(fg, hess, box: Box, x0, gap_tol, max_iter):
    x = box.project(np.asarray(x0, float) if x0 is not None else box.center())
    f, g = fg(x)
    span = np.maximum(box.hi - box.lo, 1e-300)
    eps_a = 1e-11 * (1.0 + np.abs(box.lo) + np.abs(box.hi))
    gap = _fw_gap(box, x, g, float(g @ x))
    it = 0
    while gap > gap_tol and it < max_iter:
        it += 1
        at_lo = (x <= box.lo + eps_a) & (g < 0)
        at_hi = (x >= box.hi - eps_a) & (g > 0)
        free = ~(at_lo | at_hi)
        d = np.zeros_like(x)
        if np.any(free):
            H = hess(x)[np.ix_(free, free)]
            # H is negative semidefinite; regularize so flat (linear) directions
            # turn into long gradient steps that the projection clips.
            reg = 1e-12 * (1.0 + float(np.abs(np.diag(H)).max(initial=0.0)))
            try:
                d[free] = np.linalg.solve(-(H - reg * np.eye(H.shape[0])), g[free])
            except np.linalg.LinAlgError:
                d[free] = g[free]
            if float(d[free] @ g[free]) <= 0:
                d[free] = g[free]
        else:
            d = g.copy()
        # cap absurd steps so the line search starts in a sane range
        dmax = np.abs(d / span).max()
        if dmax > 1e6:
            d *= 1e6 / dmax
        t = 1.0
        accepted = False
        for _ in range(60):
            xn = box.project(x + t * d)
            step = xn - x
            if float(g @ step) <= 0:
                break
            fn, gn = fg(xn)
            if fn >= f + 0.25 * float(g @ step):
                x, f, g = xn, fn, gn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Newton direction failed; one safeguarded gradient step.
            t = 1.0 / (1.0 + float(np.linalg.norm(g)))
            improved = False
            for _ in range(60):
                xn = box.project(x + t * g)
                fn, gn = fg(xn)
                if fn > f:
                    x, f, g = xn, fn, gn
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
        gap = _fw_gap(box, x, g, float(g @ x))
    return MaxResult(x, f, gap, it, gap <= gap_tol)


def _fista(fg, sset, x0, gap_tol, max_iter):
    x = sset.project(np.asarray(x0, float) if x0 is not None else sset.center())
    f, g = fg(x)
    gap = _fw_gap(sset, x, g, float(g @ x))
    if gap <= gap_tol:
        return MaxResult(x, f, gap, 0, True)
    t = 1.0 / (1.0 + float(np.linalg.norm(g)))
    z = x.copy()
    x_prev = x.copy()
    theta = 1.0
    it = 0
    check_every = 8
    while it < max_iter:
        it += 1
        fz, gz = fg(z)
        grew = False
        while True:
            xn = sset.project(z + t * gz)
            d = xn - z
            fn, gn = fg(xn)
            if fn >= fz + float(gz @ d) - float(d @ d) / (2.0 * t) - 1e-15 * (1 + abs(fz)):
                if not grew:
                    t *= 1.25
                break
            t *= 0.5
            grew = True
            if t < 1e-18:
                xn, fn, gn = x, f, g
                break
        if fn < f:  # function restart keeps the scheme monotone in f
            z = x.copy()
            theta = 1.0
            continue
        theta_n = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        z = xn + ((theta - 1.0) / theta_n) * (xn - x_prev)
        x_prev = x
        x, f, g = xn, fn, gn
        theta = theta_n
        if it % check_every == 0 or it >= max_iter:
            gap = _fw_gap(sset, x, g, float(g @ x))
            if gap <= gap_tol:
                return MaxResult(x, f, gap, it, True)
    gap = _fw_gap(sset, x, g, float(g @ x))
    return MaxResult(x, f, gap, it, gap <= gap_tol)


def frank_wolfe_max(fg, sset, x0=None, gap_tol=1e-9, max_iter=100000) -> MaxResult:
    """Classic Frank-Wolfe with exact line search on a quadratic model."""
    x = sset.project(np.asarray(x0, float) if x0 is not None else sset.center())
    f, g = fg(x)
    for it in range(1, max_iter + 1):
        v, sup = sset.lin_max(g)
        gap = max(sup - float(g @ x), 0.0)
        if gap <= gap_tol:
            return MaxResult(x, f, gap, it - 1, True)
        d = v - x
        # backtracking from the default 2/(it+2) schedule, then golden polish
        gamma = 1.0
        best = None
        for _ in range(40):
            xn = x + gamma * d
            fn, gn = fg(xn)
            if best is None or fn > best[1]:
                best = (xn, fn, gn)
            if fn >= f + 0.25 * gamma * gap:
                break
            gamma *= 0.5
        x, f, g = best
    v, sup = sset.lin_max(g)
    gap = max(sup - float(g @ x), 0.0)
    return MaxResult(x, f, gap, max_iter, gap <= gap_tol)


@dataclass
class ConstrainedMaxResult:
    z: np.ndarray
    value: float          # objective of the returned (feasible) point
    upper: float          # Lagrangian certificate: constrained max <= upper
    lam: float            # multiplier of the constraint at the solution
    con_value: float
    iterations: int
    converged: bool


def constrained_linear_max(sset, c, con_fg, level, feasible_anchor,
                           con_hess=None, gap_tol=1e-11, max_iter=100000,
                           lam_rel_tol=1e-12) -> ConstrainedMaxResult:
    """Maximize ``c @ z`` subject to ``con(z) >= level`` over a convex set.

    ``con`` is concave with gradient (``con_fg``) and optional Hessian.  The
    solve runs a bisection on the Lagrange multiplier; each subproblem is a
    smooth concave maximization.  The returned point is feasible, so its
    objective is a valid lower bound on the constrained maximum, while
    ``upper`` bounds it from above through the Lagrangian.
    """
    c = np.asarray(c, dtype=float)
    z0, obj0 = sset.lin_max(c)
    cv0, _ = con_fg(z0)
    feas_eps = 1e-13 * (1.0 + abs(level))
    if cv0 >= level - feas_eps:
        return ConstrainedMaxResult(z0, obj0, obj0, 0.0, cv0, 0, True)

    anchor = np.asarray(feasible_anchor, dtype=float)
    cva, _ = con_fg(anchor)
    if cva < level - feas_eps:
        raise ValueError("feasible_anchor violates the constraint")

    def solve_sub(lam, start):
        def fg(z):
            cv, cg = con_fg(z)
            return float(c @ z) + lam * (cv - level), c + lam * cg
        hz = None
        if con_hess is not None:
            hz = lambda z: lam * con_hess(z)  # noqa: E731
        res = maximize_concave(fg, sset, x0=start, gap_tol=gap_tol,
                               max_iter=max_iter, hess=hz)
        cv, _ = con_fg(res.x)
        return res, cv

    # Bracket the multiplier: con(z_lam) is nondecreasing in lam.
    lam_lo, z_lo = 0.0, z0
    lam = 1.0
    z_warm = z0
    iters = 0
    feas = None  # (z, obj) best feasible subproblem solution
    infeas = (z0, obj0)
    for _ in range(200):
        res, cv = solve_sub(lam, z_warm)
        iters += res.iterations
        z_warm = res.x
        if cv >= level - feas_eps:
            feas = (res.x, float(c @ res.x), lam, res)
            break
        lam_lo, z_lo = lam, res.x
        infeas = (res.x, float(c @ res.x))
        lam *= 2.0
        if lam > 1e15:
            break
    if feas is None:
        # The feasible region is (numerically) the argmax set of con; fall
        # back to the anchor so the returned value stays a valid lower bound.
        val = float(c @ anchor)
        return ConstrainedMaxResult(anchor, val, infeas[1] if infeas else val,
                                    lam, cva, iters, False)

    lam_hi = feas[2]
    while lam_hi - lam_lo > lam_rel_tol * lam_hi:
        lam_mid = 0.5 * (lam_lo + lam_hi)
        res, cv = solve_sub(lam_mid, z_warm)
        iters += res.iterations
        z_warm = res.x
        if cv >= level - feas_eps:
            lam_hi = lam_mid
            if float(c @ res.x) > feas[1] - 1e-300:
                feas = (res.x, float(c @ res.x), lam_mid, res)
        else:
            lam_lo, z_lo = lam_mid, res.x
            infeas = (res.x, float(c @ res.x))

    # Walk the segment between the last infeasible and feasible subproblem
    # maximizers to land exactly on the constraint boundary (con is concave
    # along the segment, so the feasible t's form an interval ending at 0).
    z_f = feas[0]
    z_i = infeas[0]
    cv_f, _ = con_fg(z_f)
    if cv_f < level:
        # Boundary roundoff: retreat toward the anchor until strictly feasible.
        t_lo, t_hi = 0.0, 1.0
        for _ in range(80):
            t = 0.5 * (t_lo + t_hi)
            zt = (1 - t) * anchor + t * z_f
            if con_fg(zt)[0] >= level:
                t_lo = t
            else:
                t_hi = t
        z_f = (1 - t_lo) * anchor + t_lo * z_f
    cv_i, _ = con_fg(z_i)
    if cv_i >= level:
        z_f = z_i
    else:
        t_lo, t_hi = 0.0, 1.0
        for _ in range(80):
            t = 0.5 * (t_lo + t_hi)
            zt = (1 - t) * z_f + t * z_i
            cvt, _ = con_fg(zt)
            if cvt >= level:
                t_lo = t
            else:
                t_hi = t
        z_f = (1 - t_lo) * z_f + t_lo * z_i

    cv_f, _ = con_fg(z_f)
    value = float(c @ z_f)
    lam_star = 0.5 * (lam_lo + lam_hi)
    # Lagrangian value at the last feasible subproblem gives the upper side.
    res_u = feas[3]
    upper = res_u.value + res_u.gap
    return ConstrainedMaxResult(z_f, value, upper, lam_star, cv_f, iters, True)


@dataclass
class DescentResult:
    theta: np.ndarray
    value: float
    iterations: int
    converged: bool


def minimize_with_target(fg, theta0, target, tol, lbfgs_maxiter=400,
                         polyak_maxiter=4000, bounds=None) -> DescentResult:
    """Descend a convex function toward a known lower bound.

    Runs L-BFGS first, then a Polyak subgradient loop with steplength
    ``(f - target) / ||g||^2`` (exact convergence when ``target`` equals the
    minimum, which the duality certificate guarantees).  Stops as soon as
    ``f - target <= tol``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    best = {"theta": theta0.copy(), "value": np.inf}
    evals = {"n": 0}

    def wrapped(th):
        evals["n"] += 1
        f, g = fg(th)
        if f < best["value"]:
            best["value"] = f
            best["theta"] = th.copy()
        return f, g

    f0, _ = wrapped(theta0)
    if f0 - target <= tol:
        return DescentResult(best["theta"], best["value"], evals["n"], True)

    class _Done(Exception):
        pass

    def cb(_):
        if best["value"] - target <= tol:
            raise _Done

    try:
        sciopt.minimize(wrapped, best["theta"], jac=True, method="L-BFGS-B",
                        bounds=bounds,
                        options={"maxiter": lbfgs_maxiter, "ftol": 1e-16,
                                 "gtol": 1e-14},
                        callback=cb)
    except _Done:
        pass
    if best["value"] - target <= tol:
        return DescentResult(best["theta"], best["value"], evals["n"], True)

    theta = best["theta"].copy()
    for _ in range(polyak_maxiter):
        f, g = wrapped(theta)
        if best["value"] - target <= tol:
            return DescentResult(best["theta"], best["value"], evals["n"], True)
        gn2 = float(g @ g)
        if gn2 <= 1e-300:
            break
        step = (f - target) / gn2
        theta = theta - step * g
        if bounds is not None:
            lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
            hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
            theta = np.clip(theta, lo, hi)
    return DescentResult(best["theta"], best["value"], evals["n"],
                         best["value"] - target <= tol)
