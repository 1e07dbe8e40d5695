"""Convex compact signal sets with the two oracles the solvers need.

Four variants: Interval (1-D), Box, Simplex and VPolytope.  Every set
exposes exact linear maximization (``lin_max``) and Euclidean projection
(``project``); projection tolerance for VPolytope is 1e-10.  Ties in
``lin_max`` break toward the lowest index so solver output is reproducible.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ValidationError

_VPOLY_PROJECT_TOL = 1e-10


class SignalSet(ABC):
    """Convex compact subset of R^n with linear-maximization and projection oracles."""

    dim: int

    @abstractmethod
    def lin_max(self, c: np.ndarray) -> tuple[np.ndarray, float]:
        """Argmax and max of ``c @ x`` over the set."""

    @abstractmethod
    def project(self, z: np.ndarray) -> np.ndarray:
        """Euclidean projection of ``z`` onto the set."""

    @abstractmethod
    def vertices(self) -> np.ndarray:
        """Extreme points, one per row (Box enumerates 2^n corners)."""

    @abstractmethod
    def center(self) -> np.ndarray:
        """A canonical interior-ish point used to start iterative solvers."""

    @abstractmethod
    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point (convex combination of extreme points)."""

    def contains(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        z = self._check_vec(z)
        return bool(np.linalg.norm(self.project(z) - z) <= tol)

    def diameter(self) -> float:
        v = self.vertices()
        if len(v) == 1:
            return 0.0
        diffs = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(axis=2)).max())

    def support(self, c: np.ndarray) -> float:
        """Support function h(c) = max c @ x."""
        return self.lin_max(c)[1]

    def _check_vec(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected vector of length {self.dim}, got shape {z.shape}")
        return z


@dataclass(frozen=True)
class Box(SignalSet):
    """Axis-aligned box {x : lo <= x <= hi} (componentwise)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("lo and hi must be 1-D arrays of equal length", "set")
        if np.any(lo > hi):
            raise ValidationError("requires lo <= hi componentwise", "set")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValidationError("bounds must be finite", "set")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", lo.size)

    def lin_max(self, c):
        c = self._check_vec(c)
        # c_i = 0 picks lo_i: deterministic under ties.
        x = np.where(c > 0, self.hi, self.lo)
        return x, float(c @ x)

    def project(self, z):
        z = self._check_vec(z)
        return np.clip(z, self.lo, self.hi)

    def vertices(self):
        if self.dim > 16:
            raise ValidationError(f"corner enumeration limited to 16 dims, got {self.dim}", "set")
        free = np.nonzero(self.hi > self.lo)[0]
        corners = []
        for bits in itertools.product((0, 1), repeat=len(free)):
            x = self.lo.copy()
            for j, b in zip(free, bits):
                x[j] = self.hi[j] if b else self.lo[j]
            corners.append(x)
        return np.array(corners) if corners else self.lo[None, :]

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def sample_point(self, rng):
        return self.lo + rng.random(self.dim) * (self.hi - self.lo)


def Interval(lo: float, hi: float) -> Box:
    """1-D box; scalar-friendly constructor."""
    return Box(np.array([float(lo)]), np.array([float(hi)]))


@dataclass(frozen=True)
class Simplex(SignalSet):
    """Scaled simplex {x : x_i >= margin, sum x_i = scale}.

    ``margin > 0`` keeps the set strictly inside the open simplex, which is
    what discrete-family parameter domains require.
    """

    n: int
    scale: float = 1.0
    margin: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("needs at least one coordinate", "set")
        if self.scale <= 0:
            raise ValidationError("scale must be positive", "set")
        if self.margin < 0 or self.n * self.margin >= self.scale:
            raise ValidationError("margin must satisfy 0 <= n*margin < scale", "set")
        object.__setattr__(self, "dim", self.n)

    @property
    def _free(self) -> float:
        return self.scale - self.n * self.margin

    def lin_max(self, c):
        c = self._check_vec(c)
        i = int(np.argmax(c))  # argmax returns the lowest index on ties
        x = np.full(self.n, self.margin)
        x[i] += self._free
        return x, float(c @ x)

    def project(self, z):
        z = self._check_vec(z)
        return self.margin + _project_unit_simplex(z - self.margin, self._free)

    def vertices(self):
        return self.margin + self._free * np.eye(self.n)

    def center(self):
        return np.full(self.n, self.scale / self.n)

    def sample_point(self, rng):
        w = rng.dirichlet(np.ones(self.n))
        return self.margin + self._free * w


@dataclass(frozen=True)
class VPolytope(SignalSet):
    """Convex hull of an explicit vertex list (one vertex per row)."""

    verts: np.ndarray
    _gram: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.verts, dtype=float))
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValidationError("needs at least one vertex", "set")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertices must be finite", "set")
        object.__setattr__(self, "verts", v)
        object.__setattr__(self, "dim", v.shape[1])
        object.__setattr__(self, "_gram", v @ v.T)

    def lin_max(self, c):
        c = self._check_vec(c)
        vals = self.verts @ c
        i = int(np.argmax(vals))
        return self.verts[i].copy(), float(vals[i])

    def project(self, z):
        z = self._check_vec(z)
        w = _simplex_weight_qp(self.verts, self._gram, z)
        return self.verts.T @ w

    def vertices(self):
        return self.verts.copy()

    def center(self):
        return self.verts.mean(axis=0)

    def sample_point(self, rng):
        w = rng.dirichlet(np.ones(len(self.verts)))
        return self.verts.T @ w


def _project_unit_simplex(v: np.ndarray, s: float) -> np.ndarray:
    """Projection onto {x >= 0, sum x = s} by the sorted-threshold rule."""
    if s == 0.0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - s
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _simplex_weight_qp(verts: np.ndarray, gram: np.ndarray, z: np.ndarray) -> np.ndarray:
    """min ||V^T w - z||^2 over simplex weights w, by pairwise Frank-Wolfe.

    Small vertex counts only; finishes with an exact KKT solve on the
    discovered support so the result is tight to ~machine precision.
    """
    m = len(verts)
    if m == 1:
        return np.ones(1)
    b = verts @ z
    w = np.full(m, 1.0 / m)
    for _ in range(20000):
        grad = gram @ w - b  # gradient of the (halved) objective
        s = int(np.argmin(grad))          # toward vertex
        active = np.nonzero(w > 0)[0]
        a = active[int(np.argmax(grad[active]))]  # away vertex
        fw_gap = float((w @ grad) - grad[s])
        if fw_gap <= _VPOLY_PROJECT_TOL * 0.01 * (1.0 + abs(float(w @ grad))):
            break
        d = np.zeros(m)
        d[s] += 1.0
        d[a] -= 1.0
        gmax = w[a]
        denom = float(d @ gram @ d)
        if denom <= 0:
            gamma = gmax
        else:
            gamma = min(gmax, max(0.0, -float(grad @ d) / denom))
        if gamma <= 0:
            break
        w = w + gamma * d
        w[a] = max(w[a], 0.0)
    w = _support_polish(gram, b, w)
    return w


def _support_polish(gram, b, w):
    # Equality-constrained least squares on the active support; fall back to
    # the FW iterate if the polished weights leave the simplex.
    supp = np.nonzero(w > 1e-12)[0]
    k = len(supp)
    if k == 0:
        return w
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = gram[np.ix_(supp, supp)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[:k] = b[supp]
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    ws = sol[:k]
    if np.all(ws >= -1e-12):
        out = np.zeros_like(w)
        out[supp] = np.maximum(ws, 0.0)
        tot = out.sum()
        if tot > 0:
            out /= tot
        return out
    return w


def set_to_json(s: SignalSet) -> dict:
    if isinstance(s, Box):
        if s.dim == 1:
            return {"kind": "interval", "lo": float(s.lo[0]), "hi": float(s.hi[0])}
        return {"kind": "box", "lo": s.lo.tolist(), "hi": s.hi.tolist()}
    if isinstance(s, Simplex):
        return {"kind": "simplex", "n": s.n, "scale": s.scale, "margin": s.margin}
    if isinstance(s, VPolytope):
        return {"kind": "vpolytope", "vertices": s.verts.tolist()}
    raise ValidationError(f"unknown set type {type(s).__name__}", "set")


def set_from_json(obj: dict, path: str = "set") -> SignalSet:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("expected an object with a 'kind' field", path)
    kind = obj["kind"]
    try:
        if kind == "interval":
            return Interval(obj["lo"], obj["hi"])
        if kind == "box":
            return Box(np.asarray(obj["lo"], float), np.asarray(obj["hi"], float))
        if kind == "simplex":
            return Simplex(int(obj["n"]), float(obj.get("scale", 1.0)),
                           float(obj.get("margin", 0.0)))
        if kind == "vpolytope":
            return VPolytope(np.asarray(obj["vertices"], float))
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}", path) from exc
    raise ValidationError(f"unknown set kind {kind!r}", path)
