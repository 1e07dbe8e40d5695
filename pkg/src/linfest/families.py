"""Observation-channel families and their log-exp-moment calculus.

A family couples a parametric density with the linear space of test
functions the estimators live in:

* ``Discrete(M)``  -- categorical laws on {0, .., M-1}; test functions are
  arbitrary tables ``v`` of length M, parameters are interior probability
  vectors.
* ``Poisson``      -- counting laws with rate mu > 0; test functions are the
  affine forms ``a*k + b`` stored as ``[a, b]``.
* ``Gaussian(S)``  -- mean shifts of N(mu, S) with S fixed SPD; test
  functions are affine forms ``a @ w + b`` stored as ``[a_1..a_k, b]``.
  The standard N(mu, S) density convention is used throughout.
* ``Product``      -- finite direct products of the above; parameters, test
  functions and observations become per-channel tuples.

Each family exposes the four functionals the saddle solver consumes:

* ``lem(coef, mu)``              log of the exp-moment of the test function,
                                 convex in the coefficients, concave in mu;
* ``log_likelihood_ratio(mu,nu)``the log density ratio, represented exactly
                                 in the coefficient space;
* ``hellinger_affinity_log``     closed-form log Hellinger affinity;
* ``sample``                     one observation under a given parameter.

Test functions are plain coefficient arrays, never callables, so scaling by
t > 0, addition, and serialization are exact.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.special import logsumexp

from .errors import DimensionMismatchError, DomainError, ValidationError

#: Open-domain membership margin: parameters must clear boundaries by this much.
PARAM_MARGIN = 1e-12


class Family(ABC):
    """A good pair: density family plus its finite-dimensional test-function space."""

    kind: str
    param_dim: int          # dimension of the parameter point mu
    coef_len: int           # length of a test-function coefficient vector
    linear_in_param: bool   # True when lem(coef, .) is affine in mu

    # -- domain ------------------------------------------------------------

    @abstractmethod
    def validate_param(self, mu, margin: float = PARAM_MARGIN) -> np.ndarray:
        """Return mu as an array, raising DomainError outside the open domain."""

    def zero_coef(self) -> np.ndarray:
        return np.zeros(self.coef_len)

    def _check_coef(self, coef) -> np.ndarray:
        coef = np.atleast_1d(np.asarray(coef, dtype=float))
        if coef.shape != (self.coef_len,):
            raise DimensionMismatchError(
                f"{self.kind}: coefficient vector must have length {self.coef_len}, "
                f"got shape {coef.shape}")
        return coef

    # -- log-exp-moment calculus -------------------------------------------

    @abstractmethod
    def lem(self, coef, mu) -> float:
        """F_coef(mu) = log E_mu exp(phi(omega)) for the test function phi."""

    @abstractmethod
    def lem_grad_mu(self, coef, mu) -> np.ndarray:
        """Gradient of ``lem`` in the parameter."""

    @abstractmethod
    def lem_grad_coef(self, coef, mu) -> np.ndarray:
        """Gradient of ``lem`` in the test-function coefficients."""

    def lem_hess_mu(self, coef, mu):
        """Hessian of ``lem`` in the parameter (zero for the affine families)."""
        return np.zeros((self.param_dim, self.param_dim))

    def affinity_log_hess(self, mu, nu):
        """Hessian of ``hellinger_affinity_log`` in the stacked (mu, nu)."""
        raise NotImplementedError

    @abstractmethod
    def log_likelihood_ratio(self, mu, nu) -> np.ndarray:
        """Coefficients of log(p_mu / p_nu); exact within the function space."""

    @abstractmethod
    def hellinger_affinity_log(self, mu, nu) -> float:
        """log integral sqrt(p_mu p_nu) <= 0, in closed form."""

    @abstractmethod
    def affinity_log_grad(self, mu, nu) -> tuple[np.ndarray, np.ndarray]:
        """Gradients of ``hellinger_affinity_log`` in (mu, nu)."""

    # -- observations --------------------------------------------------------

    @abstractmethod
    def sample(self, mu, rng: np.random.Generator):
        """One draw from p_mu."""

    @abstractmethod
    def sample_many(self, mu, n: int, rng: np.random.Generator):
        """n draws, vectorized; shape (n,) or (n, k)."""

    @abstractmethod
    def tf_value(self, coef, omega) -> float:
        """Evaluate the test function at one observation."""

    @abstractmethod
    def tf_value_many(self, coef, omegas) -> np.ndarray:
        """Evaluate the test function at a batch of observations."""

    # -- serialization -------------------------------------------------------

    @abstractmethod
    def to_json(self) -> dict: ...


@dataclass(frozen=True)
class Poisson(Family):
    """Poisson counts; affine test functions ``a*k + b`` stored as [a, b]."""

    kind = "poisson"
    param_dim = 1
    coef_len = 2
    linear_in_param = True

    def validate_param(self, mu, margin=PARAM_MARGIN):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.shape != (1,):
            raise DimensionMismatchError(f"poisson rate must be scalar, got {mu.shape}")
        if not mu[0] > margin:
            raise DomainError(f"poisson rate must exceed {margin}, got {mu[0]}")
        return mu

    def lem(self, coef, mu):
        a, b = self._check_coef(coef)
        m = float(np.atleast_1d(mu)[0])
        return b - m + m * np.exp(a)

    def lem_grad_mu(self, coef, mu):
        a, _ = self._check_coef(coef)
        return np.array([np.exp(a) - 1.0])

    def lem_grad_coef(self, coef, mu):
        a, _ = self._check_coef(coef)
        m = float(np.atleast_1d(mu)[0])
        return np.array([m * np.exp(a), 1.0])

    def log_likelihood_ratio(self, mu, nu):
        m = self.validate_param(mu)[0]
        v = self.validate_param(nu)[0]
        return np.array([np.log(m / v), v - m])

    def hellinger_affinity_log(self, mu, nu):
        m = self.validate_param(mu)[0]
        v = self.validate_param(nu)[0]
        return -0.5 * (np.sqrt(m) - np.sqrt(v)) ** 2

    def affinity_log_grad(self, mu, nu):
        m = float(np.atleast_1d(mu)[0])
        v = float(np.atleast_1d(nu)[0])
        d = np.sqrt(m) - np.sqrt(v)
        return (np.array([-0.5 * d / np.sqrt(m)]),
                np.array([0.5 * d / np.sqrt(v)]))

    def affinity_log_hess(self, mu, nu):
        m = float(np.atleast_1d(mu)[0])
        v = float(np.atleast_1d(nu)[0])
        h = np.empty((2, 2))
        h[0, 0] = -0.25 * np.sqrt(v) * m ** -1.5
        h[0, 1] = h[1, 0] = 0.25 / np.sqrt(m * v)
        h[1, 1] = -0.25 * np.sqrt(m) * v ** -1.5
        return h

    def sample(self, mu, rng):
        return int(rng.poisson(float(np.atleast_1d(mu)[0])))

    def sample_many(self, mu, n, rng):
        return rng.poisson(float(np.atleast_1d(mu)[0]), size=n)

    def tf_value(self, coef, omega):
        a, b = self._check_coef(coef)
        return a * float(omega) + b

    def tf_value_many(self, coef, omegas):
        a, b = self._check_coef(coef)
        return a * np.asarray(omegas, dtype=float) + b

    def to_json(self):
        return {"kind": "poisson"}


@dataclass(frozen=True)
class Gaussian(Family):
    """Mean shifts of N(mu, cov); affine test functions stored as [a_1..a_k, b]."""

    cov: np.ndarray
    _chol_lower: np.ndarray = field(init=False, repr=False, compare=False)

    kind = "gaussian"
    linear_in_param = True

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValidationError("covariance must be square", "family.cov")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValidationError("covariance must be symmetric", "family.cov")
        try:
            low = cholesky(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("covariance must be positive definite "
                                  "(Cholesky failed)", "family.cov") from exc
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol_lower", low)
        object.__setattr__(self, "param_dim", cov.shape[0])
        object.__setattr__(self, "coef_len", cov.shape[0] + 1)

    def _solve_cov(self, x):
        return cho_solve((self._chol_lower, True), x)

    def validate_param(self, mu, margin=PARAM_MARGIN):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.shape != (self.param_dim,):
            raise DimensionMismatchError(
                f"gaussian mean must have length {self.param_dim}, got {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise DomainError("gaussian mean must be finite")
        return mu

    def lem(self, coef, mu):
        coef = self._check_coef(coef)
        a, b = coef[:-1], coef[-1]
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return float(b + a @ mu + 0.5 * a @ self.cov @ a)

    def lem_grad_mu(self, coef, mu):
        coef = self._check_coef(coef)
        return coef[:-1].copy()

    def lem_grad_coef(self, coef, mu):
        coef = self._check_coef(coef)
        a = coef[:-1]
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return np.concatenate([mu + self.cov @ a, [1.0]])

    def log_likelihood_ratio(self, mu, nu):
        mu = self.validate_param(mu)
        nu = self.validate_param(nu)
        a = self._solve_cov(mu - nu)
        b = -0.5 * (mu + nu) @ a
        return np.concatenate([a, [b]])

    def hellinger_affinity_log(self, mu, nu):
        mu = self.validate_param(mu)
        nu = self.validate_param(nu)
        d = mu - nu
        return float(-0.125 * d @ self._solve_cov(d))

    def affinity_log_grad(self, mu, nu):
        d = np.atleast_1d(np.asarray(mu, float)) - np.atleast_1d(np.asarray(nu, float))
        w = self._solve_cov(d)
        return -0.25 * w, 0.25 * w

    def affinity_log_hess(self, mu, nu):
        k = self.param_dim
        prec = self._solve_cov(np.eye(k))
        h = np.empty((2 * k, 2 * k))
        h[:k, :k] = -0.25 * prec
        h[:k, k:] = 0.25 * prec
        h[k:, :k] = 0.25 * prec
        h[k:, k:] = -0.25 * prec
        return h

    def sample(self, mu, rng):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return mu + self._chol_lower @ rng.standard_normal(self.param_dim)

    def sample_many(self, mu, n, rng):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        z = rng.standard_normal((n, self.param_dim))
        return mu[None, :] + z @ self._chol_lower.T

    def tf_value(self, coef, omega):
        coef = self._check_coef(coef)
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        return float(coef[:-1] @ omega + coef[-1])

    def tf_value_many(self, coef, omegas):
        coef = self._check_coef(coef)
        om = np.atleast_2d(np.asarray(omegas, dtype=float))
        return om @ coef[:-1] + coef[-1]

    def to_json(self):
        return {"kind": "gaussian", "cov": self.cov.tolist()}


def gaussian_identity(k: int) -> Gaussian:
    return Gaussian(np.eye(k))


@dataclass(frozen=True)
class Discrete(Family):
    """Categorical laws on {0, .., size-1}; test functions are value tables."""

    size: int

    kind = "discrete"
    linear_in_param = False

    def __post_init__(self):
        if self.size < 2:
            raise ValidationError("discrete family needs size >= 2", "family.size")
        object.__setattr__(self, "param_dim", self.size)
        object.__setattr__(self, "coef_len", self.size)

    def validate_param(self, mu, margin=PARAM_MARGIN):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.shape != (self.size,):
            raise DimensionMismatchError(
                f"discrete parameter must have length {self.size}, got {mu.shape}")
        if not np.all(mu > margin):
            raise DomainError("discrete probabilities must be strictly positive")
        if abs(mu.sum() - 1.0) > 1e-9:
            raise DomainError(f"discrete probabilities must sum to 1, got {mu.sum()}")
        return mu

    def lem(self, coef, mu):
        v = self._check_coef(coef)
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        # logsumexp keeps large tables stable: log sum_i exp(v_i) mu_i.
        return float(logsumexp(v, b=mu))

    def lem_grad_mu(self, coef, mu):
        v = self._check_coef(coef)
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        vmax = v.max()
        w = np.exp(v - vmax)
        return w / float(w @ mu)

    def lem_grad_coef(self, coef, mu):
        v = self._check_coef(coef)
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        vmax = v.max()
        t = np.exp(v - vmax) * mu
        return t / t.sum()

    def log_likelihood_ratio(self, mu, nu):
        mu = self.validate_param(mu)
        nu = self.validate_param(nu)
        return np.log(mu / nu)

    def hellinger_affinity_log(self, mu, nu):
        mu = self.validate_param(mu)
        nu = self.validate_param(nu)
        return float(np.log(np.sqrt(mu * nu).sum()))

    def affinity_log_grad(self, mu, nu):
        mu = np.atleast_1d(np.asarray(mu, float))
        nu = np.atleast_1d(np.asarray(nu, float))
        aff = np.sqrt(mu * nu).sum()
        return (0.5 * np.sqrt(nu / mu) / aff,
                0.5 * np.sqrt(mu / nu) / aff)

    def lem_hess_mu(self, coef, mu):
        v = self._check_coef(coef)
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        w = np.exp(v - v.max())
        return -np.outer(w, w) / float(w @ mu) ** 2

    def affinity_log_hess(self, mu, nu):
        mu = np.atleast_1d(np.asarray(mu, float))
        nu = np.atleast_1d(np.asarray(nu, float))
        m = self.size
        s = np.sqrt(mu * nu).sum()
        grad = np.concatenate([0.5 * np.sqrt(nu / mu), 0.5 * np.sqrt(mu / nu)])
        hs = np.zeros((2 * m, 2 * m))
        idx = np.arange(m)
        hs[idx, idx] = -0.25 * np.sqrt(nu) * mu ** -1.5
        hs[m + idx, m + idx] = -0.25 * np.sqrt(mu) * nu ** -1.5
        hs[idx, m + idx] = hs[m + idx, idx] = 0.25 / np.sqrt(mu * nu)
        # hessian of log: (hess S)/S - (grad S)(grad S)^T / S^2
        return hs / s - np.outer(grad / s, grad / s)

    def sample(self, mu, rng):
        return int(np.searchsorted(np.cumsum(mu), rng.random(), side="right"))

    def sample_many(self, mu, n, rng):
        edges = np.cumsum(mu)
        return np.searchsorted(edges, rng.random(n), side="right").clip(0, self.size - 1)

    def tf_value(self, coef, omega):
        v = self._check_coef(coef)
        i = int(omega)
        if not 0 <= i < self.size:
            raise DomainError(f"observation {i} outside {{0..{self.size - 1}}}")
        return float(v[i])

    def tf_value_many(self, coef, omegas):
        v = self._check_coef(coef)
        idx = np.asarray(omegas, dtype=int)
        return v[idx]

    def to_json(self):
        return {"kind": "discrete", "size": self.size}


def bernoulli() -> Discrete:
    """Two-point family on {0, 1}; parameter (1-p, p)."""
    return Discrete(2)


@dataclass(frozen=True)
class Product(Family):
    """Finite direct product; parameters, coefficients and draws are tuples."""

    parts: tuple[Family, ...]

    kind = "product"
    coef_len = -1  # coefficients are tuples, not a flat vector

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValidationError("product needs at least one part", "family.parts")
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "param_dim", sum(p.param_dim for p in parts))
        object.__setattr__(self, "linear_in_param",
                           all(p.linear_in_param for p in parts))

    def _split(self, seq, what):
        if len(seq) != len(self.parts):
            raise DimensionMismatchError(
                f"product expects {len(self.parts)} per-channel {what}, got {len(seq)}")
        return seq

    def validate_param(self, mu, margin=PARAM_MARGIN):
        mu = self._split(tuple(mu), "parameters")
        return tuple(p.validate_param(m, margin) for p, m in zip(self.parts, mu))

    def zero_coef(self):
        return tuple(p.zero_coef() for p in self.parts)

    def lem(self, coef, mu):
        coef = self._split(tuple(coef), "coefficients")
        mu = self._split(tuple(mu), "parameters")
        return sum(p.lem(c, m) for p, c, m in zip(self.parts, coef, mu))

    def lem_grad_mu(self, coef, mu):
        return tuple(p.lem_grad_mu(c, m)
                     for p, c, m in zip(self.parts, tuple(coef), tuple(mu)))

    def lem_grad_coef(self, coef, mu):
        return tuple(p.lem_grad_coef(c, m)
                     for p, c, m in zip(self.parts, tuple(coef), tuple(mu)))

    def log_likelihood_ratio(self, mu, nu):
        return tuple(p.log_likelihood_ratio(m, v)
                     for p, m, v in zip(self.parts, tuple(mu), tuple(nu)))

    def hellinger_affinity_log(self, mu, nu):
        mu = self._split(tuple(mu), "parameters")
        nu = self._split(tuple(nu), "parameters")
        return sum(p.hellinger_affinity_log(m, v)
                   for p, m, v in zip(self.parts, mu, nu))

    def affinity_log_grad(self, mu, nu):
        grads = [p.affinity_log_grad(m, v)
                 for p, m, v in zip(self.parts, tuple(mu), tuple(nu))]
        return tuple(gm for gm, _ in grads), tuple(gn for _, gn in grads)

    def sample(self, mu, rng):
        return tuple(p.sample(m, rng) for p, m in zip(self.parts, tuple(mu)))

    def sample_many(self, mu, n, rng):
        return tuple(p.sample_many(m, n, rng) for p, m in zip(self.parts, tuple(mu)))

    def tf_value(self, coef, omega):
        return sum(p.tf_value(c, o)
                   for p, c, o in zip(self.parts, tuple(coef), tuple(omega)))

    def tf_value_many(self, coef, omegas):
        vals = [p.tf_value_many(c, o)
                for p, c, o in zip(self.parts, tuple(coef), tuple(omegas))]
        return np.sum(vals, axis=0)

    def to_json(self):
        return {"kind": "product", "parts": [p.to_json() for p in self.parts]}


def tf_scale(family: Family, coef, t: float):
    """t * phi, exact in coefficient space (products scale channelwise)."""
    if isinstance(family, Product):
        return tuple(tf_scale(p, c, t) for p, c in zip(family.parts, tuple(coef)))
    return np.asarray(coef, dtype=float) * t


def tf_add(family: Family, coef1, coef2):
    """phi_1 + phi_2, exact in coefficient space."""
    if isinstance(family, Product):
        return tuple(tf_add(p, a, b)
                     for p, a, b in zip(family.parts, tuple(coef1), tuple(coef2)))
    return np.asarray(coef1, dtype=float) + np.asarray(coef2, dtype=float)


def family_from_json(obj: dict, path: str = "family") -> Family:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("expected an object with a 'kind' field", path)
    kind = obj["kind"]
    try:
        if kind == "poisson":
            return Poisson()
        if kind == "gaussian":
            return Gaussian(np.asarray(obj["cov"], dtype=float))
        if kind == "gaussian-identity":
            return gaussian_identity(int(obj["dim"]))
        if kind == "discrete":
            return Discrete(int(obj["size"]))
        if kind == "product":
            return Product(tuple(family_from_json(p, f"{path}.parts[{i}]")
                                 for i, p in enumerate(obj["parts"])))
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}", path) from exc
    raise ValidationError(f"unknown family kind {kind!r}", path)
