"""Estimation problems: signal set, observation channels, functional, confidence.

Channels are grouped: a :class:`ChannelGroup` with ``count = m`` declares m
i.i.d. copies of one channel, and those copies share a single test function
in every solve (untying them cannot improve the optimum, so the grouped
parameterization is both smaller and exact).

The JSON schema accepted by :func:`problem_from_json` is documented in
``docs/schema.md``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import families as fam
from .errors import DimensionMismatchError, ValidationError
from .sets import SignalSet, set_from_json, set_to_json

#: Confidence levels must sit strictly inside (0, 1/4) for the generic path.
EPSILON_MAX = 0.25


@dataclass(frozen=True)
class AffineMap:
    """x -> A x + b from signal space into one channel's parameter space."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.size:
            raise ValidationError(
                f"map shapes disagree: A {a.shape}, b {b.shape}", "map")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "offset", b)

    @property
    def in_dim(self):
        return self.matrix.shape[1]

    @property
    def out_dim(self):
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.offset

    def coordinate_min(self, sset: SignalSet, i: int) -> float:
        """Exact min over the set of coordinate i of A x + b."""
        return self.offset[i] - sset.lin_max(-self.matrix[i])[1]


@dataclass(frozen=True)
class ChannelGroup:
    """``count`` i.i.d. channels sharing one family, one map, one test function."""

    family: fam.Family
    amap: AffineMap
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("channel count must be >= 1", "channels.count")
        if self.amap.out_dim != self.family.param_dim:
            raise DimensionMismatchError(
                f"map produces {self.amap.out_dim} parameters, family "
                f"{self.family.kind} expects {self.family.param_dim}")


@dataclass(frozen=True)
class EstimationProblem:
    """The data of one estimation task: X, channels, g and epsilon."""

    signal_set: SignalSet
    groups: tuple[ChannelGroup, ...]
    g: np.ndarray
    epsilon: float

    def __post_init__(self):
        groups = tuple(self.groups)
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "g", g)
        if not groups:
            raise ValidationError("at least one channel is required", "channels")
        if g.shape != (self.signal_set.dim,):
            raise DimensionMismatchError(
                f"g has shape {g.shape}, set dimension is {self.signal_set.dim}")
        if not 0.0 < self.epsilon < EPSILON_MAX:
            raise ValidationError(
                f"epsilon must lie in (0, {EPSILON_MAX}), got {self.epsilon}",
                "epsilon")
        for k, grp in enumerate(groups):
            if grp.amap.in_dim != self.signal_set.dim:
                raise DimensionMismatchError(
                    f"channels[{k}]: map expects {grp.amap.in_dim}-dim signals, "
                    f"set dimension is {self.signal_set.dim}")
        _validate_images(self.signal_set, groups)

    @property
    def n_channels(self) -> int:
        return sum(grp.count for grp in self.groups)

    @property
    def r_upper(self) -> float:
        """Saddle radius for the risk bound."""
        return float(np.log(2.0 / self.epsilon))

    @property
    def r_lower(self) -> float:
        """Saddle radius for the minimax lower bound."""
        return float(0.5 * np.log(1.0 / (4.0 * self.epsilon)))

    def params_at(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        """Per-group channel parameters A_g(x)."""
        return tuple(grp.amap.apply(x) for grp in self.groups)

    def product_family(self) -> fam.Product:
        """The full product family, one part per channel (groups expanded)."""
        parts = []
        for grp in self.groups:
            parts.extend([grp.family] * grp.count)
        return fam.Product(tuple(parts))

    def untied(self) -> "EstimationProblem":
        """The same problem with every channel in its own group."""
        groups = []
        for grp in self.groups:
            groups.extend(ChannelGroup(grp.family, grp.amap, 1)
                          for _ in range(grp.count))
        return EstimationProblem(self.signal_set, tuple(groups), self.g, self.epsilon)

    def with_set(self, sset: SignalSet) -> "EstimationProblem":
        return EstimationProblem(sset, self.groups, self.g, self.epsilon)

    def with_epsilon(self, epsilon: float) -> "EstimationProblem":
        return EstimationProblem(self.signal_set, self.groups, self.g, epsilon)

    def fingerprint(self) -> str:
        payload = json.dumps(problem_to_json(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _validate_images(sset: SignalSet, groups):
    """Check A(X) lands inside each family's open parameter domain.

    Exact for the supported sets: coordinate minima of affine images are
    computed with the linear oracle, and simplex membership reduces to an
    affine-hull identity plus positivity.
    """
    margin = fam.PARAM_MARGIN
    for k, grp in enumerate(groups):
        path = f"channels[{k}]"
        family, amap = grp.family, grp.amap
        if isinstance(family, fam.Poisson):
            lo = amap.coordinate_min(sset, 0)
            if lo <= margin:
                raise ValidationError(
                    f"poisson rate can reach {lo:.3e} on X; rates must stay "
                    f"above {margin}", path)
        elif isinstance(family, fam.Discrete):
            col = amap.matrix.sum(axis=0)
            if np.any(np.abs(col) > 1e-9) or abs(amap.offset.sum() - 1.0) > 1e-9:
                raise ValidationError(
                    "map must send X into the probability simplex "
                    "(columns of A must sum to 0 and offsets to 1)", path)
            for i in range(family.size):
                lo = amap.coordinate_min(sset, i)
                if lo <= margin:
                    raise ValidationError(
                        f"probability {i} can reach {lo:.3e} on X; must stay "
                        f"above {margin}", path)
        elif isinstance(family, fam.Gaussian):
            pass  # whole space
        else:
            raise ValidationError(
                f"family kind {family.kind!r} cannot back a channel", path)


def bernoulli_problem(sset: SignalSet, n_channels: int, epsilon: float,
                      g: float = 1.0) -> EstimationProblem:
    """Coin-parameter estimation: scalar x in (0,1) observed through
    ``n_channels`` i.i.d. {0,1} draws with success probability x."""
    amap = AffineMap(np.array([[-1.0], [1.0]]), np.array([1.0, 0.0]))
    grp = ChannelGroup(fam.bernoulli(), amap, n_channels)
    return EstimationProblem(sset, (grp,), np.array([float(g)]), epsilon)


def gaussian_sequence_problem(sset: SignalSet, a_matrix: np.ndarray,
                              g: np.ndarray, epsilon: float) -> EstimationProblem:
    """omega = A x + xi with unit Gaussian noise, as a single product channel."""
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    grp = ChannelGroup(fam.gaussian_identity(a.shape[0]),
                       AffineMap(a, np.zeros(a.shape[0])), 1)
    return EstimationProblem(sset, (grp,), g, epsilon)


# -- JSON ------------------------------------------------------------------


def _map_to_json(amap: AffineMap) -> dict:
    return {"A": amap.matrix.tolist(), "b": amap.offset.tolist()}


def _map_from_json(obj, path) -> AffineMap:
    if not isinstance(obj, dict) or "A" not in obj:
        raise ValidationError("expected an object with fields A (and b)", path)
    a = np.atleast_2d(np.asarray(obj["A"], dtype=float))
    b = np.asarray(obj.get("b", np.zeros(a.shape[0])), dtype=float)
    return AffineMap(a, b)


def problem_to_json(problem: EstimationProblem) -> dict:
    return {
        "set": set_to_json(problem.signal_set),
        "g": problem.g.tolist(),
        "epsilon": problem.epsilon,
        "channels": [
            {"family": grp.family.to_json(),
             "map": _map_to_json(grp.amap),
             "count": grp.count}
            for grp in problem.groups
        ],
    }


def problem_from_json(obj: dict) -> EstimationProblem:
    if not isinstance(obj, dict):
        raise ValidationError("problem document must be a JSON object")
    for key in ("set", "g", "epsilon"):
        if key not in obj:
            raise ValidationError("required field is missing", key)
    sset = set_from_json(obj["set"])
    g = np.asarray(obj["g"], dtype=float)
    epsilon = float(obj["epsilon"])

    channels = obj.get("channels")
    if channels is None:
        # Single-channel sugar: top-level family and map.
        if "family" not in obj:
            raise ValidationError("either 'channels' or a top-level 'family' "
                                  "entry is required", "channels")
        channels = [{"family": obj["family"], "map": obj.get("map"),
                     "count": obj.get("count", 1)}]
    groups = []
    for k, ch in enumerate(channels):
        path = f"channels[{k}]"
        if not isinstance(ch, dict) or "family" not in ch:
            raise ValidationError("each channel needs a 'family'", path)
        fobj = dict(ch["family"])
        if fobj.get("kind") == "gaussian-identity" and "dim" not in fobj:
            m = np.atleast_2d(np.asarray(ch["map"]["A"], float))
            fobj["dim"] = m.shape[0]
        family = fam.family_from_json(fobj, f"{path}.family")
        if ch.get("map") is None:
            raise ValidationError("each channel needs a 'map'", path)
        amap = _map_from_json(ch["map"], f"{path}.map")
        groups.append(ChannelGroup(family, amap, int(ch.get("count", 1))))
    try:
        return EstimationProblem(sset, tuple(groups), g, epsilon)
    except (ValidationError, DimensionMismatchError):
        raise
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def load_problem_file(path: str) -> tuple[EstimationProblem, dict]:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not valid JSON (line {exc.lineno}, "
                                  f"column {exc.colno}): {exc.msg}") from exc
    return problem_from_json(obj), obj
