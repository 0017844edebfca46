"""
Problem class for delayed reaction-diffusion systems on an interval.

    du_i/dt = d_i u_i'' + f_i(w.t, x, u(t, x), u(t - 1, x)),   x in [0, l]

with Dirichlet, Neumann or Robin boundary closures per species, a torus
translation flow as driver and reaction terms taken from a typed catalog.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Mapping, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import CatalogError, ConfigError, ShapeMismatchError

TWO_PI = 2.0 * np.pi
MAX_POLY_DEGREE = 4
DIRICHLET_TOLERANCE = 1e-12


def _reduce_angles(angles: np.ndarray) -> np.ndarray:
    reduced = np.mod(angles, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2pi
    return np.where(reduced >= TWO_PI, reduced - TWO_PI, reduced)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DriverState:
    """A point w of the torus flow, moving with constant angular frequencies."""

    coordinates: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        coords = np.atleast_1d(np.array(self.coordinates, dtype=float))
        freqs = np.atleast_1d(np.array(self.frequencies, dtype=float))
        if coords.ndim != 1 or coords.shape != freqs.shape:
            raise ShapeMismatchError(
                f"driver has {coords.size} angles but {freqs.size} frequencies"
            )
        if not np.all(np.isfinite(freqs)):
            raise ConfigError("driver frequencies must be finite")
        object.__setattr__(self, "coordinates", _frozen(_reduce_angles(coords)))
        object.__setattr__(self, "frequencies", _frozen(freqs))

    @classmethod
    def autonomous(cls) -> "DriverState":
        return cls(np.zeros(0), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.coordinates.size

    def advance(self, t: float) -> "DriverState":
        if not np.isfinite(t):
            raise ValueError(f"cannot advance the driver by a non-finite time {t}")
        return DriverState(self.coordinates + self.frequencies * t, self.frequencies)

    def with_angles(self, angles) -> "DriverState":
        return DriverState(angles, self.frequencies)


def advance_driver(omega: DriverState, t: float) -> DriverState:
    return omega.advance(t)


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Equispaced nodes x_0 = 0 < ... < x_N = length."""

    length: float
    intervals: int

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError(f"mesh length must be positive, got {self.length}")
        if int(self.intervals) != self.intervals or self.intervals < 8:
            raise ConfigError(f"mesh needs at least 8 intervals, got {self.intervals}")

    @property
    def points(self) -> int:
        return self.intervals + 1

    @property
    def spacing(self) -> float:
        return self.length / self.intervals

    @cached_property
    def nodes(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, self.length, self.intervals + 1))


class BoundaryKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"


@dataclass(frozen=True)
class BoundarySpec:
    kinds: tuple[BoundaryKind, ...]
    robin_alpha: tuple[tuple[float, float], ...]

    def __post_init__(self):
        kinds = tuple(BoundaryKind(k) for k in self.kinds)
        object.__setattr__(self, "kinds", kinds)
        if len(self.robin_alpha) != len(kinds):
            raise ShapeMismatchError("one (left, right) Robin pair is needed per species")
        for i, (left, right) in enumerate(self.robin_alpha):
            if left < 0 or right < 0:
                raise ConfigError(f"robin_alpha of species {i} must be nonnegative")

    @classmethod
    def uniform(cls, kind, n: int, alpha: tuple[float, float] = (0.0, 0.0)) -> "BoundarySpec":
        return cls(tuple(BoundaryKind(kind) for _ in range(n)), tuple(alpha for _ in range(n)))

    def is_dirichlet(self, species: int) -> bool:
        return self.kinds[species] is BoundaryKind.DIRICHLET


# ---------------------------------------------------------------- coefficients

@dataclass(frozen=True)
class FourierMode:
    wave: tuple[int, ...]
    cos: float = 0.0
    sin: float = 0.0

    @property
    def amplitude(self) -> float:
        return abs(self.cos) + abs(self.sin)


@dataclass(frozen=True)
class Coefficient:
    """a(w, x) = (constant + sum of Fourier modes in the angles) * poly(x)."""

    constant: float = 0.0
    modes: tuple[FourierMode, ...] = ()
    poly: tuple[float, ...] = (1.0,)

    def driver_factor(self, angles: np.ndarray) -> float:
        value = self.constant
        for mode in self.modes:
            phase = float(np.dot(mode.wave, angles))
            value += mode.cos * np.cos(phase) + mode.sin * np.sin(phase)
        return value

    def spatial_factor(self, x: np.ndarray) -> np.ndarray:
        return npoly.polyval(x, self.poly)

    def __call__(self, angles: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.driver_factor(angles) * self.spatial_factor(x)

    @property
    def is_zero(self) -> bool:
        no_factor = self.constant == 0.0 and all(m.amplitude == 0.0 for m in self.modes)
        return no_factor or all(c == 0.0 for c in self.poly)

    @property
    def structurally_nonnegative(self) -> bool:
        """Sign audit valid for every angle and every x >= 0."""
        if self.is_zero:
            return True
        spread = sum(m.amplitude for m in self.modes)
        if self.constant - spread >= 0.0 and all(c >= 0.0 for c in self.poly):
            return True
        return self.constant + spread <= 0.0 and all(c <= 0.0 for c in self.poly)


def parse_coefficient(raw, where: str = "coefficient") -> Coefficient:
    if isinstance(raw, Coefficient):
        return raw
    if isinstance(raw, bool):
        raise CatalogError(f"{where}: booleans are not coefficients")
    if isinstance(raw, (int, float, np.integer, np.floating)):
        return Coefficient(constant=float(raw))
    if isinstance(raw, Mapping):
        unknown = set(raw) - {"constant", "modes", "poly"}
        if unknown:
            raise CatalogError(f"{where}: unknown keys {sorted(unknown)}")
        modes = []
        for k, mode in enumerate(raw.get("modes", [])):
            if not isinstance(mode, Mapping) or "wave" not in mode:
                raise CatalogError(f"{where}.modes[{k}] needs a 'wave' entry")
            extra = set(mode) - {"wave", "cos", "sin"}
            if extra:
                raise CatalogError(f"{where}.modes[{k}]: unknown keys {sorted(extra)}")
            wave = tuple(int(w) for w in mode["wave"])
            modes.append(FourierMode(wave, float(mode.get("cos", 0.0)), float(mode.get("sin", 0.0))))
        poly = tuple(float(c) for c in raw.get("poly", [1.0]))
        if not poly or len(poly) > MAX_POLY_DEGREE + 1:
            raise CatalogError(f"{where}: poly needs 1 to {MAX_POLY_DEGREE + 1} coefficients")
        return Coefficient(float(raw.get("constant", 0.0)), tuple(modes), poly)
    raise CatalogError(f"{where}: cannot read a coefficient from {raw!r}")


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """An array of coefficients evaluated together at a driver state and nodes."""

    name: str
    entries: tuple[Coefficient, ...]
    shape: tuple[int, ...]
    _spatial_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def parse(cls, name: str, raw, shape: tuple[int, ...]) -> "CoefficientTable":
        def walk(node, depth, where):
            if depth == len(shape):
                return [parse_coefficient(node, where)]
            if isinstance(node, np.ndarray):
                node = node.tolist()
            if not isinstance(node, (list, tuple)) or len(node) != shape[depth]:
                raise CatalogError(f"{where} must have shape {shape}")
            out = []
            for k, child in enumerate(node):
                out.extend(walk(child, depth + 1, f"{where}[{k}]"))
            return out

        return cls(name, tuple(walk(raw, 0, name)), tuple(shape))

    @classmethod
    def zeros(cls, name: str, shape: tuple[int, ...]) -> "CoefficientTable":
        return cls(name, tuple(Coefficient() for _ in range(int(np.prod(shape)))), tuple(shape))

    @cached_property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.entries)

    @cached_property
    def wave_dims(self) -> set[int]:
        return {len(m.wave) for c in self.entries for m in c.modes}

    def entry(self, *index) -> Coefficient:
        return self.entries[int(np.ravel_multi_index(index, self.shape))]

    def _spatial(self, x: np.ndarray) -> np.ndarray:
        key = x.tobytes()
        cached = self._spatial_cache.get(key)
        if cached is None:
            cached = np.stack([c.spatial_factor(x) for c in self.entries], axis=-1)
            self._spatial_cache[key] = cached
        return cached

    def evaluate(self, angles: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Values at every node, shape (P, *shape)."""
        factors = np.array([c.driver_factor(angles) for c in self.entries])
        return (self._spatial(x) * factors).reshape((x.size,) + self.shape)


# ---------------------------------------------------------------- reactions

class ReactionCatalog(str, Enum):
    LINEAR = "linear"
    DELAYED_LOGISTIC = "delayed_logistic"
    COOPERATIVE_LV = "cooperative_lv"
    CUSTOM = "custom"


# (table kind, required)
_CATALOG_TABLES = {
    ReactionCatalog.LINEAR: {"A": ("matrix", False), "B": ("matrix", False), "source": ("vector", False)},
    ReactionCatalog.DELAYED_LOGISTIC: {"a": ("vector", True), "b": ("vector", True)},
    ReactionCatalog.COOPERATIVE_LV: {
        "r": ("vector", True),
        "s": ("vector", True),
        "C": ("matrix", False),
        "E": ("matrix", False),
    },
    ReactionCatalog.CUSTOM: {},
}


@dataclass(frozen=True, eq=False)
class CustomReaction:
    """In-process reaction: vectorized f(angles, x, y, y_del) and its Jacobians."""

    name: str
    n: int
    func: Callable[..., np.ndarray]
    jacobian: Callable[..., tuple[np.ndarray, np.ndarray]]
    quasimonotone: bool = False


_CUSTOM_REACTIONS: dict[str, CustomReaction] = {}


def register_custom_reaction(reaction: CustomReaction) -> CustomReaction:
    _CUSTOM_REACTIONS[reaction.name] = reaction
    logging.debug(f"[Model] Registered custom reaction '{reaction.name}' (n={reaction.n})")
    return reaction


def _diag_matrix(values: np.ndarray) -> np.ndarray:
    points, n = values.shape
    out = np.zeros((points, n, n))
    idx = np.arange(n)
    out[:, idx, idx] = values
    return out


@dataclass(frozen=True, eq=False)
class ReactionTerm:
    catalog_id: ReactionCatalog
    n: int
    tables: Mapping[str, CoefficientTable]
    custom: Optional[CustomReaction] = None

    @classmethod
    def from_coefficients(cls, catalog, n: int, coefficients: Optional[Mapping] = None,
                          name: Optional[str] = None) -> "ReactionTerm":
        try:
            catalog_id = ReactionCatalog(catalog)
        except ValueError:
            raise CatalogError(f"unknown reaction catalog id '{catalog}'") from None
        coefficients = dict(coefficients or {})
        layout = _CATALOG_TABLES[catalog_id]

        if catalog_id is ReactionCatalog.CUSTOM:
            if coefficients:
                raise CatalogError("custom reactions take no coefficient tables")
            if name not in _CUSTOM_REACTIONS:
                raise CatalogError(f"no custom reaction registered under '{name}'")
            custom = _CUSTOM_REACTIONS[name]
            if custom.n != n:
                raise ShapeMismatchError(f"custom reaction '{name}' has n={custom.n}, problem has n={n}")
            return cls(catalog_id, n, {}, custom)

        unknown = set(coefficients) - set(layout)
        if unknown:
            raise CatalogError(f"{catalog_id.value}: unknown coefficient tables {sorted(unknown)}")
        tables = {}
        for key, (kind, required) in layout.items():
            shape = (n, n) if kind == "matrix" else (n,)
            if key in coefficients:
                tables[key] = CoefficientTable.parse(key, coefficients[key], shape)
            elif required:
                raise CatalogError(f"{catalog_id.value}: missing coefficient table '{key}'")
            else:
                tables[key] = CoefficientTable.zeros(key, shape)

        if catalog_id is ReactionCatalog.COOPERATIVE_LV:
            if any(not tables["C"].entry(i, i).is_zero for i in range(n)):
                raise CatalogError("cooperative_lv: the diagonal of C must be zero")
        return cls(catalog_id, n, tables)

    def validate_driver(self, dim: int) -> None:
        for table in self.tables.values():
            bad = table.wave_dims - {dim}
            if bad:
                raise CatalogError(
                    f"table '{table.name}' uses wave vectors of length {sorted(bad)}, driver has {dim} angles"
                )

    @cached_property
    def quasimonotone(self) -> bool:
        """Structural quasimonotonicity audit: off-diagonal D_y f >= 0 and D_yd f >= 0 everywhere."""
        n = self.n
        if self.catalog_id is ReactionCatalog.CUSTOM:
            return self.custom.quasimonotone
        if self.catalog_id is ReactionCatalog.DELAYED_LOGISTIC:
            return self.tables["b"].is_zero
        off, delayed = ("A", "B") if self.catalog_id is ReactionCatalog.LINEAR else ("C", "E")
        off_ok = all(
            self.tables[off].entry(i, j).structurally_nonnegative
            for i in range(n) for j in range(n) if i != j
        )
        return off_ok and all(c.structurally_nonnegative for c in self.tables[delayed].entries)

    def _check(self, x: np.ndarray, y: np.ndarray, y_del: np.ndarray) -> None:
        expected = (x.size, self.n)
        if y.shape != expected or y_del.shape != expected:
            raise ShapeMismatchError(
                f"reaction expects states of shape {expected}, got {y.shape} and {y_del.shape}"
            )

    def evaluate(self, omega: DriverState, x: np.ndarray, y: np.ndarray, y_del: np.ndarray) -> np.ndarray:
        """f at every node; x has shape (P,), y and y_del shape (P, n)."""
        self._check(x, y, y_del)
        angles = omega.coordinates
        cat = self.catalog_id
        if cat is ReactionCatalog.CUSTOM:
            return np.asarray(self.custom.func(angles, x, y, y_del), dtype=float)
        t = {k: table for k, table in self.tables.items() if not table.is_zero}
        out = np.zeros_like(y, dtype=float)
        if cat is ReactionCatalog.LINEAR:
            if "A" in t:
                out += np.einsum("pij,pj->pi", t["A"].evaluate(angles, x), y)
            if "B" in t:
                out += np.einsum("pij,pj->pi", t["B"].evaluate(angles, x), y_del)
            if "source" in t:
                out += t["source"].evaluate(angles, x)
        elif cat is ReactionCatalog.DELAYED_LOGISTIC:
            a = self.tables["a"].evaluate(angles, x)
            b = self.tables["b"].evaluate(angles, x)
            out = y * (a - b * y_del)
        else:
            r = self.tables["r"].evaluate(angles, x)
            s = self.tables["s"].evaluate(angles, x)
            out = y * (r - s * y)
            if "C" in t:
                out += np.einsum("pij,pj->pi", t["C"].evaluate(angles, x), y)
            if "E" in t:
                out += np.einsum("pij,pj->pi", t["E"].evaluate(angles, x), y_del)
        return out

    def jacobians(self, omega: DriverState, x: np.ndarray, y: np.ndarray,
                  y_del: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(D_y f, D_yd f) at every node, each of shape (P, n, n)."""
        self._check(x, y, y_del)
        angles = omega.coordinates
        cat = self.catalog_id
        if cat is ReactionCatalog.CUSTOM:
            jac_y, jac_d = self.custom.jacobian(angles, x, y, y_del)
            return np.asarray(jac_y, dtype=float), np.asarray(jac_d, dtype=float)
        if cat is ReactionCatalog.LINEAR:
            return self.tables["A"].evaluate(angles, x), self.tables["B"].evaluate(angles, x)
        if cat is ReactionCatalog.DELAYED_LOGISTIC:
            a = self.tables["a"].evaluate(angles, x)
            b = self.tables["b"].evaluate(angles, x)
            return _diag_matrix(a - b * y_del), _diag_matrix(-b * y)
        r = self.tables["r"].evaluate(angles, x)
        s = self.tables["s"].evaluate(angles, x)
        jac_y = self.tables["C"].evaluate(angles, x).copy()
        idx = np.arange(self.n)
        jac_y[:, idx, idx] = r - 2.0 * s * y
        return jac_y, self.tables["E"].evaluate(angles, x)

    def describe(self) -> str:
        if self.custom is not None:
            return f"custom:{self.custom.name}"
        parts = []
        for key in sorted(self.tables):
            for c in self.tables[key].entries:
                parts.append(f"{key}:{c.constant!r}:{c.poly!r}:{[(m.wave, m.cos, m.sin) for m in c.modes]!r}")
        return f"{self.catalog_id.value}|" + ";".join(parts)


def _point_state(reaction: ReactionTerm, x: float, y, y_del):
    y = np.asarray(y, dtype=float)
    y_del = np.asarray(y_del, dtype=float)
    if y.shape != (reaction.n,) or y_del.shape != (reaction.n,):
        raise ShapeMismatchError(f"expected vectors of length {reaction.n}")
    return np.array([float(x)]), y[None, :], y_del[None, :]


def eval_reaction(reaction: ReactionTerm, omega: DriverState, x: float, y, y_del) -> np.ndarray:
    xs, ys, ds = _point_state(reaction, x, y, y_del)
    return reaction.evaluate(omega, xs, ys, ds)[0]


def eval_jacobians(reaction: ReactionTerm, omega: DriverState, x: float, y,
                   y_del) -> tuple[np.ndarray, np.ndarray]:
    xs, ys, ds = _point_state(reaction, x, y, y_del)
    jac_y, jac_d = reaction.jacobians(omega, xs, ys, ds)
    return jac_y[0], jac_d[0]


# ---------------------------------------------------------------- segments

class Order(str, Enum):
    LEQ = "leq"
    GEQ = "geq"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True, eq=False)
class Segment:
    """Delay history: M+1 profiles of shape (N+1, n) at s_m = -1 + m/M."""

    history: np.ndarray

    def __post_init__(self):
        history = np.array(self.history, dtype=float)
        if history.ndim != 3:
            raise ShapeMismatchError(f"segment history must be 3-D, got shape {history.shape}")
        if history.shape[0] < 5:
            raise ConfigError(f"segments need M >= 4 delay steps, got M={history.shape[0] - 1}")
        if not np.all(np.isfinite(history)):
            raise ConfigError("segment contains non-finite values")
        object.__setattr__(self, "history", _frozen(history))

    @classmethod
    def constant_in_time(cls, profile, delay_steps: int) -> "Segment":
        profile = np.asarray(profile, dtype=float)
        if profile.ndim == 1:
            profile = profile[:, None]
        return cls(np.broadcast_to(profile, (delay_steps + 1,) + profile.shape))

    @property
    def delay_steps(self) -> int:
        return self.history.shape[0] - 1

    @property
    def species(self) -> int:
        return self.history.shape[2]

    @property
    def newest(self) -> np.ndarray:
        return self.history[-1]

    @property
    def oldest(self) -> np.ndarray:
        return self.history[0]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(-1.0, 0.0, self.delay_steps + 1)

    def norm(self) -> float:
        return float(np.max(np.abs(self.history)))

    def compare(self, other: "Segment") -> Order:
        if self.history.shape != other.history.shape:
            raise ShapeMismatchError(
                f"cannot compare segments of shapes {self.history.shape} and {other.history.shape}"
            )
        diff = other.history - self.history
        if not np.any(diff):
            return Order.EQUAL
        if np.all(diff >= 0.0):
            return Order.LEQ
        if np.all(diff <= 0.0):
            return Order.GEQ
        return Order.INCOMPARABLE

    def restrict(self, species) -> "Segment":
        return Segment(self.history[:, :, list(species)])

    def __add__(self, other: "Segment") -> "Segment":
        return Segment(self.history + other.history)

    def __sub__(self, other: "Segment") -> "Segment":
        return Segment(self.history - other.history)

    def __mul__(self, scale: float) -> "Segment":
        return Segment(self.history * scale)

    __rmul__ = __mul__


def segment_compare(phi: Segment, psi: Segment) -> Order:
    return phi.compare(psi)


def segment_norm(phi: Segment) -> float:
    return phi.norm()


# ---------------------------------------------------------------- problem

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    n: int
    diffusion: tuple[float, ...]
    mesh: Mesh1D
    boundary: BoundarySpec
    reaction: ReactionTerm
    driver: DriverState
    delay_steps: int

    def __post_init__(self):
        object.__setattr__(self, "diffusion", tuple(float(d) for d in self.diffusion))
        if len(self.diffusion) != self.n:
            raise ShapeMismatchError(f"{len(self.diffusion)} diffusion coefficients for n={self.n}")
        if any(not d > 0 for d in self.diffusion):
            raise ConfigError("diffusion coefficients must be strictly positive")
        if len(self.boundary.kinds) != self.n:
            raise ShapeMismatchError(f"{len(self.boundary.kinds)} boundary kinds for n={self.n}")
        if self.reaction.n != self.n:
            raise ShapeMismatchError(f"reaction has n={self.reaction.n}, problem has n={self.n}")
        if int(self.delay_steps) != self.delay_steps or self.delay_steps < 4:
            raise ConfigError(f"delay_steps must be an integer >= 4, got {self.delay_steps}")
        self.reaction.validate_driver(self.driver.dim)

    @property
    def step(self) -> float:
        return 1.0 / self.delay_steps

    @property
    def dirichlet_species(self) -> list[int]:
        return [i for i in range(self.n) if self.boundary.is_dirichlet(i)]

    @property
    def segment_shape(self) -> tuple[int, int, int]:
        return (self.delay_steps + 1, self.mesh.points, self.n)

    def validate_segment(self, segment: Segment, species=None) -> Segment:
        species = list(range(self.n)) if species is None else list(species)
        shape = (self.delay_steps + 1, self.mesh.points, len(species))
        if segment.history.shape != shape:
            raise ShapeMismatchError(f"segment has shape {segment.history.shape}, expected {shape}")
        for k, i in enumerate(species):
            if self.boundary.is_dirichlet(i):
                edge = np.abs(segment.history[:, [0, -1], k])
                if np.any(edge > DIRICHLET_TOLERANCE):
                    raise ConfigError(
                        f"species {i} has Dirichlet boundary conditions but the initial segment "
                        f"does not vanish at the boundary (max {edge.max():.3g})"
                    )
        return segment

    def positive_profile(self, species=None) -> np.ndarray:
        """Profile >> 0: one for Neumann/Robin species, sin(pi x / l) for Dirichlet ones."""
        species = list(range(self.n)) if species is None else list(species)
        x = self.mesh.nodes
        bump = np.sin(np.pi * x / self.mesh.length)
        bump[[0, -1]] = 0.0
        columns = [bump if self.boundary.is_dirichlet(i) else np.ones_like(x) for i in species]
        return np.stack(columns, axis=-1)

    def zero_segment(self, species=None) -> Segment:
        count = self.n if species is None else len(list(species))
        return Segment(np.zeros((self.delay_steps + 1, self.mesh.points, count)))

    def constant_segment(self, values) -> Segment:
        """Constant history; Dirichlet species get the sine shape instead of a constant."""
        profile = self.positive_profile() * np.asarray(values, dtype=float)[None, :]
        return Segment.constant_in_time(profile, self.delay_steps)

    def zero_is_solution(self, omegas, atol: float = 1e-12) -> bool:
        x = self.mesh.nodes
        zeros = np.zeros((x.size, self.n))
        return all(
            np.max(np.abs(self.reaction.evaluate(w, x, zeros, zeros)), initial=0.0) <= atol for w in omegas
        )

    def fingerprint(self) -> str:
        description = "|".join([
            f"n={self.n}",
            f"d={self.diffusion!r}",
            f"mesh={self.mesh.length!r}/{self.mesh.intervals}",
            f"bc={[k.value for k in self.boundary.kinds]!r}/{self.boundary.robin_alpha!r}",
            f"M={self.delay_steps}",
            f"driver={self.driver.coordinates.tolist()!r}/{self.driver.frequencies.tolist()!r}",
            self.reaction.describe(),
        ])
        return hashlib.sha256(description.encode()).hexdigest()
