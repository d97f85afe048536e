"""
Chip Field Module

Magnetostatics of the atom chip: filament Biot-Savart fields of the dc
and microwave wires, magnetic trap search with trap frequencies, the
eta-scaling transport towards the surface, and the differential ac-Zeeman
potential V_mw felt by the clock pair.

All lengths are meters, fields Tesla, currents Ampere (mw currents are
complex peak phasors).
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from scipy import constants, integrate
from scipy.optimize import linear_sum_assignment

from errors import (
    ConfigError,
    FieldDomainError,
    InvalidArgumentError,
    QuantizationAxisError,
    TrajectoryError,
    TrapSearchError,
)

log = logging.getLogger(__name__)

MU0 = constants.mu_0
MU_B = constants.physical_constants["Bohr magneton"][0]
RB87_MASS_KG = 86.909180531 * constants.atomic_mass
GF_MF = 0.5                       # |F=2, m_F=1>
TESLA_PER_GAUSS = 1e-4

# Differential shift of |1>-|2> per squared mw amplitude component, Hz/G^2
MW_SHIFT_HZ_PER_G2 = {
    "pi": 71e3,
    "sigma_plus": 46e3,
    "sigma_minus": 39e3,
}

RMS_TO_AMPLITUDE = np.sqrt(2)     # mw drive is quoted rms, fields use peak phasors

ON_WIRE_TOLERANCE_M = 1e-9
MIN_AXIS_FIELD_T = 1e-12
MAGIC_FIELD_T = 3.23e-4
MAGIC_FIELD_TOLERANCE_T = 5e-6

ETA_RANGE = (0.5, 1.0)
PROBE_RADII_M = (4.0e-6, 1.1e-6, 1.1e-6)

GEOMETRY_SCHEMA_VERSION = 1
DEFAULT_GEOMETRY_PATH = Path(__file__).parent / "data" / "chip_geometry.yaml"

# Trap search
GRADIENT_STEP_M = 1e-9
HESSIAN_STEP_M = 1e-8
CONVERGED_STEP_M = 1e-12
MAX_STEP_M = 10e-6
MAX_ITERATIONS = 100

SEGMENT_GROUPS = ("main", "dimple", "mw")

Vector = Union[Sequence[float], np.ndarray]


# ---------- Geometry ----------

@dataclass(frozen=True)
class WireSegment:
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    current: complex        # A; real for dc, peak phasor for mw
    role: str = "dc"        # 'dc' or 'mw'
    name: str = ""

    def __post_init__(self):
        start = tuple(float(v) for v in self.start)
        end = tuple(float(v) for v in self.end)
        if len(start) != 3 or len(end) != 3 or not np.all(np.isfinite(start + end)):
            raise InvalidArgumentError(f"segment {self.name!r}: endpoints must be finite 3-vectors")
        if np.linalg.norm(np.subtract(end, start)) == 0:
            raise InvalidArgumentError(f"segment {self.name!r} has zero length")
        if self.role not in ("dc", "mw"):
            raise InvalidArgumentError(f"segment role must be 'dc' or 'mw', got {self.role!r}")
        current = complex(self.current)
        if self.role == "dc":
            if current.imag != 0:
                raise InvalidArgumentError(f"dc segment {self.name!r} carries a complex current")
            current = current.real
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "current", current)


@dataclass(frozen=True)
class ChipGeometry:
    segments: Tuple[WireSegment, ...]
    bias: Tuple[float, float, float] = (0.0, 0.0, 0.0)   # uniform static field, T

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        bias = tuple(float(v) for v in self.bias)
        if len(bias) != 3 or not np.all(np.isfinite(bias)):
            raise InvalidArgumentError("bias must be a finite 3-vector")
        object.__setattr__(self, "bias", bias)

    def with_role(self, role: str) -> Tuple[WireSegment, ...]:
        return tuple(s for s in self.segments if s.role == role)

    def translated(self, offset: Vector) -> "ChipGeometry":
        offset = np.asarray(offset, dtype=float)
        moved = [replace(s, start=tuple(np.add(s.start, offset)), end=tuple(np.add(s.end, offset)))
                 for s in self.segments]
        return replace(self, segments=tuple(moved))


@dataclass(frozen=True)
class TrapConfig:
    eta: float
    main_current: float                  # A, I_L
    dimple_current: float                # A, I_D summed over the dimple wires
    bias: Tuple[float, float, float]     # T
    probe_radii: Tuple[float, float, float] = PROBE_RADII_M


@dataclass(frozen=True, eq=False)
class TrapSolution:
    position: Tuple[float, float, float]
    bottom_field: float                          # T
    frequencies: Tuple[float, float, float]      # Hz along x, y, z
    hessian: np.ndarray                          # of |B|, T/m^2
    iterations: int


@dataclass(frozen=True, eq=False)
class MwFieldSample:
    amplitude: np.ndarray   # complex phasor, T
    position: Tuple[float, float, float]

    def __post_init__(self):
        amplitude = np.asarray(self.amplitude, dtype=complex)
        if amplitude.shape != (3,) or not np.all(np.isfinite(amplitude)):
            raise InvalidArgumentError("mw amplitude must be a finite complex 3-vector")
        object.__setattr__(self, "amplitude", amplitude)


@dataclass(frozen=True)
class MwComponents:
    pi: float           # T
    sigma_plus: float
    sigma_minus: float

    def potential_hz(self) -> float:
        """Differential ac-Zeeman shift V_mw / h."""
        return float(sum(
            MW_SHIFT_HZ_PER_G2[name] * (getattr(self, name) / TESLA_PER_GAUSS) ** 2
            for name in MW_SHIFT_HZ_PER_G2
        ))


# ---------- Biot-Savart ----------

def _as_points(point: Vector) -> Tuple[np.ndarray, bool]:
    points = np.asarray(point, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[-1] != 3:
        raise InvalidArgumentError(f"points must have 3 coordinates, got shape {points.shape}")
    return points, single


def _unit_fields(segments: Sequence[WireSegment], points: np.ndarray, strict: bool = True) -> np.ndarray:
    """
    Field per Ampere of each finite segment, shape (points, segments, 3).

    B = mu0 I / (4 pi s) (cos a1 - cos a2) along dl x r, with s the distance
    to the segment line. Points on the line beyond the segment get zero.
    """
    starts = np.array([s.start for s in segments])
    ends = np.array([s.end for s in segments])
    d = ends - starts
    length = np.linalg.norm(d, axis=1)

    a1 = points[:, None, :] - starts[None]
    a2 = points[:, None, :] - ends[None]
    cross = np.cross(d[None], a1)
    cross_sq = np.sum(cross**2, axis=-1)
    along1 = np.sum(d[None] * a1, axis=-1)
    along2 = np.sum(d[None] * a2, axis=-1)
    r1 = np.linalg.norm(a1, axis=-1)
    r2 = np.linalg.norm(a2, axis=-1)

    distance = np.sqrt(cross_sq) / length
    on_wire = (distance < ON_WIRE_TOLERANCE_M) & (along1 >= -ON_WIRE_TOLERANCE_M * length) \
        & (along2 <= ON_WIRE_TOLERANCE_M * length)
    if strict and np.any(on_wire):
        p, s = np.argwhere(on_wire)[0]
        raise FieldDomainError(
            f"point {tuple(points[p])} lies on segment {segments[s].name or s}"
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        factor = along1 / (length * r1) - along2 / (length * r2)
        scale = np.where(cross_sq > 0, MU0 / (4 * np.pi) * factor * length / cross_sq, 0.0)
    field = cross * scale[..., None]
    if not strict:
        field[on_wire] = np.nan
    return field


def biot_savart(geom: ChipGeometry, point: Vector, strict: bool = True) -> np.ndarray:
    """
    Static field of the dc segments plus bias at one point (3,) or many (P, 3).

    strict=False marks on-wire points with NaN instead of raising.
    """
    points, single = _as_points(point)
    field = np.broadcast_to(np.asarray(geom.bias), points.shape).copy()
    segments = geom.with_role("dc")
    if segments:
        currents = np.array([s.current for s in segments], dtype=float)
        field += np.einsum("psk,s->pk", _unit_fields(segments, points, strict), currents)
    return field[0] if single else field


def mw_field(geom: ChipGeometry, point: Vector) -> np.ndarray:
    """Complex mw field phasor of the mw segments."""
    points, single = _as_points(point)
    segments = geom.with_role("mw")
    if not segments:
        field = np.zeros(points.shape, dtype=complex)
    else:
        currents = np.array([s.current for s in segments], dtype=complex)
        field = np.einsum("psk,s->pk", _unit_fields(segments, points), currents)
    return field[0] if single else field


def _quadrature_unit_field(segment: WireSegment, point: np.ndarray) -> np.ndarray:
    start, end = np.asarray(segment.start), np.asarray(segment.end)
    d = end - start

    def component(t, k):
        r = point - (start + t * d)
        return np.cross(d, r)[k] / np.linalg.norm(r) ** 3

    # help quad with the peak at the foot of the perpendicular
    foot = float(np.clip(np.dot(point - start, d) / np.dot(d, d), 0.0, 1.0))
    values = [integrate.quad(component, 0.0, 1.0, args=(k,), points=[foot], limit=200,
                             epsabs=0.0, epsrel=1e-11)[0] for k in range(3)]
    return MU0 / (4 * np.pi) * np.array(values)


def biot_savart_quadrature(geom: ChipGeometry, point: Vector, role: str = "dc") -> np.ndarray:
    """Independent numerical line integral of one point's field (bias added for dc)."""
    point = np.asarray(point, dtype=float)
    segments = geom.with_role(role)
    if segments:
        _unit_fields(segments, point[None])
    total = np.zeros(3, dtype=complex if role == "mw" else float)
    for segment in segments:
        total = total + segment.current * _quadrature_unit_field(segment, point)
    if role == "dc":
        total = total + np.asarray(geom.bias)
    return total


# ---------- Layout and eta scaling ----------

@dataclass(frozen=True)
class SegmentTemplate:
    name: str
    group: str          # main, dimple or mw
    weight: float       # fraction of the group current
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    phase: float = 0.0  # rad, mw segments only


@dataclass(frozen=True)
class ChipLayout:
    segments: Tuple[SegmentTemplate, ...]
    main_current: float      # A at eta = 1
    dimple_current: float    # A at eta = 1
    bias_x: float            # T, held constant
    bias_y: float            # T at eta = 1
    mw_current_rms: float    # A
    mw_coupling: float       # global coupling of drive into the waveguide
    surface_z: float = 0.0
    trap_guess: Tuple[float, float, float] = (0.0, 0.0, 40e-6)
    version: int = GEOMETRY_SCHEMA_VERSION

    @property
    def mw_amplitude(self) -> float:
        """Peak waveguide current, A."""
        return float(RMS_TO_AMPLITUDE * self.mw_current_rms * self.mw_coupling)

    def eta_config(self, eta: float) -> TrapConfig:
        eta = float(eta)
        if not ETA_RANGE[0] <= eta <= ETA_RANGE[1]:
            raise InvalidArgumentError(f"eta={eta} outside {list(ETA_RANGE)}")
        return TrapConfig(
            eta=eta,
            main_current=self.main_current * eta**2,
            dimple_current=self.dimple_current * eta**4,
            bias=(self.bias_x, self.bias_y * eta, 0.0),
        )

    def geometry(self, config: TrapConfig, mw_amplitude: Optional[float] = None) -> ChipGeometry:
        if mw_amplitude is None:
            mw_amplitude = self.mw_amplitude
        group_current = {"main": config.main_current, "dimple": config.dimple_current}
        segments = []
        for t in self.segments:
            if t.group == "mw":
                current = t.weight * np.exp(1j * t.phase) * mw_amplitude
                segments.append(WireSegment(t.start, t.end, current, "mw", t.name))
            else:
                segments.append(WireSegment(t.start, t.end, t.weight * group_current[t.group], "dc", t.name))
        return ChipGeometry(tuple(segments), config.bias)


_LAYOUT_KEYS = {"schema_version", "surface_z_m", "trap_guess_m", "base", "mw", "segments"}
_BASE_KEYS = {"main_current_a", "dimple_current_a", "bias_x_t", "bias_y_t"}
_MW_KEYS = {"current_rms_a", "coupling"}
_SEGMENT_KEYS = {"name", "group", "weight", "start_m", "end_m", "phase_rad"}


def _check_keys(doc, allowed: set, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return doc


def layout_from_dict(doc: dict) -> ChipLayout:
    _check_keys(doc, _LAYOUT_KEYS, "chip_geometry")
    if doc.get("schema_version") != GEOMETRY_SCHEMA_VERSION:
        raise ConfigError(
            f"chip_geometry.schema_version: expected {GEOMETRY_SCHEMA_VERSION}, got {doc.get('schema_version')!r}"
        )
    base = _check_keys(doc.get("base", {}), _BASE_KEYS, "chip_geometry.base")
    mw = _check_keys(doc.get("mw", {}), _MW_KEYS, "chip_geometry.mw")
    templates = []
    for i, entry in enumerate(doc.get("segments") or []):
        where = f"chip_geometry.segments[{i}]"
        _check_keys(entry, _SEGMENT_KEYS, where)
        if entry.get("group") not in SEGMENT_GROUPS:
            raise ConfigError(f"{where}.group: expected one of {SEGMENT_GROUPS}, got {entry.get('group')!r}")
        try:
            templates.append(SegmentTemplate(
                name=str(entry.get("name", f"segment_{i}")),
                group=entry["group"],
                weight=float(entry.get("weight", 1.0)),
                start=tuple(float(v) for v in entry["start_m"]),
                end=tuple(float(v) for v in entry["end_m"]),
                phase=float(entry.get("phase_rad", 0.0)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not templates:
        raise ConfigError("chip_geometry.segments: at least one segment required")
    try:
        return ChipLayout(
            segments=tuple(templates),
            main_current=float(base["main_current_a"]),
            dimple_current=float(base["dimple_current_a"]),
            bias_x=float(base["bias_x_t"]),
            bias_y=float(base["bias_y_t"]),
            mw_current_rms=float(mw.get("current_rms_a", 0.0)),
            mw_coupling=float(mw.get("coupling", 1.0)),
            surface_z=float(doc.get("surface_z_m", 0.0)),
            trap_guess=tuple(float(v) for v in doc.get("trap_guess_m", (0.0, 0.0, 40e-6))),
        )
    except KeyError as exc:
        raise ConfigError(f"chip_geometry.base: missing key {exc}") from None


def load_layout(path: Union[str, Path, None] = None) -> ChipLayout:
    path = Path(path) if path is not None else DEFAULT_GEOMETRY_PATH
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    return layout_from_dict(doc)


@lru_cache(maxsize=1)
def default_layout() -> ChipLayout:
    return load_layout(DEFAULT_GEOMETRY_PATH)


def eta_config(eta: float, layout: Optional[ChipLayout] = None) -> TrapConfig:
    """I_L ~ eta^2, I_D ~ eta^4, B_y ~ eta, B_x constant."""
    return (layout or default_layout()).eta_config(eta)


# ---------- Trap search ----------

def _field_sq(geom: ChipGeometry):
    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.sum(biot_savart(geom, points) ** 2, axis=-1)
    return evaluate


def _field_abs(geom: ChipGeometry):
    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(biot_savart(geom, points), axis=-1)
    return evaluate


def _gradient(func, r: np.ndarray, axes: Sequence[int], h: float) -> np.ndarray:
    offsets = []
    for i in axes:
        e = np.zeros(3)
        e[i] = h
        offsets += [r + e, r - e]
    values = func(np.array(offsets)).reshape(len(axes), 2)
    return (values[:, 0] - values[:, 1]) / (2 * h)


def _hessian(func, r: np.ndarray, axes: Sequence[int], h: float) -> np.ndarray:
    k = len(axes)
    unit = np.eye(3)[list(axes)] * h
    points = [r]
    for i in range(k):
        points += [r + unit[i], r - unit[i]]
    for i in range(k):
        for j in range(i + 1, k):
            points += [r + unit[i] + unit[j], r + unit[i] - unit[j],
                       r - unit[i] + unit[j], r - unit[i] - unit[j]]
    values = func(np.array(points))
    center = values[0]
    hess = np.empty((k, k))
    for i in range(k):
        hess[i, i] = (values[1 + 2 * i] - 2 * center + values[2 + 2 * i]) / h**2
    cursor = 1 + 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            pp, pm, mp, mm = values[cursor:cursor + 4]
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4 * h**2)
            cursor += 4
    return hess


def _descend(geom: ChipGeometry, start: np.ndarray, axes: Sequence[int], max_iterations: int):
    """Damped Newton on |B|^2 over the free axes."""
    func = _field_sq(geom)
    r = np.array(start, dtype=float)
    value = float(func(r[None])[0])
    trace = []
    for iteration in range(1, max_iterations + 1):
        grad = _gradient(func, r, axes, GRADIENT_STEP_M)
        hess = _hessian(func, r, axes, HESSIAN_STEP_M)
        eigenvalues, vectors = np.linalg.eigh(hess)
        floor = max(1e-9 * np.max(np.abs(eigenvalues)), np.finfo(float).tiny)
        step = -vectors @ ((vectors.T @ grad) / np.maximum(np.abs(eigenvalues), floor))
        norm = float(np.linalg.norm(step))
        if norm > MAX_STEP_M:
            step *= MAX_STEP_M / norm
            norm = MAX_STEP_M

        alpha, accepted = 1.0, False
        while alpha * norm >= CONVERGED_STEP_M * 1e-3:
            candidate = r.copy()
            candidate[list(axes)] += alpha * step
            try:
                trial = float(func(candidate[None])[0])
            except FieldDomainError:
                trial = np.inf
            if trial <= value:
                accepted = True
                break
            alpha /= 2
        moved = alpha * norm if accepted else 0.0
        if accepted:
            r, value = candidate, trial
        trace.append((iteration, tuple(r), value))
        log.debug("trap search %d: r=%s |B|^2=%.6g step=%.3g", iteration, r, value, moved)
        if moved < CONVERGED_STEP_M:
            return r, iteration, trace
    raise TrapSearchError(f"no convergence within {max_iterations} iterations", trace)


def _trap_solution(geom: ChipGeometry, r: np.ndarray, axes: Sequence[int], iterations: int, trace) -> TrapSolution:
    curvature = np.linalg.eigvalsh(_hessian(_field_sq(geom), r, axes, HESSIAN_STEP_M))
    if np.any(curvature <= 0):
        raise TrapSearchError("stationary point of |B| is not a minimum", trace)
    bottom = float(np.linalg.norm(biot_savart(geom, r)))
    frequencies = [np.nan, np.nan, np.nan]
    hess = np.full((len(axes), len(axes)), np.nan)
    if bottom > MIN_AXIS_FIELD_T:
        hess = _hessian(_field_abs(geom), r, axes, HESSIAN_STEP_M)
        eigenvalues, vectors = np.linalg.eigh(hess)
        if np.any(eigenvalues <= 0):
            raise TrapSearchError("potential Hessian is not positive definite", trace)
        freqs = np.sqrt(GF_MF * MU_B * eigenvalues / RB87_MASS_KG) / (2 * np.pi)
        rows, cols = linear_sum_assignment(-np.abs(vectors))
        for row, col in zip(rows, cols):
            frequencies[axes[row]] = float(freqs[col])
    return TrapSolution(tuple(float(v) for v in r), bottom, tuple(frequencies), hess, iterations)


def find_trap(geom: ChipGeometry, guess: Vector, max_iterations: int = MAX_ITERATIONS) -> TrapSolution:
    """
    Local minimum of |B| near guess, with trap frequencies.

    Frequencies follow from the Hessian of g_F m_F mu_B |B| for 87Rb,
    each eigenmode assigned to the coordinate axis it is closest to.
    """
    r, iterations, trace = _descend(geom, np.asarray(guess, dtype=float), (0, 1, 2), max_iterations)
    solution = _trap_solution(geom, r, (0, 1, 2), iterations, trace)
    log.debug("trap at %s, B0=%.4g T after %d iterations", solution.position, solution.bottom_field, iterations)
    return solution


def transverse_trap(geom: ChipGeometry, guess: Vector, max_iterations: int = MAX_ITERATIONS) -> TrapSolution:
    """Minimum of |B| in the y-z plane through guess (x held fixed); f_x is NaN."""
    r, iterations, trace = _descend(geom, np.asarray(guess, dtype=float), (1, 2), max_iterations)
    return _trap_solution(geom, r, (1, 2), iterations, trace)


def infinite_wire_trap_height(current: float, bias: float) -> float:
    """Distance where an infinite wire's field cancels a perpendicular bias."""
    return float(MU0 * abs(current) / (2 * np.pi * abs(bias)))


@dataclass(frozen=True)
class TrajectoryPoint:
    eta: float
    position: Tuple[float, float, float]
    surface_distance: float    # m
    bottom_field: float        # T
    frequencies: Tuple[float, float, float]


def smooth_ramp(eta_from: float, eta_to: float, steps: int) -> np.ndarray:
    """eta values along a smoothstep ramp with zero slope at both ends."""
    s = np.linspace(0.0, 1.0, steps)
    return eta_from + (eta_to - eta_from) * (3 * s**2 - 2 * s**3)


def transport_trajectory(
    eta_from: float,
    eta_to: float,
    steps: int,
    layout: Optional[ChipLayout] = None,
    guess: Optional[Vector] = None,
) -> List[TrajectoryPoint]:
    """Trap position along the eta ramp, each solve warm-started from the last."""
    if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)) or steps < 2:
        raise InvalidArgumentError(f"steps must be an integer >= 2, got {steps!r}")
    layout = layout or default_layout()
    etas = smooth_ramp(float(eta_from), float(eta_to), int(steps))
    for eta in (eta_from, eta_to):
        layout.eta_config(eta)

    position = np.asarray(guess if guess is not None else layout.trap_guess, dtype=float)
    previous_eta = 1.0 if guess is None else float(eta_from)
    points = []
    for eta in etas:
        # the trap height above the surface scales roughly with eta
        start = position.copy()
        start[2] = layout.surface_z + (position[2] - layout.surface_z) * eta / previous_eta
        geom = layout.geometry(layout.eta_config(eta))
        try:
            trap = find_trap(geom, start)
        except TrapSearchError as exc:
            raise TrajectoryError(str(exc), float(eta)) from exc
        distance = trap.position[2] - layout.surface_z
        if distance <= 0:
            raise TrajectoryError("trap minimum moved into the chip", float(eta))
        points.append(TrajectoryPoint(float(eta), trap.position, float(distance),
                                      trap.bottom_field, trap.frequencies))
        position, previous_eta = np.asarray(trap.position), eta
    log.info("Transport %.2f -> %.2f: distance %.1f -> %.1f um", eta_from, eta_to,
             points[0].surface_distance * 1e6, points[-1].surface_distance * 1e6)
    return points


# ---------- Microwave potential ----------

def _transverse_basis(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    reference = np.array([1.0, 0.0, 0.0])
    if 1 - abs(axis @ reference) < 1e-6:
        reference = np.array([0.0, 1.0, 0.0])
    e1 = reference - (reference @ axis) * axis
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def mw_components(sample: MwFieldSample, static_direction: Vector) -> MwComponents:
    """(B_pi, B_sigma+, B_sigma-) of the phasor relative to the static field direction."""
    axis = np.asarray(static_direction, dtype=float)
    norm = float(np.linalg.norm(axis))
    if not np.isfinite(norm) or norm < MIN_AXIS_FIELD_T:
        raise QuantizationAxisError("static field too small to define a quantization axis")
    axis = axis / norm
    e1, e2 = _transverse_basis(axis)
    b = sample.amplitude
    return MwComponents(
        pi=float(abs(axis @ b)),
        sigma_plus=float(abs((e1 - 1j * e2) @ b) / np.sqrt(2)),
        sigma_minus=float(abs((e1 + 1j * e2) @ b) / np.sqrt(2)),
    )


def mw_sample(geom: ChipGeometry, point: Vector) -> MwFieldSample:
    point = np.asarray(point, dtype=float)
    return MwFieldSample(mw_field(geom, point), tuple(point))


def v_mw(point: Vector, geom: ChipGeometry) -> float:
    """V_mw / h in Hz at point; quantization axis from the static field there."""
    static = biot_savart(geom, point)
    return mw_components(mw_sample(geom, point), static).potential_hz()


def v_mw_quadrature(point: Vector, geom: ChipGeometry) -> float:
    """V_mw / h with both fields from numerical line integrals."""
    point = np.asarray(point, dtype=float)
    static = biot_savart_quadrature(geom, point, "dc")
    phasor = biot_savart_quadrature(geom, point, "mw")
    return mw_components(MwFieldSample(phasor, tuple(point)), static).potential_hz()


def mw_potential_profile(
    etas: Sequence[float],
    mw_pulse_s: float = 80e-6,
    layout: Optional[ChipLayout] = None,
    mw_amplitude: Optional[float] = None,
    with_quadrature: bool = True,
) -> pd.DataFrame:
    """
    V_mw and the phase 2 pi V_mw T_mw at the trap for each eta.

    Traps are found along a ramp from eta = 1 so every position is
    reached the way transport reaches it.
    """
    layout = layout or default_layout()
    etas = np.asarray(etas, dtype=float)
    rows = []
    guess = np.asarray(layout.trap_guess, dtype=float)
    previous = 1.0
    for eta in sorted(etas, reverse=True):
        path = transport_trajectory(previous, eta, 3, layout, guess) if eta != previous else None
        geom = layout.geometry(layout.eta_config(eta), mw_amplitude)
        trap = find_trap(geom, path[-1].position if path else guess)
        v = v_mw(trap.position, geom)
        row = {
            "eta": float(eta),
            "distance_m": trap.position[2] - layout.surface_z,
            "x_m": trap.position[0],
            "y_m": trap.position[1],
            "z_m": trap.position[2],
            "bottom_field_t": trap.bottom_field,
            "v_mw_hz": v,
            "delta_phi_rad": 2 * np.pi * v * mw_pulse_s,
        }
        if with_quadrature:
            row["delta_phi_quadrature_rad"] = 2 * np.pi * v_mw_quadrature(trap.position, geom) * mw_pulse_s
        rows.append(row)
        guess, previous = np.asarray(trap.position), eta
    return pd.DataFrame(rows).sort_values("eta", ascending=False).reset_index(drop=True)


def field_map(geom: ChipGeometry, xs: Vector, ys: Vector, zs: Vector) -> pd.DataFrame:
    """Static field on a regular grid; on-wire nodes are NaN."""
    grid = np.stack(np.meshgrid(np.asarray(xs, float), np.asarray(ys, float),
                                np.asarray(zs, float), indexing="ij"), axis=-1).reshape(-1, 3)
    field = biot_savart(geom, grid, strict=False)
    return pd.DataFrame({
        "x_m": grid[:, 0], "y_m": grid[:, 1], "z_m": grid[:, 2],
        "bx_t": field[:, 0], "by_t": field[:, 1], "bz_t": field[:, 2],
        "b_t": np.linalg.norm(field, axis=1),
    })
