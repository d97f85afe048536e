"""
Collective Spin Core

Pure-state dynamics of N two-level atoms in the symmetric (Dicke) manifold:
coherent states, rotations, one-axis twisting, moments, Wineland squeezing,
projective measurement statistics and the spherical Wigner function.

Conventions used everywhere in the package:
- amplitude index k = 0..N holds the projection m = k - N/2
- polar = 0 is m = +N/2, i.e. all atoms in |2>
- rotations are active and right-handed: exp(-i * angle * (axis . S))
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import gammaln, xlogy

from errors import (
    CalibrationError,
    DegenerateStateError,
    InvalidArgumentError,
    UnsupportedSizeError,
)

log = logging.getLogger(__name__)

# Normalization accepted when a state is constructed from user amplitudes
CONSTRUCTION_NORM_TOLERANCE = 1e-8

# |<S>| below this fraction of N/2 counts as a vanishing mean spin
DEGENERATE_MEAN_FRACTION = 1e-9

# Visualization scale for the Wigner function
WIGNER_MAX_ATOMS = 256

NAMED_AXES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
    "-x": (-1.0, 0.0, 0.0),
    "-y": (0.0, -1.0, 0.0),
    "-z": (0.0, 0.0, -1.0),
}

_AXIS_TOLERANCE = 1e-12

AxisLike = Union[str, Tuple[float, float, float], np.ndarray]


def _check_atom_count(atom_count) -> int:
    if isinstance(atom_count, (bool, np.bool_)) or not isinstance(atom_count, (int, np.integer)):
        raise InvalidArgumentError(f"atom count must be an integer, got {atom_count!r}")
    if atom_count < 1:
        raise InvalidArgumentError(f"atom count must be >= 1, got {atom_count}")
    return int(atom_count)


def _check_finite(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value}")
    return value


def spin_projections(atom_count: int) -> np.ndarray:
    """m values for amplitude indices 0..N."""
    n = _check_atom_count(atom_count)
    return np.arange(n + 1) - n / 2


def _ladder_coefficients(atom_count: int) -> np.ndarray:
    # <m+1|S_+|m> = sqrt(S(S+1) - m(m+1)) for m = -S .. S-1
    s = atom_count / 2
    m = np.arange(atom_count) - s
    return np.sqrt((s - m) * (s + m + 1))


@lru_cache(maxsize=16)
def spin_operators(atom_count: int) -> Tuple[sparse.csr_matrix, sparse.csr_matrix, sparse.csr_matrix]:
    """Sparse (S_x, S_y, S_z) in the Dicke basis."""
    n = _check_atom_count(atom_count)
    s_minus = sparse.diags(_ladder_coefficients(n), 1, format="csr")
    s_plus = s_minus.T.tocsr()
    s_x = ((s_plus + s_minus) / 2).tocsr()
    s_y = ((s_minus - s_plus) * 0.5j).tocsr()
    s_z = sparse.diags(spin_projections(n), format="csr")
    return s_x, s_y, s_z


# ---------- Types ----------

@dataclass(frozen=True, eq=False)
class DickeState:
    """Pure state of N two-level atoms in the symmetric manifold."""
    atom_count: int
    amplitudes: np.ndarray

    def __post_init__(self):
        n = _check_atom_count(self.atom_count)
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (n + 1,):
            raise InvalidArgumentError(
                f"expected {n + 1} amplitudes for N={n}, got shape {amps.shape}"
            )
        norm = float(np.vdot(amps, amps).real)
        if not np.isfinite(norm) or abs(norm - 1.0) > CONSTRUCTION_NORM_TOLERANCE:
            raise InvalidArgumentError(f"state is not normalized (norm^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "atom_count", n)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def spin(self) -> float:
        return self.atom_count / 2

    @property
    def m_values(self) -> np.ndarray:
        return spin_projections(self.atom_count)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True, eq=False)
class SpinMoments:
    mean_spin: np.ndarray   # (<S_x>, <S_y>, <S_z>)
    covariance: np.ndarray  # symmetrized, 3x3
    contrast_proxy: float   # |<S>| / (N/2)

    @property
    def azimuth(self) -> float:
        """Relative phase: azimuth of the mean spin."""
        return float(np.arctan2(self.mean_spin[1], self.mean_spin[0]))

    @property
    def polar(self) -> float:
        length = np.linalg.norm(self.mean_spin)
        if length == 0:
            raise DegenerateStateError("mean spin vanishes")
        return float(np.arccos(np.clip(self.mean_spin[2] / length, -1.0, 1.0)))


@dataclass(frozen=True)
class RotationSpec:
    axis: AxisLike
    angle: float

    def __post_init__(self):
        axis = self.axis
        if isinstance(axis, str):
            if axis not in NAMED_AXES:
                raise InvalidArgumentError(f"unknown axis name {axis!r}")
            axis = NAMED_AXES[axis]
        vec = np.asarray(axis, dtype=float).reshape(-1)
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise InvalidArgumentError(f"axis must be a finite 3-vector, got {self.axis!r}")
        length = float(np.linalg.norm(vec))
        if length == 0.0:
            raise InvalidArgumentError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(float(v) for v in vec / length))
        object.__setattr__(self, "angle", _check_finite("angle", self.angle))


@dataclass(frozen=True, eq=False)
class TransverseQuadratures:
    xi2: float
    min_variance: float
    max_variance: float
    min_axis: np.ndarray
    max_axis: np.ndarray
    mean_spin: np.ndarray


@dataclass(frozen=True)
class TwistCalibration:
    atom_count: int
    target_db: float
    mu: float
    xi2_db: float
    mu_grid: Tuple[float, ...]
    xi2_db_grid: Tuple[float, ...]


# ---------- States ----------

def coherent_state(atom_count: int, polar: float, azimuth: float = 0.0) -> DickeState:
    """Spin-coherent state pointing along (polar, azimuth)."""
    n = _check_atom_count(atom_count)
    polar = _check_finite("polar", polar)
    azimuth = _check_finite("azimuth", azimuth)

    k = np.arange(n + 1)
    cos_half, sin_half = np.cos(polar / 2), np.sin(polar / 2)
    # log-space binomial amplitudes stay finite at N ~ 10^3
    log_mag = (
        0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
        + xlogy(k, abs(cos_half))
        + xlogy(n - k, abs(sin_half))
    )
    sign = np.power(np.sign(cos_half) or 1.0, k) * np.power(np.sign(sin_half) or 1.0, n - k)
    amps = np.exp(log_mag) * sign * np.exp(-1j * (k - n / 2) * azimuth)
    amps /= np.linalg.norm(amps)
    return DickeState(n, amps)


def squeezed_state(atom_count: int, mu: float) -> DickeState:
    """Twisted coherent state with mean spin along +x."""
    return twist(coherent_state(atom_count, np.pi / 2, 0.0), mu)


# ---------- Rotations on raw amplitude arrays ----------
# Arrays are (N+1,) or (N+1, K); 2-D arrays hold one state per column.

@lru_cache(maxsize=16)
def _sx_eigenbasis(atom_count: int) -> np.ndarray:
    """Real orthogonal V with S_x = V diag(m) V^T."""
    off_diagonal = 0.5 * _ladder_coefficients(atom_count)
    eigenvalues, vectors = eigh_tridiagonal(np.zeros(atom_count + 1), off_diagonal)
    drift = float(np.max(np.abs(eigenvalues - spin_projections(atom_count))))
    if drift > 1e-6 * max(1.0, atom_count):
        log.warning("S_x spectrum drifts by %.3g from exact projections at N=%d", drift, atom_count)
    vectors.setflags(write=False)
    return vectors


def _real_matmul(matrix: np.ndarray, amps: np.ndarray) -> np.ndarray:
    return matrix @ amps.real + 1j * (matrix @ amps.imag)


def _apply_z(amps: np.ndarray, m: np.ndarray, angle) -> np.ndarray:
    phases = np.exp(-1j * np.multiply.outer(m, np.asarray(angle, dtype=float)))
    if amps.ndim == 2 and phases.ndim == 1:
        phases = phases[:, None]
    return amps * phases


def _apply_x(amps: np.ndarray, atom_count: int, angle: float) -> np.ndarray:
    vectors = _sx_eigenbasis(atom_count)
    m = spin_projections(atom_count)
    coefficients = _real_matmul(vectors.T, amps)
    coefficients = _apply_z(coefficients, m, angle)
    return _real_matmul(vectors, coefficients)


def _apply_y(amps: np.ndarray, atom_count: int, angle: float) -> np.ndarray:
    # exp(-i a S_y) = R_z(pi/2) exp(-i a S_x) R_z(-pi/2)
    m = spin_projections(atom_count)
    amps = _apply_z(amps, m, -np.pi / 2)
    amps = _apply_x(amps, atom_count, angle)
    return _apply_z(amps, m, np.pi / 2)


def apply_rotation(amps: np.ndarray, atom_count: int, axis: Tuple[float, float, float], angle: float) -> np.ndarray:
    """exp(-i angle axis.S) on one state or a column batch of states."""
    m = spin_projections(atom_count)
    ax, ay, az = axis
    if abs(ax) < _AXIS_TOLERANCE and abs(ay) < _AXIS_TOLERANCE:
        return _apply_z(amps, m, angle if az > 0 else -angle)

    azimuth = float(np.arctan2(ay, ax))
    if abs(az) < _AXIS_TOLERANCE:
        amps = _apply_z(amps, m, -azimuth)
        amps = _apply_x(amps, atom_count, angle)
        return _apply_z(amps, m, azimuth)

    # z-y-z: R_z(b) R_y(a) R_z(angle) R_y(-a) R_z(-b)
    polar = float(np.arccos(np.clip(az, -1.0, 1.0)))
    amps = _apply_z(amps, m, -azimuth)
    amps = _apply_y(amps, atom_count, -polar)
    amps = _apply_z(amps, m, angle)
    amps = _apply_y(amps, atom_count, polar)
    return _apply_z(amps, m, azimuth)


# ---------- Operations ----------

def rotate(state: DickeState, rot: RotationSpec) -> DickeState:
    if not isinstance(state, DickeState):
        raise InvalidArgumentError(f"expected a DickeState, got {type(state).__name__}")
    if not isinstance(rot, RotationSpec):
        raise InvalidArgumentError(f"expected a RotationSpec, got {type(rot).__name__}")
    amps = apply_rotation(state.amplitudes, state.atom_count, rot.axis, rot.angle)
    return DickeState(state.atom_count, amps)


def twist(state: DickeState, mu: float) -> DickeState:
    """One-axis twisting exp(-i mu S_z^2)."""
    mu = _check_finite("mu", mu)
    m = state.m_values
    return DickeState(state.atom_count, state.amplitudes * np.exp(-1j * mu * m**2))


def moments(state: DickeState) -> SpinMoments:
    psi = state.amplitudes
    images = [op @ psi for op in spin_operators(state.atom_count)]
    mean = np.array([np.vdot(psi, v).real for v in images])
    second = np.array([[np.vdot(a, b).real for b in images] for a in images])
    covariance = second - np.outer(mean, mean)
    covariance = 0.5 * (covariance + covariance.T)
    contrast = float(np.linalg.norm(mean) / state.spin)
    return SpinMoments(mean_spin=mean, covariance=covariance, contrast_proxy=contrast)


def _transverse_frame(unit: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    reference = np.array([0.0, 0.0, 1.0]) if abs(unit[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = reference - np.dot(reference, unit) * unit
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(unit, e1)


def transverse_quadratures(state: DickeState) -> TransverseQuadratures:
    """Extremal spin variances perpendicular to the mean spin."""
    mom = moments(state)
    length = float(np.linalg.norm(mom.mean_spin))
    if length <= DEGENERATE_MEAN_FRACTION * state.spin:
        raise DegenerateStateError(f"mean spin length {length:.3g} is zero for N={state.atom_count}")

    unit = mom.mean_spin / length
    e1, e2 = _transverse_frame(unit)
    cov = mom.covariance
    a = float(e1 @ cov @ e1)
    b = float(e1 @ cov @ e2)
    c = float(e2 @ cov @ e2)

    # closed-form eigen-decomposition of [[a, b], [b, c]]
    center = 0.5 * (a + c)
    radius = float(np.hypot(0.5 * (a - c), b))
    v_min = max(center - radius, 0.0)
    v_max = center + radius
    t = 0.5 * np.arctan2(2 * b, a - c)
    max_axis = np.cos(t) * e1 + np.sin(t) * e2
    min_axis = -np.sin(t) * e1 + np.cos(t) * e2

    return TransverseQuadratures(
        xi2=state.atom_count * v_min / length**2,
        min_variance=v_min,
        max_variance=v_max,
        min_axis=min_axis,
        max_axis=max_axis,
        mean_spin=mom.mean_spin,
    )


def squeezing_wineland(state: DickeState) -> float:
    """xi^2 = N min_perp var(S_perp) / |<S>|^2."""
    return float(transverse_quadratures(state).xi2)


def anti_squeezed_tilt(state: DickeState) -> float:
    """
    Angle (radians) of the anti-squeezed axis above the equatorial plane.

    Measured from the azimuthal direction z x <S>; positive tilts point
    toward +z. Returned in (-pi/2, pi/2].
    """
    quad = transverse_quadratures(state)
    horizontal = np.array([quad.mean_spin[0], quad.mean_spin[1], 0.0])
    if np.linalg.norm(horizontal) == 0:
        raise DegenerateStateError("mean spin has no equatorial component")
    azimuthal = np.cross([0.0, 0.0, 1.0], horizontal / np.linalg.norm(horizontal))
    along = float(quad.max_axis @ azimuthal)
    up = float(quad.max_axis[2])
    if along < 0:
        along, up = -along, -up
    return float(np.arctan2(up, along))


def measure_distribution(state: DickeState) -> np.ndarray:
    """P(m) for m = -N/2..N/2; N2 = N/2 + m atoms end up in |2>."""
    return np.abs(state.amplitudes) ** 2


# ---------- Wigner function ----------

@lru_cache(maxsize=8)
def _gram_polynomials(atom_count: int) -> np.ndarray:
    """
    Orthonormal discrete polynomials on the m grid, row k of degree k.

    Row k equals the diagonal of the multipole operator T_k0,
    (-1)^(S-m) <S m; S -m | k 0>, obtained from the Jacobi matrix of the
    uniform measure on m = -S..S.
    """
    size = atom_count + 1
    k = np.arange(1, size, dtype=float)
    off_diagonal = 0.5 * k * np.sqrt((size**2 - k**2) / (4 * k**2 - 1))
    _, vectors = eigh_tridiagonal(np.zeros(size), off_diagonal)
    vectors = vectors * np.sign(vectors[0])
    return vectors


@lru_cache(maxsize=8)
def _wigner_kernel(atom_count: int) -> np.ndarray:
    k = np.arange(atom_count + 1)
    weights = np.sqrt((2 * k + 1) / (4 * np.pi))
    return weights @ _gram_polynomials(atom_count)


def wigner(state: DickeState, polar, azimuth) -> np.ndarray:
    """
    Spherical Wigner function W = sum_kq rho_kq Y_kq(polar, azimuth).

    Uses orthonormal spherical harmonics, so the sphere integral of W is
    sqrt(4 pi / (N + 1)). Evaluated as a rotated diagonal kernel: for each
    direction the state is rotated back to +z and the populations are
    contracted with sum_k sqrt((2k+1)/4pi) T_k0.
    """
    n = state.atom_count
    if n > WIGNER_MAX_ATOMS:
        raise UnsupportedSizeError(f"Wigner function limited to N <= {WIGNER_MAX_ATOMS}, got {n}")

    polar, azimuth = np.broadcast_arrays(np.asarray(polar, dtype=float), np.asarray(azimuth, dtype=float))
    shape = polar.shape
    polar_flat, azimuth_flat = polar.ravel(), azimuth.ravel()

    kernel = _wigner_kernel(n)
    m = state.m_values
    out = np.empty(polar_flat.size)
    unique_polar, inverse = np.unique(polar_flat, return_inverse=True)
    inverse = inverse.reshape(-1)
    for i, theta in enumerate(unique_polar):
        cols = np.flatnonzero(inverse == i)
        block = state.amplitudes[:, None] * np.exp(1j * np.outer(m, azimuth_flat[cols]))
        block = _apply_y(block, n, -theta)
        out[cols] = kernel @ (np.abs(block) ** 2)
    return out.reshape(shape)


def wigner_grid(state: DickeState, n_polar: int = 61, n_azimuth: int = 121):
    """Regular (polar, azimuth) raster; values indexed [polar, azimuth]."""
    polar = np.linspace(0.0, np.pi, n_polar)
    azimuth = np.linspace(-np.pi, np.pi, n_azimuth)
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    return polar, azimuth, wigner(state, pp, aa)


# ---------- Squeezing helpers ----------

def to_db(ratio: float) -> float:
    if ratio <= 0:
        raise InvalidArgumentError(f"cannot express {ratio} in dB")
    return float(10 * np.log10(ratio))


def from_db(db: float) -> float:
    return float(10 ** (db / 10))


def standard_quantum_limit(atom_count: int) -> float:
    """Phase uncertainty 1/sqrt(N) in radians."""
    return float(1 / np.sqrt(_check_atom_count(atom_count)))


def twisted_mean_spin(atom_count: int, mu: float) -> float:
    """<S_x> of the twisted +x coherent state: S cos^(2S-1)(mu)."""
    n = _check_atom_count(atom_count)
    return float(n / 2 * np.cos(mu) ** (n - 1))


def one_axis_twisting_xi2(atom_count: int, mu: float) -> float:
    """Closed-form Wineland parameter of the twisted +x coherent state."""
    n = _check_atom_count(atom_count)
    if n == 1:
        return 1.0
    a = 1 - np.cos(2 * mu) ** (n - 2)
    b = 4 * np.sin(mu) * np.cos(mu) ** (n - 2)
    v_min = n / 4 * (1 + (n - 1) / 4 * (a - np.hypot(a, b)))
    mean = twisted_mean_spin(n, mu)
    if abs(mean) <= DEGENERATE_MEAN_FRACTION * n / 2:
        raise DegenerateStateError(f"mean spin vanishes at mu={mu}")
    return float(n * v_min / mean**2)


def twist_scan_limit(atom_count: int) -> float:
    """Upper end of the twist scans, beyond the xi^2 minimum."""
    return float(min(0.999 * np.pi / 2, 4.0 * atom_count ** (-2 / 3)))


def _xi2_db_of_twist(atom_count: int, mu: float) -> float:
    try:
        return to_db(squeezing_wineland(squeezed_state(atom_count, mu)))
    except (DegenerateStateError, InvalidArgumentError):
        return float("inf")


@lru_cache(maxsize=32)
def calibrate_twist(atom_count: int, target_db: float, grid_points: int = 400) -> TwistCalibration:
    """
    Smallest twist mu* with xi^2(mu*) = target_db.

    Scans xi^2 on a geometric mu grid, takes the first crossing and refines
    it with Brent's method.
    """
    n = _check_atom_count(atom_count)
    target_db = _check_finite("target_db", target_db)
    if target_db > 0:
        raise InvalidArgumentError(f"twisting cannot raise xi^2 above 0 dB (target {target_db} dB)")

    mu_grid = np.geomspace(1e-3 / n, twist_scan_limit(n), grid_points)
    curve = np.array([_xi2_db_of_twist(n, mu) for mu in mu_grid])

    if target_db == 0:
        log.info("Twist calibration N=%d: target 0 dB -> mu*=0", n)
        return TwistCalibration(n, target_db, 0.0, 0.0, tuple(mu_grid), tuple(curve))

    below = np.flatnonzero(curve <= target_db)
    if below.size == 0:
        raise CalibrationError(
            f"N={n}: xi^2 never reaches {target_db} dB (minimum {np.min(curve):.3f} dB)"
        )
    i = int(below[0])
    lower = 0.0 if i == 0 else float(mu_grid[i - 1])
    mu_star = brentq(
        lambda mu: _xi2_db_of_twist(n, mu) - target_db,
        lower, float(mu_grid[i]), xtol=1e-15, rtol=1e-13,
    )
    xi2_db = _xi2_db_of_twist(n, mu_star)
    log.info("Twist calibration N=%d: mu*=%.6g rad gives %.4f dB", n, mu_star, xi2_db)
    return TwistCalibration(n, target_db, float(mu_star), xi2_db, tuple(mu_grid), tuple(curve))


def match_twist_tilt(atom_count: int, tilt: float, grid_points: int = 400) -> float:
    """Twist giving the same anti-squeezed tilt at another atom number."""
    n = _check_atom_count(atom_count)
    tilt = _check_finite("tilt", tilt)
    mu_grid = np.geomspace(1e-4 / n, twist_scan_limit(n), grid_points)

    def tilt_gap(mu: float) -> float:
        return anti_squeezed_tilt(squeezed_state(n, mu)) - tilt

    previous = tilt_gap(mu_grid[0])
    for lo, hi in zip(mu_grid[:-1], mu_grid[1:]):
        current = tilt_gap(hi)
        if previous >= 0 > current or previous <= 0 < current:
            return float(brentq(tilt_gap, lo, hi, xtol=1e-15))
        previous = current
    raise CalibrationError(f"N={n}: no twist reproduces a tilt of {np.degrees(tilt):.2f} deg")
