"""
Sequence Engine

Declarative pulse sequences (rotations, twists, free evolution, transport,
microwave pulses, measurement) and their deterministic execution on the
collective spin. Every sequence starts with all atoms in |1> (m = -N/2).
"""

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

import spin_core
from errors import InvalidArgumentError, SequenceValidationError
from spin_core import DickeState, RotationSpec

log = logging.getLogger(__name__)

SEQUENCE_SCHEMA_VERSION = 1

CENTER = "center"

ETA_RANGE = (0.5, 1.0)

# Values quoted for the experiment; 'auto' alignment replaces them by default
QUOTED_ALIGNMENT_DEG = -12.0
QUOTED_COMBINED_ROTATION_DEG = 78.0

DEFAULT_SEQUENCE_PARAMS = {
    "atom_count": 1400,
    "target_squeezing_db": -4.3,     # calibrates mu* when twist_mu_rad is None
    "twist_mu_rad": None,
    "alignment_deg": "auto",          # rotation about x after the twist
    "combined_rotation_deg": "auto",  # alignment + center pulse in one
    "ramsey_time_s": None,            # scanning probe falls back to 100 us
    "transport_time_s": 20e-3,
    "probe_eta": 0.5,
    "mw_pulse_s": 80e-6,
    "mw_potential_hz": 0.0,
    "theta_rad": 0.0,
    "contrast_decay": 0.0,
}

SCANNING_RAMSEY_TIME_S = 100e-6

SEQUENCE_KINDS = ("scanning_probe", "fig3_squeezed", "fig3_coherent")
SENSING_MODES = ("pulse", "free")


# ---------- Steps ----------

@dataclass(frozen=True)
class Rotation:
    """Instantaneous pulse about a fixed axis, or about the state's center."""
    axis: Union[str, Tuple[float, float, float]]
    angle: float
    phase: float = 0.0  # rotates the pulse axis by -phase about z

    def __post_init__(self):
        if not (isinstance(self.axis, str) and self.axis == CENTER):
            spec = RotationSpec(self.axis, self.angle)
            object.__setattr__(self, "axis", spec.axis)
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "phase", float(self.phase))

    @classmethod
    def from_spec(cls, spec: RotationSpec, phase: float = 0.0) -> "Rotation":
        return cls(spec.axis, spec.angle, phase)

    @property
    def spec(self) -> RotationSpec:
        if self.axis == CENTER:
            raise InvalidArgumentError("center axis is only known once the sequence runs")
        return RotationSpec(self.axis, self.angle)


@dataclass(frozen=True)
class Twist:
    mu: float


@dataclass(frozen=True)
class FreeEvolution:
    duration_s: float
    detuning_hz: float = 0.0
    extra_phase: float = 0.0


@dataclass(frozen=True)
class Transport:
    duration_s: float
    from_eta: float
    to_eta: float


@dataclass(frozen=True)
class MwPulse:
    duration_s: float
    potential_hz: float  # V_mw / h


@dataclass(frozen=True)
class Measure:
    theta: float = 0.0  # phase offset added to the readout pulse


SequenceStep = Union[Rotation, Twist, FreeEvolution, Transport, MwPulse, Measure]

STEP_TYPES = (Rotation, Twist, FreeEvolution, Transport, MwPulse, Measure)


@dataclass(frozen=True)
class PulseSequence:
    steps: Tuple[SequenceStep, ...]
    atom_count: int
    contrast_decay: float = 0.0  # expected n scaled by exp(-contrast_decay)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True)
class SequenceResult:
    state: DickeState
    expected_n: float
    resolved: PulseSequence


@dataclass(frozen=True, eq=False)
class FringeCurve:
    thetas: np.ndarray
    expected_n: np.ndarray
    contrast: float
    phase: float
    offset: float = 0.0


# ---------- Validation ----------

def _numeric_fields(step) -> Dict[str, float]:
    return {f.name: getattr(step, f.name) for f in fields(step) if f.name != "axis"}


def validate_sequence(seq: PulseSequence) -> None:
    """Raise SequenceValidationError naming the first offending step."""
    if not isinstance(seq, PulseSequence):
        raise SequenceValidationError(f"expected a PulseSequence, got {type(seq).__name__}")
    try:
        spin_core._check_atom_count(seq.atom_count)
    except InvalidArgumentError as exc:
        raise SequenceValidationError(str(exc)) from None
    if not (np.isfinite(seq.contrast_decay) and seq.contrast_decay >= 0):
        raise SequenceValidationError(f"contrast_decay must be finite and >= 0, got {seq.contrast_decay}")
    if not seq.steps:
        raise SequenceValidationError("sequence has no steps")

    last = len(seq.steps) - 1
    eta, direction = 1.0, 0.0
    for index, step in enumerate(seq.steps):
        if not isinstance(step, STEP_TYPES):
            raise SequenceValidationError(f"unknown step type {type(step).__name__}", index)
        for name, value in _numeric_fields(step).items():
            if not isinstance(value, (int, float, np.number)) or not np.isfinite(value):
                raise SequenceValidationError(f"{name} must be finite, got {value!r}", index)
        if getattr(step, "duration_s", 0.0) < 0:
            raise SequenceValidationError(f"negative duration {step.duration_s} s", index)
        if isinstance(step, Measure) and index != last:
            raise SequenceValidationError("Measure must be the single terminal step", index)
        if isinstance(step, Transport):
            for value in (step.from_eta, step.to_eta):
                if not ETA_RANGE[0] <= value <= ETA_RANGE[1]:
                    raise SequenceValidationError(f"eta={value} outside {list(ETA_RANGE)}", index)
            if abs(step.from_eta - eta) > 1e-12:
                raise SequenceValidationError(
                    f"transport starts at eta={step.from_eta} but the trap is at eta={eta}", index
                )
            move = float(np.sign(step.to_eta - step.from_eta))
            if move and direction and move != direction:
                raise SequenceValidationError("transport reverses direction", index)
            direction = move or direction
            eta = step.to_eta

    if not isinstance(seq.steps[last], Measure):
        raise SequenceValidationError("sequence must end with a Measure step", last)
    if seq.steps[last].theta != 0 and _readout_index(seq.steps) is None:
        raise SequenceValidationError("theta given but no readout rotation precedes Measure", last)


def _readout_index(steps: Sequence[SequenceStep]) -> Optional[int]:
    for index in range(len(steps) - 1, -1, -1):
        if isinstance(steps[index], Rotation):
            return index
    return None


# ---------- Timing ----------

def interrogation_time(seq: PulseSequence) -> float:
    """T_R: free evolution plus microwave pulse durations."""
    return float(sum(s.duration_s for s in seq.steps if isinstance(s, (FreeEvolution, MwPulse))))


def sensing_time(seq: PulseSequence, mode: str) -> float:
    """Time the sensed shift acts: the mw pulses in 'pulse' mode, T_R in 'free' mode."""
    if mode == "pulse":
        duration = sum(s.duration_s for s in seq.steps if isinstance(s, MwPulse))
    elif mode == "free":
        duration = interrogation_time(seq)
    else:
        raise InvalidArgumentError(f"mode must be one of {SENSING_MODES}, got {mode!r}")
    if duration <= 0:
        raise InvalidArgumentError(f"sequence has no {mode} sensing time")
    return float(duration)


def transport_time(seq: PulseSequence) -> float:
    return float(sum(s.duration_s for s in seq.steps if isinstance(s, Transport)))


def total_time(seq: PulseSequence) -> float:
    """Window over which a quasi-static detuning accumulates phase."""
    return float(sum(s.duration_s for s in seq.steps if isinstance(s, (FreeEvolution, MwPulse, Transport))))


def final_eta(seq: PulseSequence) -> float:
    eta = 1.0
    for step in seq.steps:
        if isinstance(step, Transport):
            eta = step.to_eta
    return eta


def with_theta(seq: PulseSequence, theta: float) -> PulseSequence:
    steps = list(seq.steps)
    steps[-1] = Measure(float(theta))
    return replace(seq, steps=tuple(steps))


# ---------- Execution ----------

def _initial_amplitudes(atom_count: int) -> np.ndarray:
    amps = np.zeros(atom_count + 1, dtype=complex)
    amps[0] = 1.0
    return amps


def _center_axis(amps: np.ndarray, atom_count: int, index: int) -> Tuple[float, float, float]:
    mean = spin_core.moments(DickeState(atom_count, amps)).mean_spin
    horizontal = np.hypot(mean[0], mean[1])
    if horizontal <= spin_core.DEGENERATE_MEAN_FRACTION * atom_count / 2:
        raise SequenceValidationError("state has no equatorial mean spin to define its center", index)
    return (mean[0] / horizontal, mean[1] / horizontal, 0.0)


def _apply_pulse(amps, atom_count, axis, angle, phase):
    m = spin_core.spin_projections(atom_count)
    if phase:
        amps = spin_core._apply_z(amps, m, phase)
    amps = spin_core.apply_rotation(amps, atom_count, axis, angle)
    if phase:
        amps = spin_core._apply_z(amps, m, -phase)
    return amps


def evolve(
    steps: Sequence[SequenceStep],
    atom_count: int,
    amps: Optional[np.ndarray] = None,
    detuning_hz=0.0,
    interrogation_detuning_hz=0.0,
    readout_phase=0.0,
    resolve_center: bool = False,
) -> Tuple[np.ndarray, Tuple[SequenceStep, ...]]:
    """
    Run steps on raw amplitudes, one state per column for 2-D input.

    detuning_hz acts during every timed step (FreeEvolution, MwPulse,
    Transport); interrogation_detuning_hz only during FreeEvolution and
    MwPulse. readout_phase (rad) is a z phase carried into the readout pulse.
    All three may be per-column arrays. With resolve_center, 'center'
    rotations are fixed from the current mean spin (1-D input only) and
    the resolved steps are returned.
    """
    if amps is None:
        amps = _initial_amplitudes(atom_count)
    m = spin_core.spin_projections(atom_count)
    readout = _readout_index(steps)
    theta = steps[-1].theta if steps and isinstance(steps[-1], Measure) else 0.0
    detuning_hz = np.asarray(detuning_hz, dtype=float)
    interrogation_hz = detuning_hz + np.asarray(interrogation_detuning_hz, dtype=float)
    resolved: List[SequenceStep] = []

    for index, step in enumerate(steps):
        if isinstance(step, Rotation):
            if step.axis == CENTER:
                if not resolve_center or amps.ndim != 1:
                    raise SequenceValidationError("center axis must be resolved before batched runs", index)
                step = Rotation(_center_axis(amps, atom_count, index), step.angle, step.phase)
            if index == readout and np.any(readout_phase):
                amps = spin_core._apply_z(amps, m, readout_phase)
            phase = step.phase + (theta if index == readout else 0.0)
            amps = _apply_pulse(amps, atom_count, step.axis, step.angle, phase)
        elif isinstance(step, Twist):
            twist_phase = np.exp(-1j * step.mu * m**2)
            amps = amps * (twist_phase[:, None] if amps.ndim == 2 else twist_phase)
        elif isinstance(step, FreeEvolution):
            angle = 2 * np.pi * (step.detuning_hz + interrogation_hz) * step.duration_s + step.extra_phase
            amps = spin_core._apply_z(amps, m, angle)
        elif isinstance(step, MwPulse):
            angle = 2 * np.pi * (step.potential_hz + interrogation_hz) * step.duration_s
            amps = spin_core._apply_z(amps, m, angle)
        elif isinstance(step, Transport):
            # phase-neutral at the magic field; only injected detunings act here
            if np.any(detuning_hz):
                amps = spin_core._apply_z(amps, m, 2 * np.pi * detuning_hz * step.duration_s)
        resolved.append(step)
    return amps, tuple(resolved)


def _expected_n(amps: np.ndarray, atom_count: int, contrast_decay: float) -> float:
    m = spin_core.spin_projections(atom_count)
    probs = np.abs(amps) ** 2
    mean_sz = float(m @ probs / probs.sum())
    return float(np.exp(-contrast_decay) * 2 * mean_sz / atom_count)


def resolve_center_axes(seq: PulseSequence) -> PulseSequence:
    """Replace 'center' rotations by the fixed axes found on the noiseless run."""
    validate_sequence(seq)
    if not any(isinstance(s, Rotation) and s.axis == CENTER for s in seq.steps):
        return seq
    _, steps = evolve(seq.steps, seq.atom_count, resolve_center=True)
    return replace(seq, steps=steps)


def run_sequence(seq: PulseSequence) -> SequenceResult:
    """Noiseless execution; returns the pre-measurement state and <n>."""
    validate_sequence(seq)
    amps, steps = evolve(seq.steps, seq.atom_count, resolve_center=True)
    state = DickeState(seq.atom_count, amps)
    return SequenceResult(
        state=state,
        expected_n=_expected_n(state.amplitudes, seq.atom_count, seq.contrast_decay),
        resolved=replace(seq, steps=steps),
    )


def _sine_decomposition(thetas: np.ndarray, values: np.ndarray) -> Tuple[float, float, float]:
    design = np.column_stack([np.sin(thetas), np.cos(thetas), np.ones_like(thetas)])
    (a, b, offset), *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(np.hypot(a, b)), float(np.arctan2(b, a)), float(offset)


def scan_theta(
    seq: PulseSequence, thetas: Sequence[float], detuning_hz: float = 0.0, readout_phase: float = 0.0,
) -> FringeCurve:
    """
    Exact fringe n(theta) = C sin(theta + phi) + offset.

    detuning_hz is added during the interrogation steps, e.g. the nominal
    mean-field shift; readout_phase is added just before the readout pulse.
    """
    thetas = np.asarray(thetas, dtype=float)
    distinct = np.unique(np.round(np.mod(thetas, 2 * np.pi), 12))
    if thetas.ndim != 1 or distinct.size < 3:
        raise InvalidArgumentError("scan_theta needs at least 3 distinct theta values")
    resolved = resolve_center_axes(seq)

    values = np.empty(thetas.size)
    for i, theta in enumerate(thetas):
        amps, _ = evolve(with_theta(resolved, theta).steps, seq.atom_count,
                         interrogation_detuning_hz=detuning_hz, readout_phase=readout_phase)
        values[i] = _expected_n(amps, seq.atom_count, seq.contrast_decay)

    contrast, phase, offset = _sine_decomposition(thetas, values)
    return FringeCurve(thetas=thetas, expected_n=values, contrast=contrast, phase=phase, offset=offset)


def mid_fringe_theta(seq: PulseSequence, detuning_hz: float = 0.0) -> float:
    """theta putting the nominal <n> at zero on the rising slope."""
    curve = scan_theta(seq, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2], detuning_hz=detuning_hz)
    return float(np.angle(np.exp(-1j * curve.phase)))


def contrast_decay_for(target_contrast: float, state_contrast: float) -> float:
    """Decay exponent taking a state's contrast down to target_contrast."""
    if not 0 < target_contrast <= state_contrast:
        raise InvalidArgumentError(
            f"target contrast {target_contrast} must lie in (0, {state_contrast}]"
        )
    return float(-np.log(target_contrast / state_contrast))


# ---------- Experiment sequences ----------

def _resolve_params(params: Optional[dict]) -> dict:
    merged = dict(DEFAULT_SEQUENCE_PARAMS)
    for key, value in (params or {}).items():
        if key not in merged:
            raise InvalidArgumentError(f"unknown sequence parameter {key!r}")
        merged[key] = value
    return merged


def alignment_angles(atom_count: int, mu: float) -> Tuple[float, float]:
    """(alignment, combined) rotation angles in radians putting the anti-squeezed axis on the equator."""
    if mu == 0:
        return 0.0, np.pi / 2
    tilt = spin_core.anti_squeezed_tilt(spin_core.squeezed_state(atom_count, mu))
    return -tilt, np.pi / 2 - tilt


def build_paper_sequence(kind: str, params: Optional[dict] = None) -> PulseSequence:
    """
    Canonical sequences:

    - scanning_probe: pi/2 -> twist -> alignment about x -> transport ->
      pi/2 about the center -> T_R with a centered mw pulse -> pi/2(theta)
    - fig3_squeezed: pi/2 -> twist -> combined rotation about x -> T_R -> pi/2(theta)
    - fig3_coherent: as fig3_squeezed without the twist
    """
    if kind not in SEQUENCE_KINDS:
        raise InvalidArgumentError(f"unknown sequence kind {kind!r}; expected one of {SEQUENCE_KINDS}")
    p = _resolve_params(params)
    n = spin_core._check_atom_count(p["atom_count"])

    mu = p["twist_mu_rad"]
    if mu is None:
        mu = spin_core.calibrate_twist(n, float(p["target_squeezing_db"])).mu
    auto_alignment, auto_combined = alignment_angles(n, mu)
    alignment = auto_alignment if p["alignment_deg"] == "auto" else np.radians(float(p["alignment_deg"]))
    combined = auto_combined if p["combined_rotation_deg"] == "auto" else np.radians(float(p["combined_rotation_deg"]))

    ramsey_time = p["ramsey_time_s"]
    if ramsey_time is None:
        if kind != "scanning_probe":
            raise InvalidArgumentError(f"{kind} needs ramsey_time_s")
        ramsey_time = SCANNING_RAMSEY_TIME_S
    ramsey_time = float(ramsey_time)

    # south pole onto +x
    steps: List[SequenceStep] = [Rotation("y", -np.pi / 2)]
    if kind != "fig3_coherent":
        steps.append(Twist(float(mu)))

    if kind == "scanning_probe":
        mw_time = float(p["mw_pulse_s"])
        if mw_time > ramsey_time:
            raise InvalidArgumentError(f"mw pulse ({mw_time} s) longer than T_R ({ramsey_time} s)")
        gap = (ramsey_time - mw_time) / 2
        steps += [
            Rotation("x", alignment),
            Transport(float(p["transport_time_s"]), 1.0, float(p["probe_eta"])),
            Rotation(CENTER, np.pi / 2),
            FreeEvolution(gap),
            MwPulse(mw_time, float(p["mw_potential_hz"])),
            FreeEvolution(gap),
        ]
    else:
        steps += [Rotation("x", combined), FreeEvolution(ramsey_time)]

    steps += [Rotation("x", np.pi / 2), Measure(float(p["theta_rad"]))]
    seq = PulseSequence(tuple(steps), n, float(p["contrast_decay"]))
    validate_sequence(seq)
    log.debug("Built %s sequence: mu=%.4g, alignment=%.2f deg", kind, mu, np.degrees(alignment))
    return seq


# ---------- Serialization ----------

_STEP_TAGS = {
    Rotation: ("rotation", {"axis": "axis", "angle_rad": "angle", "phase_rad": "phase"}),
    Twist: ("twist", {"mu_rad": "mu"}),
    FreeEvolution: ("free_evolution", {"duration_s": "duration_s", "detuning_hz": "detuning_hz",
                                       "extra_phase_rad": "extra_phase"}),
    Transport: ("transport", {"duration_s": "duration_s", "from_eta": "from_eta", "to_eta": "to_eta"}),
    MwPulse: ("mw_pulse", {"duration_s": "duration_s", "potential_hz": "potential_hz"}),
    Measure: ("measure", {"theta_rad": "theta"}),
}
_TAG_TYPES = {tag: (cls, keys) for cls, (tag, keys) in _STEP_TAGS.items()}


def _step_to_dict(step: SequenceStep) -> dict:
    tag, keys = _STEP_TAGS[type(step)]
    entry = {"type": tag}
    for key, attr in keys.items():
        value = getattr(step, attr)
        entry[key] = value if isinstance(value, str) else (
            [float(v) for v in value] if isinstance(value, tuple) else float(value)
        )
    return entry


def sequence_to_dict(seq: PulseSequence) -> dict:
    return {
        "schema_version": SEQUENCE_SCHEMA_VERSION,
        "atom_count": int(seq.atom_count),
        "contrast_decay": float(seq.contrast_decay),
        "steps": [_step_to_dict(step) for step in seq.steps],
    }


def sequence_from_dict(doc: dict) -> PulseSequence:
    if not isinstance(doc, dict):
        raise SequenceValidationError("sequence document must be a mapping")
    unknown = set(doc) - {"schema_version", "atom_count", "contrast_decay", "steps"}
    if unknown:
        raise SequenceValidationError(f"unknown sequence keys {sorted(unknown)}")
    if doc.get("schema_version", SEQUENCE_SCHEMA_VERSION) != SEQUENCE_SCHEMA_VERSION:
        raise SequenceValidationError(f"unsupported schema_version {doc.get('schema_version')}")

    steps = []
    for index, entry in enumerate(doc.get("steps") or []):
        entry = dict(entry)
        tag = entry.pop("type", None)
        if tag not in _TAG_TYPES:
            raise SequenceValidationError(f"unknown step type {tag!r}", index)
        cls, keys = _TAG_TYPES[tag]
        extra = set(entry) - set(keys)
        if extra:
            raise SequenceValidationError(f"unknown keys {sorted(extra)} for {tag}", index)
        kwargs = {}
        for key, attr in keys.items():
            if key in entry:
                value = entry[key]
                kwargs[attr] = tuple(value) if isinstance(value, list) else value
        try:
            steps.append(cls(**kwargs))
        except (TypeError, ValueError) as exc:
            raise SequenceValidationError(str(exc), index) from None

    seq = PulseSequence(tuple(steps), doc.get("atom_count"), float(doc.get("contrast_decay", 0.0)))
    validate_sequence(seq)
    return seq


def save_sequence(seq: PulseSequence, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        yaml.safe_dump(sequence_to_dict(seq), f, sort_keys=False)


def load_sequence(path: Union[str, Path]) -> PulseSequence:
    with Path(path).open("r", encoding="utf-8") as f:
        return sequence_from_dict(yaml.safe_load(f))
