"""
Monte-Carlo Shot Generation

Turns a pulse sequence and a noise model into simulated measurement
records: shot-to-shot atom-number preparation noise, quasi-static
technical detuning, the atom-number dependent mean-field shift, projection
noise, optional per-atom dephasing and Gaussian detection noise.

Random numbers come from numpy's counter-based Philox generator keyed by
(base_seed, shot_index); every noise channel owns its own counter block,
so a record never depends on evaluation order or thread count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import sequence_engine as engine
from errors import InvalidArgumentError
from sequence_engine import PulseSequence

log = logging.getLogger(__name__)

# Counter word 3 selects the stream; draws advance word 0
CHANNELS = {
    "preparation": 0,
    "technical": 1,
    "projection": 2,
    "dephasing": 3,
    "detection": 4,
}

SEED_LIMIT = 2**64

# Operating points where detection noise is quoted
NEAR_ETA = 1.0
FAR_ETA = 0.5


def channel_generator(seed: int, shot_index: int, channel: str) -> np.random.Generator:
    """Independent Philox stream for one (seed, shot, channel)."""
    key = np.array([seed, shot_index], dtype=np.uint64)
    counter = np.array([0, 0, 0, CHANNELS[channel]], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _check_seed(name: str, value) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if not 0 <= int(value) < SEED_LIMIT:
        raise InvalidArgumentError(f"{name} must lie in [0, 2**64), got {value}")
    return int(value)


@dataclass(frozen=True)
class NoiseModel:
    mean_N: int = 1400                      # atoms
    prep_sigma_N: float = 40.0              # atoms, shot-to-shot preparation
    det_sigma_N1: float = 5.7               # atoms, detection noise on |1>
    det_sigma_N2: float = 4.2               # atoms, detection noise on |2>
    det_sigma_n_far: Optional[float] = 6.5e-3  # imbalance noise at eta = 0.5
    tech_sigma_f: float = 0.15              # Hz rms, quasi-static detuning
    meanfield_coeff: float = 5.1e-3         # Hz per atom
    meanfield_transport_fraction: float = 0.0  # share of transport time whose mean-field phase reaches readout
    correction_enabled: bool = True
    imaging_alpha: float = 1.0              # detected / true atom number

    def __post_init__(self):
        if isinstance(self.mean_N, bool) or not isinstance(self.mean_N, (int, np.integer)) or self.mean_N < 1:
            raise InvalidArgumentError(f"mean_N must be a positive integer, got {self.mean_N!r}")
        object.__setattr__(self, "mean_N", int(self.mean_N))
        for name in ("prep_sigma_N", "det_sigma_N1", "det_sigma_N2", "tech_sigma_f", "meanfield_coeff"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)
        if self.det_sigma_n_far is not None:
            far = float(self.det_sigma_n_far)
            if not np.isfinite(far) or far < 0:
                raise InvalidArgumentError(f"det_sigma_n_far must be finite and >= 0, got {far}")
            object.__setattr__(self, "det_sigma_n_far", far)
        fraction = float(self.meanfield_transport_fraction)
        if not 0 <= fraction <= 1:
            raise InvalidArgumentError(f"meanfield_transport_fraction must lie in [0, 1], got {fraction}")
        object.__setattr__(self, "meanfield_transport_fraction", fraction)
        alpha = float(self.imaging_alpha)
        if not np.isfinite(alpha) or alpha <= 0:
            raise InvalidArgumentError(f"imaging_alpha must be > 0, got {alpha}")
        object.__setattr__(self, "imaging_alpha", alpha)
        object.__setattr__(self, "correction_enabled", bool(self.correction_enabled))

    @classmethod
    def noiseless(cls, mean_N: int = 1400) -> "NoiseModel":
        return cls(mean_N=mean_N, prep_sigma_N=0.0, det_sigma_N1=0.0, det_sigma_N2=0.0,
                   det_sigma_n_far=None, tech_sigma_f=0.0, meanfield_coeff=0.0,
                   correction_enabled=False)

    @property
    def detection_sigma_n(self) -> float:
        """Imbalance noise from detection at eta = 1 and n = 0."""
        return float(np.hypot(self.det_sigma_N1, self.det_sigma_N2) / self.mean_N)

    def detection_sigmas(self, eta: float = NEAR_ETA) -> Tuple[float, float]:
        """(sigma_N1, sigma_N2) at trap position eta, linear in eta between the quoted points."""
        near = self.detection_sigma_n
        if self.det_sigma_n_far is None or near == 0:
            return self.det_sigma_N1, self.det_sigma_N2
        weight = float(np.clip((NEAR_ETA - eta) / (NEAR_ETA - FAR_ETA), 0.0, 1.0))
        scale = (near + weight * (self.det_sigma_n_far - near)) / near
        return self.det_sigma_N1 * scale, self.det_sigma_N2 * scale


@dataclass(frozen=True)
class ShotRecord:
    N1_detected: float      # atoms, as detected (before any alpha correction)
    N2_detected: float
    theta: float            # rad
    true_N: int             # atoms
    tech_phase: float       # rad, quasi-static detuning x timed window
    meanfield_phase: float  # rad, 2 pi coeff true_N over the mean-field window
    n_raw: float            # (N2 - N1) / (N1 + N2) of the detected counts
    n: float                # n_raw after the optional mean-field correction
    seed: int
    shot_index: int
    m: float                # sampled S_z projection before detection
    clamped: bool = False
    corrected: bool = False

    @property
    def detected_N(self) -> float:
        return self.N1_detected + self.N2_detected


def sequence_descriptor(seq: PulseSequence) -> dict:
    """Sequence identity shared by every record of a dataset (theta removed)."""
    return engine.sequence_to_dict(engine.with_theta(seq, 0.0))


@dataclass(frozen=True, eq=False)
class Dataset:
    records: Tuple[ShotRecord, ...]
    sequence: dict
    noise: NoiseModel

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def n_values(self, corrected: bool = True) -> np.ndarray:
        return np.array([r.n if corrected else r.n_raw for r in self.records])

    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def detected_N(self) -> np.ndarray:
        return np.array([r.detected_N for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records])

    @classmethod
    def merge(cls, datasets: Sequence["Dataset"]) -> "Dataset":
        if not datasets:
            raise InvalidArgumentError("nothing to merge")
        first = datasets[0]
        for other in datasets[1:]:
            if other.sequence != first.sequence or other.noise != first.noise:
                raise InvalidArgumentError("datasets differ in sequence or noise model")
        records = [r for d in datasets for r in d.records]
        return cls(tuple(records), first.sequence, first.noise)


@dataclass(frozen=True)
class CorrectedShot:
    n: float
    phase: float       # rad, inferred phase after correction
    correction: float  # rad, subtracted mean-field phase


def mean_field_correct(
    record: ShotRecord,
    coeff: float,
    ref_N: float,
    T_R: float,
    contrast: float = 1.0,
    fringe_angle: float = 0.0,
    imaging_alpha: float = 1.0,
) -> CorrectedShot:
    """
    Remove the shot's excess mean-field phase 2 pi coeff (N_det - ref_N) T_R.

    The phase is inferred from n_raw on the fringe branch selected by the
    nominal fringe angle theta + phi.
    """
    if not contrast > 0:
        raise InvalidArgumentError(f"contrast must be > 0 to infer a phase, got {contrast}")
    detected_N = record.detected_N / imaging_alpha
    phase = float(np.arcsin(np.clip(record.n_raw / contrast, -1.0, 1.0)))
    if np.cos(fringe_angle) < 0:
        phase = np.pi - phase
    correction = 2 * np.pi * coeff * (detected_N - ref_N) * T_R
    return CorrectedShot(n=float(contrast * np.sin(phase - correction)),
                         phase=float(phase - correction), correction=float(correction))


# ---------- Batched execution ----------

@dataclass(frozen=True)
class ExperimentJob:
    seq: PulseSequence
    noise: NoiseModel
    shots: int
    base_seed: int
    shot_offset: int = 0


@dataclass(frozen=True)
class _Nominal:
    resolved: PulseSequence
    contrast: float
    fringe_phase: float     # phi of the nominal fringe, mean-field at mean_N included
    interrogation_s: float
    carried_s: float        # transport time whose mean-field phase reaches readout
    total_s: float
    eta: float

    @property
    def meanfield_s(self) -> float:
        return self.interrogation_s + self.carried_s


@lru_cache(maxsize=64)
def _nominal(seq: PulseSequence, noise: NoiseModel) -> _Nominal:
    if noise.mean_N != seq.atom_count:
        raise InvalidArgumentError(
            f"noise model mean_N={noise.mean_N} differs from sequence atom_count={seq.atom_count}"
        )
    resolved = engine.resolve_center_axes(seq)
    carried = noise.meanfield_transport_fraction * engine.transport_time(seq)
    shift = noise.meanfield_coeff * noise.mean_N
    curve = engine.scan_theta(
        resolved, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2],
        detuning_hz=shift, readout_phase=2 * np.pi * shift * carried,
    )
    return _Nominal(
        resolved=resolved,
        contrast=curve.contrast,
        fringe_phase=curve.phase,
        interrogation_s=engine.interrogation_time(seq),
        carried_s=carried,
        total_s=engine.total_time(seq),
        eta=engine.final_eta(seq),
    )


def nominal_readout(seq: PulseSequence, noise: NoiseModel) -> Tuple[float, float]:
    """(contrast, fringe phase) of the sequence at the mean atom number."""
    nominal = _nominal(engine.with_theta(seq, 0.0), noise)
    return nominal.contrast, nominal.fringe_phase


def mid_fringe_sequence(seq: PulseSequence, noise: NoiseModel) -> PulseSequence:
    """Copy of seq with theta at the nominal zero crossing (rising slope)."""
    _, phase = nominal_readout(seq, noise)
    return engine.with_theta(seq, float(np.angle(np.exp(-1j * phase))))


def _draw_conditions(noise: NoiseModel, seed: int, shot_index: int) -> Tuple[int, float]:
    prep = channel_generator(seed, shot_index, "preparation")
    true_N = max(1, int(np.rint(prep.normal(noise.mean_N, noise.prep_sigma_N))))
    delta_f = float(channel_generator(seed, shot_index, "technical").normal(0.0, noise.tech_sigma_f))
    return true_N, delta_f


def _finish_shot(
    job: ExperimentJob,
    nominal: _Nominal,
    theta: float,
    shot_index: int,
    true_N: int,
    delta_f: float,
    probs: np.ndarray,
) -> ShotRecord:
    noise, seed = job.noise, job.base_seed

    probs = probs / probs.sum()
    k = int(channel_generator(seed, shot_index, "projection").choice(true_N + 1, p=probs))
    n2, n1 = k, true_N - k

    gamma = job.seq.contrast_decay
    if gamma > 0:
        # each atom is randomized with probability 1 - exp(-gamma)
        rng = channel_generator(seed, shot_index, "dephasing")
        randomized = int(rng.binomial(true_N, 1 - np.exp(-gamma)))
        if randomized:
            taken_from_2 = int(rng.hypergeometric(n2, n1, randomized))
            back_to_2 = int(rng.binomial(randomized, 0.5))
            n2 = n2 - taken_from_2 + back_to_2
            n1 = true_N - n2

    sigma1, sigma2 = noise.detection_sigmas(nominal.eta)
    detection = channel_generator(seed, shot_index, "detection")
    det1 = noise.imaging_alpha * n1 + detection.normal(0.0, sigma1)
    det2 = noise.imaging_alpha * n2 + detection.normal(0.0, sigma2)
    clamped = det1 < 0 or det2 < 0
    det1, det2 = max(det1, 0.0), max(det2, 0.0)
    total = det1 + det2
    n_raw = (det2 - det1) / total if total > 0 else 0.0

    record = ShotRecord(
        N1_detected=float(det1),
        N2_detected=float(det2),
        theta=float(theta),
        true_N=true_N,
        tech_phase=float(2 * np.pi * delta_f * nominal.total_s),
        meanfield_phase=float(2 * np.pi * noise.meanfield_coeff * true_N * nominal.meanfield_s),
        n_raw=float(n_raw),
        n=float(n_raw),
        seed=seed,
        shot_index=shot_index,
        m=float(k - true_N / 2),
        clamped=bool(clamped or total <= 0),
    )
    if noise.correction_enabled and noise.meanfield_coeff > 0 and nominal.meanfield_s > 0:
        fixed = mean_field_correct(
            record, noise.meanfield_coeff, noise.mean_N, nominal.meanfield_s,
            contrast=nominal.contrast, fringe_angle=theta + nominal.fringe_phase,
            imaging_alpha=noise.imaging_alpha,
        )
        record = replace(record, n=fixed.n, corrected=True)
    return record


def _simulate_atom_number(true_N: int, members: List[Tuple[int, List[int]]], jobs, nominals, conditions):
    """All shots of all jobs that drew this atom number."""
    out = []
    for job_index, positions in members:
        job, nominal = jobs[job_index], nominals[job_index]
        deltas = np.array([conditions[job_index][p][1] for p in positions])
        amps = np.zeros((true_N + 1, len(positions)), dtype=complex)
        amps[0] = 1.0
        shift = job.noise.meanfield_coeff * true_N
        amps, _ = engine.evolve(
            nominal.resolved.steps, true_N, amps,
            detuning_hz=deltas,
            interrogation_detuning_hz=shift,
            readout_phase=2 * np.pi * shift * nominal.carried_s,
        )
        probs = np.abs(amps) ** 2
        theta = job.seq.steps[-1].theta
        for column, position in enumerate(positions):
            shot_index = job.shot_offset + position
            record = _finish_shot(job, nominal, theta, shot_index, true_N, deltas[column], probs[:, column])
            out.append((job_index, position, record))
    return out


def run_batch(jobs: Sequence[ExperimentJob], threads: int = 1) -> List[Dataset]:
    """
    Simulate several experiments at once.

    Shots are grouped by their drawn atom number so each rotation generator
    is diagonalized once per batch; threads only changes speed.
    """
    jobs = list(jobs)
    for job in jobs:
        if isinstance(job.shots, bool) or not isinstance(job.shots, (int, np.integer)) or job.shots < 1:
            raise InvalidArgumentError(f"shots must be a positive integer, got {job.shots!r}")
        _check_seed("base_seed", job.base_seed)
        _check_seed("shot_offset", job.shot_offset)
        _check_seed("shot index", job.shot_offset + job.shots - 1)
        engine.validate_sequence(job.seq)

    nominals = [_nominal(engine.with_theta(job.seq, 0.0), job.noise) for job in jobs]
    nominals = [replace(nom, resolved=engine.with_theta(nom.resolved, job.seq.steps[-1].theta))
                for nom, job in zip(nominals, jobs)]

    conditions = [
        [_draw_conditions(job.noise, job.base_seed, job.shot_offset + i) for i in range(job.shots)]
        for job in jobs
    ]
    groups: Dict[int, List[Tuple[int, List[int]]]] = {}
    for job_index, drawn in enumerate(conditions):
        by_n: Dict[int, List[int]] = {}
        for position, (true_N, _) in enumerate(drawn):
            by_n.setdefault(true_N, []).append(position)
        for true_N, positions in by_n.items():
            groups.setdefault(true_N, []).append((job_index, positions))

    atom_numbers = sorted(groups)
    args = [(n, groups[n], jobs, nominals, conditions) for n in atom_numbers]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _simulate_atom_number(*a), args))
    else:
        results = [_simulate_atom_number(*a) for a in args]

    records: List[List[Optional[ShotRecord]]] = [[None] * job.shots for job in jobs]
    for chunk in results:
        for job_index, position, record in chunk:
            records[job_index][position] = record

    log.info("Simulated %d shots over %d atom numbers", sum(j.shots for j in jobs), len(atom_numbers))
    return [
        Dataset(tuple(recs), sequence_descriptor(job.seq), job.noise)
        for recs, job in zip(records, jobs)
    ]


def run_experiment(seq: PulseSequence, noise: NoiseModel, shots: int, base_seed: int, threads: int = 1) -> Dataset:
    return run_batch([ExperimentJob(seq, noise, shots, base_seed)], threads=threads)[0]


def sample_shot(seq: PulseSequence, noise: NoiseModel, seed: int, shot_index: int = 0) -> ShotRecord:
    return run_batch([ExperimentJob(seq, noise, 1, seed, shot_index)])[0].records[0]


def fringe_jobs(seq: PulseSequence, noise: NoiseModel, thetas: Iterable[float],
                shots_per_theta: int, base_seed: int, shot_offset: int = 0) -> List[ExperimentJob]:
    """One job per theta; shot indices never overlap and start at shot_offset."""
    return [
        ExperimentJob(engine.with_theta(seq, float(theta)), noise, shots_per_theta, base_seed,
                      shot_offset=shot_offset + j * shots_per_theta)
        for j, theta in enumerate(thetas)
    ]


def run_fringe_scan(seq: PulseSequence, noise: NoiseModel, thetas: Iterable[float],
                    shots_per_theta: int, base_seed: int, threads: int = 1) -> Dataset:
    datasets = run_batch(fringe_jobs(seq, noise, thetas, shots_per_theta, base_seed), threads=threads)
    return Dataset.merge(datasets)
