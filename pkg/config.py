"""
Scenario Configuration

Loads data/scenarios/<verb>.yaml on top of the DEFAULT_* dictionaries
below. Physical keys carry their unit as a suffix; unknown keys anywhere
are rejected with their dotted path. The resolved configuration is hashed
(SHA-256 of canonical JSON) and the hash travels with every output file.
"""

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from errors import ConfigError, InvalidArgumentError
from noise_mc import NoiseModel
from sequence_engine import DEFAULT_SEQUENCE_PARAMS

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
VERBS = ("squeeze", "fig3", "scan", "sensitivity", "calibrate")
SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"

DEFAULT_NOISE = {
    "mean_atoms": 1400,              # shot-to-shot mean
    "prep_sigma_atoms": 40.0,        # preparation noise
    "det_sigma_n1_atoms": 5.7,       # detection noise on |1>
    "det_sigma_n2_atoms": 4.2,       # detection noise on |2>
    "det_sigma_n_far": 6.5e-3,       # imbalance detection noise at eta = 0.5
    "tech_sigma_hz": 0.15,           # quasi-static detuning, rms
    "meanfield_hz_per_atom": 5.1e-3,
    "meanfield_transport_fraction": 0.0,  # share of transport time seen at readout
    "correction_enabled": True,      # per-shot mean-field correction
    "imaging_alpha": 1.0,            # detected / true atom number
}

DEFAULT_CHIP = {
    "geometry_path": "data/chip_geometry.yaml",
    "mw_current_rms_a": None,        # None keeps the geometry file's drive
}

DEFAULT_SETTINGS = {
    "squeeze": {
        "atom_count": 1400,
        "target_db": -4.3,
        "grid_points": 400,
        "wigner_atoms": 200,         # raster drawn at this N (<= 256)
        "wigner_polar_points": 61,
        "wigner_azimuth_points": 121,
        "oracle_atoms": 64,          # closed form vs. state vector sweep
    },
    "fig3": {
        "ramsey_times_s": [1e-3, 2.5e-3, 5e-3, 10e-3, 15e-3, 20e-3, 25e-3, 30e-3, 40e-3],
        "shots": 240,
        "contrast": 0.981,           # fringe contrast of the squeezed input
        "fringe_ramsey_time_s": 5e-3,
        "fringe_points": 12,
        "fringe_shots_per_point": 20,
        "model_squeezed_db": -4.0,
        "model_coherent_db": 0.2,
    },
    "scan": {
        "etas": [1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
        "shots": 240,
        "fringe_points": 8,
        "fringe_shots_per_point": 30,
        "trajectory_steps": 11,
    },
    "sensitivity": {
        "ramsey_time_s": 20e-3,
        "mw_pulse_s": 80e-6,
        "cycle_s": 11.0,
        "shots": 240,
        "probe_eta": 0.5,
        "operating_field_t": None,   # enables the quadratic-shift field equivalent
    },
    "calibrate": {
        "mean_atoms_grid": [400, 700, 1000, 1400, 1800],
        "shots": 400,
        "injected_alpha": 0.82,
        "ramsey_time_s": 100e-6,
        "confidence": 0.95,
    },
}

# Sections each verb reads; others are rejected
VERB_SECTIONS = {
    "squeeze": ("squeeze",),
    "fig3": ("sequence", "noise", "fig3"),
    "scan": ("sequence", "noise", "chip", "scan"),
    "sensitivity": ("sequence", "noise", "chip", "sensitivity"),
    "calibrate": ("sequence", "noise", "calibrate"),
}

_TOP_LEVEL = {"schema_version", "scenario", "seed", "threads", "output_dir"}


def _merge(defaults: Dict[str, Any], given: Optional[Dict[str, Any]], where: str) -> Dict[str, Any]:
    merged = copy.deepcopy(defaults)
    if given is None:
        return merged
    if not isinstance(given, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(given).__name__}")
    for key, value in given.items():
        if key not in merged:
            raise ConfigError(f"unknown key {where}.{key}")
        merged[key] = value
    return merged


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(doc: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def noise_model_from(section: Dict[str, Any]) -> NoiseModel:
    try:
        return NoiseModel(
            mean_N=int(section["mean_atoms"]),
            prep_sigma_N=section["prep_sigma_atoms"],
            det_sigma_N1=section["det_sigma_n1_atoms"],
            det_sigma_N2=section["det_sigma_n2_atoms"],
            det_sigma_n_far=section["det_sigma_n_far"],
            tech_sigma_f=section["tech_sigma_hz"],
            meanfield_coeff=section["meanfield_hz_per_atom"],
            meanfield_transport_fraction=section["meanfield_transport_fraction"],
            correction_enabled=section["correction_enabled"],
            imaging_alpha=section["imaging_alpha"],
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"noise: {exc}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    threads: int
    output_dir: str
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def settings(self) -> Dict[str, Any]:
        return self.sections[self.name]

    @property
    def sequence(self) -> Dict[str, Any]:
        return self.sections.get("sequence", {})

    @property
    def chip(self) -> Dict[str, Any]:
        return self.sections.get("chip", {})

    def noise_model(self, **changes) -> NoiseModel:
        section = dict(self.sections["noise"])
        section.update(changes)
        return noise_model_from(section)

    def to_dict(self) -> Dict[str, Any]:
        doc = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "scenario": self.name,
            "seed": self.seed,
            "threads": self.threads,
        }
        doc.update(copy.deepcopy(self.sections))
        return doc

    @property
    def config_hash(self) -> str:
        # threads never changes results, so it stays out of the hash
        doc = self.to_dict()
        doc.pop("threads")
        return config_hash(doc)


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return seed


def build_scenario(verb: str, doc: Optional[Dict[str, Any]] = None, source: Optional[str] = None) -> ScenarioConfig:
    """Resolve a parsed YAML document against the defaults of verb."""
    if verb not in VERBS:
        raise ConfigError(f"unknown scenario {verb!r}; expected one of {VERBS}")
    doc = dict(doc or {})
    allowed = _TOP_LEVEL | set(VERB_SECTIONS[verb])
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) for {verb}: {', '.join(unknown)}")
    if doc.get("schema_version", CONFIG_SCHEMA_VERSION) != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {CONFIG_SCHEMA_VERSION}, got {doc['schema_version']!r}")
    if doc.get("scenario", verb) != verb:
        raise ConfigError(f"file describes scenario {doc['scenario']!r}, not {verb!r}")

    defaults = {
        "sequence": DEFAULT_SEQUENCE_PARAMS,
        "noise": DEFAULT_NOISE,
        "chip": DEFAULT_CHIP,
        verb: DEFAULT_SETTINGS[verb],
    }
    sections = {name: _merge(defaults[name], doc.get(name), name) for name in VERB_SECTIONS[verb]}

    if "noise" in sections and "sequence" in sections:
        n_seq, n_noise = sections["sequence"]["atom_count"], sections["noise"]["mean_atoms"]
        if verb != "calibrate" and n_seq != n_noise:
            raise ConfigError(f"sequence.atom_count={n_seq} differs from noise.mean_atoms={n_noise}")
        noise_model_from(sections["noise"])

    threads = doc.get("threads", 1)
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError(f"threads must be a positive integer, got {threads!r}")
    return ScenarioConfig(
        name=verb,
        seed=_check_seed(doc.get("seed", 20130101)),
        threads=threads,
        output_dir=str(doc.get("output_dir", "results")),
        sections=sections,
        source=source,
    )


def load_scenario(
    verb: str,
    path: Union[str, Path, None] = None,
    seed: Optional[int] = None,
    shots: Optional[int] = None,
    threads: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ScenarioConfig:
    """
    Read a scenario file (default data/scenarios/<verb>.yaml) and apply CLI overrides.

    Raises:
        FileNotFoundError: the file does not exist
        ConfigError: malformed YAML, unknown keys or invalid values
    """
    path = Path(path) if path is not None else SCENARIO_DIR / f"{verb}.yaml"
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    if seed is not None:
        doc["seed"] = seed
    if threads is not None:
        doc["threads"] = threads
    if output_dir is not None:
        doc["output_dir"] = output_dir
    if shots is not None:
        section = dict(doc.get(verb) or {})
        if "shots" not in DEFAULT_SETTINGS.get(verb, {}):
            raise ConfigError(f"--shots does not apply to {verb}")
        section["shots"] = shots
        doc[verb] = section

    scenario = build_scenario(verb, doc, source=str(path))
    log.info("Loaded %s scenario from %s (hash %s)", verb, path, scenario.config_hash[:12])
    return scenario
