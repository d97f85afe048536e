"""Shared fixtures: small atom numbers and scenarios writing into tmp_path."""

import numpy as np
import pytest

from config import build_scenario
from noise_mc import NoiseModel
from sequence_engine import (
    FreeEvolution,
    Measure,
    PulseSequence,
    Rotation,
    build_paper_sequence,
)

SMALL_N = 100


@pytest.fixture
def coherent_ramsey():
    """pi/2 - T_R - pi/2(theta) on a coherent state; n = sin(theta + 2 pi delta T)."""
    def make(atom_count=SMALL_N, ramsey_time_s=5e-3, detuning_hz=0.0, theta=0.0, contrast_decay=0.0):
        steps = (
            Rotation("y", -np.pi / 2),
            FreeEvolution(ramsey_time_s, detuning_hz),
            Rotation("x", np.pi / 2),
            Measure(theta),
        )
        return PulseSequence(steps, atom_count, contrast_decay)
    return make


@pytest.fixture
def quiet_noise():
    """Projection noise only."""
    return NoiseModel.noiseless(SMALL_N)


@pytest.fixture
def small_scanning_probe():
    def make(mw_potential_hz=0.0, probe_eta=0.5, twist_mu_rad=0.0, atom_count=SMALL_N):
        return build_paper_sequence("scanning_probe", {
            "atom_count": atom_count,
            "twist_mu_rad": twist_mu_rad,
            "probe_eta": probe_eta,
            "mw_potential_hz": mw_potential_hz,
        })
    return make


@pytest.fixture
def scenario(tmp_path):
    """Scenario builder writing into tmp_path; sections override the defaults."""
    def make(verb, out=None, **sections):
        doc = {"output_dir": str(out or tmp_path)}
        doc.update(sections)
        return build_scenario(verb, doc)
    return make
