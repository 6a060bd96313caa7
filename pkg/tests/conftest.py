"""Shared fixtures: synthetic scenes and angle boxes reused across test modules."""

from __future__ import annotations

import numpy as np
import pytest

from boresight.cloud import synth_generate
from boresight.rotation import AngleBox, EulerAngles

PLANTED = EulerAngles.from_degrees(1.0, -0.5, 0.25)


@pytest.fixture(scope="session")
def planted_angles() -> EulerAngles:
    return PLANTED


@pytest.fixture(scope="session")
def box2deg() -> AngleBox:
    return AngleBox.symmetric_deg(2.0)


@pytest.fixture(scope="session")
def tiny_scene(planted_angles):
    """Small noise-free scene suitable for brute-force oracles."""
    hat, bar, gt = synth_generate(20, 40, planted_angles, 0.0, seed=11)
    return hat, bar, gt


@pytest.fixture(scope="session")
def small_scene(planted_angles):
    """Medium noise-free scene for solver-level tests."""
    hat, bar, gt = synth_generate(30, 60, planted_angles, 0.0, seed=5)
    return hat, bar, gt


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
