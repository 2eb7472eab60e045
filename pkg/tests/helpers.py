"""Random configuration generators shared by the tests."""

import itertools

import numpy as np

from beamlab.model import DAMPER_NAMES, BeamConfig, DampingPattern, LayerParams

PAIRS = [frozenset(p) for p in itertools.combinations(DAMPER_NAMES, 2)]


def random_layer(rng) -> LayerParams:
    return LayerParams(*rng.uniform(0.5, 2.0, size=5))


def random_config(rng) -> BeamConfig:
    return BeamConfig(
        top=random_layer(rng), bottom=random_layer(rng),
        rho2=rng.uniform(0.5, 2.0), h2=rng.uniform(0.2, 1.0), L=rng.uniform(1.0, 4.0),
    )


def random_two_damper(rng) -> DampingPattern:
    pair = PAIRS[rng.integers(len(PAIRS))]
    return DampingPattern(**{k: float(rng.uniform(0.2, 2.0)) for k in pair})


def pattern(**coeffs) -> DampingPattern:
    return DampingPattern(**coeffs)
