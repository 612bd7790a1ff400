"""Shared profile generators for the test suite."""

import numpy as np
import pytest

from pwcheat import ConductivityProfile


def random_profile(
    rng,
    n_pieces,
    value_range=(0.2, 5.0),
    min_width=0.1,
    c0=1e-3,
    c1=1e3,
):
    """Random admissible profile with well-separated breakpoints and values."""
    lo, hi = value_range
    while True:
        if n_pieces == 1:
            breaks = [0.0, 1.0]
        else:
            interior = np.sort(rng.uniform(0.0, 1.0, size=n_pieces - 1))
            breaks = np.concatenate([[0.0], interior, [1.0]])
            if np.diff(breaks).min() < min_width:
                continue
        values = np.exp(rng.uniform(np.log(lo), np.log(hi), size=n_pieces))
        # Re-draw until adjacent values are clearly distinct pieces.
        if n_pieces > 1 and np.any(
            np.abs(np.diff(values)) < 0.05 * np.abs(values[:-1])
        ):
            continue
        return ConductivityProfile(breaks, values, c0=c0, c1=c1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240811))
