"""Shared builders for randomized instances used across the test modules."""

import numpy as np
import pytest

from xfersim.kernels import AtomsKernelSpec, make_kernel
from xfersim.measures import AtomicMeasure


def uniform_measure(lo: float, hi: float, n_atoms: int, mass: float = 1.0) -> AtomicMeasure:
    """Uniform density on [lo, hi] discretized as n_atoms midpoint atoms."""
    locs = lo + (np.arange(n_atoms) + 0.5) * (hi - lo) / n_atoms
    return AtomicMeasure(locs, np.full(n_atoms, mass / n_atoms))


def random_measure(rng: np.random.Generator, max_atoms: int = 8, allow_zero_atom: bool = False):
    n = int(rng.integers(1, max_atoms + 1))
    locs = rng.uniform(0.05, 10.0, size=n)
    if allow_zero_atom and rng.random() < 0.3:
        locs[0] = 0.0
    ws = rng.uniform(0.1, 2.0, size=n)
    return AtomicMeasure(locs, ws)


def random_kernel(rng: np.random.Generator, max_atoms: int = 8, structured: bool = True):
    """Random atomic kernel; optionally with atoms at exactly 0 and/or 1."""
    n = int(rng.integers(1, max_atoms + 1))
    locs = list(rng.uniform(0.02, 0.98, size=n))
    if structured:
        roll = rng.random()
        if roll < 0.15:
            locs[0] = 0.0
        elif roll < 0.3:
            locs[0] = 1.0
        elif roll < 0.4 and n >= 2:
            locs[0] = 0.0
            locs[1] = 1.0
    ws = rng.uniform(0.1, 1.0, size=n)
    ws = ws / ws.sum()
    return make_kernel(AtomsKernelSpec(atoms=tuple((float(z), float(w)) for z, w in zip(locs, ws))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
