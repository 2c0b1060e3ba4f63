"""Kernel construction, validation and sampling."""

import math

import numpy as np
import pytest

from xfersim.kernels import (
    AtomsKernelSpec,
    DensityKernelSpec,
    DiracKernelSpec,
    kernel_sample,
    make_kernel,
    parse_kernel_spec,
)
from xfersim.measures import moment, sample


def test_dirac_kernel_moments():
    B = make_kernel(DiracKernelSpec(p=0.3))
    assert B.n_atoms == 1
    assert B.atoms.locations[0] == 0.3
    assert B.lambda1 == pytest.approx(0.3)
    assert B.lambda2 == pytest.approx(0.09)
    assert B.mass_at_0 == 0.0 and B.mass_at_1 == 0.0


def test_two_point_kernel():
    B = make_kernel(AtomsKernelSpec(atoms=((0.0, 0.5), (1.0, 0.5))))
    assert B.lambda1 == 0.5
    assert B.lambda2 == 0.5
    assert B.mass_at_0 == 0.5
    assert B.mass_at_1 == 0.5


def test_uniform_density_kernel():
    B = make_kernel(DensityKernelSpec(name="uniform", nodes=512))
    assert B.n_atoms == 512
    assert abs(moment(B.atoms, 0) - 1.0) <= 1e-12
    assert B.lambda1 == pytest.approx(0.5, abs=1e-6)
    assert B.lambda2 == pytest.approx(1.0 / 3.0, abs=1e-4)


def test_beta_density_kernel_moments():
    a, b = 2.0, 3.0
    B = make_kernel(DensityKernelSpec(name="beta", nodes=512, a=a, b=b))
    mean = a / (a + b)
    second = a * (a + 1) / ((a + b) * (a + b + 1))
    assert B.lambda1 == pytest.approx(mean, abs=1e-6)
    assert B.lambda2 == pytest.approx(second, abs=1e-5)


def test_table_density_kernel():
    # triangular density peaking at 0.5
    spec = DensityKernelSpec(name="table", nodes=256, points=((0.0, 0.0), (0.5, 2.0), (1.0, 0.0)))
    B = make_kernel(spec)
    assert abs(moment(B.atoms, 0) - 1.0) <= 1e-12
    assert B.lambda1 == pytest.approx(0.5, abs=1e-3)


def test_kernel_moment_inequalities(rng):
    from conftest import random_kernel

    for _ in range(200):
        B = random_kernel(rng)
        assert abs(moment(B.atoms, 0) - 1.0) <= 1e-12
        assert B.lambda2 <= B.lambda1 + 1e-15          # z^2 <= z on [0, 1]
        assert B.lambda1 * B.lambda1 <= B.lambda2 + 1e-15  # Cauchy-Schwarz


@pytest.mark.parametrize("name,analytic", [("uniform", 0.5), ("beta", 0.4)])
def test_quadrature_refinement_halves_moment_error(name, analytic):
    def lam1_error(nodes):
        if name == "uniform":
            spec = DensityKernelSpec(name="uniform", nodes=nodes)
        else:
            spec = DensityKernelSpec(name="beta", nodes=nodes, a=2.0, b=3.0)
        return abs(make_kernel(spec).lambda1 - analytic)

    for nodes in (32, 64, 128):
        coarse = lam1_error(nodes)
        fine = lam1_error(2 * nodes)
        assert fine <= 0.5 * coarse + 1e-14


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        make_kernel(DiracKernelSpec(p=1.5))
    with pytest.raises(ValueError):
        make_kernel(AtomsKernelSpec(atoms=((0.5, 0.7),)))  # mass != 1
    with pytest.raises(ValueError):
        make_kernel(AtomsKernelSpec(atoms=((1.2, 1.0),)))  # support outside [0,1]
    with pytest.raises(ValueError):
        make_kernel(DensityKernelSpec(name="table", nodes=64, points=((0.0, -1.0), (1.0, 1.0))))
    with pytest.raises(ValueError):
        make_kernel(DensityKernelSpec(name="table", nodes=64, points=((0.0, 0.0), (1.0, 0.0))))
    with pytest.raises(ValueError):
        make_kernel(DensityKernelSpec(name="beta", nodes=64, a=-1.0, b=2.0))


def test_parse_kernel_spec_round_trip():
    for payload in (
        {"type": "dirac", "p": 0.3},
        {"type": "atoms", "atoms": [[0.0, 0.25], [0.5, 0.5], [1.0, 0.25]]},
        {"type": "density", "name": "uniform", "nodes": 128},
        {"type": "density", "name": "beta", "nodes": 64, "a": 2.0, "b": 5.0},
    ):
        spec = parse_kernel_spec(payload)
        assert parse_kernel_spec(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        parse_kernel_spec({"type": "mystery"})


def test_kernel_sample_dirac():
    B = make_kernel(DiracKernelSpec(p=0.3))
    rng = np.random.default_rng(3)
    assert all(kernel_sample(B, rng) == 0.3 for _ in range(5))


def test_kernel_sample_support_and_determinism(rng):
    from conftest import random_kernel

    B = random_kernel(rng)
    draws = sample(B.atoms, 1000, np.random.default_rng(11))
    again = sample(B.atoms, 1000, np.random.default_rng(11))
    assert np.array_equal(draws, again)
    assert np.all((draws >= 0.0) & (draws <= 1.0))


def test_kernel_sample_clt_mean():
    B = make_kernel(AtomsKernelSpec(atoms=((0.0, 0.5), (1.0, 0.5))))
    draws = sample(B.atoms, 10**6, np.random.default_rng(99))
    assert abs(float(draws.mean()) - 0.5) <= 0.002
