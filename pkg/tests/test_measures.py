"""Atomic measure primitives: canonical form, moments, compression, metrics."""

import math

import numpy as np
import pytest

from xfersim.errors import EmptyMeasureError, UnequalMassError
from xfersim.measures import (
    AtomicMeasure,
    compress,
    moment,
    sample,
    tv_distance,
    w1_distance,
)

from conftest import random_measure


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------
def test_duplicate_locations_merge():
    u = AtomicMeasure([2.0, 1.0, 2.0], [0.25, 1.0, 0.5])
    assert u.n_atoms == 2
    assert u.locations.tolist() == [1.0, 2.0]
    assert u.weights.tolist() == [1.0, 0.75]


def test_near_zero_snaps_to_origin():
    u = AtomicMeasure([5e-13, 1.0], [0.5, 0.5])
    assert u.locations[0] == 0.0
    assert u.weight_at(0.0) == 0.5


def test_zero_weights_dropped_negatives_rejected():
    u = AtomicMeasure([1.0, 2.0], [0.0, 1.0])
    assert u.n_atoms == 1
    with pytest.raises(ValueError):
        AtomicMeasure([1.0], [-0.5])
    with pytest.raises(ValueError):
        AtomicMeasure([-1.0], [0.5])


def test_canonicalization_idempotent_and_moment_preserving(rng):
    for _ in range(200):
        n = int(rng.integers(1, 20))
        locs = rng.choice([0.0, 0.5, 1.0, 1.5, 2.0], size=n)
        ws = rng.uniform(0.01, 1.0, size=n)
        u = AtomicMeasure(locs, ws)
        again = AtomicMeasure(u.locations, u.weights)
        assert u == again
        for k in (0, 1, 2):
            expect = math.fsum(np.asarray(ws) * np.asarray(locs, dtype=float) ** k)
            assert moment(u, k) == pytest.approx(expect, rel=1e-14, abs=1e-300)


def test_immutability():
    u = AtomicMeasure([1.0], [1.0])
    with pytest.raises(ValueError):
        u.locations[0] = 2.0


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------
def test_moment_examples():
    assert moment(AtomicMeasure([0.0, 2.0], [0.5, 0.5]), 1) == 1.0
    assert moment(AtomicMeasure([1.0], [1.0]), 2) == 1.0
    # hand sum: 0.5*1 + 0.5*9
    assert moment(AtomicMeasure([1.0, 3.0], [0.5, 0.5]), 2) == 5.0


def test_moment_rejects_bad_order():
    u = AtomicMeasure([1.0], [1.0])
    with pytest.raises(ValueError):
        moment(u, 3)
    with pytest.raises(ValueError):
        moment(u, -1)


# ---------------------------------------------------------------------------
# compression
# ---------------------------------------------------------------------------
def test_compress_barycentric_merge():
    u = AtomicMeasure([1.0, 1.0 + 1e-9], [0.5, 0.5])
    v, report = compress(u, 1)
    assert v.n_atoms == 1
    assert v.locations[0] == pytest.approx(1.0 + 5e-10, abs=1e-15)
    assert moment(v, 0) == 1.0
    assert moment(v, 1) == pytest.approx(moment(u, 1), rel=1e-15)
    assert report.merges_performed == 1
    assert report.w1_error_bound >= w1_distance(u, v)


def test_compress_zero_atom_protection():
    u = AtomicMeasure([0.0, 1.0], [0.3, 0.7])
    v, report = compress(u, 1)
    # the origin atom may never merge, so both atoms survive
    assert v.n_atoms == 2
    assert v.weight_at(0.0) == 0.3


def test_compress_noop_below_budget():
    u = AtomicMeasure([1.0, 2.0], [0.5, 0.5])
    v, report = compress(u, 5)
    assert v == u
    assert report.merges_performed == 0
    assert report.w1_error_bound == 0.0


def test_compress_invalid_budget():
    with pytest.raises(ValueError):
        compress(AtomicMeasure([1.0], [1.0]), 0)


def test_compress_large_preserves_low_moments(rng):
    locs = rng.uniform(0.0, 5.0, size=10_000)
    ws = rng.uniform(0.01, 1.0, size=10_000)
    u = AtomicMeasure(locs, ws)
    v, report = compress(u, 256)
    assert v.n_atoms <= 256
    assert moment(v, 0) == pytest.approx(moment(u, 0), rel=1e-12)
    assert moment(v, 1) == pytest.approx(moment(u, 1), rel=1e-12)
    assert moment(v, 2) <= moment(u, 2) * (1.0 + 1e-13)
    assert moment(v, 2) < moment(u, 2)  # genuine merges lose spread
    assert w1_distance(u, v) <= report.w1_error_bound * (1.0 + 1e-12)


def test_compress_certified_bound_on_random_instances(rng):
    for _ in range(100):
        u = random_measure(rng, max_atoms=40, allow_zero_atom=True)
        target = int(rng.integers(2, 10))
        v, report = compress(u, target)
        assert w1_distance(u, v) <= report.w1_error_bound * (1.0 + 1e-12) + 1e-15
        assert moment(v, 0) == pytest.approx(moment(u, 0), rel=1e-12)
        assert moment(v, 1) == pytest.approx(moment(u, 1), rel=1e-12)
        assert moment(v, 2) <= moment(u, 2) * (1.0 + 1e-12)
        assert u.weight_at(0.0) == v.weight_at(0.0)


# ---------------------------------------------------------------------------
# Wasserstein distance
# ---------------------------------------------------------------------------
def test_w1_two_diracs():
    assert w1_distance(AtomicMeasure.dirac(0.0), AtomicMeasure.dirac(1.0)) == 1.0


def test_w1_quantile_integral_by_hand():
    u = AtomicMeasure([0.0, 2.0], [0.5, 0.5])
    v = AtomicMeasure.dirac(1.0)
    assert w1_distance(u, v) == 1.0


def test_w1_identity(rng):
    for _ in range(50):
        u = random_measure(rng)
        assert w1_distance(u, u) == 0.0


def test_w1_requires_equal_mass():
    with pytest.raises(UnequalMassError):
        w1_distance(AtomicMeasure.dirac(1.0, 1.0), AtomicMeasure.dirac(1.0, 2.0))


def test_w1_scales_with_mass():
    u = AtomicMeasure.dirac(0.0, 2.0)
    v = AtomicMeasure.dirac(1.0, 2.0)
    assert w1_distance(u, v) == 2.0


# ---------------------------------------------------------------------------
# total variation distance
# ---------------------------------------------------------------------------
def test_tv_examples():
    assert tv_distance(AtomicMeasure.dirac(0.0), AtomicMeasure.dirac(1.0)) == 2.0
    u = AtomicMeasure([1.0, 2.0], [0.4, 0.6])
    assert tv_distance(u, u) == 0.0
    assert tv_distance(AtomicMeasure.dirac(1.0, 0.4), AtomicMeasure.dirac(1.0, 0.9)) == pytest.approx(0.5)


def test_tv_attained_by_sign_test_function(rng):
    # the sup over |phi| <= 1 is attained by phi = sign(w_u - w_v) on the
    # union support; check against the direct evaluation
    for _ in range(200):
        u = random_measure(rng, max_atoms=6, allow_zero_atom=True)
        v = random_measure(rng, max_atoms=6, allow_zero_atom=True)
        grid = np.union1d(u.locations, v.locations)
        wu = np.zeros(grid.size)
        wv = np.zeros(grid.size)
        wu[np.searchsorted(grid, u.locations)] = u.weights
        wv[np.searchsorted(grid, v.locations)] = v.weights
        phi = np.sign(wu - wv)
        attained = float(np.sum(phi * (wu - wv)))
        assert tv_distance(u, v) == pytest.approx(attained, rel=1e-13, abs=1e-15)
        # and no +-1-valued step function does better
        for _ in range(5):
            rand_phi = rng.choice([-1.0, 1.0], size=grid.size)
            assert np.sum(rand_phi * (wu - wv)) <= tv_distance(u, v) + 1e-12


def test_metric_properties_on_random_triples(rng):
    # symmetry, non-negativity, identity of indiscernibles, triangle inequality
    for _ in range(1000):
        u = random_measure(rng, max_atoms=5)
        v = random_measure(rng, max_atoms=5)
        w = random_measure(rng, max_atoms=5)
        assert tv_distance(u, v) == tv_distance(v, u) >= 0.0
        assert tv_distance(u, w) <= tv_distance(u, v) + tv_distance(v, w) + 1e-12
        # equal-mass copies for W1
        mu, mv, mw = moment(u, 0), moment(v, 0), moment(w, 0)
        un, vn, wn = u.scaled(1 / mu), v.scaled(1 / mv), w.scaled(1 / mw)
        duv = w1_distance(un, vn)
        assert duv == pytest.approx(w1_distance(vn, un), rel=1e-12, abs=1e-15)
        assert duv >= 0.0
        assert w1_distance(un, wn) <= duv + w1_distance(vn, wn) + 1e-12


def test_distances_zero_iff_equal(rng):
    for _ in range(100):
        u = random_measure(rng, max_atoms=5)
        v = random_measure(rng, max_atoms=5)
        if u == v:
            continue
        assert tv_distance(u, v) > 0.0
    u = random_measure(rng)
    assert tv_distance(u, AtomicMeasure(u.locations, u.weights)) == 0.0


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------
def test_sample_single_atom():
    rng = np.random.default_rng(1)
    draws = sample(AtomicMeasure.dirac(1.0), 5, rng)
    assert draws.tolist() == [1.0] * 5


def test_sample_empty_count():
    rng = np.random.default_rng(1)
    assert sample(AtomicMeasure.dirac(1.0), 0, rng).size == 0


def test_sample_zero_mass_rejected():
    rng = np.random.default_rng(1)
    with pytest.raises(EmptyMeasureError):
        sample(AtomicMeasure.zero(), 3, rng)


def test_sample_binomial_concentration():
    rng = np.random.default_rng(12345)
    u = AtomicMeasure([0.0, 1.0], [0.5, 0.5])
    draws = sample(u, 10**6, rng)
    frac_zero = float(np.mean(draws == 0.0))
    assert 0.498 <= frac_zero <= 0.502


def test_sample_deterministic_per_seed():
    u = AtomicMeasure([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    a = sample(u, 100, np.random.default_rng(7))
    b = sample(u, 100, np.random.default_rng(7))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def test_json_round_trip(rng):
    u = random_measure(rng, allow_zero_atom=True)
    assert AtomicMeasure.from_json(u.to_json()) == u


def test_csv_round_trip(tmp_path, rng):
    u = random_measure(rng)
    path = tmp_path / "measure.csv"
    u.to_csv(path)
    assert AtomicMeasure.from_csv(path) == u
    header = path.read_text().splitlines()[0]
    assert header == "location,weight"
