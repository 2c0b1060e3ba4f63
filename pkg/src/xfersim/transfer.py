"""The pair-interaction law and the bilinear transfer operator, exact on atoms.

For a kernel B and traits x1, x2, the post-transfer trait of the focal
individual is x1*(1-Z1) + x2*Z2 with Z1, Z2 i.i.d. ~ B.  With atomic B, u, v
every outcome can be enumerated, which keeps the operator exact and lets
moment identities be tested to machine precision.

Locations are evaluated as ``x1 + (x2*z2 - x1*z1)``.  This algebraically
equivalent form is exact in floating point in the two cases the structural
diagnostics rely on: diagonal transfers (x1 == x2, z1 == z2) land exactly on
x1, and the (z1=1, z2=0) channel lands exactly on 0.  The enumeration oracle
follows the same convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, EmptyMeasureError
from .kernels import TransferKernel
from .measures import AtomicMeasure, CompressionReport, compress, moment, sample

PRODUCT_HARD_CAP = 10_000_000


@dataclass(frozen=True)
class PredictedMoments:
    """Moments of the product measure computed from input moments alone."""

    m0: float
    m1: float
    m2: float


def predicted_moments(B: TransferKernel, u: AtomicMeasure, v: AtomicMeasure) -> PredictedMoments:
    """Closed-form moments of the transfer product in terms of input moments."""
    lam1, lam2 = B.lambda1, B.lambda2
    u0, u1, u2 = moment(u, 0), moment(u, 1), moment(u, 2)
    v0, v1, v2 = moment(v, 0), moment(v, 1), moment(v, 2)
    m0 = u0 * v0
    m1 = (1.0 - lam1) * v0 * u1 + lam1 * u0 * v1
    m2 = (
        (1.0 - 2.0 * lam1 + lam2) * v0 * u2
        + lam2 * u0 * v2
        + 2.0 * (1.0 - lam1) * lam1 * u1 * v1
    )
    return PredictedMoments(m0=m0, m1=m1, m2=m2)


def raw_product(
    B: TransferKernel, u: AtomicMeasure, v: AtomicMeasure
) -> tuple[np.ndarray, np.ndarray]:
    """Locations and weights of every (z1, z2, x1, x2) outcome, uncanonicalized.

    Enumeration is row-major over (z1, z2, x1, x2); weights are formed as
    (wB1*wB2)*(wu*wv).
    """
    z = B.atoms.locations
    wb = B.atoms.weights
    xu, wu = u.locations, u.weights
    xv, wv = v.locations, v.weights
    if xu.size == 0 or xv.size == 0:
        return np.empty(0), np.empty(0)

    p1 = np.multiply.outer(z, xu)  # x1*z1, shape (m, nu)
    p2 = np.multiply.outer(z, xv)  # x2*z2, shape (m, nv)
    loc = xu[None, None, :, None] + (p2[None, :, None, :] - p1[:, None, :, None])
    w = np.multiply.outer(np.multiply.outer(wb, wb), np.multiply.outer(wu, wv))
    return loc.reshape(-1), w.reshape(-1)


def product_size(B: TransferKernel, u: AtomicMeasure, v: AtomicMeasure) -> int:
    return B.n_atoms * B.n_atoms * u.n_atoms * v.n_atoms


def k_b(B: TransferKernel, x1: float, x2: float) -> AtomicMeasure:
    """Law of the focal trait after one transfer between traits x1 and x2.

    A probability measure supported in [0, x1 + x2].
    """
    if x1 < 0.0 or x2 < 0.0:
        raise ValueError("traits must be non-negative")
    loc, w = raw_product(B, AtomicMeasure.dirac(x1), AtomicMeasure.dirac(x2))
    return AtomicMeasure(loc, w)


def t_b(
    B: TransferKernel,
    u: AtomicMeasure,
    v: AtomicMeasure,
    max_atoms: int,
    hard_cap: int = PRODUCT_HARD_CAP,
) -> tuple[AtomicMeasure, CompressionReport]:
    """Exact bilinear transfer product, compressed to at most ``max_atoms``.

    Raises CapacityError when the uncompressed product would exceed
    ``hard_cap`` atoms; compress the input measures first in that case.
    """
    count = product_size(B, u, v)
    if count > hard_cap:
        raise CapacityError(
            f"transfer product would materialize {count} atoms "
            f"(cap {hard_cap}); compress the input measures first"
        )
    loc, w = raw_product(B, u, v)
    return compress(AtomicMeasure(loc, w), max_atoms)


def t_b_mc(
    B: TransferKernel,
    u: AtomicMeasure,
    v: AtomicMeasure,
    n_samples: int,
    rng: np.random.Generator,
) -> AtomicMeasure:
    """Monte Carlo estimate of the transfer product.

    Empirical measure of n_samples outcomes with x1 ~ u/|u|, x2 ~ v/|v|,
    Z1, Z2 ~ B; every atom carries weight |u|*|v|/n_samples.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    mu = moment(u, 0)
    mv = moment(v, 0)
    if mu <= 0.0 or mv <= 0.0:
        raise EmptyMeasureError("t_b_mc needs inputs with positive mass")
    x1 = sample(u, n_samples, rng)
    x2 = sample(v, n_samples, rng)
    z1 = sample(B.atoms, n_samples, rng)
    z2 = sample(B.atoms, n_samples, rng)
    loc = x1 + (x2 * z2 - x1 * z1)
    w = np.full(n_samples, mu * mv / n_samples)
    return AtomicMeasure(loc, w)
