"""Fixed distributions of the self-transfer map and structural diagnostics.

The solver runs plain Picard iteration u <- compress(T_B[u, u], max_atoms)
on probability measures, watching the W1 step between consecutive iterates.
Mass and mean are conserved by the operator and by compression, which the
solver enforces at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, NumericalError
from .kernels import TransferKernel
from .measures import AtomicMeasure, compress, moment, w1_distance
from .transfer import PRODUCT_HARD_CAP, product_size, raw_product, t_b

PROBABILITY_ATOL = 1e-9
MEAN_DRIFT_TOL = 1e-8
DIFFUSE_WEIGHT_CAP = 0.05

HISTORY_COLUMNS = ("iter", "mass", "mean", "variance", "mass_at_zero", "w1_step", "n_atoms")


@dataclass(frozen=True)
class FixedPointReport:
    iterate: AtomicMeasure
    iterations: int
    w1_step: float
    mass_at_zero: float
    mean: float
    variance: float
    predicted_variance: Optional[float]
    converged: bool
    classification: str
    history: tuple[tuple, ...]

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "w1_step": self.w1_step,
            "mass_at_zero": self.mass_at_zero,
            "mean": self.mean,
            "variance": self.variance,
            "predicted_variance": self.predicted_variance,
            "converged": self.converged,
            "classification": self.classification,
            "iterate": self.iterate.to_dict(),
        }


def _split_factors(
    B: TransferKernel, u: AtomicMeasure, v: AtomicMeasure, split_atoms: int
) -> tuple[AtomicMeasure, AtomicMeasure]:
    """Compressed laws of x1*(1-Z1) and x2*Z2; their convolution is T_B[u, v]."""
    z = B.atoms.locations
    wb = B.atoms.weights
    left_loc = (u.locations[None, :] - np.multiply.outer(z, u.locations)).reshape(-1)
    left_w = np.multiply.outer(wb, u.weights).reshape(-1)
    right_loc = np.multiply.outer(z, v.locations).reshape(-1)
    right_w = np.multiply.outer(wb, v.weights).reshape(-1)
    left, _ = compress(AtomicMeasure(left_loc, left_w), split_atoms)
    right, _ = compress(AtomicMeasure(right_loc, right_w), split_atoms)
    return left, right


def transfer_product(
    B: TransferKernel,
    u: AtomicMeasure,
    v: AtomicMeasure,
    max_atoms: int,
    split_atoms: int = 1024,
    product_cap: int = PRODUCT_HARD_CAP,
) -> AtomicMeasure:
    """T_B[u, v] compressed to max_atoms, falling back to a split product.

    When the exact enumeration would blow the atom cap (large quadrature
    kernels), the bilinear structure T_B[u, v] = law(x1*(1-Z1)) * law(x2*Z2)
    is used instead: both factor laws are built exactly, compressed to
    ``split_atoms``, and convolved.  Mass and mean stay exact either way;
    only the second moment picks up the (reported, certified) compression
    loss of the factors.
    """
    if product_size(B, u, v) <= product_cap:
        result, _ = t_b(B, u, v, max_atoms, hard_cap=product_cap)
        return result
    if split_atoms * split_atoms > product_cap:
        raise CapacityError(
            f"split_atoms={split_atoms} still exceeds the product cap {product_cap}"
        )
    left, right = _split_factors(B, u, v, split_atoms)
    loc = (left.locations[:, None] + right.locations[None, :]).reshape(-1)
    w = np.multiply.outer(left.weights, right.weights).reshape(-1)
    result, _ = compress(AtomicMeasure(loc, w), max_atoms)
    return result


def iterate_fixed_point(
    B: TransferKernel,
    u0: AtomicMeasure,
    max_iter: int = 10_000,
    tol: float = 1e-8,
    max_atoms: int = 1024,
    split_atoms: int = 1024,
    stall_window: int = 50,
) -> FixedPointReport:
    """Picard-iterate the self-transfer map from a probability measure u0.

    Stops when the W1 distance between consecutive iterates drops to ``tol``
    or after ``max_iter`` steps.  When the kernel moments separate
    (lambda1 > lambda2) the variance of the limit is predicted by
    Var(B) * mean^2 / (lambda1 - lambda2), reported alongside the measured one.

    Diffuse fixed distributions cannot push the W1 step below the atom
    budget's compression resolution, so the step typically plateaus there;
    the iteration stops early (converged=False) once ``stall_window``
    consecutive iterations bring no improvement.  Pick ``tol`` at or above
    the plateau to obtain a converged report for such kernels.
    """
    m0 = moment(u0, 0)
    if abs(m0 - 1.0) > PROBABILITY_ATOL:
        raise ValueError(f"u0 must be a probability measure, got mass {m0!r}")

    lam1, lam2 = B.lambda1, B.lambda2
    mean0 = moment(u0, 1) / m0
    predicted: Optional[float] = None
    if lam1 > lam2:
        predicted = (lam2 - lam1 * lam1) * mean0 * mean0 / (lam1 - lam2)

    u = u0
    history: list[tuple] = []
    w1_step = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        nxt = transfer_product(B, u, u, max_atoms, split_atoms=split_atoms)
        # project back onto probability measures: the map squares the mass, so
        # even 1-ulp rounding drift would compound geometrically over iterations
        nxt_mass = moment(nxt, 0)
        if nxt_mass != 1.0:
            nxt = nxt.scaled(1.0 / nxt_mass)
        w1_step = w1_distance(u, nxt)
        u = nxt
        mass = moment(u, 0)
        mean = moment(u, 1) / mass
        variance = moment(u, 2) / mass - mean * mean
        history.append(
            (iterations, mass, mean, variance, u.weight_at(0.0), w1_step, u.n_atoms)
        )
        if abs(mean - mean0) > MEAN_DRIFT_TOL:
            raise NumericalError(
                f"mean drifted from {mean0!r} to {mean!r} at iteration {iterations}"
            )
        if w1_step <= tol:
            converged = True
            break
        if stall_window and iterations >= 2 * stall_window:
            recent = min(row[5] for row in history[-stall_window:])
            earlier = min(row[5] for row in history[-2 * stall_window : -stall_window])
            if recent > 0.9 * earlier:
                break  # plateaued at the compression resolution

    mass = moment(u, 0)
    mean = moment(u, 1) / mass
    variance = moment(u, 2) / mass - mean * mean
    mass_at_zero = u.weight_at(0.0)

    if mass_at_zero > 1.0 - tol:
        classification = "dirac_at_zero"
    elif variance < tol * mean * mean:
        classification = "dirac_at_Z"
    elif converged and float(u.weights.max()) < DIFFUSE_WEIGHT_CAP:
        classification = "diffuse_candidate"
    else:
        classification = "not_converged"

    return FixedPointReport(
        iterate=u,
        iterations=iterations,
        w1_step=w1_step,
        mass_at_zero=mass_at_zero,
        mean=mean,
        variance=variance,
        predicted_variance=predicted,
        converged=converged,
        classification=classification,
        history=tuple(history),
    )


def dirac_displacement(B: TransferKernel, Z: float) -> float:
    """W1 between the self-transfer of a point mass at Z > 0 and that point mass.

    Zero exactly when the kernel is a single atom; positive otherwise.
    """
    if Z <= 0.0:
        raise ValueError("Z must be positive")
    point = AtomicMeasure.dirac(Z)
    image, _ = t_b(B, point, point, max_atoms=B.n_atoms * B.n_atoms)
    return w1_distance(image, point)


def zero_mass_flow(B: TransferKernel, u: AtomicMeasure) -> float:
    """Exact weight that the self-transfer of u places at the origin."""
    image, _ = t_b(B, u, u, max_atoms=PRODUCT_HARD_CAP)
    return image.weight_at(0.0)
