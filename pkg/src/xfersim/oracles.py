"""Independent brute-force references used by tests, acceptance runs and `compare`.

These deliberately share no code path with the implementations they check:
the product oracle is a plain four-deep loop with dict accumulation, and the
moment oracle integrates the closed three-moment system with classic RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateMassError
from .kernels import TransferKernel
from .measures import AtomicMeasure

ENUMERATION_CAP = 1_000_000


def enumerate_t_b(B: TransferKernel, u: AtomicMeasure, v: AtomicMeasure) -> AtomicMeasure:
    """Exhaustive enumeration of the transfer product for small instances.

    Four nested loops over (z1, z2, x1, x2); weights for coinciding locations
    are accumulated with exactly rounded summation, so the result is
    bitwise comparable with the vectorized operator.
    """
    count = B.n_atoms * B.n_atoms * u.n_atoms * v.n_atoms
    if count > ENUMERATION_CAP:
        raise ValueError(
            f"instance with {count} outcomes exceeds the enumeration cap {ENUMERATION_CAP}"
        )
    terms: dict[float, list[float]] = {}
    for z1, wb1 in zip(B.atoms.locations, B.atoms.weights):
        for z2, wb2 in zip(B.atoms.locations, B.atoms.weights):
            for x1, wu in zip(u.locations, u.weights):
                for x2, wv in zip(v.locations, v.weights):
                    loc = x1 + (x2 * z2 - x1 * z1)
                    terms.setdefault(float(loc), []).append(float((wb1 * wb2) * (wu * wv)))
    locations = list(terms.keys())
    weights = [math.fsum(parts) for parts in terms.values()]
    return AtomicMeasure(locations, weights)


@dataclass(frozen=True)
class MomentODEState:
    """Mass and first two moments of the population at one time."""

    t: float
    m0: float
    m1: float
    m2: float

    @property
    def mean(self) -> float:
        return self.m1 / self.m0

    @property
    def variance(self) -> float:
        return self.m2 / self.m0 - (self.m1 / self.m0) ** 2


def moment_ode_solve(
    B: TransferKernel,
    m0_0: float,
    m1_0: float,
    m2_0: float,
    c: float,
    t_end: float,
    dt: float,
) -> list[MomentODEState]:
    """Integrate the closed moment system for constant growth rate c, no source.

        dM0/dt = (c+1) M0
        dM1/dt = (c+1) M1
        dM2/dt = c M2 + (1 - 2*lam1 + 2*lam2) M2 + 2*lam1*(1-lam1) M1^2 / M0

    Classic fixed-step RK4; returns the state at every step including t=0.
    """
    if m0_0 <= 0.0:
        raise DegenerateMassError("moment ODE needs positive initial mass")
    if dt <= 0.0 or t_end < 0.0:
        raise ValueError("dt must be positive and t_end non-negative")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ValueError("t_end must be an integer multiple of dt")

    lam1, lam2 = B.lambda1, B.lambda2
    growth = c + 1.0
    quad = 1.0 - 2.0 * lam1 + 2.0 * lam2
    cross = 2.0 * lam1 * (1.0 - lam1)

    def rhs(y):
        m0, m1, m2 = y
        if m0 <= 0.0:
            raise DegenerateMassError("mass reached zero in the moment ODE")
        return (growth * m0, growth * m1, c * m2 + quad * m2 + cross * m1 * m1 / m0)

    y = (m0_0, m1_0, m2_0)
    out = [MomentODEState(0.0, *y)]
    for k in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(tuple(y[i] + 0.5 * dt * k1[i] for i in range(3)))
        k3 = rhs(tuple(y[i] + 0.5 * dt * k2[i] for i in range(3)))
        k4 = rhs(tuple(y[i] + dt * k3[i] for i in range(3)))
        y = tuple(
            y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(3)
        )
        out.append(MomentODEState((k + 1) * dt, *y))
    return out
