"""Transfer kernels: probability measures on [0, 1] in atomic form.

A kernel describes the law of the fraction of trait an individual sends to
its partner.  Kernels are always held as atomic measures; density-specified
kernels are discretized by midpoint quadrature (cell weight = cell integral)
and renormalized, so the downstream product operator stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import betainc

from .measures import AtomicMeasure, moment, sample

KERNEL_MASS_ATOL = 1e-12
DEFAULT_QUADRATURE_NODES = 512


@dataclass(frozen=True)
class DiracKernelSpec:
    """Deterministic transfer: every exchange sends the fixed fraction p."""

    p: float

    def to_dict(self) -> dict:
        return {"type": "dirac", "p": self.p}


@dataclass(frozen=True)
class AtomsKernelSpec:
    """Kernel given directly as weighted atoms on [0, 1]."""

    atoms: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {"type": "atoms", "atoms": [[z, w] for z, w in self.atoms]}


@dataclass(frozen=True)
class DensityKernelSpec:
    """Kernel with a density on [0, 1]: uniform, beta(a, b) or a sampled table."""

    name: str
    nodes: int = DEFAULT_QUADRATURE_NODES
    a: Optional[float] = None
    b: Optional[float] = None
    points: Optional[tuple[tuple[float, float], ...]] = None

    def to_dict(self) -> dict:
        out: dict = {"type": "density", "name": self.name, "nodes": self.nodes}
        if self.name == "beta":
            out["a"] = self.a
            out["b"] = self.b
        if self.name == "table":
            out["points"] = [[z, v] for z, v in self.points]
        return out


KernelSpec = Union[DiracKernelSpec, AtomsKernelSpec, DensityKernelSpec]


def parse_kernel_spec(data: dict) -> KernelSpec:
    """Build a KernelSpec from its JSON dict form."""
    if not isinstance(data, dict) or "type" not in data:
        raise ValueError('kernel spec must be an object with a "type" field')
    kind = data["type"]
    if kind == "dirac":
        return DiracKernelSpec(p=float(data["p"]))
    if kind == "atoms":
        return AtomsKernelSpec(atoms=tuple((float(z), float(w)) for z, w in data["atoms"]))
    if kind == "density":
        name = data.get("name")
        nodes = int(data.get("nodes", DEFAULT_QUADRATURE_NODES))
        if name == "uniform":
            return DensityKernelSpec(name="uniform", nodes=nodes)
        if name == "beta":
            return DensityKernelSpec(name="beta", nodes=nodes, a=float(data["a"]), b=float(data["b"]))
        if name == "table":
            pts = tuple((float(z), float(v)) for z, v in data["points"])
            return DensityKernelSpec(name="table", nodes=nodes, points=pts)
        raise ValueError(f"unknown density family {name!r}")
    raise ValueError(f"unknown kernel spec type {kind!r}")


@dataclass(frozen=True)
class TransferKernel:
    """Validated atomic kernel with cached first and second moments."""

    atoms: AtomicMeasure
    spec: KernelSpec
    lambda1: float
    lambda2: float
    mass_at_0: float
    mass_at_1: float

    @property
    def n_atoms(self) -> int:
        return self.atoms.n_atoms


def _density_weights(spec: DensityKernelSpec) -> np.ndarray:
    n = spec.nodes
    if n < 1:
        raise ValueError("quadrature_nodes must be positive")
    edges = np.linspace(0.0, 1.0, n + 1)
    if spec.name == "uniform":
        return np.full(n, 1.0 / n)
    if spec.name == "beta":
        a, b = spec.a, spec.b
        if a is None or b is None or a <= 0.0 or b <= 0.0:
            raise ValueError("beta kernel needs positive shape parameters a, b")
        cdf = betainc(a, b, edges)
        return np.diff(cdf)
    if spec.name == "table":
        pts = np.asarray(spec.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("table kernel needs at least two (z, value) points")
        zs, vals = pts[:, 0], pts[:, 1]
        if np.any(np.diff(zs) <= 0.0):
            raise ValueError("table abscissae must be strictly increasing")
        if zs[0] < 0.0 or zs[-1] > 1.0:
            raise ValueError("table abscissae must lie in [0, 1]")
        if np.any(vals < 0.0):
            raise ValueError("table density values must be non-negative")
        f = np.interp(edges, zs, vals, left=0.0, right=0.0)
        return 0.5 * (f[:-1] + f[1:]) / n
    raise ValueError(f"unknown density family {spec.name!r}")


def make_kernel(spec: KernelSpec) -> TransferKernel:
    """Construct and validate the atomic kernel for a spec.

    Dirac and Atoms specs are taken literally; Density specs are discretized
    on ``nodes`` uniform cells of [0, 1] with the cell integral as weight
    (closed form for uniform and beta, trapezoid for tables), placed at cell
    midpoints and renormalized to unit mass.
    """
    if isinstance(spec, DiracKernelSpec):
        if not 0.0 <= spec.p <= 1.0:
            raise ValueError(f"dirac kernel needs p in [0, 1], got {spec.p!r}")
        atoms = AtomicMeasure.dirac(spec.p)
    elif isinstance(spec, AtomsKernelSpec):
        atoms = AtomicMeasure.from_pairs(spec.atoms)
    elif isinstance(spec, DensityKernelSpec):
        weights = _density_weights(spec)
        total = math.fsum(weights)
        if total <= 0.0:
            raise ValueError("kernel density integrates to zero; cannot normalize")
        mids = (np.arange(spec.nodes) + 0.5) / spec.nodes
        atoms = AtomicMeasure(mids, weights / total)
    else:
        raise ValueError(f"unsupported kernel spec {spec!r}")

    if atoms.n_atoms == 0:
        raise ValueError("kernel has no atoms")
    if atoms.locations[0] < 0.0 or atoms.locations[-1] > 1.0:
        raise ValueError("kernel support must lie in [0, 1]")
    m0 = moment(atoms, 0)
    if abs(m0 - 1.0) > KERNEL_MASS_ATOL:
        raise ValueError(f"kernel mass must be 1 within {KERNEL_MASS_ATOL}, got {m0!r}")

    lam1 = moment(atoms, 1)
    lam2 = moment(atoms, 2)
    return TransferKernel(
        atoms=atoms,
        spec=spec,
        lambda1=lam1,
        lambda2=lam2,
        mass_at_0=atoms.weight_at(0.0),
        mass_at_1=atoms.weight_at(1.0),
    )


def kernel_sample(kernel: TransferKernel, rng: np.random.Generator) -> float:
    """One draw of the transferred fraction; deterministic for a seeded rng."""
    return float(sample(kernel.atoms, 1, rng)[0])
