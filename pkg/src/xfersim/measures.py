"""Atomic measures on the half-line.

The whole library represents populations as finite sums of weighted Dirac
masses on [0, +inf).  This module owns that representation plus the handful
of primitives everything else is built from: moments, moment-preserving
compression, the 1-D Wasserstein and total-variation distances, and seeded
sampling.

Conventions
-----------
* Atoms are stored sorted with strictly increasing locations; coinciding
  locations are merged at construction.  Weights of coinciding atoms are
  combined with exactly rounded summation (`math.fsum`), so the canonical
  form does not depend on enumeration order.
* Locations within ``ZERO_SNAP`` of the origin are snapped to exactly 0.0;
  the atom at 0 is bookkept separately (it is never merged away by
  compression) because several diagnostics depend on the exact mass at the
  origin.
* Instances are immutable; the backing arrays are marked read-only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMeasureError, UnequalMassError

ZERO_SNAP = 1e-12
MASS_MATCH_RTOL = 1e-9
_FSUM_GROUP_LIMIT = 4096


def _canonical_arrays(locations: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if locations.ndim != 1 or locations.shape != weights.shape:
        raise ValueError("locations and weights must be 1-D arrays of equal length")
    if locations.size and (not np.all(np.isfinite(locations)) or not np.all(np.isfinite(weights))):
        raise ValueError("atom locations and weights must be finite")
    if np.any(weights < 0.0):
        raise ValueError("atom weights must be non-negative")
    if np.any(locations < -ZERO_SNAP):
        raise ValueError("atom locations must be non-negative")

    keep = weights > 0.0
    if not keep.all():
        locations = locations[keep]
        weights = weights[keep]
    locations = locations.copy()
    locations[np.abs(locations) <= ZERO_SNAP] = 0.0

    order = np.argsort(locations, kind="stable")
    locations = locations[order]
    weights = weights[order]

    if locations.size:
        starts = np.flatnonzero(np.r_[True, locations[1:] != locations[:-1]])
        if starts.size != locations.size:
            sizes = np.diff(np.append(starts, locations.size))
            multi = np.flatnonzero(sizes > 1)
            if multi.size <= _FSUM_GROUP_LIMIT:
                # exactly rounded per-group sums: canonical weights do not
                # depend on enumeration order (small instances, oracle checks)
                merged = weights[starts].copy()
                for gi in multi:
                    s = starts[gi]
                    merged[gi] = math.fsum(weights[s : s + sizes[gi]])
            else:
                merged = np.add.reduceat(weights, starts)
            locations = locations[starts]
            weights = merged
    return locations, weights


class AtomicMeasure:
    """Finite non-negative combination of Dirac masses on [0, +inf)."""

    __slots__ = ("locations", "weights")

    def __init__(self, locations: Iterable[float], weights: Iterable[float]):
        locs = np.atleast_1d(np.asarray(locations, dtype=float))
        ws = np.atleast_1d(np.asarray(weights, dtype=float))
        locs, ws = _canonical_arrays(locs, ws)
        locs.setflags(write=False)
        ws.setflags(write=False)
        self.locations: np.ndarray = locs
        self.weights: np.ndarray = ws

    # -- constructors ---------------------------------------------------------
    @classmethod
    def _wrap(cls, locations: np.ndarray, weights: np.ndarray) -> "AtomicMeasure":
        """Adopt arrays that are already canonical (internal fast path)."""
        obj = cls.__new__(cls)
        locations.setflags(write=False)
        weights.setflags(write=False)
        obj.locations = locations
        obj.weights = weights
        return obj

    @classmethod
    def dirac(cls, location: float, weight: float = 1.0) -> "AtomicMeasure":
        return cls([location], [weight])

    @classmethod
    def zero(cls) -> "AtomicMeasure":
        return cls([], [])

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "AtomicMeasure":
        pairs = list(pairs)
        if not pairs:
            return cls.zero()
        arr = np.asarray(pairs, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    # -- basic queries --------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return int(self.locations.size)

    @property
    def max_location(self) -> float:
        return float(self.locations[-1]) if self.n_atoms else 0.0

    def weight_at(self, location: float) -> float:
        """Weight carried at exactly ``location`` (0.0 when no atom sits there)."""
        i = np.searchsorted(self.locations, location)
        if i < self.n_atoms and self.locations[i] == location:
            return float(self.weights[i])
        return 0.0

    def mass(self) -> float:
        return moment(self, 0)

    def mean(self) -> float:
        m0 = moment(self, 0)
        if m0 <= 0.0:
            raise EmptyMeasureError("mean of a zero-mass measure is undefined")
        return moment(self, 1) / m0

    def variance(self) -> float:
        m0 = moment(self, 0)
        if m0 <= 0.0:
            raise EmptyMeasureError("variance of a zero-mass measure is undefined")
        mu = moment(self, 1) / m0
        return moment(self, 2) / m0 - mu * mu

    def scaled(self, factor: float) -> "AtomicMeasure":
        if factor < 0.0:
            raise ValueError("scale factor must be non-negative")
        return AtomicMeasure(self.locations, self.weights * factor)

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]}

    @classmethod
    def from_dict(cls, data: dict) -> "AtomicMeasure":
        if "atoms" not in data:
            raise ValueError('measure JSON must contain an "atoms" list')
        return cls.from_pairs(data["atoms"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AtomicMeasure":
        return cls.from_dict(json.loads(text))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["location", "weight"])
            for x, w in zip(self.locations, self.weights):
                writer.writerow([repr(float(x)), repr(float(w))])

    @classmethod
    def from_csv(cls, path) -> "AtomicMeasure":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            pairs = [(float(row["location"]), float(row["weight"])) for row in reader]
        return cls.from_pairs(pairs)

    # -- dunder ---------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return (
            self.locations.shape == other.locations.shape
            and bool(np.all(self.locations == other.locations))
            and bool(np.all(self.weights == other.weights))
        )

    def __hash__(self):
        return hash((self.locations.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        if self.n_atoms <= 4:
            body = ", ".join(f"({x:g}, {w:g})" for x, w in zip(self.locations, self.weights))
        else:
            body = f"{self.n_atoms} atoms, mass={self.mass():g}"
        return f"AtomicMeasure[{body}]"


@dataclass(frozen=True)
class CompressionReport:
    """What a compression pass did and how far it may have moved mass.

    ``w1_error_bound`` is a certified upper bound on W1(input, output): each
    pairwise barycentric merge displaces exactly 2*wi*wj/(wi+wj)*(xj-xi) of
    transport, and the bound is the sum of those costs.
    """

    merges_performed: int
    w1_error_bound: float


def moment(u: AtomicMeasure, k: int) -> float:
    """k-th raw moment, k in {0, 1, 2}, with exactly rounded summation."""
    if k not in (0, 1, 2):
        raise ValueError("moment order must be 0, 1 or 2")
    if u.n_atoms == 0:
        return 0.0
    if k == 0:
        return math.fsum(u.weights)
    if k == 1:
        return math.fsum(u.weights * u.locations)
    return math.fsum(u.weights * u.locations * u.locations)


def _thin_conflicts(idx: np.ndarray) -> np.ndarray:
    """Keep a non-adjacent subset of candidate pair indices (sorted).

    Adjacent pair indices share an atom; within each run of consecutive
    indices we keep every other one, so at least half the candidates survive.
    """
    if idx.size <= 1:
        return idx
    new_run = np.r_[True, np.diff(idx) > 1]
    run_heads = np.where(new_run, np.arange(idx.size), 0)
    np.maximum.accumulate(run_heads, out=run_heads)
    pos_in_run = np.arange(idx.size) - run_heads
    return idx[pos_in_run % 2 == 0]


def compress(u: AtomicMeasure, max_atoms: int) -> tuple[AtomicMeasure, CompressionReport]:
    """Reduce ``u`` to at most ``max_atoms`` atoms by barycentric pair merges.

    Each round merges a batch of non-conflicting adjacent pairs chosen among
    the cheapest by the second-moment loss wi*wj/(wi+wj)*(xj-xi)^2.  Mass and
    first moment are preserved exactly (to summation precision), the second
    moment never increases, and an atom at exactly 0 is never merged -- so the
    result can keep 2 atoms even when ``max_atoms`` is 1.
    """
    if max_atoms < 1:
        raise ValueError("max_atoms must be at least 1")
    if u.n_atoms <= max_atoms:
        return u, CompressionReport(0, 0.0)

    xs = u.locations.copy()
    ws = u.weights.copy()
    merges = 0
    costs_moved: list[float] = []

    while xs.size > max_atoms:
        pair_w = ws[:-1] * ws[1:] / (ws[:-1] + ws[1:])
        gaps = np.diff(xs)
        costs = pair_w * gaps * gaps
        if xs[0] == 0.0:
            costs[0] = np.inf  # the origin atom is exempt from merging
        finite = np.isfinite(costs)
        if not finite.any():
            break

        excess = xs.size - max_atoms
        k = min(excess, int(finite.sum()))
        if k < costs.size:
            idx = np.argpartition(costs, k - 1)[:k]
            idx = idx[np.isfinite(costs[idx])]
            idx.sort()
        else:
            idx = np.flatnonzero(finite)
        sel = _thin_conflicts(idx)

        wl, wr = ws[sel], ws[sel + 1]
        xl, xr = xs[sel], xs[sel + 1]
        tot = wl + wr
        costs_moved.append(float(np.sum(2.0 * wl * wr / tot * (xr - xl))))
        xs[sel] = (wl * xl + wr * xr) / tot
        ws[sel] = tot
        merges += int(sel.size)

        keep = np.ones(xs.size, dtype=bool)
        keep[sel + 1] = False
        xs = xs[keep]
        ws = ws[keep]

    # barycenters stay strictly between their neighbours, so the arrays are
    # already canonical
    result = AtomicMeasure._wrap(xs, ws)
    return result, CompressionReport(merges, math.fsum(costs_moved))


def w1_distance(u: AtomicMeasure, v: AtomicMeasure) -> float:
    """Exact 1-Wasserstein distance between equal-mass atomic measures.

    Computed by merging the two quantile step functions; requires the masses
    to agree to MASS_MATCH_RTOL relative (normalize or use tv_distance
    otherwise).
    """
    mu = moment(u, 0)
    mv = moment(v, 0)
    if abs(mu - mv) > MASS_MATCH_RTOL * max(mu, mv, 1e-300):
        raise UnequalMassError(
            f"w1_distance needs equal masses, got {mu!r} and {mv!r}"
        )
    if u.n_atoms == 0 or v.n_atoms == 0:
        return 0.0

    cu = np.cumsum(u.weights)
    cv = np.cumsum(v.weights)
    bp = np.union1d(cu, cv)
    prev = np.concatenate(([0.0], bp[:-1]))
    seg = bp - prev
    iu = np.minimum(np.searchsorted(cu, prev, side="right"), u.n_atoms - 1)
    iv = np.minimum(np.searchsorted(cv, prev, side="right"), v.n_atoms - 1)
    return float(np.sum(seg * np.abs(u.locations[iu] - v.locations[iv])))


def tv_distance(u: AtomicMeasure, v: AtomicMeasure) -> float:
    """Total variation distance, sup of int(phi d(u-v)) over |phi| <= 1.

    For atomic measures this is the sum of |weight differences| over the
    union of atom locations (no 1/2 factor).
    """
    if u.n_atoms == 0 and v.n_atoms == 0:
        return 0.0
    grid = np.union1d(u.locations, v.locations)
    wu = np.zeros(grid.size)
    wv = np.zeros(grid.size)
    wu[np.searchsorted(grid, u.locations)] = u.weights
    wv[np.searchsorted(grid, v.locations)] = v.weights
    return float(np.sum(np.abs(wu - wv)))


def sample(u: AtomicMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from u normalized to a probability measure."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    m = moment(u, 0)
    if m <= 0.0:
        raise EmptyMeasureError("cannot sample from a zero-mass measure")
    if n == 0:
        return np.empty(0, dtype=float)
    p = u.weights / m
    p = p / p.sum()
    idx = rng.choice(u.n_atoms, size=n, p=p)
    return u.locations[idx]
