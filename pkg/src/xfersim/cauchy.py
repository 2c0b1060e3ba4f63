"""Time integration of the transfer Cauchy problem.

The evolution combines per-trait growth h, an external source g and the
normalized self-transfer term.  Three schemes are provided:

* ``atomic_euler`` -- explicit stepping of the Duhamel form on atomic
  measures.  Growth is applied as an exact per-atom exponential, and source
  and transfer deposits are weighted by phi_h(x) = (exp(h(x) dt) - 1)/h(x)
  rather than plain dt, so for constant h the discrete mass and mean
  identities hold to rounding, not just to O(dt).
* ``grid_picard`` -- the truncated, mollified problem on a uniform grid over
  [eps, 1/eps], solved window by window with Picard iteration of the
  integral form (midpoint quadrature in time).
* ``particles`` -- a stochastic agent scheme restricted to g = 0 and
  constant h.

All schemes emit the same trajectory shape: measure snapshots plus one
diagnostics row per snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateMassError,
    WindowTooLargeError,
)
from .kernels import KernelSpec, TransferKernel, make_kernel, parse_kernel_spec
from .measures import AtomicMeasure, compress, moment, sample, tv_distance
from .transfer import PRODUCT_HARD_CAP, product_size, raw_product

MASS_FLOOR = 1e-12
TRAJECTORY_COLUMNS = ("t", "mass", "mean", "variance", "mass_at_zero", "tv_rate", "n_atoms")
SOLVER_MODES = ("atomic_euler", "grid_picard", "particles")


# ---------------------------------------------------------------------------
# growth specifications
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ConstantGrowth:
    c: float

    time_dependent = False

    def rate(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), self.c, dtype=float)

    def rate_integral(self, t0: float, t1: float, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), self.c * (t1 - t0), dtype=float)

    def sup_rate(self) -> float:
        return self.c

    def slope_bound(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"type": "constant", "c": self.c}


@dataclass(frozen=True)
class AffineCappedGrowth:
    """h(t, x) = a + b * min(x, xcap); time-independent, Lipschitz slope |b|."""

    a: float
    b: float
    xcap: float

    time_dependent = False

    def rate(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.a + self.b * np.minimum(np.asarray(x, dtype=float), self.xcap)

    def rate_integral(self, t0: float, t1: float, x: np.ndarray) -> np.ndarray:
        return self.rate(t0, x) * (t1 - t0)

    def sup_rate(self) -> float:
        return self.a + max(self.b * self.xcap, 0.0)

    def slope_bound(self) -> float:
        return abs(self.b)

    def to_dict(self) -> dict:
        return {"type": "affine_capped", "a": self.a, "b": self.b, "xcap": self.xcap}


@dataclass(frozen=True)
class TableGrowth:
    """Bilinear interpolation of tabulated h values, clamped at the edges."""

    times: tuple[float, ...]
    locations: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]  # values[i][j] = h(times[i], locations[j])

    time_dependent = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.locations, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or x.ndim != 1 or v.shape != (t.size, x.size):
            raise ConfigError("table growth needs values shaped (len(times), len(locations))")
        if t.size < 1 or x.size < 1:
            raise ConfigError("table growth needs at least one time and one location")
        if np.any(np.diff(t) <= 0.0) or np.any(np.diff(x) <= 0.0):
            raise ConfigError("table growth knots must be strictly increasing")

    def _row(self, t: float) -> np.ndarray:
        ts = np.asarray(self.times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if t <= ts[0]:
            return vals[0]
        if t >= ts[-1]:
            return vals[-1]
        i = int(np.searchsorted(ts, t, side="right") - 1)
        frac = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - frac) * vals[i] + frac * vals[i + 1]

    def rate(self, t: float, x: np.ndarray) -> np.ndarray:
        xs = np.asarray(self.locations, dtype=float)
        return np.interp(np.asarray(x, dtype=float), xs, self._row(t))

    def rate_integral(self, t0: float, t1: float, x: np.ndarray) -> np.ndarray:
        # piecewise linear in t, so the trapezoid rule over the knots is exact
        ts = np.asarray(self.times, dtype=float)
        knots = [t0] + [float(t) for t in ts if t0 < t < t1] + [t1]
        x = np.asarray(x, dtype=float)
        total = np.zeros(np.shape(x))
        for a, b in zip(knots[:-1], knots[1:]):
            total += 0.5 * (b - a) * (self.rate(a, x) + self.rate(b, x))
        return total

    def sup_rate(self) -> float:
        return float(np.max(self.values))

    def slope_bound(self) -> float:
        xs = np.asarray(self.locations, dtype=float)
        if xs.size < 2:
            return 0.0
        v = np.asarray(self.values, dtype=float)
        quot = np.abs(np.diff(v, axis=1)) / np.diff(xs)[None, :]
        return float(np.max(quot))

    def to_dict(self) -> dict:
        return {
            "type": "table",
            "times": list(self.times),
            "locations": list(self.locations),
            "values": [list(row) for row in self.values],
        }


GrowthSpec = Union[ConstantGrowth, AffineCappedGrowth, TableGrowth]


def parse_growth(data: dict) -> GrowthSpec:
    kind = data.get("type")
    if kind == "constant":
        return ConstantGrowth(c=float(data["c"]))
    if kind == "affine_capped":
        return AffineCappedGrowth(a=float(data["a"]), b=float(data["b"]), xcap=float(data["xcap"]))
    if kind == "table":
        return TableGrowth(
            times=tuple(float(t) for t in data["times"]),
            locations=tuple(float(x) for x in data["locations"]),
            values=tuple(tuple(float(v) for v in row) for row in data["values"]),
        )
    raise ConfigError(f"unknown growth spec type {kind!r}")


# ---------------------------------------------------------------------------
# source specification (piecewise constant in time)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SourcePiece:
    t_start: float
    t_end: float
    measure: AtomicMeasure


@dataclass(frozen=True)
class SourceSpec:
    pieces: tuple[SourcePiece, ...] = ()

    def __post_init__(self):
        ordered = sorted(self.pieces, key=lambda p: p.t_start)
        for piece in ordered:
            if piece.t_end <= piece.t_start:
                raise ConfigError("source piece must have t_end > t_start")
        for a, b in zip(ordered[:-1], ordered[1:]):
            if b.t_start < a.t_end:
                raise ConfigError("source pieces must not overlap in time")

    def at(self, t: float) -> Optional[AtomicMeasure]:
        for piece in self.pieces:
            if piece.t_start <= t < piece.t_end:
                return piece.measure
        return None

    def to_dict(self) -> dict:
        return {
            "pieces": [
                {"t_start": p.t_start, "t_end": p.t_end, "measure": p.measure.to_dict()}
                for p in self.pieces
            ]
        }


def parse_source(data: dict) -> SourceSpec:
    pieces = tuple(
        SourcePiece(
            t_start=float(p["t_start"]),
            t_end=float(p["t_end"]),
            measure=AtomicMeasure.from_dict(p["measure"]),
        )
        for p in data.get("pieces", [])
    )
    return SourceSpec(pieces=pieces)


# ---------------------------------------------------------------------------
# solver settings and scenario
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SolverSettings:
    mode: str
    dt: float
    t_end: float
    max_atoms: int = 256
    seed: int = 0
    snapshot_every: int = 10
    transfer_atoms: Optional[int] = None
    n_particles: int = 100_000
    particle_pairing: str = "one_sided"
    eps: float = 0.01
    nx: int = 2048
    picard_tol: float = 1e-10
    picard_max: int = 50
    window: float = 0.1
    mollifier_orientation: str = "paper"

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "dt": self.dt,
            "t_end": self.t_end,
            "max_atoms": self.max_atoms,
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "n_particles": self.n_particles,
            "particle_pairing": self.particle_pairing,
            "eps": self.eps,
            "nx": self.nx,
            "picard_tol": self.picard_tol,
            "picard_max": self.picard_max,
            "window": self.window,
            "mollifier_orientation": self.mollifier_orientation,
        }
        if self.transfer_atoms is not None:
            out["transfer_atoms"] = self.transfer_atoms
        return out


def parse_solver(data: dict) -> SolverSettings:
    known = {f.name for f in SolverSettings.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown solver settings: {sorted(unknown)}")
    return SolverSettings(**data)


def validate_solver(st: SolverSettings) -> list[str]:
    problems = []
    if st.mode not in SOLVER_MODES:
        problems.append(f"solver.mode must be one of {SOLVER_MODES}, got {st.mode!r}")
    if not st.dt > 0.0:
        problems.append("solver.dt must be positive")
    if not st.t_end > 0.0:
        problems.append("solver.t_end must be positive")
    if st.max_atoms < 2:
        problems.append("solver.max_atoms must be at least 2")
    if st.transfer_atoms is not None and st.transfer_atoms < 2:
        problems.append("solver.transfer_atoms must be at least 2 when set")
    if st.snapshot_every < 1:
        problems.append("solver.snapshot_every must be at least 1")
    if not 0.0 < st.eps < 1.0:
        problems.append("solver.eps must lie in (0, 1)")
    if st.nx < 16:
        problems.append("solver.nx must be at least 16")
    if not st.window > 0.0:
        problems.append("solver.window must be positive")
    if st.particle_pairing not in ("one_sided", "symmetric"):
        problems.append("solver.particle_pairing must be 'one_sided' or 'symmetric'")
    if st.mollifier_orientation not in ("paper", "mirrored"):
        problems.append("solver.mollifier_orientation must be 'paper' or 'mirrored'")
    if st.mode == "particles":
        if st.n_particles < 1:
            problems.append("solver.n_particles must be positive")
        if st.dt > 1.0:
            problems.append("particle mode needs dt <= 1 (per-step event probability)")
    return problems


@dataclass(frozen=True)
class Scenario:
    kernel: KernelSpec
    initial: AtomicMeasure
    growth: GrowthSpec
    source: SourceSpec
    solver: SolverSettings
    c_bar: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "kernel": self.kernel.to_dict(),
            "initial": self.initial.to_dict(),
            "growth": self.growth.to_dict(),
            "source": self.source.to_dict(),
            "solver": self.solver.to_dict(),
        }
        if self.c_bar is not None:
            out["bounds"] = {"c_bar": self.c_bar}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            kernel = parse_kernel_spec(data["kernel"])
            initial = AtomicMeasure.from_dict(data["initial"])
            growth = parse_growth(data.get("growth", {"type": "constant", "c": -1.0}))
            source = parse_source(data.get("source", {"pieces": []}))
            solver = parse_solver(data["solver"])
        except KeyError as exc:
            raise ConfigError(f"scenario is missing required field {exc.args[0]!r}") from exc
        bounds = data.get("bounds", {})
        c_bar = bounds.get("c_bar")
        return cls(
            kernel=kernel,
            initial=initial,
            growth=growth,
            source=source,
            solver=solver,
            c_bar=None if c_bar is None else float(c_bar),
        )


def validate_scenario(scenario: Scenario) -> list[str]:
    """All declared-invariant violations, empty when the scenario is runnable."""
    problems = validate_solver(scenario.solver)
    try:
        make_kernel(scenario.kernel)
    except ValueError as exc:
        problems.append(f"kernel: {exc}")
    if moment(scenario.initial, 0) <= 0.0:
        problems.append("initial measure must have positive mass")

    c_bar = scenario.c_bar
    if c_bar is not None:
        sup = scenario.growth.sup_rate()
        if sup > c_bar + 1e-12:
            problems.append(
                f"growth rate h reaches {sup:g}, above the declared bound c_bar={c_bar:g} "
                "(requires h(t,x) <= c_bar)"
            )
        slope = scenario.growth.slope_bound()
        if slope > c_bar + 1e-12:
            problems.append(
                f"growth slope |dh/dx| reaches {slope:g}, above the declared bound "
                f"c_bar={c_bar:g} (requires |dh/dx| <= c_bar)"
            )
        for i, piece in enumerate(scenario.source.pieces):
            quad = moment(piece.measure, 0) + moment(piece.measure, 2)
            if quad > c_bar + 1e-12:
                problems.append(
                    f"source piece {i} has int((1+y^2) dg) = {quad:g}, above the declared "
                    f"bound c_bar={c_bar:g}"
                )
    return problems


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------
@dataclass
class Trajectory:
    snapshots: list[tuple[float, AtomicMeasure]]
    diagnostics: list[tuple]
    meta: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
            for row in self.diagnostics:
                t, m0, mean, var, mz, rate, n = row
                fh.write(
                    f"{t!r},{m0!r},{mean!r},{var!r},{mz!r},{rate!r},{n}\n"
                )

    def snapshot_at(self, t: float) -> AtomicMeasure:
        for ts, u in self.snapshots:
            if abs(ts - t) <= 1e-9 * max(1.0, abs(t)):
                return u
        raise KeyError(f"no snapshot at t={t}")


class _Recorder:
    def __init__(self):
        self.snapshots: list[tuple[float, AtomicMeasure]] = []
        self.rows: list[tuple] = []

    def record(self, t: float, u: AtomicMeasure) -> None:
        m0 = moment(u, 0)
        if m0 <= 0.0:
            raise DegenerateMassError(f"snapshot at t={t} carries no mass")
        mean = moment(u, 1) / m0
        var = moment(u, 2) / m0 - mean * mean
        if self.snapshots:
            t_prev, u_prev = self.snapshots[-1]
            rate = tv_distance(u_prev, u) / (t - t_prev)
        else:
            rate = 0.0
        self.snapshots.append((t, u))
        self.rows.append((float(t), m0, mean, var, u.weight_at(0.0), rate, u.n_atoms))


def _n_steps(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError(f"t_end={t_end} must be a positive integer multiple of dt={dt}")
    return n


def _require_valid(scenario: Scenario, mode: str) -> SolverSettings:
    st = scenario.solver
    if st.mode != mode:
        raise ConfigError(f"scenario solver mode is {st.mode!r}, expected {mode!r}")
    problems = validate_scenario(scenario)
    if problems:
        raise ConfigError("; ".join(problems))
    return st


def _duhamel_weight(h: np.ndarray, dt: float) -> np.ndarray:
    """Exact integral of exp(h * s) over one step: (exp(h dt) - 1)/h, -> dt as h -> 0."""
    h = np.asarray(h, dtype=float)
    out = np.full(h.shape, dt)
    nz = np.abs(h) > 1e-12
    out[nz] = np.expm1(h[nz] * dt) / h[nz]
    return out


# ---------------------------------------------------------------------------
# atomic mild-Euler scheme
# ---------------------------------------------------------------------------
def evolve_atomic(scenario: Scenario) -> Trajectory:
    """Explicit Duhamel stepping of the Cauchy problem on atomic measures.

    Per step: decay every atom by exp(h dt), deposit the active source piece
    and the normalized self-transfer product with their exact one-step
    Duhamel weights, then compress back to the atom budget.
    """
    st = _require_valid(scenario, "atomic_euler")
    B = make_kernel(scenario.kernel)
    growth = scenario.growth
    source = scenario.source
    n_steps = _n_steps(st.t_end, st.dt)
    dt = st.dt

    u = scenario.initial
    rec = _Recorder()
    rec.record(0.0, u)

    for k in range(n_steps):
        t = k * dt
        mass = moment(u, 0)
        if mass < MASS_FLOOR:
            raise DegenerateMassError(f"population mass {mass!r} collapsed at t={t}")

        h_state = growth.rate(t, u.locations)
        if scenario.c_bar is not None and np.any(h_state > scenario.c_bar + 1e-12):
            raise ConfigError(
                f"growth rate exceeded the declared bound c_bar={scenario.c_bar} at t={t}"
            )
        parts_loc = [u.locations]
        parts_w = [u.weights * np.exp(h_state * dt)]

        g = source.at(t)
        if g is not None and g.n_atoms:
            h_src = growth.rate(t, g.locations)
            parts_loc.append(g.locations)
            parts_w.append(g.weights * _duhamel_weight(h_src, dt))

        base = u
        if st.transfer_atoms is not None and u.n_atoms > st.transfer_atoms:
            base, _ = compress(u, st.transfer_atoms)
        tr_loc, tr_w = raw_product(B, base, base)
        h_tr = growth.rate(t, tr_loc)
        parts_loc.append(tr_loc)
        parts_w.append(tr_w * (_duhamel_weight(h_tr, dt) / mass))

        combined = AtomicMeasure(np.concatenate(parts_loc), np.concatenate(parts_w))
        u, _ = compress(combined, st.max_atoms)

        step = k + 1
        if step % st.snapshot_every == 0 or step == n_steps:
            rec.record(step * dt, u)

    return Trajectory(
        snapshots=rec.snapshots,
        diagnostics=rec.rows,
        meta={"scheme": "atomic_euler", "seed": st.seed, "dt": dt, "t_end": st.t_end},
    )


# ---------------------------------------------------------------------------
# stochastic particle scheme
# ---------------------------------------------------------------------------
def evolve_particles(scenario: Scenario) -> Trajectory:
    """Agent-based scheme: equal-weight particles renewed by pair transfers.

    Restricted to g = 0 and constant h; the deterministic mass factor
    exp((c+1) dt) per step combines growth with the transfer renewal so that
    h = -1 keeps the mass constant.  ``one_sided`` pairing updates only the
    focal agent (the pair-interaction law); ``symmetric`` applies the
    exchange to both partners and conserves the pair sum exactly.
    """
    st = _require_valid(scenario, "particles")
    if any(moment(p.measure, 0) > 0.0 for p in scenario.source.pieces):
        raise ConfigError("particle mode requires a vanishing source (g = 0)")
    if not isinstance(scenario.growth, ConstantGrowth):
        raise ConfigError("particle mode requires constant growth h")
    if st.dt > 1.0:
        raise ConfigError("particle mode needs dt <= 1")

    B = make_kernel(scenario.kernel)
    n_steps = _n_steps(st.t_end, st.dt)
    rng = np.random.default_rng(st.seed)
    n = st.n_particles

    m0 = moment(scenario.initial, 0)
    if m0 <= 0.0:
        raise ConfigError("initial measure must have positive mass")
    xs = sample(scenario.initial, n, rng).copy()
    weight = m0 / n
    growth_factor = math.exp((scenario.growth.c + 1.0) * st.dt)

    rec = _Recorder()
    rec.record(0.0, AtomicMeasure(xs, np.full(n, weight)))

    for k in range(n_steps):
        if st.particle_pairing == "one_sided":
            movers = rng.random(n) < st.dt
            count = int(movers.sum())
            if count:
                partners = rng.integers(0, n, size=count)
                z1 = sample(B.atoms, count, rng)
                z2 = sample(B.atoms, count, rng)
                xi = xs[movers]
                xj = xs[partners]
                xs[movers] = xi + (xj * z2 - xi * z1)
        else:  # symmetric
            n_pairs = int(round(n * st.dt / 2.0))
            if n_pairs:
                chosen = rng.permutation(n)[: 2 * n_pairs]
                i1, i2 = chosen[:n_pairs], chosen[n_pairs:]
                z1 = sample(B.atoms, n_pairs, rng)
                z2 = sample(B.atoms, n_pairs, rng)
                x1 = xs[i1].copy()
                x2 = xs[i2].copy()
                sent1 = z1 * x1
                sent2 = z2 * x2
                xs[i1] = x1 - sent1 + sent2
                xs[i2] = x2 - sent2 + sent1
        weight *= growth_factor

        step = k + 1
        if step % st.snapshot_every == 0 or step == n_steps:
            rec.record(step * st.dt, AtomicMeasure(xs, np.full(n, weight)))

    return Trajectory(
        snapshots=rec.snapshots,
        diagnostics=rec.rows,
        meta={
            "scheme": "particles",
            "seed": st.seed,
            "dt": st.dt,
            "t_end": st.t_end,
            "n_particles": n,
            "pairing": st.particle_pairing,
        },
    )


# ---------------------------------------------------------------------------
# grid Picard scheme for the truncated, mollified problem
# ---------------------------------------------------------------------------
def _bump_cdf(s: np.ndarray) -> np.ndarray:
    """CDF of the unit mollifier: triangular bump on (1, 2), peak 2 at 1.5."""
    s = np.asarray(s, dtype=float)
    mid = np.where(s <= 1.5, 2.0 * (s - 1.0) ** 2, 1.0 - 2.0 * (2.0 - s) ** 2)
    return np.where(s <= 1.0, 0.0, np.where(s >= 2.0, 1.0, mid))


def _deposit(
    locs: np.ndarray,
    ws: np.ndarray,
    edges: np.ndarray,
    eps: float,
    orientation: str,
) -> np.ndarray:
    """Per-cell mass of the mollified atoms, truncated to the grid.

    Cell masses are the exact integrals of the mollified density over each
    cell (the mollifier is narrower than a cell in typical configurations,
    so pointwise sampling would not conserve mass).
    """
    nx = edges.size - 1
    out = np.zeros(nx)
    if locs.size == 0:
        return out
    if orientation == "paper":
        # density Gamma_eps(y - x): support (y - 2 eps, y - eps)
        support_lo = locs - 2.0 * eps
    else:
        # mirrored density Gamma_eps(x - y): support (y + eps, y + 2 eps)
        support_lo = locs + eps
    dx = edges[1] - edges[0]
    span = int(math.ceil(eps / dx)) + 1
    k0 = np.searchsorted(edges, support_lo, side="right") - 1
    for r in range(span + 1):
        k = k0 + r
        ok = (k >= 0) & (k < nx)
        if not ok.any():
            continue
        kk = k[ok]
        y = locs[ok]
        w = ws[ok]
        if orientation == "paper":
            cell = w * (_bump_cdf((y - edges[kk]) / eps) - _bump_cdf((y - edges[kk + 1]) / eps))
        else:
            cell = w * (_bump_cdf((edges[kk + 1] - y) / eps) - _bump_cdf((edges[kk] - y) / eps))
        out += np.bincount(kk, weights=cell, minlength=nx)
    return out


def _grid_measure(mids: np.ndarray, vals: np.ndarray, dx: float) -> AtomicMeasure:
    act = vals > 0.0
    return AtomicMeasure(mids[act], vals[act] * dx)


def _transfer_field(
    B: TransferKernel,
    vals: np.ndarray,
    edges: np.ndarray,
    mids: np.ndarray,
    dx: float,
    eps: float,
    orientation: str,
) -> np.ndarray:
    """Density field of the mollified, normalized self-transfer of a grid state."""
    act = np.flatnonzero(vals > 0.0)
    if act.size == 0:
        raise DegenerateMassError("grid state lost all mass")
    xa = mids[act]
    wa = vals[act] * dx
    total = math.fsum(wa)
    if total < MASS_FLOOR:
        raise DegenerateMassError(f"grid mass {total!r} under the viability floor")
    count = B.n_atoms * B.n_atoms * act.size * act.size
    if count > PRODUCT_HARD_CAP:
        raise CapacityError(
            f"grid transfer product would need {count} atoms; reduce kernel quadrature "
            "nodes or the grid resolution"
        )
    loc, w = raw_product(B, AtomicMeasure(xa, wa), AtomicMeasure(xa, wa))
    return _deposit(loc, w, edges, eps, orientation) / (total * dx)


class _NonContracting(Exception):
    pass


def _picard_window(
    B: TransferKernel,
    growth: GrowthSpec,
    source: SourceSpec,
    state0: np.ndarray,
    t0: float,
    n_sub: int,
    dt: float,
    edges: np.ndarray,
    mids: np.ndarray,
    dx: float,
    eps: float,
    orientation: str,
    picard_tol: float,
    picard_max: int,
) -> np.ndarray:
    """Solve one window of the integral form by Picard iteration.

    Returns the state at the n_sub + 1 node times t0, t0+dt, ..., t0+n_sub*dt.
    Raises _NonContracting when the sup-norm change grows three iterations
    in a row.
    """
    nx = mids.size
    # integrated growth relative to t0 on the half-step grid (trapezoid;
    # exact whenever h does not depend on time)
    half_ts = t0 + 0.5 * dt * np.arange(2 * n_sub + 1)
    rates = np.stack([growth.rate(float(t), mids) for t in half_ts])
    integ = np.zeros((2 * n_sub + 1, nx))
    np.cumsum(0.25 * dt * (rates[:-1] + rates[1:]), axis=0, out=integ[1:])
    decay_nodes = np.exp(integ[::2])
    inv_decay_mids = np.exp(-integ[1::2])

    g_fields = np.zeros((n_sub, nx))
    for l in range(n_sub):
        g = source.at(t0 + (l + 0.5) * dt)
        if g is not None and g.n_atoms:
            g_fields[l] = _deposit(g.locations, g.weights, edges, eps, orientation) / dx

    iterate = np.tile(state0, (n_sub + 1, 1))
    rise_floor = 1e-14 * max(float(np.max(state0, initial=0.0)), 1.0)
    prev_delta = math.inf
    rises = 0
    for _ in range(picard_max):
        mid_vals = 0.5 * (iterate[:-1] + iterate[1:])
        rhs = np.empty((n_sub, nx))
        for l in range(n_sub):
            rhs[l] = g_fields[l] + _transfer_field(B, mid_vals[l], edges, mids, dx, eps, orientation)
        increments = dt * inv_decay_mids * rhs
        prefix = np.vstack([np.zeros(nx), np.cumsum(increments, axis=0)])
        new = decay_nodes * (state0[None, :] + prefix)
        delta = float(np.max(np.abs(new - iterate)))
        iterate = new
        if delta <= picard_tol:
            break
        if delta > prev_delta and delta > rise_floor:
            rises += 1
            if rises >= 3:
                raise _NonContracting()
        else:
            rises = 0
        prev_delta = delta
    return iterate


def evolve_grid_picard(scenario: Scenario) -> Trajectory:
    """Window-by-window Picard solution of the truncated, mollified problem.

    State is a density on ``nx`` uniform cells over [eps, 1/eps].  The
    initial measure and the source are mollified onto the grid; the transfer
    term mollifies the exact atomic product of the current grid state.  On
    non-contraction the window is halved automatically down to a single dt
    step before giving up.
    """
    st = _require_valid(scenario, "grid_picard")
    B = make_kernel(scenario.kernel)
    eps = st.eps
    nx = st.nx
    orientation = st.mollifier_orientation
    edges = np.linspace(eps, 1.0 / eps, nx + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dx = float(edges[1] - edges[0])

    init = scenario.initial
    state = _deposit(init.locations, init.weights, edges, eps, orientation) / dx
    if math.fsum(state) * dx < MASS_FLOOR:
        raise DegenerateMassError(
            "initial measure carries no mass after mollification and truncation"
        )

    n_total = _n_steps(st.t_end, st.dt)
    rec = _Recorder()
    rec.record(0.0, _grid_measure(mids, state, dx))

    window = st.window
    step = 0
    halvings = 0
    while step < n_total:
        n_sub = min(max(1, int(round(window / st.dt))), n_total - step)
        try:
            nodes = _picard_window(
                B,
                scenario.growth,
                scenario.source,
                state,
                step * st.dt,
                n_sub,
                st.dt,
                edges,
                mids,
                dx,
                eps,
                orientation,
                st.picard_tol,
                st.picard_max,
            )
        except _NonContracting:
            if n_sub <= 1:
                raise WindowTooLargeError(
                    "Picard iteration is not contracting even on a single-step window; "
                    "reduce dt"
                ) from None
            window = window / 2.0
            halvings += 1
            continue
        for j in range(1, n_sub + 1):
            step += 1
            if step % st.snapshot_every == 0 or step == n_total:
                rec.record(step * st.dt, _grid_measure(mids, nodes[j], dx))
        state = nodes[-1]

    return Trajectory(
        snapshots=rec.snapshots,
        diagnostics=rec.rows,
        meta={
            "scheme": "grid_picard",
            "seed": st.seed,
            "dt": st.dt,
            "t_end": st.t_end,
            "eps": eps,
            "nx": nx,
            "window": window,
            "window_halvings": halvings,
            "orientation": orientation,
        },
    )


def evolve(scenario: Scenario) -> Trajectory:
    """Dispatch to the scheme selected by the scenario's solver settings."""
    mode = scenario.solver.mode
    if mode == "atomic_euler":
        return evolve_atomic(scenario)
    if mode == "grid_picard":
        return evolve_grid_picard(scenario)
    if mode == "particles":
        return evolve_particles(scenario)
    raise ConfigError(f"unknown solver mode {mode!r}")


# ---------------------------------------------------------------------------
# mild-solution residuals
# ---------------------------------------------------------------------------
def default_test_functions(cap: float = 2.0) -> tuple[tuple[str, Callable], ...]:
    return (
        ("1", lambda x: np.ones(np.shape(x))),
        ("x", lambda x: np.asarray(x, dtype=float)),
        ("x^2", lambda x: np.asarray(x, dtype=float) ** 2),
        ("exp(-x)", lambda x: np.exp(-np.asarray(x, dtype=float))),
        (f"min(x,{cap:g})", lambda x: np.minimum(np.asarray(x, dtype=float), cap)),
    )


def mild_residual(
    traj: Trajectory,
    scenario: Scenario,
    test_functions: Optional[Sequence[tuple[str, Callable]]] = None,
) -> list[tuple[str, float, float]]:
    """|LHS - RHS| of the integral identity per (test function, snapshot time).

    The time integrals are evaluated by the trapezoid rule over the
    trajectory's snapshot times, so the residual mixes the scheme's own error
    with that quadrature; it shrinks under joint dt / snapshot refinement.
    """
    if len(traj.snapshots) < 3:
        raise ValueError("mild residual needs at least 3 snapshots")
    fns = tuple(test_functions) if test_functions is not None else default_test_functions()
    B = make_kernel(scenario.kernel)
    growth = scenario.growth
    source = scenario.source
    times = np.array([t for t, _ in traj.snapshots])
    measures = [u for _, u in traj.snapshots]
    masses = [moment(u, 0) for u in measures]

    const_c = growth.c if isinstance(growth, ConstantGrowth) else None
    transfer_vals: dict[str, list[float]] = {name: [] for name, _ in fns}
    if const_c is not None:
        # with constant h the decay factor leaves the transfer integral, so
        # one product enumeration per snapshot serves every (phi, t) pair
        for u, m in zip(measures, masses):
            loc, w = raw_product(B, u, u)
            for name, fn in fns:
                transfer_vals[name].append(math.fsum(w * fn(loc)) / m)

    init = scenario.initial
    rows: list[tuple[str, float, float]] = []
    for name, fn in fns:
        for ti, t in enumerate(times):
            lhs = math.fsum(measures[ti].weights * fn(measures[ti].locations))
            decay0 = np.exp(growth.rate_integral(0.0, float(t), init.locations))
            rhs = math.fsum(init.weights * decay0 * fn(init.locations))

            if any(p.measure.n_atoms for p in source.pieces):
                src_vals = []
                for si in range(ti + 1):
                    g = source.at(float(times[si]))
                    if g is None or g.n_atoms == 0:
                        src_vals.append(0.0)
                    else:
                        dec = np.exp(growth.rate_integral(float(times[si]), float(t), g.locations))
                        src_vals.append(math.fsum(g.weights * dec * fn(g.locations)))
                if ti >= 1:
                    rhs += float(np.trapezoid(src_vals, times[: ti + 1]))

            tr_vals = []
            for si in range(ti + 1):
                s = float(times[si])
                if const_c is not None:
                    tr_vals.append(math.exp(const_c * (t - s)) * transfer_vals[name][si])
                else:
                    loc, w = raw_product(B, measures[si], measures[si])
                    dec = np.exp(growth.rate_integral(s, float(t), loc))
                    tr_vals.append(math.fsum(w * dec * fn(loc)) / masses[si])
            if ti >= 1:
                rhs += float(np.trapezoid(tr_vals, times[: ti + 1]))

            rows.append((name, float(t), abs(lhs - rhs)))
    return rows
