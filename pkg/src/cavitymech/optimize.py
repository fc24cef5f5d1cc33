"""Derivative-free operating-point search and parameter sweeps.

Both optimizers evaluate a deterministic coarse grid, then refine from the
best feasible cell with a Nelder-Mead simplex in normalized coordinates.
Infeasible points are reported, never raised.
"""

from __future__ import annotations

import itertools
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import minimize

from . import gaussian as gs
from .model import (
    TWO_PI,
    Comparison,
    Drive,
    HybridSystem,
    SidebandMismatchWarning,
    cooling_rate,
    final_occupation,
    zero_point_motion,
)
from .transfer import InputState, TransferProtocol, ideal_swap_time, simulate_transfer

__all__ = [
    "CoolingBounds",
    "TransferBounds",
    "OperatingPoint",
    "optimize_cooling",
    "optimize_transfer",
    "Axis",
    "SweepTable",
    "sweep",
    "METRICS",
]

GRID_POINTS = 32


@dataclass(frozen=True)
class CoolingBounds:
    """Search box for a single cavity: detuning in rad/s, |alpha|^2."""

    detuning: tuple[float, float]
    n_photons: tuple[float, float]
    cavity_index: int = 0


@dataclass(frozen=True)
class TransferBounds:
    """Per-cavity |alpha|^2 boxes (system cavity order) and duration options.

    ``duration`` is a fixed duration in seconds, or None to use the ideal
    swap time of each candidate. ``duration_scale`` bounds the co-optimized
    duration as a multiple of that ideal swap time.
    """

    n_photons: tuple[tuple[float, float], ...]
    duration: float | None = None
    duration_scale: tuple[float, float] = (0.5, 1.5)


@dataclass(frozen=True)
class OperatingPoint:
    detunings: tuple[float, ...]
    n_photons: tuple[float, ...]
    objective_value: float
    feasible: bool
    constraint_report: list[Comparison]
    couplings: tuple[float, ...] = ()
    duration: float | None = None
    grid_best: float = math.nan
    evaluations: int = 0
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "objective_value": None if not math.isfinite(self.objective_value) else self.objective_value,
            "detunings_Hz": [d / TWO_PI for d in self.detunings],
            "n_photons": list(self.n_photons),
            "couplings_Hz": [g / TWO_PI for g in self.couplings],
            "duration_s": self.duration,
            "grid_best": None if not math.isfinite(self.grid_best) else self.grid_best,
            "evaluations": self.evaluations,
            "constraints": [c.as_dict() for c in self.constraint_report],
            "diagnostics": self.diagnostics,
        }


def _with_drives(system: HybridSystem, updates: dict[int, Drive]) -> HybridSystem:
    cavities = tuple((c, updates.get(i, d)) for i, (c, d) in enumerate(system.cavities))
    return replace(system, cavities=cavities)


def _axis_values(lo: float, hi: float, n: int, log: bool) -> np.ndarray:
    if log:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


class _Box:
    """Map between the unit cube and the physical search box."""

    def __init__(self, ranges: Sequence[tuple[float, float]], logs: Sequence[bool]):
        self.lo = np.array([math.log(r[0]) if lg else r[0] for r, lg in zip(ranges, logs)])
        self.hi = np.array([math.log(r[1]) if lg else r[1] for r, lg in zip(ranges, logs)])
        self.logs = list(logs)

    def to_physical(self, u: np.ndarray) -> np.ndarray:
        z = self.lo + np.asarray(u) * (self.hi - self.lo)
        return np.array([math.exp(v) if lg else v for v, lg in zip(z, self.logs)])

    def to_unit(self, x: Sequence[float]) -> np.ndarray:
        z = np.array([math.log(v) if lg else v for v, lg in zip(x, self.logs)])
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        return (z - self.lo) / span


def _refine(loss: Callable[[np.ndarray], float], box: _Box, x0: np.ndarray, step: float):
    """Nelder-Mead from a grid cell; returns (best_x, best_loss, n_evals)."""
    u0 = box.to_unit(x0)
    dim = u0.size
    simplex = [u0]
    for k in range(dim):
        e = u0.copy()
        e[k] = e[k] + step if e[k] + step <= 1.0 else e[k] - step
        simplex.append(e)

    def wrapped(u):
        if np.any(u < 0) or np.any(u > 1):
            return math.inf
        return loss(box.to_physical(u))

    res = minimize(wrapped, u0, method="Nelder-Mead",
                   options={"initial_simplex": np.array(simplex), "xatol": 1e-7,
                            "fatol": 1e-14, "maxiter": 400 * dim, "maxfev": 600 * dim})
    return box.to_physical(res.x), float(res.fun), int(res.nfev)


def _cooling_constraints(system: HybridSystem, margin: float) -> tuple[list[Comparison], float | None]:
    """Constraint list and steady phonon number (None if unstable)."""
    G = system.couplings()
    limit = margin * system.mech.omega_m
    report = [Comparison(f"{c.band}: {margin:g} omega_m >= Gamma", limit, g, g <= limit)
              for (c, _), g in zip(system.cavities, G)]
    model = gs.linearize(system, rwa=False)
    worst = float(np.max(model.eigenvalues().real))
    stable = worst < 0
    report.append(Comparison("drift Hurwitz: -max Re(eig) > 0", -worst, 0.0, stable))
    n = gs.phonon_number(gs.steady_state(model), 0) if stable and all(r.passed for r in report) else None
    return report, n


def optimize_cooling(system: HybridSystem, bounds: CoolingBounds, margin: float = 0.45,
                     threads: int = 1) -> OperatingPoint:
    """Minimize the Gaussian steady-state phonon number over (Delta, |alpha|^2).

    Subject to Gamma <= margin * omega_m and a Hurwitz drift.
    """
    ci = bounds.cavity_index
    log_n = bounds.n_photons[0] > 0
    box = _Box([bounds.detuning, bounds.n_photons], [False, log_n])

    def point(x) -> HybridSystem:
        return _with_drives(system, {ci: Drive(float(x[0]), n_photons=float(x[1]))})

    def loss(x) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", gs.LinearizationWarning)
            _, n = _cooling_constraints(point(x), margin)
        return math.inf if n is None else n

    grid = list(itertools.product(
        _axis_values(*bounds.detuning, GRID_POINTS, False),
        _axis_values(*bounds.n_photons, GRID_POINTS, log_n)))
    values = _map(loss, grid, threads)
    best = int(np.argmin(values))
    grid_best = values[best]
    evals = len(grid)
    x_best, f_best = np.array(grid[best]), grid_best
    if math.isfinite(grid_best):
        x_ref, f_ref, n_ref = _refine(loss, box, x_best, 1.0 / GRID_POINTS)
        evals += n_ref
        if f_ref <= f_best:
            x_best, f_best = x_ref, f_ref
    final = point(x_best)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", gs.LinearizationWarning)
        report, n = _cooling_constraints(final, margin)
    feasible = n is not None
    return OperatingPoint(
        detunings=tuple(d.detuning for _, d in final.cavities),
        n_photons=tuple(float(d.n_photons) if d.n_photons is not None else math.nan
                        for _, d in final.cavities),
        objective_value=float(n) if feasible else math.inf,
        feasible=feasible,
        constraint_report=report,
        couplings=tuple(final.couplings()),
        grid_best=float(grid_best),
        evaluations=evals,
        diagnostics={"n_bath": final.n_bath,
                     "detuning_over_omega_m": x_best[0] / system.mech.omega_m},
    )


def _map(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def optimize_transfer(
    system: HybridSystem,
    bounds: TransferBounds,
    duration_mode: Literal["fixed", "co_optimized"] = "fixed",
    input_state: InputState = InputState("coherent", 1.0),
    rwa: bool = False,
    margin: float = 0.45,
    threads: int = 1,
) -> OperatingPoint:
    """Maximize Gaussian-engine transfer fidelity over the drive strengths.

    Detunings are pinned to omega_m. The grid stage uses the ideal swap time
    (or the fixed duration); with ``co_optimized`` the refinement stage adds
    the duration scale as a third coordinate. The default full linearized
    model (``rwa=False``) keeps the counter-rotating error that competes with
    mechanical decoherence.
    """
    if len(system.cavities) != 2:
        raise ValueError("optimize_transfer needs a two-cavity system")
    mech = system.mech
    xzp = zero_point_motion(mech)
    gs_ = [c.g * xzp for c, _ in system.cavities]
    logs = [b[0] > 0 for b in bounds.n_photons]
    limit = margin * mech.omega_m

    def couple(x):
        return [g * math.sqrt(n) for g, n in zip(gs_, x[:2])]

    def point(x) -> HybridSystem:
        return _with_drives(system, {i: Drive(mech.omega_m, n_photons=float(x[i])) for i in range(2)})

    def duration_for(G, scale) -> float | None:
        if bounds.duration is not None:
            return bounds.duration * scale
        if min(G) <= 0:
            return None
        return ideal_swap_time(*_em_om(system, G)) * scale

    def fidelity(x, scale=1.0) -> float:
        G = couple(x)
        if max(G) > limit:
            return -math.inf
        t = duration_for(G, scale)
        if t is None or t <= 0:
            return -math.inf
        G_em, G_om = _em_om(system, G)
        protocol = TransferProtocol(G_em, G_om, t, input_state)
        try:
            res = simulate_transfer(point(x), protocol, "gaussian", rwa=rwa, method="expm")
        except (gs.InstabilityError, ValueError):
            return -math.inf
        return res.fidelity

    axes = [_axis_values(*b, GRID_POINTS, lg) for b, lg in zip(bounds.n_photons, logs)]
    grid = list(itertools.product(*axes))
    values = _map(lambda x: fidelity(np.array(x)), grid, threads)
    best = int(np.argmax(values))
    grid_best = values[best]
    evals = len(grid)
    x_best = np.array(grid[best])
    scale_best = 1.0
    f_best = grid_best

    if math.isfinite(grid_best):
        if duration_mode == "co_optimized":
            box = _Box(list(bounds.n_photons) + [bounds.duration_scale], logs + [False])
            x0 = np.append(x_best, 1.0)
            xr, fr, nr = _refine(lambda x: -fidelity(x[:2], x[2]), box, x0, 1.0 / GRID_POINTS)
            if -fr >= f_best:
                x_best, scale_best, f_best = xr[:2], float(xr[2]), -fr
        elif duration_mode == "fixed":
            box = _Box(list(bounds.n_photons), logs)
            xr, fr, nr = _refine(lambda x: -fidelity(x), box, x_best, 1.0 / GRID_POINTS)
            if -fr >= f_best:
                x_best, f_best = xr, -fr
        else:
            raise ValueError(f"unknown duration_mode {duration_mode!r}")
        evals += nr

    G = couple(x_best)
    G_em, G_om = _em_om(system, G)
    final = point(x_best)
    feasible = math.isfinite(f_best)
    report = [Comparison(f"{c.band}: {margin:g} omega_m >= Gamma", limit, g, g <= limit)
              for (c, _), g in zip(system.cavities, G)]
    mismatch = abs(G_em - G_om) / G_em if G_em > 0 else math.inf
    return OperatingPoint(
        detunings=tuple(d.detuning for _, d in final.cavities),
        n_photons=tuple(float(v) for v in x_best),
        objective_value=float(f_best) if feasible else -math.inf,
        feasible=feasible,
        constraint_report=report,
        couplings=tuple(G),
        duration=duration_for(G, scale_best) if feasible else None,
        grid_best=float(grid_best),
        evaluations=evals,
        diagnostics={"rate_mismatch": mismatch, "Gamma_EM_Hz": G_em / TWO_PI,
                     "Gamma_OM_Hz": G_om / TWO_PI, "duration_scale": scale_best},
    )


def _em_om(system: HybridSystem, G: Sequence[float]) -> tuple[float, float]:
    by_band = {c.band: g for (c, _), g in zip(system.cavities, G)}
    return by_band["microwave"], by_band["optical"]


# --- sweeps -------------------------------------------------------------

_MECH_KEYS = {"omega_m_Hz": ("omega_m", TWO_PI), "gamma_m_Hz": ("gamma_m", TWO_PI),
              "mass_kg": ("mass", 1.0), "T_bath_K": ("T_bath", 1.0)}
_DRIVE_KEYS = {"detuning_Hz": ("detuning", TWO_PI), "n_photons": ("n_photons", 1.0),
               "input_power_W": ("input_power", 1.0)}
_CAV_KEYS = {"gamma_Hz": ("gamma", TWO_PI), "gamma_ext_Hz": ("gamma_ext", TWO_PI),
             "omega_c_Hz": ("omega_c", TWO_PI), "g_Hz_per_m": ("g", TWO_PI),
             "n_thermal": ("n_thermal", 1.0)}
_AXIS_RE = re.compile(r"^(mech|cavity(\d))\.(\w+)$")


@dataclass(frozen=True)
class Axis:
    """A swept parameter, e.g. ``Axis("cavity0.detuning_Hz", values)``."""

    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not 1 <= len(self.values) <= 1024:
            raise ValueError(f"axis {self.name!r} needs 1 to 1024 points")
        _parse_axis(self.name)


def _parse_axis(name: str):
    m = _AXIS_RE.match(name)
    if not m:
        raise ValueError(f"bad axis name {name!r}; expected mech.<key> or cavity<i>.<key>")
    key = m.group(3)
    if m.group(1) == "mech":
        if key not in _MECH_KEYS:
            raise ValueError(f"unknown mechanical key {key!r}; known: {sorted(_MECH_KEYS)}")
        return ("mech", None, key)
    if key not in _DRIVE_KEYS and key not in _CAV_KEYS:
        raise ValueError(f"unknown cavity key {key!r}; known: {sorted(_DRIVE_KEYS) + sorted(_CAV_KEYS)}")
    return ("cavity", int(m.group(2)), key)


def _apply(system: HybridSystem, name: str, value: float) -> HybridSystem:
    where, idx, key = _parse_axis(name)
    if where == "mech":
        attr, scale = _MECH_KEYS[key]
        return replace(system, mech=replace(system.mech, **{attr: value * scale}))
    if idx >= len(system.cavities):
        raise ValueError(f"axis {name!r} refers to a missing cavity")
    cav, drive = system.cavities[idx]
    if key in _DRIVE_KEYS:
        attr, scale = _DRIVE_KEYS[key]
        if attr in ("n_photons", "input_power"):
            other = "input_power" if attr == "n_photons" else "n_photons"
            drive = replace(drive, **{attr: value * scale, other: None})
        else:
            drive = replace(drive, **{attr: value * scale})
    else:
        attr, scale = _CAV_KEYS[key]
        cav = replace(cav, **{attr: value * scale})
    cavities = list(system.cavities)
    cavities[idx] = (cav, drive)
    return replace(system, cavities=tuple(cavities))


def _metric_n_final(system: HybridSystem) -> float:
    model = gs.linearize(system, rwa=False)
    if not model.is_hurwitz():
        return math.nan
    return gs.phonon_number(gs.steady_state(model), 0)


def _metric_n_closed(system: HybridSystem) -> float:
    cav, drive = system.cavities[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SidebandMismatchWarning)
        rate = cooling_rate(system.mech, cav, drive)
    return final_occupation(system.mech, rate, "rate_balance", system.convention)


def _metric_gamma_cool(system: HybridSystem) -> float:
    cav, drive = system.cavities[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SidebandMismatchWarning)
        return cooling_rate(system.mech, cav, drive) / TWO_PI


def _metric_gamma(system: HybridSystem) -> float:
    return system.couplings()[0] / TWO_PI


def _metric_fidelity(system: HybridSystem) -> float:
    G_em, G_om = _em_om(system, system.couplings())
    if min(G_em, G_om) <= 0:
        return 0.0
    protocol = TransferProtocol(G_em, G_om, ideal_swap_time(G_em, G_om))
    try:
        return simulate_transfer(system, protocol, "gaussian", rwa=False, method="expm").fidelity
    except gs.InstabilityError:
        return math.nan


METRICS: dict[str, Callable[[HybridSystem], float]] = {
    "n_final": _metric_n_final,
    "n_final_closed": _metric_n_closed,
    "Gamma_cool_Hz": _metric_gamma_cool,
    "Gamma_Hz": _metric_gamma,
    "fidelity": _metric_fidelity,
}


@dataclass(frozen=True)
class SweepTable:
    columns: tuple[str, ...]
    rows: list[tuple[float, ...]]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(f"{v:.12g}" for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def sweep(system_template: HybridSystem, axis_specs: Sequence[Axis], metric: str = "n_final",
          threads: int = 1) -> SweepTable:
    """Evaluate ``metric`` on the Cartesian product of the axes, row-major."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; known: {sorted(METRICS)}")
    if not 1 <= len(axis_specs) <= 3:
        raise ValueError("sweeps take one to three axes")
    fn = METRICS[metric]
    combos = list(itertools.product(*(ax.values for ax in axis_specs)))

    def evaluate(values):
        system = system_template
        for ax, v in zip(axis_specs, values):
            system = _apply(system, ax.name, v)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", gs.LinearizationWarning)
            return fn(system)

    results = _map(evaluate, combos, threads)
    rows = [tuple(c) + (float(r),) for c, r in zip(combos, results)]
    return SweepTable(tuple(ax.name for ax in axis_specs) + (metric,), rows)
