"""Transverse-field sweeps, critical-point detection and output files."""
from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import ci, classical, exact, fermion
from .errors import IsingError, ValidationError
from .model import CouplingSet, GridConvention, check_gamma
from .observables import ObservableRecord, StructureFactorCurve, correlations, observable_record

__all__ = [
    "Solver",
    "SweepPlan",
    "PointResult",
    "SweepResult",
    "CriticalInterval",
    "gamma_grid",
    "select_references",
    "solve_point",
    "run_sweep",
    "detect_critical_intervals",
    "occupation_intervals",
    "refine_interval",
    "locate_hx_maximum",
    "refine_hx_maximum",
    "emit_outputs",
    "CSV_COLUMNS",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("gamma", "energy_per_site", "m_z", "m_x", "h_x", "S0_cumulant", "S1", "tau", "solver", "status")
RECORD_FIELDS = tuple(f.name for f in fields(ObservableRecord))
DEFAULT_JUMP_FIELDS = ("tau", "h_x", "S0_cumulant", "S1")
WORKERS_ENV = "HYPERISING_WORKERS"
ENERGY_MONOTONE_TOL = 1e-9


class Solver(str, enum.Enum):
    EXACT = "exact"
    FERMION_PAIRWISE = "pairwise"
    FERMION_MEANFIELD = "meanfield"
    CI = "ci"


@dataclass(frozen=True)
class SweepPlan:
    couplings: CouplingSet
    solver: Solver = Solver.EXACT
    gamma_start: float = 0.0
    gamma_end: float = 2.0
    gamma_step: float = 0.05
    seed: int = 0
    ed_states: int = 2
    ci_level: int = 2
    ci_references: int = 1
    scf_tol: float = 1e-10
    scf_max_iter: int = 500
    tau_grid: GridConvention = GridConvention.CLOSED
    energy_constant: fermion.EnergyConstant = fermion.EnergyConstant.CALIBRATED
    coupling_source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver(self.solver))
        object.__setattr__(self, "tau_grid", GridConvention(self.tau_grid))
        object.__setattr__(self, "energy_constant", fermion.EnergyConstant(self.energy_constant))
        check_gamma(self.gamma_start)
        check_gamma(self.gamma_end)
        if self.gamma_start > self.gamma_end:
            raise ValidationError("gamma_start must not exceed gamma_end")
        if not self.gamma_step > 0:
            raise ValidationError("gamma_step must be positive")
        if self.ed_states < 1:
            raise ValidationError("ed_states must be >= 1")

    def with_range(self, start, end, step) -> "SweepPlan":
        return replace(self, gamma_start=start, gamma_end=end, gamma_step=step)


@dataclass(frozen=True)
class CriticalInterval:
    gamma_low: float
    gamma_high: float
    observable: str
    jump_size: float
    annotation: str = ""

    def __post_init__(self):
        for name in ("gamma_low", "gamma_high", "jump_size"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def width(self) -> float:
        return self.gamma_high - self.gamma_low

    def contains(self, gamma) -> bool:
        return self.gamma_low <= gamma <= self.gamma_high


@dataclass
class PointResult:
    gamma: float
    record: ObservableRecord | None
    status: str
    curve: StructureFactorCurve | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gamma = float(self.gamma)

    @property
    def ok(self) -> bool:
        return self.record is not None


@dataclass
class SweepResult:
    plan: SweepPlan
    points: list
    intervals: list
    warnings: list = field(default_factory=list)

    @property
    def records(self) -> list:
        return [p.record for p in self.points if p.ok]

    @property
    def gaps(self) -> int:
        return sum(1 for p in self.points if not p.ok)


def gamma_grid(start: float, end: float, step: float) -> np.ndarray:
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


def _nan_record(gamma, energy_per_site, m_x=math.nan):
    return ObservableRecord(gamma, energy_per_site, math.nan, m_x, math.nan, math.nan, math.nan, math.nan)


def _broken_symmetry_state(spectrum, tol):
    """Inside a near-degenerate ground manifold, pick the state maximizing a
    weakly site-dependent longitudinal field; deterministic and basis-free."""
    energies = spectrum.energies
    cluster = [i for i, e in enumerate(energies) if e - energies[0] <= tol]
    if len(cluster) < 2:
        return spectrum.ground
    vecs = np.array([spectrum.states[i].amplitudes for i in cluster])
    n = spectrum.ground.n
    idx = np.arange(1 << n)
    spins = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    weights = spins @ (1.0 + np.arange(n) / n**2)
    projected = vecs.conj() @ (weights[:, None] * vecs.T)
    _, evecs = np.linalg.eigh(0.5 * (projected + projected.conj().T))
    amps = evecs[:, -1] @ vecs
    return exact.QuantumState(amps / np.linalg.norm(amps))


def select_references(c, level, count):
    refs, taken = [], set()
    n_levels = 1
    while len(refs) < count:
        levels = classical.enumerate_low_lying(c, n_levels)
        candidates = [rep for lvl in levels for rep in lvl.representatives]
        for rep in candidates:
            if len(refs) == count:
                break
            if rep.bits in taken or any(rep.bits == r.bits for r in refs):
                continue
            refs.append(rep)
            taken.update(ci.build_ci_basis(rep, level, taken).members)
        if len(levels) < n_levels or n_levels >= 1 << (c.n - 1):
            break
        n_levels += 1
    return refs


def _state_point(plan, gamma, energy, state, status, extra=None):
    c = plan.couplings
    record, curve = observable_record(gamma, energy / c.n, correlations(state), c.a, plan.tau_grid)
    return PointResult(gamma, record, status, curve, extra or {})


def _solve_exact(plan, gamma):
    c = plan.couplings
    if gamma == 0.0:
        level = classical.enumerate_low_lying(c, 1)[0]
        return _state_point(plan, gamma, level.energy, level.ground, "classical",
                            {"degeneracy": level.degeneracy})
    spectrum = exact.ground_state(c, gamma, m=plan.ed_states, seed=plan.seed)
    status, state = "ok", spectrum.ground
    extra = {}
    if plan.ed_states >= 2:
        extra["gap"] = spectrum.gap
        if not exact.degeneracy_gap_check(spectrum, exact.DEGENERACY_TOL):
            warnings.warn(f"near-degenerate ground state at Gamma={gamma} (gap {spectrum.gap:.3g})",
                          RuntimeWarning, stacklevel=2)
            status = "degenerate"
            state = _broken_symmetry_state(spectrum, exact.DEGENERACY_TOL)
    return _state_point(plan, gamma, spectrum.energies[0], state, status, extra)


def _solve_pairwise(plan, gamma):
    c = plan.couplings
    sol = fermion.pairwise_ground_solution(c, gamma, plan.energy_constant)
    status = "ok" if math.isfinite(sol.sigma_z_avg) else "degenerate-mode"
    # <sz> of the rotated chain is <sx> of the original one
    return PointResult(gamma, _nan_record(gamma, sol.energy / c.n, sol.sigma_z_avg), status, None,
                       {"n0": sol.n0, "npi": sol.npi})


def _solve_meanfield(plan, gamma):
    c = plan.couplings
    sol = fermion.mean_field_solve(c, gamma, tol=plan.scf_tol, max_iter=plan.scf_max_iter,
                                   energy_constant=plan.energy_constant)
    return PointResult(gamma, _nan_record(gamma, sol.energy / c.n, sol.g), "ok", None,
                       {"n0": sol.inner.n0, "npi": sol.inner.npi, "g": sol.g, "iterations": sol.iterations})


def _ci_points(plan, gammas):
    c = plan.couplings
    refs = select_references(c, plan.ci_level, plan.ci_references)
    scan = ci.multi_reference_scan(c, refs, plan.ci_level, gammas)
    points = []
    for gamma, solutions, winner in zip(scan.gammas, scan.table, scan.winners):
        sol = solutions[winner]
        basis = scan.bases[winner]
        extra = {"reference_id": winner, "dimension": sol.dimension, "reference_weight": sol.reference_weight}
        if c.n <= exact.ED_LIMIT:
            state = ci.to_quantum_state(basis, sol)
            points.append(_state_point(plan, float(gamma), sol.energy, state, "ok", extra))
        else:
            points.append(PointResult(float(gamma), _nan_record(float(gamma), sol.energy / c.n), "ok", None, extra))
    return points


_SOLVERS = {
    Solver.EXACT: _solve_exact,
    Solver.FERMION_PAIRWISE: _solve_pairwise,
    Solver.FERMION_MEANFIELD: _solve_meanfield,
}


def solve_point(plan: SweepPlan, gamma: float) -> PointResult:
    """Solve one field value; solver failures become a failed PointResult."""
    gamma = float(gamma)
    try:
        if plan.solver is Solver.CI:
            return _ci_points(plan, [gamma])[0]
        return _SOLVERS[plan.solver](plan, gamma)
    except IsingError as exc:
        log.warning("solver failed at Gamma=%s: %s", gamma, exc)
        return PointResult(gamma, None, f"failed: {type(exc).__name__}: {exc}")


def _worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _solve_grid(plan, gammas):
    if plan.solver is Solver.CI:
        try:
            return _ci_points(plan, gammas)
        except IsingError:
            return [solve_point(plan, g) for g in gammas]
    workers = _worker_count()
    if workers > 1 and len(gammas) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(solve_point, [plan] * len(gammas), gammas))
    return [solve_point(plan, g) for g in gammas]


def _quality_warnings(plan, points, intervals):
    notes = []
    ok = [p for p in points if p.ok and math.isfinite(p.record.energy_per_site)]
    for prev, cur in zip(ok, ok[1:]):
        if cur.record.energy_per_site > prev.record.energy_per_site + ENERGY_MONOTONE_TOL:
            notes.append(
                f"energy per site increases between Gamma={prev.gamma!r} and Gamma={cur.gamma!r} "
                "(ground energy must be non-increasing in the field)"
            )
    if plan.solver is Solver.FERMION_PAIRWISE and points:
        lo, hi = points[0].gamma, points[-1].gamma
        for gc in fermion.count_transitions(plan.couplings).critical_gammas:
            if lo <= gc < hi and not any(iv.contains(gc) for iv in intervals):
                notes.append(f"analytic transition at Gamma={gc!r} not bracketed by a detected interval")
    degenerate = sum(1 for p in points if p.status == "degenerate")
    if degenerate:
        notes.append(f"{degenerate} grid point(s) have a near-degenerate ground state")
    return notes


def run_sweep(plan: SweepPlan) -> SweepResult:
    gammas = gamma_grid(plan.gamma_start, plan.gamma_end, plan.gamma_step)
    points = _solve_grid(plan, gammas)
    if plan.solver in (Solver.FERMION_PAIRWISE, Solver.FERMION_MEANFIELD):
        intervals = occupation_intervals(points)
    else:
        intervals = detect_critical_intervals([p.record for p in points if p.ok])
    result = SweepResult(plan, points, intervals)
    result.warnings = _quality_warnings(plan, points, intervals)
    for note in result.warnings:
        log.warning(note)
    return result


def occupation_intervals(points) -> list:
    """Brackets where the boundary-mode occupations of a fermionic sweep change."""
    ok = [p for p in points if p.ok and "n0" in p.extra]
    intervals = []
    for prev, cur in zip(ok, ok[1:]):
        changed = [name for name, key in ((fermion.K0, "n0"), (fermion.KPI, "npi"))
                   if prev.extra[key] != cur.extra[key]]
        if changed:
            intervals.append(CriticalInterval(prev.gamma, cur.gamma, "occupation:" + "+".join(changed), 1.0))
    return intervals


def detect_critical_intervals(records, fields=DEFAULT_JUMP_FIELDS, absolute_floor: float = 0.05,
                              multiplier: float = 8.0) -> list:
    """Consecutive-point jumps larger than max(floor, multiplier * median step).

    Brackets flagged by several fields merge into one interval; the reported
    jump is the largest among them.
    """
    records = sorted(records, key=lambda r: r.gamma)
    if len(records) < 3:
        return []
    flagged: dict[tuple, list] = {}
    for name in fields:
        if name not in RECORD_FIELDS:
            raise ValidationError(f"unknown observable {name!r}")
        series = [(r.gamma, getattr(r, name)) for r in records if math.isfinite(getattr(r, name))]
        if len(series) < 3:
            continue
        g = np.array([s[0] for s in series])
        v = np.array([s[1] for s in series])
        steps = np.abs(np.diff(v))
        threshold = max(absolute_floor, multiplier * float(np.median(steps)))
        for i in np.flatnonzero(steps > threshold):
            flagged.setdefault((float(g[i]), float(g[i + 1])), []).append((name, float(steps[i])))

    merged = []
    for (low, high) in sorted(flagged):
        hits = flagged[(low, high)]
        if merged and low < merged[-1][1]:
            prev_low, prev_high, prev_hits = merged[-1]
            merged[-1] = (prev_low, max(prev_high, high), prev_hits + hits)
        else:
            merged.append((low, high, list(hits)))
    intervals = []
    for low, high, hits in merged:
        names = list(dict.fromkeys(name for name, _ in hits))
        intervals.append(CriticalInterval(low, high, ",".join(names), max(j for _, j in hits)))
    return intervals


def _probe(plan, observable):
    if observable.startswith("occupation"):
        def value(gamma):
            point = solve_point(plan, gamma)
            if not point.ok:
                raise IsingError(point.status)
            return (point.extra["n0"], point.extra["npi"])
        return value, lambda a, b: float(a != b)

    def value(gamma):
        point = solve_point(plan, gamma)
        if not point.ok:
            raise IsingError(point.status)
        return getattr(point.record, observable)
    return value, lambda a, b: abs(a - b)


def refine_interval(plan: SweepPlan, interval: CriticalInterval, passes: int = 10) -> CriticalInterval:
    """Bisect a bracket, keeping the half that carries the larger change.

    A genuine jump keeps at least half its size while the bracket shrinks by
    2**passes; otherwise the original bracket comes back annotated
    ``no-jump``.
    """
    observable = interval.observable.split(",")[0]
    value, distance = _probe(plan, observable)
    low, high = interval.gamma_low, interval.gamma_high
    v_low, v_high = value(low), value(high)
    initial = distance(v_low, v_high)
    for _ in range(passes):
        mid = 0.5 * (low + high)
        v_mid = value(mid)
        if distance(v_low, v_mid) >= distance(v_mid, v_high):
            high, v_high = mid, v_mid
        else:
            low, v_low = mid, v_mid
    final = distance(v_low, v_high)
    if initial == 0 or final <= 0.5 * initial:
        return replace(interval, annotation=f"no-jump: change fell from {initial:.3g} to {final:.3g}, "
                                            "possible smooth crossover")
    return CriticalInterval(low, high, interval.observable, final, f"refined {passes} passes")


def locate_hx_maximum(records) -> tuple[float, bool]:
    """Location of the h_x maximum, refined by a parabola through its neighbours.

    Returns (gamma, interior); ``interior`` is False when the largest value
    sits on a grid edge.
    """
    pts = sorted((r.gamma, r.h_x) for r in records if math.isfinite(r.h_x))
    if not pts:
        raise ValidationError("no finite h_x values")
    g = np.array([p[0] for p in pts])
    h = np.array([p[1] for p in pts])
    i = int(np.argmax(h))
    if i == 0 or i == len(h) - 1:
        return float(g[i]), False
    x0, x1, x2 = g[i - 1: i + 2]
    y0, y1, y2 = h[i - 1: i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    B = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if A >= 0:
        return float(g[i]), True
    return float(-B / (2 * A)), True


def refine_hx_maximum(plan: SweepPlan, low: float, high: float, passes: int = 5) -> tuple[float, float]:
    """Golden-section search for the h_x maximum inside [low, high]."""
    value, _ = _probe(plan, "h_x")
    ratio = (math.sqrt(5) - 1) / 2
    a, b = low, high
    c1, c2 = b - ratio * (b - a), a + ratio * (b - a)
    f1, f2 = value(c1), value(c2)
    for _ in range(passes):
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - ratio * (b - a)
            f1 = value(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + ratio * (b - a)
            f2 = value(c2)
    return a, b


def _fmt(x):
    if isinstance(x, float) or isinstance(x, np.floating):
        return "" if not math.isfinite(x) else repr(float(x))
    return str(x)


def records_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    solver = result.plan.solver.value
    for p in result.points:
        if p.ok:
            rec = p.record
            row = [_fmt(getattr(rec, name)) for name in RECORD_FIELDS]
        else:
            row = [_fmt(p.gamma)] + [""] * (len(RECORD_FIELDS) - 1)
        writer.writerow(row + [solver, p.status])
    return buf.getvalue()


def surface_csv(result: SweepResult) -> tuple[str, int]:
    lines = ["gamma,k,S"]
    for p in result.points:
        if p.curve is None:
            continue
        for k, S in zip(p.curve.k, p.curve.S):
            lines.append(f"{_fmt(p.gamma)},{_fmt(k)},{_fmt(S)}")
    return "\n".join(lines) + "\n", len(lines) - 1


def interval_report(result: SweepResult) -> str:
    plan = result.plan
    lines = [
        f"# solver={plan.solver.value} N={plan.couplings.n} R={plan.couplings.radius} "
        f"grid={plan.gamma_start!r}:{plan.gamma_end!r}:{plan.gamma_step!r} seed={plan.seed}",
        "gamma_low gamma_high observable jump_size annotation",
    ]
    for iv in result.intervals:
        lines.append(f"{iv.gamma_low!r} {iv.gamma_high!r} {iv.observable} {iv.jump_size!r} {iv.annotation}".rstrip())
    for note in result.warnings:
        lines.append(f"# warning: {note}")
    return "\n".join(lines) + "\n"


def plot_spec(result: SweepResult) -> dict:
    """Vega-Lite description of the observable curves and the S(k, Gamma) map."""
    title = f"{result.plan.solver.value} sweep, N={result.plan.couplings.n}"
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "title": title,
        "vconcat": [
            {
                "data": {"url": "records.csv"},
                "transform": [{"fold": list(CSV_COLUMNS[1:8]), "as": ["observable", "value"]}],
                "mark": "line",
                "encoding": {
                    "x": {"field": "gamma", "type": "quantitative", "title": "Gamma"},
                    "y": {"field": "value", "type": "quantitative"},
                    "row": {"field": "observable", "type": "nominal"},
                },
                "resolve": {"scale": {"y": "independent"}},
            },
            {
                "data": {"url": "surface.csv"},
                "mark": "rect",
                "encoding": {
                    "x": {"field": "k", "type": "ordinal", "title": "k"},
                    "y": {"field": "gamma", "type": "ordinal", "title": "Gamma", "sort": "descending"},
                    "color": {"field": "S", "type": "quantitative", "title": "S(k)"},
                },
            },
        ],
    }


def emit_outputs(result: SweepResult, directory) -> dict:
    """Write records.csv, surface.csv, intervals.txt, plots.vl.json and a manifest."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        records = records_csv(result)
        surface, surface_rows = surface_csv(result)
        files = {
            "records.csv": (records, len(result.points)),
            "surface.csv": (surface, surface_rows),
            "intervals.txt": (interval_report(result), len(result.intervals)),
            "plots.vl.json": (json.dumps(plot_spec(result), indent=2) + "\n", 2),
        }
        for name, (text, _) in files.items():
            (directory / name).write_text(text, encoding="utf-8")
        manifest = {
            "files": [{"name": name, "rows": rows} for name, (_, rows) in files.items()],
            "gaps": result.gaps,
            "warnings": len(result.warnings),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write sweep outputs to {directory}: {exc}") from exc
    return manifest
