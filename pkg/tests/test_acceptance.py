"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the pytest terminal summary. Criterion 11 needs the
external coupling files and is skipped unless HYPERISING_SM_DIR points at a
directory holding J1.txt, J2.txt and J3.txt.
"""
import math
import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from hyperising.ci import build_ci_basis, ci_ground
from hyperising.classical import enumerate_low_lying, is_stealthy_hyperuniform
from hyperising.errors import IsingError
from hyperising.exact import ED_LIMIT, QuantumState, ground_state
from hyperising.fermion import (K0, KPI, count_transitions, mean_field_solve, mean_field_transition_count,
                                pairwise_ground_solution)
from hyperising.model import CouplingSet, GridConvention, SpinConfiguration, WaveVectorGrid, load_coupling_set
from hyperising.observables import (correlations, h_x, hyperuniformity_s0,
                                    observable_record, structure_factor, tau_metric)
from hyperising.sweep import Solver, SweepPlan, locate_hx_maximum, run_sweep

SM_ENV = "HYPERISING_SM_DIR"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def random_sets(count, seed):
    """N even in 8..20, 1 <= R <= N/2 - 1, J_r uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.choice(np.arange(8, 21, 2)))
        radius = int(rng.integers(1, n // 2))
        yield CouplingSet(n, radius, tuple(rng.uniform(-1, 1, radius)))


def test_criterion_01_free_fermion_exactness(criterion):
    with Timer() as t:
        ferro = count_transitions(CouplingSet(12, 1, (1.0,)))
        anti = count_transitions(CouplingSet(12, 1, (-1.0,)))
    ok = (ferro.count == 1 and ferro.critical_gammas == (1.0,) and ferro.mechanisms == ((K0,),)
          and anti.count == 1 and anti.critical_gammas == (1.0,) and anti.mechanisms == ((KPI,),)
          and t.elapsed < 1.0)
    criterion(1, ok, f"FM Gamma_c={ferro.critical_gammas} {ferro.mechanisms}, "
                     f"AFM Gamma_c={anti.critical_gammas} {anti.mechanisms}, {t.elapsed:.3f}s (<1s)")
    assert ok


def test_criterion_02_two_transition_bound(criterion):
    grid = np.round(np.arange(1, 21) * 0.1, 12)
    pairwise_worst, mf_worst, skipped, violations = 0, 0, 0, []
    with Timer() as t:
        for c in random_sets(1000, seed=2):
            pairwise_worst = max(pairwise_worst, count_transitions(c).count)
            try:
                report = mean_field_transition_count(c, grid)
            except IsingError:
                skipped += 1
                continue
            mf_worst = max(mf_worst, report.count)
            if report.count > 2:
                violations.append((c, report.critical_gammas))
    ok = pairwise_worst <= 2 and mf_worst <= 2 and t.elapsed < 60
    detail = (f"pairwise max={pairwise_worst} over 1000 sets; mean-field max={mf_worst} over "
              f"{1000 - skipped} converged scans ({skipped} non-converged skipped), "
              f"{len(violations)} scan(s) with >2 changes, {t.elapsed:.1f}s (<60s)")
    for c, gammas in violations[:3]:
        detail += f"\n             counterexample N={c.n} R={c.radius} J={tuple(round(j, 4) for j in c.J)} at {gammas}"
    criterion(2, ok, detail)
    assert ok


def test_criterion_03_ci_completeness(criterion):
    c = CouplingSet(8, 1, (1.0,))
    basis = build_ci_basis(SpinConfiguration.ferromagnetic(8), 8)
    errors = []
    with Timer() as t:
        for gamma in (0.2, 0.6, 1.0, 1.4):
            errors.append(abs(ci_ground(c, gamma, basis).energy - ground_state(c, gamma).energies[0]))
    ok = max(errors) <= 1e-9 and t.elapsed < 30
    criterion(3, ok, f"max |E_CI - E_ED| = {max(errors):.2e} (<=1e-9), {t.elapsed:.2f}s (<30s)")
    assert ok


def test_criterion_04_ci_variational_chain(criterion):
    c = CouplingSet(12, 1, (1.0,))
    ref = enumerate_low_lying(c, 1)[0].ground
    bases = [build_ci_basis(ref, level) for level in (1, 2, 3, 4)]
    bad = []
    with Timer() as t:
        for gamma in np.round(np.arange(1, 21) * 0.1, 12):
            e_ed = ground_state(c, gamma).energies[0]
            energies = [ci_ground(c, gamma, b).energy for b in bases]
            chain = all(a >= b - 1e-10 for a, b in zip(energies, energies[1:]))
            if not chain or energies[-1] < e_ed - 1e-10:
                bad.append(float(gamma))
    ok = not bad and t.elapsed < 300
    criterion(4, ok, f"N=12 levels 1..4, 20 points, violations at {bad}, {t.elapsed:.1f}s (<300s)")
    assert ok


def test_criterion_05_observable_anchors(criterion):
    rng = np.random.default_rng(5)
    with Timer() as t:
        product_ok = True
        for _ in range(20):
            n = int(rng.integers(4, 11))
            s = SpinConfiguration(int(rng.integers(0, 1 << n)), n)
            amps = np.zeros(1 << n, dtype=complex)
            amps[s.bits] = 1
            for corr in (correlations(s), correlations(QuantumState(amps))):
                product_ok &= h_x(corr) == 1.0 and hyperuniformity_s0(corr) == 0.0
        c = CouplingSet(10, 1, (1.0,))
        state = ground_state(c, 100.0).ground
        corr = correlations(state)
        record, _ = observable_record(100.0, 0.0, corr)
    ok = (product_ok and record.m_x > 0.999 and record.h_x < 0.01 and abs(record.S0_cumulant - 1) <= 0.02
          and record.tau < 0.01 and t.elapsed < 60)
    criterion(5, ok, f"product states exact={product_ok}; Gamma=100: m_x={record.m_x:.6f} h_x={record.h_x:.2e} "
                     f"S0={record.S0_cumulant:.5f} tau={record.tau:.2e}, {t.elapsed:.2f}s (<60s)")
    assert ok


def test_criterion_06_tau_normalization(criterion):
    n = 30
    with Timer() as t:
        values = {}
        for convention in (GridConvention.CLOSED, GridConvention.HALF_OPEN):
            grid = WaveVectorGrid(n, convention=convention)
            values[convention] = tuple(
                tau_metric(structure_factor(correlations(s), grid))
                for s in (SpinConfiguration.alternating(n), SpinConfiguration.ferromagnetic(n))
            )
    afm, fm = values[GridConvention.CLOSED]
    ok = 0.90 <= afm <= 1.05 and 1.90 <= fm <= 2.05 and t.elapsed < 1
    ho_afm, ho_fm = values[GridConvention.HALF_OPEN]
    criterion(6, ok, f"N={n} closed grid: AFM tau={afm:.4f} FM tau={fm:.4f} (frozen default); "
                     f"half-open grid: AFM {ho_afm:.4f} FM {ho_fm:.4f}, {t.elapsed:.3f}s (<1s)")
    assert ok


def test_criterion_07_sum_rule_positivity(criterion):
    rng = np.random.default_rng(7)
    worst_sum, worst_min = 0.0, math.inf
    with Timer() as t:
        for _ in range(100):
            amps = rng.normal(size=1024) + 1j * rng.normal(size=1024)
            curve = structure_factor(correlations(QuantumState(amps / np.linalg.norm(amps))))
            worst_sum = max(worst_sum, abs(curve.half_open_sum() - 10))
            worst_min = min(worst_min, float(curve.S.min()))
    ok = worst_sum <= 1e-8 and worst_min >= -1e-10 and t.elapsed < 60
    criterion(7, ok, f"100 states N=10: max |sum S - N| = {worst_sum:.1e}, min S = {worst_min:.3e}, "
                     f"{t.elapsed:.2f}s (<60s)")
    assert ok


def test_criterion_08_exact_vs_pairwise(criterion):
    c = CouplingSet(16, 1, (1.0,))
    diffs = {}
    with Timer() as t:
        for gamma in (0.2, 1.0, 2.0):
            e_ed = ground_state(c, gamma).energies[0]
            e_pw = pairwise_ground_solution(c, gamma).energy
            diffs[gamma] = abs(e_pw - e_ed) / 16
    ok = max(diffs.values()) <= 5 / 16 and t.elapsed < 300
    shown = ", ".join(f"Gamma={g}: {d:.2e}" for g, d in diffs.items())
    criterion(8, ok, f"N=16 per-site |E_pw - E_ED|: {shown} (<= {5 / 16:.4f}), {t.elapsed:.1f}s (<300s)")
    assert ok


def test_criterion_09_mean_field_degeneration(criterion):
    rng = np.random.default_rng(9)
    grid = np.round(np.arange(0, 31) * 0.1, 12)
    worst_e, worst_g, worst_iter = 0.0, 0.0, 0
    with Timer() as t:
        for _ in range(50):
            n = int(rng.choice(np.arange(8, 21, 2)))
            c = CouplingSet(n, 1, (float(rng.uniform(-1, 1)),))
            for gamma in grid:
                mf = mean_field_solve(c, gamma)
                pw = pairwise_ground_solution(c, gamma)
                worst_e = max(worst_e, abs(mf.energy - pw.energy))
                worst_g = max(worst_g, abs(mf.g - pw.sigma_z_avg))
                worst_iter = max(worst_iter, mf.iterations)
    ok = worst_e <= 1e-12 and worst_g <= 1e-12 and worst_iter <= 2 and t.elapsed < 10
    criterion(9, ok, f"50 R=1 sets x {len(grid)} fields: max dE={worst_e:.1e} max dg={worst_g:.1e} "
                     f"max iterations={worst_iter}, {t.elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_10_hx_finite_size(criterion):
    locations = {}
    with Timer() as t, warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for n in (8, 10, 12):
            result = run_sweep(SweepPlan(CouplingSet(n, 1, (1.0,)), Solver.EXACT, 0.0, 2.0, 0.05))
            h = np.array([r.h_x for r in result.records])
            # the low-field plateau sits at h_x = 1 up to rounding; ignore ripples below 1e-9
            peaks = int(np.sum((h[1:-1] > h[:-2] + 1e-9) & (h[1:-1] > h[2:] + 1e-9)))
            gamma, interior = locate_hx_maximum(result.records)
            locations[n] = (gamma, interior, peaks)
    g = [locations[n][0] for n in (8, 10, 12)]
    single = all(interior and peaks == 1 for _, interior, peaks in locations.values())
    monotone = (g[0] < g[1] < g[2]) or (g[0] > g[1] > g[2])
    ok = single and monotone and t.elapsed < 600
    shown = ", ".join(f"N={n}: {locations[n][0]:.4f}" for n in (8, 10, 12))
    criterion(10, ok, f"h_x maximum {shown}; single interior peak={single}, monotone drift={monotone}, "
                      f"{t.elapsed:.1f}s (<600s)")
    assert ok


def _sm_couplings(path, n_max):
    c = load_coupling_set(path, allow_wrap=True)
    if c.n <= n_max:
        return c
    n = n_max - (n_max % 2)
    radius = min(c.radius, (n - 1) // 2)
    return CouplingSet(n, radius, c.J[:radius], c.a)


@pytest.mark.skipif(not os.environ.get(SM_ENV), reason=f"set {SM_ENV} to a directory with J1.txt, J2.txt, J3.txt")
def test_criterion_11_sm_scenario(criterion):
    directory = Path(os.environ[SM_ENV])
    n_max = int(os.environ.get("HYPERISING_SM_N", ED_LIMIT))
    expected = {"J1.txt": 0, "J2.txt": 1, "J3.txt": 2}
    lines, ok = [], True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, count in expected.items():
            c = _sm_couplings(directory / name, n_max)
            ground = enumerate_low_lying(c, 1)[0].ground
            s1 = is_stealthy_hyperuniform(ground, c).S1
            plan = SweepPlan(c, Solver.EXACT, 0.0, 2.0, 0.0025 if count == 2 else 0.05)
            result = run_sweep(plan)
            found = [(iv.gamma_low, iv.gamma_high) for iv in result.intervals]
            tau_up = True
            if count and result.intervals:
                first = result.intervals[0]
                taus = {r.gamma: r.tau for r in result.records}
                tau_up = taus.get(first.gamma_high, math.nan) > taus.get(first.gamma_low, math.nan)
            good = abs(s1) <= 1e-6 and len(found) == count and tau_up
            ok &= good
            lines.append(f"{name} N={c.n} R={c.radius}: S1(0)={s1:.1e} intervals={found} tau rises={tau_up}")
    criterion(11, ok, "; ".join(lines))
    assert ok
