"""Ground-state observables: correlations, structure factor, S0, S1, tau, h_x.

All quantities are exact expectation values, evaluated either from a full
amplitude vector (basis traversal with bit tricks) or from a classical spin
configuration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalIntegrityError, ValidationError
from .model import GridConvention, SpinConfiguration, WaveVectorGrid

__all__ = [
    "CorrelationMatrix",
    "StructureFactorCurve",
    "ObservableRecord",
    "correlations",
    "structure_factor",
    "hyperuniformity_s0",
    "stealthiness_s1",
    "tau_metric",
    "h_x",
    "magnetizations",
    "observable_record",
    "save_structure_factor",
]

IMAG_DISCARD_TOL = 1e-10
IMAG_ERROR_TOL = 1e-8
NORM_TOL = 1e-8


@dataclass(frozen=True)
class CorrelationMatrix:
    zz: np.ndarray
    mz_vector: np.ndarray
    mx_vector: np.ndarray
    mxx_sum: float

    @property
    def n(self) -> int:
        return len(self.mz_vector)


@dataclass(frozen=True)
class StructureFactorCurve:
    grid: WaveVectorGrid
    S: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return self.grid.values

    def half_open_sum(self) -> float:
        return float(np.sum(self.S[: self.grid.n]))


@dataclass(frozen=True)
class ObservableRecord:
    gamma: float
    energy_per_site: float
    m_z: float
    m_x: float
    h_x: float
    S0_cumulant: float
    S1: float
    tau: float


def _spin_table(n):
    idx = np.arange(1 << n, dtype=np.int64)
    return (1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)).astype(np.int8)


def _state_correlations(amplitudes, n):
    psi = np.asarray(amplitudes, dtype=complex)
    if psi.shape != (1 << n,):
        raise ValidationError(f"state has {psi.size} amplitudes, expected 2^{n}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"state is not normalized (norm {norm:.12g})")
    prob = np.abs(psi) ** 2
    spins = _spin_table(n).astype(float)
    zz = spins.T @ (prob[:, None] * spins)
    np.fill_diagonal(zz, 1.0)
    zz = 0.5 * (zz + zz.T)
    np.clip(zz, -1.0, 1.0, out=zz)
    mz = prob @ spins

    idx = np.arange(1 << n, dtype=np.int64)
    mx = np.empty(n)
    mx_psi = np.zeros_like(psi)
    for j in range(n):
        flipped = psi[idx ^ (1 << j)]
        mx[j] = float(np.vdot(psi, flipped).real)
        mx_psi += flipped
    mxx = float(np.vdot(mx_psi, mx_psi).real)
    return CorrelationMatrix(zz, mz, mx, mxx)


def correlations(state) -> CorrelationMatrix:
    """Correlation data of a QuantumState, SpinConfiguration or raw amplitude vector."""
    if isinstance(state, SpinConfiguration):
        s = state.spins.astype(float)
        return CorrelationMatrix(np.outer(s, s), s, np.zeros(state.n), float(state.n))
    amplitudes = getattr(state, "amplitudes", state)
    amplitudes = np.asarray(amplitudes)
    n = int(round(math.log2(amplitudes.size))) if amplitudes.size else 0
    if amplitudes.ndim != 1 or (1 << n) != amplitudes.size or n < 1:
        raise ValidationError("amplitude vector length must be a power of two")
    return _state_correlations(amplitudes, n)


def structure_factor(corr: CorrelationMatrix, grid: WaveVectorGrid | None = None) -> StructureFactorCurve:
    """S(k) = (1/N) sum_{l,j} C_lj exp(i k a (l - j)) on every grid point."""
    n = corr.n
    if grid is None:
        grid = WaveVectorGrid(n)
    if grid.n != n:
        raise ValidationError(f"grid built for N={grid.n}, correlations have N={n}")
    phase = np.exp(1j * np.outer(grid.values, grid.a * np.arange(n)))
    values = np.einsum("kl,lj,kj->k", phase, corr.zz, phase.conj()) / n
    residue = np.max(np.abs(values.imag)) if values.size else 0.0
    if residue > IMAG_ERROR_TOL:
        raise NumericalIntegrityError(f"structure factor has imaginary residue {residue:.3g}")
    return StructureFactorCurve(grid, values.real.copy())


def hyperuniformity_s0(corr: CorrelationMatrix) -> float:
    """Second cumulant of M_z per site."""
    n = corr.n
    return float((corr.zz.sum() - corr.mz_vector.sum() ** 2) / n)


def stealthiness_s1(curve: StructureFactorCurve) -> float:
    grid = curve.grid
    if len(grid) < 2:
        raise ValidationError("grid has no first non-zero wave vector")
    return float(curve.S[1])


def tau_metric(curve: StructureFactorCurve) -> float:
    """Squared distance from the flat (Poisson) structure factor, over N^2."""
    n = curve.grid.n
    return float(np.sum((curve.S - 1.0) ** 2) / n**2)


def h_x(corr: CorrelationMatrix) -> float:
    """Second cumulant of the total transverse magnetization, per site."""
    return float((corr.mxx_sum - corr.mx_vector.sum() ** 2) / corr.n)


def magnetizations(corr: CorrelationMatrix) -> tuple[float, float]:
    return float(corr.mz_vector.mean()), float(corr.mx_vector.mean())


def observable_record(gamma, energy_per_site, corr: CorrelationMatrix, a: float = 1.0,
                      convention=GridConvention.CLOSED) -> tuple[ObservableRecord, StructureFactorCurve]:
    curve = structure_factor(corr, WaveVectorGrid(corr.n, a, convention))
    m_z, m_x = magnetizations(corr)
    record = ObservableRecord(
        gamma=float(gamma),
        energy_per_site=float(energy_per_site),
        m_z=m_z,
        m_x=m_x,
        h_x=h_x(corr),
        S0_cumulant=hyperuniformity_s0(corr),
        S1=stealthiness_s1(curve),
        tau=tau_metric(curve),
    )
    return record, curve


def save_structure_factor(curve: StructureFactorCurve, path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for k, S in zip(curve.k, curve.S):
            fh.write(f"{float(k)!r} {float(S)!r}\n")
    return path
