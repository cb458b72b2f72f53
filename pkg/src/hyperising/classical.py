"""Exact solution of the zero-field problem by exhaustive enumeration."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, ValidationError
from .model import CouplingSet, GridConvention, SpinConfiguration, WaveVectorGrid, batch_classical_energies
from .observables import correlations, structure_factor

__all__ = [
    "ClassicalLevel",
    "StealthReport",
    "enumerate_low_lying",
    "is_stealthy_hyperuniform",
    "dump_levels",
    "ENUMERATION_LIMIT",
]

ENUMERATION_LIMIT = 24
ENERGY_DECIMALS = 9
CURVE_DECIMALS = 10
STEALTH_TOL = 1e-9


@dataclass(frozen=True)
class ClassicalLevel:
    energy: float
    representatives: tuple
    degeneracy: int
    members: tuple = field(default=(), repr=False, compare=False)

    @property
    def ground(self) -> SpinConfiguration:
        return self.representatives[0]


@dataclass(frozen=True)
class StealthReport:
    S0_raw: float
    S1: float
    verdict: bool


def _lex_key(bits, n):
    # bit string with site 0 first; '0' (up) sorts before '1'
    return tuple((bits >> j) & 1 for j in range(n))


def _periodograms(configs, n):
    spins = 1.0 - 2.0 * ((configs[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)).astype(float)
    return np.abs(np.fft.fft(spins, axis=1)) ** 2 / n


def _group_level(c, configs, n):
    """Group a level's configurations by identical structure factor.

    The level energy is evaluated on the first representative, so the CI
    reference reproduces it bit for bit; other orbits may differ in the last
    ulp when equal energies arise from different bond counts.
    """
    full = np.uint64((1 << n) - 1)
    configs = np.asarray(configs, dtype=np.uint64)
    both = np.concatenate([configs, configs ^ full])
    curves = np.round(_periodograms(both, n), CURVE_DECIMALS) + 0.0
    groups: dict[bytes, int] = {}
    for bits, curve in zip(both.tolist(), curves):
        key = curve.tobytes()
        best = groups.get(key)
        if best is None or _lex_key(bits, n) < _lex_key(best, n):
            groups[key] = bits
    reps = sorted(groups.values(), key=lambda b: _lex_key(b, n))
    energy = float(batch_classical_energies(c, np.asarray(reps[:1], dtype=np.uint64))[0])
    return ClassicalLevel(
        energy=energy,
        representatives=tuple(SpinConfiguration(b, n) for b in reps),
        degeneracy=2 * len(configs),
        members=tuple(sorted(both.tolist())),
    )


def enumerate_low_lying(c: CouplingSet, n_levels: int = 1, limit: int = ENUMERATION_LIMIT,
                        chunk_bits: int = 20) -> list[ClassicalLevel]:
    """Lowest ``n_levels`` distinct classical energies, by full enumeration.

    Only configurations with the last site up are scanned; their global flips
    carry the same energy. Energies closer than 1e-9 count as one level.
    """
    if n_levels < 1:
        raise ValidationError("n_levels must be >= 1")
    n = c.n
    if n > limit:
        raise CapacityError(
            f"N={n} exceeds the exhaustive enumeration limit {limit}; "
            "use a sampling method outside this toolkit"
        )
    half = 1 << (n - 1)
    step = 1 << min(chunk_bits, n - 1)
    keep_keys = np.empty(0)
    keep_configs = np.empty(0, dtype=np.uint64)
    for start in range(0, half, step):
        xs = np.arange(start, min(start + step, half), dtype=np.uint64)
        keys = np.round(batch_classical_energies(c, xs), ENERGY_DECIMALS)
        if keep_keys.size:
            levels = np.unique(keep_keys)
            if levels.size >= n_levels:
                sel = keys <= levels[n_levels - 1]
                xs, keys = xs[sel], keys[sel]
        keep_keys = np.concatenate([keep_keys, keys])
        keep_configs = np.concatenate([keep_configs, xs])
        levels = np.unique(keep_keys)[:n_levels]
        sel = keep_keys <= levels[-1]
        keep_keys, keep_configs = keep_keys[sel], keep_configs[sel]

    result = []
    for level_key in np.unique(keep_keys)[:n_levels]:
        configs = np.sort(keep_configs[keep_keys == level_key])
        result.append(_group_level(c, configs, n))
    return result


def is_stealthy_hyperuniform(s: SpinConfiguration, c: CouplingSet, tol: float = STEALTH_TOL) -> StealthReport:
    if s.n != c.n:
        raise ValidationError(f"configuration has {s.n} sites, coupling set expects {c.n}")
    curve = structure_factor(correlations(s), WaveVectorGrid(c.n, c.a, GridConvention.HALF_OPEN))
    S1 = float(curve.S[1])
    return StealthReport(S0_raw=float(curve.S[0]), S1=S1, verdict=bool(S1 <= tol))


def dump_levels(levels, path) -> Path:
    """One line per representative: ``<energy> <degeneracy> <bitpattern>``."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for level in levels:
            for rep in level.representatives:
                fh.write(f"{level.energy!r} {level.degeneracy} {rep.bitstring}\n")
    return path
