"""Coupling sets, lattice grids and the classical (diagonal) part of the model.

The Hamiltonian on an N-site ring is

    H = -sum_i sum_{r=1..R} J_r sz_i sz_{i+r} - Gamma sum_i sx_i

Basis convention used throughout the package: bit ``j`` of an integer
configuration index describes site ``j``; bit value 0 is spin up (+1) and bit
value 1 is spin down (-1).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInputError, ValidationError

__all__ = [
    "CouplingSet",
    "SpinConfiguration",
    "GridConvention",
    "WaveVectorGrid",
    "load_coupling_set",
    "save_coupling_set",
    "build_power_law_couplings",
    "classical_energy",
    "batch_classical_energies",
    "check_gamma",
]


def max_default_radius(n):
    return (n - 1) // 2


@dataclass(frozen=True)
class CouplingSet:
    """Interaction specification of one model instance.

    ``J[r - 1]`` is the coupling between spins ``r`` sites apart. Radii with
    ``R >= N/2`` make some pairs appear twice around the ring; they are
    rejected unless ``allow_wrap`` is set, in which case the double sum is
    evaluated literally.
    """

    n: int
    radius: int
    J: tuple
    a: float = 1.0
    allow_wrap: bool = field(default=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"N must be an integer >= 2, got {self.n!r}")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValidationError(f"R must be an integer >= 1, got {self.radius!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "radius", int(self.radius))
        J = tuple(float(x) for x in self.J)
        if len(J) != self.radius:
            raise ValidationError(
                f"expected {self.radius} couplings for R={self.radius}, got {len(J)}"
            )
        if not all(math.isfinite(x) for x in J):
            raise ValidationError("couplings must be finite")
        object.__setattr__(self, "J", J)
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValidationError(f"lattice constant must be positive, got {self.a!r}")
        object.__setattr__(self, "a", float(self.a))
        if self.allow_wrap:
            if self.radius > self.n - 1:
                raise ValidationError(f"R={self.radius} exceeds N-1={self.n - 1}")
        elif self.radius > max_default_radius(self.n):
            raise ValidationError(
                f"R={self.radius} >= N/2 for N={self.n}: some pairs would be counted "
                "twice under periodic boundaries (pass allow_wrap=True to accept)"
            )

    @property
    def J_array(self) -> np.ndarray:
        return np.asarray(self.J, dtype=float)

    def coupling(self, r: int) -> float:
        if 1 <= r <= self.radius:
            return self.J[r - 1]
        return 0.0

    @property
    def uniform_sum(self) -> float:
        """Sum of J_r; the Fourier transform of the couplings at k = 0."""
        return math.fsum(self.J)

    @property
    def staggered_sum(self) -> float:
        """Sum of (-1)^r J_r; the Fourier transform at the zone boundary."""
        return math.fsum(J if r % 2 == 0 else -J for r, J in enumerate(self.J, start=1))

    def with_couplings(self, J: Sequence[float]) -> "CouplingSet":
        return CouplingSet(self.n, self.radius, tuple(J), self.a, self.allow_wrap)


@dataclass(frozen=True)
class SpinConfiguration:
    """Classical +/-1 assignment to N sites, stored as a bit pattern."""

    bits: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("configuration needs at least one site")
        if not 0 <= self.bits < (1 << self.n):
            raise ValidationError(f"bit pattern {self.bits} out of range for N={self.n}")

    @classmethod
    def from_spins(cls, spins: Iterable[int]) -> "SpinConfiguration":
        spins = [int(s) for s in spins]
        bits = 0
        for j, s in enumerate(spins):
            if s == -1:
                bits |= 1 << j
            elif s != 1:
                raise ValidationError(f"spin values must be +1 or -1, got {s}")
        return cls(bits, len(spins))

    @classmethod
    def from_bitstring(cls, text: str) -> "SpinConfiguration":
        """Parse ``'0101...'`` with site 0 first (0 = up)."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValidationError(f"not a bit string: {text!r}")
        return cls(sum(1 << j for j, ch in enumerate(text) if ch == "1"), len(text))

    @classmethod
    def ferromagnetic(cls, n, up=True):
        return cls(0 if up else (1 << n) - 1, n)

    @classmethod
    def alternating(cls, n):
        return cls(sum(1 << j for j in range(1, n, 2)), n)

    @property
    def spins(self) -> np.ndarray:
        return 1 - 2 * ((self.bits >> np.arange(self.n)) & 1)

    @property
    def bitstring(self) -> str:
        return "".join(str((self.bits >> j) & 1) for j in range(self.n))

    def flipped(self) -> "SpinConfiguration":
        return SpinConfiguration(self.bits ^ ((1 << self.n) - 1), self.n)

    def rotated(self, shift: int) -> "SpinConfiguration":
        """Relabel sites j -> j + shift (mod N)."""
        shift %= self.n
        mask = (1 << self.n) - 1
        return SpinConfiguration(((self.bits << shift) | (self.bits >> (self.n - shift))) & mask, self.n)

    def __len__(self):
        return self.n


class GridConvention(str, enum.Enum):
    HALF_OPEN = "halfopen"  # n = 0..N-1
    CLOSED = "closed"  # n = 0..N, k = 0 and k = 2pi/a both included


@dataclass(frozen=True)
class WaveVectorGrid:
    n: int
    a: float = 1.0
    convention: GridConvention = GridConvention.CLOSED

    def __post_init__(self):
        object.__setattr__(self, "convention", GridConvention(self.convention))

    @property
    def spacing(self) -> float:
        return 2 * math.pi / (self.n * self.a)

    @property
    def indices(self) -> np.ndarray:
        stop = self.n + 1 if self.convention is GridConvention.CLOSED else self.n
        return np.arange(stop)

    @property
    def values(self) -> np.ndarray:
        return self.indices * self.spacing

    def __len__(self):
        return len(self.indices)


def check_gamma(gamma) -> float:
    gamma = float(gamma)
    if not math.isfinite(gamma):
        raise ValidationError(f"transverse field must be finite, got {gamma}")
    if gamma < 0:
        raise ValidationError(f"transverse field must be >= 0, got {gamma}")
    return gamma


def _parse_number(token, cast, path, lineno):
    try:
        return cast(token)
    except ValueError:
        raise MalformedInputError(f"cannot parse {token!r}", path, lineno) from None


def load_coupling_set(path, allow_wrap: bool = False) -> CouplingSet:
    """Read a coupling file.

    Format: ``N <int>``, ``R <int>`` and optional ``a <real>`` header lines,
    then ``<r> <J_r>`` lines with ascending r. ``#`` starts a comment line.
    Separations without an entry get J_r = 0.
    """
    path = Path(path)
    header = {}
    entries = {}
    last_r = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MalformedInputError(f"expected two fields, got {line!r}", path, lineno)
            key, value = parts
            if key in ("N", "R", "a"):
                if entries:
                    raise MalformedInputError(f"header key {key} after coupling entries", path, lineno)
                if key in header:
                    raise MalformedInputError(f"duplicate header key {key}", path, lineno)
                header[key] = _parse_number(value, float if key == "a" else int, path, lineno)
                continue
            r = _parse_number(key, int, path, lineno)
            J = _parse_number(value, float, path, lineno)
            if r <= last_r:
                raise MalformedInputError(f"separations must be ascending (r={r} after r={last_r})", path, lineno)
            if "R" in header and r > header["R"]:
                raise MalformedInputError(f"separation r={r} exceeds R={header['R']}", path, lineno)
            if r < 1:
                raise MalformedInputError(f"separation must be >= 1, got {r}", path, lineno)
            entries[r] = J
            last_r = r
    for key in ("N", "R"):
        if key not in header:
            raise MalformedInputError(f"missing header line '{key} <int>'", path)
    radius = header["R"]
    J = tuple(entries.get(r, 0.0) for r in range(1, radius + 1))
    return CouplingSet(header["N"], radius, J, header.get("a", 1.0), allow_wrap)


def save_coupling_set(c: CouplingSet, path, comment: str | None = None) -> Path:
    path = Path(path)
    lines = []
    if comment:
        lines.extend(f"# {text}" for text in comment.splitlines())
    lines += [f"N {c.n}", f"R {c.radius}", f"a {c.a!r}"]
    lines += [f"{r} {J!r}" for r, J in enumerate(c.J, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def build_power_law_couplings(n: int, radius: int, exponent: float, staggered: bool = False,
                              a: float = 1.0, allow_wrap: bool = False) -> CouplingSet:
    """J_r = r**-exponent, or (-1)**r r**-exponent when ``staggered``."""
    J = []
    for r in range(1, radius + 1):
        value = float(r) ** (-exponent)
        J.append(-value if staggered and r % 2 else value)
    return CouplingSet(n, radius, tuple(J), a, allow_wrap)


def _rotate_right(xs, r, n, mask):
    # bit i of the result is bit (i + r) mod n of xs
    return ((xs >> np.uint64(r)) | (xs << np.uint64(n - r))) & mask


def batch_classical_energies(c: CouplingSet, configs) -> np.ndarray:
    """Classical energies of many bit-encoded configurations at once.

    Uses sum_i s_i s_{i+r} = N - 2 popcount(x XOR rot_r(x)).
    """
    xs = np.asarray(configs, dtype=np.uint64)
    mask = np.uint64((1 << c.n) - 1)
    energy = np.zeros(xs.shape, dtype=float)
    for r, J in enumerate(c.J, start=1):
        if J == 0.0:
            continue
        shift = r % c.n
        if shift == 0:
            energy -= J * c.n
            continue
        anti = np.bitwise_count(xs ^ _rotate_right(xs, shift, c.n, mask)).astype(np.int64)
        energy -= J * (c.n - 2 * anti)
    return energy


def classical_energy(c: CouplingSet, s) -> float:
    """Energy of a sigma_z product state at zero transverse field."""
    if isinstance(s, SpinConfiguration):
        config = s
    else:
        spins = np.asarray(s).ravel()
        config = SpinConfiguration.from_spins(spins)
    if config.n != c.n:
        raise ValidationError(f"configuration has {config.n} sites, coupling set expects {c.n}")
    return float(batch_classical_energies(c, [config.bits])[0])
