"""Low-discrepancy sequence generators and the concentric square-to-disk map.

Two families are provided:

* Sobol points built from the Joe-Kuo direction numbers, used for sub-pixel
  and lens-aperture sampling inside the renderer.  ``sobol_sample`` follows
  the direct definition: XOR the direction numbers selected by the set bits
  of the index and divide by 2^32 (natural order, not Gray-code order).
* Halton points with optional digit permutations (Faure by construction, or
  seeded random ones), used for 6-DoF pose-cloud sampling.

Every generator is a pure function of its index, so concurrent use needs no
coordination and results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._sobol_table import JOE_KUO_64
from .errors import ConfigurationError

N_BITS = 32
_SCALE = float(2**N_BITS)


# ---------------------------------------------------------------------------
# Sobol
# ---------------------------------------------------------------------------


def _expand_direction_numbers(degree: int, coeff_bits: int, m_init: list[int]) -> np.ndarray:
    """Expand initial values m_1..m_s into 32 left-justified direction numbers."""
    m = list(m_init)
    for k in range(degree, N_BITS):
        new = m[k - degree] ^ (m[k - degree] << degree)
        for i in range(1, degree):
            if (coeff_bits >> (degree - 1 - i)) & 1:
                new ^= m[k - i] << i
        m.append(new)
    return np.array([m[k] << (N_BITS - 1 - k) for k in range(N_BITS)], dtype=np.uint64)


@dataclass(frozen=True)
class SobolTable:
    """Per-dimension 32-bit direction numbers."""

    direction_numbers: np.ndarray  # (dimensions, 32) uint64
    dimensions: int

    def __post_init__(self) -> None:
        v = self.direction_numbers
        if v.shape != (self.dimensions, N_BITS):
            raise ConfigurationError(
                f"direction number matrix {v.shape} does not match {self.dimensions} dims"
            )
        # v_k = m_k << (32 - 1 - k) with m_k odd and m_k < 2^(k+1): the bit at
        # position (31 - k) must be set and nothing below it
        for k in range(N_BITS):
            col = v[:, k]
            low_bit = np.uint64(1) << np.uint64(N_BITS - 1 - k)
            if not np.all((col & low_bit) != 0):
                raise ConfigurationError(f"direction numbers invalid at bit position {k}")
            if not np.all(col % low_bit == 0):
                raise ConfigurationError(f"direction numbers carry stray low bits at {k}")

    @classmethod
    def joe_kuo(cls, dimensions: int = 64) -> "SobolTable":
        """Load the embedded Joe-Kuo table (up to 64 dimensions)."""
        if not 1 <= dimensions <= 64:
            raise ConfigurationError("embedded table covers dimensions 1..64")
        # dimension 0 is van der Corput in base 2: m_k = 1 for every k
        vdc = np.array([1 << (N_BITS - 1 - k) for k in range(N_BITS)], dtype=np.uint64)
        rows = [vdc]
        for line in JOE_KUO_64.strip().splitlines():
            parts = [int(x) for x in line.split()]
            _, s, a, m = parts[0], parts[1], parts[2], parts[3:]
            rows.append(_expand_direction_numbers(s, a, m))
        return cls(np.stack(rows[:dimensions]), dimensions)


@lru_cache(maxsize=1)
def default_sobol_table() -> SobolTable:
    return SobolTable.joe_kuo(64)


def sobol_sample(index: int, dimension: int, table: SobolTable | None = None) -> float:
    """Sobol sample for one (index, dimension) pair, in [0, 1)."""
    table = table or default_sobol_table()
    if not 0 <= dimension < table.dimensions:
        raise ConfigurationError(
            f"dimension {dimension} outside table with {table.dimensions} dims"
        )
    if index < 0:
        raise ConfigurationError("index must be non-negative")
    v = table.direction_numbers[dimension]
    x = 0
    k = 0
    while index:
        if index & 1:
            x ^= int(v[k])
        index >>= 1
        k += 1
    return x / _SCALE


def sobol_points(n: int, dimensions: int, table: SobolTable | None = None) -> np.ndarray:
    """First ``n`` Sobol points in the given number of dimensions, shape (n, dims)."""
    table = table or default_sobol_table()
    if dimensions > table.dimensions:
        raise ConfigurationError(
            f"requested {dimensions} dims from table with {table.dimensions}"
        )
    idx = np.arange(n, dtype=np.uint64)
    acc = np.zeros((n, dimensions), dtype=np.uint64)
    v = table.direction_numbers[:dimensions]
    for k in range(max(n - 1, 0).bit_length()):
        bit = ((idx >> np.uint64(k)) & np.uint64(1)).astype(bool)
        acc[bit] ^= v[:, k]
    return acc.astype(np.float64) / _SCALE


# ---------------------------------------------------------------------------
# Halton
# ---------------------------------------------------------------------------

_PRIME_CACHE = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53]


def first_primes(k: int) -> tuple[int, ...]:
    while len(_PRIME_CACHE) < k:
        c = _PRIME_CACHE[-1] + 2
        while any(c % p == 0 for p in _PRIME_CACHE if p * p <= c):
            c += 2
        _PRIME_CACHE.append(c)
    return tuple(_PRIME_CACHE[:k])


@lru_cache(maxsize=64)
def faure_permutation(base: int) -> tuple[int, ...]:
    """Faure digit permutation for ``base`` (fixes 0, built recursively)."""
    if base < 2:
        raise ConfigurationError("base must be >= 2")
    if base == 2:
        return (0, 1)
    if base % 2 == 0:
        half = faure_permutation(base // 2)
        return tuple(2 * x for x in half) + tuple(2 * x + 1 for x in half)
    c = base // 2
    prev = [x + 1 if x >= c else x for x in faure_permutation(base - 1)]
    return tuple(prev[:c]) + (c,) + tuple(prev[c:])


def random_digit_permutations(bases: tuple[int, ...], seed: int) -> tuple[tuple[int, ...], ...]:
    """Seeded random digit permutations, one per base, each fixing digit 0.

    Keeping sigma(0) = 0 makes the finite-digit radical inverse exact (the
    infinite tail of permuted zero digits contributes nothing) and preserves
    index 0 -> 0.
    """
    rng = np.random.default_rng(seed)
    perms = []
    for b in bases:
        tail = rng.permutation(b - 1) + 1
        perms.append((0, *map(int, tail)))
    return tuple(perms)


def _check_permutation(perm: tuple[int, ...] | None, base: int) -> None:
    if perm is None:
        return
    if sorted(perm) != list(range(base)) or perm[0] != 0:
        raise ConfigurationError(
            f"permutation for base {base} must permute 0..{base - 1} and fix 0"
        )


@dataclass(frozen=True)
class HaltonConfig:
    """Bases (ascending distinct primes) and optional per-base permutations."""

    bases: tuple[int, ...]
    permutations: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        if list(self.bases) != sorted(set(self.bases)):
            raise ConfigurationError("bases must be distinct and ascending")
        for b in self.bases:
            if b < 2 or any(b % p == 0 for p in range(2, int(b**0.5) + 1)):
                raise ConfigurationError(f"base {b} is not prime")
        if self.permutations is not None:
            if len(self.permutations) != self.dims:
                raise ConfigurationError("need one permutation per base")
            for perm, b in zip(self.permutations, self.bases):
                _check_permutation(perm, b)

    @property
    def dims(self) -> int:
        return len(self.bases)

    @classmethod
    def plain(cls, dims: int) -> "HaltonConfig":
        return cls(first_primes(dims))

    @classmethod
    def faure(cls, dims: int) -> "HaltonConfig":
        bases = first_primes(dims)
        return cls(bases, tuple(faure_permutation(b) for b in bases))

    @classmethod
    def random(cls, dims: int, seed: int) -> "HaltonConfig":
        bases = first_primes(dims)
        return cls(bases, random_digit_permutations(bases, seed))


def radical_inverse(index: int, base: int, permutation: tuple[int, ...] | None = None) -> float:
    """Digit-reversal of ``index`` in ``base``, mapped to [0, 1).

    Digits are optionally permuted before reversal.  The reversed digit
    string is accumulated as an exact integer fraction and rounded by a
    single float division, so results are correctly rounded.
    """
    if index < 0:
        raise ConfigurationError("index must be non-negative")
    _check_permutation(permutation, base)
    num = 0
    den = 1
    while index:
        index, digit = divmod(index, base)
        if permutation is not None:
            digit = permutation[digit]
        num = num * base + digit
        den *= base
    return num / den


def halton_point(index: int, config: HaltonConfig) -> np.ndarray:
    """One Halton point; component j uses the j-th base and permutation."""
    perms = config.permutations or (None,) * config.dims
    return np.array(
        [radical_inverse(index, b, p) for b, p in zip(config.bases, perms)],
        dtype=np.float64,
    )


def halton_points(n: int, config: HaltonConfig, start: int = 0) -> np.ndarray:
    """Points ``start .. start+n-1`` of the sequence, shape (n, dims)."""
    return np.stack([halton_point(i, config) for i in range(start, start + n)])


# ---------------------------------------------------------------------------
# Concentric square-to-disk map
# ---------------------------------------------------------------------------


def concentric_disk_map(u, v):
    """Map the unit square onto the unit disk, preserving relative areas.

    Accepts scalars or arrays; returns (x, y) with x^2 + y^2 <= 1.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    a = 2.0 * u - 1.0
    b = 2.0 * v - 1.0
    use_a = np.abs(a) > np.abs(b)
    r = np.where(use_a, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(
            use_a,
            (np.pi / 4.0) * (b / a),
            (np.pi / 2.0) - (np.pi / 4.0) * (a / b),
        )
    phi = np.where(r == 0.0, 0.0, phi)
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y
