"""Prime-field arithmetic and dense linear algebra over F_q.

Matrices hold row-major residues in ``[0, q)``.  For moduli below 2**31
every entry product fits in int64 with room to spare, so the hot paths
(rank, row reduction, matrix products) run vectorised in numpy.  Larger
moduli fall back to exact Python integers in object arrays; moduli are
capped at 61 bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_MODULUS_BITS = 61
_FAST_MODULUS_LIMIT = 1 << 31

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


class DimensionMismatch(ValueError):
    """Operands do not have compatible shapes."""


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for every integer below 3.3e24."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def smallest_prime_at_least(n: int) -> int:
    """Smallest prime ``>= n``.

    Raises OverflowError when the request exceeds the supported modulus
    width (61 bits); callers with astronomical bounds are expected to pick
    a smaller field and rely on explicit verification instead.
    """
    if n > (1 << MAX_MODULUS_BITS):
        raise OverflowError(
            f"prime bound {n} exceeds the supported {MAX_MODULUS_BITS}-bit modulus range"
        )
    candidate = max(2, int(n))
    while not is_prime(candidate):
        candidate += 1
    return candidate


def _dtype_for(q: int):
    return np.int64 if q < _FAST_MODULUS_LIMIT else object


class PrimeField:
    """Arithmetic on residues of a prime modulus."""

    __slots__ = ("q",)

    def __init__(self, q: int):
        if q.bit_length() > MAX_MODULUS_BITS:
            raise OverflowError(f"modulus {q} exceeds {MAX_MODULUS_BITS} bits")
        if not is_prime(q):
            raise ValueError(f"modulus must be prime, got {q}")
        self.q = q

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.q

    def neg(self, a: int) -> int:
        return (-a) % self.q

    def inv(self, a: int) -> int:
        """Multiplicative inverse by the extended Euclidean algorithm."""
        a %= self.q
        if a == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        old_r, r = a, self.q
        old_s, s = 1, 0
        while r:
            quo = old_r // r
            old_r, r = r, old_r - quo * r
            old_s, s = s, old_s - quo * s
        return old_s % self.q

    def __repr__(self) -> str:
        return f"PrimeField({self.q})"


# Spec alias: the field is fully described by its modulus.
FieldSpec = PrimeField


def field_ops(q: int) -> PrimeField:
    return PrimeField(q)


def as_residues(values, q: int) -> np.ndarray:
    """2-D residue array with the dtype appropriate for the modulus."""
    arr = np.array(values, dtype=_dtype_for(q))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got ndim={arr.ndim}")
    return arr % q


def matmul(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Exact modular matrix product, safe against int64 overflow.

    Each elementwise product is reduced before summation, so the running
    sums stay below ``k * q``.
    """
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]), dtype=_dtype_for(q))
    prod = (a[:, :, None] * b[None, :, :]) % q
    return prod.sum(axis=1) % q


def matvec(a: np.ndarray, v: np.ndarray, q: int) -> np.ndarray:
    if a.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"cannot apply {a.shape} to vector of length {v.shape[0]}")
    if a.shape[1] == 0:
        return np.zeros(a.shape[0], dtype=_dtype_for(q))
    return ((a * v[None, :]) % q).sum(axis=1) % q


class Echelon:
    """Online reduced row echelon accumulator over F_q.

    Rows are added one at a time; the rank is the number of pivots.  The
    pivot rows are kept fully reduced (zero in every other pivot column),
    which lets a new row be reduced in a single vectorised sweep.
    """

    __slots__ = ("q", "cols", "rows", "leads", "_dtype")

    def __init__(self, q: int, cols: int):
        self.q = q
        self.cols = cols
        self._dtype = _dtype_for(q)
        self.rows = np.zeros((0, cols), dtype=self._dtype)
        self.leads: list[int] = []

    @property
    def rank(self) -> int:
        return len(self.leads)

    def copy(self) -> "Echelon":
        dup = Echelon.__new__(Echelon)
        dup.q = self.q
        dup.cols = self.cols
        dup._dtype = self._dtype
        dup.rows = self.rows.copy()
        dup.leads = list(self.leads)
        return dup

    def reduce(self, row: np.ndarray) -> np.ndarray:
        v = row.astype(self._dtype, copy=True) % self.q
        if self.leads:
            coeffs = v[self.leads]
            v = (v - ((coeffs[:, None] * self.rows) % self.q).sum(axis=0)) % self.q
        return v

    def add_row(self, row: np.ndarray) -> bool:
        """Insert one row; True when it enlarges the row space."""
        v = self.reduce(row)
        nz = np.flatnonzero(v)
        if len(nz) == 0:
            return False
        lead = int(nz[0])
        v = (v * pow(int(v[lead]), -1, self.q)) % self.q
        if self.leads:
            col = self.rows[:, lead]
            self.rows = (self.rows - (col[:, None] * v[None, :]) % self.q) % self.q
        self.rows = np.vstack([self.rows, v[None, :]])
        self.leads.append(lead)
        return True

    def add_rows(self, rows: np.ndarray) -> int:
        added = 0
        for row in rows:
            added += self.add_row(row)
        return added


def array_rank(a: np.ndarray, q: int) -> int:
    if a.ndim != 2:
        raise DimensionMismatch("rank expects a matrix")
    ech = Echelon(q, a.shape[1])
    ech.add_rows(a)
    return ech.rank


@dataclass(frozen=True, eq=False)
class FMatrix:
    """Dense matrix over F_q; entries are reduced residues, storage immutable."""

    q: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = as_residues(self.data, self.q)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, q: int, rows: int, cols: int) -> "FMatrix":
        return cls(q, np.zeros((rows, cols), dtype=_dtype_for(q)))

    @classmethod
    def identity(cls, q: int, n: int) -> "FMatrix":
        return cls(q, np.eye(n, dtype=_dtype_for(q)))

    def rank(self) -> int:
        return array_rank(self.data, self.q)

    def tolist(self) -> list[list[int]]:
        return [[int(x) for x in row] for row in self.data]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FMatrix):
            return NotImplemented
        return (
            self.q == other.q
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    def __hash__(self):
        return hash((self.q, self.data.shape, self.data.tobytes() if self.data.dtype != object else tuple(map(tuple, self.data))))

    def __add__(self, other: "FMatrix") -> "FMatrix":
        self._check_same_shape(other)
        return FMatrix(self.q, (self.data + other.data) % self.q)

    def __neg__(self) -> "FMatrix":
        return FMatrix(self.q, (-self.data) % self.q)

    def __matmul__(self, other: "FMatrix") -> "FMatrix":
        if self.q != other.q:
            raise DimensionMismatch("mixed moduli")
        return FMatrix(self.q, matmul(self.data, other.data, self.q))

    def _check_same_shape(self, other: "FMatrix"):
        if self.q != other.q or self.data.shape != other.data.shape:
            raise DimensionMismatch(
                f"shape/modulus mismatch: {self.data.shape} mod {self.q} "
                f"vs {other.data.shape} mod {other.q}"
            )


def rank(m: FMatrix) -> int:
    return m.rank()


def stack_rank(blocks: Sequence[FMatrix]) -> int:
    """Rank of the vertical concatenation of the blocks."""
    blocks = list(blocks)
    if not blocks:
        return 0
    q = blocks[0].q
    cols = blocks[0].cols
    for b in blocks:
        if b.q != q or b.cols != cols:
            raise DimensionMismatch("stacked blocks must share modulus and column count")
    ech = Echelon(q, cols)
    for b in blocks:
        ech.add_rows(b.data)
    return ech.rank


def fsum(blocks: Iterable[FMatrix]) -> FMatrix:
    """Entrywise sum of equally shaped matrices."""
    blocks = list(blocks)
    if not blocks:
        raise ValueError("fsum of no matrices")
    acc = blocks[0].data.copy()
    q = blocks[0].q
    for b in blocks[1:]:
        blocks[0]._check_same_shape(b)
        acc = (acc + b.data) % q
    return FMatrix(q, acc)
