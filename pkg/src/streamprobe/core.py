"""Shared vocabulary for the streaming lab.

Problem parameters, symbol strings with their reserved sentinel codes,
the balanced window tree over the n arrivals with its left/right interval
slices, modular arithmetic and small finite-field linear algebra.
Everything here is an immutable value type; the mutable machinery
(cell stores, processors) lives in the other modules.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ParameterError(ValueError):
    """A problem parameter violates its constraints."""


class WindowError(IndexError):
    """A window slice falls outside the string it is applied to."""


def is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError(f"ceil_log2 needs a positive argument, got {x}")
    return (int(x) - 1).bit_length()


def floor_log2(x: int) -> int:
    if x < 1:
        raise ValueError(f"floor_log2 needs a positive argument, got {x}")
    return int(x).bit_length() - 1


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class Params:
    """Instance parameters: window length n, alphabet/base q, cell width w.

    n must be a power of two (the window tree is balanced over n leaves)
    and a cell must be wide enough to hold an address or a symbol, so
    w >= ceil(log2 n) and w >= ceil(log2 q). delta is the number of bits
    per symbol, floor(log2 q).
    """

    n: int
    q: int
    w: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not is_power_of_two(self.n) or self.n < 2:
            raise ParameterError(f"n must be a power of two >= 2, got {self.n}")
        if self.q < 2:
            raise ParameterError(f"q must be >= 2, got {self.q}")
        if self.w < ceil_log2(self.n) or self.w < ceil_log2(self.q):
            raise ParameterError(
                f"w={self.w} too small: need w >= ceil(log2 n)={ceil_log2(self.n)} "
                f"and w >= ceil(log2 q)={ceil_log2(self.q)}"
            )
        if self.w > 62:
            raise ParameterError("w > 62 would overflow the int64 cell backing")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in 64 bits")

    @property
    def delta(self) -> int:
        return floor_log2(self.q)

    @property
    def star(self) -> int:
        return self.q - 1

    @property
    def diamond(self) -> int:
        return self.q - 2


# ---------------------------------------------------------------------------
# Modular arithmetic


def mod_add(a: int, b: int, q: int) -> int:
    if q < 2:
        raise ValueError(f"modulus must be >= 2, got {q}")
    if not (0 <= a < q and 0 <= b < q):
        raise ValueError(f"residues must lie in [0,{q}), got {a}, {b}")
    return (a + b) % q


def mod_mul(a: int, b: int, q: int) -> int:
    if q < 2:
        raise ValueError(f"modulus must be >= 2, got {q}")
    if not (0 <= a < q and 0 <= b < q):
        raise ValueError(f"residues must lie in [0,{q}), got {a}, {b}")
    return (a * b) % q


def is_prime(x: int) -> bool:
    if x < 2:
        return False
    if x < 4:
        return True
    if x % 2 == 0:
        return False
    d = 3
    while d * d <= x:
        if x % d == 0:
            return False
        d += 2
    return True


def det_mod(matrix: Sequence[Sequence[int]], q: int) -> int:
    """Determinant over Z/qZ for prime q, by Gaussian elimination."""
    if not is_prime(q):
        raise ValueError(f"det_mod needs a prime modulus, got {q}")
    m = [[int(x) % q for x in row] for row in matrix]
    size = len(m)
    det = 1
    for col in range(size):
        pivot = next((r for r in range(col, size) if m[r][col]), None)
        if pivot is None:
            return 0
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = (-det) % q
        det = (det * m[col][col]) % q
        inv = pow(m[col][col], -1, q)
        for r in range(col + 1, size):
            if m[r][col]:
                factor = (m[r][col] * inv) % q
                m[r] = [(a - factor * b) % q for a, b in zip(m[r], m[col])]
    return det % q


def solve_mod(
    matrix: Sequence[Sequence[int]], rhs: Sequence[int], q: int
) -> tuple[list[int] | None, int]:
    """Solve matrix * x = rhs over Z/qZ (q prime).

    Returns (one solution or None if inconsistent, kernel dimension).
    """
    if not is_prime(q):
        raise ValueError(f"solve_mod needs a prime modulus, got {q}")
    rows = len(matrix)
    cols = len(matrix[0]) if rows else 0
    aug = [[int(x) % q for x in row] + [int(b) % q] for row, b in zip(matrix, rhs)]
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        pr = next((i for i in range(r, rows) if aug[i][c]), None)
        if pr is None:
            continue
        aug[r], aug[pr] = aug[pr], aug[r]
        inv = pow(aug[r][c], -1, q)
        aug[r] = [(v * inv) % q for v in aug[r]]
        for i in range(rows):
            if i != r and aug[i][c]:
                f = aug[i][c]
                aug[i] = [(a - f * b) % q for a, b in zip(aug[i], aug[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    for i in range(r, rows):
        if aug[i][cols]:
            return None, cols - len(pivots)
    x = [0] * cols
    for row_idx, c in enumerate(pivots):
        x[c] = aug[row_idx][cols]
    return x, cols - len(pivots)


# ---------------------------------------------------------------------------
# Symbol strings


class SymbolString:
    """Immutable sequence of symbol codes over the alphabet [q].

    The top two codes are reserved as sentinels for the Hamming
    constructions: star = q-1 lives only in fixed strings (it never
    matches the stream), diamond = q-2 lives only in stream strings
    (it never matches the fixed string). Convolution/multiplication
    instances use the full range [q] and do not reserve them.
    """

    __slots__ = ("_codes", "q")

    def __init__(self, codes: Iterable[int], q: int) -> None:
        if q < 2:
            raise ParameterError(f"alphabet size must be >= 2, got {q}")
        arr = np.array(list(codes) if not isinstance(codes, np.ndarray) else codes,
                       dtype=np.int64)
        if arr.ndim != 1:
            raise ParameterError("symbol data must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= q):
            raise ParameterError(f"symbol codes must lie in [0,{q})")
        arr.setflags(write=False)
        self._codes = arr
        self.q = q

    @classmethod
    def zeros(cls, n: int, q: int) -> "SymbolString":
        return cls(np.zeros(n, dtype=np.int64), q)

    @property
    def codes(self) -> np.ndarray:
        return self._codes

    @property
    def star(self) -> int:
        return self.q - 1

    @property
    def diamond(self) -> int:
        return self.q - 2

    def contains_star(self) -> bool:
        return bool(np.any(self._codes == self.star))

    def contains_diamond(self) -> bool:
        return bool(np.any(self._codes == self.diamond))

    def stream_safe(self) -> bool:
        """Sentinel discipline for stream-side strings: no star."""
        return not self.contains_star()

    def fixed_safe(self) -> bool:
        """Sentinel discipline for fixed-side strings: no diamond."""
        return not self.contains_diamond()

    def __len__(self) -> int:
        return int(self._codes.size)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return SymbolString(self._codes[idx], self.q)
        return int(self._codes[idx])

    def __iter__(self):
        return iter(self._codes.tolist())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SymbolString)
            and self.q == other.q
            and len(self) == len(other)
            and bool(np.array_equal(self._codes, other._codes))
        )

    def __hash__(self) -> int:
        return hash((self.q, self._codes.tobytes()))

    def __repr__(self) -> str:
        body = ",".join(str(c) for c in self._codes[:16].tolist())
        tail = ",..." if len(self) > 16 else ""
        return f"SymbolString([{body}{tail}], q={self.q}, n={len(self)})"


def save_symbol_string(path, s: SymbolString, role: str) -> None:
    """Canonical one-instance-per-file format: JSON with n, q, role, data."""
    if role not in ("fixed", "stream"):
        raise ValueError(f"role must be 'fixed' or 'stream', got {role!r}")
    payload = {"n": len(s), "q": s.q, "role": role, "data": s.codes.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_symbol_string(path) -> tuple[SymbolString, str]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("n", "q", "role", "data"):
        if key not in payload:
            raise ValueError(f"instance file {path} missing field {key!r}")
    if payload["role"] not in ("fixed", "stream"):
        raise ValueError(f"instance file {path} has bad role {payload['role']!r}")
    s = SymbolString(payload["data"], int(payload["q"]))
    if len(s) != int(payload["n"]):
        raise ValueError(f"instance file {path}: n={payload['n']} but data has {len(s)}")
    return s, payload["role"]


# ---------------------------------------------------------------------------
# Arrival windows and the balanced tree over n arrivals


@dataclass(frozen=True)
class ArrivalWindow:
    """An internal tree node: arrivals [t0,t1] on the left, [t1+1,t2] on the right.

    node_id is the heap index (root 1, children 2i and 2i+1) so ids are
    stable across runs and usable as CSV keys.
    """

    node_id: int
    t0: int
    t1: int
    t2: int

    def __post_init__(self) -> None:
        ell = self.t2 - self.t0 + 1
        if not is_power_of_two(ell) or ell < 2:
            raise WindowError(f"window length {ell} must be a power of two >= 2")
        if self.t1 != self.t0 + ell // 2 - 1:
            raise WindowError(f"t1={self.t1} inconsistent with t0={self.t0}, ell={ell}")
        if self.t0 < 0:
            raise WindowError("t0 must be >= 0")

    @property
    def ell(self) -> int:
        return self.t2 - self.t0 + 1

    @property
    def half(self) -> int:
        return self.ell // 2

    def left_interval(self) -> tuple[int, int]:
        return self.t0, self.t1

    def right_interval(self) -> tuple[int, int]:
        return self.t1 + 1, self.t2


def window_at(n: int, ell: int, idx: int) -> ArrivalWindow:
    if not is_power_of_two(n) or not is_power_of_two(ell) or not 2 <= ell <= n:
        raise WindowError(f"need powers of two with 2 <= ell <= n, got ell={ell}, n={n}")
    if not 0 <= idx < n // ell:
        raise WindowError(f"window index {idx} out of range for ell={ell}, n={n}")
    depth = floor_log2(n // ell)
    t0 = idx * ell
    return ArrivalWindow((1 << depth) + idx, t0, t0 + ell // 2 - 1, t0 + ell - 1)


def tree_windows(n: int, ell_min: int = 2) -> tuple[ArrivalWindow, ...]:
    """All internal nodes with ell >= ell_min, root first, left to right."""
    if not is_power_of_two(n) or n < 2:
        raise WindowError(f"n must be a power of two >= 2, got {n}")
    out = []
    ell = n
    while ell >= max(2, ell_min):
        out.extend(window_at(n, ell, i) for i in range(n // ell))
        ell //= 2
    return tuple(out)


def slice_uv(u: SymbolString, v: ArrivalWindow) -> SymbolString:
    """The ell/2 inputs arriving during the left interval [t0,t1]."""
    if v.t2 >= len(u):
        raise WindowError(f"window [{v.t0},{v.t2}] out of range for |U|={len(u)}")
    return u[v.t0 : v.t1 + 1]


def slice_av(a: Sequence[int] | np.ndarray, v: ArrivalWindow) -> np.ndarray:
    """The ell/2 outputs produced during the right interval [t1+1,t2]."""
    arr = np.asarray(a, dtype=np.int64)
    if v.t2 >= arr.size:
        raise WindowError(f"window [{v.t0},{v.t2}] out of range for |A|={arr.size}")
    return arr[v.t1 + 1 : v.t2 + 1].copy()


def complement_uv(u: SymbolString, v: ArrivalWindow) -> SymbolString:
    """U with the whole window [t0,t2] removed: U[0,t0-1] followed by U[t2+1,n-1]."""
    if v.t2 >= len(u):
        raise WindowError(f"window [{v.t0},{v.t2}] out of range for |U|={len(u)}")
    return SymbolString(
        np.concatenate([u.codes[: v.t0], u.codes[v.t2 + 1 :]]), u.q
    )


# ---------------------------------------------------------------------------
# Seeded randomness: one root seed, named substreams per module


def named_rng(seed: int, *names: str) -> np.random.Generator:
    """Deterministic substream of the root seed, keyed by names."""
    keys = [zlib.crc32(name.encode("utf-8")) for name in names]
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *keys]))
