"""Online processors for the three streaming problems, plus offline kernels.

Each processor keeps every piece of persistent state in its cell store:
the arrival counter, the window ring buffer, pending output accumulators,
product limbs. Nothing survives between update() calls outside the store,
which is what makes probe traces meaningful and lets a run be suspended,
serialized and resumed bit-exactly.

The naive processors rescan the window on every arrival. The blocked
("fast") processors cover lag d with power-of-two lag classes [2^k, 2^{k+1});
whenever an aligned block of 2^k arrivals completes, one offline
convolution of that block against the matching segment of the reversed
fixed string scatter-adds into future outputs. Lag 0 is accumulated
directly. Ties (one arrival completing several block sizes) are processed
smallest block first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    Params,
    SymbolString,
    ceil_log2,
    floor_log2,
    is_power_of_two,
    is_prime,
)
from .probelab import CellStore, ProbeTrace, StreamingTransferCounter

PROBLEMS = ("convolution", "multiplication", "hamming")
ALGOS = ("naive", "fast")

# Fixed address layout, identical across platforms.
ADDR_T = 0
ADDR_CARRY = 1
DATA_BASE = 8


class EngineError(ValueError):
    """Bad processor input or configuration."""


# ---------------------------------------------------------------------------
# Offline kernels


@dataclass
class KernelCounter:
    """Element-multiplication and call accounting for offline kernels."""

    mults: int = 0
    calls: dict = field(default_factory=lambda: {"naive": 0, "ntt": 0})

    def record(self, kind: str, mults: int) -> None:
        self.calls[kind] += 1
        self.mults += mults


def _primitive_root(q: int) -> int:
    """Smallest generator of the multiplicative group of Z/qZ, q prime."""
    phi = q - 1
    factors = []
    m = phi
    d = 2
    while d * d <= m:
        if m % d == 0:
            factors.append(d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        factors.append(m)
    for g in range(2, q):
        if all(pow(g, phi // f, q) != 1 for f in factors):
            return g
    raise ValueError(f"no primitive root mod {q}")


def _ntt(vec: list[int], root: int, q: int) -> tuple[list[int], int]:
    """In-place iterative transform; returns (result, multiplication count)."""
    n = len(vec)
    mults = 0
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            vec[i], vec[j] = vec[j], vec[i]
    length = 2
    while length <= n:
        w_len = pow(root, n // length, q)
        for start in range(0, n, length):
            w = 1
            for i in range(start, start + length // 2):
                u = vec[i]
                t = (vec[i + length // 2] * w) % q
                vec[i] = (u + t) % q
                vec[i + length // 2] = (u - t) % q
                w = (w * w_len) % q
                mults += 2
        length <<= 1
    return vec, mults


def ntt_eligible(q: int, out_len: int) -> bool:
    """The exact in-field transform needs a prime q with q = 1 (mod 2T)."""
    if out_len < 1:
        return False
    size = 1 << ceil_log2(max(2, out_len))
    return is_prime(q) and (q - 1) % (2 * size) == 0


def conv_naive_kernel(a: np.ndarray, b: np.ndarray, q: int,
                      counter: KernelCounter | None = None) -> np.ndarray:
    out = np.convolve(a, b) % q
    if counter is not None:
        counter.record("naive", int(a.size) * int(b.size))
    return out


def conv_ntt_kernel(a: np.ndarray, b: np.ndarray, q: int,
                    counter: KernelCounter | None = None) -> np.ndarray:
    out_len = int(a.size + b.size - 1)
    if not ntt_eligible(q, out_len):
        raise EngineError(f"q={q} is not transform-friendly for output length {out_len}")
    size = 1 << ceil_log2(max(2, out_len))
    root = pow(_primitive_root(q), (q - 1) // size, q)
    fa = a.tolist() + [0] * (size - a.size)
    fb = b.tolist() + [0] * (size - b.size)
    fa, m1 = _ntt(fa, root, q)
    fb, m2 = _ntt(fb, root, q)
    prod = [(x * y) % q for x, y in zip(fa, fb)]
    inv_root = pow(root, -1, q)
    prod, m3 = _ntt(prod, inv_root, q)
    inv_n = pow(size, -1, q)
    prod = [(x * inv_n) % q for x in prod]
    if counter is not None:
        counter.record("ntt", m1 + m2 + m3 + 2 * size)
    return np.asarray(prod[:out_len], dtype=np.int64)


def offline_conv(a, b, q: int, kernel: str = "auto",
                 counter: KernelCounter | None = None) -> np.ndarray:
    """Full linear convolution of two residue sequences mod q."""
    if q < 2:
        raise EngineError(f"modulus must be >= 2, got {q}")
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size < 1 or b.size < 1:
        raise EngineError("convolution operands must be non-empty")
    if kernel == "naive":
        return conv_naive_kernel(a, b, q, counter)
    if kernel == "ntt":
        return conv_ntt_kernel(a, b, q, counter)
    if kernel == "auto":
        if ntt_eligible(q, int(a.size + b.size - 1)):
            return conv_ntt_kernel(a, b, q, counter)
        return conv_naive_kernel(a, b, q, counter)
    raise EngineError(f"unknown kernel {kernel!r}")


def product_digits(f_digits, u_digits, q: int, count: int | None = None) -> np.ndarray:
    """Schoolbook product digits, low-order first, capped at count digits."""
    f = np.asarray(f_digits, dtype=np.int64)
    u = np.asarray(u_digits, dtype=np.int64)
    if count is None:
        count = int(f.size)
    raw = np.convolve(f, u)
    digits = np.zeros(count, dtype=np.int64)
    carry = 0
    for i in range(count):
        total = (int(raw[i]) if i < raw.size else 0) + carry
        digits[i] = total % q
        carry = total // q
    return digits


def product_digits_bigint(f_digits, u_digits, q: int, count: int | None = None) -> np.ndarray:
    """Independent big-integer route to the same digits."""
    f_val = 0
    for d in reversed(list(f_digits)):
        f_val = f_val * q + int(d)
    u_val = 0
    for d in reversed(list(u_digits)):
        u_val = u_val * q + int(d)
    if count is None:
        count = len(list(f_digits)) or 1
    prod = f_val * u_val
    out = np.zeros(count, dtype=np.int64)
    for i in range(count):
        out[i] = prod % q
        prod //= q
    return out


def conv_outputs_reference(fixed: SymbolString, stream: SymbolString, q: int) -> np.ndarray:
    """Offline per-arrival inner products, window pre-filled with zeros."""
    g = fixed.codes[::-1]
    return np.convolve(g, stream.codes)[: len(stream)] % q


def hamming_outputs_reference(fixed: SymbolString, stream: SymbolString,
                              prefill: int = 0) -> np.ndarray:
    """Offline per-arrival Hamming distances, window pre-filled with prefill."""
    n = len(fixed)
    ext = np.concatenate([np.full(n - 1, prefill, dtype=np.int64), stream.codes])
    wins = np.lib.stride_tricks.sliding_window_view(ext, n)[: len(stream)]
    return (wins != fixed.codes[np.newaxis, :]).sum(axis=1).astype(np.int64)


def mult_outputs_reference(fixed: SymbolString, stream: SymbolString, q: int) -> np.ndarray:
    return product_digits_bigint(fixed.codes.tolist(), stream.codes.tolist(), q,
                                 count=len(stream))


# ---------------------------------------------------------------------------
# Processor sizing


def store_capacity(problem: str, algo: str, n: int) -> int:
    if problem == "multiplication":
        return DATA_BASE + n
    if algo == "fast":
        return DATA_BASE + 2 * n  # window ring + pending ring
    return DATA_BASE + n


def required_width(problem: str, algo: str, n: int, q: int) -> int:
    """Smallest cell width the processor's addresses and values fit in."""
    addr_bits = ceil_log2(store_capacity(problem, algo, n))
    counter_bits = n.bit_length()  # the arrival counter reaches n
    if problem == "convolution":
        value_bits = max((q - 1).bit_length(), counter_bits)
    elif problem == "hamming":
        value_bits = max((q - 1).bit_length(), n.bit_length(), counter_bits)
    elif problem == "multiplication":
        value_bits = max((n * (q - 1) ** 2).bit_length(), counter_bits)
    else:
        raise EngineError(f"unknown problem {problem!r}")
    return max(addr_bits, value_bits, ceil_log2(n), ceil_log2(q))


def default_params(problem: str, algo: str, n: int, q: int, seed: int = 0) -> Params:
    return Params(n=n, q=q, w=required_width(problem, algo, n, q), seed=seed)


# ---------------------------------------------------------------------------
# Online processors


class _ProcessorBase:
    problem = ""
    algo = ""

    def __init__(self, fixed: SymbolString, params: Params, store) -> None:
        if len(fixed) != params.n:
            raise EngineError(f"fixed string length {len(fixed)} != n={params.n}")
        if fixed.q != params.q:
            raise EngineError(f"fixed string alphabet {fixed.q} != q={params.q}")
        need = required_width(self.problem, self.algo, params.n, params.q)
        if params.w < need:
            raise EngineError(
                f"{self.problem}/{self.algo} at n={params.n}, q={params.q} "
                f"needs w >= {need}, got {params.w}"
            )
        self.fixed = fixed
        self.params = params
        self.store = store
        self.n = params.n
        self.q = params.q

    def _check_symbol(self, x: int) -> None:
        if not 0 <= x < self.q:
            raise EngineError(f"symbol {x} out of range [0,{self.q})")

    def state_layout(self) -> str:
        raise NotImplementedError

    def update(self, x: int) -> int:
        raise NotImplementedError


class NaiveConvolution(_ProcessorBase):
    """Rescans the whole window each arrival: n+3 probes per update."""

    problem = "convolution"
    algo = "naive"

    def state_layout(self) -> str:
        return f"[0]=arrival counter, [{DATA_BASE},{DATA_BASE + self.n})=window ring"

    def update(self, x: int) -> int:
        self._check_symbol(x)
        store = self.store
        t = store.read(ADDR_T)
        store.write(DATA_BASE + t % self.n, x)
        ring = store.read_block(DATA_BASE, self.n)
        out = int(np.dot(np.roll(self.fixed.codes, t + 1), ring) % self.q)
        store.write(ADDR_T, t + 1)
        return out


class NaiveHamming(_ProcessorBase):
    """Window rescan with mismatch count; the stream never carries star."""

    problem = "hamming"
    algo = "naive"

    def state_layout(self) -> str:
        return f"[0]=arrival counter, [{DATA_BASE},{DATA_BASE + self.n})=window ring"

    def update(self, x: int) -> int:
        self._check_symbol(x)
        if x == self.params.star:
            raise EngineError(f"star symbol {x} must never occur in the stream")
        store = self.store
        t = store.read(ADDR_T)
        store.write(DATA_BASE + t % self.n, x)
        ring = store.read_block(DATA_BASE, self.n)
        out = int(np.count_nonzero(np.roll(self.fixed.codes, t + 1) != ring))
        store.write(ADDR_T, t + 1)
        return out


class _BlockedBase(_ProcessorBase):
    """Shared lag-class machinery for the blocked processors."""

    algo = "fast"

    def __init__(self, fixed: SymbolString, params: Params, store,
                 kernel: str = "auto", counter: KernelCounter | None = None) -> None:
        super().__init__(fixed, params, store)
        self.kernel = kernel
        self.counter = counter if counter is not None else KernelCounter()
        # g[d] is the fixed coefficient at lag d: g = reversed fixed string.
        self.g = fixed.codes[::-1].copy()
        self.block_ks = list(range(floor_log2(self.n)))  # block size 2^k covers lags [2^k, 2^{k+1})
        self.gsegs = {k: self.g[(1 << k): (2 << k)].copy() for k in self.block_ks}
        self.pend_base = DATA_BASE + self.n

    def _ring_read_arrivals(self, first_arrival: int, length: int) -> np.ndarray:
        """Arrivals [first, first+length) from the window ring, in arrival order."""
        start = (DATA_BASE + first_arrival % self.n)
        room = DATA_BASE + self.n - start
        if length <= room:
            return self.store.read_block(start, length)
        head = self.store.read_block(start, room)
        tail = self.store.read_block(DATA_BASE, length - room)
        return np.concatenate([head, tail])

    def _pending_add(self, first_output: int, vals: np.ndarray, mod: int | None) -> None:
        """Accumulate vals into pending slots for outputs [first, first+len)."""
        start_slot = first_output % self.n
        room = self.n - start_slot
        pieces = [(start_slot, vals[:room]), (0, vals[room:])] if vals.size > room \
            else [(start_slot, vals)]
        for slot, piece in pieces:
            if piece.size == 0:
                continue
            cur = self.store.read_block(self.pend_base + slot, piece.size)
            cur = cur + piece
            if mod is not None:
                cur %= mod
            self.store.write_block(self.pend_base + slot, cur)

    def _completed_blocks(self, t: int):
        for k in self.block_ks:
            if (t + 1) % (1 << k) == 0:
                yield k, 1 << k


class BlockedConvolution(_BlockedBase):
    """Power-of-two lag classes, offline kernel per completed block."""

    problem = "convolution"

    def state_layout(self) -> str:
        return (
            f"[0]=arrival counter, [{DATA_BASE},{DATA_BASE + self.n})=window ring, "
            f"[{self.pend_base},{self.pend_base + self.n})=pending outputs mod q"
        )

    def update(self, x: int) -> int:
        self._check_symbol(x)
        store = self.store
        t = store.read(ADDR_T)
        store.write(DATA_BASE + t % self.n, x)
        slot = self.pend_base + t % self.n
        out = (store.read(slot) + int(self.g[0]) * x) % self.q
        store.write(slot, 0)  # freed for output t+n
        for k, size in self._completed_blocks(t):
            block = self._ring_read_arrivals(t - size + 1, size)
            piece = offline_conv(block, self.gsegs[k], self.q,
                                 kernel=self.kernel, counter=self.counter)
            self._pending_add(t + 1, piece, mod=self.q)
        store.write(ADDR_T, t + 1)
        return out


class BlockedHamming(_BlockedBase):
    """Match counts via per-symbol indicator convolutions per block."""

    problem = "hamming"
    prefill = 0

    def __init__(self, fixed: SymbolString, params: Params, store,
                 kernel: str = "naive", counter: KernelCounter | None = None) -> None:
        super().__init__(fixed, params, store, kernel=kernel, counter=counter)
        # Matches of not-yet-arrived (prefill) window positions: for output t
        # every lag d > t is aligned with the prefill symbol.
        eq = (self.g == self.prefill).astype(np.int64)
        self.prefill_suffix = np.concatenate(
            [np.cumsum(eq[::-1])[::-1], np.zeros(1, dtype=np.int64)]
        )
        self.gseg_symbols = {
            k: {int(s) for s in np.unique(seg)} for k, seg in self.gsegs.items()
        }

    def state_layout(self) -> str:
        return (
            f"[0]=arrival counter, [{DATA_BASE},{DATA_BASE + self.n})=window ring, "
            f"[{self.pend_base},{self.pend_base + self.n})=pending match counts"
        )

    def _block_matches(self, k: int, block: np.ndarray) -> np.ndarray:
        gseg = self.gsegs[k]
        piece = np.zeros(block.size + gseg.size - 1, dtype=np.int64)
        for sym in np.unique(block).tolist():
            if sym not in self.gseg_symbols[k]:
                continue
            ind_g = (gseg == sym).astype(np.int64)
            ind_b = (block == sym).astype(np.int64)
            piece += np.convolve(ind_g, ind_b)
            if self.counter is not None:
                self.counter.record("naive", int(ind_g.size) * int(ind_b.size))
        return piece

    def update(self, x: int) -> int:
        self._check_symbol(x)
        if x == self.params.star:
            raise EngineError(f"star symbol {x} must never occur in the stream")
        store = self.store
        t = store.read(ADDR_T)
        store.write(DATA_BASE + t % self.n, x)
        slot = self.pend_base + t % self.n
        matches = store.read(slot) + int(self.g[0] == x)
        if t + 1 < self.n:
            matches += int(self.prefill_suffix[t + 1])
        store.write(slot, 0)
        for k, size in self._completed_blocks(t):
            block = self._ring_read_arrivals(t - size + 1, size)
            self._pending_add(t + 1, self._block_matches(k, block), mod=None)
        store.write(ADDR_T, t + 1)
        return self.n - matches


class OnlineDigitProduct(_ProcessorBase):
    """Base-q digit-serial product against a fixed operand.

    Limb j accumulates every contribution to product digit j without
    normalization (contributions only ever target limbs >= the current
    arrival, so limb t is settled when digit t is due); a single carry
    cell rolls the settled positions forward.
    """

    problem = "multiplication"
    algo = "naive"

    def state_layout(self) -> str:
        return (
            f"[0]=arrival counter, [1]=settled carry, "
            f"[{DATA_BASE},{DATA_BASE + self.n})=unnormalized product limbs"
        )

    def update(self, x: int) -> int:
        self._check_symbol(x)
        store = self.store
        t = store.read(ADDR_T)
        if t >= self.n:
            raise EngineError(f"digit {t} beyond the {self.n}-digit product window")
        span = self.n - t
        limbs = store.read_block(DATA_BASE + t, span)
        limbs = limbs + x * self.fixed.codes[:span]
        store.write_block(DATA_BASE + t, limbs)
        carry = store.read(ADDR_CARRY)
        total = int(limbs[0]) + carry
        store.write(ADDR_CARRY, total // self.q)
        store.write(ADDR_T, t + 1)
        return total % self.q


_PROCESSOR_TYPES = {
    ("convolution", "naive"): NaiveConvolution,
    ("convolution", "fast"): BlockedConvolution,
    ("hamming", "naive"): NaiveHamming,
    ("hamming", "fast"): BlockedHamming,
    ("multiplication", "naive"): OnlineDigitProduct,
    ("multiplication", "fast"): OnlineDigitProduct,
}


def make_processor(problem: str, algo: str, fixed: SymbolString, params: Params,
                   store, **kwargs) -> _ProcessorBase:
    try:
        cls = _PROCESSOR_TYPES[(problem, algo)]
    except KeyError:
        raise EngineError(f"no processor for problem={problem!r}, algo={algo!r}")
    return cls(fixed, params, store, **kwargs)


def processor_factory(problem: str, algo: str, fixed: SymbolString,
                      params: Params, **kwargs) -> Callable:
    def build(store):
        return make_processor(problem, algo, fixed, params, store, **kwargs)

    return build


def run_stream(proc: _ProcessorBase, stream: SymbolString | Sequence[int]) -> np.ndarray:
    codes = stream.codes if isinstance(stream, SymbolString) else np.asarray(stream)
    outputs = np.empty(codes.size, dtype=np.int64)
    for t, x in enumerate(codes.tolist()):
        proc.store.epoch = t
        outputs[t] = proc.update(x)
    return outputs


@dataclass
class RecordedRun:
    """A full traced run: everything encode/decode and analytics need."""

    problem: str
    algo: str
    params: Params
    fixed: SymbolString
    stream: SymbolString
    outputs: np.ndarray
    store: CellStore
    factory: Callable
    kernel_counter: KernelCounter | None = None

    @property
    def trace(self) -> ProbeTrace:
        if self.store.trace is None:
            raise ValueError("run was not traced")
        return self.store.trace

    @property
    def capacity(self) -> int:
        return self.store.capacity


def run_traced(problem: str, algo: str, fixed: SymbolString, stream: SymbolString,
               params: Params | None = None, record_trace: bool = True,
               transfer_counter: StreamingTransferCounter | None = None,
               **kwargs) -> RecordedRun:
    n = len(fixed)
    if params is None:
        params = default_params(problem, algo, n, fixed.q)
    capacity = store_capacity(problem, algo, params.n)
    store = CellStore(params.w, capacity, record_trace=record_trace,
                      transfer_counter=transfer_counter)
    factory = processor_factory(problem, algo, fixed, params, **kwargs)
    proc = factory(store)
    outputs = run_stream(proc, stream)
    counter = getattr(proc, "counter", None)
    return RecordedRun(problem, algo, params, fixed, stream, outputs, store,
                       factory, counter)
