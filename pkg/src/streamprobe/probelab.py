"""Traced w-bit cell store and information-transfer analytics.

A CellStore is the only persistent state a processor may use: every read
and write is a probe, tagged with the arrival index (epoch) current at
the time. From a completed trace we compute, per tree node, the set of
cells probed in the node's left arrival interval and again in its right
interval (variant "probed_probed"), and the tighter set written on the
left and read on the right (variant "written_read"). The second set is
exactly what the encode/decode round trip at the bottom of this module
consumes: the right-interval outputs of a deterministic processor can be
reconstructed from those cells' values plus the inputs outside the left
interval, never touching the left-interval inputs themselves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ArrivalWindow, ceil_log2, is_power_of_two, tree_windows

READ = "r"
WRITE = "w"

_VARIANTS = ("probed_probed", "written_read")


class WidthError(ValueError):
    """An address or value does not fit in the declared cell width."""


class DecodeMismatch(RuntimeError):
    """Round-trip decoding produced outputs different from the recorded run."""


# ---------------------------------------------------------------------------
# Probe traces


class ProbeTrace:
    """Append-only log of (epoch, op, addr, value-after) probe events."""

    def __init__(self) -> None:
        self._epochs: list[int] = []
        self._ops: list[str] = []
        self._addrs: list[int] = []
        self._values: list[int] = []

    def append(self, epoch: int, op: str, addr: int, value: int) -> None:
        self._epochs.append(epoch)
        self._ops.append(op)
        self._addrs.append(addr)
        self._values.append(value)

    def extend(self, epoch: int, op: str, addrs: Iterable[int], values: Iterable[int]) -> None:
        addrs = list(addrs)
        self._epochs.extend([epoch] * len(addrs))
        self._ops.extend([op] * len(addrs))
        self._addrs.extend(addrs)
        self._values.extend(list(values))

    def __len__(self) -> int:
        return len(self._epochs)

    def events(self) -> list[tuple[int, str, int, int]]:
        return list(zip(self._epochs, self._ops, self._addrs, self._values))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ep = np.asarray(self._epochs, dtype=np.int64)
        op = np.asarray([0 if o == READ else 1 for o in self._ops], dtype=np.int64)
        ad = np.asarray(self._addrs, dtype=np.int64)
        va = np.asarray(self._values, dtype=np.int64)
        return ep, op, ad, va

    def max_epoch(self) -> int:
        return max(self._epochs) if self._epochs else -1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "op", "addr", "value"])
            writer.writerows(zip(self._epochs, self._ops, self._addrs, self._values))

    @classmethod
    def from_csv(cls, path) -> "ProbeTrace":
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["epoch", "op", "addr", "value"]:
                raise ValueError(f"unexpected trace header {header}")
            for epoch, op, addr, value in reader:
                if op not in (READ, WRITE):
                    raise ValueError(f"bad op {op!r} in trace")
                trace.append(int(epoch), op, int(addr), int(value))
        return trace


def replay_state(trace: ProbeTrace, upto_epoch: int | None = None) -> dict[int, int]:
    """Cell contents implied by the writes in the trace, up to an epoch."""
    state: dict[int, int] = {}
    for epoch, op, addr, value in trace.events():
        if upto_epoch is not None and epoch > upto_epoch:
            break
        if op == WRITE:
            state[addr] = value
    return state


def check_replay_consistency(trace: ProbeTrace) -> None:
    """Every read must return the most recent written value (0 if never written)."""
    state: dict[int, int] = {}
    last_epoch = -1
    for i, (epoch, op, addr, value) in enumerate(trace.events()):
        if epoch < last_epoch:
            raise ValueError(f"trace epochs decrease at event {i}")
        last_epoch = epoch
        if op == WRITE:
            state[addr] = value
        elif state.get(addr, 0) != value:
            raise ValueError(
                f"event {i}: read of addr {addr} returned {value}, "
                f"replay says {state.get(addr, 0)}"
            )


# ---------------------------------------------------------------------------
# The traced cell store


class CellStore:
    """w-bit cells addressed by integers; absent cells read as 0.

    Block read/write helpers probe one cell per element (the trace and
    probe counters reflect that) but move data through numpy so large
    runs stay affordable.
    """

    def __init__(
        self,
        width_bits: int,
        capacity: int,
        record_trace: bool = True,
        transfer_counter: "StreamingTransferCounter | None" = None,
    ) -> None:
        if width_bits < 1 or width_bits > 62:
            raise WidthError(f"cell width must be in [1,62], got {width_bits}")
        if capacity < 1 or capacity > (1 << width_bits):
            raise WidthError(
                f"capacity {capacity} exceeds the {width_bits}-bit address space"
            )
        self.w = width_bits
        self.capacity = capacity
        self.cells = np.zeros(capacity, dtype=np.int64)
        self.epoch = 0
        self.reads = 0
        self.writes = 0
        self.trace: ProbeTrace | None = ProbeTrace() if record_trace else None
        self.counter = transfer_counter
        self._limit = 1 << width_bits

    @property
    def probes(self) -> int:
        return self.reads + self.writes

    def _check_addr(self, addr: int, length: int = 1) -> None:
        if addr < 0 or addr + length > self.capacity:
            raise WidthError(f"address range [{addr},{addr + length}) outside capacity")

    def read(self, addr: int) -> int:
        self._check_addr(addr)
        value = int(self.cells[addr])
        self.reads += 1
        if self.trace is not None:
            self.trace.append(self.epoch, READ, addr, value)
        if self.counter is not None:
            self.counter.on_read_scalar(addr, self.epoch)
        return value

    def write(self, addr: int, value: int) -> None:
        self._check_addr(addr)
        if not 0 <= value < self._limit:
            raise WidthError(f"value {value} does not fit in {self.w} bits")
        self.cells[addr] = value
        self.writes += 1
        if self.trace is not None:
            self.trace.append(self.epoch, WRITE, addr, value)
        if self.counter is not None:
            self.counter.on_write_scalar(addr, self.epoch)

    def read_block(self, addr: int, length: int) -> np.ndarray:
        self._check_addr(addr, length)
        values = self.cells[addr : addr + length].copy()
        self.reads += length
        if self.trace is not None:
            self.trace.extend(
                self.epoch, READ, range(addr, addr + length), values.tolist()
            )
        if self.counter is not None:
            self.counter.on_read_range(addr, length, self.epoch)
        return values

    def write_block(self, addr: int, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.int64)
        length = int(values.size)
        self._check_addr(addr, length)
        if length and (values.min() < 0 or values.max() >= self._limit):
            raise WidthError(f"some value does not fit in {self.w} bits")
        self.cells[addr : addr + length] = values
        self.writes += length
        if self.trace is not None:
            self.trace.extend(
                self.epoch, WRITE, range(addr, addr + length), values.tolist()
            )
        if self.counter is not None:
            self.counter.on_write_range(addr, length, self.epoch)

    def snapshot(self) -> dict:
        return {
            "w": self.w,
            "capacity": self.capacity,
            "epoch": self.epoch,
            "cells": self.cells.tolist(),
        }

    @classmethod
    def from_snapshot(cls, snap: dict, record_trace: bool = False) -> "CellStore":
        store = cls(snap["w"], snap["capacity"], record_trace=record_trace)
        store.cells[:] = np.asarray(snap["cells"], dtype=np.int64)
        store.epoch = snap["epoch"]
        return store


class DecodeStore:
    """Store view used while re-simulating a right interval.

    Reads are served, in priority order, from cells this simulation has
    already written or fetched, then from the encoded left-interval
    cells, then from the simulated pre-window state. Once fetched, a
    cell is remembered locally, so each encoded entry is consumed at
    most once.
    """

    def __init__(self, width_bits: int, pre_cells: np.ndarray, encoded: dict[int, int]):
        self.w = width_bits
        self._limit = 1 << width_bits
        self.local: dict[int, int] = {}
        self.encoded = dict(encoded)
        self.pre = pre_cells
        self.epoch = 0
        self.encoded_hits = 0

    def read(self, addr: int) -> int:
        if addr in self.local:
            return self.local[addr]
        if addr in self.encoded:
            value = self.encoded[addr]
            self.encoded_hits += 1
        elif 0 <= addr < self.pre.size:
            value = int(self.pre[addr])
        else:
            value = 0
        self.local[addr] = value
        return value

    def write(self, addr: int, value: int) -> None:
        if not 0 <= value < self._limit:
            raise WidthError(f"value {value} does not fit in {self.w} bits")
        self.local[addr] = value

    def read_block(self, addr: int, length: int) -> np.ndarray:
        return np.fromiter(
            (self.read(a) for a in range(addr, addr + length)), dtype=np.int64, count=length
        )

    def write_block(self, addr: int, values: np.ndarray) -> None:
        for offset, value in enumerate(np.asarray(values, dtype=np.int64).tolist()):
            self.write(addr + offset, value)


# ---------------------------------------------------------------------------
# Information transfer over the window tree


@dataclass
class InfoTransferTree:
    """Per-node information-transfer sizes for both variants."""

    n: int
    windows: tuple[ArrivalWindow, ...]
    iv_pp: dict[int, int]
    iv_wr: dict[int, int]

    def iv(self, node_id: int, variant: str = "probed_probed") -> int:
        if variant not in _VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        return (self.iv_pp if variant == "probed_probed" else self.iv_wr)[node_id]

    def rows(self) -> list[tuple[int, int, int, int, int, int, int]]:
        return [
            (v.node_id, v.t0, v.t1, v.t2, v.ell, self.iv_pp[v.node_id], self.iv_wr[v.node_id])
            for v in self.windows
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_id", "t0", "t1", "t2", "ell", "Iv_pp", "Iv_wr"])
            writer.writerows(self.rows())


def sum_information_transfer(
    tree: InfoTransferTree, ell_min: int = 2, variant: str = "probed_probed"
) -> int:
    """Sum of I_v over nodes with ell >= ell_min."""
    if not is_power_of_two(ell_min):
        raise ValueError(f"ell_min must be a power of two, got {ell_min}")
    return sum(tree.iv(v.node_id, variant) for v in tree.windows if v.ell >= ell_min)


def compute_info_transfer(trace: ProbeTrace, n: int) -> InfoTransferTree:
    """Per-node transfer sizes from a completed trace, both variants.

    probed_probed: cells probed in [t0,t1] and probed again in [t1+1,t2].
    written_read: cells written in [t0,t1] and read in [t1+1,t2]; this is
    the subset a decoder actually needs, so written_read <= probed_probed
    holds per node.
    """
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n}")
    windows = tree_windows(n)
    ep, op, ad, _ = trace.arrays()
    if ep.size and int(ep.max()) >= n:
        raise ValueError(f"trace epoch {int(ep.max())} >= n={n}")
    iv_pp: dict[int, int] = {v.node_id: 0 for v in windows}
    iv_wr: dict[int, int] = {v.node_id: 0 for v in windows}
    if ep.size == 0:
        return InfoTransferTree(n, windows, iv_pp, iv_wr)
    cap = int(ad.max()) + 1
    ell = 2
    while ell <= n:
        half = ell // 2
        idx = ep // ell
        right = (ep % ell) >= half
        key = idx * cap + ad
        # probed_probed: any-op left keys against any-op right keys
        left_keys = np.unique(key[~right])
        right_keys = np.unique(key[right])
        both = np.intersect1d(left_keys, right_keys, assume_unique=True)
        counts = np.bincount(both // cap, minlength=n // ell)
        # written_read: left writes against right reads
        lw_keys = np.unique(key[(~right) & (op == 1)])
        rr_keys = np.unique(key[right & (op == 0)])
        both_wr = np.intersect1d(lw_keys, rr_keys, assume_unique=True)
        counts_wr = np.bincount(both_wr // cap, minlength=n // ell)
        depth = (n // ell).bit_length() - 1
        for i in range(n // ell):
            node_id = (1 << depth) + i
            iv_pp[node_id] = int(counts[i])
            iv_wr[node_id] = int(counts_wr[i])
        ell *= 2
    return InfoTransferTree(n, windows, iv_pp, iv_wr)


def node_transfer_cells(
    trace: ProbeTrace, v: ArrivalWindow
) -> tuple[set[int], set[int], dict[int, int]]:
    """(probed_probed set, written_read set, value at end of t1 per written cell)."""
    left_probed: set[int] = set()
    left_written: set[int] = set()
    right_probed: set[int] = set()
    right_read: set[int] = set()
    value_at_t1: dict[int, int] = {}
    for epoch, op, addr, value in trace.events():
        if v.t0 <= epoch <= v.t1:
            left_probed.add(addr)
            if op == WRITE:
                left_written.add(addr)
        elif v.t1 < epoch <= v.t2:
            right_probed.add(addr)
            if op == READ:
                right_read.add(addr)
        if op == WRITE and epoch <= v.t1:
            value_at_t1[addr] = value
    return left_probed & right_probed, left_written & right_read, value_at_t1


def counting_bound_holds(tree: InfoTransferTree, total_probes: int) -> bool:
    """Sum over all nodes of I_v never exceeds the number of probe events.

    Each cell in a node's transfer is witnessed by its first probe in the
    node's right interval, and that probe is distinct across nested or
    disjoint nodes, so the probe count dominates the sum.
    """
    return sum_information_transfer(tree, 2, "probed_probed") <= total_probes


# ---------------------------------------------------------------------------
# Streaming transfer counter (for runs too large to keep a trace)


class StreamingTransferCounter:
    """Incremental per-node I_v accounting, one update per probe.

    A probe at epoch e in the right half of a node's window contributes
    to probed_probed exactly when the previous probe of the same cell
    fell in the left half of the same window; reads contribute to
    written_read when the cell's last write did, and no earlier read of
    the cell already fell in the right half.
    """

    def __init__(self, n: int, capacity: int) -> None:
        if not is_power_of_two(n):
            raise ValueError(f"n must be a power of two, got {n}")
        self.n = n
        self.last_probe = np.full(capacity, -1, dtype=np.int64)
        self.last_write = np.full(capacity, -1, dtype=np.int64)
        self.last_read = np.full(capacity, -1, dtype=np.int64)
        self.levels = [2 << k for k in range((n - 1).bit_length())]
        self.iv_pp = {ell: np.zeros(n // ell, dtype=np.int64) for ell in self.levels}
        self.iv_wr = {ell: np.zeros(n // ell, dtype=np.int64) for ell in self.levels}

    def _count_pp(self, prev: np.ndarray, epoch: int) -> None:
        for ell in self.levels:
            half = ell // 2
            if epoch % ell < half:
                continue
            t0 = (epoch // ell) * ell
            t1 = t0 + half - 1
            hits = int(np.count_nonzero((prev >= t0) & (prev <= t1)))
            if hits:
                self.iv_pp[ell][epoch // ell] += hits

    def _count_wr(self, lw: np.ndarray, lr: np.ndarray, epoch: int) -> None:
        for ell in self.levels:
            half = ell // 2
            if epoch % ell < half:
                continue
            t0 = (epoch // ell) * ell
            t1 = t0 + half - 1
            fresh = (lw >= t0) & (lw <= t1) & (lr <= t1)
            hits = int(np.count_nonzero(fresh))
            if hits:
                self.iv_wr[ell][epoch // ell] += hits

    def on_read_range(self, addr: int, length: int, epoch: int) -> None:
        sl = slice(addr, addr + length)
        self._count_pp(self.last_probe[sl], epoch)
        self._count_wr(self.last_write[sl], self.last_read[sl], epoch)
        self.last_probe[sl] = epoch
        self.last_read[sl] = epoch

    def on_write_range(self, addr: int, length: int, epoch: int) -> None:
        sl = slice(addr, addr + length)
        self._count_pp(self.last_probe[sl], epoch)
        self.last_probe[sl] = epoch
        self.last_write[sl] = epoch

    def on_read_scalar(self, addr: int, epoch: int) -> None:
        self.on_read_range(addr, 1, epoch)

    def on_write_scalar(self, addr: int, epoch: int) -> None:
        self.on_write_range(addr, 1, epoch)

    def to_tree(self) -> InfoTransferTree:
        windows = tree_windows(self.n)
        iv_pp = {}
        iv_wr = {}
        for v in windows:
            iv_pp[v.node_id] = int(self.iv_pp[v.ell][v.t0 // v.ell])
            iv_wr[v.node_id] = int(self.iv_wr[v.ell][v.t0 // v.ell])
        return InfoTransferTree(self.n, windows, iv_pp, iv_wr)


# ---------------------------------------------------------------------------
# Encode / decode of right-interval outputs


@dataclass(frozen=True)
class IvEncoding:
    """Address/value pairs for one node's written_read cells.

    Entries carry the cell contents as of the end of epoch t1. The
    declared size is one w-bit count header plus 2w bits per entry.
    """

    node_id: int
    w: int
    entries: tuple[tuple[int, int], ...]

    @property
    def count(self) -> int:
        return len(self.entries)

    def bit_size(self) -> int:
        return self.w + 2 * self.w * self.count

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)


def encode_av(trace: ProbeTrace, v: ArrivalWindow, width_bits: int) -> IvEncoding:
    """Encode node v's transfer cells with their values at the end of t1."""
    _, written_read, value_at_t1 = node_transfer_cells(trace, v)
    entries = tuple(sorted((addr, value_at_t1[addr]) for addr in written_read))
    return IvEncoding(v.node_id, width_bits, entries)


def decode_av(
    factory: Callable[[CellStore | DecodeStore], object],
    stream_codes: Sequence[int] | np.ndarray,
    v: ArrivalWindow,
    enc: IvEncoding,
    width_bits: int,
    capacity: int,
) -> np.ndarray:
    """Reproduce the right-interval outputs without the left-interval inputs.

    Simulates arrivals [0,t0-1] on a fresh store, skips [t0,t1] entirely,
    then replays [t1+1,t2] serving reads from the encoding as needed. The
    left-interval inputs are scrubbed before simulation so they cannot
    leak into the result.
    """
    codes = np.asarray(stream_codes, dtype=np.int64).copy()
    codes[v.t0 : v.t1 + 1] = 0  # scrubbed; decoding must not depend on them
    pre_store = CellStore(width_bits, capacity, record_trace=False)
    proc = factory(pre_store)
    for t in range(v.t0):
        pre_store.epoch = t
        proc.update(int(codes[t]))
    dstore = DecodeStore(width_bits, pre_store.cells, enc.as_dict())
    proc2 = factory(dstore)
    outputs = np.empty(v.half, dtype=np.int64)
    for i, t in enumerate(range(v.t1 + 1, v.t2 + 1)):
        dstore.epoch = t
        outputs[i] = proc2.update(int(codes[t]))
    return outputs


def roundtrip_check(
    factory: Callable[[CellStore | DecodeStore], object],
    stream_codes: Sequence[int] | np.ndarray,
    outputs: Sequence[int] | np.ndarray,
    trace: ProbeTrace,
    v: ArrivalWindow,
    width_bits: int,
    capacity: int,
) -> IvEncoding:
    """encode_av then decode_av for one node; raises DecodeMismatch on failure."""
    enc = encode_av(trace, v, width_bits)
    decoded = decode_av(factory, stream_codes, v, enc, width_bits, capacity)
    expected = np.asarray(outputs, dtype=np.int64)[v.t1 + 1 : v.t2 + 1]
    if not np.array_equal(decoded, expected):
        raise DecodeMismatch(
            f"node {v.node_id}: decoded {decoded.tolist()} != true {expected.tolist()}"
        )
    return enc
