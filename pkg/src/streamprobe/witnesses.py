"""Constructive decoders and brute-force oracles.

Each decoder recovers stream symbols from a node's right-interval outputs
plus everything outside the node's left interval, exactly the way the
corresponding construction promises: window inversion through the
Toeplitz system, direct readout against the power-offset fixed string,
digit-window collision counting for products, and block identification
through sliding-distance profiles. The oracles at the bottom enumerate
sub-multiset sums and distance profiles exhaustively; they are the
independent route every construction is checked against.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .core import ArrivalWindow, SymbolString, is_prime, slice_av, solve_mod
from .engines import (
    conv_outputs_reference,
    hamming_outputs_reference,
    product_digits_bigint,
)
from .instances import (
    ConstructionError,
    HammingInstance,
    VectorMultiset,
    build_toeplitz,
    make_kn,
)


@dataclass
class DecodeReport:
    """Outcome of one decode attempt at one node.

    recovered maps arrival index to the recovered symbol; ambiguity is
    the number of candidate left-interval inputs consistent under the
    method (1 when every targeted value is pinned uniquely).
    """

    node_id: int
    method: str
    recovered: dict[int, int] = field(default_factory=dict)
    ambiguity: int = 1
    ok: bool = True
    note: str = ""

    def verify_against(self, stream: SymbolString) -> bool:
        return all(stream[t] == sym for t, sym in self.recovered.items())


def reports_to_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "method", "recovered_count", "ambiguity", "ok"])
        for rep in reports:
            writer.writerow(
                [rep.node_id, rep.method, len(rep.recovered), rep.ambiguity, int(rep.ok)]
            )


# ---------------------------------------------------------------------------
# Convolution decoders


def _masked_baseline_av(
    fixed: SymbolString, stream: SymbolString, v: ArrivalWindow, fill: int
) -> np.ndarray:
    """Right-interval outputs with the left-interval inputs replaced by fill.

    The fill contributions are additive mod q, so subtracting this
    baseline from the true outputs isolates the window's contribution.
    """
    codes = stream.codes.copy()
    codes[v.t0 : v.t1 + 1] = fill
    outputs = conv_outputs_reference(fixed, SymbolString(codes, stream.q), fixed.q)
    return slice_av(outputs, v)


def decode_conv_kn(
    av, v: ArrivalWindow, fixed: SymbolString, stream: SymbolString
) -> DecodeReport:
    """Recover the upper half of the window against the power-offset string.

    Rows half..ell-1 of the window matrix are unit vectors there, so each
    of those outputs, after removing the outside contribution, reads one
    window symbol directly.
    """
    n = len(fixed)
    if not np.array_equal(fixed.codes, make_kn(n).codes % fixed.q):
        raise ConstructionError("fixed string is not the power-offset 0/1 string")
    q = fixed.q
    av = np.asarray(av, dtype=np.int64)
    ell = v.half
    baseline = _masked_baseline_av(fixed, stream, v, fill=0)
    recovered = {}
    for i in range(ell // 2, ell):
        recovered[v.t0 + i] = int((av[i] - baseline[i]) % q)
    return DecodeReport(
        v.node_id,
        "conv_kn",
        recovered,
        ambiguity=q ** (ell - len(recovered)),
    )


def decode_conv_toeplitz(
    av, v: ArrivalWindow, fixed: SymbolString, stream: SymbolString
) -> DecodeReport:
    """Invert the window matrix over Z/qZ, q prime.

    Nonsingular: recovers the whole window, ambiguity 1. Singular: no
    symbols are claimed; ambiguity is q to the kernel dimension.
    """
    q = fixed.q
    if not is_prime(q):
        raise ConstructionError(f"Toeplitz decoding needs a prime q, got {q}")
    av = np.asarray(av, dtype=np.int64)
    ell = v.half
    matrix = build_toeplitz(fixed, ell).to_matrix().tolist()
    baseline = _masked_baseline_av(fixed, stream, v, fill=0)
    rhs = [int((av[i] - baseline[i]) % q) for i in range(ell)]
    solution, kernel_dim = solve_mod(matrix, rhs, q)
    if solution is None:
        return DecodeReport(v.node_id, "conv_toeplitz", {}, ambiguity=q**kernel_dim,
                            ok=False, note="inconsistent system: outputs not from a real run")
    if kernel_dim == 0:
        recovered = {v.t0 + i: solution[i] for i in range(ell)}
        return DecodeReport(v.node_id, "conv_toeplitz", recovered, ambiguity=1)
    return DecodeReport(v.node_id, "conv_toeplitz", {}, ambiguity=q**kernel_dim,
                        note="singular window matrix")


# ---------------------------------------------------------------------------
# Multiplication ambiguity counting


def mult_ambiguity(
    fixed: SymbolString,
    v: ArrivalWindow,
    outside: SymbolString,
    output_count: int | None = None,
) -> int:
    """Largest number of distinct digit windows mapping to one output block.

    Enumerates every value of the left-interval digits with all other
    digits fixed to `outside`, computes the right-interval product digits,
    and returns the size of the largest collision group.
    """
    q = fixed.q
    half = v.half
    if q**half > 1 << 16:
        raise ConstructionError(f"{q}^{half} digit windows exceed the desk-scale limit")
    count = output_count if output_count is not None else half
    groups: dict[bytes, int] = {}
    digits = outside.codes.copy()
    for window in itertools.product(range(q), repeat=half):
        digits[v.t0 : v.t1 + 1] = window
        out = product_digits_bigint(fixed.codes.tolist(), digits.tolist(), q,
                                    count=v.t2 + 1)
        key = out[v.t1 + 1 : v.t1 + 1 + count].tobytes()
        groups[key] = groups.get(key, 0) + 1
    return max(groups.values())


def mult_ambiguity_experiment(fixed: SymbolString, limit: int = 4096) -> dict[int, int]:
    """Max ambiguity per node over every fixing of the outside digits.

    Exhausts all q^n operand streams, grouping right-interval outputs by
    (node, outside digits); exact but only for q^n <= limit.
    """
    from .core import tree_windows

    q, n = fixed.q, len(fixed)
    if q**n > limit:
        raise ConstructionError(f"{q}^{n} operands exceed the exhaustive limit {limit}")
    windows = tree_windows(n)
    outputs = {}
    for u in itertools.product(range(q), repeat=n):
        outputs[u] = product_digits_bigint(fixed.codes.tolist(), list(u), q, count=n)
    worst = {v.node_id: 0 for v in windows}
    for v in windows:
        groups: dict[tuple, int] = {}
        for u, out in outputs.items():
            fixing = u[: v.t0] + u[v.t1 + 1 :]
            key = (fixing, out[v.t1 + 1 : v.t2 + 1].tobytes())
            groups[key] = groups.get(key, 0) + 1
        worst[v.node_id] = max(groups.values())
    return worst


def mult_f_fraction(q: int, ell_v: int, n: int = 8) -> tuple[Fraction, dict]:
    """Fraction of digit prefixes of length ell_v whose worst-case window
    ambiguity stays <= 4, exhausted over all operands and all nodes of
    that window size; prefixes are extended with zero digits."""
    if q != 2 or ell_v > 8 or n > 8:
        raise ConstructionError("exhaustive fraction is desk-scale: q=2, ell_v<=8, n<=8")
    from .core import tree_windows

    nodes = [v for v in tree_windows(n) if v.ell == ell_v]
    if not nodes:
        raise ConstructionError(f"no node of size {ell_v} in a tree over {n}")
    good = 0
    details = {}
    for prefix in itertools.product(range(q), repeat=ell_v):
        digits = list(prefix) + [0] * (n - ell_v)
        fixed = SymbolString(digits, q)
        worst_all = mult_ambiguity_experiment(fixed)
        worst = max(worst_all[v.node_id] for v in nodes)
        details[prefix] = worst
        if worst <= 4:
            good += 1
    return Fraction(good, q**ell_v), details


# ---------------------------------------------------------------------------
# Hamming block decoding


def decode_hamming_blocks(
    av, v: ArrivalWindow, inst: HammingInstance, stream: SymbolString
) -> DecodeReport:
    """Identify the stream blocks that slide fully past the window-sized
    copy of the block string during the right interval.

    The baseline rerun replaces the left-interval inputs with diamond
    (which matches nothing in the fixed string), so output differences
    count exactly the window's matches. Blocks in the second half of the
    window are clean: while they are being measured, every other copy of
    the block string has left the window region entirely.
    """
    r = inst.r
    block = 2 * r
    av = np.asarray(av, dtype=np.int64)
    if v.t0 % block != 0 or v.half % block != 0 or v.ell < 4 * r:
        return DecodeReport(v.node_id, "hamming_blocks", {},
                            note="window spans no whole stream block")
    m = v.half // block
    codes = stream.codes.copy()
    codes[v.t0 : v.t1 + 1] = inst.q - 2  # diamond placeholder, never matches
    baseline = hamming_outputs_reference(inst.fixed, SymbolString(codes, inst.q))
    bv = slice_av(baseline, v)
    first_clean = m // 2 + 1 + (m % 2)
    recovered: dict[int, int] = {}
    notes = []
    ok = True
    for b in range(first_clean, m + 1):
        base_idx = block * (b - 1)
        profile = r + av[base_idx : base_idx + r + 1] - bv[base_idx : base_idx + r + 1]
        member = inst.family.lookup(profile)
        if member is None:
            ok = False
            notes.append(f"block {b}: profile missing from family")
            continue
        start = v.t0 + block * (b - 1)
        for offset, sym in enumerate(inst.family.members[member].codes.tolist()):
            recovered[start + offset] = sym
        notes.append(f"block {b}->member {member}")
    return DecodeReport(v.node_id, "hamming_blocks", recovered, ambiguity=1,
                        ok=ok, note="; ".join(notes))


def recoverable_blocks(v: ArrivalWindow, inst: HammingInstance) -> list[int]:
    """Global stream-block indices the decoder claims for this node."""
    block = 2 * inst.r
    if v.t0 % block != 0 or v.half % block != 0 or v.ell < 4 * inst.r:
        return []
    m = v.half // block
    first_clean = m // 2 + 1 + (m % 2)
    return [v.t0 // block + (b - 1) for b in range(first_clean, m + 1)]


# ---------------------------------------------------------------------------
# Sub-multiset sum oracles


def enumerate_sums(vm: VectorMultiset, limit: int = 2_000_000) -> frozenset[tuple[int, ...]]:
    """Exact set of element-wise sums over mu-sized sub-multisets of the
    available vectors, by combination enumeration."""
    avail = vm.available_indices()
    mu = vm.mu
    if len(avail) < mu:
        raise ConstructionError(f"only {len(avail)} vectors available, need {mu}")
    if comb(len(avail), mu) > limit:
        raise ConstructionError("too many sub-multisets to enumerate")
    sums = set()
    for combo in itertools.combinations(avail, mu):
        sums.add(tuple(sum(vm.vectors[i][j] for i in combo) for j in range(mu)))
    return frozenset(sums)


def enumerate_sums_recursive(vm: VectorMultiset) -> frozenset[tuple[int, ...]]:
    """Second, independently coded route: take/skip recursion over indices."""
    avail = vm.available_indices()
    mu = vm.mu
    found: set[tuple[int, ...]] = set()

    def walk(pos: int, left: int, acc: tuple[int, ...]) -> None:
        if left == 0:
            found.add(acc)
            return
        if len(avail) - pos < left:
            return
        vec = vm.vectors[avail[pos]]
        walk(pos + 1, left - 1, tuple(a + b for a, b in zip(acc, vec)))
        walk(pos + 1, left, acc)

    walk(0, mu, (0,) * mu)
    return frozenset(found)


# ---------------------------------------------------------------------------
# Distance-profile counting


def count_distinct_hamarrays(
    r_string: SymbolString,
    alphabet,
    budget: int = 50_000,
    seed: int = 0,
) -> tuple[int, bool]:
    """Distinct sliding-distance profiles over candidate strings of length
    2|R| drawn from the alphabet; exhaustive below the budget (exact),
    sampled above it (a lower bound)."""
    from .core import named_rng
    from .instances import hamarray

    alphabet = [int(a) for a in alphabet]
    u_len = 2 * len(r_string)
    total = len(alphabet) ** u_len
    seen: set[bytes] = set()
    if total <= budget:
        for combo in itertools.product(alphabet, repeat=u_len):
            seen.add(hamarray(r_string, SymbolString(combo, r_string.q)).tobytes())
        return len(seen), True
    rng = named_rng(seed, "hamarray-count")
    symbols = np.asarray(alphabet, dtype=np.int64)
    for _ in range(budget):
        codes = symbols[rng.integers(0, len(symbols), size=u_len)]
        seen.add(hamarray(r_string, SymbolString(codes, r_string.q)).tobytes())
    return len(seen), False
