"""Hard-instance constructors.

The explicit fixed operands for convolution and multiplication (ones at
power-of-two offsets), the Toeplitz window matrices they induce, and the
Hamming pipeline: a vector multiset with many distinct sub-multiset sums,
the block string built from it, the fixed string carrying copies of that
block string at power-of-two offsets, families of stream blocks with
pairwise distinct sliding-distance profiles, and seeded stream sampling.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    ParameterError,
    SymbolString,
    ceil_log2,
    is_power_of_two,
    is_prime,
    det_mod,
    named_rng,
)


class ConstructionError(ValueError):
    """An instance constructor was driven outside its preconditions."""


# ---------------------------------------------------------------------------
# The 0/1 fixed string and its numeric counterpart


def make_kn(n: int) -> SymbolString:
    """0/1 string with a one exactly where the offset from the right end,
    n-1-i, is a power of two."""
    if n < 2:
        raise ConstructionError(f"n must be >= 2, got {n}")
    codes = np.zeros(n, dtype=np.int64)
    p = 1
    while p <= n - 1:
        codes[n - 1 - p] = 1
        p <<= 1
    return SymbolString(codes, 2)


def make_kqn(q: int, n: int) -> int:
    """The number whose binary expansion has ones exactly at power-of-two
    bit positions below n*log2(q)."""
    if not is_power_of_two(q) or q < 2:
        raise ConstructionError(f"q must be a power of two >= 2, got {q}")
    if n < 1:
        raise ConstructionError(f"n must be >= 1, got {n}")
    m = n * (q.bit_length() - 1)
    value = 0
    p = 1
    while p < m:
        value |= 1 << p
        p <<= 1
    return value


def kqn_bits(q: int, n: int) -> list[int]:
    """Binary expansion of make_kqn, least significant bit first."""
    m = n * (q.bit_length() - 1)
    value = make_kqn(q, n)
    return [(value >> i) & 1 for i in range(m)]


def kqn_digits(q: int, n: int) -> SymbolString:
    """Base-q digits of make_kqn, least significant first, as a fixed operand."""
    value = make_kqn(q, n)
    digits = []
    for _ in range(n):
        digits.append(value % q)
        value //= q
    return SymbolString(digits, q)


# ---------------------------------------------------------------------------
# Toeplitz window matrices


@dataclass(frozen=True)
class ToeplitzMatrix:
    """The ell x ell matrix mapping a window of inputs to its output
    contributions: entry(i,j) = F[n-1-(ell+i)+j], constant on descending
    diagonals, fully described by the band F[n-2*ell .. n-2]."""

    ell: int
    q: int
    band: tuple[int, ...]  # band[m] = F[n-2*ell+m], length 2*ell-1

    def __post_init__(self) -> None:
        if len(self.band) != 2 * self.ell - 1:
            raise ConstructionError(
                f"band length {len(self.band)} != 2*ell-1 = {2 * self.ell - 1}"
            )

    def entry(self, i: int, j: int) -> int:
        if not (0 <= i < self.ell and 0 <= j < self.ell):
            raise IndexError(f"entry ({i},{j}) outside {self.ell}x{self.ell}")
        return self.band[self.ell - 1 - i + j]

    @property
    def first_row(self) -> tuple[int, ...]:
        return self.band[self.ell - 1 :]

    @property
    def first_column(self) -> tuple[int, ...]:
        return tuple(self.band[self.ell - 1 - i] for i in range(self.ell))

    def to_matrix(self) -> np.ndarray:
        return np.array(
            [[self.entry(i, j) for j in range(self.ell)] for i in range(self.ell)],
            dtype=np.int64,
        )

    def is_nonsingular(self) -> bool:
        return det_mod(self.to_matrix().tolist(), self.q) != 0


def build_toeplitz(fixed: SymbolString, ell: int) -> ToeplitzMatrix:
    n = len(fixed)
    if ell < 1 or 2 * ell > n:
        raise ConstructionError(f"need 1 <= ell with 2*ell <= n, got ell={ell}, n={n}")
    band = tuple(int(c) for c in fixed.codes[n - 2 * ell : n - 1])
    return ToeplitzMatrix(ell, fixed.q, band)


def toeplitz_nonsingular_fraction(q: int, ell: int, enumeration_limit: int = 300_000) -> Fraction:
    """Exhaustive nonsingular fraction over all ell x ell Toeplitz matrices mod q."""
    if not is_prime(q):
        raise ConstructionError(f"q must be prime, got {q}")
    total = q ** (2 * ell - 1)
    if total > enumeration_limit:
        raise ConstructionError(
            f"q^(2*ell-1) = {total} exceeds the enumeration limit {enumeration_limit}"
        )
    nonsingular = 0
    for band in itertools.product(range(q), repeat=2 * ell - 1):
        m = ToeplitzMatrix(ell, q, band)
        if m.is_nonsingular():
            nonsingular += 1
    return Fraction(nonsingular, total)


# ---------------------------------------------------------------------------
# Constant-weight cyclic codes


@dataclass(frozen=True)
class CyclicCode:
    """Binary constant-weight cyclic code: every word has weight mu, any
    rotation of a word is a word, pairwise distance >= 2*(mu-gamma), and
    the size never exceeds (mu-1)^gamma."""

    mu: int
    gamma: int
    words: frozenset[tuple[int, ...]]

    @property
    def length(self) -> int:
        return self.mu * (self.mu - 1)

    def __len__(self) -> int:
        return len(self.words)


def rotations(word: tuple[int, ...]) -> set[tuple[int, ...]]:
    return {word[i:] + word[:i] for i in range(len(word))}


def _hamming(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    return sum(x != y for x, y in zip(a, b))


def check_cyclic_code(code: CyclicCode) -> list[str]:
    """Independent validation of all four invariants; returns failures."""
    failures = []
    n = code.length
    for word in code.words:
        if len(word) != n:
            failures.append(f"word length {len(word)} != {n}")
            break
    if any(sum(word) != code.mu for word in code.words):
        failures.append(f"some word does not have weight {code.mu}")
    for word in code.words:
        if not rotations(word) <= code.words:
            failures.append("code is not closed under cyclic shifts")
            break
    bound = 2 * (code.mu - code.gamma)
    pairs = itertools.combinations(code.words, 2)
    if any(_hamming(a, b) < bound for a, b in pairs):
        failures.append(f"some pair has distance < {bound}")
    if len(code.words) > (code.mu - 1) ** code.gamma:
        failures.append(
            f"size {len(code.words)} exceeds (mu-1)^gamma = {(code.mu - 1) ** code.gamma}"
        )
    return failures


def search_cyclic_code(mu: int, gamma: int, budget: int = 400, seed: int = 0) -> CyclicCode:
    """Greedy orbit search for a constant-weight cyclic code.

    Whole rotation orbits are added while the distance floor and the size
    cap hold. The achieved size is whatever the search reaches; callers
    report it rather than assuming the cap is met. Seeded with the orbit
    of a single one repeated every mu-1 positions, which always satisfies
    the distance floor (two distinct rotations disagree on all 2*mu ones).
    """
    if mu < 4:
        raise ConstructionError(f"mu must be >= 4, got {mu}")
    if not is_prime(mu - 1):
        raise ConstructionError(f"mu-1 must be prime, got mu-1={mu - 1}")
    if gamma % 2 != 1 or not 1 <= gamma <= mu:
        raise ConstructionError(f"gamma must be odd in [1,{mu}], got {gamma}")
    n = mu * (mu - 1)
    floor = 2 * (mu - gamma)
    cap = (mu - 1) ** gamma
    words: set[tuple[int, ...]] = set()

    def orbit_ok(orbit: set[tuple[int, ...]]) -> bool:
        if len(words) + len(orbit) > cap:
            return False
        inside = itertools.combinations(orbit, 2)
        if any(_hamming(a, b) < floor for a, b in inside):
            return False
        return all(_hamming(a, b) >= floor for a in orbit for b in words)

    base = [0] * n
    for j in range(mu):
        base[j * (mu - 1)] = 1
    seed_orbit = rotations(tuple(base))
    if orbit_ok(seed_orbit):
        words |= seed_orbit

    rng = named_rng(seed, "cyclic-code")
    for _ in range(budget):
        if len(words) >= cap:
            break
        candidate = np.zeros(n, dtype=np.int64)
        candidate[rng.choice(n, size=mu, replace=False)] = 1
        orbit = rotations(tuple(int(b) for b in candidate))
        if orbit_ok(orbit):
            words |= orbit
    if not words:
        raise ConstructionError(
            f"no orbit met distance {floor} within budget for mu={mu}, gamma={gamma}"
        )
    return CyclicCode(mu, gamma, frozenset(words))


# ---------------------------------------------------------------------------
# Vector multisets and their sums


@dataclass(frozen=True)
class VectorMultiset:
    """Multiset of mu*(mu-1) vectors from {0,1}^mu, with a blocked-index
    view used while stream blocks are being populated."""

    mu: int
    vectors: tuple[tuple[int, ...], ...]
    blocked: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if len(self.vectors) != self.mu * (self.mu - 1):
            raise ConstructionError(
                f"|V| must be mu*(mu-1) = {self.mu * (self.mu - 1)}, got {len(self.vectors)}"
            )
        for vec in self.vectors:
            if len(vec) != self.mu or any(b not in (0, 1) for b in vec):
                raise ConstructionError(f"vector {vec} is not in {{0,1}}^{self.mu}")
        if any(not 0 <= i < len(self.vectors) for i in self.blocked):
            raise ConstructionError("blocked indices out of range")

    def available_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.vectors)) if i not in self.blocked)

    def with_blocked(self, extra) -> "VectorMultiset":
        return VectorMultiset(self.mu, self.vectors, self.blocked | frozenset(extra))

    def __len__(self) -> int:
        return len(self.vectors)


def search_vector_multiset(mu: int, trials: int = 32, seed: int = 0) -> VectorMultiset:
    """Best of `trials` uniform random multisets, ranked by the exact number
    of distinct mu-sub-multiset sums (brute-force oracle)."""
    from .witnesses import enumerate_sums

    if mu < 2:
        raise ConstructionError(f"mu must be >= 2, got {mu}")
    rng = named_rng(seed, "vector-multiset")
    size = mu * (mu - 1)
    best: VectorMultiset | None = None
    best_count = -1
    for _ in range(max(1, trials)):
        vectors = tuple(
            tuple(int(b) for b in rng.integers(0, 2, size=mu)) for _ in range(size)
        )
        vm = VectorMultiset(mu, vectors)
        count = len(enumerate_sums(vm))
        if count > best_count:
            best, best_count = vm, count
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# The block string R and sliding-distance arrays


def build_r(vm: VectorMultiset, q: int) -> SymbolString:
    """Concatenation of mu^2 length-mu chunks: chunk i spells symbol i at
    the one-positions of vector i, star elsewhere; trailing chunks beyond
    the multiset are all star."""
    mu = vm.mu
    if mu * mu + 2 > q:
        raise ConstructionError(f"alphabet too small: need q >= mu^2+2 = {mu * mu + 2}")
    star = q - 1
    codes = np.full(mu**3, star, dtype=np.int64)
    for i, vec in enumerate(vm.vectors):
        for j, bit in enumerate(vec):
            if bit:
                codes[i * mu + j] = i
    return SymbolString(codes, q)


def hamarray(r_string: SymbolString, u_string: SymbolString) -> np.ndarray:
    """Hamming distance of r_string against every |R|-length window of
    u_string: entry i compares against u_string[i, i+|R|-1]."""
    r = len(r_string)
    if len(u_string) < r:
        raise ConstructionError("second string must be at least |R| long")
    if r_string.q != u_string.q:
        raise ConstructionError("alphabet mismatch")
    count = len(u_string) - r + 1
    windows = np.lib.stride_tricks.sliding_window_view(u_string.codes, r)
    return (windows != r_string.codes[np.newaxis, :]).sum(axis=1).astype(np.int64)[:count]


@dataclass(frozen=True)
class WindowExpectation:
    """One populated round: HamArray[start+1+k] must equal r - sums[k]."""

    start_alignment: int
    indices: tuple[int, ...]
    sums: tuple[int, ...]


@dataclass(frozen=True)
class UPrimePopulation:
    uprime: SymbolString
    mu: int
    windows: tuple[WindowExpectation, ...]
    total_slide: int
    vprime_sizes: tuple[int, ...]


class PopulationError(ConstructionError):
    """A population choice hit a blocked position or the slide budget."""


def populate_uprime(
    vm: VectorMultiset,
    q: int,
    phases,
    rounds_per_phase: int | None = None,
) -> UPrimePopulation:
    """Populate a 2*mu^3 diamond string round by round.

    Each round places one symbol per chosen vector index (the symbol i
    just past chunk i at the current alignment), then the block string
    conceptually slides mu steps so the next mu distance entries encode
    the chosen vectors' sum. After each phase the slide advances one
    extra step, which cycles previously blocked positions; at most mu
    phases fit before the offsets wrap. Component k of a recorded sum is
    the vector entry met at slide k+1, i.e. entry mu-1-k of each vector.
    """
    mu = vm.mu
    r = mu**3
    if mu * mu + 2 > q:
        raise ConstructionError(f"alphabet too small: need q >= mu^2+2 = {mu * mu + 2}")
    if rounds_per_phase is None:
        rounds_per_phase = max(1, (mu - 1) // 64)
    phases = [list(rounds) for rounds in phases]
    if len(phases) > mu:
        raise PopulationError(f"at most mu={mu} phases before offsets cycle")
    diamond = q - 2
    codes = np.full(2 * r, diamond, dtype=np.int64)
    blocked: set[int] = set(vm.blocked)
    windows: list[WindowExpectation] = []
    vprime_sizes: list[int] = []
    g = 0
    for rounds in phases:
        if len(rounds) > rounds_per_phase:
            raise PopulationError(
                f"phase has {len(rounds)} rounds, limit is {rounds_per_phase}"
            )
        for choice in rounds:
            choice = tuple(int(i) for i in choice)
            if len(choice) != mu or len(set(choice)) != mu:
                raise PopulationError(f"a round must pick mu={mu} distinct indices")
            if any(not 0 <= i < len(vm.vectors) for i in choice):
                raise PopulationError(f"round {choice} has indices out of range")
            if g + mu > r:
                raise PopulationError("slide budget exhausted: windows would pass |R|")
            free = [
                i
                for i in range(len(vm.vectors))
                if i not in blocked and codes[g + (i + 1) * mu] == diamond
            ]
            vprime_sizes.append(len(free))
            for i in choice:
                pos = g + (i + 1) * mu
                if i in blocked or codes[pos] != diamond:
                    raise PopulationError(f"vector {i} is blocked at alignment {g}")
                codes[pos] = i
            sums = tuple(
                sum(vm.vectors[i][mu - 1 - k] for i in choice) for k in range(mu)
            )
            windows.append(WindowExpectation(g, choice, sums))
            g += mu
        g += 1  # single-step slide; re-offsets blocked positions
    return UPrimePopulation(SymbolString(codes, q), mu, tuple(windows), g, tuple(vprime_sizes))


# ---------------------------------------------------------------------------
# Families of stream blocks with pairwise distinct distance profiles


@dataclass(frozen=True)
class BlockFamily:
    """Stream blocks of length 2|R| whose sliding-distance arrays are
    pairwise distinct, so a recovered array identifies its block."""

    members: tuple[SymbolString, ...]
    provenance: tuple[str, ...]
    profile_index: dict[bytes, int]

    def __len__(self) -> int:
        return len(self.members)

    def lookup(self, profile: np.ndarray) -> int | None:
        return self.profile_index.get(np.asarray(profile, dtype=np.int64).tobytes())


def build_ur_family(
    r_string: SymbolString,
    vm: VectorMultiset,
    q: int,
    budget: int = 8,
    seed: int = 0,
    random_fill_symbols: int | None = None,
) -> BlockFamily:
    """Greedy family: candidates join only if their profile is new.

    Candidates come from the population procedure (every distinct choice
    yields a distinct sum, hence a distinct profile) and from random
    sparse fills over the construction alphabet; both sources are valid
    stream blocks (no star). Maximality is not claimed.
    """
    mu = vm.mu
    r = len(r_string)
    members: list[SymbolString] = []
    provenance: list[str] = []
    index: dict[bytes, int] = {}

    def admit(candidate: SymbolString, source: str) -> bool:
        if len(members) >= budget:
            return False
        key = hamarray(r_string, candidate).tobytes()
        if key in index:
            return False
        index[key] = len(members)
        members.append(candidate)
        provenance.append(source)
        return True

    admit(SymbolString(np.full(2 * r, q - 2, dtype=np.int64), q), "empty")
    combos = itertools.combinations(range(len(vm.vectors)), mu)
    for combo in combos:
        if len(members) >= budget:
            break
        pop = populate_uprime(vm, q, [[combo]])
        admit(pop.uprime, f"population:{','.join(map(str, combo))}")
    rng = named_rng(seed, "ur-family")
    fill_count = random_fill_symbols if random_fill_symbols is not None else max(2, r // 4)
    attempts = 0
    while len(members) < budget and attempts < 40 * budget:
        attempts += 1
        codes = np.full(2 * r, q - 2, dtype=np.int64)
        positions = rng.choice(2 * r, size=min(fill_count, 2 * r), replace=False)
        codes[positions] = rng.integers(0, mu * mu, size=positions.size)
        admit(SymbolString(codes, q), "random")
    fam = BlockFamily(tuple(members), tuple(provenance), index)
    assert all(m.stream_safe() for m in fam.members)
    return fam


# ---------------------------------------------------------------------------
# The fixed string with embedded copies, and stream sampling


def build_hamming_fixed(r_string: SymbolString, n: int) -> tuple[SymbolString, tuple[int, ...]]:
    """Star string with a copy of r_string at each position n-1-i where
    i >= |R| is a power of two; returns (F, copy start positions)."""
    r = len(r_string)
    if n < r * r:
        raise ConstructionError(f"need n >= |R|^2 = {r * r}, got {n}")
    q = r_string.q
    codes = np.full(n, q - 1, dtype=np.int64)
    starts = []
    p = 1 << ceil_log2(r)
    while p <= n - 1:
        start = n - 1 - p
        codes[start : start + r] = r_string.codes
        starts.append(start)
        p <<= 1
    starts = tuple(sorted(starts))
    for a, b in zip(starts, starts[1:]):
        assert b - a >= r, "copies must not overlap"
    return SymbolString(codes, q), starts


@dataclass(frozen=True)
class HammingInstance:
    mu: int
    n: int
    q: int
    r: int
    fixed: SymbolString
    r_string: SymbolString
    vectors: VectorMultiset
    family: BlockFamily
    copy_starts: tuple[int, ...]
    seed: int

    def manifest(self) -> dict:
        return {
            "family": "hamming_pipeline",
            "mu": self.mu,
            "n": self.n,
            "q": self.q,
            "r": self.r,
            "seed": self.seed,
            "copy_starts": list(self.copy_starts),
            "block_family_size": len(self.family),
            "block_provenance": list(self.family.provenance),
            "star_count": int(np.count_nonzero(self.fixed.codes == self.q - 1)),
        }


def build_hamming_instance(
    mu: int, n: int, seed: int = 0, ur_budget: int = 8, vm_trials: int = 32
) -> HammingInstance:
    if mu < 2:
        raise ConstructionError(f"mu must be >= 2, got {mu}")
    r = mu**3
    q = mu * mu + 2
    if not is_power_of_two(n):
        raise ConstructionError(f"n must be a power of two, got {n}")
    if n < r * r:
        raise ConstructionError(f"need n >= r^2 = {r * r}, got {n}")
    if n % (2 * r) != 0:
        raise ConstructionError(f"2r = {2 * r} must divide n = {n}")
    vm = search_vector_multiset(mu, trials=vm_trials, seed=seed)
    r_string = build_r(vm, q)
    fixed, starts = build_hamming_fixed(r_string, n)
    family = build_ur_family(r_string, vm, q, budget=ur_budget, seed=seed)
    assert fixed.fixed_safe(), "fixed string must not contain diamond"
    return HammingInstance(mu, n, q, r, fixed, r_string, vm, family, starts, seed)


def sample_hamming_stream(
    inst: HammingInstance, n: int, seed: int
) -> tuple[SymbolString, tuple[int, ...]]:
    """Concatenation of n/(2r) independent uniform draws from the block
    family; the drawn indices are recorded for witness verification."""
    block = 2 * inst.r
    if n % block != 0:
        raise ConstructionError(f"block length {block} must divide n={n}")
    rng = named_rng(seed, "hamming-stream")
    draws = tuple(int(i) for i in rng.integers(0, len(inst.family), size=n // block))
    codes = np.concatenate([inst.family.members[i].codes for i in draws])
    return SymbolString(codes, inst.q), draws


def save_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
