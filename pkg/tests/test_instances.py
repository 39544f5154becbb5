import itertools
from fractions import Fraction

import numpy as np
import pytest

from streamprobe.core import SymbolString, named_rng
from streamprobe.instances import (
    ConstructionError,
    CyclicCode,
    PopulationError,
    VectorMultiset,
    build_hamming_fixed,
    build_hamming_instance,
    build_r,
    build_toeplitz,
    build_ur_family,
    check_cyclic_code,
    hamarray,
    kqn_bits,
    kqn_digits,
    make_kn,
    make_kqn,
    populate_uprime,
    rotations,
    sample_hamming_stream,
    search_cyclic_code,
    search_vector_multiset,
    toeplitz_nonsingular_fraction,
)


# ---------------------------------------------------------------------------
# Power-offset strings


def test_make_kn_small_values():
    assert make_kn(8).codes.tolist() == [0, 0, 0, 1, 0, 1, 1, 0]
    assert make_kn(2).codes.tolist() == [1, 0]


def test_make_kn_popcount():
    # number of ones = floor(log2(n-1)) + 1: one per power of two below n
    for n in (3, 4, 8, 16, 31, 32, 64, 128):
        ones = int(np.count_nonzero(make_kn(n).codes))
        assert ones == len([p for p in range(7) if 1 << p <= n - 1])
        assert ones == int(np.floor(np.log2(n - 1))) + 1


def test_make_kqn_paper_value():
    assert make_kqn(16, 8) == 65814  # 10116 in hex


def test_make_kqn_tiny():
    assert make_kqn(2, 3) == 6  # bits 1 and 2 set


def test_kqn_reversal_identity():
    # LSB-first binary expansion reversed equals the power-offset string
    for q in (2, 4, 16):
        for n in range(1, 33):
            m = n * (q.bit_length() - 1)
            if m < 2:
                continue
            assert kqn_bits(q, n)[::-1] == make_kn(m).codes.tolist()


def test_kqn_digits_match_value():
    for q, n in [(2, 8), (4, 8), (16, 8)]:
        digits = kqn_digits(q, n)
        value = sum(d * q**i for i, d in enumerate(digits))
        assert value == make_kqn(q, n)


def test_make_kqn_rejects_non_power_base():
    with pytest.raises(ConstructionError):
        make_kqn(10, 4)


# ---------------------------------------------------------------------------
# Toeplitz matrices


def test_build_toeplitz_from_k8():
    m = build_toeplitz(make_kn(8), 2)
    assert m.to_matrix().tolist() == [[1, 1], [0, 1]]


def test_build_toeplitz_ell1():
    fixed = make_kn(8)
    m = build_toeplitz(fixed, 1)
    assert m.to_matrix().tolist() == [[fixed[6]]]


def test_toeplitz_entry_formula_and_diagonals():
    rng = named_rng(13, "toep")
    fixed = SymbolString(rng.integers(0, 5, 16), 5)
    for ell in (2, 4, 8):
        m = build_toeplitz(fixed, ell)
        n = 16
        for i in range(ell):
            for j in range(ell):
                assert m.entry(i, j) == fixed[n - 1 - (ell + i) + j]
        mat = m.to_matrix()
        for i in range(ell - 1):
            assert np.array_equal(mat[i, : ell - 1], mat[i + 1, 1:])
        assert m.first_row == tuple(mat[0].tolist())
        assert m.first_column == tuple(mat[:, 0].tolist())


def test_toeplitz_requires_room():
    with pytest.raises(ConstructionError):
        build_toeplitz(make_kn(8), 5)


def test_kn_identity_rows():
    # rows ell/2 .. ell-1 are unit vectors for every power-of-two ell
    for n in (8, 16, 32, 64):
        fixed = make_kn(n)
        ell = 1
        while 2 * ell <= n:
            mat = build_toeplitz(fixed, ell).to_matrix()
            for i in range(ell // 2, ell):
                expect = np.zeros(ell, dtype=np.int64)
                expect[i] = 1
                assert np.array_equal(mat[i], expect), (n, ell, i)
            ell *= 2


def test_toeplitz_fraction_hand_values():
    assert toeplitz_nonsingular_fraction(2, 1) == Fraction(1, 2)
    assert toeplitz_nonsingular_fraction(2, 2) == Fraction(1, 2)  # 4 of 8 by hand
    assert toeplitz_nonsingular_fraction(3, 2) == Fraction(2, 3)


def test_toeplitz_fraction_guards():
    with pytest.raises(ConstructionError):
        toeplitz_nonsingular_fraction(4, 2)  # not prime
    with pytest.raises(ConstructionError):
        toeplitz_nonsingular_fraction(3, 9)  # enumeration too large


# ---------------------------------------------------------------------------
# Cyclic codes


def test_search_cyclic_code_mu4():
    code = search_cyclic_code(4, 1)
    assert check_cyclic_code(code) == []
    assert len(code) == 3  # the full (mu-1)^gamma bound at gamma=1
    assert all(sum(w) == 4 for w in code.words)
    for w in code.words:
        assert rotations(w) <= code.words


def test_search_cyclic_code_mu6():
    code = search_cyclic_code(6, 1)
    assert check_cyclic_code(code) == []
    assert len(code) <= 5


def test_cyclic_code_checker_catches_violations():
    good = search_cyclic_code(4, 1)
    # break constant weight
    bad_word = tuple([1] * 5 + [0] * 7)
    broken = CyclicCode(4, 1, frozenset(set(good.words) | rotations(bad_word)))
    failures = check_cyclic_code(broken)
    assert failures  # weight, distance and size can all trip; at least one must


def test_search_cyclic_code_preconditions():
    with pytest.raises(ConstructionError):
        search_cyclic_code(5, 1)  # mu-1 = 4 not prime
    with pytest.raises(ConstructionError):
        search_cyclic_code(4, 2)  # gamma even
    with pytest.raises(ConstructionError):
        search_cyclic_code(3, 1)  # mu too small


# ---------------------------------------------------------------------------
# Vector multisets and the block string


def test_vector_multiset_validation():
    with pytest.raises(ConstructionError):
        VectorMultiset(2, ((1, 0),))  # wrong size
    with pytest.raises(ConstructionError):
        VectorMultiset(2, ((1, 2), (0, 0)))  # not 0/1
    vm = VectorMultiset(2, ((1, 0), (0, 1)))
    assert vm.available_indices() == (0, 1)
    assert vm.with_blocked([0]).available_indices() == (1,)


def test_search_vector_multiset_size():
    for mu in (2, 3):
        vm = search_vector_multiset(mu, trials=8, seed=2)
        assert len(vm) == mu * (mu - 1)
        assert all(len(v) == mu for v in vm.vectors)


def test_build_r_chunk_structure():
    # chunk i spells symbol i at the one-positions of vector i, star elsewhere
    mu = 5
    q = mu * mu + 2
    rng = named_rng(15, "br")
    vectors = [tuple(int(b) for b in rng.integers(0, 2, mu)) for _ in range(mu * (mu - 1))]
    vectors[2] = (1, 0, 0, 1, 1)
    vm = VectorMultiset(mu, tuple(vectors))
    r_string = build_r(vm, q)
    star = q - 1
    assert len(r_string) == mu**3
    assert list(r_string.codes[2 * mu : 3 * mu]) == [2, star, star, 2, 2]
    # trailing chunks are all star
    for i in range(mu * (mu - 1), mu * mu):
        assert np.all(r_string.codes[i * mu : (i + 1) * mu] == star)


def test_build_r_zero_vector_gives_star_chunk():
    vm = VectorMultiset(2, ((0, 0), (1, 1)))
    r_string = build_r(vm, 6)
    assert list(r_string.codes[:2]) == [5, 5]


def test_build_r_alphabet_guard():
    vm = VectorMultiset(2, ((1, 0), (0, 1)))
    with pytest.raises(ConstructionError):
        build_r(vm, 5)


def test_hamarray_small():
    r_string = SymbolString([0], 2)
    assert hamarray(r_string, SymbolString([0, 1], 2)).tolist() == [0, 1]
    star = SymbolString([5, 5, 5], 6)
    u = SymbolString([0, 1, 2, 3, 0, 1], 6)
    assert hamarray(star, u).tolist() == [3, 3, 3, 3]


# ---------------------------------------------------------------------------
# Population of stream blocks


@pytest.mark.parametrize("mu", [2, 3, 4])
def test_populate_identity_against_brute_force(mu):
    q = mu * mu + 2
    vm = search_vector_multiset(mu, trials=8, seed=3)
    r_string = build_r(vm, q)
    r = len(r_string)
    combos = itertools.combinations(range(len(vm.vectors)), mu)
    phases = []
    for _ in range(mu):
        try:
            phases.append([next(combos)])
        except StopIteration:
            break
    pop = populate_uprime(vm, q, phases)
    ha = hamarray(r_string, pop.uprime)
    assert len(pop.uprime) == 2 * r
    for wexp in pop.windows:
        for k in range(mu):
            assert ha[wexp.start_alignment + 1 + k] == r - wexp.sums[k]
    # nothing placed anywhere else: all-diamond string scores r everywhere
    assert pop.total_slide < r or mu == 2


def test_populate_empty_choices_all_diamond():
    vm = search_vector_multiset(2, trials=2, seed=1)
    pop = populate_uprime(vm, 6, [])
    r_string = build_r(vm, 6)
    assert np.all(hamarray(r_string, pop.uprime) == len(r_string))


def test_populate_blocking_detected():
    # two rounds in one phase: round 2's position for vector i-1 was taken by i
    mu = 3
    q = mu * mu + 2
    vm = search_vector_multiset(mu, trials=4, seed=5)
    with pytest.raises(PopulationError):
        populate_uprime(vm, q, [[(0, 1, 2), (0, 1, 2)]], rounds_per_phase=2)
    # non-colliding second round works
    pop = populate_uprime(vm, q, [[(0, 1, 2), (3, 4, 5)]], rounds_per_phase=2)
    assert len(pop.windows) == 2
    r_string = build_r(vm, q)
    ha = hamarray(r_string, pop.uprime)
    for wexp in pop.windows:
        for k in range(mu):
            assert ha[wexp.start_alignment + 1 + k] == len(r_string) - wexp.sums[k]


def test_populate_vprime_bookkeeping():
    vm = search_vector_multiset(3, trials=4, seed=6)
    pop = populate_uprime(vm, 11, [[(0, 1, 2)], [(0, 1, 2)]])
    assert len(pop.vprime_sizes) == 2
    assert all(size >= len(vm) - 3 for size in pop.vprime_sizes)


def test_populate_rejects_bad_rounds():
    vm = search_vector_multiset(2, trials=2, seed=7)
    with pytest.raises(PopulationError):
        populate_uprime(vm, 6, [[(0, 0)]])  # repeated index
    with pytest.raises(PopulationError):
        populate_uprime(vm, 6, [[(0, 5)]])  # out of range
    with pytest.raises(PopulationError):
        populate_uprime(vm, 6, [[(0, 1)]] * 3)  # more phases than mu


# ---------------------------------------------------------------------------
# Block families, the fixed string, streams


def test_ur_family_profiles_distinct():
    mu = 2
    q = mu * mu + 2
    vm = search_vector_multiset(mu, trials=4, seed=8)
    r_string = build_r(vm, q)
    fam = build_ur_family(r_string, vm, q, budget=6, seed=8)
    assert len(fam) >= 2
    profiles = [hamarray(r_string, member).tobytes() for member in fam.members]
    assert len(set(profiles)) == len(profiles)
    for i, member in enumerate(fam.members):
        assert fam.lookup(hamarray(r_string, member)) == i
        assert member.stream_safe()
    assert len(fam.provenance) == len(fam)


def test_build_hamming_fixed_structure():
    mu = 2
    vm = search_vector_multiset(mu, trials=4, seed=9)
    r_string = build_r(vm, 6)
    fixed, starts = build_hamming_fixed(r_string, 64)
    r = len(r_string)
    # copies start at n-1-i for powers of two i >= r
    assert starts == tuple(sorted(64 - 1 - (1 << j) for j in (3, 4, 5)))
    covered = np.zeros(64, dtype=bool)
    for start in starts:
        assert np.array_equal(fixed.codes[start : start + r], r_string.codes)
        covered[start : start + r] = True
    # everything outside the copies is star, and copy count is exact
    assert np.all(fixed.codes[~covered] == 5)
    assert int((~covered).sum()) == 64 - len(starts) * r
    # no overlap: consecutive copies are >= r apart
    gaps = np.diff(starts)
    assert np.all(gaps >= r)


def test_build_hamming_fixed_needs_room():
    vm = search_vector_multiset(2, trials=2, seed=10)
    r_string = build_r(vm, 6)
    with pytest.raises(ConstructionError):
        build_hamming_fixed(r_string, 32)


def test_build_hamming_instance_and_stream():
    inst = build_hamming_instance(2, 64, seed=11, ur_budget=5)
    assert inst.q == 6 and inst.r == 8
    assert inst.fixed.fixed_safe()
    stream, draws = sample_hamming_stream(inst, 64, seed=12)
    assert len(stream) == 64 and len(draws) == 4
    assert stream.stream_safe()
    for blk, member in enumerate(draws):
        segment = stream.codes[blk * 16 : (blk + 1) * 16]
        assert np.array_equal(segment, inst.family.members[member].codes)
    # single-member family gives a deterministic stream
    one = build_hamming_instance(2, 64, seed=11, ur_budget=1)
    s1, d1 = sample_hamming_stream(one, 64, seed=1)
    s2, d2 = sample_hamming_stream(one, 64, seed=2)
    assert s1 == s2 and set(d1) == {0} and set(d2) == {0}


def test_build_hamming_instance_validation():
    with pytest.raises(ConstructionError):
        build_hamming_instance(2, 48, seed=0)  # not a power of two
    with pytest.raises(ConstructionError):
        build_hamming_instance(2, 32, seed=0)  # below r^2
    with pytest.raises(ConstructionError):
        build_hamming_instance(3, 4096, seed=0)  # 2r does not divide n
