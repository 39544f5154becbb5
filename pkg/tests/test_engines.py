import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamprobe.core import Params, SymbolString, named_rng
from streamprobe.engines import (
    EngineError,
    KernelCounter,
    conv_naive_kernel,
    conv_ntt_kernel,
    conv_outputs_reference,
    default_params,
    hamming_outputs_reference,
    make_processor,
    mult_outputs_reference,
    ntt_eligible,
    offline_conv,
    processor_factory,
    product_digits,
    product_digits_bigint,
    required_width,
    run_traced,
    store_capacity,
)
from streamprobe.probelab import CellStore


def _run(problem, algo, fixed, stream, **kwargs):
    return run_traced(problem, algo, fixed, stream, record_trace=False, **kwargs).outputs


# ---------------------------------------------------------------------------
# Offline kernels


def test_offline_conv_delta_kernel():
    assert offline_conv([1, 0], [3, 4], 7).tolist() == [3, 4, 0]


def test_offline_conv_hand_expansion():
    assert offline_conv([1, 1], [1, 1], 5).tolist() == [1, 2, 1]


def test_offline_conv_rejects_degenerate_modulus():
    with pytest.raises(EngineError):
        offline_conv([1], [1], 1)
    with pytest.raises(EngineError):
        offline_conv([1], [1], 0)
    with pytest.raises(EngineError):
        offline_conv([], [1], 5)


def test_ntt_matches_naive_on_random_pairs():
    rng = named_rng(5, "ntt")
    q = 257  # 257 - 1 = 2^8: transform sizes up to 128 are eligible
    for _ in range(100):
        la, lb = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        a = rng.integers(0, q, la)
        b = rng.integers(0, q, lb)
        if not ntt_eligible(q, la + lb - 1):
            continue
        assert np.array_equal(conv_ntt_kernel(a, b, q), conv_naive_kernel(a, b, q))


def test_ntt_eligibility_policy():
    assert ntt_eligible(97, 10)  # 96 = 2^5*3, transform 16, need 32 | 96
    assert not ntt_eligible(97, 40)  # transform 64, need 128 | 96
    assert not ntt_eligible(15, 4)  # composite
    assert not ntt_eligible(5, 8)


def test_offline_conv_auto_falls_back():
    counter = KernelCounter()
    offline_conv([1, 2, 3], [1, 2, 3], 7, kernel="auto", counter=counter)
    assert counter.calls["naive"] == 1 and counter.calls["ntt"] == 0
    counter = KernelCounter()
    offline_conv([1, 2, 3], [1, 2, 3], 97, kernel="auto", counter=counter)
    assert counter.calls["ntt"] == 1


def test_product_digit_oracles_agree():
    rng = named_rng(7, "digits")
    for _ in range(50):
        q = int(rng.choice([2, 3, 10, 16]))
        n = int(rng.integers(1, 20))
        f = rng.integers(0, q, n)
        u = rng.integers(0, q, n)
        a = product_digits(f, u, q, count=n)
        b = product_digits_bigint(f.tolist(), u.tolist(), q, count=n)
        assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Online convolution


def test_conv_hand_example():
    # F=[1,1], q=5, arrivals 2 then 3: windows [0,2] and [2,3]
    fixed = SymbolString([1, 1], 5)
    out = _run("convolution", "naive", fixed, SymbolString([2, 3], 5))
    assert out.tolist() == [2, 0]


def test_conv_zero_fixed_annihilates():
    fixed = SymbolString([0] * 8, 5)
    stream = SymbolString(named_rng(1, "z").integers(0, 5, 8), 5)
    assert np.all(_run("convolution", "naive", fixed, stream) == 0)
    assert np.all(_run("convolution", "fast", fixed, stream) == 0)


def test_conv_identity_tap_echoes_stream():
    # only the last fixed position set: output equals the arriving symbol
    n, q = 16, 7
    fixed = SymbolString([0] * (n - 1) + [1], q)
    stream = SymbolString(named_rng(2, "tap").integers(0, q, n), q)
    for algo in ("naive", "fast"):
        assert np.array_equal(_run("convolution", algo, fixed, stream), stream.codes)


def test_conv_outputs_in_range_and_window_prefill():
    n, q = 8, 5
    fixed = SymbolString([1] * n, q)
    stream = SymbolString([4] * n, q)
    out = _run("convolution", "naive", fixed, stream)
    # with zero prefill, output t sums t+1 copies of 4
    assert out.tolist() == [(4 * (t + 1)) % q for t in range(n)]
    assert out.min() >= 0 and out.max() < q


@given(
    n_log=st.integers(min_value=1, max_value=3),
    q=st.integers(min_value=2, max_value=5),
    data=st.data(),
)
@settings(max_examples=60, deadline=None)
def test_conv_fast_equals_naive_property(n_log, q, data):
    n = 1 << n_log
    f = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n))
    u = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n))
    fixed, stream = SymbolString(f, q), SymbolString(u, q)
    naive = _run("convolution", "naive", fixed, stream)
    fast = _run("convolution", "fast", fixed, stream)
    ref = conv_outputs_reference(fixed, stream, q)
    assert np.array_equal(naive, ref)
    assert np.array_equal(fast, ref)


def test_conv_fast_kernel_mult_budget_reported(capsys):
    # measured constant for kernel element-multiplications, reported not asserted
    rng = named_rng(3, "budget")
    for n in (64, 256, 1024):
        q = 5
        fixed = SymbolString(rng.integers(0, q, n), q)
        stream = SymbolString(rng.integers(0, q, n), q)
        run = run_traced("convolution", "fast", fixed, stream, record_trace=False)
        mults = run.kernel_counter.mults
        c = mults / (n * math.log2(n) ** 2)
        print(f"n={n}: kernel mults={mults}, c={c:.2f} (naive kernel is quadratic)")
        assert mults > 0


# ---------------------------------------------------------------------------
# Online multiplication


def test_mult_hand_example():
    # q=10, F=12 (digits [2,1]), arrivals 3 then 4: 12*3=36, 12*43=516
    fixed = SymbolString([2, 1], 10)
    out = _run("multiplication", "naive", fixed, SymbolString([3, 4], 10))
    assert out.tolist() == [6, 1]


def test_mult_zero_and_identity_operands():
    n, q = 8, 10
    stream = SymbolString(named_rng(4, "m").integers(0, q, n), q)
    zero = SymbolString([0] * n, q)
    assert np.all(_run("multiplication", "naive", zero, stream) == 0)
    one = SymbolString([1] + [0] * (n - 1), q)
    assert np.array_equal(_run("multiplication", "naive", one, stream), stream.codes)


def test_mult_prefix_property_against_bigint():
    rng = named_rng(5, "mp")
    for _ in range(30):
        q = int(rng.choice([2, 3, 10, 16]))
        n = int(rng.choice([2, 4, 8, 16, 32]))
        fixed = SymbolString(rng.integers(0, q, n), q)
        stream = SymbolString(rng.integers(0, q, n), q)
        online = _run("multiplication", "naive", fixed, stream)
        assert np.array_equal(online, mult_outputs_reference(fixed, stream, q))


def test_mult_digit_settles_immediately():
    # digit t must not depend on later arrivals
    rng = named_rng(6, "settle")
    n, q = 16, 10
    fixed = SymbolString(rng.integers(0, q, n), q)
    u1 = rng.integers(0, q, n)
    u2 = u1.copy()
    u2[10:] = rng.integers(0, q, n - 10)
    o1 = _run("multiplication", "naive", fixed, SymbolString(u1, q))
    o2 = _run("multiplication", "naive", fixed, SymbolString(u2, q))
    assert np.array_equal(o1[:10], o2[:10])


def test_mult_rejects_overlong_stream():
    fixed = SymbolString([1, 2], 10)
    params = default_params("multiplication", "naive", 2, 10)
    store = CellStore(params.w, store_capacity("multiplication", "naive", 2))
    proc = make_processor("multiplication", "naive", fixed, params, store)
    proc.update(1)
    proc.update(1)
    with pytest.raises(EngineError):
        proc.update(1)


# ---------------------------------------------------------------------------
# Online Hamming distance


def test_hamming_hand_example():
    # F=[1,2,3,0] vs window [1,0,3,0]: one mismatch, at position 1
    q = 6
    fixed = SymbolString([1, 2, 3, 0], q)
    out = _run("hamming", "naive", fixed, SymbolString([1, 0, 3, 0], q))
    assert out[-1] == 1


def test_hamming_equal_strings_and_all_star():
    q, n = 8, 8
    rng = named_rng(7, "h")
    u = rng.integers(0, q - 1, n)
    fixed = SymbolString(u, q)
    for algo in ("naive", "fast"):
        out = _run("hamming", algo, fixed, SymbolString(u, q))
        assert out[-1] == 0  # window equals the fixed string after n arrivals
    star = SymbolString([q - 1] * n, q)
    for algo in ("naive", "fast"):
        out = _run("hamming", algo, star, SymbolString(u, q))
        assert np.all(out == n)  # star mismatches everything, including prefill


def test_hamming_rejects_star_arrival():
    q, n = 6, 4
    fixed = SymbolString([0] * n, q)
    params = default_params("hamming", "naive", n, q)
    store = CellStore(params.w, store_capacity("hamming", "naive", n))
    proc = make_processor("hamming", "naive", fixed, params, store)
    with pytest.raises(EngineError):
        proc.update(q - 1)


def test_hamming_outputs_in_range():
    rng = named_rng(8, "hr")
    n, q = 16, 5
    fixed = SymbolString(rng.integers(0, q, n), q)
    stream = SymbolString(rng.integers(0, q - 1, n), q)
    out = _run("hamming", "naive", fixed, stream)
    assert out.min() >= 0 and out.max() <= n


@given(
    n_log=st.integers(min_value=1, max_value=3),
    q=st.integers(min_value=3, max_value=6),
    data=st.data(),
)
@settings(max_examples=60, deadline=None)
def test_hamming_fast_equals_naive_property(n_log, q, data):
    n = 1 << n_log
    f = data.draw(st.lists(st.integers(0, q - 1), min_size=n, max_size=n))
    u = data.draw(st.lists(st.integers(0, q - 2), min_size=n, max_size=n))
    fixed, stream = SymbolString(f, q), SymbolString(u, q)
    naive = _run("hamming", "naive", fixed, stream)
    fast = _run("hamming", "fast", fixed, stream)
    ref = hamming_outputs_reference(fixed, stream)
    assert np.array_equal(naive, ref)
    assert np.array_equal(fast, ref)


# ---------------------------------------------------------------------------
# Processor plumbing


def test_symbol_out_of_range_rejected():
    fixed = SymbolString([0, 1], 3)
    params = default_params("convolution", "naive", 2, 3)
    store = CellStore(params.w, store_capacity("convolution", "naive", 2))
    proc = make_processor("convolution", "naive", fixed, params, store)
    with pytest.raises(EngineError):
        proc.update(3)


def test_required_width_is_enforced():
    fixed = SymbolString([1] * 16, 1000)
    tight = Params(n=16, q=1000, w=10)
    store = CellStore(10, store_capacity("multiplication", "naive", 16))
    with pytest.raises(EngineError):
        make_processor("multiplication", "naive", fixed, tight, store)
    assert required_width("multiplication", "naive", 16, 1000) > 10


def test_fixed_length_checked():
    with pytest.raises(EngineError):
        make_processor(
            "convolution", "naive", SymbolString([1], 3),
            default_params("convolution", "naive", 4, 3),
            CellStore(8, 32),
        )


def test_naive_probe_count_profile():
    # naive window rescan: n+3 probes per update
    rng = named_rng(9, "probes")
    n, q = 16, 3
    fixed = SymbolString(rng.integers(0, q, n), q)
    stream = SymbolString(rng.integers(0, q, n), q)
    run = run_traced("convolution", "naive", fixed, stream)
    assert run.store.probes == n * (n + 3)


def test_fast_probe_count_is_subquadratic():
    rng = named_rng(10, "fp")
    n, q = 256, 3
    fixed = SymbolString(rng.integers(0, q, n), q)
    stream = SymbolString(rng.integers(0, q, n), q)
    naive = run_traced("convolution", "naive", fixed, stream, record_trace=False)
    fast = run_traced("convolution", "fast", fixed, stream, record_trace=False)
    assert fast.store.probes < naive.store.probes / 4
    assert fast.store.probes < 40 * n * math.log2(n)


def test_state_layout_described():
    rng = named_rng(11, "layout")
    n, q = 8, 3
    fixed = SymbolString(rng.integers(0, q, n), q)
    params = default_params("convolution", "fast", n, q)
    store = CellStore(params.w, store_capacity("convolution", "fast", n))
    proc = processor_factory("convolution", "fast", fixed, params)(store)
    text = proc.state_layout()
    assert "ring" in text and "pending" in text
