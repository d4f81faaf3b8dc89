import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_ml.detectors import ml_detect_learned
from onebit_ml.learning import LikelihoodTable, exact_table
from onebit_ml.numerics import ConfigError, rng_stream
from onebit_ml.polar import polar_construct, scl_decode
from onebit_ml.signal_model import (
    LinkParams,
    build_symbol_table,
    gen_rayleigh_channel,
    lift_channel,
    noiseless_outputs,
    one_bit_quantize,
)
from onebit_ml.soft_output import (
    LLR_CLIP,
    BitSubsets,
    FrameConfig,
    assemble_frame,
    build_bit_subsets,
    compute_llr,
    llrs_to_codeword_order,
)


def all_sign_patterns(n):
    bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    return np.where(bits == 1, 1, -1).astype(np.int8)


def product_domain_llr(y, p_plus, symbols, p_minus=None):
    """Direct sums of likelihood products, bit sets rebuilt from labels."""
    p_minus = 1 - p_plus if p_minus is None else p_minus
    out = np.zeros((len(y), symbols.nu, symbols.q))
    for t, yt in enumerate(y):
        lik = np.prod(np.where(yt > 0, p_plus, p_minus), axis=1)
        for u in range(symbols.nu):
            for l in range(symbols.q):
                zero = sum(lik[k] for k in range(symbols.k)
                           if symbols.bit_labels[symbols.indices[k, u], l] == 0)
                one = sum(lik[k] for k in range(symbols.k)
                          if symbols.bit_labels[symbols.indices[k, u], l] == 1)
                out[t, u, l] = math.log(zero) - math.log(one)
    return out


@pytest.mark.parametrize("m,nu,size", [(4, 1, 2), (4, 4, 128), (16, 2, 128)])
def test_subset_sizes(m, nu, size):
    sub = build_bit_subsets(build_symbol_table(m, nu))
    for u, l, b in itertools.product(range(nu), range(int(math.log2(m))), (0, 1)):
        assert len(sub.members(u, l, b)) == size


@pytest.mark.parametrize("m,nu", [(4, 1), (4, 3), (16, 2)])
def test_subsets_partition_and_match_labels(m, nu):
    symbols = build_symbol_table(m, nu)
    sub = build_bit_subsets(symbols)
    everything = np.arange(symbols.k)
    for u, l in itertools.product(range(nu), range(symbols.q)):
        zero, one = sub.members(u, l, 0), sub.members(u, l, 1)
        assert np.intersect1d(zero, one).size == 0
        assert np.array_equal(np.union1d(zero, one), everything)
        brute = [k for k in range(symbols.k) if symbols.bit_labels[symbols.indices[k, u], l] == 1]
        assert np.array_equal(one, brute)


def test_identical_rows_give_zero_llr():
    symbols = build_symbol_table(4, 2)
    row = rng_stream(1).uniform(0.1, 0.9, 6)
    p = np.tile(row, (16, 1))
    llr = compute_llr(all_sign_patterns(6), LikelihoodTable(p, 1 - p), build_bit_subsets(symbols))
    assert np.allclose(llr, 0.0, atol=1e-12)


def test_dominant_candidate_gives_large_positive_llr():
    symbols = build_symbol_table(4, 1)
    sub = build_bit_subsets(symbols)
    k0 = int(np.flatnonzero(np.all(symbols.bit_labels[symbols.indices[:, 0]] == 0, axis=1))[0])
    p = np.full((4, 12), 0.01)
    p[k0] = 0.999
    llr = compute_llr(np.ones(12), LikelihoodTable(p, 1 - p), sub)
    assert np.all(llr > 30)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(4, 1, 4), (4, 2, 3), (16, 1, 4)]))
def test_log_sum_exp_matches_product_domain(seed, shape):
    m, nu, nr = shape
    symbols = build_symbol_table(m, nu)
    rng = rng_stream(seed)
    p = rng.uniform(0.02, 0.98, (symbols.k, 2 * nr))
    y = all_sign_patterns(2 * nr)
    got = compute_llr(y, LikelihoodTable(p, 1 - p), build_bit_subsets(symbols), clip=None)
    assert np.allclose(got, product_domain_llr(y, p, symbols), rtol=0, atol=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_complementing_a_label_negates_its_llr(seed):
    symbols = build_symbol_table(4, 2)
    rng = rng_stream(seed)
    p = rng.uniform(0.05, 0.95, (16, 6))
    table = LikelihoodTable(p, 1 - p)
    sub = build_bit_subsets(symbols)
    u, l = int(rng.integers(2)), int(rng.integers(2))
    flipped = sub.ones.copy()
    flipped[u, l] = ~flipped[u, l]
    y = all_sign_patterns(6)
    a = compute_llr(y, table, sub)
    b = compute_llr(y, table, BitSubsets(flipped))
    assert np.array_equal(b[:, u, l], -a[:, u, l])
    mask = np.ones(a.shape[1:], dtype=bool)
    mask[u, l] = False
    assert np.array_equal(a[:, mask], b[:, mask])


def test_sign_agrees_with_dominant_hard_decision():
    symbols = build_symbol_table(4, 2)
    sub = build_bit_subsets(symbols)
    ys = all_sign_patterns(8)
    checked = 0
    for seed in range(4):
        h = lift_channel(gen_rayleigh_channel(2, 4, rng_stream(seed)))
        table = exact_table(h, symbols, LinkParams.from_snr_db(10.0))
        llr = compute_llr(ys, table, sub, clip=None)
        ref = product_domain_llr(ys, table.p_plus, symbols, table.p_minus)
        lik = np.exp(table.log_likelihood(ys))
        post = lik / lik.sum(axis=1, keepdims=True)
        k_star = ml_detect_learned(ys, table, symbols).k_star
        for t in np.flatnonzero(post[np.arange(len(ys)), k_star] > 0.5):
            bits = symbols.bit_labels[symbols.indices[k_star[t]]]
            assert np.array_equal(llr[t] > 0, bits == 0)
            checked += 1
        assert np.allclose(llr, ref, atol=1e-9)
    assert checked > 50


def test_zero_product_table_gives_finite_clipped_llrs():
    symbols = build_symbol_table(4, 1)
    p = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    llr = compute_llr(all_sign_patterns(2), LikelihoodTable(p, 1 - p), build_bit_subsets(symbols))
    assert np.all(np.isfinite(llr))
    assert np.all(np.abs(llr) <= LLR_CLIP)
    assert np.any(np.abs(llr) == LLR_CLIP)


def test_frame_slot_count_and_mapping():
    symbols = build_symbol_table(4, 3)
    code = polar_construct(128, 64)
    rng = rng_stream(2)
    msgs = rng.integers(0, 2, (3, 64))
    k_slots, cw = assemble_frame(msgs, code, symbols)
    assert k_slots.shape == (64,)
    user_idx = symbols.indices[k_slots]  # (64, nu)
    demapped = symbols.bit_labels[user_idx]  # (64, nu, q)
    assert np.array_equal(np.moveaxis(demapped, 0, 1).reshape(3, 128), cw)


def test_frame_rejects_bad_divisibility():
    with pytest.raises(ConfigError):
        assemble_frame(np.zeros((1, 1), dtype=int), polar_construct(2, 1), build_symbol_table(16, 1))
    with pytest.raises(ConfigError):
        FrameConfig(n_t=10, d=1, eta=8, q=3)


def test_frame_config_counts():
    fc = FrameConfig(n_t=16 * 45, d=4, eta=128, q=2)
    assert fc.n_d_sub == 64
    assert fc.n_d == 256
    assert fc.n_c == fc.n_t + fc.n_d


def test_per_user_symbol_energy_near_one():
    symbols = build_symbol_table(16, 2)
    code = polar_construct(128, 64)
    msgs = rng_stream(3).integers(0, 2, (400, 2, 64))
    k_slots, _ = assemble_frame(msgs, code, symbols)
    energy = np.mean(np.abs(symbols.symbols[k_slots]) ** 2, axis=(0, 1))
    assert np.allclose(energy, 1.0, atol=0.05)


def test_coded_chain_recovers_messages_from_saturated_llrs():
    symbols = build_symbol_table(16, 2)
    code = polar_construct(64, 32)
    msgs = rng_stream(4).integers(0, 2, (100, 2, 32))
    k_slots, _ = assemble_frame(msgs, code, symbols)
    bits = symbols.bit_labels[symbols.indices[k_slots]]  # (B, T, nu, q)
    llr = llrs_to_codeword_order(np.where(bits == 0, 40.0, -40.0))
    decoded = scl_decode(llr.reshape(-1, 64), code).reshape(msgs.shape)
    assert np.array_equal(decoded, msgs)


def test_coded_chain_through_learned_llrs_at_high_snr():
    symbols = build_symbol_table(4, 2)
    code = polar_construct(64, 32)
    rng = rng_stream(5)
    h = lift_channel(gen_rayleigh_channel(2, 16, rng))
    table = exact_table(h, symbols, LinkParams.from_snr_db(15.0))
    msgs = rng.integers(0, 2, (20, 2, 32))
    k_slots, _ = assemble_frame(msgs, code, symbols)
    y = one_bit_quantize(noiseless_outputs(h, symbols.real_vectors[k_slots]))
    llr = compute_llr(y.reshape(-1, 32), table, build_bit_subsets(symbols))
    llr = llrs_to_codeword_order(llr.reshape(20, 32, 2, 2))
    decoded = scl_decode(llr.reshape(-1, 64), code).reshape(msgs.shape)
    assert np.array_equal(decoded, msgs)
