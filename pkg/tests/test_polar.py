import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_ml.numerics import ConfigError, DomainError, rng_stream
from onebit_ml.polar import (
    PolarCode,
    polar_construct,
    polar_encode,
    polar_transform,
    sc_decode,
    scl_decode,
)


def bec_z(eta, z0):
    """Bhattacharyya recursion written from scratch over explicit index bits."""
    n = eta.bit_length() - 1
    out = []
    for i in range(eta):
        z = z0
        for j in range(n):
            bit = (i >> (n - 1 - j)) & 1
            z = z * z if bit else 2 * z - z * z
        out.append(z)
    return np.array(out)


def bpsk_llrs(codewords, snr_db, rng):
    es_n0 = 10 ** (snr_db / 10)
    s = 1.0 - 2.0 * codewords
    y = s + rng.normal(0, np.sqrt(1 / (2 * es_n0)), s.shape)
    return 4 * es_n0 * y


def ml_decode(llr, code):
    msgs = np.array(list(itertools.product((0, 1), repeat=code.kappa)), dtype=np.int8)
    cws = polar_encode(msgs, code)
    return msgs[np.argmax((1 - 2 * cws) @ llr)]


def test_length_two_freezes_the_check_channel():
    for snr in (-5.0, 0.0, 5.0):
        assert list(polar_construct(2, 1, snr).frozen) == [0]


def test_construction_is_deterministic():
    a, b = polar_construct(128, 64, 0.0), polar_construct(128, 64, 0.0)
    assert np.array_equal(a.frozen, b.frozen)
    assert len(a.frozen) == 64


@pytest.mark.parametrize("kappa", range(1, 8))
def test_eta8_matches_bhattacharyya_ordering(kappa):
    z = bec_z(8, np.exp(-1.0))  # z0 = exp(-Es/N0) at 0 dB
    worst = set(np.argsort(-z, kind="stable")[: 8 - kappa].tolist())
    assert set(polar_construct(8, kappa, 0.0).frozen.tolist()) == worst


def test_invalid_sizes_rejected():
    with pytest.raises(ConfigError):
        polar_construct(12, 6)
    with pytest.raises(ConfigError):
        polar_construct(8, 9)
    with pytest.raises(ConfigError):
        PolarCode(8, 4, np.array([0, 1, 2, 2]))


def test_encode_examples():
    code = polar_construct(128, 64)
    assert not polar_encode(np.zeros(64, dtype=int), code).any()
    half = PolarCode(2, 2, np.array([], dtype=int))
    for u in itertools.product((0, 1), repeat=2):
        assert list(polar_encode(np.array(u), half)) == [u[0] ^ u[1], u[1]]
    with pytest.raises(DomainError):
        polar_encode(np.zeros(63, dtype=int), code)


@given(st.lists(st.integers(0, 1), min_size=16, max_size=16))
def test_transform_is_involution(bits):
    u = np.array(bits, dtype=np.int8)
    assert np.array_equal(polar_transform(polar_transform(u)), u)


def test_noiseless_round_trip():
    code = polar_construct(128, 64)
    msgs = rng_stream(1).integers(0, 2, (100, 64))
    llr = np.where(polar_encode(msgs, code) == 0, 30.0, -30.0)
    assert np.array_equal(scl_decode(llr, code), msgs)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(8, 4), (16, 8), (32, 12)]))
def test_list_one_equals_sc(seed, shape):
    code = polar_construct(*shape, list_size=1)
    rng = rng_stream(seed)
    cw = polar_encode(rng.integers(0, 2, (5, code.kappa)), code)
    llrs = bpsk_llrs(cw, -1.0, rng)
    got = scl_decode(llrs, code)
    for row, llr in zip(got, llrs):
        assert np.array_equal(row, sc_decode(llr, code))


def test_scl8_tracks_ml_on_8_4_code():
    code = polar_construct(8, 4, list_size=8)
    rng = rng_stream(2)
    msgs = rng.integers(0, 2, (2000, 4))
    llrs = bpsk_llrs(polar_encode(msgs, code), 3.0, rng)
    scl = scl_decode(llrs, code)
    ml = np.array([ml_decode(l, code) for l in llrs])
    assert np.mean(np.all(scl == ml, axis=1)) >= 0.99


@pytest.mark.parametrize("eta,kappa", [(8, 3), (16, 4)])
def test_full_list_is_exact_ml(eta, kappa):
    code = polar_construct(eta, kappa, list_size=2**kappa)
    rng = rng_stream(3)
    llrs = bpsk_llrs(polar_encode(rng.integers(0, 2, (300, kappa)), code), -2.0, rng)
    scl = scl_decode(llrs, code)
    for row, llr in zip(scl, llrs):
        assert np.array_equal(row, ml_decode(llr, code))


def test_frozen_file_round_trip(tmp_path):
    code = polar_construct(64, 20, 1.5, list_size=4)
    path = tmp_path / "frozen.txt"
    code.save_frozen(path)
    back = PolarCode.load_frozen(path, list_size=4)
    assert (back.eta, back.kappa, back.list_size) == (64, 20, 4)
    assert np.array_equal(np.sort(back.frozen), np.sort(code.frozen))


def test_non_finite_llrs_rejected():
    code = polar_construct(8, 4)
    with pytest.raises(DomainError):
        scl_decode(np.array([0.0, 1, 2, np.nan, 1, 1, 1, 1]), code)
    with pytest.raises(DomainError):
        scl_decode(np.zeros(16), code)
