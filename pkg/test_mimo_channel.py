import math

import numpy as np
import pytest

from services.errors import DimensionError, DomainError, NumericError
from services.mimo_channel import (
    ChannelMatrix,
    ChannelSequence,
    RngSpec,
    mutual_info,
    mutual_info_batch,
    sample_blocks,
    sample_rayleigh,
    sample_sequence,
    snr_db_to_linear,
)


def test_identity_channel_capacity():
    H = ChannelMatrix(2, 2, np.eye(2, dtype=complex))
    # log2 det(I + 50 I) = 2 log2(51)
    assert mutual_info(H, 100.0) == pytest.approx(2 * math.log2(51), rel=1e-12)


def test_zero_channel_has_no_information():
    H = ChannelMatrix(3, 2, np.zeros((3, 2), dtype=complex))
    assert mutual_info(H, 1e6) == 0.0


def test_siso_closed_form():
    H = ChannelMatrix(1, 1, np.array([[0.6 + 0.8j]]))
    assert mutual_info(H, 10.0) == pytest.approx(math.log2(11.0), rel=1e-12)


def test_gram_reduction_matches_direct_determinant():
    for nr, nt in [(2, 3), (3, 2), (4, 2)]:
        H = sample_rayleigh(nr, nt, RngSpec(11, nr * 10 + nt))
        rho = 30.0
        direct = np.linalg.slogdet(np.eye(nr) + rho / nt * H.entries @ H.entries.conj().T)[1]
        assert mutual_info(H, rho) == pytest.approx(direct / math.log(2), rel=1e-10)


def test_monotone_in_rho():
    H = sample_rayleigh(2, 2, RngSpec(3))
    values = [mutual_info(H, rho) for rho in (1.0, 10.0, 100.0, 1000.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_scale_identity():
    H = sample_rayleigh(2, 3, RngSpec(5))
    scaled = ChannelMatrix(2, 3, 2.0 * H.entries)
    assert mutual_info(scaled, 10.0) == pytest.approx(mutual_info(H, 40.0), rel=1e-12)


def test_bad_arguments():
    H = ChannelMatrix(1, 1, np.array([[1.0 + 0j]]))
    with pytest.raises(DomainError):
        mutual_info(H, 0.0)
    with pytest.raises(NumericError):
        mutual_info(ChannelMatrix(1, 1, np.array([[np.nan + 0j]])), 1.0)
    with pytest.raises(DimensionError):
        sample_rayleigh(0, 2, RngSpec(1))
    with pytest.raises(DimensionError):
        ChannelMatrix(2, 2, np.zeros((2, 3), dtype=complex))
    with pytest.raises(DimensionError):
        ChannelSequence([ChannelMatrix(1, 1, np.ones((1, 1))), ChannelMatrix(2, 1, np.ones((2, 1)))])


def test_sampling_is_reproducible():
    a = sample_sequence(2, 2, 4, RngSpec(42, 7))
    b = sample_sequence(2, 2, 4, RngSpec(42, 7))
    for x, y in zip(a.blocks, b.blocks):
        assert np.array_equal(x.entries, y.entries)
    c = sample_sequence(2, 2, 4, RngSpec(42, 8))
    assert not np.array_equal(a.blocks[0].entries, c.blocks[0].entries)


def test_block_k_independent_of_sequence_length():
    short = sample_blocks(1, 2, 2, 100, RngSpec(9))
    long = sample_blocks(1, 2, 5, 100, RngSpec(9))
    assert np.array_equal(short, long[:, :2])


def test_child_streams_are_disjoint():
    parent = RngSpec(1, 3)
    assert parent.child(0) != parent.child(1)
    assert parent.child(0).stream_index != RngSpec(1, 4).child(0).stream_index


def test_unit_power_and_variance_scaling():
    H = sample_blocks(2, 2, 1, 50_000, RngSpec(17))
    assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.02)
    Hs = sample_blocks(2, 2, 1, 50_000, RngSpec(17), variance=0.01)
    assert np.mean(np.abs(Hs) ** 2) == pytest.approx(0.01, rel=0.02)


def test_batch_matches_scalar():
    H = sample_blocks(2, 3, 3, 20, RngSpec(23))
    batch = mutual_info_batch(H, 50.0)
    assert batch.shape == (20, 3)
    for t in (0, 7, 19):
        for k in range(3):
            scalar = mutual_info(ChannelMatrix(2, 3, H[t, k]), 50.0)
            assert batch[t, k] == pytest.approx(scalar, rel=1e-10)


def test_siso_fast_path():
    H = sample_blocks(1, 1, 2, 10, RngSpec(2))
    expected = np.log2(1.0 + 100.0 * np.abs(H[..., 0, 0]) ** 2)
    assert np.allclose(mutual_info_batch(H, 100.0), expected)


def test_sequence_as_array_layout():
    seq = sample_sequence(2, 1, 3, RngSpec(4))
    assert seq.as_array().shape == (1, 3, 2, 1)


def test_snr_conversion():
    assert snr_db_to_linear(20.0) == pytest.approx(100.0)
    assert snr_db_to_linear(0.0) == 1.0


def test_siso_gain_is_unit_exponential():
    h = sample_blocks(1, 1, 1, 1_000_000, RngSpec(31))[:, 0, 0, 0]
    gain = np.abs(h) ** 2
    assert 0.996 <= np.mean(gain) <= 1.004
    assert np.mean(gain <= 1.0) == pytest.approx(1 - math.exp(-1), abs=0.002)
    assert abs(np.mean(h)) < 0.005


def test_blocks_are_uncorrelated():
    H = sample_blocks(1, 1, 2, 400_000, RngSpec(37))
    C = mutual_info_batch(H, 100.0)
    assert abs(np.corrcoef(C[:, 0], C[:, 1])[0, 1]) <= 0.01


def test_single_block_sequence_is_one_rayleigh_draw():
    rng = RngSpec(41, 2)
    seq = sample_sequence(2, 3, 1, rng)
    np.testing.assert_array_equal(seq.blocks[0].entries, sample_rayleigh(2, 3, rng).entries)
