"""Codebook construction, message fragmentation, slot synthesis, real embedding."""

import numpy as np
import pytest

from urasim.channel import UpaGeometry, generate_scatterers, synthesize_user_channel
from urasim.codec import (
    assemble_message,
    build_codebook,
    complexify,
    export_observation_npz,
    fragment_message,
    load_observation_npz,
    random_message_set,
    realify,
    signal_rows,
    solve_noise_variance,
    synthesize_slot,
)
from urasim.errors import DimensionError, ParameterError, ResourceLimitError


class TestBuildCodebook:
    def test_deterministic(self):
        a = build_codebook(100, 12, seed=7)
        b = build_codebook(100, 12, seed=7)
        np.testing.assert_array_equal(a.complex_matrix, b.complex_matrix)
        np.testing.assert_array_equal(a.real_matrix, b.real_matrix)

    def test_mean_column_energy_near_one(self):
        cb = build_codebook(100, 12, seed=1)
        energies = np.sum(np.abs(cb.complex_matrix) ** 2, axis=0)
        assert 0.95 <= energies.mean() <= 1.05

    def test_real_embedding_block_structure(self):
        cb = build_codebook(16, 4, seed=3)
        k = cb.num_codewords
        re = cb.complex_matrix.real
        im = cb.complex_matrix.imag
        np.testing.assert_array_equal(cb.real_matrix[: cb.n, :k], re)
        np.testing.assert_array_equal(cb.real_matrix[cb.n :, :k], im)
        # column j + 2^J is column j rotated by (re, im) -> (-im, re)
        np.testing.assert_array_equal(cb.real_matrix[: cb.n, k:], -im)
        np.testing.assert_array_equal(cb.real_matrix[cb.n :, k:], re)

    def test_rejects_oversized_codebook(self):
        with pytest.raises(ResourceLimitError):
            build_codebook(10, 21, seed=0)

    def test_rejects_bad_block_length(self):
        with pytest.raises(ParameterError):
            build_codebook(0, 4, seed=0)


class TestFragmentation:
    def test_96_bits_into_12_bit_fragments(self):
        bits = np.zeros(96, dtype=np.uint8)
        assert len(fragment_message(bits, 12)) == 8

    def test_all_zero_message_maps_to_first_codeword(self):
        indices = fragment_message(np.zeros(96, dtype=np.uint8), 12)
        assert list(indices) == [1] * 8

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        for bits_len, j in [(96, 12), (40, 10), (25, 8), (7, 3)]:
            bits = rng.integers(0, 2, bits_len, dtype=np.uint8)
            indices = fragment_message(bits, j)
            np.testing.assert_array_equal(assemble_message(indices, j, bits_len), bits)

    def test_rejects_empty_payload(self):
        with pytest.raises(ParameterError):
            fragment_message(np.array([], dtype=np.uint8), 12)

    def test_known_value(self):
        # bits 1011 0001 with 4-bit fragments: 0b1011=11 -> 12, 0b0001=1 -> 2
        bits = np.array([1, 0, 1, 1, 0, 0, 0, 1], dtype=np.uint8)
        assert list(fragment_message(bits, 4)) == [12, 2]

    def test_message_set_shapes(self):
        ms = random_message_set(5, 40, 10, np.random.default_rng(0))
        assert ms.payload_bits.shape == (5, 40)
        assert ms.codeword_indices.shape == (5, 4)
        assert ms.codeword_indices.min() >= 1
        assert ms.codeword_indices.max() <= 1024


class TestSlotSynthesis:
    GEOM = UpaGeometry(2, 4)

    def _channel(self, seed):
        rng = np.random.default_rng(seed)
        return synthesize_user_channel(generate_scatterers(3, rng), self.GEOM, rng)

    def test_no_users_gives_pure_noise(self):
        cb = build_codebook(20, 4, seed=0)
        obs = synthesize_slot(cb, [], 0.5, np.random.default_rng(1), num_antennas=8)
        assert obs.active_index_set == frozenset()
        assert obs.complex_received.shape == (20, 8)
        assert np.all(obs.complex_received != 0)

    def test_single_user_noiseless_is_rank_one(self):
        cb = build_codebook(20, 4, seed=0)
        h = self._channel(2).angular
        obs = synthesize_slot(cb, [(5, h)], 0.0, np.random.default_rng(1))
        expected = np.outer(cb.complex_matrix[:, 4], h)
        np.testing.assert_allclose(obs.complex_received, expected, atol=1e-14)

    def test_collision_superposes_channels(self):
        cb = build_codebook(20, 4, seed=0)
        h1, h2 = self._channel(3).angular, self._channel(4).angular
        rows = signal_rows(cb, [(7, h1), (7, h2)])
        np.testing.assert_allclose(rows[6], h1 + h2)
        assert np.all(rows[[i for i in range(16) if i != 6]] == 0)

    def test_rejects_out_of_range_index(self):
        cb = build_codebook(20, 4, seed=0)
        with pytest.raises(ParameterError):
            synthesize_slot(cb, [(17, self._channel(5).angular)], 0.1, np.random.default_rng(0))

    def test_noiseless_model_consistency(self):
        # real model: Y = A X exactly when noise is off
        cb = build_codebook(32, 6, seed=9)
        users = [(i + 1, self._channel(10 + i).angular) for i in range(5)]
        obs = synthesize_slot(cb, users, 0.0, np.random.default_rng(0))
        x_real = realify(signal_rows(cb, users))
        np.testing.assert_allclose(obs.real_received, cb.real_matrix @ x_real, atol=1e-12)

    def test_group_sparsity_of_real_rows(self):
        cb = build_codebook(32, 6, seed=9)
        users = [(3, self._channel(20).angular), (40, self._channel(21).angular)]
        x_real = realify(signal_rows(cb, users))
        k = cb.num_codewords
        re_active = np.any(x_real[:k] != 0, axis=1)
        im_active = np.any(x_real[k:] != 0, axis=1)
        np.testing.assert_array_equal(re_active, im_active)

    def test_snr_accounting(self):
        # realized signal-to-noise energy ratio tracks the requested level
        cb = build_codebook(32, 6, seed=1)
        users = [(i + 1, self._channel(30 + i).angular) for i in range(6)]
        x = signal_rows(cb, users)
        target = 10 ** (6.0 / 10)
        sigma2 = solve_noise_variance(float(np.sum(np.abs(x) ** 2)), cb.n, 8, target)
        rng = np.random.default_rng(100)
        ratios = []
        for _ in range(50):
            obs = synthesize_slot(cb, users, sigma2, rng)
            noise = obs.complex_received - cb.complex_matrix @ x
            ratios.append(np.sum(np.abs(x) ** 2) / np.sum(np.abs(noise) ** 2))
        assert abs(np.mean(ratios) - target) / target < 0.1


class TestRealComplexRoundTrip:
    def test_zero(self):
        z = np.zeros((4, 3), dtype=complex)
        np.testing.assert_array_equal(complexify(realify(z)), z)

    def test_random_round_trip_exact(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
        np.testing.assert_array_equal(complexify(realify(x)), x)

    def test_norm_preserved(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
        assert np.linalg.norm(realify(x)) == pytest.approx(np.linalg.norm(x))

    def test_rejects_odd_rows(self):
        with pytest.raises(DimensionError):
            complexify(np.zeros((5, 2)))


def test_observation_npz_round_trip(tmp_path):
    geom = UpaGeometry(2, 4)
    rng = np.random.default_rng(31)
    cb = build_codebook(16, 4, seed=5)
    h = synthesize_user_channel(generate_scatterers(2, rng), geom, rng).angular
    obs = synthesize_slot(cb, [(3, h)], 0.2, rng)
    path = tmp_path / "slot.npz"
    export_observation_npz(path, obs, codebook_seed=5)
    loaded, seed = load_observation_npz(path)
    assert seed == 5
    np.testing.assert_array_equal(loaded.real_received, obs.real_received)
    assert loaded.active_index_set == obs.active_index_set
    assert loaded.noise_variance == obs.noise_variance
