"""Common-codebook encoding and the real-valued observation model.

Every user maps J-bit message fragments onto columns of one shared
N x 2^J complex Gaussian codebook.  A received slot is the superposition
of the active columns weighted by the users' angular channel rows plus
complex white noise.  The detector operates on the equivalent real model
obtained by stacking real and imaginary parts, which doubles both the
measurement dimension and the number of unknown rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError, ResourceLimitError

MAX_J_BITS = 20  # 2^20 codewords is already past desk scale


@dataclass
class SlotCodebook:
    """Shared codebook in complex form and its real block embedding."""

    complex_matrix: np.ndarray   # N x 2^J
    real_matrix: np.ndarray      # 2N x 2^{J+1}, [[Re, -Im], [Im, Re]]
    n: int
    j_bits: int
    seed: int

    @property
    def num_codewords(self) -> int:
        return 2 ** self.j_bits


@dataclass
class SlotObservation:
    """One received slot plus the ground truth used by oracles and metrics."""

    complex_received: np.ndarray            # N x M
    real_received: np.ndarray               # 2N x M
    noise_variance: float                   # per complex entry, i.e. 2 sigma^2
    active_index_set: frozenset[int]        # 1-based codeword indices
    true_signal: np.ndarray | None = None   # complex 2^J x M rows of Xi @ H


@dataclass
class MessageSet:
    """Per-user payload bits and their per-slot codeword indices (1-based)."""

    payload_bits: np.ndarray        # K x B, dtype uint8
    codeword_indices: np.ndarray    # K x S, 1-based
    j_bits: int

    @property
    def num_slots(self) -> int:
        return self.codeword_indices.shape[1]

    def payload_ints(self) -> list[int]:
        """Payloads packed as Python ints (MSB first), handy as dict keys."""
        return [int("".join(map(str, row)), 2) for row in self.payload_bits]


def build_codebook(n: int, j_bits: int, seed: int) -> SlotCodebook:
    """Draw the N x 2^J i.i.d. complex Gaussian codebook with unit mean column energy.

    Entries have variance 1/N (split evenly across real and imaginary
    parts) so the expected squared column norm is one.
    """
    if n < 1:
        raise ParameterError(f"block length must be >= 1, got {n}")
    if not (1 <= j_bits <= MAX_J_BITS):
        raise ResourceLimitError(f"j_bits must be in [1, {MAX_J_BITS}], got {j_bits}")
    rng = np.random.default_rng(seed)
    k = 2 ** j_bits
    scale = 1.0 / np.sqrt(2 * n)
    cplx = scale * (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
    re, im = cplx.real, cplx.imag
    real = np.block([[re, -im], [im, re]])
    return SlotCodebook(complex_matrix=cplx, real_matrix=real, n=n, j_bits=j_bits, seed=seed)


def fragment_message(bits: np.ndarray, j_bits: int) -> np.ndarray:
    """Split a B-bit payload into ceil(B/J) codeword indices (1-based).

    The last fragment is zero-padded up to J bits.  Bits are consumed
    MSB first within each fragment, so the inverse is concatenation of
    the J-bit binary expansions truncated back to B bits.
    """
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        raise ParameterError("payload must contain at least one bit")
    if j_bits < 1:
        raise ParameterError("fragment width must be >= 1")
    s = -(-bits.size // j_bits)
    padded = np.zeros(s * j_bits, dtype=np.uint8)
    padded[: bits.size] = bits
    weights = 1 << np.arange(j_bits - 1, -1, -1)
    return padded.reshape(s, j_bits) @ weights + 1


def assemble_message(indices: np.ndarray, j_bits: int, payload_bits: int) -> np.ndarray:
    """Concatenate J-bit expansions of 1-based indices and truncate to B bits."""
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(indices < 1) or np.any(indices > 2 ** j_bits):
        raise ParameterError("codeword indices out of range")
    shifts = np.arange(j_bits - 1, -1, -1)
    bits = ((indices[:, None] - 1) >> shifts[None, :]) & 1
    return bits.ravel()[:payload_bits].astype(np.uint8)


def random_message_set(
    k_users: int, payload_bits: int, j_bits: int, rng: np.random.Generator
) -> MessageSet:
    """Uniform random payloads for k_users, already fragmented per slot."""
    if k_users < 1 or payload_bits < 1:
        raise ParameterError("k_users and payload_bits must be >= 1")
    bits = rng.integers(0, 2, size=(k_users, payload_bits), dtype=np.uint8)
    indices = np.stack([fragment_message(row, j_bits) for row in bits])
    return MessageSet(payload_bits=bits, codeword_indices=indices, j_bits=j_bits)


def realify(matrix: np.ndarray) -> np.ndarray:
    """Stack [Re; Im] of a complex matrix along the row axis."""
    matrix = np.asarray(matrix)
    return np.concatenate([matrix.real, matrix.imag], axis=0)


def complexify(matrix: np.ndarray) -> np.ndarray:
    """Inverse of :func:`realify`: top half + j * bottom half."""
    matrix = np.asarray(matrix)
    if matrix.shape[0] % 2 != 0:
        raise DimensionError(f"row count must be even, got {matrix.shape[0]}")
    half = matrix.shape[0] // 2
    return matrix[:half] + 1j * matrix[half:]


def signal_rows(codebook: SlotCodebook, active_users: list[tuple[int, np.ndarray]]) -> np.ndarray:
    """Ground-truth 2^J x M signal matrix: channels summed onto codeword rows."""
    if not active_users:
        raise ParameterError("active_users must not be empty")
    m = len(np.asarray(active_users[0][1]))
    rows = np.zeros((codebook.num_codewords, m), dtype=complex)
    for index, chan in active_users:
        if not (1 <= index <= codebook.num_codewords):
            raise ParameterError(f"codeword index {index} out of [1, {codebook.num_codewords}]")
        rows[index - 1] += np.asarray(chan)
    return rows


def synthesize_slot(
    codebook: SlotCodebook,
    active_users: list[tuple[int, np.ndarray]],
    sigma2: float,
    rng: np.random.Generator,
    num_antennas: int | None = None,
) -> SlotObservation:
    """Received slot: sum of picked codewords times channel rows plus noise.

    ``active_users`` holds (1-based codeword index, angular channel vector)
    pairs; repeated indices superpose their channels on one codebook row.
    ``sigma2`` is half the per-entry complex noise variance, i.e. the
    variance of each real noise component.
    """
    if sigma2 < 0:
        raise ParameterError("noise variance must be non-negative")
    if active_users:
        m = len(np.asarray(active_users[0][1]))
        x_rows = signal_rows(codebook, active_users)
        noiseless = codebook.complex_matrix @ x_rows
    else:
        if num_antennas is None:
            raise ParameterError("num_antennas is required when no users are active")
        m = num_antennas
        x_rows = np.zeros((codebook.num_codewords, m), dtype=complex)
        noiseless = np.zeros((codebook.n, m), dtype=complex)
    noise = np.sqrt(sigma2) * (
        rng.standard_normal((codebook.n, m)) + 1j * rng.standard_normal((codebook.n, m))
    )
    received = noiseless + noise
    return SlotObservation(
        complex_received=received,
        real_received=realify(received),
        noise_variance=2 * sigma2,
        active_index_set=frozenset(index for index, _ in active_users),
        true_signal=x_rows,
    )


def solve_noise_variance(signal_energy: float, n: int, m: int, snr_linear: float) -> float:
    """Per-real-component noise variance that hits a target overall SNR.

    The SNR is the ratio of total signal energy to expected total noise
    energy across the 2N x M real observation.
    """
    if snr_linear <= 0:
        raise ParameterError("SNR must be positive")
    return signal_energy / (2 * n * m * snr_linear)


def export_observation_npz(path, observation: SlotObservation, codebook_seed: int) -> None:
    """Binary dump of one slot for decoder-only regression runs."""
    np.savez_compressed(
        path,
        real_received=observation.real_received,
        noise_variance=observation.noise_variance,
        active_index_set=np.array(sorted(observation.active_index_set), dtype=np.int64),
        codebook_seed=np.int64(codebook_seed),
    )


def load_observation_npz(path) -> tuple[SlotObservation, int]:
    """Inverse of :func:`export_observation_npz`."""
    data = np.load(path)
    real = data["real_received"]
    obs = SlotObservation(
        complex_received=complexify(real),
        real_received=real,
        noise_variance=float(data["noise_variance"]),
        active_index_set=frozenset(int(i) for i in data["active_index_set"]),
    )
    return obs, int(data["codebook_seed"])
