import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from services.errors import DimensionError, DomainError, NumericError

logger = logging.getLogger(__name__)

# Configuration
SEED_MASK = (1 << 64) - 1
STREAM_STRIDE = 1 << 20  # child streams per parent stream index
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class RngSpec:
    """
    Counter-based stream address: (master_seed, stream_index).
    Block k of a stream is drawn from Philox keyed by
    SeedSequence(master_seed, spawn_key=(stream_index, k)), so draws never
    depend on evaluation order or on which worker runs them.
    """
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.stream_index < 0:
            raise DomainError(f"stream_index must be >= 0, got {self.stream_index}")

    def block_rng(self, k: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed) & SEED_MASK,
            spawn_key=(int(self.stream_index), int(k)),
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, i: int) -> "RngSpec":
        """Disjoint stream for rung/batch i under this stream"""
        return RngSpec(self.master_seed, self.stream_index * STREAM_STRIDE + i + 1)


@dataclass(frozen=True)
class ChannelMatrix:
    rows: int
    cols: int
    entries: np.ndarray

    def __post_init__(self):
        _check_dims(self.rows, self.cols)
        if self.entries.shape != (self.rows, self.cols):
            raise DimensionError(
                f"entries shape {self.entries.shape} does not match ({self.rows}, {self.cols})"
            )


@dataclass(frozen=True)
class ChannelSequence:
    blocks: List[ChannelMatrix]

    def __post_init__(self):
        if not self.blocks:
            raise DimensionError("a channel sequence needs at least one block")
        shape = (self.blocks[0].rows, self.blocks[0].cols)
        for k, block in enumerate(self.blocks):
            if (block.rows, block.cols) != shape:
                raise DimensionError(f"block {k} has shape {(block.rows, block.cols)}, expected {shape}")

    def as_array(self) -> np.ndarray:
        """Stack as (1, n_blocks, nr, nt), the layout outage events consume"""
        return np.stack([b.entries for b in self.blocks])[np.newaxis, ...]


def _check_dims(nr: int, nt: int):
    if nr < 1 or nt < 1:
        raise DimensionError(f"antenna counts must be >= 1, got nr={nr}, nt={nt}")


def _complex_gaussian(gen: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    # Real and imaginary parts each carry variance/2, so E|h|^2 = variance.
    std = math.sqrt(variance / 2.0)
    real = gen.standard_normal(shape)
    imag = gen.standard_normal(shape)
    return std * (real + 1j * imag)


def snr_db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def sample_rayleigh(nr: int, nt: int, rng: RngSpec) -> ChannelMatrix:
    """One CN(0,1) fading matrix drawn from block 0 of the stream"""
    _check_dims(nr, nt)
    entries = _complex_gaussian(rng.block_rng(0), (nr, nt))
    return ChannelMatrix(nr, nt, entries)


def sample_sequence(nr: int, nt: int, n_blocks: int, rng: RngSpec) -> ChannelSequence:
    _check_dims(nr, nt)
    if n_blocks < 1:
        raise DimensionError(f"n_blocks must be >= 1, got {n_blocks}")
    blocks = [
        ChannelMatrix(nr, nt, _complex_gaussian(rng.block_rng(k), (nr, nt)))
        for k in range(n_blocks)
    ]
    return ChannelSequence(blocks)


def sample_blocks(nr: int, nt: int, n_blocks: int, trials: int, rng: RngSpec,
                  variance: float = 1.0) -> np.ndarray:
    """
    Batch sampler used by the Monte Carlo layer.
    Returns (trials, n_blocks, nr, nt); column k comes only from block_rng(k).
    """
    _check_dims(nr, nt)
    if n_blocks < 1:
        raise DimensionError(f"n_blocks must be >= 1, got {n_blocks}")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    out = np.empty((trials, n_blocks, nr, nt), dtype=np.complex128)
    for k in range(n_blocks):
        out[:, k] = _complex_gaussian(rng.block_rng(k), (trials, nr, nt), variance)
    return out


def mutual_info(H: ChannelMatrix, rho: float) -> float:
    """
    log2 det(I + rho/nt * H H^H) in bits per channel use, computed from the
    eigenvalues of the smaller Gram matrix.
    """
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    entries = np.asarray(H.entries, dtype=np.complex128)
    if not np.all(np.isfinite(entries)):
        raise NumericError("channel matrix has non-finite entries")
    if H.rows <= H.cols:
        gram = entries @ entries.conj().T
    else:
        gram = entries.conj().T @ entries
    eig = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return float(np.sum(np.log1p(rho / H.cols * eig)) / LOG2)


def mutual_info_batch(H: np.ndarray, rho: float) -> np.ndarray:
    """Vectorised mutual_info over all leading axes of (..., nr, nt)"""
    if not rho > 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    nr, nt = H.shape[-2], H.shape[-1]
    if nr == 1 and nt == 1:
        gain = np.abs(H[..., 0, 0]) ** 2
        return np.log1p(rho * gain) / LOG2
    if nr <= nt:
        gram = H @ np.conj(np.swapaxes(H, -1, -2))
    else:
        gram = np.conj(np.swapaxes(H, -1, -2)) @ H
    eig = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return np.sum(np.log1p(rho / nt * eig), axis=-1) / LOG2
