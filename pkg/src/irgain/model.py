"""System configuration, time-hopping sequences and spreading-sequence algebra.

Chips, frames and users are indexed from 0. A user's spreading vector for one
symbol has ``N = N_f * N_c`` chips split into ``N_f`` frames of ``N_c`` chips;
frame ``f`` carries a single pulse of polarity ``d_f`` in slot ``c_f``.
Chip values are kept as ``int8`` so correlations are exact integers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator


class Coding(str, enum.Enum):
    """Whether per-pulse polarities are random (coded) or all +1 (uncoded)."""

    CODED = "coded"
    UNCODED = "uncoded"

    @classmethod
    def parse(cls, value) -> "Coding":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"coding must be 'coded' or 'uncoded', got {value!r}") from None


def divisors(n: int) -> list[int]:
    """All positive divisors of ``n`` in increasing order."""
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


@dataclass(frozen=True)
class SystemConfig:
    """Ground truth of one experiment.

    Parameters
    ----------
    total_gain : int
        Processing gain ``N``.
    pulses_per_symbol : int
        Pulse rate ``N_f``; must divide ``total_gain``.
    energies : sequence of float
        Energy per bit of every user; its length is the number of users.
    noise_sigma : float
        Per-chip noise standard deviation.
    coding : Coding or str
        ``"coded"`` (random pulse polarities) or ``"uncoded"``.
    chips_per_frame : int, optional
        ``N_c``. Derived from ``total_gain / pulses_per_symbol`` when omitted;
        if given it must satisfy ``N = N_f * N_c`` exactly.
    """

    total_gain: int
    pulses_per_symbol: int
    energies: tuple[float, ...]
    noise_sigma: float = 1.0
    coding: Coding = Coding.CODED
    chips_per_frame: int = field(default=None)

    def __post_init__(self):
        n, nf = int(self.total_gain), int(self.pulses_per_symbol)
        if n != self.total_gain or nf != self.pulses_per_symbol or n < 1 or nf < 1:
            raise ValueError("total_gain and pulses_per_symbol must be positive integers")
        if n % nf:
            raise ValueError(
                f"pulses_per_symbol={nf} does not divide total_gain={n}; "
                f"valid values: {divisors(n)}"
            )
        nc = n // nf
        if self.chips_per_frame is not None and self.chips_per_frame != nc:
            raise ValueError(f"N = N_f * N_c violated: {n} != {nf} * {self.chips_per_frame}")
        energies = tuple(float(e) for e in np.atleast_1d(self.energies))
        if not energies:
            raise ValueError("at least one user is required")
        if not all(e > 0 and math.isfinite(e) for e in energies):
            raise ValueError("all user energies must be positive and finite")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ValueError("noise_sigma must be a nonnegative real")
        object.__setattr__(self, "total_gain", n)
        object.__setattr__(self, "pulses_per_symbol", nf)
        object.__setattr__(self, "chips_per_frame", nc)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        object.__setattr__(self, "coding", Coding.parse(self.coding))

    @property
    def num_users(self) -> int:
        return len(self.energies)

    @property
    def amplitudes(self) -> np.ndarray:
        """Diagonal of the amplitude matrix, ``sqrt(E_k / N_f)``."""
        return np.sqrt(np.asarray(self.energies) / self.pulses_per_symbol)

    def replace(self, **changes) -> "SystemConfig":
        fields = dict(
            total_gain=self.total_gain,
            pulses_per_symbol=self.pulses_per_symbol,
            energies=self.energies,
            noise_sigma=self.noise_sigma,
            coding=self.coding,
        )
        fields.update(changes)
        return SystemConfig(**fields)


@dataclass(frozen=True)
class HoppingSequence:
    """Hop slots and pulse polarities of one user for one symbol."""

    slots: np.ndarray
    polarities: np.ndarray

    def __post_init__(self):
        slots = np.array(self.slots, dtype=np.int64)
        pols = np.array(self.polarities, dtype=np.int8)
        if slots.ndim != 1 or slots.shape != pols.shape:
            raise ValueError("slots and polarities must be 1-d arrays of equal length")
        if not np.all(np.abs(pols) == 1):
            raise ValueError("polarities must be +1 or -1")
        slots.flags.writeable = False
        pols.flags.writeable = False
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "polarities", pols)

    def check(self, config: SystemConfig) -> None:
        if self.slots.size != config.pulses_per_symbol:
            raise ValueError(f"expected {config.pulses_per_symbol} frames, got {self.slots.size}")
        if self.slots.min() < 0 or self.slots.max() >= config.chips_per_frame:
            raise ValueError(f"hop slots must lie in [0, {config.chips_per_frame - 1}]")
        if config.coding is Coding.UNCODED and np.any(self.polarities != 1):
            raise ValueError("uncoded sequences have all polarities equal to +1")


def draw_hops(config: SystemConfig, rng, shape=()) -> tuple[np.ndarray, np.ndarray]:
    """Draw hop slots and polarities with shape ``shape + (N_f,)``.

    Slots are i.i.d. uniform on ``[0, N_c - 1]``; polarities are i.i.d.
    equiprobable +-1 when coded and identically +1 when uncoded.
    """
    rng = as_generator(rng)
    shape = tuple(np.atleast_1d(shape)) if shape != () else ()
    full = shape + (config.pulses_per_symbol,)
    dtype = np.int16 if config.chips_per_frame < 2**14 else np.int64
    slots = rng.integers(0, config.chips_per_frame, size=full, dtype=dtype)
    if config.coding is Coding.CODED:
        pols = (2 * rng.integers(0, 2, size=full, dtype=np.int8) - 1).astype(np.int8)
    else:
        pols = np.ones(full, dtype=np.int8)
    return slots, pols


def gen_hopping(config: SystemConfig, user: int, rng) -> HoppingSequence:
    """Generate the hopping sequence of ``user`` from its own random stream."""
    if not 0 <= user < config.num_users:
        raise ValueError(f"user index {user} out of range for K={config.num_users}")
    slots, pols = draw_hops(config, rng)
    return HoppingSequence(slots, pols)


def pulse_positions(slots: np.ndarray, chips_per_frame: int) -> np.ndarray:
    """Chip index of every pulse: ``f * N_c + c_f`` along the last axis."""
    nf = slots.shape[-1]
    return np.arange(nf, dtype=np.int64) * chips_per_frame + slots


def build_spreading_vector(seq: HoppingSequence, config: SystemConfig) -> np.ndarray:
    """Chip-rate spreading vector: chip ``j`` carries ``d_f`` iff ``j mod N_c == c_f``."""
    seq.check(config)
    s = np.zeros(config.total_gain, dtype=np.int8)
    s[pulse_positions(seq.slots, config.chips_per_frame)] = seq.polarities
    return s


def spreading_matrices(slots: np.ndarray, polarities: np.ndarray, total_gain: int) -> np.ndarray:
    """Stack spreading vectors into matrices.

    ``slots`` and ``polarities`` have shape ``(..., K, N_f)``; the result has
    shape ``(..., N, K)`` (one column per user).
    """
    nf = slots.shape[-1]
    pos = pulse_positions(slots, total_gain // nf)
    lead = slots.shape[:-2]
    k = slots.shape[-2]
    s = np.zeros(lead + (k, total_gain), dtype=np.int8)
    np.put_along_axis(s, pos, polarities, axis=-1)
    return np.swapaxes(s, -1, -2)


def cross_correlation(a, b) -> int:
    """Un-normalized cross-correlation ``sum_j a_j b_j`` of two spreading vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"spreading vectors must have equal length, got {a.shape} and {b.shape}")
    return int(np.dot(a.astype(np.int64), b.astype(np.int64)))


def correlation_matrix(S) -> np.ndarray:
    """``S.T @ S`` in exact integer arithmetic; works on stacks ``(..., N, K)``."""
    S = np.asarray(S, dtype=np.int64)
    return np.swapaxes(S, -1, -2) @ S


def hop_correlation(slots: np.ndarray, polarities: np.ndarray) -> np.ndarray:
    """Correlation matrices computed directly from hop sequences.

    Equivalent to ``correlation_matrix(spreading_matrices(...))`` but costs
    ``O(K^2 N_f)`` per symbol instead of ``O(K^2 N)``. Inputs have shape
    ``(..., K, N_f)``, output ``(..., K, K)``.
    """
    hit = slots[..., :, None, :] == slots[..., None, :, :]
    prod = polarities[..., :, None, :].astype(np.int64) * polarities[..., None, :, :]
    return np.sum(np.where(hit, prod, 0), axis=-1)


def random_symbols(rng, shape) -> np.ndarray:
    return (2 * as_generator(rng).integers(0, 2, size=shape, dtype=np.int8) - 1).astype(np.int8)
