"""Received-signal synthesis for flat and chip-spaced multipath channels.

A symbol's received block is ``r = H S A b + n`` where ``H`` convolves with
the channel taps and the block is extended by ``L`` guard chips, so no energy
spills into the next symbol. The flat channel is the special case ``h = [1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import pulse_positions
from .rng import as_generator


@dataclass(frozen=True)
class ChannelImpulseResponse:
    """Chip-spaced taps ``h_0 .. h_L``; ``h_0`` is the main path."""

    taps: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        taps = tuple(float(t) for t in np.atleast_1d(np.asarray(self.taps, dtype=float)))
        if not taps:
            raise ValueError("channel needs at least one tap")
        if not all(math.isfinite(t) for t in taps):
            raise ValueError("channel taps must be finite")
        if taps[0] == 0.0:
            raise ValueError("leading tap h_0 must be nonzero")
        object.__setattr__(self, "taps", taps)

    @property
    def delay_spread(self) -> int:
        return len(self.taps) - 1

    @property
    def is_flat(self) -> bool:
        return len(self.taps) == 1 and self.taps[0] == 1.0

    @property
    def energy(self) -> float:
        """``sum_i h_i**2`` including the main tap."""
        return float(np.sum(np.square(self.taps)))

    def toeplitz(self, n: int) -> np.ndarray:
        """The ``(n + L) x n`` lower-triangular Toeplitz convolution matrix."""
        L = self.delay_spread
        H = np.zeros((n + L, n))
        for i, t in enumerate(self.taps):
            H[np.arange(n) + i, np.arange(n)] = t
        return H


FLAT = ChannelImpulseResponse()


def snr_to_energy(snr_db: float, sigma: float) -> float:
    """Energy per bit for an ``E_b/N_0`` of ``snr_db`` when ``sigma**2 = N_0/2``.

    With this mapping a lone user's matched-filter BER is ``Q(sqrt(2 * SNR))``.
    """
    if not sigma > 0:
        raise ValueError("noise sigma must be positive to define an SNR")
    return 2.0 * sigma**2 * 10.0 ** (snr_db / 10.0)


def _check_dims(S, amplitudes, b):
    S = np.asarray(S)
    a = np.asarray(amplitudes, dtype=float)
    b = np.asarray(b)
    if S.ndim < 2:
        raise ValueError("spreading matrix must be at least 2-d (N x K)")
    k = S.shape[-1]
    if a.shape != (k,):
        raise ValueError(f"expected {k} amplitudes, got shape {a.shape}")
    if b.shape[-1] != k:
        raise ValueError(f"expected {k} symbols per block, got shape {b.shape}")
    if not np.all(np.abs(b) == 1):
        raise ValueError("symbols must be +1 or -1")
    return S, a, b


def _noise(rng, sigma: float, shape) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    z = as_generator(rng).standard_normal(shape)
    return sigma * z


def synth_received_flat(S, amplitudes, b, sigma: float, rng) -> np.ndarray:
    """``r = S A b + n`` with white Gaussian noise of variance ``sigma**2``.

    ``S`` may be a stack ``(..., N, K)`` with ``b`` of shape ``(..., K)``.
    """
    S, a, b = _check_dims(S, amplitudes, b)
    clean = np.einsum("...nk,k,...k->...n", S.astype(float), a, b.astype(float))
    return clean + _noise(rng, sigma, clean.shape)


def synth_received_selective(S, amplitudes, b, h: ChannelImpulseResponse, sigma: float, rng) -> np.ndarray:
    """``r = H_0 S A b + n``; blocks are ``N + L`` chips long (guard included)."""
    S, a, b = _check_dims(S, amplitudes, b)
    h = h if isinstance(h, ChannelImpulseResponse) else ChannelImpulseResponse(h)
    tx = np.einsum("...nk,k,...k->...n", S.astype(float), a, b.astype(float))
    clean = convolve_blocks(tx, h.taps)
    return clean + _noise(rng, sigma, clean.shape)


def convolve_blocks(x: np.ndarray, taps) -> np.ndarray:
    """Full linear convolution of every block along its last axis."""
    taps = np.asarray(taps, dtype=float)
    L = taps.size - 1
    out = np.zeros(x.shape[:-1] + (x.shape[-1] + L,))
    for i, t in enumerate(taps):
        if t:
            out[..., i : i + x.shape[-1]] += t * x
    return out


def filtered_spreading(S, h: ChannelImpulseResponse) -> np.ndarray:
    """Channel-filtered signatures ``H_0 S``, shape ``(..., N + L, K)``."""
    S = np.asarray(S, dtype=float)
    cols = convolve_blocks(np.swapaxes(S, -1, -2), h.taps)
    return np.swapaxes(cols, -1, -2)


def padded_spreading(S, delay_spread: int) -> np.ndarray:
    """Raw signatures zero-extended by the guard, for first-path despreading."""
    S = np.asarray(S)
    pad = [(0, 0)] * S.ndim
    pad[-2] = (0, int(delay_spread))
    return np.pad(S, pad)


def matched_statistics(r, S) -> np.ndarray:
    """Despread: ``y = S.T r`` (batched over leading axes)."""
    r = np.asarray(r, dtype=float)
    S = np.asarray(S)
    if S.shape[-2] != r.shape[-1]:
        raise ValueError(f"received block has {r.shape[-1]} samples but signatures have {S.shape[-2]} rows")
    return np.einsum("...nk,...n->...k", S.astype(float), r)


def superpose_pulses(slots, polarities, amplitudes, b, total_gain: int, taps=(1.0,)) -> np.ndarray:
    """Noiseless received blocks built directly from hop sequences.

    Same result as ``H_0 S A b`` without materialising ``S``. ``slots`` and
    ``polarities`` have shape ``(T, K, N_f)``, ``b`` shape ``(T, K)``; returns
    ``(T, N + L)``.
    """
    t, k, nf = slots.shape
    nc = total_gain // nf
    width = total_gain + len(taps) - 1
    # flat indices into the (T, N + L) output; a user's pulses never share a
    # chip for a fixed lag, so buffered "+=" is safe
    idx = pulse_positions(slots, nc) + (np.arange(t, dtype=np.int64) * width)[:, None, None]
    weight = (np.asarray(amplitudes, dtype=float)[None, :] * b)[:, :, None] * polarities
    r = np.zeros(t * width)
    for user in range(k):
        w = weight[:, user].ravel()
        base = idx[:, user].ravel()
        for lag, tap in enumerate(taps):
            if tap:
                r[base + lag] += tap * w
    return r.reshape(t, width)


def first_path_statistic(slots, polarities, amplitudes, b, total_gain: int, taps=(1.0,), target: int = 0) -> np.ndarray:
    """Noiseless first-path MF output ``s_target' (H_0 S A b)`` from hop sequences.

    Pulse ``f - m`` of user ``k`` reaches chip ``f N_c + c`` of the target via
    tap ``l`` iff ``c^k_{f-m} + l - m N_c == c^target_f``; only the few frame
    shifts ``m`` allowed by the slot range are compared, so no received block
    is built. Shapes as in :func:`superpose_pulses`; returns ``(T,)``.
    """
    t, k, nf = slots.shape
    nc = total_gain // nf
    ts = slots[:, target]
    tp = polarities[:, target].astype(np.int8)
    gains = np.asarray(amplitudes, dtype=float)[None, :] * b
    y = np.zeros(t)
    for user in range(k):
        us = slots[:, user]
        up = polarities[:, user].astype(np.int8)
        acc = np.zeros(t)
        for lag, tap in enumerate(taps):
            if not tap:
                continue
            m_lo = max(0, -((nc - 1 - lag) // nc))
            m_hi = min(nf - 1, (lag + nc - 1) // nc)
            for m in range(m_lo, m_hi + 1):
                hit = us[:, : nf - m] + us.dtype.type(lag - m * nc) == ts[:, m:]
                prod = up[:, : nf - m] * tp[:, m:]
                acc += tap * np.einsum("ij,ij->i", hit, prod, dtype=np.int32, casting="unsafe")
        y += gains[:, user] * acc
    return y
