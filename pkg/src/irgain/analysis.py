"""Closed-form BER approximations for the matched-filter detector.

All formulas take energies per bit ``E_k``, the per-chip noise standard
deviation ``sigma``, the total processing gain ``N`` and the number of chips
per frame ``N_c`` (so the pulse rate is ``N / N_c``). User 0 is the user of
interest; every other user is an interferer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import ChannelImpulseResponse
from .model import Coding, SystemConfig, divisors


class Formula(str, enum.Enum):
    SINGLE_USER_AWGN = "SingleUserAwgn"
    TWO_USER_UNCODED_FLAT = "TwoUserUncodedFlat"
    MULTI_USER_UNCODED_FLAT = "MultiUserUncodedFlat"
    ISI_TWO_PATH = "IsiTwoPath"
    ISI_GENERAL = "IsiGeneral"


@dataclass(frozen=True)
class BerPrediction:
    probability: float
    formula: Formula

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability out of range: {self.probability}")

    def __float__(self):
        return self.probability


def q_function(x):
    """Gaussian tail probability ``Pr(Z > x)``."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def gaussian_q_average(mu, lam):
    """``E[Q(mu + lam X)]`` for standard normal ``X``, i.e. ``Q(mu / sqrt(1 + lam^2))``."""
    return q_function(np.asarray(mu, dtype=float) / np.sqrt(1.0 + np.square(lam)))


def _check_split(N: int, N_c: int) -> None:
    if N_c < 1 or N % N_c:
        raise ValueError(f"N_c={N_c} must divide N={N}")


def ber_single_user(E1: float, sigma: float) -> BerPrediction:
    return BerPrediction(q_function(math.sqrt(E1) / sigma), Formula.SINGLE_USER_AWGN)


def two_user_arguments(E1, E2, sigma, N, N_c):
    """The two Q-function arguments of the uncoded two-user MF approximation."""
    d = np.sqrt(sigma**2 + (E2 / N) * (1.0 - 1.0 / N_c))
    shift = np.sqrt(E2) / N_c
    return (np.sqrt(E1) + shift) / d, (np.sqrt(E1) - shift) / d


def ber_two_user_uncoded_mf(E1, E2, sigma, N, N_c) -> BerPrediction:
    """MF BER of an uncoded two-user flat-channel system.

    The cross-correlation is replaced by its Gaussian limit (mean ``N_f/N_c``,
    variance ``(N_f/N_c)(1 - 1/N_c)``) and averaged in closed form.
    """
    _check_split(N, N_c)
    if E1 <= 0 or E2 < 0:
        raise ValueError("energies must be positive")
    f1, f2 = two_user_arguments(E1, E2, sigma, N, N_c)
    p = 0.5 * q_function(f1) + 0.5 * q_function(f2)
    return BerPrediction(float(p), Formula.TWO_USER_UNCODED_FLAT)


def ber_multiuser_uncoded_mf(E1, E_interferer, K, sigma, N, N_c) -> BerPrediction:
    """Gaussian (CLT) MF BER for an uncoded system with ``K - 1`` equal-power interferers."""
    _check_split(N, N_c)
    if K < 1:
        raise ValueError("K must be at least 1")
    per_user = 1.0 / N + 1.0 / N_c**2 - 1.0 / (N * N_c)
    var = sigma**2 + (K - 1) * E_interferer * per_user
    return BerPrediction(q_function(math.sqrt(E1 / var)), Formula.MULTI_USER_UNCODED_FLAT)


def ber_isi_mf_two_path(E1, E2, h_l, l, sigma, N, N_c) -> BerPrediction:
    """MF BER with taps ``1`` at delay 0 and ``h_l`` at delay ``l <= N_c``."""
    _check_split(N, N_c)
    if l > N_c:
        raise ValueError(f"two-path formula needs l <= N_c ({l} > {N_c}); use ber_isi_mf_general")
    var = sigma**2 + E1 * h_l**2 * l / (N * N_c) + E2 * (1.0 + h_l**2) / N
    return BerPrediction(q_function(math.sqrt(E1 / var)), Formula.ISI_TWO_PATH)


def self_interference_weight(h: ChannelImpulseResponse, N_c: int) -> float:
    """``sum_i min(i, N_c)/N_c * h_i^2`` over the delayed taps ``i >= 1``."""
    taps = np.asarray(h.taps)
    lags = np.arange(taps.size)
    return float(np.sum(np.minimum(lags[1:], N_c) / N_c * taps[1:] ** 2))


def isi_q_argument(energies, h: ChannelImpulseResponse, sigma, N, N_c) -> float:
    """Argument of Q in the general multipath MF approximation."""
    _check_split(N, N_c)
    h = h if isinstance(h, ChannelImpulseResponse) else ChannelImpulseResponse(h)
    e = np.asarray(energies, dtype=float)
    self_var = e[0] / N * self_interference_weight(h, N_c)
    mai_var = h.energy / N * float(np.sum(e[1:]))
    # the main tap scales the despread signal; it is 1 in the canonical model
    return abs(h.taps[0]) * math.sqrt(e[0]) / math.sqrt(sigma**2 + self_var + mai_var)


def ber_isi_mf_general(energies, h, sigma, N, N_c) -> BerPrediction:
    """MF BER for coded users over an arbitrary chip-spaced channel.

    Interference from every other user (all paths) and self interference of
    user 0 (its echoes hitting its own later pulses) are treated as
    independent Gaussians. With ``h = [1]`` this is the coded flat-channel
    Gaussian approximation ``Q(sqrt(E_1 / (sigma^2 + sum_k E_k / N)))``.
    """
    return BerPrediction(q_function(isi_q_argument(energies, h, sigma, N, N_c)), Formula.ISI_GENERAL)


def predict_mf_ber(config: SystemConfig, channel: ChannelImpulseResponse | None = None, target_user: int = 0):
    """Pick the applicable approximation for a configuration, or ``None``.

    Uncoded multipath systems have no closed form and return ``None``.
    """
    h = channel if channel is not None else ChannelImpulseResponse()
    e = np.asarray(config.energies)
    order = [target_user] + [k for k in range(config.num_users) if k != target_user]
    e = e[order]
    N, N_c, sigma = config.total_gain, config.chips_per_frame, config.noise_sigma
    if sigma == 0:
        return None
    if config.num_users == 1 and h.is_flat:
        return ber_single_user(e[0], sigma)
    if config.coding is Coding.CODED:
        return ber_isi_mf_general(e, h, sigma, N, N_c)
    if not h.is_flat:
        return None
    if config.num_users == 2:
        return ber_two_user_uncoded_mf(e[0], e[1], sigma, N, N_c)
    return ber_multiuser_uncoded_mf(e[0], float(np.mean(e[1:])), config.num_users, sigma, N, N_c)


@dataclass(frozen=True)
class MonotonicityReport:
    """Sufficient conditions for the uncoded two-user MF BER to fall with ``N_c``."""

    energy_per_chip: bool
    energy_ratio: bool
    grid_check: bool
    grid: tuple[tuple[int, float], ...]

    @property
    def conditions_met(self) -> bool:
        return self.energy_per_chip and self.energy_ratio


def mf_monotonicity_conditions(E1, E2, sigma, N) -> MonotonicityReport:
    """Check the sufficient conditions and, independently, the BER over every split of ``N``."""
    if min(E1, E2, sigma, N) <= 0:
        raise ValueError("inputs must be positive")
    per_chip = E1 / N < sigma**2 and E2 / N < sigma**2
    ratio = math.sqrt(E2) / N < math.sqrt(E1) < N * math.sqrt(E2)
    grid = tuple((nc, ber_two_user_uncoded_mf(E1, E2, sigma, N, nc).probability) for nc in divisors(N))
    bers = np.array([p for _, p in grid])
    # non-increasing in N_c up to rounding
    ok = bool(np.all(np.diff(bers) <= 1e-12 * np.maximum(bers[:-1], 1e-300)))
    return MonotonicityReport(per_chip, ratio, ok, grid)


def uncoded_rho_cdf(x, N, N_c):
    """Asymptotic ``Pr(rho < x)`` for two uncoded users.

    ``N_c = 1`` is exact: every pulse collides, so ``rho = N_f = N`` surely.
    """
    _check_split(N, N_c)
    x = np.asarray(x, dtype=float)
    if N_c == 1:
        out = np.where(x <= N, 0.0, 1.0)
    else:
        out = 1.0 - q_function((x * N_c**2 - N) / math.sqrt(N * N_c * (N_c - 1)))
    return float(out) if np.ndim(out) == 0 else out


def interference_variance_prediction(E1, E2, h_l, l, N_c):
    """Variances of the self and multiple-access interference in the MF statistic.

    Two coded users over taps ``1`` (delay 0) and ``h_l`` (delay ``l``); the
    statistic is ``sum_f d_f r_f`` without normalisation. Returns
    ``(self_var, mai_var)``.
    """
    if l < 0 or N_c < 1:
        raise ValueError("need l >= 0 and N_c >= 1")
    self_var = E1 * h_l**2 * min(l, N_c) / N_c**2
    mai_var = E2 * (1.0 + h_l**2) / N_c
    return self_var, mai_var


def isi_argument_grid(energies, h, sigma, N) -> tuple[tuple[int, float], ...]:
    """Q-argument of the multipath MF approximation for every ``N_c`` dividing ``N``."""
    return tuple((nc, isi_q_argument(energies, h, sigma, N, nc)) for nc in divisors(N))


def isi_argument_monotone(energies, h, sigma, N) -> bool:
    """True when the Q-argument is non-decreasing in ``N_c`` (BER non-increasing)."""
    args = np.array([v for _, v in isi_argument_grid(energies, h, sigma, N)])
    return bool(np.all(np.diff(args) >= -1e-12 * args[:-1]))
