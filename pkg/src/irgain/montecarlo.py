"""Seeded BER estimation over (configuration, channel, detector) triples.

Trials are split into fixed-size blocks. Block ``i`` of a plan always draws
from the stream ``(seed, i)`` and block results are reduced in index order,
so an estimate does not depend on how many worker threads ran it.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import FLAT, ChannelImpulseResponse, filtered_spreading, first_path_statistic, snr_to_energy
from .detectors import DetectorKind, detect, detect_zf, hypotheses
from .model import SystemConfig, divisors, draw_hops, random_symbols, spreading_matrices
from .rng import key_of, stream

log = logging.getLogger(__name__)

THREADS_ENV = "IRGAIN_THREADS"
BLOCK_SIZE = 4096
Z95 = 1.959963984540054


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        n = int(value)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer")
        return n
    return os.cpu_count() or 1


def wilson_interval(errors: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = errors / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # clamp so the interval always contains the point estimate despite rounding
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


@dataclass(frozen=True)
class BerEstimate:
    errors: int
    trials: int
    ber: float
    ci_low: float
    ci_high: float
    singular_trials: int = 0

    @classmethod
    def from_counts(cls, errors: int, trials: int, singular_trials: int = 0) -> "BerEstimate":
        if not 0 <= errors <= trials:
            raise ValueError("need 0 <= errors <= trials")
        lo, hi = wilson_interval(errors, trials)
        return cls(int(errors), int(trials), errors / trials, lo, hi, int(singular_trials))

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.ber * (1 - self.ber), 0.0) / self.trials)

    def overlaps(self, other: "BerEstimate") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high


@dataclass(frozen=True)
class TrialPlan:
    """Everything needed to reproduce one BER estimate.

    ``max_errors`` stops the run at the end of the first block whose
    cumulative error count reaches it; ``None`` always runs ``num_trials``.
    """

    config: SystemConfig
    num_trials: int
    seed: int
    detector: DetectorKind = DetectorKind.MF
    channel: ChannelImpulseResponse = field(default=FLAT)
    target_user: int = 0
    max_errors: int | None = 2000

    def __post_init__(self):
        object.__setattr__(self, "detector", DetectorKind.parse(self.detector))
        if not isinstance(self.channel, ChannelImpulseResponse):
            object.__setattr__(self, "channel", ChannelImpulseResponse(self.channel))
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")
        if not 0 <= self.target_user < self.config.num_users:
            raise ValueError(f"target_user {self.target_user} out of range for K={self.config.num_users}")
        if self.max_errors is not None and self.max_errors < 1:
            raise ValueError("max_errors must be positive or None")
        if self.detector is DetectorKind.ML:
            hypotheses(self.config.num_users)

    def replace(self, **changes) -> "TrialPlan":
        return dataclasses.replace(self, **changes)


def _mf_first_path(config, taps, target, slots, pols, b, rng):
    """MF decisions of the target user, despreading at first-path timing.

    Noise is drawn only at the N_f samples the detector reads; the noise is
    white, so this equals drawing a full block and discarding the rest.
    """
    y = first_path_statistic(slots, pols, config.amplitudes, b, config.total_gain, taps, target)
    if config.noise_sigma > 0:
        noise = rng.standard_normal(slots.shape[::2])
        y = y + config.noise_sigma * np.einsum("ij,ij->i", noise, pols[:, target])
    return np.where(y >= 0, 1, -1), 0


def _joint(config, channel, kind, target, slots, pols, b, rng):
    S = spreading_matrices(slots, pols, config.total_gain)
    St = S.astype(float) if channel.is_flat else filtered_spreading(S, channel)
    a = config.amplitudes
    r = np.einsum("tnk,tk->tn", St, a * b)
    if config.noise_sigma > 0:
        r = r + config.noise_sigma * rng.standard_normal(r.shape)
    y = np.einsum("tnk,tn->tk", St, r)
    R = np.einsum("tnk,tnl->tkl", St, St)
    singular = 0
    if kind is DetectorKind.ZF:
        dec, flags = detect_zf(y, R, a, return_singular=True)
        singular = int(np.count_nonzero(flags))
    else:
        dec = detect(kind, y, R, a, config.noise_sigma)
    return dec[:, target], singular


def simulate_block(plan: TrialPlan, index: int, size: int) -> tuple[int, int]:
    """Errors and singular-R count of block ``index`` holding ``size`` trials."""
    cfg = plan.config
    rng = stream(plan.seed, index)
    slots, pols = draw_hops(cfg, rng, (size, cfg.num_users))
    b = random_symbols(rng, (size, cfg.num_users))
    if plan.detector is DetectorKind.MF:
        dec, singular = _mf_first_path(cfg, plan.channel.taps, plan.target_user, slots, pols, b, rng)
    else:
        dec, singular = _joint(cfg, plan.channel, plan.detector, plan.target_user, slots, pols, b, rng)
    return int(np.count_nonzero(dec != b[:, plan.target_user])), singular


def run_ber(plan: TrialPlan, threads: int | None = None) -> BerEstimate:
    """Estimate the target user's BER for ``plan``.

    Each trial draws fresh hop sequences for all users and fresh symbols,
    synthesises the received block, despreads, detects and compares.
    """
    threads = threads or default_threads()
    nblocks = -(-plan.num_trials // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, plan.num_trials - i * BLOCK_SIZE) for i in range(nblocks)]
    errors = trials = singular = 0

    def work(i):
        return simulate_block(plan, i, sizes[i])

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        i = 0
        while i < nblocks:
            wave = range(i, min(i + threads, nblocks))
            results = list(pool.map(work, wave)) if pool else [work(j) for j in wave]
            stop = False
            for j, (e, s) in zip(wave, results):
                errors += e
                singular += s
                trials += sizes[j]
                if plan.max_errors is not None and errors >= plan.max_errors:
                    stop = True
                    break
            if stop:
                break
            i += threads
    finally:
        if pool:
            pool.shutdown()
    if singular:
        log.info("%d of %d trials used a pseudo-inverse (singular R)", singular, trials)
    return BerEstimate.from_counts(errors, trials, singular)


class SweepAxis(str, enum.Enum):
    PULSE_RATE = "pulse_rate"
    SNR_DB = "snr_db"
    NUM_USERS = "num_users"

    @classmethod
    def parse(cls, value) -> "SweepAxis":
        if isinstance(value, cls):
            return value
        aliases = {"pulserate": cls.PULSE_RATE, "snrdb": cls.SNR_DB, "numusers": cls.NUM_USERS}
        norm = str(value).lower().replace("-", "_")
        try:
            return cls(norm)
        except ValueError:
            if norm.replace("_", "") in aliases:
                return aliases[norm.replace("_", "")]
            raise ValueError(f"unknown sweep axis {value!r}; choose from {[a.value for a in cls]}") from None


def point_seed(seed: int, axis: SweepAxis, value) -> int:
    """Seed of one sweep point, derived from the base seed, axis and value."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key_of(axis.value), key_of(value)])
    return int(ss.generate_state(1, np.uint64)[0])


def apply_axis(plan: TrialPlan, axis: SweepAxis, value) -> TrialPlan:
    """The plan with one axis set to ``value``.

    ``snr_db`` sets the target user's SNR and keeps every other user's power
    ratio to it. ``num_users`` keeps the first users' energies and gives any
    added user the energy of the last one.
    """
    cfg = plan.config
    if axis is SweepAxis.PULSE_RATE:
        v = int(value)
        if v != value or v < 1 or cfg.total_gain % v:
            raise ValueError(
                f"pulse rate {value} does not divide N={cfg.total_gain}; valid values: {divisors(cfg.total_gain)}"
            )
        cfg = cfg.replace(pulses_per_symbol=v)
    elif axis is SweepAxis.SNR_DB:
        e = np.asarray(cfg.energies)
        scale = snr_to_energy(float(value), cfg.noise_sigma) / e[plan.target_user]
        cfg = cfg.replace(energies=tuple(e * scale))
    else:
        k = int(value)
        if k != value or k < 1:
            raise ValueError(f"number of users must be a positive integer, got {value}")
        e = list(cfg.energies[:k]) + [cfg.energies[-1]] * max(0, k - cfg.num_users)
        cfg = cfg.replace(energies=tuple(e))
    return plan.replace(config=cfg, seed=point_seed(plan.seed, axis, value))


def sweep_plans(base: TrialPlan, axis, values) -> list[TrialPlan]:
    axis = SweepAxis.parse(axis)
    return [apply_axis(base, axis, v) for v in values]


def run_sweep(base: TrialPlan, axis, values, threads: int | None = None) -> list[tuple[object, BerEstimate]]:
    """Run one estimate per value; every point is an independent, reproducible plan."""
    values = list(values)
    plans = sweep_plans(base, axis, values)
    return [(v, run_ber(p, threads)) for v, p in zip(values, plans)]
