"""Multiuser detectors operating on the despread statistic ``y = R A b + noise``.

The module has two layers. The functions ``detect_mf``, ``detect_zf``,
``detect_mmse`` and ``detect_ml`` work on single instances or on stacks of
independent trials (leading axes), which is what the Monte Carlo engine uses
since every symbol has its own correlation matrix. The estimator classes wrap
them in the familiar ``fit``/``transform``/``predict`` interface for a fixed
set of signatures.

Every decision uses the tie-break ``sign(0) = +1``.
"""

from __future__ import annotations

import enum
import itertools

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import FLAT, ChannelImpulseResponse, filtered_spreading, padded_spreading

MAX_ML_USERS = 20

# condition numbers above this are treated as singular correlation matrices
_SINGULAR_COND = 1e10


class DetectorKind(str, enum.Enum):
    MF = "MF"
    ZF = "ZF"
    MMSE = "MMSE"
    ML = "ML"

    @classmethod
    def parse(cls, value) -> "DetectorKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown detector {value!r}; choose from {[k.value for k in cls]}") from None

    @property
    def needs_correlation(self) -> bool:
        return self is not DetectorKind.MF


def hard_sign(x) -> np.ndarray:
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def detect_mf(y) -> np.ndarray:
    """Single-user threshold test on each matched-filter output."""
    return hard_sign(y)


def _solve(M, y, return_singular):
    M = np.asarray(M, dtype=float)
    y = np.asarray(y, dtype=float)
    cond = np.linalg.cond(M)
    singular = ~np.isfinite(cond) | (cond > _SINGULAR_COND)
    x = np.empty_like(y)
    ok = ~singular
    if M.ndim == 2:
        # one matrix shared by every row of y
        x = y @ (np.linalg.pinv(M) if singular else np.linalg.inv(M)).T
        singular = np.full(y.shape[:-1], bool(singular))
    else:
        if ok.any():
            x[ok] = np.linalg.solve(M[ok], y[ok][..., None])[..., 0]
        if singular.any():
            x[singular] = np.einsum("...kl,...l->...k", np.linalg.pinv(M[singular]), y[singular])
    if return_singular:
        return x, singular
    return x


def detect_zf(y, R, amplitudes=None, return_singular=False):
    """Decorrelator: ``sign(R^-1 y)``.

    Singular ``R`` (e.g. two users whose pulses coincide in every frame) falls
    back to the pseudo-inverse; pass ``return_singular=True`` to get a boolean
    flag per trial alongside the decisions.
    """
    x, singular = _solve(R, y, True)
    dec = hard_sign(x)
    if np.ndim(singular) == 0:
        singular = bool(singular)
    return (dec, singular) if return_singular else dec


def detect_mmse(y, R, amplitudes, sigma: float) -> np.ndarray:
    """Linear MMSE: ``sign((R + sigma^2 A^-2)^-1 y)``."""
    a = np.asarray(amplitudes, dtype=float)
    if np.any(a <= 0):
        raise ValueError("MMSE needs positive amplitudes")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    M = np.asarray(R, dtype=float) + np.diag(sigma**2 / a**2)
    return hard_sign(_solve(M, y, False))


def hypotheses(k: int) -> np.ndarray:
    """All ``2**k`` symbol vectors, lexicographic with +1 before -1."""
    if k > MAX_ML_USERS:
        raise ValueError(f"exhaustive ML infeasible for K={k} > {MAX_ML_USERS}")
    return np.array(list(itertools.product((1, -1), repeat=k)), dtype=np.int8)


def ml_metric(b, y, R, amplitudes) -> np.ndarray:
    """Log-likelihood metric ``2 b'Ay - b'ARAb`` (larger is better)."""
    a = np.asarray(amplitudes, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = a * b
    return 2.0 * np.sum(ab * np.asarray(y, dtype=float), axis=-1) - np.einsum(
        "...k,...kl,...l->...", ab, np.asarray(R, dtype=float), ab
    )


def detect_ml(y, R, amplitudes) -> np.ndarray:
    """Jointly optimal detector by exhaustive search over ``{+1,-1}^K``.

    Ties go to the first hypothesis in :func:`hypotheses` order.
    """
    y = np.asarray(y, dtype=float)
    R = np.asarray(R, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    k = y.shape[-1]
    B = hypotheses(k).astype(float)
    AB = B * a  # (H, K): A b for every hypothesis
    lin = 2.0 * (y @ AB.T)
    quad = np.einsum("...kh,hk->...h", R @ AB.T, AB)
    best = np.argmax(lin - quad, axis=-1)
    return B[best].astype(np.int8)


def detect(kind, y, R=None, amplitudes=None, sigma: float = 0.0) -> np.ndarray:
    kind = DetectorKind.parse(kind)
    if kind is DetectorKind.MF:
        return detect_mf(y)
    if kind is DetectorKind.ZF:
        return detect_zf(y, R, amplitudes)
    if kind is DetectorKind.MMSE:
        return detect_mmse(y, R, amplitudes, sigma)
    return detect_ml(y, R, amplitudes)


class _MultiuserDetector(BaseEstimator):
    """Shared plumbing: ``fit`` learns the signatures, ``transform`` despreads."""

    _kind: DetectorKind

    def fit(self, S, amplitudes, channel=None):
        """Store the signature set and precompute its correlation matrix.

        Parameters
        ----------
        S : array-like of shape (N, K)
            Spreading vectors, one column per user.
        amplitudes : array-like of shape (K,)
            Per-pulse amplitudes ``sqrt(E_k / N_f)``.
        channel : ChannelImpulseResponse, optional
            Chip-spaced channel; flat when omitted.

        Returns
        -------
        self
        """
        S = check_array(S, dtype=np.float64)
        a = check_array(np.atleast_1d(amplitudes), ensure_2d=False, dtype=np.float64)
        if a.shape != (S.shape[1],):
            raise ValueError(f"expected {S.shape[1]} amplitudes, got {a.shape[0]}")
        h = channel if channel is not None else FLAT
        h = h if isinstance(h, ChannelImpulseResponse) else ChannelImpulseResponse(h)
        self.channel_ = h
        self.signatures_ = filtered_spreading(S, h)
        self.correlation_ = self.signatures_.T @ self.signatures_
        self.amplitudes_ = a
        self.despreader_ = self._despreader(S, h)
        self.n_features_in_ = self.signatures_.shape[0]
        self.n_users_ = S.shape[1]
        return self

    def _despreader(self, S, h):
        return self.signatures_

    def transform(self, r):
        """Matched statistics ``y`` for received blocks of shape (n, N + L)."""
        check_is_fitted(self, "signatures_")
        r = check_array(r, dtype=np.float64)
        if r.shape[1] != self.n_features_in_:
            raise ValueError(f"expected blocks of {self.n_features_in_} samples, got {r.shape[1]}")
        return r @ self.despreader_

    def predict(self, r):
        """Decided symbols, shape (n, K), entries in {+1, -1}."""
        return self._decide(self.transform(r))

    def score(self, r, b):
        """Fraction of correctly decided symbols (``1 - BER``)."""
        b = check_array(b, dtype=None)
        return float(np.mean(self.predict(r) == b))


class MatchedFilterDetector(_MultiuserDetector):
    """Conventional single-user detector.

    Parameters
    ----------
    first_path : bool, default=True
        Despread with the raw signatures at first-path timing, as in the
        multipath analysis. ``False`` correlates with the channel-filtered
        signatures (a RAKE-like MF with full channel knowledge).
    """

    _kind = DetectorKind.MF

    def __init__(self, first_path=True):
        self.first_path = first_path

    def _despreader(self, S, h):
        if self.first_path:
            return padded_spreading(S, h.delay_spread)
        return self.signatures_

    def _decide(self, y):
        return detect_mf(y)


class DecorrelatingDetector(_MultiuserDetector):
    """Zero-forcing detector ``sign(R^-1 y)``."""

    _kind = DetectorKind.ZF

    def _decide(self, y):
        return detect_zf(y, self.correlation_, self.amplitudes_)


class MMSEDetector(_MultiuserDetector):
    """Linear MMSE detector.

    Parameters
    ----------
    noise_sigma : float, default=1.0
        Per-chip noise standard deviation assumed by the filter.
    """

    _kind = DetectorKind.MMSE

    def __init__(self, noise_sigma=1.0):
        self.noise_sigma = noise_sigma

    def _decide(self, y):
        return detect_mmse(y, self.correlation_, self.amplitudes_, self.noise_sigma)


class MLDetector(_MultiuserDetector):
    """Jointly optimal (maximum-likelihood) detector by exhaustive search."""

    _kind = DetectorKind.ML

    def fit(self, S, amplitudes, channel=None):
        super().fit(S, amplitudes, channel)
        hypotheses(self.n_users_)  # raises when the search is infeasible
        return self

    def _decide(self, y):
        return detect_ml(y, self.correlation_, self.amplitudes_)


def make_detector(kind, noise_sigma=1.0) -> _MultiuserDetector:
    kind = DetectorKind.parse(kind)
    return {
        DetectorKind.MF: MatchedFilterDetector,
        DetectorKind.ZF: DecorrelatingDetector,
        DetectorKind.MMSE: lambda: MMSEDetector(noise_sigma=noise_sigma),
        DetectorKind.ML: MLDetector,
    }[kind]()
