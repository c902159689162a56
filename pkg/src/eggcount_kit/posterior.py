"""Posterior summaries, HPD intervals, tail probabilities and decision rules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classical import ResistanceVerdict, classify_waavp

CONFIRMED_RESISTANCE = "confirmed_resistance"
CONFIRMED_SUSCEPTIBILITY = "confirmed_susceptibility"
INCONCLUSIVE = "inconclusive"

MIN_SAMPLES = 100


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class PosteriorDraws:
    """Thinned post-burn-in draws of (phi, mu, delta) plus sampler statistics."""

    phi: np.ndarray
    mu: np.ndarray
    delta: np.ndarray
    accept_phi: float
    accept_mu: float
    accept_delta: float
    seed: int
    n_samples: int
    burn_in: int
    thin: int
    phi_step: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.phi.size == self.mu.size == self.delta.size >= 1):
            raise ValueError("draw arrays must be non-empty and of equal length")

    @property
    def reduction(self) -> np.ndarray:
        """Draws of the percentage reduction 100 * (1 - delta)."""
        return 100.0 * (1.0 - self.delta)

    def __len__(self) -> int:
        return self.delta.size


@dataclass(frozen=True)
class ParameterSummary:
    median: float
    mean: float
    hpd_lower: float
    hpd_upper: float
    multimodal: bool = False


@dataclass(frozen=True)
class PosteriorSummary:
    reduction: ParameterSummary
    delta: ParameterSummary
    mu: ParameterSummary
    phi: ParameterSummary
    level: float = 0.95


def _hpd_windows(samples, level):
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_SAMPLES:
        raise InsufficientSamplesError(f"HPD needs at least {MIN_SAMPLES} samples, got {n}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    k = math.ceil(level * n)
    widths = x[k - 1:] - x[: n - k + 1]
    return x, k, widths


def hpd_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Shortest window of ceil(level * N) consecutive order statistics.

    Ties go to the window with the lowest lower endpoint.
    """
    x, k, widths = _hpd_windows(samples, level)
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def hpd_is_multimodal(samples, level: float = 0.95) -> bool:
    """True when a runner-up window sits further from the best one than its own width.

    The runner-up is the shortest window sharing no order statistic with the
    best window; neighbours of the best window are shifted copies of it and
    say nothing about a second mode.
    """
    x, k, widths = _hpd_windows(samples, level)
    best = int(np.argmin(widths))
    starts = np.arange(widths.size)
    disjoint = (starts + k - 1 < best) | (starts > best + k - 1)
    if not disjoint.any():
        return False
    second = int(starts[disjoint][np.argmin(widths[disjoint])])
    return bool(abs(x[second] - x[best]) > widths[second])


def summarize_parameter(samples, level: float = 0.95) -> ParameterSummary:
    samples = np.asarray(samples, dtype=float)
    lo, hi = hpd_interval(samples, level)
    return ParameterSummary(
        median=float(np.median(samples)),
        mean=float(samples.mean()),
        hpd_lower=lo,
        hpd_upper=hi,
        multimodal=hpd_is_multimodal(samples, level),
    )


def summarize(draws: PosteriorDraws, level: float = 0.95) -> PosteriorSummary:
    return PosteriorSummary(
        reduction=summarize_parameter(draws.reduction, level),
        delta=summarize_parameter(draws.delta, level),
        mu=summarize_parameter(draws.mu, level),
        phi=summarize_parameter(draws.phi, level),
        level=level,
    )


def prob_reduction_below(draws, threshold: float = 95.0) -> float:
    """Posterior probability that 100 * (1 - delta) is below ``threshold``.

    Accepts a :class:`PosteriorDraws` or a bare array of delta draws.
    """
    delta = draws.delta if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=float)
    if delta.size == 0:
        raise InsufficientSamplesError("no draws")
    return float(np.mean(100.0 * (1.0 - delta) < threshold))


def classify_hierarchical(
    summary: PosteriorSummary,
    reduction_threshold: float = 95.0,
    lower_threshold: float = 90.0,
) -> ResistanceVerdict:
    """WAAVP rule with the posterior median and HPD lower bound of the reduction."""
    return classify_waavp(
        summary.reduction.median,
        summary.reduction.hpd_lower,
        source="hierarchical",
        reduction_threshold=reduction_threshold,
        lower_threshold=lower_threshold,
    )


def classify_denwood(draws, upper: float = 0.975, lower: float = 0.025, threshold: float = 95.0) -> str:
    p = prob_reduction_below(draws, threshold)
    if p > upper:
        return CONFIRMED_RESISTANCE
    if p < lower:
        return CONFIRMED_SUSCEPTIBILITY
    return INCONCLUSIVE


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    return acov / acov[0]


def effective_sample_size(samples) -> float:
    """ESS with Geyer's initial positive sequence truncation.

    A constant series has no autocorrelation to speak of; it is reported as
    N (see :func:`is_constant` for the zero-variance flag).
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < MIN_SAMPLES:
        raise InsufficientSamplesError(f"ESS needs at least {MIN_SAMPLES} samples, got {n}")
    if is_constant(x):
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[: 2 * m].reshape(m, 2).sum(axis=1)
    neg = np.flatnonzero(pairs <= 0)
    stop = neg[0] if neg.size else m
    tau = -1.0 + 2.0 * pairs[:stop].sum()
    return float(n / max(tau, 1.0 / n))


def is_constant(samples) -> bool:
    x = np.asarray(samples, dtype=float)
    return bool(x.size == 0 or np.all(x == x[0]))
