"""Classical faecal egg count reduction test (FECRT) and the WAAVP decision rule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import RngStream, t_quantile

PRESENT = "present"
SUSPECTED = "suspected"
ABSENT = "absent"


class UndefinedEstimateError(ValueError):
    """The pre-treatment mean is zero, so no reduction can be computed."""


@dataclass(frozen=True)
class PairedEpgSample:
    """Per-animal epg before and after treatment, same animal order."""

    pre: np.ndarray
    post: np.ndarray

    def __init__(self, pre, post):
        pre = np.asarray(pre, dtype=float)
        post = np.asarray(post, dtype=float)
        if pre.ndim != 1 or pre.shape != post.shape:
            raise ValueError("pre and post must be 1-d and of equal length")
        if pre.size < 2:
            raise ValueError("a paired sample needs at least 2 animals")
        if np.any(pre < 0) or np.any(post < 0) or not np.all(np.isfinite(pre)) or not np.all(np.isfinite(post)):
            raise ValueError("epg values must be finite and non-negative")
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)

    @property
    def n(self) -> int:
        return self.pre.size


@dataclass(frozen=True)
class FecrResult:
    estimate: float
    ci_lower: Optional[float]
    ci_upper: Optional[float]
    method: str  # "approximate" or "bootstrap"
    df: Optional[int] = None
    resamples: Optional[int] = None

    @property
    def has_interval(self) -> bool:
        return self.ci_lower is not None


@dataclass(frozen=True)
class ResistanceVerdict:
    level: str
    criterion_a_met: bool
    criterion_b_met: bool
    source: str  # "classical" or "hierarchical"


def fecr_point(sample: PairedEpgSample) -> float:
    """Percentage reduction 100 * (1 - mean(post) / mean(pre))."""
    pre_mean = sample.pre.mean()
    if pre_mean <= 0:
        raise UndefinedEstimateError("pre-treatment mean is zero")
    return 100.0 * (1.0 - sample.post.mean() / pre_mean)


def fecr_approx_ci(sample: PairedEpgSample, level: float = 0.95) -> FecrResult:
    """Delta-method interval on the log ratio of means with a t quantile.

    Treats the two means as independent, as the WAAVP procedure does; the
    variance of each mean is the unbiased sample variance over n. The
    interval is absent when the post-treatment mean or variance is zero.
    """
    estimate = fecr_point(sample)
    n = sample.n
    df = 2 * n - 2
    pre_mean, post_mean = sample.pre.mean(), sample.post.mean()
    post_var = sample.post.var(ddof=1)
    if post_mean <= 0 or post_var <= 0:
        return FecrResult(estimate, None, None, "approximate", df=df)
    pre_var = sample.pre.var(ddof=1)
    log_var = post_var / (n * post_mean**2) + pre_var / (n * pre_mean**2)
    half = t_quantile(0.5 + level / 2.0, df) * math.sqrt(log_var)
    log_ratio = math.log(post_mean / pre_mean)
    lower = 100.0 * (1.0 - math.exp(log_ratio + half))
    upper = min(100.0, 100.0 * (1.0 - math.exp(log_ratio - half)))
    return FecrResult(estimate, lower, upper, "approximate", df=df)


def bootstrap_estimates(sample: PairedEpgSample, resamples: int, rng: RngStream) -> np.ndarray:
    """Reductions for ``resamples`` paired resamples of the animals.

    Resamples whose pre-treatment mean is zero are redrawn.
    """
    n = sample.n
    idx = rng.generator.integers(0, n, size=(resamples, n))
    pre_means = sample.pre[idx].mean(axis=1)
    bad = np.flatnonzero(pre_means <= 0)
    while bad.size:
        idx[bad] = rng.generator.integers(0, n, size=(bad.size, n))
        pre_means[bad] = sample.pre[idx[bad]].mean(axis=1)
        bad = bad[pre_means[bad] <= 0]
    return 100.0 * (1.0 - sample.post[idx].mean(axis=1) / pre_means)


def fecr_bootstrap_ci(
    sample: PairedEpgSample,
    rng: RngStream,
    resamples: int = 1999,
    level: float = 0.95,
) -> FecrResult:
    """Paired nonparametric bootstrap percentile interval."""
    estimate = fecr_point(sample)
    if not np.any(sample.post > 0):
        return FecrResult(100.0, None, None, "bootstrap", resamples=resamples)
    boot = bootstrap_estimates(sample, resamples, rng)
    alpha = 1.0 - level
    lower, upper = np.quantile(boot, [alpha / 2.0, 1.0 - alpha / 2.0])
    return FecrResult(estimate, float(lower), float(upper), "bootstrap", resamples=resamples)


def classify_waavp(
    estimate: float,
    lower_limit: Optional[float],
    source: str = "classical",
    reduction_threshold: float = 95.0,
    lower_threshold: float = 90.0,
) -> ResistanceVerdict:
    """WAAVP rule: resistance present when the reduction is below 95% and the
    lower confidence limit is below 90%, suspected when exactly one holds.

    A missing lower limit never meets the second criterion, so a 100%
    reduction without an interval is classified as absent.
    """
    a = estimate < reduction_threshold
    b = lower_limit is not None and lower_limit < lower_threshold
    level = PRESENT if a and b else SUSPECTED if a or b else ABSENT
    return ResistanceVerdict(level, bool(a), bool(b), source)
