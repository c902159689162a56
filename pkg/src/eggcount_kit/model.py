"""Data, prior and chain-state containers for the paired hierarchical model.

The model, per animal i with sub-sampling probability p_i = 1 / f_i::

    raw_pre_i  | y_pre_i       ~ Bin(y_pre_i, p_i)
    raw_post_i | y_post_i      ~ Bin(y_post_i, p_i)
    y_pre_i    | mu_i          ~ Pois(mu_i)
    y_post_i   | mu_i, delta   ~ Pois(delta * mu_i)
    mu_i       | phi, mu       ~ Gamma(phi, rate=phi / mu)

with phi ~ Gamma(a_phi, b_phi), mu ~ Gamma(a_mu, b_mu) and
delta ~ Beta(a_delta, b_delta). ``100 * (1 - delta)`` is the percentage
reduction in mean epg.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class FlockData:
    """Raw slide counts (eggs seen on the McMaster grid) for one flock."""

    raw_pre: np.ndarray
    raw_post: np.ndarray
    correction_factor: np.ndarray
    flock_id: str = "flock"
    animal_ids: tuple = ()
    unseen: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pre = np.asarray(self.raw_pre)
        post = np.asarray(self.raw_post)
        f = np.broadcast_to(np.asarray(self.correction_factor, dtype=float), pre.shape).copy()
        if pre.ndim != 1 or pre.size < 1 or post.shape != pre.shape:
            raise ValueError("raw_pre and raw_post must be non-empty 1-d arrays of equal length")
        for name, arr in (("raw_pre", pre), ("raw_post", post)):
            if np.any(arr < 0) or np.any(arr != np.round(arr)):
                raise ValueError(f"{name} must hold non-negative integers")
        if np.any(~(f >= 1)):
            raise ValueError("correction factors must be >= 1")
        object.__setattr__(self, "raw_pre", pre.astype(np.int64))
        object.__setattr__(self, "raw_post", post.astype(np.int64))
        object.__setattr__(self, "correction_factor", f)
        object.__setattr__(self, "unseen", 1.0 - 1.0 / f)
        if not self.animal_ids:
            object.__setattr__(self, "animal_ids", tuple(str(i + 1) for i in range(pre.size)))

    @property
    def n(self) -> int:
        return self.raw_pre.size

    @property
    def p(self) -> np.ndarray:
        return 1.0 / self.correction_factor

    @property
    def epg_pre(self) -> np.ndarray:
        return self.raw_pre * self.correction_factor

    @property
    def epg_post(self) -> np.ndarray:
        return self.raw_post * self.correction_factor


@dataclass(frozen=True)
class PriorConfig:
    a_phi: float = 1.0
    b_phi: float = 0.7
    a_mu: float = 1.0
    b_mu: float = 0.001
    a_delta: float = 1.0
    b_delta: float = 1.0

    def __post_init__(self):
        for name in ("a_phi", "b_phi", "a_mu", "b_mu", "a_delta", "b_delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def with_delta(self, a_delta: float, b_delta: float) -> "PriorConfig":
        return replace(self, a_delta=a_delta, b_delta=b_delta)


# Priors for delta used in the sensitivity sweep: flat, mass near 0 (no
# resistance), mass near 1, and a strong prior belief in resistance.
SENSITIVITY_DELTA_PRIORS = ((1.0, 1.0), (0.5, 1.0), (1.0, 0.5), (5.0, 1.0))


@dataclass(frozen=True)
class ChainConfig:
    n_samples: int = 10000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0
    phi_step_s: float = 0.5
    target_accept_range: tuple = (0.30, 0.40)
    tune_every: int = 200
    check_support: bool = False

    def __post_init__(self):
        if self.n_samples < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need n_samples >= 1, burn_in >= 0, thin >= 1")
        if not self.phi_step_s > 0:
            raise ValueError("phi_step_s must be > 0")

    @classmethod
    def desk(cls, seed: int = 0, **kw) -> "ChainConfig":
        """Reduced run lengths for simulation studies."""
        return cls(**{"n_samples": 2000, "burn_in": 2000, "thin": 2, "seed": seed, **kw})


@dataclass
class ChainState:
    """Mutable state of one chain; ``log_mu_i`` is kept alongside ``mu_i``
    because individual rates can underflow when phi is small."""

    y_pre: np.ndarray
    y_post: np.ndarray
    log_mu_i: np.ndarray
    phi: float
    mu: float
    delta: float
    mu_i: np.ndarray = field(init=False)

    def __post_init__(self):
        self.log_mu_i = np.asarray(self.log_mu_i, dtype=float)
        self.mu_i = np.exp(self.log_mu_i)

    def set_log_mu_i(self, log_mu_i: np.ndarray) -> None:
        self.log_mu_i = log_mu_i
        self.mu_i = np.exp(log_mu_i)

    def copy(self) -> "ChainState":
        return ChainState(self.y_pre.copy(), self.y_post.copy(), self.log_mu_i.copy(),
                          self.phi, self.mu, self.delta)

    def check(self, data: Optional[FlockData] = None) -> None:
        ok = self.phi > 0 and self.mu > 0 and 0 < self.delta < 1 and np.all(np.isfinite(self.log_mu_i))
        if data is not None:
            ok = ok and np.all(self.y_pre >= data.raw_pre) and np.all(self.y_post >= data.raw_post)
        if not ok:
            raise AssertionError(f"chain state left its support: {self!r}")


def initial_state(data: FlockData) -> ChainState:
    """Method-of-moments starting point: latent counts at the observed epg."""
    f = data.correction_factor
    y_pre = np.maximum(np.rint(data.raw_pre * f), data.raw_pre).astype(np.int64)
    y_post = np.maximum(np.rint(data.raw_post * f), data.raw_post).astype(np.int64)
    mu_i = np.maximum(y_pre, 1).astype(float)
    delta = (y_post.sum() + 0.5) / (y_pre.sum() + 1.0)
    return ChainState(
        y_pre=y_pre,
        y_post=y_post,
        log_mu_i=np.log(mu_i),
        phi=1.0,
        mu=float(mu_i.mean()),
        delta=float(np.clip(delta, 0.001, 0.999)),
    )
