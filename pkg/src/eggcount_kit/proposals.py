"""Independence proposals for the population rate mu and the reduction delta.

Both full conditionals have the form ``exp(-G(x))``:

    mu:     G(mu)    = a log(mu) + b mu + c / mu
    delta:  G(delta) = -a log(delta) - b log(1 - delta) + c delta

Proposals are built by matching the mode ``m`` and the curvature ``G''(m)``
of a known family. For mu, three families are matched and the one closest
to the target in Kullback-Leibler divergence is used.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .distributions import RngStream

KL_NODES = 2049
KL_SPAN_SD = 12.0


class DegenerateConditionalError(ArithmeticError):
    """The conditional has no interior mode with positive curvature."""


@dataclass(frozen=True)
class ProposalSpec:
    """A proposal family, its parameters and the mode/curvature it was matched to.

    Families: ``inverse_gamma`` (shape, scale), ``lognormal`` (meanlog,
    sdlog), ``gamma`` (shape, rate), ``beta`` (a, b), ``exact`` and
    ``truncated_gamma`` (shape, rate on (0, 1)).
    """

    family: str
    params: dict
    mode: float
    curvature: float
    fallback: bool = False
    _log_norm: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_log_norm", self._normalizer())

    def _normalizer(self) -> float:
        p = self.params
        if self.family == "inverse_gamma":
            return p["shape"] * math.log(p["scale"]) - math.lgamma(p["shape"])
        if self.family == "lognormal":
            return -math.log(p["sdlog"]) - 0.5 * math.log(2 * math.pi)
        if self.family == "gamma":
            return p["shape"] * math.log(p["rate"]) - math.lgamma(p["shape"])
        if self.family == "beta":
            return -float(special.betaln(p["a"], p["b"]))
        if self.family in ("exact", "truncated_gamma"):
            k, c = p["shape"], p["rate"]
            mass = -math.expm1(-c) if k == 1.0 else special.gammainc(k, c)
            return k * math.log(c) - math.lgamma(k) - math.log(mass)
        raise ValueError(f"unknown proposal family {self.family!r}")

    def logpdf(self, x):
        """Normalized log density; works on scalars and arrays."""
        p, fam = self.params, self.family
        scalar = np.ndim(x) == 0
        lib = math if scalar else np
        if scalar and (x <= 0 or (fam in ("beta", "exact", "truncated_gamma") and x >= 1)):
            return -math.inf
        if fam == "inverse_gamma":
            out = -(p["shape"] + 1) * lib.log(x) - p["scale"] / x
        elif fam == "lognormal":
            lx = lib.log(x)
            out = -lx - 0.5 * ((lx - p["meanlog"]) / p["sdlog"]) ** 2
        elif fam == "gamma":
            out = (p["shape"] - 1) * lib.log(x) - p["rate"] * x
        elif fam == "beta":
            out = (p["a"] - 1) * lib.log(x) + (p["b"] - 1) * lib.log1p(-x)
        else:
            out = (p["shape"] - 1) * lib.log(x) - p["rate"] * x
        out = out + self._log_norm
        if not scalar and fam in ("beta", "exact", "truncated_gamma"):
            out = np.where((x > 0) & (x < 1), out, -np.inf)
        return out

    def sample(self, rng: RngStream) -> float:
        g, p, fam = rng.generator, self.params, self.family
        if fam == "inverse_gamma":
            return p["scale"] / g.gamma(p["shape"])
        if fam == "lognormal":
            return math.exp(p["meanlog"] + p["sdlog"] * g.standard_normal())
        if fam == "gamma":
            return g.gamma(p["shape"]) / p["rate"]
        if fam == "beta":
            return g.beta(p["a"], p["b"])
        return sample_truncated_gamma(p["shape"], p["rate"], g.random())


def sample_truncated_gamma(shape: float, rate: float, u: float) -> float:
    """Inverse-CDF draw from Gamma(shape, rate) restricted to (0, 1)."""
    if shape == 1.0:
        # truncated exponential, closed form
        return -math.log1p(u * math.expm1(-rate)) / rate
    mass = special.gammainc(shape, rate)
    x = special.gammaincinv(shape, u * mass) / rate
    return min(max(x, 5e-324), 1.0 - 1e-16)


def truncated_exponential_cdf(x, rate):
    """CDF of Exponential(rate) restricted to (0, 1)."""
    x = np.clip(x, 0.0, 1.0)
    return np.expm1(-rate * x) / math.expm1(-rate)


# --------------------------------------------------------------------------
# mu
# --------------------------------------------------------------------------

def mu_log_target(mu, a: float, b: float, c: float):
    """Unnormalized log full conditional of mu, ``-G(mu)``."""
    if np.ndim(mu) == 0:
        if mu <= 0:
            return -math.inf
        return -(a * math.log(mu) + b * mu + c / mu)
    return -(a * np.log(mu) + b * mu + c / mu)


def mu_mode_curvature(a: float, b: float, c: float) -> tuple[float, float]:
    """Mode of exp(-G) and G'' there.

    The mode solves b m^2 + a m - c = 0; the positive root is written as
    2c / (a + sqrt(a^2 + 4bc)) to avoid cancellation when 4bc << a^2.
    """
    if not (b > 0 and c > 0):
        raise DegenerateConditionalError(f"need b > 0 and c > 0, got b={b}, c={c}")
    m = 2.0 * c / (a + math.sqrt(a * a + 4.0 * b * c))
    d2 = -a / m**2 + 2.0 * c / m**3
    if not (m > 0 and d2 > 0 and math.isfinite(m) and math.isfinite(d2)):
        raise DegenerateConditionalError(f"no interior mode for a={a}, b={b}, c={c}")
    return m, d2


def mu_candidates(a: float, b: float, c: float) -> list[ProposalSpec]:
    """Mode- and curvature-matched inverse gamma, log-normal and gamma proposals.

    The inverse gamma is dropped when its matched shape is not positive.
    """
    m, d2 = mu_mode_curvature(a, b, c)
    out = []
    ig_scale = d2 * m**3
    ig_shape = ig_scale / m - 1.0
    if ig_shape > 0:
        out.append(ProposalSpec("inverse_gamma", {"shape": ig_shape, "scale": ig_scale}, m, d2))
    sdlog = 1.0 / (math.sqrt(d2) * m)
    out.append(ProposalSpec("lognormal", {"meanlog": math.log(m) + sdlog**2, "sdlog": sdlog}, m, d2))
    rate = d2 * m
    out.append(ProposalSpec("gamma", {"shape": rate * m + 1.0, "rate": rate}, m, d2))
    return out


_STD_GRID = np.linspace(-KL_SPAN_SD, KL_SPAN_SD, KL_NODES)
# keeps 0 * (-inf) out of the quadrature sums
_FLOOR = -1e300


def _log_grid_logpdf(cand: ProposalSpec, u: np.ndarray, x: np.ndarray, inv_x: np.ndarray) -> np.ndarray:
    """log density of log(mu) under ``cand`` at u = log(x)."""
    p = cand.params
    if cand.family == "inverse_gamma":
        return -p["shape"] * u - p["scale"] * inv_x + cand._log_norm
    if cand.family == "lognormal":
        z = (u - p["meanlog"]) / p["sdlog"]
        return -0.5 * z * z + cand._log_norm
    if cand.family == "gamma":
        return p["shape"] * u - p["rate"] * x + cand._log_norm
    return cand.logpdf(x) + u


def kl_divergences(coeffs: tuple[float, float, float], candidates) -> np.ndarray:
    """KL(target || candidate) for each candidate, by quadrature on log(mu).

    The grid spans the mode +- 12 log-scale standard deviations of the
    matched log-normal with ``KL_NODES`` equally spaced nodes. Densities
    are taken on the log scale (Jacobian included), which leaves KL unchanged.
    """
    a, b, c = coeffs
    m, d2 = mu_mode_curvature(a, b, c)
    sd = 1.0 / (math.sqrt(d2) * m)
    u = math.log(m) + sd * _STD_GRID
    du = sd * (_STD_GRID[1] - _STD_GRID[0])
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        x = np.exp(u)
        inv_x = 1.0 / x
        lp = (1.0 - a) * u - b * x - c * inv_x
        lp -= lp.max()
        np.maximum(lp, _FLOOR, out=lp)
        w = np.exp(lp)
        z = w.sum() * du
        if not (math.isfinite(z) and z > 0):
            raise DegenerateConditionalError("target quadrature is not finite")
        lp -= math.log(z)
        w *= du / z
        kl = np.empty(len(candidates))
        for j, cand in enumerate(candidates):
            lq = np.maximum(_log_grid_logpdf(cand, u, x, inv_x), _FLOOR)
            kl[j] = np.dot(w, lp - lq)
    kl[~np.isfinite(kl)] = np.inf
    return kl


def kl_select(coeffs: tuple[float, float, float], candidates) -> ProposalSpec:
    kl = kl_divergences(coeffs, candidates)
    if not np.isfinite(kl).any():
        raise DegenerateConditionalError("no candidate has finite divergence")
    return candidates[int(np.argmin(kl))]


def build_mu_proposal(a: float, b: float, c: float, cached: bool = False) -> ProposalSpec:
    """Matched proposal for mu, chosen by KL divergence among the candidates.

    With ``cached=True`` the family choice is looked up by coefficients
    rounded to two significant digits (and computed at those rounded
    values), so it stays a deterministic function of (a, b, c). The
    parameters of the returned proposal always use the exact coefficients.
    """
    candidates = mu_candidates(a, b, c)
    if not cached:
        return kl_select((a, b, c), candidates)
    family = _cached_mu_family(float(f"{a:.2g}"), float(f"{b:.2g}"), float(f"{c:.2g}"))
    for cand in candidates:
        if cand.family == family:
            return cand
    return kl_select((a, b, c), candidates)


@functools.lru_cache(maxsize=8192)
def _cached_mu_family(a: float, b: float, c: float) -> str:
    try:
        return kl_select((a, b, c), mu_candidates(a, b, c)).family
    except DegenerateConditionalError:
        return ""


# --------------------------------------------------------------------------
# delta
# --------------------------------------------------------------------------

def delta_log_target(delta, a: float, b: float, c: float):
    """Unnormalized log full conditional of delta, ``-G(delta)``."""
    if np.ndim(delta) == 0:
        if not 0 < delta < 1:
            return -math.inf
        return a * math.log(delta) + b * math.log1p(-delta) - c * delta
    return special.xlogy(a, delta) + special.xlog1py(b, -delta) - c * delta


def delta_mode_curvature(a: float, b: float, c: float) -> tuple[float, float]:
    """Smaller root of c m^2 - (a + b + c) m + a = 0 and G'' at it.

    Computed as 2a / (s + sqrt(s^2 - 4ac)), s = a + b + c, which equals the
    textbook root without its cancellation.
    """
    s = a + b + c
    disc = s * s - 4.0 * a * c
    if c <= 0 or disc < 0:
        raise DegenerateConditionalError(f"no real mode for a={a}, b={b}, c={c}")
    denom = s + math.sqrt(disc)
    if denom <= 0:
        raise DegenerateConditionalError(f"no real mode for a={a}, b={b}, c={c}")
    m = 2.0 * a / denom
    if not 0 < m < 1:
        raise DegenerateConditionalError(f"mode {m} not inside (0, 1)")
    d2 = a / m**2 + b / (1.0 - m) ** 2
    if not (d2 > 0 and math.isfinite(d2)):
        raise DegenerateConditionalError(f"non-positive curvature at the mode for a={a}, b={b}, c={c}")
    return m, d2


def build_delta_proposal(a: float, b: float, c: float) -> ProposalSpec:
    """Beta proposal matched to the mode and curvature of the delta conditional.

    Without post-treatment eggs under a flat prior (a = b = 0) the conditional
    is an exponential restricted to (0, 1), drawn exactly. Whenever the mode
    sits on the boundary the proposal falls back to Gamma(a + 1, c)
    restricted to (0, 1) when that gamma has its mean inside the interval,
    and to Beta(a + 1, b + 1) when the mass crowds against 1. Either one
    absorbs part of the conditional exactly and leaves the rest to the
    acceptance ratio.
    """
    if not c > 0:
        raise DegenerateConditionalError(f"need c > 0, got {c}")
    if a == 0 and b == 0:
        return ProposalSpec("exact", {"shape": 1.0, "rate": c}, 0.0, math.nan)
    if a > 0:
        try:
            m, d2 = delta_mode_curvature(a, b, c)
        except DegenerateConditionalError:
            pass
        else:
            alpha = (1.0 - m) * m * m * d2 + 1.0
            beta = m * (1.0 - m) ** 2 * d2 + 1.0
            return ProposalSpec("beta", {"a": alpha, "b": beta}, m, d2)
    if (a + 1.0) / c < 1.0:
        return ProposalSpec("truncated_gamma", {"shape": a + 1.0, "rate": c}, 0.0, math.nan, fallback=True)
    # mass piles up against 1: absorb delta^a (1 - delta)^b and leave exp(-c delta) to the ratio
    return ProposalSpec("beta", {"a": a + 1.0, "b": b + 1.0}, 1.0, math.nan, fallback=True)
