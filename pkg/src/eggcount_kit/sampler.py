"""Gibbs / Metropolis-Hastings sampler for the paired hierarchical model.

One sweep updates, in order: latent pre-treatment counts, latent
post-treatment counts, individual epg rates, overdispersion phi, population
rate mu and reduction delta.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .distributions import RngStream
from .model import ChainConfig, ChainState, FlockData, PriorConfig, initial_state
from .posterior import PosteriorDraws
from .proposals import (
    DegenerateConditionalError,
    ProposalSpec,
    build_delta_proposal,
    build_mu_proposal,
    delta_log_target,
    mu_log_target,
)

log = logging.getLogger(__name__)

MU_FALLBACK_STEP = 0.5


class ChainFailure(RuntimeError):
    """A log density became non-finite during sampling."""

    def __init__(self, iteration: int, state: ChainState, reason: str):
        super().__init__(f"chain failed at iteration {iteration}: {reason}")
        self.iteration = iteration
        self.state = state
        self.reason = reason

    def __reduce__(self):
        # survives the trip back from a worker process
        return type(self), (self.iteration, self.state, self.reason)


# ---------------------------------------------------------------------------
# Gibbs steps
# ---------------------------------------------------------------------------

# The hot loop calls the generator directly; parameters are valid by
# construction, so the checked samplers in ``distributions`` are bypassed.

def update_latent_pre(state: ChainState, data: FlockData, rng: RngStream) -> ChainState:
    """y_pre_i <- raw_pre_i + Pois((1 - p_i) mu_i)."""
    state.y_pre = data.raw_pre + rng.generator.poisson(data.unseen * state.mu_i)
    return state


def update_latent_post(state: ChainState, data: FlockData, rng: RngStream) -> ChainState:
    """y_post_i <- raw_post_i + Pois((1 - p_i) delta mu_i)."""
    state.y_post = data.raw_post + rng.generator.poisson(data.unseen * (state.delta * state.mu_i))
    return state


def individual_mean_params(state: ChainState) -> tuple[np.ndarray, float]:
    """Shape and rate of the Gamma full conditional of each mu_i.

    Collecting the mu_i terms of the joint posterior gives
    shape y_pre_i + y_post_i + phi and rate 1 + delta + phi / mu.
    """
    shape = state.y_pre + state.y_post + state.phi
    rate = 1.0 + state.delta + state.phi / state.mu
    return shape, rate


def update_individual_means(state: ChainState, data: FlockData, priors: PriorConfig, rng: RngStream) -> ChainState:
    shape, rate = individual_mean_params(state)
    g = rng.generator
    # Gamma(k) = Gamma(k + 1) * U^(1/k) keeps log(mu_i) finite for k < 1
    small = shape < 1.0
    draw = g.gamma(shape + small)
    u = g.random(shape.size)
    log_mu_i = np.log(draw) - math.log(rate)
    if small.any():
        log_mu_i[small] += np.log(u[small]) / shape[small]
    state.set_log_mu_i(log_mu_i)
    return state


# ---------------------------------------------------------------------------
# phi: random-walk MH with a uniform window truncated at zero
# ---------------------------------------------------------------------------

def phi_log_target(phi: float, n: int, sum_log_mu_i: float, sum_mu_i: float, mu: float, priors: PriorConfig) -> float:
    if phi <= 0:
        return -math.inf
    return ((n * phi + priors.a_phi - 1.0) * math.log(phi) - n * math.lgamma(phi)
            - n * phi * math.log(mu) + (phi - 1.0) * sum_log_mu_i
            - phi * (sum_mu_i / mu + priors.b_phi))


def phi_proposal_log_density(phi_new: float, phi_old: float, s: float) -> float:
    """log q(phi_new | phi_old) for U(max(0, phi_old - s), phi_old + s)."""
    lo = max(0.0, phi_old - s)
    if not lo <= phi_new <= phi_old + s:
        return -math.inf
    return -math.log(min(s, phi_old) + s)


def update_phi(state: ChainState, priors: PriorConfig, tuning_s: float, rng: RngStream) -> tuple[ChainState, bool]:
    phi0 = state.phi
    lo = max(0.0, phi0 - tuning_s)
    phi1 = lo + (phi0 + tuning_s - lo) * rng.generator.random()
    if phi1 <= 0:
        return state, False
    n = state.mu_i.size
    sl, sm = float(state.log_mu_i.sum()), float(state.mu_i.sum())
    log_ratio = (phi_log_target(phi1, n, sl, sm, state.mu, priors)
                 - phi_log_target(phi0, n, sl, sm, state.mu, priors)
                 + math.log(min(tuning_s, phi0) + tuning_s) - math.log(min(tuning_s, phi1) + tuning_s))
    if math.log(rng.generator.random()) < log_ratio:
        state.phi = phi1
        return state, True
    return state, False


# ---------------------------------------------------------------------------
# mu: independence MH with a KL-selected matched proposal
# ---------------------------------------------------------------------------

def mu_conditional_coeffs(state: ChainState, priors: PriorConfig) -> tuple[float, float, float]:
    """(a, b, c) with p(mu | .) proportional to exp(-(a log mu + b mu + c / mu))."""
    n = state.mu_i.size
    return (n * state.phi - priors.a_mu + 1.0, priors.b_mu, state.phi * float(state.mu_i.sum()))


def independence_mh(current: float, proposal: ProposalSpec, log_target, rng: RngStream) -> tuple[float, bool]:
    x1 = proposal.sample(rng)
    log_ratio = log_target(x1) - log_target(current) + proposal.logpdf(current) - proposal.logpdf(x1)
    if math.log(rng.generator.random()) < log_ratio:
        return x1, True
    return current, False


def update_mu(state: ChainState, priors: PriorConfig, rng: RngStream, stats: Counter | None = None) -> tuple[ChainState, bool]:
    a, b, c = mu_conditional_coeffs(state, priors)
    try:
        proposal = build_mu_proposal(a, b, c, cached=True)
    except DegenerateConditionalError:
        if stats is not None:
            stats["mu:fallback"] += 1
        return _mu_log_walk(state, a, b, c, rng)
    if stats is not None:
        stats["mu:" + proposal.family] += 1
    state.mu, accepted = independence_mh(state.mu, proposal, lambda x: mu_log_target(x, a, b, c), rng)
    return state, accepted


def _mu_log_walk(state: ChainState, a: float, b: float, c: float, rng: RngStream) -> tuple[ChainState, bool]:
    """Uniform-window random walk on log(mu), used when no matched proposal exists."""
    g = rng.generator
    u0 = math.log(state.mu)
    u1 = u0 + MU_FALLBACK_STEP * (2.0 * g.random() - 1.0)
    # target on the log scale carries the Jacobian mu
    log_ratio = mu_log_target(math.exp(u1), a, b, c) + u1 - mu_log_target(state.mu, a, b, c) - u0
    if math.log(g.random()) < log_ratio:
        state.mu = math.exp(u1)
        return state, True
    return state, False


# ---------------------------------------------------------------------------
# delta: independence MH with a matched beta proposal
# ---------------------------------------------------------------------------

def delta_conditional_coeffs(state: ChainState, priors: PriorConfig) -> tuple[float, float, float]:
    """(a, b, c) with p(delta | .) proportional to delta^a (1 - delta)^b exp(-c delta)."""
    return (float(state.y_post.sum()) + priors.a_delta - 1.0, priors.b_delta - 1.0, float(state.mu_i.sum()))


def update_delta(state: ChainState, priors: PriorConfig, rng: RngStream, stats: Counter | None = None) -> tuple[ChainState, bool]:
    a, b, c = delta_conditional_coeffs(state, priors)
    proposal = build_delta_proposal(a, b, c)
    if stats is not None:
        stats["delta:" + proposal.family] += 1
    if proposal.family == "exact":
        state.delta = proposal.sample(rng)
        return state, True
    state.delta, accepted = independence_mh(state.delta, proposal, lambda x: delta_log_target(x, a, b, c), rng)
    return state, accepted


# ---------------------------------------------------------------------------
# tuning and the full chain
# ---------------------------------------------------------------------------

def tune_phi_step(window_accepts, current_s: float, in_burn_in: bool = True,
                  target=(0.30, 0.40), factor: float = 1.5) -> float:
    """Widen the phi window when acceptance is too high, shrink it when too low.

    Outside burn-in the step is frozen.
    """
    if not in_burn_in or len(window_accepts) == 0:
        return current_s
    rate = float(np.mean(window_accepts))
    if rate > target[1]:
        return current_s * factor
    if rate < target[0]:
        return current_s / factor
    return current_s


def _check_finite(it: int, state: ChainState, priors: PriorConfig) -> None:
    n = state.mu_i.size
    lp_phi = phi_log_target(state.phi, n, float(state.log_mu_i.sum()), float(state.mu_i.sum()), state.mu, priors)
    if not (math.isfinite(lp_phi) and math.isfinite(state.mu) and state.mu > 0 and 0 < state.delta < 1):
        raise ChainFailure(it, state.copy(), "non-finite log density")


def run_chain(data: FlockData, priors: PriorConfig = PriorConfig(), config: ChainConfig = ChainConfig(),
              rng: RngStream | None = None) -> PosteriorDraws:
    """Run one chain and return thinned post-burn-in draws of (phi, mu, delta).

    ``config.seed`` drives the chain unless an explicit stream is passed.
    """
    rng = rng if rng is not None else RngStream(config.seed)
    state = initial_state(data)
    s = config.phi_step_s
    total = config.burn_in + config.n_samples * config.thin
    out = np.empty((config.n_samples, 3))
    # acceptance of phi since the step last changed; judged every tune_every iterations
    window: list[bool] = []
    kept_accepts = np.zeros(3, dtype=np.int64)
    stats: Counter = Counter()
    k = 0
    for it in range(total):
        update_latent_pre(state, data, rng)
        update_latent_post(state, data, rng)
        update_individual_means(state, data, priors, rng)
        _, acc_phi = update_phi(state, priors, s, rng)
        _, acc_mu = update_mu(state, priors, rng, stats)
        _, acc_delta = update_delta(state, priors, rng, stats)
        if config.check_support:
            state.check(data)
        if it < config.burn_in:
            window.append(acc_phi)
            if (it + 1) % config.tune_every == 0:
                s_new = tune_phi_step(window, s, True, config.target_accept_range)
                if s_new != s:
                    s, window = s_new, []
            if (it + 1) % config.tune_every == 0 or it + 1 == config.burn_in:
                _check_finite(it, state, priors)
            continue
        kept_accepts += (acc_phi, acc_mu, acc_delta)
        if (it - config.burn_in + 1) % config.thin == 0:
            out[k] = state.phi, state.mu, state.delta
            k += 1
            if not np.all(np.isfinite(out[k - 1])):
                raise ChainFailure(it, state.copy(), "non-finite parameter value")
    _check_finite(total - 1, state, priors)
    kept = config.n_samples * config.thin
    rates = kept_accepts / kept
    fallbacks = stats["mu:fallback"] + stats["delta:truncated_gamma"]
    if fallbacks:
        log.debug("flock %s: %d fallback proposal steps", data.flock_id, fallbacks)
    return PosteriorDraws(
        phi=out[:, 0].copy(),
        mu=out[:, 1].copy(),
        delta=out[:, 2].copy(),
        accept_phi=float(rates[0]),
        accept_mu=float(rates[1]),
        accept_delta=float(rates[2]),
        seed=config.seed if rng.spawn_key == () else rng.seed,
        n_samples=config.n_samples,
        burn_in=config.burn_in,
        thin=config.thin,
        phi_step=s,
        diagnostics={"proposal_counts": dict(sorted(stats.items()))},
    )
