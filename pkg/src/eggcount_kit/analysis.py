"""Per-flock analysis: classical FECRT next to the hierarchical model."""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

from .classical import (
    PairedEpgSample,
    UndefinedEstimateError,
    classify_waavp,
    fecr_approx_ci,
    fecr_bootstrap_ci,
)
from .distributions import RngStream
from .io import RunConfig, write_draws
from .model import SENSITIVITY_DELTA_PRIORS, FlockData, PriorConfig
from .posterior import (
    classify_denwood,
    classify_hierarchical,
    effective_sample_size,
    is_constant,
    prob_reduction_below,
    summarize,
)
from .sampler import run_chain


def _verdict(v) -> dict:
    return {"level": v.level, "criterion_a_met": v.criterion_a_met, "criterion_b_met": v.criterion_b_met,
            "source": v.source}


def classical_block(data: FlockData, cfg: RunConfig, rng: RngStream) -> dict:
    try:
        sample = PairedEpgSample(data.epg_pre, data.epg_post)
        approx = fecr_approx_ci(sample, cfg.level)
    except (UndefinedEstimateError, ValueError) as exc:
        return {"error": str(exc)}
    boot = fecr_bootstrap_ci(sample, rng, cfg.resamples, cfg.level)
    thresholds = {"reduction_threshold": cfg.reduction_threshold, "lower_threshold": cfg.lower_threshold}
    return {
        "estimate": approx.estimate,
        "approximate": {"lower": approx.ci_lower, "upper": approx.ci_upper, "df": approx.df},
        "bootstrap": {"lower": boot.ci_lower, "upper": boot.ci_upper, "resamples": boot.resamples},
        "verdict_approximate": _verdict(classify_waavp(approx.estimate, approx.ci_lower, **thresholds)),
        "verdict_bootstrap": _verdict(classify_waavp(boot.estimate, boot.ci_lower, **thresholds)),
    }


def hierarchical_block(data: FlockData, priors: PriorConfig, cfg: RunConfig, rng: RngStream,
                       draws_path: Path | None = None) -> dict:
    draws = run_chain(data, priors, cfg.chain, rng=rng)
    summary = summarize(draws, cfg.level)
    verdict = classify_hierarchical(summary, cfg.reduction_threshold, cfg.lower_threshold)
    diagnostics = {
        "accept_phi": draws.accept_phi,
        "accept_mu": draws.accept_mu,
        "accept_delta": draws.accept_delta,
        "phi_step": draws.phi_step,
        **draws.diagnostics,
    }
    if len(draws) >= 100:
        diagnostics["ess"] = {name: effective_sample_size(getattr(draws, name)) for name in ("phi", "mu", "delta")}
        diagnostics["zero_variance"] = {name: is_constant(getattr(draws, name)) for name in ("phi", "mu", "delta")}
    block = {
        "prior": asdict(priors),
        "reduction": asdict(summary.reduction),
        "delta": asdict(summary.delta),
        "mu": asdict(summary.mu),
        "phi": asdict(summary.phi),
        "prob_reduction_below": prob_reduction_below(draws, cfg.reduction_threshold),
        "verdict": _verdict(verdict),
        "denwood": classify_denwood(draws, cfg.denwood_upper, cfg.denwood_lower, cfg.reduction_threshold),
        "diagnostics": diagnostics,
        "chain": {"seed_path": list(rng.spawn_key), "n_samples": draws.n_samples, "burn_in": draws.burn_in,
                  "thin": draws.thin},
    }
    if draws_path is not None:
        write_draws(draws, draws_path)
        block["draws_file"] = draws_path.name
    return block


def analyze_flock(data: FlockData, cfg: RunConfig, rng: RngStream, draws_dir: Path | None = None) -> dict:
    """Everything reported for one flock; streams are split as
    child(0) bootstrap and child(1 + k) for the k-th prior."""
    priors_list = [cfg.priors]
    if cfg.sensitivity_sweep:
        priors_list = [cfg.priors.with_delta(a, b) for a, b in SENSITIVITY_DELTA_PRIORS]
    result = {
        "flock_id": data.flock_id,
        "n_animals": data.n,
        "mean_epg_pre": float(data.epg_pre.mean()),
        "mean_epg_post": float(data.epg_post.mean()),
        "classical": classical_block(data, cfg, rng.child(0)),
    }
    runs = []
    for k, priors in enumerate(priors_list):
        path = None
        if draws_dir is not None:
            tag = "" if not cfg.sensitivity_sweep else f"_beta{priors.a_delta:g}-{priors.b_delta:g}"
            path = Path(draws_dir) / f"{_safe_name(data.flock_id)}{tag}_draws.csv"
        runs.append(hierarchical_block(data, priors, cfg, rng.child(1 + k), path))
    result["hierarchical"] = runs[0]
    if cfg.sensitivity_sweep:
        result["sensitivity"] = runs
    return result


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name) or "flock"
