"""Simulated flocks and the comparison of FECRT intervals with the hierarchical model."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import (
    ABSENT,
    PRESENT,
    SUSPECTED,
    PairedEpgSample,
    classify_waavp,
    fecr_approx_ci,
    fecr_bootstrap_ci,
)
from .distributions import RngStream
from .model import ChainConfig, FlockData, PriorConfig
from .posterior import (
    classify_denwood,
    classify_hierarchical,
    prob_reduction_below,
    summarize,
)
from .sampler import ChainFailure, run_chain

log = logging.getLogger(__name__)

METHODS = ("fecrt_approx", "fecrt_bootstrap", "hierarchical")
LEVELS = (PRESENT, SUSPECTED, ABSENT)
DEFAULT_EFFICACIES = (85.0, 87.0, 89.0, 91.0, 93.0, 95.0, 97.0, 99.0)
MAX_FAILURE_FRACTION = 0.05


class ScenarioAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    n_animals: int = 15
    true_mu: float = 500.0
    true_phi: float = 0.9
    correction_factor: float = 50.0
    efficacies: tuple = DEFAULT_EFFICACIES
    replicates: int = 200
    chain: ChainConfig = field(default_factory=ChainConfig.desk)
    priors: PriorConfig = field(default_factory=PriorConfig)
    resamples: int = 1999
    level: float = 0.95
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.correction_factor < 1:
            raise ValueError("correction factor must be >= 1")
        if any(not 0 <= d <= 100 for d in self.efficacies):
            raise ValueError("efficacies must lie in [0, 100]")

    @classmethod
    def paper_scale(cls, **kw) -> "ScenarioConfig":
        return cls(**{"replicates": 2000, "chain": ChainConfig(), **kw})


@dataclass
class ReplicateRecord:
    efficacy: float
    replicate: int
    levels: dict
    prob_below_95: float
    denwood: str
    reduction_median: float
    hpd_lower: float
    hpd_upper: float
    fecr_estimate: float


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    records: list
    failures: dict

    def fractions(self) -> dict:
        """{method: {efficacy: {level: fraction}}} over successful replicates."""
        counts = defaultdict(lambda: defaultdict(lambda: dict.fromkeys(LEVELS, 0)))
        totals = defaultdict(int)
        for rec in self.records:
            totals[rec.efficacy] += 1
            for method, level in rec.levels.items():
                counts[method][rec.efficacy][level] += 1
        return {
            m: {d: {lv: counts[m][d][lv] / totals[d] for lv in LEVELS} for d in sorted(totals)}
            for m in METHODS
        }

    def mean_prob_below(self) -> dict:
        by = defaultdict(list)
        for rec in self.records:
            by[rec.efficacy].append(rec.prob_below_95)
        return {d: float(np.mean(v)) for d, v in sorted(by.items())}

    def denwood_counts(self) -> dict:
        by = defaultdict(lambda: defaultdict(int))
        for rec in self.records:
            by[rec.efficacy][rec.denwood] += 1
        return {d: dict(v) for d, v in sorted(by.items())}


def simulate_flock(cfg: ScenarioConfig, efficacy: float, rng: RngStream, flock_id: str = "sim") -> FlockData:
    """Draw one flock: gamma-distributed individual rates, Poisson true counts,
    and slide counts drawn as Poisson with mean count / f (not binomial)."""
    g = rng.generator
    n, f = cfg.n_animals, cfg.correction_factor
    mu_i = g.gamma(cfg.true_phi, cfg.true_mu / cfg.true_phi, n)
    y_pre = g.poisson(mu_i)
    raw_pre = g.poisson(y_pre / f)
    y_post = g.poisson(mu_i * (1.0 - efficacy / 100.0))
    raw_post = g.poisson(y_post / f)
    return FlockData(raw_pre, raw_post, f, flock_id=flock_id)


def _efficacy_key(efficacy: float) -> int:
    return int(round(efficacy * 1000))


def replicate_stream(cfg: ScenarioConfig, efficacy: float, replicate: int) -> RngStream:
    return RngStream(cfg.seed).child(_efficacy_key(efficacy), replicate)


def draw_flock(cfg: ScenarioConfig, efficacy: float, rng: RngStream, flock_id: str = "sim") -> FlockData:
    """Simulated flock with at least one egg on a pre-treatment slide.

    A flock without any has no defined FECRT, so it is redrawn from the same stream.
    """
    while True:
        data = simulate_flock(cfg, efficacy, rng, flock_id)
        if data.raw_pre.sum() > 0:
            return data


def run_replicate(cfg: ScenarioConfig, efficacy: float, replicate: int) -> ReplicateRecord:
    rng = replicate_stream(cfg, efficacy, replicate)
    data = draw_flock(cfg, efficacy, rng.child(0), flock_id=f"d{efficacy:g}-r{replicate}")
    sample = PairedEpgSample(data.epg_pre, data.epg_post)
    approx = fecr_approx_ci(sample, cfg.level)
    boot = fecr_bootstrap_ci(sample, rng.child(1), cfg.resamples, cfg.level)
    draws = run_chain(data, cfg.priors, cfg.chain, rng=rng.child(2))
    summary = summarize(draws, cfg.level)
    levels = {
        "fecrt_approx": classify_waavp(approx.estimate, approx.ci_lower).level,
        "fecrt_bootstrap": classify_waavp(boot.estimate, boot.ci_lower).level,
        "hierarchical": classify_hierarchical(summary).level,
    }
    return ReplicateRecord(
        efficacy=efficacy,
        replicate=replicate,
        levels=levels,
        prob_below_95=prob_reduction_below(draws, 95.0),
        denwood=classify_denwood(draws),
        reduction_median=summary.reduction.median,
        hpd_lower=summary.reduction.hpd_lower,
        hpd_upper=summary.reduction.hpd_upper,
        fecr_estimate=approx.estimate,
    )


def _safe_replicate(args):
    cfg, d, r = args
    try:
        return run_replicate(cfg, d, r)
    except ChainFailure as exc:
        return exc


def run_scenario(cfg: ScenarioConfig, progress=None) -> ScenarioResult:
    """Simulate and analyse ``cfg.replicates`` flocks for every efficacy.

    Each replicate owns a sub-stream keyed by (efficacy, replicate), so the
    result does not depend on worker count or completion order.
    """
    jobs = [(cfg, d, r) for d in cfg.efficacies for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outcomes = list(pool.map(_safe_replicate, jobs, chunksize=4))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(_safe_replicate(job))
            if progress is not None:
                progress(job[1], job[2])
    records, failures = [], defaultdict(int)
    for (_, d, r), out in zip(jobs, outcomes):
        if isinstance(out, ChainFailure):
            log.warning("efficacy %g replicate %d: %s", d, r, out)
            failures[d] += 1
        else:
            records.append(out)
    for d, k in failures.items():
        if k > MAX_FAILURE_FRACTION * cfg.replicates:
            raise ScenarioAborted(f"{k} of {cfg.replicates} chains failed at efficacy {d}")
    return ScenarioResult(cfg, records, dict(failures))


def hpd_coverage(cfg: ScenarioConfig, efficacy: float, replicates: int | None = None) -> int:
    """Number of simulated flocks whose HPD interval of the reduction covers ``efficacy``."""
    hits = 0
    for r in range(replicates or cfg.replicates):
        rng = replicate_stream(cfg, efficacy, r)
        data = draw_flock(cfg, efficacy, rng.child(0))
        summary = summarize(run_chain(data, cfg.priors, cfg.chain, rng=rng.child(2)), cfg.level)
        hits += summary.reduction.hpd_lower <= efficacy <= summary.reduction.hpd_upper
    return hits


def write_scenario_table(result: ScenarioResult, path) -> Path:
    path = Path(path)
    fr = result.fractions()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "efficacy", "fraction_present", "fraction_possible", "fraction_absent"])
        for m in METHODS:
            for d, row in fr[m].items():
                w.writerow([m, repr(d), repr(row[PRESENT]), repr(row[SUSPECTED]), repr(row[ABSENT])])
    return path


def write_replicate_dump(result: ScenarioResult, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["efficacy", "replicate", "prob_reduction_below_95", "denwood", "reduction_median",
                    "hpd_lower", "hpd_upper", "fecr_estimate", *(f"level_{m}" for m in METHODS)])
        for rec in result.records:
            w.writerow([repr(rec.efficacy), rec.replicate, repr(rec.prob_below_95), rec.denwood,
                        repr(rec.reduction_median), repr(rec.hpd_lower), repr(rec.hpd_upper),
                        repr(rec.fecr_estimate), *(rec.levels[m] for m in METHODS)])
    return path
