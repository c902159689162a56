"""Command line entry point: ``eggcount-kit analyze`` and ``eggcount-kit simulate``."""
from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import analyze_flock
from .distributions import RngStream
from .io import (
    POLICIES,
    SCHEMA,
    IngestionError,
    RunConfig,
    build_run_config,
    dump_json,
    load_flocks,
    read_config_file,
)
from .model import ChainConfig
from .simulation import (
    DEFAULT_EFFICACIES,
    METHODS,
    ScenarioAborted,
    ScenarioConfig,
    run_scenario,
    write_replicate_dump,
    write_scenario_table,
)

log = logging.getLogger("eggcount_kit")


def _error(kind: str, message: str, **extra) -> int:
    print(json.dumps({"schema": SCHEMA, "error": kind, "message": message, **extra}), file=sys.stderr)
    return 2 if kind == "usage" else 1


def _add_prior_and_chain_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    for name in ("a-phi", "b-phi", "a-mu", "b-mu", "a-delta", "b-delta"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--n-samples", type=int)
    g.add_argument("--burn-in", type=int)
    g.add_argument("--thin", type=int)
    g.add_argument("--phi-step", type=float)
    g.add_argument("--seed", type=int, help="random seed; generated and printed when omitted")
    g.add_argument("--config", type=Path, help="flat key = value file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eggcount-kit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyse flocks from a table of per-animal epg")
    a.add_argument("input", type=Path)
    a.add_argument("-o", "--output", type=Path, default=Path("summary.json"))
    a.add_argument("--draws-dir", type=Path, help="write thinned draws per flock as CSV here")
    a.add_argument("--resamples", type=int)
    a.add_argument("--policy", choices=POLICIES)
    a.add_argument("--raw-counts", action="store_true", default=None,
                   help="pre_epg/post_epg columns hold slide counts, not epg")
    a.add_argument("--correction-factor", type=float, help="default when the column is absent or empty")
    a.add_argument("--sensitivity-sweep", action="store_true", default=None,
                   help="repeat the model under four priors for delta")
    a.add_argument("--level", type=float)
    _add_prior_and_chain_flags(a)

    s = sub.add_parser("simulate", help="run the simulated comparison of FECRT and the hierarchical model")
    s.add_argument("--efficacy", type=float, action="append", help="repeatable; default 85, 87, ..., 99")
    s.add_argument("--replicates", type=int)
    s.add_argument("--n-animals", type=int, default=15)
    s.add_argument("--true-mu", type=float, default=500.0)
    s.add_argument("--true-phi", type=float, default=0.9)
    s.add_argument("--correction-factor", type=float, default=50.0)
    s.add_argument("--resamples", type=int, default=1999)
    s.add_argument("--paper-scale", action="store_true", help="2000 replicates and full-length chains")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", type=Path, default=Path("simulation_out"))
    _add_prior_and_chain_flags(s)
    return parser


def _flag_overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


_MODEL_FLAGS = ("a_phi", "b_phi", "a_mu", "b_mu", "a_delta", "b_delta", "n_samples", "burn_in", "thin",
                "phi_step", "seed")


def _resolve_seed(overrides: dict) -> int:
    if overrides.get("seed") is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}", file=sys.stderr)
        return seed
    return int(overrides["seed"])


def analyze_command(args) -> int:
    overrides = read_config_file(args.config) if args.config else {}
    overrides.update(_flag_overrides(args, _MODEL_FLAGS + ("resamples", "policy", "raw_counts", "correction_factor",
                                                         "sensitivity_sweep", "level")))
    overrides["seed"] = _resolve_seed(overrides)
    cfg = build_run_config(overrides)
    flocks, report = load_flocks(args.input, cfg.policy, cfg.raw_counts, cfg.correction_factor)
    if args.draws_dir is not None:
        args.draws_dir.mkdir(parents=True, exist_ok=True)
    root = RngStream(cfg.chain.seed)
    results = []
    for k, data in enumerate(flocks):
        log.info("flock %s: %d animals", data.flock_id, data.n)
        results.append(analyze_flock(data, cfg, root.child(k), args.draws_dir))
    document = {
        "schema": SCHEMA,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "input": args.input.name,
        "config": cfg.to_dict(),
        "validation": report.to_dict(),
        "flocks": results,
    }
    dump_json(document, args.output)
    for r in results:
        h = r["hierarchical"]["reduction"]
        c = r["classical"]
        fecr = f"{c['estimate']:.1f}" if "estimate" in c else "n/a"
        print(f"{r['flock_id']}: FECR {fecr}  model {h['median']:.1f} [{h['hpd_lower']:.1f}, {h['hpd_upper']:.1f}]"
              f"  {r['hierarchical']['verdict']['level']}")
    return 0


def simulate_command(args) -> int:
    overrides = read_config_file(args.config) if args.config else {}
    overrides.update(_flag_overrides(args, _MODEL_FLAGS))
    seed = _resolve_seed(overrides)
    overrides.pop("seed", None)
    base_chain = ChainConfig() if args.paper_scale else ChainConfig.desk()
    run = build_run_config(overrides, base=RunConfig(chain=base_chain))
    replicates = args.replicates or (2000 if args.paper_scale else 200)
    cfg = ScenarioConfig(
        n_animals=args.n_animals,
        true_mu=args.true_mu,
        true_phi=args.true_phi,
        correction_factor=args.correction_factor,
        efficacies=tuple(args.efficacy) if args.efficacy else DEFAULT_EFFICACIES,
        replicates=replicates,
        chain=replace(run.chain, seed=seed),
        priors=run.priors,
        resamples=args.resamples,
        seed=seed,
        workers=args.workers,
    )
    result = run_scenario(cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_scenario_table(result, args.out_dir / "scenario_table.csv")
    write_replicate_dump(result, args.out_dir / "replicates.csv")
    dump_json({"schema": SCHEMA, "seed": seed, "config": asdict(cfg), "failures": result.failures,
               "mean_prob_below_95": result.mean_prob_below(), "denwood": result.denwood_counts()},
              args.out_dir / "scenario.json")
    fractions = result.fractions()
    print(f"seed {seed}; {replicates} replicates per efficacy")
    print(f"{'efficacy':>8}  " + "  ".join(f"{m:>24}" for m in METHODS))
    for d in sorted(fractions["hierarchical"]):
        cells = []
        for m in METHODS:
            f = fractions[m][d]
            cells.append(f"{f['present']:.2f}/{f['suspected']:.2f}/{f['absent']:.2f}".rjust(24))
        print(f"{d:>8g}  " + "  ".join(cells))
    print("(fractions present/possible/absent)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = analyze_command if args.command == "analyze" else simulate_command
    try:
        return handler(args)
    except IngestionError as exc:
        return _error("ingestion", str(exc), rows=exc.rows)
    except ScenarioAborted as exc:
        return _error("scenario-aborted", str(exc))
    except (ValueError, KeyError) as exc:
        return _error("invalid-input", str(exc))
    except Exception as exc:  # noqa: BLE001 - every failure leaves a machine-readable record
        return _error(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
