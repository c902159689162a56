"""Reading flock tables, run configuration and serialising results."""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import ChainConfig, FlockData, PriorConfig

log = logging.getLogger(__name__)

SCHEMA = "eggcount-kit/1"
DEFAULT_CORRECTION_FACTOR = 50.0
POLICIES = ("strict", "coerce-to-zero", "warn")
REQUIRED_COLUMNS = ("animal_id", "pre_epg", "post_epg")
MISSING = {"", "na", "nan", "null", "none", "."}


class IngestionError(ValueError):
    """The input table cannot be turned into flock data."""

    def __init__(self, message: str, rows=()):
        super().__init__(message)
        self.rows = list(rows)


@dataclass
class ValidationEvent:
    row: int  # line number in the file, header is line 1
    flock_id: str
    animal_id: str
    column: str
    value: str
    action: str  # excluded | coerced-to-zero | rounded | rejected
    message: str


@dataclass
class ValidationReport:
    policy: str
    rows_read: int = 0
    rows_used: int = 0
    excluded_missing_post: int = 0
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    priors: PriorConfig = PriorConfig()
    chain: ChainConfig = ChainConfig()
    resamples: int = 1999
    level: float = 0.95
    reduction_threshold: float = 95.0
    lower_threshold: float = 90.0
    denwood_upper: float = 0.975
    denwood_lower: float = 0.025
    policy: str = "warn"
    raw_counts: bool = False
    correction_factor: float = DEFAULT_CORRECTION_FACTOR
    sensitivity_sweep: bool = False

    def __post_init__(self):
        for name in ("reduction_threshold", "lower_threshold"):
            if not 0 < getattr(self, name) < 100:
                raise ValueError(f"{name} must lie in (0, 100)")
        for name in ("denwood_upper", "denwood_lower", "level"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.resamples < 1:
            raise ValueError("resamples must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


# flat config keys -> (section, field)
_CONFIG_KEYS = {
    **{f.name: ("priors", f.name) for f in fields(PriorConfig)},
    "n_samples": ("chain", "n_samples"),
    "burn_in": ("chain", "burn_in"),
    "thin": ("chain", "thin"),
    "seed": ("chain", "seed"),
    "phi_step": ("chain", "phi_step_s"),
    **{f.name: ("run", f.name) for f in fields(RunConfig) if f.name not in ("priors", "chain")},
}


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; dashes and underscores are interchangeable."""
    parser = configparser.ConfigParser()
    parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"))
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown configuration key {key!r}")
        out[key] = value
    return out


def build_run_config(overrides: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply flat key/value overrides (strings or typed values) to a RunConfig."""
    base = base or RunConfig()
    priors, chain, run = {}, {}, {}
    for key, value in overrides.items():
        if value is None:
            continue
        key = key.replace("-", "_")
        section, name = _CONFIG_KEYS[key]
        target = {"priors": (priors, base.priors), "chain": (chain, base.chain), "run": (run, base)}[section]
        current = getattr(target[1], name)
        target[0][name] = _coerce(value, current) if isinstance(value, str) else value
    return replace(base, priors=replace(base.priors, **priors), chain=replace(base.chain, **chain), **run)


# ---------------------------------------------------------------------------
# input tables
# ---------------------------------------------------------------------------

def _sniff_delimiter(text: str) -> str:
    header = text.split("\n", 1)[0]
    return "\t" if header.count("\t") > header.count(",") else ","


def _parse_number(raw: str, line: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise IngestionError(f"line {line}: {column} is not a number: {raw!r}", [line]) from None
    if not math.isfinite(value):
        raise IngestionError(f"line {line}: {column} is not finite", [line])
    if value < 0:
        raise IngestionError(f"line {line}: negative {column} {raw!r}", [line])
    return value


def load_flocks(path, policy: str = "warn", raw_counts: bool = False,
                default_correction_factor: float = DEFAULT_CORRECTION_FACTOR) -> tuple[list, ValidationReport]:
    """Read a delimited table of per-animal epg into one FlockData per flock.

    Columns: animal_id, pre_epg, post_epg, and optionally correction_factor
    and flock_id. Rows without a post-treatment value are excluded. Each epg
    is divided by its correction factor to recover the slide count; values
    that are not a multiple of the factor are handled by ``policy``:
    ``strict`` rejects the file, ``coerce-to-zero`` sets the count to 0, and
    ``warn`` rounds to the nearest count. With ``raw_counts`` the pre/post
    columns already hold slide counts.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text), delimiter=_sniff_delimiter(text))
    columns = [c.strip() for c in (reader.fieldnames or [])]
    reader.fieldnames = columns
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise IngestionError(f"missing required column(s): {', '.join(missing)}")

    report = ValidationReport(policy=policy)
    flocks: OrderedDict[str, dict] = OrderedDict()
    rejected = []
    for line, row in enumerate(reader, start=2):
        report.rows_read += 1
        animal = (row.get("animal_id") or "").strip()
        flock_id = (row.get("flock_id") or "").strip() or "flock"
        f_raw = (row.get("correction_factor") or "").strip()
        f = default_correction_factor if f_raw.lower() in MISSING else _parse_number(f_raw, line, "correction_factor")
        if f < 1:
            raise IngestionError(f"line {line}: correction factor {f} is below 1", [line])
        pre_raw = (row.get("pre_epg") or "").strip()
        post_raw = (row.get("post_epg") or "").strip()
        if pre_raw.lower() in MISSING:
            raise IngestionError(f"line {line}: pre_epg is missing", [line])
        pre = _parse_number(pre_raw, line, "pre_epg")
        if post_raw.lower() in MISSING:
            report.excluded_missing_post += 1
            report.events.append(ValidationEvent(line, flock_id, animal, "post_epg", post_raw, "excluded",
                                                 "missing post-treatment value"))
            continue
        post = _parse_number(post_raw, line, "post_epg")

        counts = []
        for column, value in (("pre_epg", pre), ("post_epg", post)):
            count = value if raw_counts else value / f
            nearest = round(count)
            if abs(count - nearest) > 1e-9:
                unit = "count" if raw_counts else f"multiple of correction factor {f:g}"
                msg = f"{column} {value:g} is not an integer {unit}"
                if policy == "strict":
                    rejected.append(line)
                    report.events.append(ValidationEvent(line, flock_id, animal, column, str(value), "rejected", msg))
                    nearest = 0
                elif policy == "coerce-to-zero":
                    report.events.append(ValidationEvent(line, flock_id, animal, column, str(value),
                                                         "coerced-to-zero", msg))
                    log.warning("line %d: %s; set to 0", line, msg)
                    nearest = 0
                else:
                    report.events.append(ValidationEvent(line, flock_id, animal, column, str(value), "rounded", msg))
                    log.warning("line %d: %s; rounded to %d", line, msg, nearest)
            counts.append(int(nearest))
        entry = flocks.setdefault(flock_id, {"pre": [], "post": [], "f": [], "ids": []})
        entry["pre"].append(counts[0])
        entry["post"].append(counts[1])
        entry["f"].append(f)
        entry["ids"].append(animal or str(len(entry["ids"]) + 1))
        report.rows_used += 1

    if rejected:
        raise IngestionError(f"epg values not compatible with the correction factor on lines {rejected}", rejected)
    out = [FlockData(np.array(v["pre"]), np.array(v["post"]), np.array(v["f"]), flock_id=k, animal_ids=tuple(v["ids"]))
           for k, v in flocks.items()]
    if not out:
        raise IngestionError("no usable rows")
    return out, report


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(document: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(document), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def canonical_json(document: dict) -> str:
    """Serialised document without the timestamp, for reproducibility checks."""
    doc = {k: v for k, v in document.items() if k != "generated_at"}
    return json.dumps(_jsonable(doc), sort_keys=True, allow_nan=False)


def write_draws(draws, path) -> Path:
    """Thinned draws as CSV (iteration, phi, mu, delta) at full precision."""
    path = Path(path)
    iterations = draws.burn_in + draws.thin * np.arange(1, len(draws) + 1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "phi", "mu", "delta"])
        for it, phi, mu, delta in zip(iterations, draws.phi, draws.mu, draws.delta):
            w.writerow([int(it), repr(float(phi)), repr(float(mu)), repr(float(delta))])
    return path
