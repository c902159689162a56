"""Which proposal family the KL rule picks for the mean-egg-count update.

Samples (b, c) log-uniformly for a set of shape values a and prints the share
won by each family, plus a finer map against the dimensionless ratio b*c/a^2.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from eggcount_kit.proposals import build_mu_proposal

FAMILIES = ("inverse_gamma", "lognormal", "gamma")


@dataclass
class MapConfig:
    points: int = 200
    seed: int = 505
    log_b: tuple = (-4.0, -2.0)
    log_c: tuple = (0.0, 4.0)
    shapes: tuple = (0.3, 0.5, 1.0, 3.0, 5.0, 10.0, 50.0)


def family_shares(cfg: MapConfig) -> dict:
    g = np.random.default_rng(cfg.seed)
    b = 10 ** g.uniform(*cfg.log_b, cfg.points)
    c = 10 ** g.uniform(*cfg.log_c, cfg.points)
    out = {}
    for a in cfg.shapes:
        picks = [build_mu_proposal(a, float(bb), float(cc)).family for bb, cc in zip(b, c)]
        out[a] = {f: picks.count(f) / cfg.points for f in FAMILIES}
    return out


def ratio_map(a: float, ratios: np.ndarray) -> list:
    # only b*c/a^2 matters once x is rescaled to the mode; fix b and vary c
    b = 1e-3
    return [build_mu_proposal(a, b, float(r * a * a / b)).family for r in ratios]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=MapConfig.points)
    p.add_argument("--seed", type=int, default=MapConfig.seed)
    args = p.parse_args()
    cfg = MapConfig(points=args.points, seed=args.seed)
    for a, shares in family_shares(cfg).items():
        print(f"a={a:<5g} " + "  ".join(f"{f} {shares[f]:.2f}" for f in FAMILIES))
    print()
    ratios = np.logspace(-4, 4, 17)
    print("b*c/a^2 " + " ".join(f"{r:8.0e}" for r in ratios))
    for a in cfg.shapes:
        print(f"a={a:<5g} " + " ".join(f"{f[:8]:>8}" for f in ratio_map(a, ratios)))


if __name__ == "__main__":
    main()
