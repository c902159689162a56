"""Central 90% prior intervals for the dispersion and mean egg count."""
import argparse

from eggcount_kit.distributions import gamma_central_interval
from eggcount_kit.model import PriorConfig


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--mass", type=float, default=0.9)
    mass = p.parse_args().mass
    priors = PriorConfig()
    for name, shape, rate in (("phi", priors.a_phi, priors.b_phi), ("mu", priors.a_mu, priors.b_mu)):
        lo, hi = gamma_central_interval(shape, rate, mass)
        print(f"{name:>4} ~ Gamma({shape:g}, {rate:g}): {mass:.0%} central interval ({lo:.4g}, {hi:.4g})")


if __name__ == "__main__":
    main()
