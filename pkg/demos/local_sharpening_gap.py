"""Where the low-temperature sampler goes wrong, on a two-token toy model.

First token ``a`` leads to a single forced continuation; ``b`` fans out over
N equally likely continuations.  Raising whole-sequence probabilities to a
power rewards ``a``'s one concentrated path, but sharpening token by token
cannot see past the first step and keeps most mass on ``b``.

    python3 demos/local_sharpening_gap.py
"""

import argparse

from powersample import (enumerate_power_distribution, exact_low_temperature_distribution,
                         prop_a1_construct, tv_distance)
from powersample.oracle import prop_a1_closed_forms


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=2.0)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.5, 0.2, 0.1, 0.05])
    args = ap.parse_args()

    print(f"{'eps':>6} {'R':>4} {'N':>7} {'P_pow(a)':>10} {'P_low(a)':>10} {'TV':>8}")
    for eps in args.eps:
        model = prop_a1_construct(args.alpha, eps)
        R, N = model.metadata["R"], model.metadata["N"]
        power = enumerate_power_distribution(model, 1, args.alpha)
        low = exact_low_temperature_distribution(model, 1, args.alpha)
        pi_a, phi_a = prop_a1_closed_forms(R, N, args.alpha)
        assert abs(power.event(lambda x: x[0] == 0) - pi_a) < 1e-12
        print(f"{eps:>6} {R:>4} {N:>7} {pi_a:>10.4f} {phi_a:>10.4f} "
              f"{tv_distance(power, low):>8.4f}")


if __name__ == "__main__":
    main()
