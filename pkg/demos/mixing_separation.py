"""Exact mixing times of entropy-cut and uniform-cut MH on a symmetric tree.

Builds the full transition matrix of both kernels over the tree's leaves and
prints the worst-start TV curve for each, plus the step at which it drops
below each threshold.

    python3 demos/mixing_separation.py --depth 64 --branches 2 32 48
"""

import argparse

from powersample import (EntropyCut, SymmetricTreeSpec, UniformCut, build_symmetric_tree,
                         exact_mh_kernel, low_temperature_model, mixing_time)
from powersample.oracle import tv_curve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=64)
    ap.add_argument("--branches", type=int, nargs="+", default=[2, 32, 48])
    ap.add_argument("--eta", type=float, default=0.0)
    ap.add_argument("--beta", type=float, default=4.0)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()

    spec = SymmetricTreeSpec(args.depth, tuple(args.branches), (2,) * len(args.branches),
                             args.eta)
    tree, model = build_symmetric_tree(spec, 0)
    prop = low_temperature_model(model, spec.alpha)
    kernels = {
        "entropy-cut": exact_mh_kernel(model, EntropyCut(args.beta), prop, spec.alpha, spec.depth),
        "uniform-cut": exact_mh_kernel(model, UniformCut(), prop, spec.alpha, spec.depth),
    }
    print(f"tree: T={spec.depth}, branch depths {spec.branch_depths}, "
          f"{len(tree.leaves)} leaves\n")

    curves = {name: tv_curve(K, args.steps) for name, K in kernels.items()}
    print(f"{'n':>3}  " + "  ".join(f"{name:>12}" for name in curves))
    for n in range(args.steps + 1):
        print(f"{n:>3}  " + "  ".join(f"{c[n]:>12.5f}" for c in curves.values()))

    print()
    for eps in (0.25, 0.1, 0.01):
        ec = mixing_time(kernels["entropy-cut"], eps).steps
        un = mixing_time(kernels["uniform-cut"], eps).steps
        print(f"tau({eps}): entropy-cut {ec:>4}   uniform-cut {un:>4}   ratio {un / ec:.1f}")


if __name__ == "__main__":
    main()
