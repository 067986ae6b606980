#!/usr/bin/env python3
"""Null calibration and power of the MMD and HSIC permutation tests."""

import argparse

import numpy as np

from causelab.kernels import hsic_test, mmd


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--m", type=int, default=50)
    parser.add_argument("--perms", type=int, default=199)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    null_mmd = alt_mmd = null_hsic = alt_hsic = 0
    for t in range(args.trials):
        rng = np.random.default_rng(args.seed * 100003 + t)
        xs = rng.normal(size=(args.m, 1))
        ys = rng.normal(size=(args.m, 1))
        shifted = rng.normal(1.0, 1.0, size=(args.m, 1))
        null_mmd += mmd(None, xs, ys, perms=args.perms, seed=t).p_value <= args.alpha
        alt_mmd += mmd(None, xs, shifted, perms=args.perms, seed=t).p_value <= args.alpha
        u = rng.uniform(-1, 1, size=args.m)
        null_hsic += (
            hsic_test(None, None, u, rng.normal(size=args.m), perms=args.perms, seed=t).p_value
            <= args.alpha
        )
        quad = u**2 + 0.1 * rng.normal(size=args.m)
        alt_hsic += (
            hsic_test(None, None, u, quad, perms=args.perms, seed=t).p_value <= args.alpha
        )
    k = args.trials
    print(f"trials={k} m={args.m} perms={args.perms} alpha={args.alpha}")
    print(f"  mmd  null rejection rate: {null_mmd / k:.3f}   power (mean shift 1): {alt_mmd / k:.3f}")
    print(f"  hsic null rejection rate: {null_hsic / k:.3f}   power (quadratic):    {alt_hsic / k:.3f}")


if __name__ == "__main__":
    main()
