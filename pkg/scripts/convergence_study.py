"""Empirical convergence of lattice prices to continuous-time closed forms.

The linear claim is exact at every depth (the increment field is constant),
so the interesting rows are the nonlinear claims, which show the expected
first-order decay in the step count.  Writes a CSV next to the table when
--out is given.
"""

import argparse
import math

import numpy as np

import glattice as gl


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def closed_forms(horizon):
    gamma, kappa = 1.0, 0.5
    return [
        ("entropic:1 / brownian", gl.entropic(gamma, radius=4.0), lambda x: x,
         -gamma * horizon / 2.0),
        ("abs:0.5 / brownian", gl.abs_scaled(kappa), lambda x: x, -kappa * horizon),
        ("entropic:1 / abs_brownian", gl.entropic(gamma, radius=4.0), np.abs,
         -(math.log(2.0) + gamma**2 * horizon / 2.0
           + math.log(normal_cdf(-gamma * math.sqrt(horizon)))) / gamma),
        ("zero / abs_brownian", gl.zero(), np.abs, math.sqrt(2.0 * horizon / math.pi)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--horizon", type=float, default=1.0)
    parser.add_argument("--steps", type=int, nargs="+",
                        default=[64, 128, 256, 512, 1024, 2048])
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    rows = []
    print(f"{'fixture':<28} " + " ".join(f"N={n:<8}" for n in args.steps) + " rate")
    for label, driver, payoff, reference in closed_forms(args.horizon):
        errors = []
        for steps in args.steps:
            lattice = gl.build_grid(args.horizon, steps)
            value = float(gl.utility(driver, gl.terminal_field(lattice, payoff), 0)[0][0])
            errors.append(abs(value - reference))
        rate = float("nan")
        if errors[0] > 1e-13 and errors[-1] > 1e-13:
            rate = math.log(errors[0] / errors[-1]) / math.log(args.steps[-1] / args.steps[0])
        print(f"{label:<28} " + " ".join(f"{e:<10.2e}" for e in errors) + f" {rate:.2f}")
        rows.append((label, errors, rate))

    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write("fixture," + ",".join(f"err_N{n}" for n in args.steps) + ",rate\n")
            for label, errors, rate in rows:
                handle.write(label.replace(",", ";") + ","
                             + ",".join(repr(e) for e in errors) + f",{rate!r}\n")
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
