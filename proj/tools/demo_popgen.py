#!/usr/bin/env python3
"""Synthetic population-genetics-like simulator for the bundled demo data.

Not a coalescent model: summaries are smooth noisy functions of the
parameters, laid out like a diyabc reference-table text export
(whitespace-separated, a Scenario column, then parameters, then statistics).

  demo_popgen.py generate OUTDIR            write the bundled tables
  demo_popgen.py simulate PARAMS SUMMARIES  external-simulator mode: read
      `id,param:...` CSV, write `id,stat:...` CSV (--scenario, --seed)
"""

import argparse
import csv
import math
import os
import sys

import numpy as np

PARAMS = ["N1", "N2", "N3", "N4", "t2", "t3", "t4", "ra"]
PAIRS = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
STATS = (
    [f"HW_{i}" for i in range(1, 5)]
    + [f"FST_{a}_{b}" for a, b in PAIRS]
    + [f"NEI_{a}_{b}" for a, b in PAIRS]
    + ["AML_4_1_2"]
    + [f"HB_1_{b}" for b in (2, 3, 4)]
)
MU = 2.5e-5


def draw_params(rng, n):
    N = rng.integers(100, 10001, size=(n, 4))
    t2 = rng.integers(100, 999, size=n)
    t3 = np.array([rng.integers(max(101, a + 1), 1000) for a in t2])
    t4 = np.array([rng.integers(max(103, b + 1), 1001) for b in t3])
    ra = rng.uniform(0.05, 0.95, size=n)
    return np.column_stack([N, t2, t3, t4, ra]).astype(float)


def split_time(theta, scenario, a, b):
    t = {2: theta[4], 3: theta[5], 4: theta[6]}
    if scenario == 1:
        # cascade: population i split from i - 1
        return t[max(a, b)] if abs(a - b) == 1 else max(t[max(a, b)], t[min(a, b) + 1])
    # independent: every population split from population 1
    return t[max(a, b)] if min(a, b) == 1 else max(t[a], t[b])


def summaries(theta, scenario, rng):
    N = theta[:4]
    het = 4.0 * N * MU / (1.0 + 4.0 * N * MU)
    out = list(het + rng.normal(0.0, 0.004, size=4))
    fst, nei, hb = [], [], {}
    for a, b in PAIRS:
        t = split_time(theta, scenario, a, b)
        ne = 0.5 * (N[a - 1] + N[b - 1])
        f = 1.0 - math.exp(-t / (2.0 * ne))
        fst.append(f + rng.normal(0.0, 0.005))
        nei.append(-math.log(max(1.0 - f, 1e-9)) * (1.0 + 0.1 * math.log10(t)) + rng.normal(0.0, 0.005))
        if a == 1:
            hb[b] = 0.5 * (het[0] + het[b - 1]) * (1.0 + f) + rng.normal(0.0, 0.004)
    out += fst + nei
    out.append(theta[7] + rng.normal(0.0, 0.05))
    out += [hb[b] for b in (2, 3, 4)]
    return out


def fmt(x):
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def write_table(path, scenario, theta, stats):
    with open(path, "w") as f:
        f.write(" ".join(["Scenario"] + PARAMS + STATS) + "\n")
        for p, s in zip(theta, stats):
            f.write(" ".join([str(scenario)] + [fmt(v) for v in p] + [f"{v:.6f}" for v in s]) + "\n")


def write_obs(path, stats):
    with open(path, "w") as f:
        f.write(" ".join(STATS) + "\n")
        f.write(" ".join(f"{v:.6f}" for v in stats) + "\n")


def generate(outdir, n, seed):
    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    for scenario in (1, 2):
        theta = draw_params(rng, n)
        stats = [summaries(t, scenario, rng) for t in theta]
        write_table(os.path.join(outdir, f"reftable_scenario{scenario}.txt"), scenario, theta, stats)
    # two "observed" datasets sharing one truth drawn under scenario 2
    truth = draw_params(rng, 1)[0]
    write_obs(os.path.join(outdir, "dataset1.txt"), summaries(truth, 2, rng))
    write_obs(os.path.join(outdir, "dataset2.txt"), summaries(truth, 2, rng))


def simulate(params_path, out_path, scenario, seed):
    with open(params_path) as f:
        rows = list(csv.DictReader(f))
    rng = np.random.default_rng(seed)
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id"] + [f"stat:{s}" for s in STATS])
        for row in rows:
            theta = np.array([float(row[f"param:{p}"]) for p in PARAMS])
            w.writerow([row["id"]] + [f"{v:.6f}" for v in summaries(theta, scenario, rng)])


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)
    g = sub.add_parser("generate")
    g.add_argument("outdir")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--seed", type=int, default=20240601)
    s = sub.add_parser("simulate")
    s.add_argument("params")
    s.add_argument("summaries")
    s.add_argument("--scenario", type=int, default=2)
    s.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    if args.cmd == "generate":
        generate(args.outdir, args.n, args.seed)
    else:
        simulate(args.params, args.summaries, args.scenario, args.seed)


if __name__ == "__main__":
    main(sys.argv[1:])
