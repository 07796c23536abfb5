#!/usr/bin/env python3
"""Paired significance tests over benchmark folds.

Reads a report.csv produced by `ssvep bench` and compares two methods'
per-fold accuracies with a paired t-test and a Wilcoxon signed-rank test
(normal approximation). Standard library only.

Usage:
    significance.py REPORT_CSV METHOD_A METHOD_B [--tw TW] [--channels SET]
                    [--n-train N] [--metric accuracy|itr_bits_per_min]
"""

import argparse
import csv
import math
import sys


def student_t_sf(t, df):
    """Two-sided survival probability of Student's t via the incomplete
    beta function (continued fraction)."""
    if df <= 0:
        return float("nan")
    x = df / (df + t * t)
    a, b = df / 2.0, 0.5

    def betacf(a, b, x):
        MAXIT, EPS, FPMIN = 200, 3e-12, 1e-300
        qab, qap, qam = a + b, a + 1.0, a - 1.0
        c, d = 1.0, 1.0 - qab * x / qap
        if abs(d) < FPMIN:
            d = FPMIN
        d = 1.0 / d
        h = d
        for m in range(1, MAXIT + 1):
            m2 = 2 * m
            aa = m * (b - m) * x / ((qam + m2) * (a + m2))
            d = 1.0 + aa * d
            if abs(d) < FPMIN:
                d = FPMIN
            c = 1.0 + aa / c
            if abs(c) < FPMIN:
                c = FPMIN
            d = 1.0 / d
            h *= d * c
            aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
            d = 1.0 + aa * d
            if abs(d) < FPMIN:
                d = FPMIN
            c = 1.0 + aa / c
            if abs(c) < FPMIN:
                c = FPMIN
            d = 1.0 / d
            h *= d * c
            if abs(d * c - 1.0) < EPS:
                break
        return h

    ln_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    if x <= 0.0:
        ib = 0.0
    elif x >= 1.0:
        ib = 1.0
    else:
        front = math.exp(a * math.log(x) + b * math.log(1.0 - x) - ln_beta)
        if x < (a + 1.0) / (a + b + 2.0):
            ib = front * betacf(a, b, x) / a
        else:
            ib = 1.0 - front * betacf(b, a, 1.0 - x) / b
    return ib  # == P(|T| > |t|) for the t distribution


def paired_t(xs, ys):
    diffs = [x - y for x, y in zip(xs, ys)]
    n = len(diffs)
    if n < 2:
        return float("nan"), float("nan")
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return float("inf") if mean != 0 else 0.0, 1.0 if mean == 0 else 0.0
    t = mean / math.sqrt(var / n)
    return t, student_t_sf(t, n - 1)


def wilcoxon(xs, ys):
    diffs = [x - y for x, y in zip(xs, ys) if x != y]
    n = len(diffs)
    if n == 0:
        return float("nan"), 1.0
    ranked = sorted((abs(d), d > 0) for d in diffs)
    # Average ranks over ties.
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and ranked[j + 1][0] == ranked[i][0]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[k] = avg
        i = j + 1
    w_plus = sum(r for r, (_, pos) in zip(ranks, ranked) if pos)
    mean = n * (n + 1) / 4.0
    sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0)
    if sd == 0.0:
        return w_plus, 1.0
    z = (w_plus - mean) / sd
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, p


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("report")
    ap.add_argument("method_a")
    ap.add_argument("method_b")
    ap.add_argument("--tw", type=float, default=None)
    ap.add_argument("--channels", default=None)
    ap.add_argument("--n-train", type=int, default=None)
    ap.add_argument("--metric", default="accuracy",
                    choices=["accuracy", "itr_bits_per_min"])
    args = ap.parse_args()

    rows = {}
    with open(args.report, newline="") as fh:
        for row in csv.DictReader(fh):
            if args.tw is not None and float(row["tw_s"]) != args.tw:
                continue
            if args.channels is not None and row["channels"] != args.channels:
                continue
            if args.n_train is not None and int(row["n_train"]) != args.n_train:
                continue
            key = (row["tw_s"], row["channels"], row["n_train"], row["test_block"])
            rows.setdefault(key, {})[row["method"]] = float(row[args.metric])

    xs, ys = [], []
    for cell in sorted(rows):
        pair = rows[cell]
        if args.method_a in pair and args.method_b in pair:
            xs.append(pair[args.method_a])
            ys.append(pair[args.method_b])
    if not xs:
        sys.exit(f"no paired folds for {args.method_a} vs {args.method_b}")

    mean_a = sum(xs) / len(xs)
    mean_b = sum(ys) / len(ys)
    t, p_t = paired_t(xs, ys)
    z, p_w = wilcoxon(xs, ys)
    print(f"pairs: {len(xs)}")
    print(f"{args.method_a}: mean {args.metric} = {mean_a:.4f}")
    print(f"{args.method_b}: mean {args.metric} = {mean_b:.4f}")
    print(f"paired t-test:  t = {t:.4f}, p = {p_t:.4g}")
    if math.isnan(z):
        print("wilcoxon:       all pairs tied, p = 1")
    else:
        print(f"wilcoxon:       z = {z:.4f}, p = {p_w:.4g} (normal approximation)")


if __name__ == "__main__":
    main()
