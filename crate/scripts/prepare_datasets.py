#!/usr/bin/env python3
"""Convert the bundled benchmark datasets into the loader's CSV + manifest format.

Sources (all obtainable from PyPI without network access to UCI):

* Iris      -- scikit-learn's bundled ``iris.csv``.
* Cancer1   -- MASS ``biopsy`` (Wisconsin breast cancer, 699 x 9), shipped in
               the ``pydataset`` resources archive. The 16 missing ``V6`` values
               are replaced by the column mean of the observed values.
* Glass1    -- KEEL glass data from ``keel-ds``. KEEL only ships one-vs-rest
               binarizations; the six-class labels are recovered by joining
               glass0/1/4/5/6 on the feature rows, rows positive in none of them
               being class 2 (vehicle float). The recovered class counts match
               the UCI distribution 70/76/17/13/9/29.

Output CSV: header ``f1..fD,label``; labels are integers 0..K-1.
Manifest: ``key = value`` lines (name, D, K, M, hidden_nodes_override).

Usage::

    python3 scripts/prepare_datasets.py --iris IRIS_CSV --biopsy BIOPSY_CSV \
        --keel-raw KEEL_RAW_DIR --out crates/core/data
"""

import argparse
import csv
import os


def write(out_dir, name, rows, d, k, hidden_override=None):
    path = os.path.join(out_dir, f"{name.lower()}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i + 1}" for i in range(d)] + ["label"])
        for feats, label in rows:
            assert len(feats) == d and 0 <= label < k
            w.writerow([repr(float(x)) for x in feats] + [label])
    with open(os.path.join(out_dir, f"{name.lower()}.manifest"), "w") as fh:
        fh.write(f"name = {name}\n")
        fh.write(f"D = {d}\n")
        fh.write(f"K = {k}\n")
        fh.write(f"M = {len(rows)}\n")
        if hidden_override is not None:
            fh.write(f"hidden_nodes_override = {hidden_override}\n")
    print(f"{name}: M={len(rows)} D={d} K={k}")


def iris(path):
    rows = []
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        for r in reader:
            rows.append(([float(x) for x in r[:4]], int(r[4])))
    return rows


def biopsy(path):
    raw = []
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        for r in reader:
            feats = [None if x == "NA" else float(x) for x in r[2:11]]
            raw.append((feats, 0 if r[11] == "benign" else 1))
    means = []
    for j in range(9):
        vals = [f[j] for f, _ in raw if f[j] is not None]
        means.append(sum(vals) / len(vals))
    return [([means[j] if f[j] is None else f[j] for j in range(9)], y) for f, y in raw]


def glass(raw_dir):
    def read(name):
        out = []
        with open(os.path.join(raw_dir, name + ".dat")) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("@"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                out.append((tuple(parts[:-1]), parts[-1] == "positive"))
        return out

    base = read("glass0")
    labels = {}
    for name, cls in [("glass0", 0), ("glass1", 1), ("glass4", 3), ("glass5", 4), ("glass6", 5)]:
        for key, pos in read(name):
            if pos:
                labels[key] = cls
    return [([float(x) for x in key], labels.get(key, 2)) for key, _ in base]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iris", required=True)
    ap.add_argument("--biopsy", required=True)
    ap.add_argument("--keel-raw", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    write(args.out, "Iris", iris(args.iris), 4, 3)
    write(args.out, "Cancer1", biopsy(args.biopsy), 9, 2)
    # The printed hidden-node count for Glass1 differs from the heuristic (8).
    write(args.out, "Glass1", glass(args.keel_raw), 9, 6, hidden_override=5)


if __name__ == "__main__":
    main()
