"""Convert a Planetoid-format citation dataset (ind.<name>.*) into a dataset
directory readable by `mghga`.

Test nodes missing from the distributed test index (Citeseer has some) get
an all-zero feature row and label 0, so the node count matches the original
dataset.

usage: convert_planetoid.py SRC_DIR NAME OUT_DIR [--subsample N] [--seed S]
"""

import argparse
import gzip
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load(src, name):
    parts = {}
    for key in ["x", "tx", "allx", "y", "ty", "ally"]:
        with open(os.path.join(src, f"ind.{name}.{key}"), "rb") as f:
            parts[key] = pickle.load(f, encoding="latin1")
    with open(os.path.join(src, f"ind.{name}.test.index")) as f:
        test_index = [int(line) for line in f if line.strip()]

    tx, ty = parts["tx"], parts["ty"]
    lo, hi = min(test_index), max(test_index)
    full_range = range(lo, hi + 1)
    if len(full_range) != len(test_index):
        tx_ext = sp.lil_matrix((len(full_range), tx.shape[1]))
        tx_ext[np.array(sorted(test_index)) - lo, :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full_range), ty.shape[1]))
        ty_ext[np.array(sorted(test_index)) - lo, :] = ty
        ty = ty_ext

    features = sp.vstack((parts["allx"], tx)).tolil()
    labels = np.vstack((parts["ally"], ty))
    order = np.array(test_index)
    features[order, :] = features[np.sort(order), :]
    labels[order, :] = labels[np.sort(order), :]
    return np.asarray(features.todense(), dtype=np.float64), labels.argmax(axis=1)


def write_matrix(path, m, dtype):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(f"{m.shape[0]} {m.shape[1]} {dtype}\n".encode())
        for row in m:
            if dtype == "u8":
                line = " ".join("1" if v else "0" for v in row)
            else:
                line = " ".join(repr(float(v)) for v in row)
            f.write((line + "\n").encode())


def main(argv):
    p = argparse.ArgumentParser()
    p.add_argument("src")
    p.add_argument("name")
    p.add_argument("out")
    p.add_argument("--subsample", type=int)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    x, y = load(args.src, args.name)
    note = "planetoid; missing test nodes zero-filled with label 0"
    if args.subsample:
        rng = np.random.RandomState(args.seed)
        keep = np.sort(rng.choice(x.shape[0], args.subsample, replace=False))
        x, y = x[keep], y[keep]
        note += f"; uniform subsample of {args.subsample} nodes (seed {args.seed})"

    binary = bool(np.isin(x, [0.0, 1.0]).all())
    os.makedirs(args.out, exist_ok=True)
    write_matrix(os.path.join(args.out, "features.txt.gz"), x, "u8" if binary else "f64")
    with open(os.path.join(args.out, "labels.txt"), "w") as f:
        f.writelines(f"{int(v)}\n" for v in y)
    manifest = {
        "name": args.name,
        "feature_files": ["features.txt.gz"],
        "label_file": "labels.txt",
        "feature_mode": "discrete" if binary else "continuous",
        "n_nodes": int(x.shape[0]),
        "n_features": int(x.shape[1]),
        "n_classes": int(y.max()) + 1,
        "preprocessing": note,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(json.dumps(manifest))


if __name__ == "__main__":
    main(sys.argv[1:])
