#!/usr/bin/env python3
"""Export the scikit-learn Digits corpus to headerless CSV splits.

Writes <out>/digits/{train,valid}.csv with raw 0-16 grayscale levels,
1438/359 rows, split by a fixed permutation so every export is identical.
Binarization and shift augmentation happen inside the library at load time.
"""

import argparse
import os

import numpy as np
from sklearn.datasets import load_digits


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data", help="dataset root directory")
    args = ap.parse_args()

    data = load_digits().data  # (1797, 64), values 0..16
    perm = np.random.RandomState(0).permutation(len(data))
    data = data[perm]
    train, valid = data[:1438], data[1438:]

    out = os.path.join(args.out, "digits")
    os.makedirs(out, exist_ok=True)
    np.savetxt(os.path.join(out, "train.csv"), train, fmt="%d", delimiter=",")
    np.savetxt(os.path.join(out, "valid.csv"), valid, fmt="%d", delimiter=",")
    print(f"wrote {len(train)} train and {len(valid)} valid rows under {out}")


if __name__ == "__main__":
    main()
