#!/usr/bin/env python3
"""Download the Frey faces corpus and export CSV splits.

Writes <out>/frey/{train,valid}.csv with raw 0-255 pixel values
(20x28 images flattened to 560 columns), split 1765/200 by a fixed
permutation. Standardization happens inside the library at load time.

Requires network access to fetch frey_rawface.mat on first use.
"""

import argparse
import os
import urllib.request

import numpy as np
import scipy.io

URL = "https://cs.nyu.edu/~roweis/data/frey_rawface.mat"


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data", help="dataset root directory")
    ap.add_argument("--mat", default=None, help="use an already-downloaded frey_rawface.mat")
    args = ap.parse_args()

    out = os.path.join(args.out, "frey")
    os.makedirs(out, exist_ok=True)
    mat_path = args.mat or os.path.join(out, "frey_rawface.mat")
    if not os.path.exists(mat_path):
        print(f"downloading {URL}")
        urllib.request.urlretrieve(URL, mat_path)

    faces = scipy.io.loadmat(mat_path)["ff"].T.astype(np.float64)  # (1965, 560)
    perm = np.random.RandomState(0).permutation(len(faces))
    faces = faces[perm]
    train, valid = faces[:1765], faces[1765:]
    np.savetxt(os.path.join(out, "train.csv"), train, fmt="%d", delimiter=",")
    np.savetxt(os.path.join(out, "valid.csv"), valid, fmt="%d", delimiter=",")
    print(f"wrote {len(train)} train and {len(valid)} valid rows under {out}")


if __name__ == "__main__":
    main()
