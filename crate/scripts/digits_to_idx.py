"""Write scikit-learn's 8x8 digits as IDX files under data/digits.

Pixels are rescaled from 0..16 to 0..255. Samples are shuffled with a fixed
seed, then the first 1000 form the training split and the remaining 797 the
test split.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, magic, array):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(">" + "I" * array.ndim, *array.shape))
        f.write(array.tobytes())


def main(out):
    out.mkdir(parents=True, exist_ok=True)
    d = load_digits()
    x = np.rint(d.images * 255.0 / 16.0).astype(np.uint8)
    y = d.target.astype(np.uint8)
    perm = np.random.RandomState(20180601).permutation(len(y))
    x, y = x[perm], y[perm]
    write_idx(out / "train-images.idx3-ubyte", 2051, x[:1000])
    write_idx(out / "train-labels.idx1-ubyte", 2049, y[:1000])
    write_idx(out / "test-images.idx3-ubyte", 2051, x[1000:])
    write_idx(out / "test-labels.idx1-ubyte", 2049, y[1000:])


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits"))
