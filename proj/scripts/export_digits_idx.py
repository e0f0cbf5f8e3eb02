#!/usr/bin/env python3
"""Export the sklearn 8x8 handwritten-digits set to MNIST-style IDX files.

Produces data/digits/{train,t10k}-{images-idx3,labels-idx1}-ubyte with a
stratified 80/20 split. Pixel values (0..16) are rescaled to 0..255 so the
files follow the usual ubyte conventions and the C++ reader can treat them
exactly like real MNIST data.

This is a one-shot provenance script; the generated files are committed so
the toolchain needs no Python at build or test time.
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

SPLIT_SEED = 20240817
TRAIN_FRACTION = 0.8


def stratified_split(labels, rng):
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.where(labels == c)[0]
        rng.shuffle(idx)
        k = int(round(len(idx) * TRAIN_FRACTION))
        train_idx.extend(idx[:k])
        test_idx.extend(idx[k:])
    return np.array(sorted(train_idx)), np.array(sorted(test_idx))


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/digits")
    out_dir.mkdir(parents=True, exist_ok=True)

    X, y = load_digits(return_X_y=True)
    rng = np.random.default_rng(SPLIT_SEED)
    tr, te = stratified_split(y, rng)

    # 0..16 -> 0..255 (round-to-nearest keeps 0 -> 0 and 16 -> 255)
    pixels = np.rint(X * 255.0 / 16.0).astype(np.uint8).reshape(-1, 8, 8)

    write_images(out_dir / "train-images-idx3-ubyte", pixels[tr])
    write_labels(out_dir / "train-labels-idx1-ubyte", y[tr])
    write_images(out_dir / "t10k-images-idx3-ubyte", pixels[te])
    write_labels(out_dir / "t10k-labels-idx1-ubyte", y[te])

    print(f"wrote {len(tr)} train / {len(te)} test samples to {out_dir}")


if __name__ == "__main__":
    main()
