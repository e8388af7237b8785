#!/usr/bin/env python3
"""Rebuild data/mnist/ from the `mnist` npm package (cazala/mnist 1.1.0).

That package ships the first 10000 MNIST training digits as per-digit JSON
arrays of byte/255 values rounded to 3 decimals; round(v*255) recovers the
original bytes exactly.  The digits are interleaved with a fixed-seed shuffle
and written as gzipped IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist
"""
import gzip
import json
import pathlib
import struct
import sys

import numpy as np


def main(src: str, dst: str) -> None:
    images, labels = [], []
    for digit in range(10):
        values = json.loads(pathlib.Path(src, f"{digit}.json").read_text())["data"]
        block = np.rint(np.asarray(values) * 255.0).astype(np.uint8).reshape(-1, 28, 28)
        images.append(block)
        labels.append(np.full(len(block), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(20210607).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = pathlib.Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(out / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
