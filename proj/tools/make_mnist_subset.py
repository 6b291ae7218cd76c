#!/usr/bin/env python3
"""Write MNIST IDX files for the desk-scale runs.

Two sources are supported:
  * --from-idx DIR   official gzipped IDX files (train-images-idx3-ubyte.gz, ...)
  * --from-wheel WHL the 5000-image MNIST subset bundled with the mlxtend wheel
                     (mlxtend/data/data/mnist_5k.csv.gz, 500 images per class)

The wheel subset is split per class: the first 400 images of every class go to
the training files, the remaining 100 to the test files.
"""
import argparse
import gzip
import io
import os
import struct
import zipfile

import numpy as np


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, images.shape[0], 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def from_wheel(wheel, train_per_class):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    table = np.loadtxt(io.StringIO(raw), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1].astype(int)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train.append(idx[:train_per_class])
        test.append(idx[train_per_class:])
    # interleave classes so that every prefix of the files stays balanced
    train = np.stack(train, axis=1).reshape(-1)
    test = np.stack(test, axis=1).reshape(-1)
    return (images[train], labels[train]), (images[test], labels[test])


def from_idx(directory):
    def read(name):
        with gzip.open(os.path.join(directory, name), "rb") as f:
            return f.read()

    def images(name):
        buf = read(name)
        n = struct.unpack(">I", buf[4:8])[0]
        return np.frombuffer(buf, np.uint8, offset=16).reshape(n, 28, 28)

    def labels(name):
        return np.frombuffer(read(name), np.uint8, offset=8)

    return ((images("train-images-idx3-ubyte.gz"), labels("train-labels-idx1-ubyte.gz")),
            (images("t10k-images-idx3-ubyte.gz"), labels("t10k-labels-idx1-ubyte.gz")))


def main():
    ap = argparse.ArgumentParser()
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-wheel")
    src.add_argument("--from-idx")
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--train-per-class", type=int, default=400)
    args = ap.parse_args()

    if args.from_wheel:
        (xtr, ytr), (xte, yte) = from_wheel(args.from_wheel, args.train_per_class)
    else:
        (xtr, ytr), (xte, yte) = from_idx(args.from_idx)
    os.makedirs(args.out, exist_ok=True)
    write_idx_images(os.path.join(args.out, "train-images.idx3-ubyte"), xtr)
    write_idx_labels(os.path.join(args.out, "train-labels.idx1-ubyte"), ytr)
    write_idx_images(os.path.join(args.out, "test-images.idx3-ubyte"), xte)
    write_idx_labels(os.path.join(args.out, "test-labels.idx1-ubyte"), yte)
    print(f"train {len(ytr)} test {len(yte)} -> {args.out}")


if __name__ == "__main__":
    main()
