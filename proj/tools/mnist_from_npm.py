#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package (10,000 real MNIST
samples, stored as byte/255 floats in per-digit JSON files) into a gzipped
IDX image/label pair.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist

Rows are shuffled with a fixed seed so that any prefix holds all classes.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    rows = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"{digit}.json: length {len(flat)} not a multiple of 784")
        for i in range(0, len(flat), 784):
            pixels = bytes(round(v * 255) for v in flat[i:i + 784])
            rows.append((pixels, digit))
    random.Random(20160301).shuffle(rows)

    dst.mkdir(parents=True, exist_ok=True)
    n = len(rows)
    with gzip.GzipFile(dst / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with gzip.GzipFile(dst / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(label for _, label in rows))
    print(f"wrote {n} samples to {dst}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
