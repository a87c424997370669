#!/usr/bin/env python3
"""Build a 10k-image MNIST subset in IDX format from the `mnist` npm package.

The npm package ships about 1000 digits per class as JSON arrays of [0,1] floats
(three decimals). Pixels are mapped back to bytes with round(v * 255).
The 10,000 images are shuffled with a fixed seed and split 8000 / 2000.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_subset.py package/src/digits data/mnist-10k
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + bytes(payload))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        n = len(data) // 784
        for i in range(n):
            px = [min(255, max(0, round(v * 255))) for v in data[i * 784:(i + 1) * 784]]
            samples.append((px, label))
    random.Random(20190528).shuffle(samples)
    splits = {"train": samples[:8000], "t10k": samples[8000:10000]}
    for name, rows in splits.items():
        images = [p for px, _ in rows for p in px]
        labels = [l for _, l in rows]
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, [len(rows), 28, 28], images)
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, [len(rows)], labels)
        print(name, len(rows))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
