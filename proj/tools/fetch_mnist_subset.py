#!/usr/bin/env python3
"""Builds an MNIST cache from the npm `mnist` package (about 10k digits).

Writes train-images-idx3-ubyte and train-labels-idx1-ubyte under
$AKID_DATA_PATH/mnist (or --out). Use this where the original MNIST host is
unreachable. Examples are interleaved with a fixed seed so any prefix is
class-balanced in expectation.
"""

import argparse
import json
import os
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np


def fetch_package(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=workdir, check=True, stdout=subprocess.DEVNULL)
    with tarfile.open(workdir / "mnist-1.1.0.tgz") as tar:
        tar.extractall(workdir)
    return workdir / "package"


def load_digits(package: Path):
    images, labels = [], []
    for digit in range(10):
        with open(package / "src" / "digits" / f"{digit}.json") as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64)
        pixels = np.clip(np.rint(raw * 255.0), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pixels)
        labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx(path: Path, magic: int, array: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for extent in array.shape:
            f.write(struct.pack(">I", extent))
        f.write(array.tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--package", type=Path, help="unpacked npm package dir (fetched with npm when omitted)")
    parser.add_argument("--out", type=Path, default=Path(os.environ.get("AKID_DATA_PATH", "data")) / "mnist")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package = args.package or fetch_package(Path(tmp))
        images, labels = load_digits(package)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train-images-idx3-ubyte", 0x803, images[order])
    write_idx(args.out / "train-labels-idx1-ubyte", 0x801, labels[order])
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {len(labels)} examples to {args.out} (per class: {' '.join(map(str, counts))})")


if __name__ == "__main__":
    main()
