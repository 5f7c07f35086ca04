#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package (10 000 MNIST
samples) into the four standard IDX files.

    npm pack mnist@1.1.0
    python3 scripts/mnist_npm_to_idx.py mnist-1.1.0.tgz data/mnist

Pixels are stored as round(255 * v). Within each digit class the first 80 %
of the samples (in package order) go to the training files and the rest to
the t10k files, so the split is deterministic.
"""

import argparse
import json
import struct
import tarfile
from pathlib import Path

TRAIN_FRACTION = 0.8
SIDE = 28


def load_digits(package: Path) -> dict[int, list[list[float]]]:
    digits = {}
    if package.is_dir():
        for d in range(10):
            digits[d] = json.loads((package / "src" / "digits" / f"{d}.json").read_text())["data"]
    else:
        with tarfile.open(package) as tar:
            for d in range(10):
                member = tar.extractfile(f"package/src/digits/{d}.json")
                digits[d] = json.load(member)["data"]
    pixels = SIDE * SIDE
    out = {}
    for d, flat in digits.items():
        if len(flat) % pixels:
            raise ValueError(f"digit {d}: {len(flat)} values is not a multiple of {pixels}")
        out[d] = [flat[i : i + pixels] for i in range(0, len(flat), pixels)]
    return out


def to_byte(v: float) -> int:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"pixel {v} outside [0, 1]")
    return int(round(v * 255))


def write_images(path: Path, images: list[list[float]]) -> None:
    with path.open("wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(to_byte(v) for v in img))


def write_labels(path: Path, labels: list[int]) -> None:
    with path.open("wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("package", type=Path, help="mnist-1.1.0.tgz or its extracted `package` directory")
    parser.add_argument("out", type=Path, help="output directory")
    args = parser.parse_args()

    digits = load_digits(args.package)
    splits = {"train": ([], []), "t10k": ([], [])}
    for d in range(10):
        samples = digits[d]
        cut = int(round(TRAIN_FRACTION * len(samples)))
        for name, chunk in (("train", samples[:cut]), ("t10k", samples[cut:])):
            splits[name][0].extend(chunk)
            splits[name][1].extend([d] * len(chunk))

    args.out.mkdir(parents=True, exist_ok=True)
    for name, (images, labels) in splits.items():
        write_images(args.out / f"{name}-images-idx3-ubyte", images)
        write_labels(args.out / f"{name}-labels-idx1-ubyte", labels)
        print(f"{name}: {len(labels)} images")


if __name__ == "__main__":
    main()
