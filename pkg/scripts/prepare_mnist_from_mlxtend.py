"""Write the 5000-image MNIST sample bundled with mlxtend as IDX files.

The bundled sample is sorted by digit, so rows are shuffled once with a fixed
seed before writing; a prefix of the result is then a class-mixed subset.

    python3 scripts/prepare_mnist_from_mlxtend.py OUT_DIR
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from anovqc.data import MNIST_IMAGES_FILE, MNIST_LABELS_FILE, write_idx

SHUFFLE_SEED = 20240601


def build(out_dir: Path) -> tuple[Path, Path]:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    order = np.random.default_rng(SHUFFLE_SEED).permutation(X.shape[0])
    images = np.asarray(X[order], dtype=np.uint8).reshape(-1, 28, 28)
    labels = np.asarray(y[order], dtype=np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path = out_dir / (MNIST_IMAGES_FILE + ".gz")
    lbl_path = out_dir / (MNIST_LABELS_FILE + ".gz")
    write_idx(img_path, images)
    write_idx(lbl_path, labels)
    return img_path, lbl_path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()
    for p in build(args.out_dir):
        print(p)


if __name__ == "__main__":
    main()
