#!/usr/bin/env python3
"""
Generate sample inputs for the qmldesk commands.

Creates, in the output directory (default ./data):
- blobs.csv      two labeled Gaussian blobs (classify, knn, mst-cluster, qpca)
- system.json    a 4x4 Hermitian system (hhl-solve)
- perceptron.csv a consistent binary training set (train-perceptron)
- patterns.csv   binary patterns (train-bm)
"""

import json
import sys
from pathlib import Path

import numpy as np

from qmldesk.datasets import write_dataset, write_patterns
from qmldesk.distance import LabeledDataset


def make_blobs(rng: np.random.Generator, per_class: int = 8) -> LabeledDataset:
    """Two well separated 2-D blobs labeled a and b."""
    a = rng.normal(loc=(2.0, 0.0), scale=0.3, size=(per_class, 2))
    b = rng.normal(loc=(0.0, 2.0), scale=0.3, size=(per_class, 2))
    return LabeledDataset(np.vstack([a, b]), ("a",) * per_class + ("b",) * per_class)


def make_system(rng: np.random.Generator, dim: int = 4) -> dict:
    """Hermitian A with eigenvalues 1..dim and a random real b."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    a = q @ np.diag(np.arange(1, dim + 1, dtype=float)) @ q.T
    a = (a + a.T) / 2
    return {"A": a.round(12).tolist(), "b": rng.normal(size=dim).round(6).tolist()}


def main():
    """Write the sample files."""
    output_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    output_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2016)

    path = write_dataset(output_dir / "blobs.csv", make_blobs(rng))
    print(f"Created {path}")

    path = output_dir / "system.json"
    path.write_text(json.dumps(make_system(rng), indent=2) + "\n")
    print(f"Created {path}")

    # Identity inputs with labels 1, 0, 1 decode to weights (1, 0, 1)
    path = output_dir / "perceptron.csv"
    path.write_text("label,x1,x2,x3\n1,1,0,0\n0,0,1,0\n1,0,0,1\n")
    print(f"Created {path}")

    patterns = [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1], [1, 0, 1, 0]]
    path = write_patterns(output_dir / "patterns.csv", patterns)
    print(f"Created {path}")

    print(f"\nSample data saved to: {output_dir}")


if __name__ == "__main__":
    main()
