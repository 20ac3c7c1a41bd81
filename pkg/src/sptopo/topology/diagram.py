"""Extended persistence diagram container and TSV export."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import fmt

ORDINARY = "ordinary"
EXTENDED = "extended"

Point = tuple[float, float, int, str]


@dataclass
class ExtendedPersistenceDiagram:
    """Multiset of ``(birth, death, dim, class)`` points, dims 0 and 1 only."""

    points: list[Point] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def sorted_points(self) -> list[Point]:
        return sorted(self.points, key=lambda p: (p[2], p[3], p[0], p[1]))

    def __eq__(self, other):
        if not isinstance(other, ExtendedPersistenceDiagram):
            return NotImplemented
        return self.sorted_points() == other.sorted_points()

    def select(self, dim=None, cls=None) -> list[Point]:
        return [p for p in self.points if (dim is None or p[2] == dim) and (cls is None or p[3] == cls)]

    def pairs(self) -> np.ndarray:
        """(m, 2) array of (birth, death)."""
        if not self.points:
            return np.zeros((0, 2))
        return np.array([(p[0], p[1]) for p in self.points], dtype=np.float64)

    def map_values(self, fn) -> "ExtendedPersistenceDiagram":
        return ExtendedPersistenceDiagram([(fn(b), fn(d), dim, cls) for b, d, dim, cls in self.points])


def write_diagram(diagram: ExtendedPersistenceDiagram, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("birth\tdeath\tdim\tclass\n")
        for b, d, dim, cls in diagram.sorted_points():
            fh.write(f"{fmt(b)}\t{fmt(d)}\t{dim}\t{cls}\n")


def read_diagram(path) -> ExtendedPersistenceDiagram:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        return ExtendedPersistenceDiagram(
            [(float(r["birth"]), float(r["death"]), int(r["dim"]), r["class"]) for r in reader]
        )


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
