"""Persistence images: Gaussian mass of a diagram integrated over a pixel grid."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..data import fmt
from ..errors import ImageError
from ..numkit.special import normal_cdf

DEFAULT_BOUNDS = (-0.1, 1.1, -0.1, 1.1)


@dataclass
class PersistenceImage:
    """``pixels[i, j]``: birth bin ``i`` (x axis) and death bin ``j`` (y axis)."""

    pixels: np.ndarray
    bounds: tuple[float, float, float, float]
    sigma_x: float
    sigma_y: float
    power: float

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]


def _axis_mass(centres: np.ndarray, lo: float, hi: float, resolution: int, sigma: float) -> np.ndarray:
    edges = np.linspace(lo, hi, resolution + 1)
    cdf = normal_cdf((edges[None, :] - centres[:, None]) / sigma)
    return np.diff(cdf, axis=1)


def image_pixels(pairs: np.ndarray, resolution=20, sigma_x=0.05, sigma_y=0.05, power=1.0, bounds=DEFAULT_BOUNDS):
    """Pixel array for an (m, 2) array of (birth, death) pairs."""
    if resolution < 1:
        raise ImageError("resolution must be >= 1")
    if not (sigma_x > 0 and sigma_y > 0):
        raise ImageError("sigma_x and sigma_y must be positive")
    b_lo, b_hi, d_lo, d_hi = map(float, bounds)
    if not (b_hi > b_lo and d_hi > d_lo):
        raise ImageError(f"degenerate image bounds {bounds}")
    pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.zeros((resolution, resolution))
    weight = np.abs(pairs[:, 0] - pairs[:, 1]) ** power
    mx = _axis_mass(pairs[:, 0], b_lo, b_hi, resolution, sigma_x)
    my = _axis_mass(pairs[:, 1], d_lo, d_hi, resolution, sigma_y)
    return (mx * weight[:, None]).T @ my


def persistence_image(diagram, resolution=20, sigma_x=0.05, sigma_y=0.05, power=1.0, bounds=DEFAULT_BOUNDS) -> PersistenceImage:
    pixels = image_pixels(diagram.pairs(), resolution, sigma_x, sigma_y, power, bounds)
    return PersistenceImage(pixels, tuple(float(b) for b in bounds), float(sigma_x), float(sigma_y), float(power))


def image_metadata(resolution, bounds, sigma_x, sigma_y, power) -> dict:
    return {
        "resolution": int(resolution),
        "bounds": [float(b) for b in bounds],
        "sigma_x": float(sigma_x),
        "sigma_y": float(sigma_y),
        "p": float(power),
    }


def write_image(image: PersistenceImage, path) -> None:
    """Row-major flat TSV plus a JSON sidecar with the grid parameters."""
    with open(path, "w", newline="") as fh:
        fh.write("\t".join(fmt(x) for x in image.pixels.ravel()) + "\n")
    meta = image_metadata(image.resolution, image.bounds, image.sigma_x, image.sigma_y, image.power)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_image(path) -> PersistenceImage:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    with open(path) as fh:
        flat = np.array([float(x) for x in fh.read().split()], dtype=np.float64)
    res = meta["resolution"]
    return PersistenceImage(flat.reshape(res, res), tuple(meta["bounds"]), meta["sigma_x"], meta["sigma_y"], meta["p"])


def write_image_stack(stack: np.ndarray, spot_ids, path, meta: dict) -> None:
    """One row per spot: spot_id then the row-major pixels."""
    with open(path, "w", newline="") as fh:
        for sid, img in zip(spot_ids, stack):
            fh.write(sid + "\t" + "\t".join(fmt(x) for x in img.ravel()) + "\n")
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
