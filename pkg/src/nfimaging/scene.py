"""Sparse ground-truth scenes with AR-1 correlation across subcarriers."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, ParameterError

BUILTIN_RASTERS = {"tu_berlin": "tu_berlin.txt"}


@dataclass(frozen=True)
class GroundTruthScene:
    """Reflection coefficients (Q x N), support, per-cell RCS and correlation."""

    coeffs: np.ndarray
    support: np.ndarray
    rcs: np.ndarray
    psi: np.ndarray
    seed: int | None = None

    @property
    def n_cells(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.coeffs.shape[1]


def ar1_correlation(n: int, psi_coeff: float) -> np.ndarray:
    """Toeplitz matrix with entries psi_coeff**|k - l|."""
    if not -1.0 < psi_coeff < 1.0:
        raise ParameterError(f"AR-1 coefficient must lie in (-1, 1), got {psi_coeff!r}")
    if n < 1:
        raise ParameterError("size must be positive")
    return sla.toeplitz(float(psi_coeff) ** np.arange(n))


def generate_scene(
    mask,
    magnitudes,
    psi_coeff: float,
    seed: int,
    n_subcarriers: int = 4,
    initial: str = "fixed",
) -> GroundTruthScene:
    """Draw one scene.

    Subcarrier 1 carries the prescribed magnitudes with uniformly random
    phases (``initial="fixed"``) or a CN(0, gamma_i) sample
    (``initial="gaussian"``).  Later subcarriers follow the AR-1 recursion
    rho_{n+1} = psi rho_n + sqrt(1 - psi^2) w_n with w_n ~ CN(0, gamma_i),
    so each row has covariance gamma_i * Toeplitz(psi^|k|) either way.
    """
    mask = np.asarray(mask, dtype=bool).ravel()
    mags = np.asarray(magnitudes, dtype=float).ravel()
    if mask.shape != mags.shape:
        raise DimensionError("mask and magnitudes must have the same length")
    if np.any(mags[~mask] != 0):
        raise DimensionError("magnitudes must be zero off the support")
    if initial not in ("fixed", "gaussian"):
        raise ParameterError(f"unknown initial draw {initial!r}")
    psi = ar1_correlation(n_subcarriers, psi_coeff)
    rng = np.random.default_rng(seed)
    q = mask.size
    coeffs = np.zeros((q, n_subcarriers), dtype=complex)
    if initial == "fixed":
        coeffs[:, 0] = mags * np.exp(1j * rng.uniform(0.0, 2 * np.pi, q))
    else:
        coeffs[:, 0] = mags * _cn(rng, q)
    innov = np.sqrt(1.0 - psi_coeff**2)
    for n in range(1, n_subcarriers):
        coeffs[:, n] = psi_coeff * coeffs[:, n - 1] + innov * mags * _cn(rng, q)
    coeffs[~mask] = 0.0
    rcs = np.where(mask, mags**2, 0.0)
    return GroundTruthScene(coeffs, mask, rcs, psi, seed)


def _cn(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def load_raster(path) -> np.ndarray:
    """Read a plain-text 0/1 grid (one row per line, optional whitespace)."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = "".join(line.split())
        if not line or line.startswith("#"):
            continue
        if set(line) - {"0", "1"}:
            raise DimensionError(f"raster {path} contains characters other than 0/1")
        rows.append([int(c) for c in line])
    if not rows or len({len(r) for r in rows}) != 1:
        raise DimensionError(f"raster {path} is empty or ragged")
    return np.array(rows, dtype=int)


def builtin_raster(name: str = "tu_berlin") -> np.ndarray:
    try:
        fname = BUILTIN_RASTERS[name]
    except KeyError:
        raise ParameterError(f"unknown built-in raster {name!r}") from None
    with resources.as_file(resources.files("nfimaging") / "assets" / fname) as p:
        return load_raster(p)


def render_bitmap(
    glyph, cells_per_side: int, top_magnitude: float = 1.0, bottom_magnitude: float = 0.3
) -> tuple[np.ndarray, np.ndarray]:
    """Turn a raster into a support mask and a top-to-bottom magnitude ramp.

    ``glyph`` may be a built-in raster name, a path to a 0/1 text file, or an
    array.  Magnitudes fall linearly from ``top_magnitude`` on the highest
    support row to ``bottom_magnitude`` on the lowest, then are scaled to a
    maximum of 1.
    """
    if isinstance(glyph, str) and glyph in BUILTIN_RASTERS:
        raster = builtin_raster(glyph)
    elif isinstance(glyph, (str, Path)):
        raster = load_raster(glyph)
    else:
        raster = np.asarray(glyph)
    if raster.size != cells_per_side**2:
        raise DimensionError(
            f"raster has {raster.size} pixels, expected {cells_per_side**2}"
        )
    raster = raster.reshape(cells_per_side, cells_per_side)
    mask = raster.ravel() != 0
    mags = np.zeros(mask.size)
    if not mask.any():
        return mask, mags
    rows = np.repeat(np.arange(cells_per_side), cells_per_side)
    top, bottom = rows[mask].min(), rows[mask].max()
    frac = (rows - top) / (bottom - top) if bottom > top else np.zeros(mask.size)
    ramp = top_magnitude + (bottom_magnitude - top_magnitude) * frac
    mags[mask] = ramp[mask]
    mags /= mags.max()
    return mask, mags


def scene_to_images(scene: GroundTruthScene) -> np.ndarray:
    """Magnitude images, shape (N, side, side)."""
    side = int(round(np.sqrt(scene.n_cells)))
    return np.abs(scene.coeffs).T.reshape(scene.n_subcarriers, side, side)
