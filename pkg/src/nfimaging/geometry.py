"""Array geometry, ROI grid and deterministic channel ingredients.

Coordinates are 2-D (x, y) in metres.  Both uniform linear arrays lie along
a common axis (default: the x-axis) and face the square region of interest.
Cells are enumerated row-major from the top-left corner of the ROI, i.e.
row 0 is the row with the largest y coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GeometryError, ParameterError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SceneGeometry:
    tx_center: np.ndarray
    rx_center: np.ndarray
    m_tx: int
    m_rx: int
    spacing: float
    carrier_hz: float
    subcarrier_spacing_hz: float
    n_subcarriers: int
    roi_center: np.ndarray
    roi_side: float
    cells_per_side: int
    tx_elements: np.ndarray
    rx_elements: np.ndarray
    cell_centers: np.ndarray
    array_angle_rad: float = 0.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def n_cells(self) -> int:
        return self.cells_per_side**2

    @property
    def pitch(self) -> float:
        return self.roi_side / self.cells_per_side


def _ula(center: np.ndarray, count: int, spacing: float, angle: float) -> np.ndarray:
    offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
    axis = np.array([np.cos(angle), np.sin(angle)])
    return center[None, :] + offsets[:, None] * axis[None, :]


def _grid(center: np.ndarray, side: float, cells: int) -> np.ndarray:
    pitch = side / cells
    ticks = (np.arange(cells) - (cells - 1) / 2.0) * pitch
    xs, ys = np.meshgrid(ticks, -ticks)
    return np.stack([xs.ravel(), ys.ravel()], axis=1) + center[None, :]


def build_geometry(
    tx_center=(0.0, 20.0),
    rx_center=(0.0, -20.0),
    m_tx: int = 100,
    m_rx: int = 100,
    spacing: float | None = None,
    carrier_hz: float = 50e9,
    subcarrier_spacing_hz: float = 1e6,
    n_subcarriers: int = 4,
    roi_center=(0.0, 0.0),
    roi_side: float = 36.0,
    cells_per_side: int = 20,
    array_angle_deg: float = 0.0,
) -> SceneGeometry:
    """Build the bistatic ULA geometry.

    ``spacing=None`` selects half-wavelength spacing at the carrier.
    """
    for name, val in (("m_tx", m_tx), ("m_rx", m_rx), ("cells_per_side", cells_per_side),
                      ("n_subcarriers", n_subcarriers)):
        if int(val) != val or val < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {val!r}")
    for name, val in (("roi_side", roi_side), ("carrier_hz", carrier_hz),
                      ("subcarrier_spacing_hz", subcarrier_spacing_hz)):
        if not (np.isfinite(val) and val > 0):
            raise ConfigurationError(f"{name} must be positive, got {val!r}")
    wavelength = SPEED_OF_LIGHT / carrier_hz
    if spacing is None:
        spacing = wavelength / 2.0
    if not (np.isfinite(spacing) and spacing > 0):
        raise ConfigurationError(f"spacing must be positive, got {spacing!r}")
    tx = np.asarray(tx_center, dtype=float).reshape(2)
    rx = np.asarray(rx_center, dtype=float).reshape(2)
    roi = np.asarray(roi_center, dtype=float).reshape(2)
    angle = np.deg2rad(array_angle_deg)
    geo = SceneGeometry(
        tx_center=tx,
        rx_center=rx,
        m_tx=int(m_tx),
        m_rx=int(m_rx),
        spacing=float(spacing),
        carrier_hz=float(carrier_hz),
        subcarrier_spacing_hz=float(subcarrier_spacing_hz),
        n_subcarriers=int(n_subcarriers),
        roi_center=roi,
        roi_side=float(roi_side),
        cells_per_side=int(cells_per_side),
        tx_elements=_ula(tx, int(m_tx), spacing, angle),
        rx_elements=_ula(rx, int(m_rx), spacing, angle),
        cell_centers=_grid(roi, float(roi_side), int(cells_per_side)),
        array_angle_rad=float(angle),
    )
    for arr in (geo.tx_elements, geo.rx_elements, geo.cell_centers):
        arr.setflags(write=False)
    return geo


def _distances(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """(len(points), len(targets)) Euclidean distance table."""
    diff = points[:, None, :] - targets[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def steering_vector(elements, cell, wavelength: float) -> np.ndarray:
    """Near-field steering vector, entry m = exp(-j 2 pi d_m / wavelength)."""
    if not wavelength > 0:
        raise ParameterError("wavelength must be positive")
    elements = np.atleast_2d(np.asarray(elements, dtype=float))
    cell = np.asarray(cell, dtype=float).reshape(1, 2)
    dist = _distances(elements, cell)[:, 0]
    if np.any(dist == 0):
        raise GeometryError("cell coincides with an antenna element")
    return np.exp(-2j * np.pi * dist / wavelength)


def pathloss(cell, tx_center, rx_center, wavelength: float) -> float:
    """Two-way free-space amplitude factor using array-centre distances."""
    cell = np.asarray(cell, dtype=float)
    d_t = float(np.hypot(*(cell - np.asarray(tx_center, dtype=float))))
    d_r = float(np.hypot(*(cell - np.asarray(rx_center, dtype=float))))
    if d_t == 0 or d_r == 0:
        raise GeometryError("cell coincides with an array centre")
    return float(np.sqrt(wavelength**2 / ((4 * np.pi) ** 3 * (d_t * d_r) ** 2)))


def round_trip_delay(cell, geometry: SceneGeometry) -> float:
    cell = np.asarray(cell, dtype=float)
    d_t = np.hypot(*(cell - geometry.tx_center))
    d_r = np.hypot(*(cell - geometry.rx_center))
    return float((d_t + d_r) / SPEED_OF_LIGHT)


def delay_phase(cell, n: int, geometry: SceneGeometry) -> complex:
    """Phase of subcarrier ``n`` (1-based) relative to the first one."""
    if int(n) != n or not 1 <= n <= geometry.n_subcarriers:
        raise ParameterError(f"subcarrier index {n!r} outside 1..{geometry.n_subcarriers}")
    if n == 1:
        return 1.0 + 0.0j
    tau = round_trip_delay(cell, geometry)
    return complex(np.exp(-2j * np.pi * (n - 1) * tau * geometry.subcarrier_spacing_hz))


@dataclass(frozen=True)
class ChannelTables:
    """Channel ingredients for every ROI cell.

    ``a_matrix`` is M_r x Q with columns a(r_i); ``b_matrix`` is Q x M_t with
    rows b(r_i)^H; ``delay_phases`` is Q x N.
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    eta: np.ndarray
    delay_phases: np.ndarray
    geometry: SceneGeometry = field(repr=False)

    @property
    def a_normalized(self) -> np.ndarray:
        """Receive steering matrix with unit-norm columns."""
        return self.a_matrix / np.sqrt(self.a_matrix.shape[0])

    @property
    def n_cells(self) -> int:
        return self.eta.size

    @property
    def n_subcarriers(self) -> int:
        return self.delay_phases.shape[1]


def build_channel_tables(geometry: SceneGeometry) -> ChannelTables:
    lam = geometry.wavelength
    cells = geometry.cell_centers
    d_rx = _distances(geometry.rx_elements, cells)
    d_tx = _distances(geometry.tx_elements, cells)
    if np.any(d_rx == 0) or np.any(d_tx == 0):
        raise GeometryError("a cell centre coincides with an antenna element")
    a_mat = np.exp(-2j * np.pi * d_rx / lam)
    b_mat = np.exp(2j * np.pi * d_tx.T / lam)  # rows are b(r)^H
    d_t = _distances(cells, geometry.tx_center[None, :])[:, 0]
    d_r = _distances(cells, geometry.rx_center[None, :])[:, 0]
    if np.any(d_t == 0) or np.any(d_r == 0):
        raise GeometryError("a cell centre coincides with an array centre")
    eta = np.sqrt(lam**2 / ((4 * np.pi) ** 3 * (d_t * d_r) ** 2))
    tau = (d_t + d_r) / SPEED_OF_LIGHT
    steps = np.arange(geometry.n_subcarriers)
    phases = np.exp(-2j * np.pi * steps[None, :] * tau[:, None] * geometry.subcarrier_spacing_hz)
    phases[:, 0] = 1.0
    for arr in (a_mat, b_mat, eta, phases):
        arr.setflags(write=False)
    return ChannelTables(a_mat, b_mat, eta, phases, geometry)
