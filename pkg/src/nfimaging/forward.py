"""Per-subcarrier sensing matrices and noisy observation synthesis."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DimensionError, ParameterError
from .geometry import ChannelTables
from .plan import IlluminationPlan
from .scene import GroundTruthScene


@dataclass(frozen=True)
class SensingSet:
    phi: np.ndarray  # (N, M_r, Q)
    plan: IlluminationPlan | None = None

    @property
    def n_subcarriers(self) -> int:
        return self.phi.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Noiseless M_r x N observation for coefficients u (Q x N)."""
        return np.einsum("nmq,qn->mn", self.phi, u)


@dataclass(frozen=True)
class ObservationSet:
    y: np.ndarray  # (M_r, N)
    noise_power: float
    snr_db: float | None = None
    seed: int | None = None

    def save(self, path) -> None:
        """``.npz`` keeps everything; ``.csv`` stores re/im column pairs."""
        path = Path(path)
        if path.suffix == ".csv":
            m, n = self.y.shape
            cols = np.empty((m, 2 * n))
            cols[:, 0::2], cols[:, 1::2] = self.y.real, self.y.imag
            header = (f"noise_power={self.noise_power!r};snr_db={self.snr_db!r};seed={self.seed!r}\n"
                      + ",".join(f"re{k},im{k}" for k in range(n)))
            np.savetxt(path, cols, delimiter=",", header=header, fmt="%.17g")
        else:
            np.savez(path, y=self.y, noise_power=self.noise_power,
                     snr_db=np.nan if self.snr_db is None else self.snr_db,
                     seed=-1 if self.seed is None else self.seed)

    @classmethod
    def load(cls, path) -> "ObservationSet":
        path = Path(path)
        if path.suffix == ".csv":
            with path.open() as fh:
                meta = fh.readline().lstrip("# ").strip()
            fields = dict(kv.split("=", 1) for kv in meta.split(";"))
            cols = np.loadtxt(path, delimiter=",", ndmin=2)
            y = cols[:, 0::2] + 1j * cols[:, 1::2]
            snr = None if fields["snr_db"] == "None" else float(fields["snr_db"])
            seed = None if fields["seed"] == "None" else int(fields["seed"])
            return cls(y, float(fields["noise_power"]), snr, seed)
        with np.load(path) as data:
            snr = float(data["snr_db"])
            seed = int(data["seed"])
            return cls(data["y"], float(data["noise_power"]),
                       None if np.isnan(snr) else snr, None if seed < 0 else seed)


def sensing_matrix(tables: ChannelTables, x, n: int | None = None) -> np.ndarray:
    """A diag(eta) diag(B x) for one transmit vector.

    ``n`` is accepted for interface symmetry; the matrix depends on the
    subcarrier only through ``x``.
    """
    x = np.asarray(x, dtype=complex).ravel()
    if x.size != tables.b_matrix.shape[1]:
        raise DimensionError(f"beamformer length {x.size} != M_t {tables.b_matrix.shape[1]}")
    return tables.a_matrix * (tables.eta * (tables.b_matrix @ x))[None, :]


def build_sensing(tables: ChannelTables, plan: IlluminationPlan) -> SensingSet:
    if plan.n_subcarriers != tables.n_subcarriers:
        raise DimensionError("plan and geometry disagree on the number of subcarriers")
    phi = np.stack([sensing_matrix(tables, x) for x in plan.vectors])
    return SensingSet(phi, plan)


def coefficient_vectors(scene: GroundTruthScene, tables: ChannelTables) -> np.ndarray:
    """u_n = rho_n * t_n elementwise, returned as a Q x N matrix."""
    if scene.coeffs.shape != tables.delay_phases.shape:
        raise DimensionError("scene and channel tables have different Q x N shapes")
    return scene.coeffs * tables.delay_phases


def calibrate_noise_power(
    tables: ChannelTables,
    scene: GroundTruthScene,
    reference_plan: IlluminationPlan,
    snr_db: float,
) -> float:
    """Noise power giving ``snr_db`` mean per-entry SNR under the reference plan."""
    if not np.isfinite(snr_db):
        raise ParameterError("snr_db must be finite")
    y0 = build_sensing(tables, reference_plan).apply(coefficient_vectors(scene, tables))
    signal = np.sum(np.abs(y0) ** 2) / y0.size
    if not signal > 0:
        raise CalibrationError("reference observation is identically zero")
    return float(signal / 10.0 ** (snr_db / 10.0))


def synthesize_observations(
    sensing: SensingSet,
    coeffs: np.ndarray,
    noise_power: float,
    seed: int,
    snr_db: float | None = None,
) -> ObservationSet:
    """Y = [Phi_n u_n] + CN(0, N0) noise, one RNG stream per subcarrier."""
    if noise_power < 0:
        raise ParameterError("noise power must be nonnegative")
    y = sensing.apply(coeffs)
    if noise_power > 0:
        streams = np.random.SeedSequence(seed).spawn(sensing.n_subcarriers)
        scale = np.sqrt(noise_power / 2.0)
        for n, ss in enumerate(streams):
            rng = np.random.default_rng(ss)
            m = y.shape[0]
            y[:, n] += scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    return ObservationSet(y, float(noise_power), snr_db, seed)
