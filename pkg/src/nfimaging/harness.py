"""Experiment runner: geometry -> plans -> scene -> observations -> SBL -> metrics."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import illum
from .config import ExperimentConfig
from .errors import ImagingError
from .forward import (
    build_sensing,
    calibrate_noise_power,
    coefficient_vectors,
    synthesize_observations,
)
from .geometry import ChannelTables, build_channel_tables, build_geometry
from .metrics import evaluate
from .plan import IlluminationPlan
from .sbl import SblOptions, run_sbl
from .scene import generate_scene, render_bitmap, scene_to_images

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["pattern", "snr_db", "seed", "subcarrier", "immse", "psnr_db", "ssim", "pcc", "status"]
METRIC_NAMES = ["immse", "psnr_db", "ssim", "pcc"]


@dataclass
class CellResult:
    pattern: str
    snr_db: float
    seed: int
    rows: list
    status: str
    sbl_trace: list = field(default_factory=list)
    images: np.ndarray | None = None


@dataclass
class ExperimentArtifacts:
    output_dir: Path
    metrics_path: Path
    summary_path: Path
    config_path: Path
    cells: list
    summary: list

    @property
    def all_ok(self) -> bool:
        return all(c.status != "error" for c in self.cells)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_image(image, path) -> Path:
    """16-bit grayscale PNG (linear map of [0, max]) plus an exact CSV sidecar."""
    img = np.asarray(image, dtype=float)
    if not np.all(np.isfinite(img)):
        raise ValueError(f"non-finite values in image for {path}")
    path = Path(path)
    top = img.max() if img.size else 0.0
    scaled = np.zeros(img.shape, dtype=np.uint16)
    if top > 0:
        scaled = np.round(np.clip(img, 0, None) / top * 65535).astype(np.uint16)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(scaled).save(path)
        with path.with_suffix(".csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in img:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"failed to write image {path}: {exc}") from exc
    return path


def load_image_sidecar(path) -> np.ndarray:
    with Path(path).with_suffix(".csv").open() as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def _tables(cfg: ExperimentConfig) -> ChannelTables:
    g = cfg.geometry
    return build_channel_tables(build_geometry(
        tx_center=g.tx_center, rx_center=g.rx_center, m_tx=g.m_tx, m_rx=g.m_rx,
        spacing=g.spacing, carrier_hz=g.carrier_hz,
        subcarrier_spacing_hz=g.subcarrier_spacing_hz, n_subcarriers=g.n_subcarriers,
        roi_center=g.roi_center, roi_side=g.roi_side, cells_per_side=g.cells_per_side,
        array_angle_deg=g.array_angle_deg,
    ))


def _focus_sets(cfg: ExperimentConfig):
    if cfg.illumination.ipm_focus == "quadrants":
        return illum.default_focus_sets(cfg.geometry.cells_per_side, cfg.geometry.n_subcarriers)
    return [np.asarray(c, dtype=int) for c in cfg.illumination.ipm_focus]


def _plan_key(cfg: ExperimentConfig, mode: str) -> str:
    il = cfg.illumination
    blob = json.dumps({
        "geometry": cfg.to_dict()["geometry"], "mode": mode, "power": il.total_power,
        "unitary": il.tcm_unitary, "tcm_seed": il.tcm_seed, "weighted": il.tcm_weighted, "focus": il.ipm_focus,
        "sca": [il.ipm_max_sca_iter, il.ipm_eps_rel, il.ipm_method],
    }, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def design_plan(cfg: ExperimentConfig, tables: ChannelTables, mode: str) -> IlluminationPlan:
    """Design (or load from the plan cache) the plan for one illumination mode."""
    il = cfg.illumination
    p = il.total_power / tables.n_subcarriers
    cache = None
    if il.plan_dir:
        cache = Path(il.plan_dir) / f"plan_{mode}_{_plan_key(cfg, mode)}.txt"
        if cache.exists():
            log.info("loading cached %s plan from %s", mode, cache)
            return IlluminationPlan.load(cache)
    if mode == "uniform":
        plan = illum.uniform_plan(tables, p)
    elif mode == "tcm":
        plan = illum.tcm_plan(tables, p, il.tcm_unitary, il.tcm_seed, il.tcm_weighted)
    else:
        opts = illum.IpmOptions(max_sca_iter=il.ipm_max_sca_iter, eps_rel=il.ipm_eps_rel,
                                method=il.ipm_method)
        plan = illum.ipm_plan(tables, p, _focus_sets(cfg), opts)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        plan.save(cache)
    return plan


def _noise_seed(seed: int, snr_db: float) -> int:
    return int(np.random.SeedSequence([seed, int(round(snr_db * 1000)) + 2**20]).generate_state(1)[0])


def _scene(cfg: ExperimentConfig, seed: int):
    s, g = cfg.scene, cfg.geometry
    mask, mags = render_bitmap(s.raster, g.cells_per_side, s.top_magnitude, s.bottom_magnitude)
    return generate_scene(mask, mags, s.psi, seed, g.n_subcarriers, s.initial)


def run_cell(cfg: ExperimentConfig, tables: ChannelTables, plans: dict, pattern: str,
             snr_db: float, seed: int) -> CellResult:
    n_sub = tables.n_subcarriers
    try:
        scene = _scene(cfg, seed)
        truth = scene_to_images(scene)
        if not scene.support.any():
            rows = [[pattern, snr_db, seed, n, *([float("nan")] * 4), "degenerate"] for n in range(n_sub)]
            return CellResult(pattern, snr_db, seed, rows, "degenerate")
        n0 = calibrate_noise_power(tables, scene, plans["uniform"], snr_db)
        sensing = build_sensing(tables, plans[pattern])
        obs = synthesize_observations(sensing, coefficient_vectors(scene, tables), n0,
                                      _noise_seed(seed, snr_db), snr_db)
        sv = cfg.solver
        res = run_sbl(obs, sensing, tables.delay_phases,
                      SblOptions(max_iter=sv.max_iter, tol=sv.tol, project_ar1=sv.project_ar1))
        mc = cfg.metrics
        rows = []
        for n in range(n_sub):
            rep = evaluate(truth[n], res.images[n], sigma=mc.ssim_sigma, window=mc.ssim_window,
                           k1=mc.ssim_k1, k2=mc.ssim_k2)
            rows.append([pattern, snr_db, seed, n, *rep.as_tuple(), "ok"])
        trace = [(i, ev, psi) for i, (ev, psi) in
                 enumerate(zip(res.state.evidence, [None] + res.psi_trace))]
        return CellResult(pattern, snr_db, seed, rows, "ok", trace, res.images)
    except (ImagingError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.error("cell (%s, %g dB, seed %d) failed: %s", pattern, snr_db, seed, exc)
        msg = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        rows = [[pattern, snr_db, seed, -1, *([float("nan")] * 4), msg]]
        return CellResult(pattern, snr_db, seed, rows, "error")


def _cell_worker(args):
    cfg, plans_saved, pattern, snr, seed = args
    tables = _tables(cfg)
    return run_cell(cfg, tables, plans_saved, pattern, snr, seed)


def summarize(cells: list) -> list:
    """Per (pattern, snr): mean and median over seeds of subcarrier-averaged metrics."""
    groups: dict = {}
    for cell in cells:
        if cell.status != "ok":
            continue
        vals = np.array([r[4:8] for r in cell.rows], dtype=float)
        groups.setdefault((cell.pattern, cell.snr_db), []).append(np.nanmean(vals, axis=0))
    out = []
    for (pattern, snr), per_seed in groups.items():
        arr = np.array(per_seed)
        out.append({
            "pattern": pattern, "snr_db": snr, "n_seeds": len(per_seed),
            **{f"{m}_mean": float(v) for m, v in zip(METRIC_NAMES, arr.mean(axis=0))},
            **{f"{m}_median": float(v) for m, v in zip(METRIC_NAMES, np.median(arr, axis=0))},
        })
    return out


def _write_csv(path: Path, header: list, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_design_diagnostics(out: Path, tables: ChannelTables, plans: dict) -> None:
    rows = []
    for mode, plan in plans.items():
        for n, x in enumerate(plan.vectors):
            phi = tables.a_normalized * (tables.eta * (tables.b_matrix @ x))[None, :]
            coh = illum.relative_coherence(phi)
            min_p = float("nan")
            chi_final = float("nan")
            if plan.focus_cells is not None:
                min_p = illum.min_illumination_power(x, tables, plan.focus_cells[n])
                trace = plan.diagnostics.get("chi_trace")
                if trace:
                    chi_final = trace[n][-1]
            rows.append([mode, n, coh, float(np.sum(np.abs(x) ** 2)), min_p, chi_final])
    _write_csv(out / "design.csv",
               ["pattern", "subcarrier", "relative_coherence", "power", "min_focus_power", "chi_final"],
               rows)
    trace_rows = []
    for mode, plan in plans.items():
        for n, trace in enumerate(plan.diagnostics.get("chi_trace", []) or []):
            for k, chi in enumerate(trace):
                trace_rows.append([mode, n, k, chi])
    if trace_rows:
        _write_csv(out / "sca_trace.csv", ["pattern", "subcarrier", "iteration", "chi"], trace_rows)


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> ExperimentArtifacts:
    out = Path(output_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "resolved_config.yaml"
    config_path.write_text(cfg.dump())
    tables = _tables(cfg)

    modes = ["uniform"] + [p for p in cfg.illumination.patterns if p != "uniform"]
    plans = {m: design_plan(cfg, tables, m) for m in modes}
    for mode, plan in plans.items():
        plan.save(out / f"plan_{mode}.txt")
    if cfg.output.diagnostics:
        _write_design_diagnostics(out, tables, plans)

    jobs = [(p, snr, seed) for seed in cfg.experiment.seeds
            for snr in cfg.experiment.snr_db for p in cfg.illumination.patterns]
    if cfg.experiment.workers > 1:
        # plans are reloaded from their exact text form so workers see identical data
        saved = {m: IlluminationPlan.load(out / f"plan_{m}.txt") for m in plans}
        with ProcessPoolExecutor(cfg.experiment.workers) as pool:
            cells = list(pool.map(_cell_worker, [(cfg, saved, *j) for j in jobs]))
    else:
        cells = []
        for p, snr, seed in jobs:
            log.info("cell pattern=%s snr=%g seed=%d", p, snr, seed)
            cells.append(run_cell(cfg, tables, plans, p, snr, seed))

    metrics_path = out / "metrics.csv"
    _write_csv(metrics_path, METRIC_COLUMNS, [r for c in cells for r in c.rows])
    summary = summarize(cells)
    summary_path = out / "summary.csv"
    if summary:
        _write_csv(summary_path, list(summary[0]), [list(s.values()) for s in summary])
    else:
        _write_csv(summary_path, ["pattern", "snr_db", "n_seeds"], [])

    if cfg.output.images:
        for seed in cfg.experiment.seeds:
            truth = scene_to_images(_scene(cfg, seed))
            for n, img in enumerate(truth):
                emit_image(img, out / "images" / f"truth_seed{seed}_sc{n}.png")
        for c in cells:
            if c.images is None:
                continue
            for n, img in enumerate(c.images):
                emit_image(img, out / "images" / f"{c.pattern}_snr{c.snr_db:g}_seed{c.seed}_sc{n}.png")
    if cfg.output.diagnostics:
        diag = out / "diagnostics"
        diag.mkdir(exist_ok=True)
        for c in cells:
            if c.sbl_trace:
                _write_csv(diag / f"sbl_{c.pattern}_snr{c.snr_db:g}_seed{c.seed}.csv",
                           ["iteration", "neg_log_evidence", "psi_coeff"],
                           [[i, ev, "" if psi is None else psi] for i, ev, psi in c.sbl_trace])
    return ExperimentArtifacts(out, metrics_path, summary_path, config_path, cells, summary)
