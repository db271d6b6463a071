import csv

import numpy as np
import pytest
import yaml
from PIL import Image

from nfimaging import cli, harness
from nfimaging.config import ExperimentConfig, from_dict, load_config
from nfimaging.errors import ConfigurationError, NumericalError
from nfimaging.harness import emit_image, load_image_sidecar, run_experiment


def _tiny(tmp_path, raster="0100\n0110\n0000\n1001\n", **over):
    rpath = tmp_path / "glyph.txt"
    rpath.write_text(raster)
    data = {
        "geometry": {"m_tx": 24, "m_rx": 12, "cells_per_side": 4, "roi_side": 7.2},
        "scene": {"raster": str(rpath)},
        "experiment": {"snr_db": [30.0], "seeds": [0]},
        "solver": {"max_iter": 20},
        "illumination": {"ipm_max_sca_iter": 3},
    }
    for key, val in over.items():
        data.setdefault(key, {}).update(val)
    return from_dict(data)


def test_tiny_run_writes_all_artifacts(tmp_path):
    cfg = _tiny(tmp_path)
    arts = run_experiment(cfg, tmp_path / "out")
    assert arts.all_ok
    with arts.metrics_path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == harness.METRIC_COLUMNS
    assert len(rows) == 3 * 4
    assert {r["pattern"] for r in rows} == {"uniform", "tcm", "ipm"}
    assert len(arts.summary) == 3
    out = tmp_path / "out"
    for name in ("plan_uniform.txt", "plan_tcm.txt", "plan_ipm.txt", "design.csv",
                 "sca_trace.csv", "summary.csv", "resolved_config.yaml"):
        assert (out / name).exists(), name
    assert (out / "images" / "tcm_snr30_seed0_sc2.png").exists()
    assert (out / "diagnostics" / "sbl_ipm_snr30_seed0.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    cfg = _tiny(tmp_path, illumination={"patterns": ["uniform", "tcm"]})
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("metrics.csv", "summary.csv", "plan_tcm.txt", "images/tcm_snr30_seed0_sc1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_scene_is_flagged_degenerate(tmp_path):
    cfg = _tiny(tmp_path, raster="0000\n" * 4, illumination={"patterns": ["uniform"]})
    arts = run_experiment(cfg, tmp_path / "out")
    assert arts.all_ok
    assert all(row[-1] == "degenerate" for c in arts.cells for row in c.rows)
    assert arts.summary == []


def test_failing_cell_gives_error_row_and_exit_code(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("synthetic failure")

    monkeypatch.setattr(harness, "run_sbl", boom)
    cfg = _tiny(tmp_path, illumination={"patterns": ["uniform"]})
    path = tmp_path / "cfg.yaml"
    path.write_text(cfg.dump())
    code = cli.main(["-q", "run", "-c", str(path), "-o", str(tmp_path / "out")])
    assert code == 1
    text = (tmp_path / "out" / "metrics.csv").read_text()
    assert "synthetic failure" in text


def test_cli_success_and_bad_config(tmp_path, capsys):
    cfg = _tiny(tmp_path, illumination={"patterns": ["uniform"]})
    path = tmp_path / "cfg.yaml"
    path.write_text(cfg.dump())
    assert cli.main(["-q", "run", "-c", str(path), "-o", str(tmp_path / "out"), "-s", "2"]) == 0
    echoed = load_config(tmp_path / "out" / "resolved_config.yaml")
    assert echoed.experiment.seeds == [2]
    bad = tmp_path / "bad.yaml"
    bad.write_text("geometry:\n  m_tx: 0\n")
    assert cli.main(["-q", "run", "-c", str(bad)]) == 2
    assert cli.main(["show-config"]) == 0
    assert "roi_side: 36.0" in capsys.readouterr().out


def test_cli_design_writes_plan(tmp_path):
    cfg = _tiny(tmp_path)
    path = tmp_path / "cfg.yaml"
    path.write_text(cfg.dump())
    assert cli.main(["-q", "design", "-c", str(path), "tcm", str(tmp_path / "p.txt")]) == 0
    assert (tmp_path / "p.txt").read_text().startswith("# mode: tcm")


def test_config_echo_round_trip(tmp_path):
    cfg = _tiny(tmp_path)
    again = from_dict(yaml.safe_load(cfg.dump()))
    assert again == cfg
    assert from_dict(None) == ExperimentConfig()


@pytest.mark.parametrize("data", [
    {"geometry": {"m_txx": 3}},
    {"extras": {}},
    {"solver": {"project_ar1": "yes"}},
    {"illumination": {"patterns": ["laser"]}},
])
def test_config_rejects_bad_input(data):
    with pytest.raises(ConfigurationError):
        from_dict(data)


def test_plan_cache_is_reused(tmp_path):
    cfg = _tiny(tmp_path, illumination={"plan_dir": str(tmp_path / "plans"),
                                        "patterns": ["uniform", "tcm"]})
    tables = harness._tables(cfg)
    first = harness.design_plan(cfg, tables, "tcm")
    cached = list((tmp_path / "plans").glob("plan_tcm_*.txt"))
    assert len(cached) == 1
    second = harness.design_plan(cfg, tables, "tcm")
    np.testing.assert_array_equal(first.vectors, second.vectors)


def test_emit_image(tmp_path):
    path = emit_image(np.zeros((20, 20)), tmp_path / "z.png")
    img = np.asarray(Image.open(path))
    assert img.shape == (20, 20) and not img.any()
    rng = np.random.default_rng(0)
    data = rng.random((20, 20)) * 3.7
    path = emit_image(data, tmp_path / "r.png")
    back = load_image_sidecar(path)
    np.testing.assert_array_equal(back, data)
    assert back.size == 400
    px = np.asarray(Image.open(path))
    assert px.max() == 65535
    with pytest.raises(ValueError):
        emit_image(np.full((2, 2), np.nan), tmp_path / "n.png")


def test_parallel_workers_match_serial(tmp_path):
    cfg = _tiny(tmp_path, illumination={"patterns": ["uniform", "tcm"]},
                experiment={"seeds": [0, 1]})
    par = from_dict({**cfg.to_dict(), "experiment": {**cfg.to_dict()["experiment"], "workers": 2}})
    run_experiment(cfg, tmp_path / "s")
    run_experiment(par, tmp_path / "p")
    assert (tmp_path / "s" / "metrics.csv").read_bytes() == (tmp_path / "p" / "metrics.csv").read_bytes()
