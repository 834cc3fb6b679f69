"""
Tests de la CLI y de la E/S: configuración, subcomandos, códigos de salida,
manifiesto con hashes y snapshots
"""

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from config import config_hash, parse_config, serialize_config
from main import main
from preflight import run_preflight
from QG.errors import EXIT_CODES, ConfigError
from QG.linstab import SCAN_COLUMNS
from QG.snapshots import file_sha256, read_diagnostics_csv, read_snapshot, write_snapshot
from QG.spectral_core import random_field, wavenumber_lattice

MODEL = {"beta": 0.1, "kappa_T": 0.05, "kappa_M": 0.05, "nu": 1e-3, "m": 3.0, "L": 6.283185307179586}


def write_json(path: Path, payload: dict) -> str:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def run_config(out_dir: Path, **stepper) -> dict:
    values = {"dt": 0.05, "t_end": 0.2, "diagnostics_interval": 0.1, "snapshot_interval": 0.2,
              "init_amplitude": 0.01}
    values.update(stepper)
    return {
        "model": MODEL,
        "stepper": values,
        "lattice": {"K": 4},
        "outputs": {"dir": str(out_dir)},
        "threads": 1,
    }


def error_payload(stderr: str) -> dict:
    lines = [line for line in stderr.splitlines() if line.startswith('{"error"')]
    assert lines, stderr
    return json.loads(lines[-1])["error"]


# ============================================================================
# CONFIGURACIÓN
# ============================================================================

class TestConfig:
    def test_defaults(self):
        cfg = parse_config(json.dumps({"model": MODEL, "lattice": {"K": 32}}))
        assert cfg.lattice.N == 96
        assert cfg.stepper.scheme == "ETDRK4"
        assert cfg.stepper.odd_symmetry is True
        assert cfg.mode == "run"

    def test_field_path_in_error(self):
        bad = {"model": {**MODEL, "L": 0.5}, "lattice": {"K": 8}}
        with pytest.raises(ConfigError, match="model.L") as info:
            parse_config(json.dumps(bad))
        assert any(e["field"] == "model.L" for e in info.value.details()["fields"])

    @pytest.mark.parametrize("lattice", [{"K": 8, "N": 20}, {"K": 0}])
    def test_lattice_rejected(self, lattice):
        with pytest.raises(ConfigError):
            parse_config(json.dumps({"model": MODEL, "lattice": lattice}))

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="solver"):
            parse_config(json.dumps({"model": MODEL, "lattice": {"K": 4}, "solver": "x"}))

    def test_intervals_must_cover_dt(self):
        bad = {"model": MODEL, "lattice": {"K": 4}, "stepper": {"dt": 0.5, "diagnostics_interval": 0.1}}
        with pytest.raises(ConfigError, match="diagnostics_interval"):
            parse_config(json.dumps(bad))

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            parse_config("{model: ")

    def test_serialization_round_trip(self, tmp_path):
        cfg = parse_config(json.dumps(run_config(tmp_path)))
        again = parse_config(serialize_config(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)
        other = parse_config(json.dumps(run_config(tmp_path, seed=1)))
        assert config_hash(other) != config_hash(cfg)


# ============================================================================
# SUBCOMANDOS DE ANÁLISIS
# ============================================================================

class TestAnalysisCommands:
    def test_linstab_to_stdout(self, tmp_path, capsys):
        params = write_json(tmp_path / "params.json", MODEL)
        assert main(["linstab", "--params", params, "--K", "2"]) == EXIT_CODES["ok"]
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == SCAN_COLUMNS
        assert len(rows) == 1 + 5 * 5 - 1
        assert sum(int(row[-1]) for row in rows[1:]) == 1

    def test_linstab_accepts_full_config(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", run_config(tmp_path / "out"))
        out = tmp_path / "scan.csv"
        assert main(["linstab", "--params", path, "--K", "3", "--out", str(out)]) == 0
        assert out.read_text(encoding="utf-8").splitlines()[0] == ",".join(SCAN_COLUMNS)

    def test_bounds_json(self, tmp_path, capsys):
        params = write_json(tmp_path / "params.json",
                            {"beta": 0.0, "kappa_T": 1.0, "kappa_M": 2.0, "nu": 1.0, "m": 3.0, "L": 1.0})
        assert main(["bounds", "--params", params]) == 0
        ledger = json.loads(capsys.readouterr().out)
        assert ledger["M"] == 33
        assert ledger["C7"] == pytest.approx(1.0)
        assert ledger["flags"] == []

    def test_bounds_not_applicable(self, tmp_path, capsys):
        params = write_json(tmp_path / "params.json", {**MODEL, "nu": 0.0})
        assert main(["bounds", "--params", params]) == EXIT_CODES["config_error"]
        assert error_payload(capsys.readouterr().err)["code"] == "config_error"

    def test_lt_check(self, capsys):
        assert main(["lt-check", "--K", "3", "--max-size", "3", "--trials", "2"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["sizes"] == [1, 2, 3]
        assert payload["within_calibration_bound"] is True


# ============================================================================
# ERRORES Y CÓDIGOS DE SALIDA
# ============================================================================

class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["simulate"]) == EXIT_CODES["usage_error"]
        assert error_payload(capsys.readouterr().err)["code"] == "usage_error"

    def test_missing_argument(self, capsys):
        assert main(["linstab"]) == 2
        assert "--params" in error_payload(capsys.readouterr().err)["message"]

    def test_invalid_params_exit_code(self, tmp_path, capsys):
        params = write_json(tmp_path / "params.json", {**MODEL, "L": 0.5})
        assert main(["linstab", "--params", params]) == EXIT_CODES["config_error"]
        error = error_payload(capsys.readouterr().err)
        assert error["code"] == "config_error"
        assert [f["field"] for f in error["details"]["fields"]] == ["L"]

    def test_missing_file(self, tmp_path, capsys):
        assert main(["linstab", "--params", str(tmp_path / "nope.json")]) == EXIT_CODES["io_error"]
        assert error_payload(capsys.readouterr().err)["code"] == "io_error"


# ============================================================================
# EJECUCIÓN COMPLETA
# ============================================================================

class TestRun:
    def test_run_writes_manifest(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        path = write_json(tmp_path / "cfg.json", run_config(out_dir))
        assert main(["run", "--config", path]) == 0
        assert json.loads(capsys.readouterr().out)["status"] == "complete"

        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == "complete"
        assert manifest["seed"] == 0 and manifest["threads"] == 1
        assert manifest["steps"] == 4
        assert "bounds_not_applicable" not in manifest["flags"]
        names = {entry["path"] for entry in manifest["files"]}
        assert {"config.json", "diagnostics.csv", "snap_00000_q1.bin", "snap_00001_q2.json",
                "profiles_00001.csv"} <= names
        for entry in manifest["files"]:
            assert entry["sha256"] == file_sha256(out_dir / entry["path"])

        records = read_diagnostics_csv(out_dir / "diagnostics.csv")
        assert [r.t for r in records] == pytest.approx([0.0, 0.1, 0.2])
        q1, sidecar = read_snapshot(out_dir / "snap_00001_q1.bin")
        assert sidecar["t"] == pytest.approx(0.2)
        assert sidecar["field_name"] == "q1"
        assert q1.lattice.K == 4

    def test_out_overrides_config_dir(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", run_config(tmp_path / "ignored", snapshot_interval=0.2))
        target = tmp_path / "elsewhere"
        assert main(["run", "--config", path, "--out", str(target)]) == 0
        saved = json.loads((target / "config.json").read_text(encoding="utf-8"))
        assert saved["outputs"]["dir"] == str(target)
        assert not (tmp_path / "ignored" / "manifest.json").exists()

    def test_linstab_mode(self, tmp_path):
        cfg = {**run_config(tmp_path / "out"), "mode": "linstab"}
        assert main(["run", "--config", write_json(tmp_path / "cfg.json", cfg)]) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["mode"] == "linstab"
        assert [entry["path"] for entry in manifest["files"]] == ["config.json", "linstab.csv"]

    def test_unrepresentable_background_still_runs(self, tmp_path):
        cfg = run_config(tmp_path / "out")
        cfg["model"] = {**MODEL, "nu": 1e-9, "L": 8.0}
        assert main(["run", "--config", write_json(tmp_path / "cfg.json", cfg)]) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["constants"] is None
        assert "bounds_not_applicable" in manifest["flags"]

    def test_blow_up_exit_code(self, tmp_path, capsys):
        cfg = run_config(tmp_path / "out", scheme="IMEX-CNAB2", dt=1.0, t_end=200.0,
                         diagnostics_interval=1.0, snapshot_interval=200.0, init_amplitude=1e-3)
        cfg["lattice"] = {"K": 8}
        assert main(["run", "--config", write_json(tmp_path / "cfg.json", cfg)]) == EXIT_CODES["blow_up"]
        error = error_payload(capsys.readouterr().err)
        assert error["code"] == "blow_up"
        assert set(error["details"]) == {"t", "max_mode", "magnitude"}
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == "blow_up"

    def test_preflight(self, tmp_path, capsys):
        path = write_json(tmp_path / "cfg.json", run_config(tmp_path / "out"))
        assert main(["preflight", "--config", path]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["success"] is True
        assert result["checks"]["bounds_applicable"]["status"] == "OK"
        assert result["checks"]["linear_stability"]["status"] == "OK"

    def test_preflight_unwritable_dir(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        cfg = parse_config(json.dumps(run_config(blocker / "out")))
        result = run_preflight(cfg)
        assert result["success"] is False
        assert result["checks"]["output_dir"]["status"] == "FAIL"


# ============================================================================
# SNAPSHOTS
# ============================================================================

class TestSnapshots:
    def test_write_then_read(self, tmp_path):
        lattice = wavenumber_lattice(5.0, 3)
        field = random_field(lattice, np.random.default_rng(0))
        paths = write_snapshot(tmp_path / "snap", field, 1.25, "q2")
        assert [p.suffix for p in paths] == [".bin", ".json"]
        assert paths[0].stat().st_size == 16 * lattice.size ** 2
        back, sidecar = read_snapshot(paths[1])
        assert np.array_equal(back.coeffs, field.coeffs)
        assert back.lattice.same_as(lattice)
        assert sidecar["layout"] == "rowmajor-k"
        assert sidecar["parseval_factor"] == pytest.approx(25.0)
