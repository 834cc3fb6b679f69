"""Persistencia de resultados
- Snapshots espectrales: binario little-endian (real, imag) + sidecar JSON
- CSV de diagnósticos y perfiles zonales
- Sumidero de directorio y manifiesto con hashes SHA-256
"""

import csv
import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.diagnostics import CSV_COLUMNS, DiagnosticsRecord, zonal_mean_profiles
from QG.errors import OutputError
from QG.integrator import OutputSink
from QG.spectral_core import LAYOUT, LayerState, SpectralField, wavenumber_lattice

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SNAPSHOT_DTYPE = "<c16"
PROFILE_COLUMNS = ["y", "u1", "u2"]


# ============================================================================
# SNAPSHOTS ESPECTRALES
# ============================================================================

def write_snapshot(stem: Path, field: SpectralField, t: float, field_name: str) -> List[Path]:
    """
    Escribe <stem>.bin y <stem>.json

    Returns:
        Rutas escritas (binario, sidecar)
    """
    stem = Path(stem)
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    lattice = field.lattice
    sidecar = {
        "L": lattice.L,
        "K": lattice.K,
        "N": lattice.N,
        "t": float(t),
        "field_name": field_name,
        "layout": LAYOUT,
        "parseval_factor": lattice.parseval_factor,
    }
    try:
        np.ascontiguousarray(field.coeffs, dtype=SNAPSHOT_DTYPE).tofile(bin_path)
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2)
    except OSError as exc:
        raise OutputError(f"No se pudo escribir el snapshot {stem}: {exc}") from exc
    return [bin_path, json_path]


def read_snapshot(path: Path) -> Tuple[SpectralField, dict]:
    """Lee un snapshot a partir del .bin o del .json"""
    path = Path(path)
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    try:
        with open(json_path, "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        data = np.fromfile(bin_path, dtype=SNAPSHOT_DTYPE)
    except (OSError, json.JSONDecodeError) as exc:
        raise OutputError(f"No se pudo leer el snapshot {path}: {exc}") from exc
    if sidecar.get("layout") != LAYOUT:
        raise OutputError(f"Layout desconocido en {json_path}: {sidecar.get('layout')}")
    lattice = wavenumber_lattice(sidecar["L"], sidecar["K"], sidecar["N"])
    if data.size != lattice.size ** 2:
        raise OutputError(f"{bin_path} tiene {data.size} coeficientes, se esperaban {lattice.size ** 2}")
    return SpectralField(lattice, data.reshape(lattice.shape)), sidecar


def write_profiles(path: Path, y: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(PROFILE_COLUMNS)
            for row in zip(y, u1, u2):
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OutputError(f"No se pudo escribir {path}: {exc}") from exc
    return path


def write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OutputError(f"No se pudo escribir {path}: {exc}") from exc
    return path


class DiagnosticsCsv:
    """Escritor incremental del CSV de diagnósticos"""

    def __init__(self, path: Path):
        self.path = Path(path)
        try:
            self._file = open(self.path, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"No se pudo abrir {self.path}: {exc}") from exc
        self._writer = csv.writer(self._file)
        self._writer.writerow(CSV_COLUMNS)

    def write(self, record: DiagnosticsRecord) -> None:
        try:
            self._writer.writerow(record.to_row())
            self._file.flush()
        except OSError as exc:
            raise OutputError(f"Fallo escribiendo {self.path}: {exc}") from exc

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()


def read_diagnostics_csv(path: Path) -> List[DiagnosticsRecord]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return [DiagnosticsRecord(**{k: float(v) for k, v in row.items()}) for row in reader]


# ============================================================================
# SUMIDERO DE DIRECTORIO
# ============================================================================

class DirectorySink(OutputSink):
    """Escribe diagnósticos, snapshots y perfiles en un directorio y recuerda cada archivo"""

    def __init__(self, out_dir: Path, diagnostics_csv: str = "diagnostics.csv",
                 snapshot_format: str = "raw"):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"No se pudo crear {self.out_dir}: {exc}") from exc
        self.snapshot_format = snapshot_format
        self.files: List[Path] = []
        self.status: Optional[str] = None
        self._snapshots = 0
        self._csv = DiagnosticsCsv(self.out_dir / diagnostics_csv)
        self.files.append(self._csv.path)

    def on_record(self, record: DiagnosticsRecord) -> None:
        self._csv.write(record)

    def on_snapshot(self, state: LayerState) -> None:
        index = self._snapshots
        self._snapshots += 1
        if self.snapshot_format == "raw":
            for name, field in (("q1", state.q1), ("q2", state.q2)):
                self.files.extend(write_snapshot(self.out_dir / f"snap_{index:05d}_{name}", field, state.t, name))
        y, u1, u2 = zonal_mean_profiles(state)
        self.files.append(write_profiles(self.out_dir / f"profiles_{index:05d}.csv", y, u1, u2))

    def close(self, status: str) -> None:
        self._csv.close()
        self.status = status


# ============================================================================
# MANIFIESTO
# ============================================================================

def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, files: Sequence[Path], status: str, **metadata) -> Path:
    """
    Escribe manifest.json con el hash de cada archivo emitido

    Args:
        out_dir: Directorio de salida
        files: Archivos emitidos (los inexistentes se omiten)
        status: "complete", "partial" o "blow_up"
        **metadata: config_hash, seed, version, threads, constants, wall_time...
    """
    out_dir = Path(out_dir)
    entries: Dict[str, dict] = {}
    for path in files:
        path = Path(path)
        if not path.exists() or path.name == MANIFEST_NAME:
            continue
        entries[path.relative_to(out_dir).as_posix() if path.is_relative_to(out_dir) else str(path)] = {
            "sha256": file_sha256(path),
            "bytes": path.stat().st_size,
        }
    manifest = {
        "status": status,
        "created": datetime.now().isoformat(),
        **metadata,
        "files": [{"path": name, **info} for name, info in sorted(entries.items())],
    }
    manifest_path = out_dir / MANIFEST_NAME
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False)
    except OSError as exc:
        raise OutputError(f"No se pudo escribir el manifiesto: {exc}") from exc
    logger.info(f"✅ Manifiesto ({status}) con {len(entries)} archivos en {manifest_path}")
    return manifest_path
