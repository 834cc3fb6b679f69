# main.py - CLI del simulador QG de dos capas
"""
Punto de entrada de línea de comandos
Subcomandos: run | linstab | bounds | lt-check | preflight
Los errores esperados salen como una línea JSON en stderr con código de salida estable
"""

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

from scipy import fft as sp_fft

sys.path.insert(0, str(Path(__file__).resolve().parent))
from config import (
    VERSION,
    RunConfig,
    config_hash,
    load_json,
    parse_config,
    parse_model,
    serialize_config,
    setup_logging,
)
from preflight import run_preflight
from QG.bounds import constants_ledger, lieb_thirring_survey
from QG.diagnostics import build_background
from QG.errors import EXIT_CODES, ERROR_CODES, BlowUpError, OutputError, QGError, UsageError
from QG.integrator import initial_state, run
from QG.linstab import SCAN_COLUMNS, instability_scan, scan_rows
from QG.params import ModelParams
from QG.snapshots import DirectorySink, write_manifest, write_rows
from QG.spectral_core import wavenumber_lattice

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse que lanza UsageError en lugar de terminar el proceso"""

    def error(self, message):
        raise UsageError(message)


# ============================================================================
# UTILIDADES DE E/S
# ============================================================================

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"No se pudo leer {path}: {exc}") from exc


def _load_params(path: str) -> ModelParams:
    """Acepta un JSON de ModelParams o una configuración completa con clave "model" """
    data = load_json(_read_text(path))
    if "model" in data:
        return parse_config(json.dumps(data)).model
    return parse_model(data, ModelParams)


def _emit_json(payload, out: Optional[str] = None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if out:
        try:
            Path(out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"No se pudo escribir {out}: {exc}") from exc
    else:
        sys.stdout.write(text + "\n")


def _report_error(code: str, message: str, details: Optional[dict] = None) -> int:
    payload = {"error": {"code": code, "message": message, "details": details or {}}}
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")
    return EXIT_CODES.get(code, EXIT_CODES['runtime_error'])


# ============================================================================
# ANÁLISIS
# ============================================================================

def linstab_rows(p: ModelParams, K: int) -> List[list]:
    return scan_rows(instability_scan(p, K))


def bounds_payload(p: ModelParams, C: float, C_lt: float) -> dict:
    return constants_ledger(p, C=C, C_lt=C_lt).model_dump(mode="json")


def lt_payload(L: float, K: int, max_size: int, trials: int, seed: int) -> dict:
    lattice = wavenumber_lattice(L, K)
    survey = lieb_thirring_survey(lattice, range(1, max_size + 1), trials=trials, seed=seed)
    return {
        "L": L,
        "K": K,
        "trials": trials,
        "seed": seed,
        "sizes": list(survey.sizes),
        "medians": list(survey.medians),
        "maxima": list(survey.maxima),
        "slope": survey.slope,
        "calibration": survey.calibration,
        "max_ratio": survey.max_ratio,
        "within_calibration_bound": survey.max_ratio <= 4.0 * survey.calibration,
    }


# ============================================================================
# ORQUESTACIÓN DE UNA CONFIGURACIÓN
# ============================================================================

def _bounds_available(p: ModelParams) -> bool:
    return p.m > 2.5 and p.nu > 0


def _ledger_or_none(cfg: RunConfig):
    """Libro de constantes, o None si los parámetros no lo admiten (m <= 5/2, ν = 0, M no representable)"""
    p = cfg.model
    if not _bounds_available(p):
        return None
    try:
        return constants_ledger(p, C=cfg.analysis.C, C_lt=cfg.analysis.C_lt)
    except ValueError as exc:
        logger.warning(f"⚠️  Libro de constantes no disponible: {exc}")
        return None


def execute_config(cfg: RunConfig, out_dir: Optional[Path] = None) -> Path:
    """
    Ejecuta la configuración según cfg.mode y deja un manifest.json en el directorio

    Returns:
        Ruta del directorio de salida
    """
    out_dir = Path(out_dir or cfg.outputs.dir)
    if out_dir != Path(cfg.outputs.dir):
        cfg = cfg.model_copy(update={"outputs": cfg.outputs.model_copy(update={"dir": str(out_dir)})})
    check = run_preflight(cfg)
    if not check["success"]:
        reason = check["checks"]["output_dir"].get("error", "")
        raise OutputError(f"Preflight fallido: {out_dir} no es escribible ({reason})")

    config_path = out_dir / "config.json"
    try:
        config_path.write_text(serialize_config(cfg), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"No se pudo escribir {config_path}: {exc}") from exc

    p = cfg.model
    started = time.time()
    files = [config_path]
    status = "partial"
    flags = []
    ledger = _ledger_or_none(cfg)
    if ledger is None:
        flags.append("bounds_not_applicable")

    metadata = {
        "mode": cfg.mode,
        "config_hash": config_hash(cfg),
        "seed": cfg.stepper.seed,
        "version": VERSION,
        "threads": cfg.threads,
    }
    try:
        with sp_fft.set_workers(cfg.threads):
            if cfg.mode == "linstab":
                files.append(write_rows(out_dir / "linstab.csv", SCAN_COLUMNS, linstab_rows(p, cfg.lattice.K)))
            elif cfg.mode == "bounds":
                if ledger is None:
                    raise ValueError("El libro de constantes requiere m > 5/2, nu > 0 y un M representable")
                path = out_dir / "ledger.json"
                _emit_json(ledger.model_dump(mode="json"), str(path))
                files.append(path)
            elif cfg.mode == "lt-check":
                path = out_dir / "lt_check.json"
                _emit_json(lt_payload(p.L, cfg.lattice.K, 16, 20, cfg.stepper.seed), str(path))
                files.append(path)
            else:
                metadata.update(_integrate(cfg, out_dir, files))
        status = "complete"
    except BlowUpError:
        status = "blow_up"
        raise
    finally:
        write_manifest(
            out_dir, files, status,
            constants=ledger.model_dump(mode="json") if ledger else None,
            flags=flags + (ledger.flags if ledger else []),
            wall_time=time.time() - started,
            **metadata,
        )
    return out_dir


def _integrate(cfg: RunConfig, out_dir: Path, files: List[Path]) -> dict:
    p = cfg.model
    lattice = wavenumber_lattice(p.L, cfg.lattice.K, cfg.lattice.N)
    shift = None
    if cfg.analysis.background_shift:
        try:
            if not _bounds_available(p):
                raise ValueError("m <= 5/2 o nu = 0")
            shift = build_background(p.L, p.m, p.nu, C=cfg.analysis.C, kappa_T=p.kappa_T, lattice=lattice)
        except ValueError as exc:
            logger.warning(f"⚠️  Fondo ψ̄ no definido ({exc}): E se mide sin desplazamiento")

    q0 = initial_state(lattice, cfg.stepper)
    sink = DirectorySink(out_dir, cfg.outputs.diagnostics_csv, cfg.outputs.snapshot_format)
    try:
        result = run(q0, p, cfg.stepper, [sink], shift=shift)
    finally:
        files.extend(sink.files)
    logger.info(f"✅ {result.steps} pasos, sup E = {result.max_E:.6g}")
    return {"steps": result.steps, "empirical_sup_E": result.max_E, "dt_rebuilds": result.rebuilds}


# ============================================================================
# SUBCOMANDOS
# ============================================================================

def _cmd_run(args) -> int:
    cfg = parse_config(_read_text(args.config))
    out_dir = execute_config(cfg, Path(args.out) if args.out else None)
    sys.stdout.write(json.dumps({"status": "complete", "out_dir": str(out_dir)}) + "\n")
    return EXIT_CODES['ok']


def _cmd_linstab(args) -> int:
    p = _load_params(args.params)
    rows = linstab_rows(p, args.K)
    if args.out:
        write_rows(Path(args.out), SCAN_COLUMNS, rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(SCAN_COLUMNS)
        writer.writerows(rows)
    return EXIT_CODES['ok']


def _cmd_bounds(args) -> int:
    p = _load_params(args.params)
    _emit_json(bounds_payload(p, args.C, args.C_lt), args.out)
    return EXIT_CODES['ok']


def _cmd_lt_check(args) -> int:
    _emit_json(lt_payload(args.L, args.K, args.max_size, args.trials, args.seed), args.out)
    return EXIT_CODES['ok']


def _cmd_preflight(args) -> int:
    cfg = parse_config(_read_text(args.config))
    result = run_preflight(cfg)
    _emit_json(result)
    return EXIT_CODES['ok'] if result["success"] else EXIT_CODES['io_error']


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="qg", description="Simulador QG de dos capas en el plano beta")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    sub.required = True

    p_run = sub.add_parser("run", help="Ejecuta una configuración (según su mode)")
    p_run.add_argument("--config", required=True, help="Configuración JSON")
    p_run.add_argument("--out", help="Directorio de salida (sobrescribe outputs.dir)")
    p_run.set_defaults(handler=_cmd_run)

    p_lin = sub.add_parser("linstab", help="Barrido de tasas de crecimiento lineal")
    p_lin.add_argument("--params", required=True, help="JSON de parámetros del modelo")
    p_lin.add_argument("--K", type=int, default=16, help="Truncación del barrido")
    p_lin.add_argument("--out", help="CSV de salida (stdout por defecto)")
    p_lin.set_defaults(handler=_cmd_linstab)

    p_bounds = sub.add_parser("bounds", help="Libro de constantes en JSON")
    p_bounds.add_argument("--params", required=True, help="JSON de parámetros del modelo")
    p_bounds.add_argument("--C", type=float, default=1.0, help="Constante absoluta C")
    p_bounds.add_argument("--C-lt", dest="C_lt", type=float, default=1.0, help="Constante de Lieb-Thirring")
    p_bounds.add_argument("--out", help="JSON de salida (stdout por defecto)")
    p_bounds.set_defaults(handler=_cmd_bounds)

    p_lt = sub.add_parser("lt-check", help="Verificación empírica de Lieb-Thirring")
    p_lt.add_argument("--L", type=float, default=2.0 * math.pi, help="Periodo del dominio")
    p_lt.add_argument("--K", type=int, default=8, help="Truncación")
    p_lt.add_argument("--max-size", dest="max_size", type=int, default=16, help="Tamaño máximo de familia")
    p_lt.add_argument("--trials", type=int, default=20, help="Familias por tamaño")
    p_lt.add_argument("--seed", type=int, default=0, help="Semilla")
    p_lt.add_argument("--out", help="JSON de salida (stdout por defecto)")
    p_lt.set_defaults(handler=_cmd_lt_check)

    p_pre = sub.add_parser("preflight", help="Chequeos previos de una configuración")
    p_pre.add_argument("--config", required=True, help="Configuración JSON")
    p_pre.set_defaults(handler=_cmd_preflight)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Despacha el subcomando y devuelve el código de salida"""
    try:
        setup_logging()
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except QGError as exc:
        logger.error(f"❌ {exc}")
        return _report_error(exc.code, str(exc), exc.details())
    except ValueError as exc:
        logger.error(f"❌ {exc}")
        return _report_error(ERROR_CODES['config_error'], str(exc))
    except Exception as exc:
        logger.exception(f"❌ Error inesperado: {type(exc).__name__}")
        return _report_error(ERROR_CODES['runtime_error'], f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
