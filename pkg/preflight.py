"""
Chequeos previos a una integración
Se ejecutan antes de lanzar `run` y verifican que la configuración tiene sentido
"""

import logging
import math
import tempfile
import time
from pathlib import Path
import sys
from typing import Any, Dict

sys.path.insert(0, str(Path(__file__).resolve().parent))
from config import RunConfig
from QG.diagnostics import choose_M
from QG.linstab import instability_scan

logger = logging.getLogger(__name__)

# el barrido previo no necesita toda la retícula
PREFLIGHT_SCAN_K = 32


def _check_output_dir(out_dir: Path) -> Dict[str, Any]:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".preflight-"):
            pass
    except OSError as e:
        logger.error(f"   ❌ {out_dir} no es escribible: {e}")
        return {"status": "FAIL", "path": str(out_dir), "error": str(e), "error_type": type(e).__name__}
    logger.info(f"   ✅ {out_dir} es escribible")
    return {"status": "OK", "path": str(out_dir)}


def run_preflight(cfg: RunConfig) -> Dict[str, Any]:
    """
    Ejecuta los chequeos previos

    Returns:
        dict con success, timestamp y checks; solo un FAIL hace success = False
    """
    result = {
        "success": False,
        "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
        "checks": {}
    }
    p = cfg.model
    K = cfg.lattice.K

    logger.info("=" * 70)
    logger.info("🏥 PREFLIGHT: verificación de la configuración")
    logger.info("=" * 70)

    # ═══════════════════════════════════════════════════════════════════
    # CHECK 1: Directorio de salida
    # ═══════════════════════════════════════════════════════════════════
    logger.info("1️⃣  Directorio de salida...")
    result["checks"]["output_dir"] = _check_output_dir(Path(cfg.outputs.dir))

    # ═══════════════════════════════════════════════════════════════════
    # CHECK 2: Aplicabilidad de las cotas (m > 5/2, ν > 0)
    # ═══════════════════════════════════════════════════════════════════
    logger.info("2️⃣  Aplicabilidad de las cotas...")
    applicable = p.m > 2.5 and p.nu > 0
    reason = "m <= 5/2 o nu = 0: las cotas y el fondo no están definidos"
    if applicable:
        try:
            result["checks"]["bounds_applicable"] = {"status": "OK", "M": choose_M(cfg.analysis.C, p.L, p.m, p.nu)}
        except ValueError as e:
            applicable = False
            reason = str(e)
    if not applicable:
        logger.warning(f"   ⚠️  m={p.m}, nu={p.nu}: sin fondo ψ̄ ni libro de constantes")
        result["checks"]["bounds_applicable"] = {"status": "WARN", "reason": reason}

    # ═══════════════════════════════════════════════════════════════════
    # CHECK 3: Estabilidad lineal
    # ═══════════════════════════════════════════════════════════════════
    logger.info("3️⃣  Estabilidad lineal...")
    scan = instability_scan(p, min(K, PREFLIGHT_SCAN_K))
    result["checks"]["linear_stability"] = {
        "status": "OK",
        "unstable": scan.unstable,
        "sigma_star": scan.sigma_star,
        "k_star": list(scan.k_star),
    }

    # ═══════════════════════════════════════════════════════════════════
    # CHECK 4: Resolución de la disipación en el corte
    # ═══════════════════════════════════════════════════════════════════
    logger.info("4️⃣  Resolución de la disipación...")
    cutoff_rate = p.nu * (2.0 * math.pi * K / p.L) ** (2.0 * (p.m - 1.0))
    resolved = cutoff_rate >= max(scan.sigma_star, 0.0)
    if not resolved:
        logger.warning(f"   ⚠️  Amortiguamiento en el corte {cutoff_rate:.3g} < σ* = {scan.sigma_star:.3g}")
    result["checks"]["dissipation_resolution"] = {
        "status": "OK" if resolved else "WARN",
        "cutoff_damping_rate": cutoff_rate,
    }

    # ═══════════════════════════════════════════════════════════════════
    # CHECK 5: Estimación del número de pasos (informativo)
    # ═══════════════════════════════════════════════════════════════════
    steps = math.ceil(cfg.stepper.t_end / cfg.stepper.dt)
    logger.info(f"5️⃣  Pasos estimados: {steps} ({cfg.stepper.scheme})")
    result["checks"]["step_estimate"] = {"status": "INFO", "steps": steps, "scheme": cfg.stepper.scheme}

    result["success"] = all(check["status"] != "FAIL" for check in result["checks"].values())
    logger.info(("✅ Preflight correcto" if result["success"] else "❌ Preflight con fallos"))
    logger.info("=" * 70)
    return result
