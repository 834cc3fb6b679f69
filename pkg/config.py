import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

sys.path.insert(0, str(Path(__file__).resolve().parent))
from QG.errors import ConfigError
from QG.params import ModelParams, StepperConfig

load_dotenv()

VERSION = "1.0.0"
LOG_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def get_output_dir() -> str:
    """Directorio de salida por defecto (QG_OUTPUT_DIR, "runs" si no está definido)"""
    value = os.getenv('QG_OUTPUT_DIR', 'runs').strip()
    if not value:
        raise ValueError("QG_OUTPUT_DIR está vacío")
    return value


def get_num_threads() -> int:
    raw = os.getenv('QG_THREADS', '1')
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"QG_THREADS debe ser un entero (recibido '{raw}')")
    if threads < 1:
        raise ValueError("QG_THREADS debe ser >= 1")
    return threads


def get_log_level() -> str:
    level = os.getenv('QG_LOG_LEVEL', 'INFO').upper()
    if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ValueError(f"QG_LOG_LEVEL no válido: '{level}'")
    return level


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """
    Configura el logger raíz con formato estructurado hacia stderr

    stdout queda libre para las salidas CSV/JSON de la CLI.
    """
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        root.addHandler(handler)
    root.setLevel(level or get_log_level())
    return root


# ============================================================================
# CONFIGURACIÓN DE EJECUCIÓN
# ============================================================================

class LatticeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    K: int = Field(..., ge=1, description="Truncación espectral")
    N: int = Field(..., ge=3, description="Puntos de colocación (por defecto 3K)")

    @model_validator(mode="before")
    @classmethod
    def _default_collocation(cls, data):
        if isinstance(data, dict) and data.get("N") is None and isinstance(data.get("K"), int):
            data = {**data, "N": 3 * data["K"]}
        return data

    @model_validator(mode="after")
    def _check_dealiasing(self):
        if self.N < 3 * self.K:
            raise ValueError(f"N={self.N} no desaliasa: se requiere N >= 3K = {3 * self.K}")
        return self


class OutputsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dir: str = Field(default_factory=get_output_dir, description="Directorio de salida")
    snapshot_format: Literal["raw", "none"] = Field("raw", description="raw = binario + sidecar JSON")
    diagnostics_csv: str = Field("diagnostics.csv", description="Nombre del CSV de diagnósticos")


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    C: float = Field(1.0, gt=0, description="Constante absoluta de las cotas")
    C_lt: float = Field(1.0, ge=0, description="Constante de Lieb-Thirring en C7")
    background_shift: bool = Field(True, description="Mide E respecto del fondo ψ̄")


class RunConfig(BaseModel):
    """Configuración completa de una ejecución"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelParams
    stepper: StepperConfig = Field(default_factory=StepperConfig)
    lattice: LatticeConfig
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    mode: Literal["run", "linstab", "bounds", "lt-check"] = "run"
    threads: int = Field(default_factory=get_num_threads, ge=1)


def _validation_errors(exc: ValidationError) -> list:
    return [
        {"field": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
        for err in exc.errors()
    ]


def parse_model(data, model_cls):
    """Valida un dict con model_cls y traduce los errores a ConfigError"""
    try:
        return model_cls.model_validate(data)
    except ValidationError as exc:
        errors = _validation_errors(exc)
        summary = "; ".join(f"{e['field']}: {e['message']}" for e in errors)
        raise ConfigError(f"Configuración inválida: {summary}", errors) from exc


def load_json(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON mal formado: {exc}", [{"field": "", "message": str(exc)}]) from exc
    if not isinstance(data, dict):
        raise ConfigError("La configuración debe ser un objeto JSON", [{"field": "", "message": "not an object"}])
    return data


def parse_config(text: str) -> RunConfig:
    """
    Convierte un documento JSON en RunConfig validado

    Raises:
        ConfigError: JSON mal formado, claves desconocidas o valores fuera de dominio
            (el mensaje nombra cada campo con su ruta, p. ej. "model.L")
    """
    return parse_model(load_json(text), RunConfig)


def serialize_config(cfg: RunConfig) -> str:
    """JSON canónico (claves ordenadas, sin espacios)"""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()
