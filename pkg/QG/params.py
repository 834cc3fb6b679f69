"""Parámetros físicos y de integración (modelos pydantic)"""

from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelParams(BaseModel):
    """Conjunto completo de parámetros adimensionales del sistema de dos capas"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    beta: float = Field(..., description="Parámetro beta del plano beta")
    kappa_T: float = Field(..., ge=0, description="Amortiguamiento térmico (baroclínico)")
    kappa_M: float = Field(..., ge=0, description="Fricción mecánica de la capa inferior")
    nu: float = Field(..., ge=0, description="Coeficiente de hiperviscosidad")
    m: float = Field(3.0, gt=0, description="Potencia del operador A^m (m > 5/2 para las cotas)")
    L: float = Field(..., ge=1, description="Periodo del dominio")

    @property
    def inviscid(self) -> bool:
        return self.nu == 0 and self.kappa_T == 0 and self.kappa_M == 0


class StepperConfig(BaseModel):
    """Configuración del integrador temporal"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    scheme: Literal["ETDRK4", "IMEX-CNAB2"] = Field("ETDRK4", description="Esquema temporal")
    dt: float = Field(0.01, gt=0, description="Paso de tiempo (máximo en modo adaptativo)")
    adaptive: bool = Field(False, description="Reajusta dt para mantener el CFL objetivo")
    cfl_target: float = Field(0.5, gt=0, description="CFL advectivo objetivo")
    t_end: float = Field(10.0, gt=0, description="Tiempo final")
    snapshot_interval: float = Field(1.0, gt=0, description="Intervalo entre snapshots")
    diagnostics_interval: float = Field(0.1, gt=0, description="Intervalo entre diagnósticos")
    seed: int = Field(0, ge=0, description="Semilla de los datos iniciales aleatorios")
    init_amplitude: float = Field(1e-6, ge=0, description="RMS de la PV inicial por capa")
    init_band: Tuple[int, int] = Field((1, 4), description="Banda |k| del ruido inicial")
    odd_symmetry: bool = Field(True, description="Impone simetría impar en y")

    @model_validator(mode="after")
    def _check_intervals(self):
        if self.snapshot_interval < self.dt:
            raise ValueError("snapshot_interval debe ser >= dt")
        if self.diagnostics_interval < self.dt:
            raise ValueError("diagnostics_interval debe ser >= dt")
        low, high = self.init_band
        if low < 1 or high < low:
            raise ValueError("init_band debe cumplir 1 <= low <= high")
        return self
