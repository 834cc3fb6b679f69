"""Cotas analíticas del atractor
- Libro de constantes C1..C7, γ̄, ρ², ζ y la cota de dimensión d
- Envolventes temporales de E y W tras entrar en la bola absorbente
- Verificación empírica de la desigualdad de Lieb-Thirring con familias ortonormales
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.diagnostics import build_background
from QG.params import ModelParams
from QG.spectral_core import (
    Lattice,
    LayerState,
    SpectralField,
    apply_fractional_power,
    inner_product,
    project_odd_y_coeffs,
    random_field,
    sobolev_norm,
    to_grid,
)

logger = logging.getLogger(__name__)

NEAR_DEGENERATE_C6 = 1e-10
ORTHONORMAL_TOLERANCE = 1e-10

FLAG_KAPPA_T_ZERO = "kappa_T_zero"
FLAG_NOT_COMPUTABLE = "absorbing_estimate_not_computable"
FLAG_NEAR_DEGENERATE = "near_degenerate"
FLAG_BACKGROUND_TRUNCATED = "background_truncated"


# ============================================================================
# LIBRO DE CONSTANTES
# ============================================================================

class ConstantsLedger(BaseModel):
    """Constantes de la estimación absorbente y de la cota de dimensión"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    C: float
    C_lt: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: Optional[float]
    M: int
    psi_bar_l2_sq: float
    psi_bar_h1_sq: float
    psi_bar_hm_sq: float
    gamma_bar: float
    rho_sq: Optional[float]
    zeta: Optional[float]
    B: Optional[float]
    d: Optional[int]
    fractal_bound: Optional[int]
    flags: List[str] = []

    @property
    def computable(self) -> bool:
        return self.rho_sq is not None


def _check_bounds_params(p: ModelParams, C: float) -> None:
    if p.m <= 2.5:
        raise ValueError(f"Las cotas requieren m > 5/2 (m={p.m})")
    if p.nu <= 0:
        raise ValueError("Las cotas requieren nu > 0")
    if C <= 0:
        raise ValueError("C debe ser positivo")


def _zeta(p: ModelParams, C: float, C5: float, C6: float, h1_sq: float, gamma_bar: float) -> float:
    L, m = p.L, p.m
    return C * C5 * (1 + L ** 4) * L ** (2 * (m - 2)) / p.nu * (h1_sq + gamma_bar / C6)


def _bracket(p: ModelParams, C: float, C7: float, zeta: float) -> float:
    L, m, nu = p.L, p.m, p.nu
    forcing = (1 + L ** 4) * C7 ** 2 * L ** (4 * m) / (C * nu ** 2)
    transport = C * (1 + L ** 4) ** 1.5 * L ** (4 * m - 4) * (zeta + L ** 2 * (abs(p.beta) + 1) ** 2) / nu ** 2
    return forcing + transport


def _dimension_from_bracket(B: float, m: float) -> int:
    # d - 1 < B^{1/m} <= d, con d >= 1
    return max(1, math.ceil(B ** (1.0 / m)))


def constants_ledger(p: ModelParams, C: float = 1.0, C_lt: float = 1.0) -> ConstantsLedger:
    """
    Evalúa todas las constantes de la estimación

    Args:
        p: Parámetros del modelo (m > 5/2, ν > 0)
        C: Constante absoluta común (por defecto 1)
        C_lt: Constante de Lieb-Thirring que multiplica C7

    Returns:
        ConstantsLedger; con κ_T = 0 la estimación absorbente no es computable y los
        campos dependientes quedan en None con sus banderas
    """
    _check_bounds_params(p, C)
    if C_lt < 0:
        raise ValueError("C_lt no puede ser negativo")
    L, m, nu = p.L, p.m, p.nu
    kT, kM = p.kappa_T, p.kappa_M
    shift = build_background(L, m, nu, C=C, kappa_T=kT)
    flags = []
    if shift.truncated:
        flags.append(FLAG_BACKGROUND_TRUNCATED)

    C1 = C * (1 + L ** 4) * L ** (2 * m - 4) / nu
    C2 = max((abs(p.beta) + 1) ** 2, abs(kM / 2 - 2 * kT))
    C3 = min(kT, nu / (C * L ** (2 * (m - 1))))
    C4 = min(nu / (C * (1 + L ** 4) * L ** (2 * (m - 1))), nu / (C * L ** (2 * m)))
    C5 = (p.beta ** 2 + 1) + C * (1 + L ** 4) ** 2 * L ** (2 * (m - 3)) / nu + C * L ** (2 * m) * abs(kM / 2 - 2 * kT)
    C6 = min(C3, C4)
    gamma_bar = shift.gamma_bar

    if kT > 0:
        C7 = C_lt * abs(kM ** 2 / (4 * kT) - kM)
    else:
        C7 = None
        flags.append(FLAG_KAPPA_T_ZERO)

    rho_sq = zeta = B = None
    d = fractal = None
    if C6 <= 0:
        flags.append(FLAG_NOT_COMPUTABLE)
        logger.warning("⚠️  C6 = 0: la estimación absorbente no es computable (κ_T = 0)")
    else:
        if C6 < NEAR_DEGENERATE_C6:
            flags.append(FLAG_NEAR_DEGENERATE)
        rho_sq = 2.0 * gamma_bar * C5 / C6 ** 2
        zeta = _zeta(p, C, C5, C6, shift.psi_bar_h1_sq, gamma_bar)
        if C7 is not None:
            B = _bracket(p, C, C7, zeta)
            d = _dimension_from_bracket(B, m)
            fractal = 2 * d

    ledger = ConstantsLedger(
        C=C, C_lt=C_lt, C1=C1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, C7=C7, M=shift.M,
        psi_bar_l2_sq=shift.psi_bar_l2_sq, psi_bar_h1_sq=shift.psi_bar_h1_sq,
        psi_bar_hm_sq=shift.psi_bar_hm_sq, gamma_bar=gamma_bar,
        rho_sq=rho_sq, zeta=zeta, B=B, d=d, fractal_bound=fractal, flags=flags,
    )
    logger.info(f"✅ Libro de constantes: M={shift.M}, C6={C6:.6g}, d={d}")
    return ledger


def zeta_bound(p: ModelParams, ledger: ConstantsLedger) -> float:
    """Cota del promedio temporal de ‖A^{1/2} q‖²"""
    if ledger.C6 <= 0:
        raise ValueError("ζ no es computable con C6 = 0")
    return _zeta(p, ledger.C, ledger.C5, ledger.C6, ledger.psi_bar_h1_sq, ledger.gamma_bar)


def bracket_value(p: ModelParams, ledger: ConstantsLedger, zeta: float) -> float:
    """Expresión B cuya raíz m-ésima acota la dimensión"""
    if ledger.C7 is None:
        raise ValueError("C7 no está definido (κ_T = 0)")
    return _bracket(p, ledger.C, ledger.C7, zeta)


def dimension_bound(p: ModelParams, ledger: ConstantsLedger, zeta: float) -> int:
    """
    Menor entero d >= 1 con d - 1 < B^{1/m} <= d

    La dimensión fractal queda acotada por 2d.
    """
    if zeta < 0:
        raise ValueError("zeta debe ser no negativo")
    return _dimension_from_bracket(bracket_value(p, ledger, zeta), p.m)


# ============================================================================
# ENVOLVENTES TEMPORALES
# ============================================================================

def _require_absorbing(ledger: ConstantsLedger) -> None:
    if ledger.C6 <= 0:
        raise ValueError("La envolvente requiere C6 > 0")


def energy_envelope(t, E0: float, ledger: ConstantsLedger):
    """E(t) <= E0 e^{-C6 t} + γ̄/C6 (1 - e^{-C6 t})"""
    _require_absorbing(ledger)
    t = np.asarray(t, dtype=np.float64)
    decay = np.exp(-ledger.C6 * t)
    return E0 * decay + ledger.gamma_bar / ledger.C6 * (1.0 - decay)


def w_envelope(t, W0: float, E0: float, ledger: ConstantsLedger):
    """W(t) <= W0 e^{-C6 t} + C5 (E0 t e^{-C6 t} + 2γ̄/C6² (1 - e^{-C6 t} - C6 t e^{-C6 t}))"""
    _require_absorbing(ledger)
    t = np.asarray(t, dtype=np.float64)
    C6 = ledger.C6
    decay = np.exp(-C6 * t)
    forced = 2.0 * ledger.gamma_bar / C6 ** 2 * (1.0 - decay - C6 * t * decay)
    return W0 * decay + ledger.C5 * (E0 * t * decay + forced)


def a_priori_growth(t, E0: float, W0: float, ledger: ConstantsLedger) -> Tuple[np.ndarray, np.ndarray]:
    """Crecimiento a priori (E0 e^{C1 t}, W0 e^{C2 t}) previo a la estimación absorbente"""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(over="ignore"):
        return E0 * np.exp(ledger.C1 * t), W0 * np.exp(ledger.C2 * t)


# ============================================================================
# LIEB-THIRRING EMPÍRICO
# ============================================================================

def pair_inner_product(a: LayerState, b: LayerState) -> float:
    return inner_product(a.q1, b.q1) + inner_product(a.q2, b.q2)


def check_orthonormal(family: Sequence[LayerState], tol: float = ORTHONORMAL_TOLERANCE) -> None:
    k = len(family)
    gram = np.array([[pair_inner_product(family[i], family[j]) for j in range(k)] for i in range(k)])
    error = float(np.max(np.abs(gram - np.eye(k))))
    if error > tol:
        raise ValueError(f"La familia no es ortonormal (desviación {error:.3e} > {tol:g})")


def lieb_thirring_ratio(family: Sequence[LayerState]) -> float:
    """
    Constante empírica sup Σ|A^{1/2}γ_j|² / (L (Σ‖A^{3/2}γ_j‖²)^{1/2})

    γ_j se obtiene invirtiendo la PV de cada θ_j; el supremo se toma sobre la
    malla de colocación.
    """
    if not family:
        raise ValueError("La familia está vacía")
    check_orthonormal(family)
    lattice = family[0].lattice
    density = np.zeros((lattice.N, lattice.N))
    rhs_sq = 0.0
    for theta in family:
        for gamma in theta.streamfunctions():
            density += to_grid(apply_fractional_power(gamma, 1.0)) ** 2
            rhs_sq += sobolev_norm(gamma, 3.0) ** 2
    return float(np.max(density) / (lattice.L * math.sqrt(rhs_sq)))


def calibration_family(lattice: Lattice) -> List[LayerState]:
    """θ = (a cos(2πx/L), 0) con a = √2/L, de norma unidad"""
    amplitude = math.sqrt(2.0) / lattice.L
    coeffs = np.zeros(lattice.shape, dtype=np.complex128)
    coeffs[lattice.index((1, 0))] = 0.5 * amplitude
    coeffs[lattice.index((-1, 0))] = 0.5 * amplitude
    return [LayerState(SpectralField(lattice, coeffs), SpectralField.zeros(lattice))]


def random_orthonormal_family(lattice: Lattice, k: int, rng: np.random.Generator,
                              odd: bool = False) -> List[LayerState]:
    """
    k pares ortonormales aleatorios (QR de los coeficientes vectorizados en reales)

    Los coeficientes se escalan por L para que el producto euclídeo coincida con
    el producto interno de pares.
    """
    if k < 1:
        raise ValueError("k debe ser >= 1")
    columns = []
    for _ in range(k):
        pair = []
        for _ in range(2):
            coeffs = random_field(lattice, rng).coeffs
            if odd:
                coeffs = project_odd_y_coeffs(coeffs)
            pair.append(coeffs)
        stacked = np.stack(pair).ravel()
        columns.append(lattice.L * np.concatenate([stacked.real, stacked.imag]))
    basis, _ = np.linalg.qr(np.stack(columns, axis=1))
    if basis.shape[1] < k:
        raise ValueError(f"k={k} excede la dimensión de la retícula")

    half = basis.shape[0] // 2
    family = []
    for j in range(k):
        column = basis[:, j] / lattice.L
        coeffs = (column[:half] + 1j * column[half:]).reshape((2,) + lattice.shape)
        family.append(LayerState(SpectralField.from_coeffs(lattice, coeffs[0]),
                                 SpectralField.from_coeffs(lattice, coeffs[1])))
    return family


@dataclass(frozen=True)
class LiebThirringSurvey:
    sizes: Tuple[int, ...]
    medians: Tuple[float, ...]
    maxima: Tuple[float, ...]
    slope: float
    calibration: float

    @property
    def max_ratio(self) -> float:
        return max(self.maxima)


def lieb_thirring_survey(lattice: Lattice, sizes: Sequence[int] = tuple(range(1, 17)),
                         trials: int = 20, seed: int = 0, odd: bool = False) -> LiebThirringSurvey:
    """
    Mide la razón de Lieb-Thirring en familias aleatorias de cada tamaño

    Returns:
        Medianas y máximos por tamaño, pendiente del máximo frente a k y la
        razón de calibración del modo único
    """
    if trials < 1:
        raise ValueError("trials debe ser >= 1")
    rng = np.random.default_rng(seed)
    medians = []
    maxima = []
    for k in sizes:
        ratios = [lieb_thirring_ratio(random_orthonormal_family(lattice, k, rng, odd)) for _ in range(trials)]
        medians.append(float(np.median(ratios)))
        maxima.append(float(np.max(ratios)))
        logger.debug(f"LT k={k}: mediana={medians[-1]:.4g} máx={maxima[-1]:.4g}")
    slope = float(np.polyfit(np.asarray(sizes, dtype=float), maxima, 1)[0]) if len(sizes) > 1 else 0.0
    calibration = lieb_thirring_ratio(calibration_family(lattice))
    logger.info(f"🔬 Lieb-Thirring: máx={max(maxima):.4g}, calibración={calibration:.4g}, pendiente={slope:.3g}")
    return LiebThirringSurvey(tuple(int(k) for k in sizes), tuple(medians), tuple(maxima), slope, calibration)
