"""Diagnósticos del modelo de dos capas
- Funcionales de energía E (con desplazamiento de fondo opcional) y W
- Construcción del perfil de fondo ψ̄(y) y del número de modos M
- Balances de energía y enstrofía término a término y su residuo temporal
- Perfiles zonales u_i(y) y promedio temporal de Σ‖A^{1/2} q_i‖²
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
import sys
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid
from scipy.special import polygamma

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.params import ModelParams
from QG.spectral_core import (
    Lattice,
    LayerState,
    SpectralField,
    check_same_lattice,
    invert_pv_coeffs,
    jacobian_coeffs,
    sobolev_norm,
    wavenumber_lattice,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "t", "E", "W", "ke1", "ke2", "enstrophy1", "enstrophy2", "baroclinic",
    "h1_q", "cfl", "dt", "odd_residual", "budget_residual",
]

# margen relativo de la desigualdad estricta que fija M
MODE_COUNT_MARGIN = 1e-12
MAX_MODE_COUNT = 10 ** 15
DIRECT_SUM_LIMIT = 10 ** 6
DEFAULT_BACKGROUND_K = 64


# ============================================================================
# REGISTRO DE DIAGNÓSTICOS
# ============================================================================

class DiagnosticsRecord(BaseModel):
    """Fila de diagnósticos en un instante de salida"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    t: float
    E: float = Field(..., ge=0)
    W: float = Field(..., ge=0)
    ke1: float = Field(..., ge=0)
    ke2: float = Field(..., ge=0)
    enstrophy1: float = Field(..., ge=0)
    enstrophy2: float = Field(..., ge=0)
    baroclinic: float = Field(..., ge=0)
    h1_q: float = Field(..., ge=0)
    cfl: float = Field(..., ge=0)
    dt: float = Field(..., ge=0)
    odd_residual: float = Field(..., ge=0)
    budget_residual: float = Field(..., ge=0)

    def to_row(self) -> List[str]:
        return [repr(float(getattr(self, column))) for column in CSV_COLUMNS]


# ============================================================================
# DESPLAZAMIENTO DE FONDO
# ============================================================================

def _mode_count_lhs(C: float, L: float, m: float, M: int) -> float:
    return C * L ** (2 * m - 4) * math.sqrt(1 + L ** 4) * M ** (2.5 - m)


def choose_M(C: float, L: float, m: float, nu: float) -> int:
    """
    Menor entero positivo M con C L^{2m-4} (1+L⁴)^{1/2} M^{5/2-m} < ν/4

    La desigualdad estricta se evalúa con un margen relativo de 1e-12, de modo que
    los casos frontera se resuelven hacia el M mayor.
    """
    if m <= 2.5:
        raise ValueError(f"m={m} <= 5/2: la condición de M no es satisfacible")
    if nu <= 0:
        raise ValueError("nu debe ser positivo para construir el fondo")
    if C <= 0:
        raise ValueError("C debe ser positivo")
    target = 0.25 * nu * (1.0 - MODE_COUNT_MARGIN)
    coef = C * L ** (2 * m - 4) * math.sqrt(1 + L ** 4)
    try:
        threshold = (coef / target) ** (1.0 / (m - 2.5))
    except OverflowError:
        threshold = math.inf
    if not math.isfinite(threshold) or threshold > MAX_MODE_COUNT:
        raise ValueError(f"M fuera de rango representable (umbral {threshold:.3e})")
    M = max(1, int(math.floor(threshold)))
    while _mode_count_lhs(C, L, m, M) >= target:
        M += 1
    while M > 1 and _mode_count_lhs(C, L, m, M - 1) < target:
        M -= 1
    return M


def _inverse_square_sum(M: int) -> float:
    if M <= DIRECT_SUM_LIMIT:
        k = np.arange(1, M + 1, dtype=np.float64)
        return float(np.sum(1.0 / k ** 2))
    return float(np.pi ** 2 / 6.0 - polygamma(1, M + 1))


def _power_sum(M: int, s: float) -> float:
    """Σ_{k=1}^{M} k^s (Euler-Maclaurin para M grande)"""
    if M <= DIRECT_SUM_LIMIT:
        k = np.arange(1, M + 1, dtype=np.float64)
        return float(np.sum(k ** s))
    M = float(M)
    return M ** (s + 1) / (s + 1) + 0.5 * M ** s + s * M ** (s - 1) / 12.0


@dataclass(frozen=True, eq=False)
class BackgroundShift:
    """Perfil ψ̄(y) = -(L/π) Σ_{k<=M} sin(2πky/L)/k y sus normas exactas"""
    M: int
    C: float
    L: float
    m: float
    nu: float
    kappa_T: float
    psi_bar: SpectralField
    q_bar: SpectralField
    psi_bar_l2_sq: float
    psi_bar_h1_sq: float
    psi_bar_hm_sq: float
    truncated: bool

    def gamma_bar_for(self, kappa_T: float) -> float:
        """γ̄ = κ_T ‖ψ̄‖² + 2ν ‖A_y^{m/2} ψ̄‖²"""
        return kappa_T * self.psi_bar_l2_sq + 2.0 * self.nu * self.psi_bar_hm_sq

    @property
    def gamma_bar(self) -> float:
        return self.gamma_bar_for(self.kappa_T)


def build_background(L: float, m: float, nu: float, C: float = 1.0,
                     kappa_T: float = 0.0, lattice: Optional[Lattice] = None) -> BackgroundShift:
    """
    Construye el desplazamiento de fondo

    Args:
        L, m, nu: Parámetros del modelo
        C: Constante absoluta de la condición sobre M (por defecto 1)
        kappa_T: κ_T usado en γ̄ (puede reevaluarse con gamma_bar_for)
        lattice: Retícula donde se representa ψ̄ (por defecto K = min(M, 64))

    Returns:
        BackgroundShift; las normas provienen de la serie completa aunque la
        retícula trunque modos con k > K
    """
    M = choose_M(C, L, m, nu)
    if lattice is None:
        lattice = wavenumber_lattice(L, max(1, min(M, DEFAULT_BACKGROUND_K)))
    elif lattice.L != L:
        raise ValueError(f"La retícula tiene L={lattice.L} distinto de L={L}")
    kept = min(M, lattice.K)
    truncated = kept < M
    if truncated:
        logger.warning(f"⚠️  ψ̄ truncado a {kept} de {M} modos en la retícula K={lattice.K}")

    coeffs = np.zeros(lattice.shape, dtype=np.complex128)
    c = lattice.center
    k = np.arange(1, kept + 1)
    coeffs[c, c + k] = 1j * L / (2.0 * np.pi * k)
    coeffs[c, c - k] = -1j * L / (2.0 * np.pi * k)
    psi_bar = SpectralField(lattice, coeffs)
    q_bar = SpectralField(lattice, -(lattice.mu + 0.5) * coeffs)

    series_factor = L ** 4 / (2.0 * np.pi ** 2)
    shift = BackgroundShift(
        M=M, C=C, L=L, m=m, nu=nu, kappa_T=kappa_T,
        psi_bar=psi_bar, q_bar=q_bar,
        psi_bar_l2_sq=series_factor * _inverse_square_sum(M),
        psi_bar_h1_sq=2.0 * L ** 2 * M,
        psi_bar_hm_sq=series_factor * (2.0 * np.pi / L) ** (2 * m) * _power_sum(M, 2 * m - 2),
        truncated=truncated,
    )
    logger.debug(f"Fondo: M={M}, γ̄={shift.gamma_bar:.6g}")
    return shift


# ============================================================================
# FUNCIONALES DE ENERGÍA
# ============================================================================

def energy_E(state: LayerState, shift: Optional[BackgroundShift] = None) -> float:
    """E = ‖A^{1/2}Ψ1‖² + ‖A^{1/2}ψ2‖² + 2‖Ψ̂‖², con Ψ1 = ψ1 - ψ̄ si hay fondo"""
    psi1, psi2 = state.streamfunctions()
    if shift is not None:
        check_same_lattice(psi1, shift.psi_bar)
        psi1 = psi1 - shift.psi_bar
    psi_hat = (psi1 - psi2) * 0.5
    return sobolev_norm(psi1, 1) ** 2 + sobolev_norm(psi2, 1) ** 2 + 2.0 * sobolev_norm(psi_hat, 0) ** 2


def energy_W(state: LayerState) -> float:
    """W = Σ‖q_i‖² + Σ‖A^{1/2}ψ_i‖² + 2‖ψ̂‖²"""
    psi1, psi2 = state.streamfunctions()
    psi_hat = (psi1 - psi2) * 0.5
    return (sobolev_norm(state.q1, 0) ** 2 + sobolev_norm(state.q2, 0) ** 2
            + sobolev_norm(psi1, 1) ** 2 + sobolev_norm(psi2, 1) ** 2
            + 2.0 * sobolev_norm(psi_hat, 0) ** 2)


def energy_psi(state: LayerState) -> float:
    """½(Σ‖A^{1/2}ψ_i‖² + 2‖ψ̂‖²) = -½ Σ (q_i, ψ_i)"""
    psi1, psi2 = state.streamfunctions()
    psi_hat = (psi1 - psi2) * 0.5
    return 0.5 * (sobolev_norm(psi1, 1) ** 2 + sobolev_norm(psi2, 1) ** 2) + sobolev_norm(psi_hat, 0) ** 2


def enstrophy(state: LayerState) -> float:
    return 0.5 * (sobolev_norm(state.q1, 0) ** 2 + sobolev_norm(state.q2, 0) ** 2)


# ============================================================================
# BALANCES DE ENERGÍA Y ENSTROFÍA
# ============================================================================

def tendency_terms(state: LayerState, p: ModelParams) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Contribuciones separadas a (dq1/dt, dq2/dt) en coeficientes

    La suma de los términos lineales es M_k q_k; "jacobian" es -J(ψ_i, q_i).
    """
    lattice = state.lattice
    q = state.stacked()
    psi1, psi2 = invert_pv_coeffs(lattice, q[0], q[1])
    ikx = 1j * lattice.kx
    psi_hat = 0.5 * (psi1 - psi2)
    hyper = p.nu * lattice.wavenumber_power(2.0 * p.m)
    zero = np.zeros(lattice.shape, dtype=np.complex128)
    jac = jacobian_coeffs(lattice, np.stack([psi1, psi2]), q)
    return {
        "shear": (-ikx * q[0], zero),
        "beta": (-(p.beta + 0.5) * ikx * psi1, -(p.beta - 0.5) * ikx * psi2),
        "thermal": (p.kappa_T * psi_hat, -p.kappa_T * psi_hat),
        "drag": (zero, p.kappa_M * lattice.mu * psi2),
        "hyperviscous": (hyper * psi1, hyper * psi2),
        "jacobian": (-jac[0], -jac[1]),
    }


def _pair_inner(lattice: Lattice, fields: Tuple[np.ndarray, np.ndarray],
                others: Tuple[np.ndarray, np.ndarray]) -> float:
    total = np.vdot(others[0], fields[0]) + np.vdot(others[1], fields[1])
    return float(lattice.parseval_factor * total.real)


def budget_terms(state: LayerState, p: ModelParams) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Términos de d/dt energy_psi (contra -ψ_i) y de d/dt enstrophy (contra q_i)

    Returns:
        (energy_terms, enstrophy_terms)
    """
    lattice = state.lattice
    q = state.stacked()
    psi = invert_pv_coeffs(lattice, q[0], q[1])
    energy_terms = {}
    enstrophy_terms = {}
    for name, fields in tendency_terms(state, p).items():
        energy_terms[name] = -_pair_inner(lattice, fields, psi)
        enstrophy_terms[name] = _pair_inner(lattice, fields, (q[0], q[1]))
    return energy_terms, enstrophy_terms


def energy_budget_terms(state: LayerState, p: ModelParams) -> Dict[str, float]:
    return budget_terms(state, p)[0]


def enstrophy_budget_terms(state: LayerState, p: ModelParams) -> Dict[str, float]:
    return budget_terms(state, p)[1]


def budget_residual(state_prev: LayerState, state_next: LayerState, p: ModelParams) -> float:
    """
    Residuo normalizado de los balances de energía y enstrofía entre dos estados

    El lado derecho en el punto medio se aproxima por el promedio de los
    extremos (segundo orden). Devuelve el máximo de ambos residuos.
    """
    dt = state_next.t - state_prev.t
    if dt <= 0:
        return 0.0
    terms_prev = budget_terms(state_prev, p)
    terms_next = budget_terms(state_next, p)
    functionals = (energy_psi, enstrophy)
    residuals = []
    for i, functional in enumerate(functionals):
        rate = (functional(state_next) - functional(state_prev)) / dt
        before, after = terms_prev[i], terms_next[i]
        rhs = 0.5 * (sum(before.values()) + sum(after.values()))
        scale = max([abs(rate)] + [abs(v) for v in before.values()] + [abs(v) for v in after.values()])
        residuals.append(abs(rate - rhs) / scale if scale > 0 else 0.0)
    return max(residuals)


# ============================================================================
# PERFILES ZONALES Y PROMEDIOS
# ============================================================================

def zonal_mean_profiles(state: LayerState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    u_i(y) = -∂ψ_i/∂y promediado en x sobre la malla de colocación

    Returns:
        (y, u1, u2)
    """
    lattice = state.lattice
    q = state.stacked()
    psi1, psi2 = invert_pv_coeffs(lattice, q[0], q[1])
    y = lattice.grid
    c = lattice.center
    ky = lattice.ky[c, :]
    phase = np.exp(1j * np.outer(y, ky))
    u1 = (phase @ (-1j * ky * psi1[c, :])).real
    u2 = (phase @ (-1j * ky * psi2[c, :])).real
    return y, u1, u2


def time_average_h1(records: Iterable[DiagnosticsRecord], t_start: float) -> float:
    """Promedio trapezoidal de h1_q sobre los registros con t >= t_start"""
    tol = 1e-12 * max(1.0, abs(t_start))
    window = [r for r in records if r.t >= t_start - tol]
    if len(window) < 2 or window[-1].t <= window[0].t:
        raise ValueError(f"Ventana vacía: se necesitan al menos dos registros con t >= {t_start}")
    t = np.array([r.t for r in window])
    h1 = np.array([r.h1_q for r in window])
    return float(trapezoid(h1, t) / (t[-1] - t[0]))


def make_record(state: LayerState, previous: Optional[LayerState], p: ModelParams,
                shift: Optional[BackgroundShift] = None, cfl: float = 0.0, dt: float = 0.0,
                odd_residual: Optional[float] = None) -> DiagnosticsRecord:
    """Evalúa todos los diagnósticos de un estado (previous alimenta el residuo de balance)"""
    psi1, psi2 = state.streamfunctions()
    psi_hat = (psi1 - psi2) * 0.5
    return DiagnosticsRecord(
        t=state.t,
        E=energy_E(state, shift),
        W=energy_W(state),
        ke1=0.5 * sobolev_norm(psi1, 1) ** 2,
        ke2=0.5 * sobolev_norm(psi2, 1) ** 2,
        enstrophy1=0.5 * sobolev_norm(state.q1, 0) ** 2,
        enstrophy2=0.5 * sobolev_norm(state.q2, 0) ** 2,
        baroclinic=sobolev_norm(psi_hat, 0) ** 2,
        h1_q=sobolev_norm(state.q1, 1) ** 2 + sobolev_norm(state.q2, 1) ** 2,
        cfl=cfl,
        dt=dt,
        odd_residual=state.odd_residual() if odd_residual is None else odd_residual,
        budget_residual=0.0 if previous is None else budget_residual(previous, state, p),
    )
