"""Estabilidad lineal del modelo de dos capas
- Bloques 2×2 exactos M_k por número de onda (coeficientes a_k, b_k, c_k, d_k)
- Autovalores por la raíz compleja del discriminante completo
- Discriminante cerrado del caso no viscoso (solo como verificación cruzada)
- Barrido denso de inestabilidad sobre la retícula truncada
"""

import logging
from dataclasses import dataclass
from pathlib import Path
import sys
from typing import Dict, List, Sequence, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.params import ModelParams
from QG.spectral_core import Lattice, inversion_coefficients_array, wavenumber_lattice

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ["k1", "k2", "re_lambda_max", "im_lambda_max", "disc_re", "alpha_k", "gamma_k", "argmax"]


# ============================================================================
# ENSAMBLADO DE LOS BLOQUES
# ============================================================================

def _check_mode(k: Sequence[int]) -> Tuple[int, int]:
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        raise ValueError("k=(0,0) no tiene bloque lineal (modo medio excluido)")
    return k1, k2


def _mode_geometry(k: Tuple[int, int], L: float) -> Tuple[float, float]:
    w = 2.0 * np.pi * k[0] / L
    mu = (2.0 * np.pi / L) ** 2 * (k[0] ** 2 + k[1] ** 2)
    return w, mu


def block_entries(w: np.ndarray, mu: np.ndarray, p: ModelParams):
    """
    Entradas (a, b, c, d) de M_k, vectorizadas sobre arrays de w = 2πk1/L y μ = (2π|k|/L)²

    Los modos con μ = 0 producen un bloque nulo.
    """
    w = np.asarray(w, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    alpha, gamma = inversion_coefficients_array(mu)
    damping = np.zeros_like(mu)
    damping[mu > 0] = p.nu * mu[mu > 0] ** p.m
    thermal = 0.5 * p.kappa_T * (alpha - gamma)
    drag = p.kappa_M * mu

    a = -1j * w * (1.0 - (p.beta + 0.5) * alpha) - thermal - damping * alpha
    b = 1j * w * (p.beta + 0.5) * gamma + thermal - damping * gamma
    c = 1j * w * (p.beta - 0.5) * gamma + thermal - drag * gamma - damping * gamma
    d = 1j * w * (p.beta - 0.5) * alpha - thermal - drag * alpha - damping * alpha
    return a, b, c, d


def eigenvalues_from_entries(a, b, c, d):
    """λ± = (tr ± sqrt(tr² - 4 det))/2 con raíz compleja principal"""
    trace = a + d
    det = a * d - b * c
    root = np.sqrt(np.asarray(trace * trace - 4.0 * det, dtype=np.complex128))
    return 0.5 * (trace + root), 0.5 * (trace - root)


@dataclass(frozen=True)
class LinearBlock:
    """Bloque M_k = [[a, b], [c, d]] con sus invariantes derivados"""
    k: Tuple[int, int]
    a: complex
    b: complex
    c: complex
    d: complex
    alpha_k: float
    gamma_k: float
    trace: complex
    det_re: float
    disc_re: float

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.complex128)

    def eigenvalues(self) -> Tuple[complex, complex]:
        lam_plus, lam_minus = eigenvalues_from_entries(self.a, self.b, self.c, self.d)
        return complex(lam_plus), complex(lam_minus)


def inversion_coefficients(k: Sequence[int], L: float) -> Tuple[float, float]:
    """
    Coeficientes de inversión del modo k

    Returns:
        (alpha_k, gamma_k) con α + γ = (L/(2π|k|))²
    """
    k = _check_mode(k)
    _, mu = _mode_geometry(k, L)
    alpha, gamma = inversion_coefficients_array(np.array([mu]))
    return float(alpha[0]), float(gamma[0])


def linear_block(k: Sequence[int], p: ModelParams) -> LinearBlock:
    k = _check_mode(k)
    w, mu = _mode_geometry(k, p.L)
    a, b, c, d = (complex(x[0]) for x in block_entries(np.array([w]), np.array([mu]), p))
    alpha, gamma = inversion_coefficients(k, p.L)
    trace = a + d
    det = a * d - c * b
    return LinearBlock(
        k=k, a=a, b=b, c=c, d=d,
        alpha_k=alpha, gamma_k=gamma,
        trace=trace,
        det_re=det.real,
        disc_re=(trace * trace - 4.0 * det).real,
    )


def linear_operator(lattice: Lattice, p: ModelParams) -> np.ndarray:
    """Bloques M_k de toda la retícula, forma (2K+1, 2K+1, 2, 2); bloque nulo en k=0"""
    a, b, c, d = block_entries(lattice.kx, lattice.mu, p)
    blocks = np.empty(lattice.shape + (2, 2), dtype=np.complex128)
    blocks[..., 0, 0] = a
    blocks[..., 0, 1] = b
    blocks[..., 1, 0] = c
    blocks[..., 1, 1] = d
    return blocks


def dissipation_operator(lattice: Lattice, p: ModelParams) -> np.ndarray:
    """Parte hiperviscosa ν A^m de M_k: -ν μ^m [[α, γ], [γ, α]]"""
    damping = p.nu * lattice.wavenumber_power(2.0 * p.m)
    blocks = np.zeros(lattice.shape + (2, 2), dtype=np.complex128)
    blocks[..., 0, 0] = -damping * lattice.alpha
    blocks[..., 0, 1] = -damping * lattice.gamma
    blocks[..., 1, 0] = -damping * lattice.gamma
    blocks[..., 1, 1] = -damping * lattice.alpha
    return blocks


# ============================================================================
# AUTOVALORES Y TASAS DE CRECIMIENTO
# ============================================================================

def growth_rate(k: Sequence[int], p: ModelParams) -> float:
    """max Re λ de los dos autovalores de M_k"""
    lam_plus, lam_minus = linear_block(k, p).eigenvalues()
    return max(lam_plus.real, lam_minus.real)


def _eigenvector(block: np.ndarray, lam: complex) -> np.ndarray:
    (a, b), (c, d) = block
    scale = max(abs(a), abs(b), abs(c), abs(d), 1e-300)
    if abs(b) > 1e-14 * scale:
        v = np.array([b, lam - a], dtype=np.complex128)
    elif abs(c) > 1e-14 * scale:
        v = np.array([lam - d, c], dtype=np.complex128)
    elif abs(lam - a) <= abs(lam - d):
        v = np.array([1.0, 0.0], dtype=np.complex128)
    else:
        v = np.array([0.0, 1.0], dtype=np.complex128)
    return v / np.linalg.norm(v)


def eigenpairs(k: Sequence[int], p: ModelParams) -> List[Tuple[complex, np.ndarray]]:
    """
    Autovalores y autovectores unitarios de M_k, ordenados por Re λ decreciente

    Returns:
        [(λ_max, v_max), (λ_min, v_min)]
    """
    block = linear_block(k, p)
    pairs = [(lam, _eigenvector(block.matrix, lam)) for lam in block.eigenvalues()]
    pairs.sort(key=lambda pair: pair[0].real, reverse=True)
    return pairs


def discriminant_closed_form(k: Sequence[int], p_inviscid: ModelParams) -> float:
    """
    Δ_k = w² γ_k² ((1 - 4β²) - (2μ² - 1)²), válido solo sin disipación

    Args:
        k: Modo (no nulo)
        p_inviscid: Parámetros con ν = κ_T = κ_M = 0
    """
    if not p_inviscid.inviscid:
        raise ValueError("discriminant_closed_form solo es válido con nu = kappa_T = kappa_M = 0")
    k = _check_mode(k)
    w, mu = _mode_geometry(k, p_inviscid.L)
    _, gamma = inversion_coefficients(k, p_inviscid.L)
    beta = p_inviscid.beta
    return w ** 2 * gamma ** 2 * ((1.0 - 4.0 * beta ** 2) - (2.0 * mu ** 2 - 1.0) ** 2)


# ============================================================================
# BARRIDO DE INESTABILIDAD
# ============================================================================

@dataclass(frozen=True, eq=False)
class ScanResult:
    """Campo completo de tasas de crecimiento sobre |k_i| <= K (sin k=0)"""
    params: ModelParams
    K: int
    k1: np.ndarray
    k2: np.ndarray
    growth: np.ndarray
    frequency: np.ndarray
    disc_re: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    k_star: Tuple[int, int]
    sigma_star: float

    @property
    def unstable(self) -> bool:
        return self.sigma_star > 0

    def growth_map(self) -> Dict[Tuple[int, int], float]:
        return {(int(a), int(b)): float(g) for a, b, g in zip(self.k1, self.k2, self.growth)}


def instability_scan(p: ModelParams, K: int) -> ScanResult:
    """
    Evalúa la tasa de crecimiento en todos los modos retenidos

    Args:
        p: Parámetros del modelo
        K: Truncación del barrido

    Returns:
        ScanResult con el argmax (k*, σ*); σ* > 0 certifica inestabilidad lineal
    """
    if K < 1:
        raise ValueError("K debe ser >= 1")
    lattice = wavenumber_lattice(p.L, K)
    mask = lattice.mask
    a, b, c, d = block_entries(lattice.kx[mask], lattice.mu[mask], p)
    lam_plus, lam_minus = eigenvalues_from_entries(a, b, c, d)
    take_plus = lam_plus.real >= lam_minus.real
    lam_max = np.where(take_plus, lam_plus, lam_minus)
    trace = a + d
    disc_re = (trace * trace - 4.0 * (a * d - c * b)).real

    k1 = lattice.k1[mask]
    k2 = lattice.k2[mask]
    growth = lam_max.real
    sigma_star = float(np.max(growth))

    # entre empates (k y -k) se prefiere el semiplano k1 > 0, o k1 = 0 y k2 > 0
    tied = growth >= sigma_star - 1e-14 * max(1.0, abs(sigma_star))
    canonical = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    candidates = np.flatnonzero(tied & canonical)
    best = int(candidates[0]) if candidates.size else int(np.argmax(growth))

    result = ScanResult(
        params=p, K=K, k1=k1, k2=k2,
        growth=growth, frequency=lam_max.imag, disc_re=disc_re,
        alpha=lattice.alpha[mask], gamma=lattice.gamma[mask],
        k_star=(int(k1[best]), int(k2[best])), sigma_star=sigma_star,
    )
    status = "inestable" if result.unstable else "estable"
    logger.info(f"🔬 Barrido K={K}: σ*={sigma_star:.6g} en k*={result.k_star} ({status})")
    return result


def scan_rows(scan: ScanResult) -> List[list]:
    """Filas CSV (SCAN_COLUMNS) con la fila del argmax marcada"""
    rows = []
    for i in range(scan.k1.size):
        is_star = (int(scan.k1[i]), int(scan.k2[i])) == scan.k_star
        rows.append([
            int(scan.k1[i]), int(scan.k2[i]),
            repr(float(scan.growth[i])), repr(float(scan.frequency[i])),
            repr(float(scan.disc_re[i])), repr(float(scan.alpha[i])), repr(float(scan.gamma[i])),
            1 if is_star else 0,
        ])
    return rows


# ============================================================================
# RECETAS DE PARÁMETROS
# ============================================================================

def instability_recipe_length(target: float = 3.0 / 8.0) -> float:
    """L tal que (2π/L)⁴ = target"""
    if target <= 0:
        raise ValueError("target debe ser positivo")
    return 2.0 * np.pi * target ** -0.25


def resolving_viscosity(L: float, K: int, m: float, cutoff_rate: float = 1.0) -> float:
    """ν tal que la tasa de amortiguamiento hiperviscoso en el corte, ν (2πK/L)^{2(m-1)}, sea cutoff_rate"""
    k_cut = 2.0 * np.pi * K / L
    return float(cutoff_rate / k_cut ** (2.0 * (m - 1.0)))
