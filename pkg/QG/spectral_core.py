"""Núcleo espectral del modelo QG de dos capas
- Retícula de números de onda |k1|, |k2| <= K sobre el dominio periódico [0, L)²
- Campos espectrales reales de media cero (coeficientes de Fourier truncados)
- Potencias fraccionarias de A = -Δ, normas de Sobolev e inversión de la PV
- Jacobiano pseudo-espectral sin aliasing y proyección de simetría impar en y

Convención de almacenamiento ("rowmajor-k"): coeffs[k1 + K, k2 + K], eje 0 = x,
eje 1 = y. Las normas usan el factor de Parseval L²: ‖u‖² = L² Σ |u_k|².
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
import sys
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from pydantic import BaseModel, ConfigDict, Field

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.errors import DealiasingError, LatticeMismatchError, SpectralFieldError

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-9
LAYOUT = "rowmajor-k"


# ============================================================================
# RETÍCULA DE NÚMEROS DE ONDA
# ============================================================================

class _Wavenumbers(NamedTuple):
    k1: np.ndarray
    k2: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    mu: np.ndarray
    mask: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray


def inversion_coefficients_array(mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    α = (μ + 1/2)/(μ² + μ), γ = (1/2)/(μ² + μ) para μ = (2π|k|/L)² > 0

    Los modos con μ = 0 devuelven 0 (el modo medio no se invierte).
    """
    mu = np.asarray(mu, dtype=np.float64)
    alpha = np.zeros_like(mu)
    gamma = np.zeros_like(mu)
    positive = mu > 0
    denom = mu[positive] ** 2 + mu[positive]
    alpha[positive] = (mu[positive] + 0.5) / denom
    gamma[positive] = 0.5 / denom
    return alpha, gamma


@lru_cache(maxsize=64)
def _wavenumbers(L: float, K: int) -> _Wavenumbers:
    idx = np.arange(-K, K + 1)
    k1, k2 = np.meshgrid(idx, idx, indexing="ij")
    kx = 2.0 * np.pi * k1 / L
    ky = 2.0 * np.pi * k2 / L
    mu = kx ** 2 + ky ** 2
    mask = (k1 != 0) | (k2 != 0)
    alpha, gamma = inversion_coefficients_array(mu)
    arrays = _Wavenumbers(k1, k2, kx, ky, mu, mask, alpha, gamma)
    for arr in arrays:
        arr.setflags(write=False)
    return arrays


class Lattice(BaseModel):
    """Retícula truncada |k_i| <= K con N puntos de colocación por dirección"""
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)

    L: float = Field(..., ge=1, description="Periodo del dominio")
    K: int = Field(..., ge=1, description="Truncación espectral")
    N: int = Field(..., ge=3, description="Puntos de colocación por dirección")

    @property
    def arrays(self) -> _Wavenumbers:
        return _wavenumbers(float(self.L), int(self.K))

    @property
    def size(self) -> int:
        return 2 * self.K + 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    @property
    def center(self) -> int:
        return self.K

    @property
    def k1(self) -> np.ndarray:
        return self.arrays.k1

    @property
    def k2(self) -> np.ndarray:
        return self.arrays.k2

    @property
    def kx(self) -> np.ndarray:
        return self.arrays.kx

    @property
    def ky(self) -> np.ndarray:
        return self.arrays.ky

    @property
    def mu(self) -> np.ndarray:
        """μ = (2π|k|/L)², autovalor de A en cada modo"""
        return self.arrays.mu

    @property
    def mask(self) -> np.ndarray:
        return self.arrays.mask

    @property
    def alpha(self) -> np.ndarray:
        return self.arrays.alpha

    @property
    def gamma(self) -> np.ndarray:
        return self.arrays.gamma

    @property
    def parseval_factor(self) -> float:
        return float(self.L) ** 2

    @property
    def dealias_size(self) -> int:
        # con N = 3K queda una capa de aliasing (2K -> -K); 3K+1 la elimina
        return max(self.N, 3 * self.K + 1)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.N) * (self.L / self.N)

    @property
    def spacing(self) -> float:
        return self.L / self.N

    def wavenumber_power(self, s: float) -> np.ndarray:
        """(2π|k|/L)^s en cada modo retenido, 0 en k = 0"""
        out = np.zeros(self.shape)
        out[self.mask] = self.mu[self.mask] ** (0.5 * s)
        return out

    def index(self, k: Sequence[int]) -> Tuple[int, int]:
        k1, k2 = int(k[0]), int(k[1])
        if abs(k1) > self.K or abs(k2) > self.K:
            raise SpectralFieldError(f"Modo {(k1, k2)} fuera de la retícula K={self.K}")
        return (k1 + self.K, k2 + self.K)

    def same_as(self, other: "Lattice") -> bool:
        return (self.L, self.K, self.N) == (other.L, other.K, other.N)


def wavenumber_lattice(L: float, K: int, N: Optional[int] = None) -> Lattice:
    """
    Construye la retícula de números de onda

    Args:
        L: Periodo del dominio (>= 1)
        K: Truncación (>= 1)
        N: Puntos de colocación (por defecto 3K)

    Returns:
        Lattice validada
    """
    if not np.isfinite(L) or L < 1:
        raise ValueError(f"L debe ser >= 1 (recibido {L})")
    if int(K) != K or K < 1:
        raise ValueError(f"K debe ser un entero >= 1 (recibido {K})")
    K = int(K)
    if N is None:
        N = 3 * K
    if N < 3 * K:
        raise DealiasingError(f"N={N} insuficiente para desaliasar: se requiere N >= 3K = {3 * K}")
    return Lattice(L=float(L), K=K, N=int(N))


def check_same_lattice(*fields: "SpectralField") -> Lattice:
    lattice = fields[0].lattice
    for other in fields[1:]:
        if not lattice.same_as(other.lattice):
            raise LatticeMismatchError(
                f"Retículas distintas: (L={lattice.L}, K={lattice.K}, N={lattice.N}) "
                f"vs (L={other.lattice.L}, K={other.lattice.K}, N={other.lattice.N})"
            )
    return lattice


# ============================================================================
# CAMPO ESPECTRAL
# ============================================================================

def hermitian_projection(coeffs: np.ndarray) -> np.ndarray:
    """(u + conj(u_{-k}))/2 sobre los dos últimos ejes"""
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1, ::-1]))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Campo real de media cero representado por sus coeficientes truncados"""
    lattice: Lattice
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if coeffs.shape != self.lattice.shape:
            raise SpectralFieldError(
                f"Forma {coeffs.shape} incompatible con la retícula {self.lattice.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise SpectralFieldError("Coeficientes NaN/Inf en el campo espectral")
        c = self.lattice.center
        if coeffs[c, c] != 0:
            raise SpectralFieldError("El coeficiente k=(0,0) debe ser cero (media nula)")
        scale = float(np.max(np.abs(coeffs)))
        if np.max(np.abs(coeffs - np.conj(coeffs[::-1, ::-1]))) > HERMITIAN_TOLERANCE * scale:
            raise SpectralFieldError("Coeficientes sin simetría hermítica (campo no real)")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.shape, dtype=np.complex128))

    @classmethod
    def from_coeffs(cls, lattice: Lattice, coeffs: np.ndarray) -> "SpectralField":
        """Proyecta a simetría hermítica y anula el modo medio antes de construir"""
        arr = hermitian_projection(np.asarray(coeffs, dtype=np.complex128))
        arr[lattice.center, lattice.center] = 0.0
        return cls(lattice, arr)

    def coefficient(self, k: Sequence[int]) -> complex:
        return complex(self.coeffs[self.lattice.index(k)])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        check_same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        check_same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.lattice, -self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * float(scalar))

    __rmul__ = __mul__


def fourier_mode(lattice: Lattice, k: Sequence[int], coeff: complex = 1.0) -> SpectralField:
    """Campo real con u_k = coeff y u_{-k} = conj(coeff)"""
    if int(k[0]) == 0 and int(k[1]) == 0:
        raise SpectralFieldError("k=(0,0) no es un modo admisible")
    arr = np.zeros(lattice.shape, dtype=np.complex128)
    arr[lattice.index(k)] = coeff
    arr[lattice.index((-int(k[0]), -int(k[1])))] = np.conj(coeff)
    return SpectralField(lattice, arr)


def random_field(lattice: Lattice, rng: np.random.Generator,
                 band: Optional[Tuple[float, float]] = None) -> SpectralField:
    """
    Ruido blanco complejo hermitiano, opcionalmente limitado a la banda low <= |k| <= high

    Args:
        lattice: Retícula destino
        rng: Generador numpy (determinista por semilla)
        band: (low, high) en unidades de índice |k| = sqrt(k1² + k2²)
    """
    arr = rng.standard_normal(lattice.shape) + 1j * rng.standard_normal(lattice.shape)
    if band is not None:
        kabs = np.hypot(lattice.k1, lattice.k2)
        arr = np.where((kabs >= band[0]) & (kabs <= band[1]), arr, 0.0)
    return SpectralField.from_coeffs(lattice, arr)


# ============================================================================
# TRANSFORMADAS ESPECTRO <-> MALLA
# ============================================================================

def coeffs_to_grid(coeffs: np.ndarray, K: int, n: int) -> np.ndarray:
    """Evalúa u(x_j) = Σ u_k e^{2πi k·x_j/L} en una malla n×n (ejes finales)"""
    if n < 2 * K + 1:
        raise DealiasingError(f"Malla n={n} demasiado pequeña para K={K}")
    idx = np.arange(-K, K + 1) % n
    padded = np.zeros(coeffs.shape[:-2] + (n, n), dtype=np.complex128)
    padded[..., idx[:, None], idx[None, :]] = coeffs
    return sp_fft.ifft2(padded, norm="forward").real


def grid_to_coeffs(values: np.ndarray, K: int) -> np.ndarray:
    """Coeficientes |k_i| <= K de valores reales en una malla n×n (ejes finales)"""
    n = values.shape[-1]
    if n < 2 * K + 1:
        raise DealiasingError(f"Malla n={n} demasiado pequeña para K={K}")
    spectrum = sp_fft.fft2(values, norm="forward")
    idx = np.arange(-K, K + 1) % n
    return spectrum[..., idx[:, None], idx[None, :]]


def to_grid(u: SpectralField, n: Optional[int] = None) -> np.ndarray:
    """Valores físicos en la malla x_j = jL/n (por defecto n = N); eje 0 = x"""
    return coeffs_to_grid(u.coeffs, u.lattice.K, n or u.lattice.N)


def from_grid(lattice: Lattice, values: np.ndarray) -> SpectralField:
    """Truncación espectral de un campo físico; la media se descarta"""
    values = np.asarray(values, dtype=np.float64)
    return SpectralField.from_coeffs(lattice, grid_to_coeffs(values, lattice.K))


def derivative(u: SpectralField, axis: int) -> SpectralField:
    """∂u/∂x (axis=0) o ∂u/∂y (axis=1)"""
    wavenumber = u.lattice.kx if axis == 0 else u.lattice.ky
    return SpectralField(u.lattice, 1j * wavenumber * u.coeffs)


# ============================================================================
# OPERADORES Y NORMAS
# ============================================================================

def apply_fractional_power(u: SpectralField, s: float) -> SpectralField:
    """Multiplica cada coeficiente por (2π|k|/L)^s, es decir aplica A^{s/2}"""
    return SpectralField(u.lattice, u.coeffs * u.lattice.wavenumber_power(s))


def sobolev_norm(u: SpectralField, s: float) -> float:
    """‖A^{s/2} u‖ = L (Σ (2π|k|/L)^{2s} |u_k|²)^{1/2}"""
    weights = u.lattice.wavenumber_power(2.0 * s)
    return float(u.lattice.L * np.sqrt(np.sum(weights * np.abs(u.coeffs) ** 2)))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """Producto interno L² con el factor de Parseval"""
    check_same_lattice(u, v)
    return float(u.lattice.parseval_factor * np.real(np.vdot(v.coeffs, u.coeffs)))


def invert_pv_coeffs(lattice: Lattice, q1: np.ndarray, q2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    alpha, gamma = lattice.alpha, lattice.gamma
    return -alpha * q1 - gamma * q2, -gamma * q1 - alpha * q2


def forward_pv_coeffs(lattice: Lattice, psi1: np.ndarray, psi2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu = lattice.mu
    psi_hat = 0.5 * (psi1 - psi2)
    return -mu * psi1 - psi_hat, -mu * psi2 + psi_hat


def invert_pv(q1: SpectralField, q2: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """
    Resuelve el sistema elíptico acoplado por modo:
    ψ1 = -α q1 - γ q2, ψ2 = -γ q1 - α q2
    """
    lattice = check_same_lattice(q1, q2)
    psi1, psi2 = invert_pv_coeffs(lattice, q1.coeffs, q2.coeffs)
    return SpectralField(lattice, psi1), SpectralField(lattice, psi2)


def forward_pv(psi1: SpectralField, psi2: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """q1 = Δψ1 - ψ̂, q2 = Δψ2 + ψ̂ con ψ̂ = (ψ1 - ψ2)/2"""
    lattice = check_same_lattice(psi1, psi2)
    q1, q2 = forward_pv_coeffs(lattice, psi1.coeffs, psi2.coeffs)
    return SpectralField(lattice, q1), SpectralField(lattice, q2)


def jacobian_coeffs(lattice: Lattice, psi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """
    J(ψ, q) = ψ_x q_y - ψ_y q_x evaluado en la malla desaliasada

    Admite ejes iniciales de lote (p. ej. las dos capas a la vez).
    """
    K = lattice.K
    ikx = 1j * lattice.kx
    iky = 1j * lattice.ky
    derivs = np.stack([ikx * psi, iky * psi, ikx * q, iky * q])
    g = coeffs_to_grid(derivs, K, lattice.dealias_size)
    product = g[0] * g[3] - g[1] * g[2]
    out = grid_to_coeffs(product, K)
    out[..., K, K] = 0.0
    return hermitian_projection(out)


def jacobian(psi: SpectralField, q: SpectralField) -> SpectralField:
    lattice = check_same_lattice(psi, q)
    return SpectralField(lattice, jacobian_coeffs(lattice, psi.coeffs, q.coeffs))


# ============================================================================
# SIMETRÍA IMPAR EN Y
# ============================================================================

def project_odd_y_coeffs(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs - coeffs[..., ::-1])


def odd_residual_coeffs(coeffs: np.ndarray) -> float:
    total = np.linalg.norm(coeffs)
    if total == 0:
        return 0.0
    even = 0.5 * (coeffs + coeffs[..., ::-1])
    return float(np.linalg.norm(even) / total)


def project_odd_y(u: SpectralField) -> SpectralField:
    """u(x, -y) = -u(x, y): u_{(k1,-k2)} = -u_{(k1,k2)}; idempotente bit a bit"""
    return SpectralField(u.lattice, project_odd_y_coeffs(u.coeffs))


def odd_residual(u: SpectralField) -> float:
    """‖parte par‖ / ‖u‖ (0 para u = 0)"""
    return odd_residual_coeffs(u.coeffs)


# ============================================================================
# ESTADO DE DOS CAPAS
# ============================================================================

@dataclass(frozen=True, eq=False)
class LayerState:
    """Par (q1, q2) de vorticidad potencial en un instante t"""
    q1: SpectralField
    q2: SpectralField
    t: float = 0.0

    def __post_init__(self):
        check_same_lattice(self.q1, self.q2)
        object.__setattr__(self, "t", float(self.t))

    @property
    def lattice(self) -> Lattice:
        return self.q1.lattice

    @classmethod
    def zeros(cls, lattice: Lattice, t: float = 0.0) -> "LayerState":
        return cls(SpectralField.zeros(lattice), SpectralField.zeros(lattice), t)

    @classmethod
    def from_stacked(cls, lattice: Lattice, stacked: np.ndarray, t: float) -> "LayerState":
        return cls(SpectralField(lattice, stacked[0]), SpectralField(lattice, stacked[1]), t)

    def stacked(self) -> np.ndarray:
        return np.stack([self.q1.coeffs, self.q2.coeffs])

    def streamfunctions(self) -> Tuple[SpectralField, SpectralField]:
        return invert_pv(self.q1, self.q2)

    def odd_residual(self) -> float:
        return odd_residual_coeffs(self.stacked())

    def project_odd_y(self) -> "LayerState":
        return LayerState(project_odd_y(self.q1), project_odd_y(self.q2), self.t)
