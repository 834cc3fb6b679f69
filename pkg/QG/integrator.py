"""Integración temporal del sistema no lineal de dos capas
- ETDRK4 (Cox-Matthews) con exponenciales exactas de los bloques 2×2 M_k
- IMEX-CNAB2: Crank-Nicolson para la hiperviscosidad, Adams-Bashforth 2 para el resto
- Paso adaptativo por número CFL advectivo y detección de blow-up
- Bucle de integración con emisión de diagnósticos y snapshots a sumideros
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from QG.diagnostics import BackgroundShift, DiagnosticsRecord, energy_W, make_record
from QG.errors import BlowUpError
from QG.linstab import dissipation_operator, eigenpairs, linear_operator
from QG.params import ModelParams, StepperConfig
from QG.progress import StepProgress
from QG.spectral_core import (
    Lattice,
    LayerState,
    SpectralField,
    coeffs_to_grid,
    hermitian_projection,
    invert_pv_coeffs,
    jacobian_coeffs,
    odd_residual_coeffs,
    project_odd_y_coeffs,
    random_field,
    sobolev_norm,
)

logger = logging.getLogger(__name__)

PHI_SERIES_CUTOFF = 1e-2
PHI_SERIES_TERMS = 10
BLOWUP_FACTOR = 1e12
ODD_TOLERANCE = 1e-12
# histéresis del paso adaptativo alrededor de cfl_target
CFL_UPPER = 1.2
CFL_LOWER = 0.8
# tolerancia relativa para aterrizar en un instante de salida
LANDING_TOLERANCE = 1e-6


# ============================================================================
# PARTE LINEAL Y NO LINEAL
# ============================================================================

def _apply_blocks(blocks: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Aplica bloques (n, n, 2, 2) a coeficientes apilados (2, n, n)"""
    return np.einsum("xyij,jxy->ixy", blocks, q)


def _nonlinear_coeffs(lattice: Lattice, q: np.ndarray) -> np.ndarray:
    psi1, psi2 = invert_pv_coeffs(lattice, q[0], q[1])
    return -jacobian_coeffs(lattice, np.stack([psi1, psi2]), q)


def tendency(state: LayerState, p: ModelParams,
             nonlinear: bool = True) -> Tuple[SpectralField, SpectralField]:
    """
    Lado derecho completo (dq1/dt, dq2/dt)

    Args:
        state: Estado (q1, q2)
        p: Parámetros del modelo
        nonlinear: Si es False omite -J(ψ_i, q_i)

    Returns:
        Par de SpectralField con media nula
    """
    lattice = state.lattice
    q = state.stacked()
    rhs = _apply_blocks(linear_operator(lattice, p), q)
    if nonlinear:
        rhs = rhs + _nonlinear_coeffs(lattice, q)
    rhs[:, lattice.center, lattice.center] = 0.0
    return (SpectralField.from_coeffs(lattice, rhs[0]),
            SpectralField.from_coeffs(lattice, rhs[1]))


# ============================================================================
# FUNCIONES φ Y PRECÁLCULO
# ============================================================================

def _phi_series(Z: np.ndarray, terms: int = PHI_SERIES_TERMS) -> List[np.ndarray]:
    power = np.broadcast_to(np.eye(Z.shape[-1], dtype=np.complex128), Z.shape).copy()
    phis = [np.zeros(Z.shape, dtype=np.complex128) for _ in range(4)]
    for n in range(terms):
        for j in range(4):
            phis[j] += power / math.factorial(n + j)
        power = power @ Z
    return phis


def phi_functions(Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (exp Z, φ1(Z), φ2(Z), φ3(Z)) para una pila de bloques (..., 2, 2)

    Usa la exponencial de la matriz aumentada [[Z, I, 0, 0], [0, 0, I, 0],
    [0, 0, 0, I], [0, 0, 0, 0]], cuya primera fila de bloques es
    (e^Z, φ1, φ2, φ3). Los bloques con ‖Z‖₁ < 1e-2 usan la serie de Taylor.
    """
    Z = np.asarray(Z, dtype=np.complex128)
    n = Z.shape[-1]
    batch = Z.shape[:-2]
    flat = Z.reshape((-1, n, n))

    augmented = np.zeros((flat.shape[0], 4 * n, 4 * n), dtype=np.complex128)
    augmented[:, :n, :n] = flat
    eye = np.eye(n)
    for j in range(3):
        augmented[:, j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = eye
    top = expm(augmented)[:, :n, :]
    phis = [top[:, :, j * n:(j + 1) * n].copy() for j in range(4)]

    norm1 = np.max(np.sum(np.abs(flat), axis=-2), axis=-1)
    small = norm1 < PHI_SERIES_CUTOFF
    if np.any(small):
        series = _phi_series(flat[small])
        for j in range(4):
            phis[j][small] = series[j]
    return tuple(phi.reshape(batch + (n, n)) for phi in phis)


@dataclass(frozen=True, eq=False)
class PrecomputedLinear:
    """Operadores por modo para un paso h fijo"""
    h: float
    scheme: str
    expm_h: Optional[np.ndarray] = None
    expm_half: Optional[np.ndarray] = None
    q_half: Optional[np.ndarray] = None
    f1: Optional[np.ndarray] = None
    f2: Optional[np.ndarray] = None
    f3: Optional[np.ndarray] = None
    explicit: Optional[np.ndarray] = None
    cn_prop: Optional[np.ndarray] = None
    cn_gain: Optional[np.ndarray] = None


def build_precomputed(lattice: Lattice, p: ModelParams, h: float, scheme: str,
                      linear: Optional[np.ndarray] = None) -> PrecomputedLinear:
    """Precalcula los operadores del esquema para el paso h"""
    if h <= 0:
        raise ValueError(f"El paso h debe ser positivo (recibido {h})")
    if linear is None:
        linear = linear_operator(lattice, p)

    if scheme == "ETDRK4":
        e_full, phi1, phi2, phi3 = phi_functions(h * linear)
        e_half, phi1_half, _, _ = phi_functions(0.5 * h * linear)
        return PrecomputedLinear(
            h=h, scheme=scheme,
            expm_h=e_full,
            expm_half=e_half,
            q_half=0.5 * h * phi1_half,
            f1=h * (phi1 - 3.0 * phi2 + 4.0 * phi3),
            f2=h * (phi2 - 2.0 * phi3),
            f3=h * (-phi2 + 4.0 * phi3),
        )

    if scheme == "IMEX-CNAB2":
        dissipation = dissipation_operator(lattice, p)
        eye = np.eye(2, dtype=np.complex128)
        implicit_inv = np.linalg.inv(eye - 0.5 * h * dissipation)
        return PrecomputedLinear(
            h=h, scheme=scheme,
            explicit=linear - dissipation,
            cn_prop=implicit_inv @ (eye + 0.5 * h * dissipation),
            cn_gain=h * implicit_inv,
        )

    raise ValueError(f"Esquema desconocido: {scheme}")


# ============================================================================
# PASO ELEMENTAL
# ============================================================================

def _etdrk4_step(lattice: Lattice, q: np.ndarray, pre: PrecomputedLinear, nonlinear: bool) -> np.ndarray:
    def N(u):
        return _nonlinear_coeffs(lattice, u) if nonlinear else np.zeros_like(u)

    n_u = N(q)
    e_half_q = _apply_blocks(pre.expm_half, q)
    a = e_half_q + _apply_blocks(pre.q_half, n_u)
    n_a = N(a)
    b = e_half_q + _apply_blocks(pre.q_half, n_a)
    n_b = N(b)
    c = _apply_blocks(pre.expm_half, a) + _apply_blocks(pre.q_half, 2.0 * n_b - n_u)
    n_c = N(c)
    return (_apply_blocks(pre.expm_h, q)
            + _apply_blocks(pre.f1, n_u)
            + 2.0 * _apply_blocks(pre.f2, n_a + n_b)
            + _apply_blocks(pre.f3, n_c))


def _cnab2_step(lattice: Lattice, q: np.ndarray, pre: PrecomputedLinear, nonlinear: bool,
                history: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    forcing = _apply_blocks(pre.explicit, q)
    if nonlinear:
        forcing = forcing + _nonlinear_coeffs(lattice, q)
    # el primer paso (sin historia) es Adams-Bashforth de orden 1
    increment = forcing if history is None else 1.5 * forcing - 0.5 * history
    return _apply_blocks(pre.cn_prop, q) + _apply_blocks(pre.cn_gain, increment), forcing


def _finish(lattice: Lattice, q: np.ndarray, t: float, odd_symmetry: bool,
            limit: float) -> Tuple[np.ndarray, float]:
    """Detecta blow-up, restaura simetrías y devuelve (q, residuo impar previo)"""
    magnitude = np.abs(q)
    if not np.all(np.isfinite(q)) or float(np.max(magnitude)) > limit:
        scan = np.nan_to_num(magnitude, nan=np.inf)
        _, i, j = np.unravel_index(int(np.argmax(scan)), q.shape)
        raise BlowUpError(t, (i - lattice.K, j - lattice.K), float(scan[:, i, j].max()))
    q = hermitian_projection(q)
    q[:, lattice.center, lattice.center] = 0.0
    residual = odd_residual_coeffs(q)
    if odd_symmetry:
        q = project_odd_y_coeffs(q)
    return q, residual


def step(state: LayerState, p: ModelParams, cfg: StepperConfig, pre: PrecomputedLinear,
         nonlinear: bool = True, history: Optional[np.ndarray] = None,
         blowup_limit: float = math.inf) -> LayerState:
    """
    Avanza el estado un paso pre.h con el esquema de pre

    Raises:
        BlowUpError: Coeficientes no finitos o por encima de blowup_limit
    """
    if pre.scheme != cfg.scheme:
        raise ValueError(f"Precálculo para {pre.scheme} pero la configuración pide {cfg.scheme}")
    lattice = state.lattice
    q = state.stacked()
    with np.errstate(over="ignore", invalid="ignore"):
        if pre.scheme == "ETDRK4":
            q_new = _etdrk4_step(lattice, q, pre, nonlinear)
        else:
            q_new, _ = _cnab2_step(lattice, q, pre, nonlinear, history)
    t_new = state.t + pre.h
    q_new, _ = _finish(lattice, q_new, t_new, cfg.odd_symmetry, blowup_limit)
    return LayerState.from_stacked(lattice, q_new, t_new)


def cfl_number(state: LayerState, dt: float) -> float:
    """(max |∇ψ_i| en la malla + 1) dt / Δx; el 1 es la advección de fondo de la capa 1"""
    lattice = state.lattice
    q = state.stacked()
    psi = np.stack(invert_pv_coeffs(lattice, q[0], q[1]))
    derivs = np.stack([1j * lattice.kx * psi, 1j * lattice.ky * psi])
    g = coeffs_to_grid(derivs, lattice.K, lattice.N)
    speed = float(np.max(np.sqrt(g[0] ** 2 + g[1] ** 2)))
    return (speed + 1.0) * dt / lattice.spacing


# ============================================================================
# INTEGRADOR CON ESTADO
# ============================================================================

class Stepper:
    """Mantiene el precálculo, la historia multipaso y el paso adaptativo"""

    def __init__(self, lattice: Lattice, p: ModelParams, cfg: StepperConfig,
                 nonlinear: bool = True, blowup_limit: float = math.inf):
        self.lattice = lattice
        self.p = p
        self.cfg = cfg
        self.nonlinear = nonlinear
        self.blowup_limit = blowup_limit
        self.linear = linear_operator(lattice, p)
        self.h = cfg.dt
        self.pre = build_precomputed(lattice, p, self.h, cfg.scheme, self.linear)
        self.rebuilds = 0
        self.last_odd_residual = 0.0
        self._history: Optional[np.ndarray] = None
        self._oneoff: Optional[PrecomputedLinear] = None

    def set_dt(self, h: float) -> None:
        if h == self.h:
            return
        self.h = h
        self.pre = build_precomputed(self.lattice, self.p, h, self.cfg.scheme, self.linear)
        self._history = None
        self.rebuilds += 1
        logger.debug(f"Paso reajustado a dt={h:.6g} (reconstrucción {self.rebuilds})")

    def adapt(self, state: LayerState) -> float:
        """Reajusta dt hacia cfl_target si el modo adaptativo está activo; devuelve el CFL actual"""
        cfl = cfl_number(state, self.h)
        if not self.cfg.adaptive:
            return cfl
        target = self.cfg.cfl_target
        too_fast = cfl > CFL_UPPER * target
        too_slow = cfl < CFL_LOWER * target and self.h < self.cfg.dt
        if too_fast or too_slow:
            self.set_dt(min(self.cfg.dt, self.h * target / max(cfl, 1e-300)))
            cfl = cfl_number(state, self.h)
        return cfl

    def _precomputed_for(self, h: float) -> PrecomputedLinear:
        if h == self.h:
            return self.pre
        if self._oneoff is None or self._oneoff.h != h:
            self._oneoff = build_precomputed(self.lattice, self.p, h, self.cfg.scheme, self.linear)
        return self._oneoff

    def step(self, state: LayerState, h: Optional[float] = None) -> LayerState:
        h = self.h if h is None else h
        pre = self._precomputed_for(h)
        lattice = self.lattice
        q = state.stacked()
        with np.errstate(over="ignore", invalid="ignore"):
            if pre.scheme == "ETDRK4":
                q_new = _etdrk4_step(lattice, q, pre, self.nonlinear)
            else:
                history = self._history if pre is self.pre else None
                q_new, forcing = _cnab2_step(lattice, q, pre, self.nonlinear, history)
                self._history = forcing if pre is self.pre else None
        t_new = state.t + h
        q_new, self.last_odd_residual = _finish(lattice, q_new, t_new, self.cfg.odd_symmetry, self.blowup_limit)
        return LayerState.from_stacked(lattice, q_new, t_new)


# ============================================================================
# DATOS INICIALES
# ============================================================================

def initial_state(lattice: Lattice, cfg: StepperConfig) -> LayerState:
    """
    Ruido blanco de banda limitada, determinista por semilla

    Cada capa se escala para que su PV tenga RMS (‖q_i‖/L) igual a init_amplitude.
    """
    rng = np.random.default_rng(cfg.seed)
    layers = []
    for _ in range(2):
        q = random_field(lattice, rng, cfg.init_band)
        if cfg.odd_symmetry:
            q = SpectralField(lattice, project_odd_y_coeffs(q.coeffs))
        rms = sobolev_norm(q, 0) / lattice.L
        if rms == 0:
            raise ValueError(f"La banda {cfg.init_band} no contiene modos admisibles con K={lattice.K}")
        layers.append(q * (cfg.init_amplitude / rms))
    return LayerState(layers[0], layers[1], 0.0)


def eigenmode_state(lattice: Lattice, p: ModelParams, k: Sequence[int], amplitude: float,
                    odd: bool = False) -> LayerState:
    """
    Estado proporcional al autovector más inestable de M_k

    Con odd=True se superponen k y (k1, -k2) con signo opuesto, que comparten M_k.
    """
    k1, k2 = int(k[0]), int(k[1])
    if odd and k2 == 0:
        raise ValueError("Un modo con k2 = 0 no tiene parte impar en y")
    _, vector = eigenpairs((k1, k2), p)[0]
    layers = []
    for component in vector:
        coeffs = np.zeros(lattice.shape, dtype=np.complex128)
        c = amplitude * component
        coeffs[lattice.index((k1, k2))] += c
        coeffs[lattice.index((-k1, -k2))] += np.conj(c)
        if odd:
            coeffs[lattice.index((k1, -k2))] -= c
            coeffs[lattice.index((-k1, k2))] -= np.conj(c)
        layers.append(SpectralField(lattice, coeffs))
    return LayerState(layers[0], layers[1], 0.0)


# ============================================================================
# SUMIDEROS Y BUCLE DE INTEGRACIÓN
# ============================================================================

class OutputSink:
    """Receptor de la salida de una integración (no hace nada por defecto)"""

    def on_record(self, record: DiagnosticsRecord) -> None:
        pass

    def on_snapshot(self, state: LayerState) -> None:
        pass

    def close(self, status: str) -> None:
        pass


class MemorySink(OutputSink):
    def __init__(self):
        self.records: List[DiagnosticsRecord] = []
        self.snapshots: List[LayerState] = []
        self.status: Optional[str] = None

    def on_record(self, record: DiagnosticsRecord) -> None:
        self.records.append(record)

    def on_snapshot(self, state: LayerState) -> None:
        self.snapshots.append(state)

    def close(self, status: str) -> None:
        self.status = status


@dataclass
class RunResult:
    state: LayerState
    records: List[DiagnosticsRecord] = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0
    max_E: float = 0.0
    rebuilds: int = 0


def run(q0: LayerState, p: ModelParams, cfg: StepperConfig,
        sinks: Optional[Sequence[OutputSink]] = None,
        shift: Optional[BackgroundShift] = None,
        nonlinear: bool = True) -> RunResult:
    """
    Integra desde q0.t hasta cfg.t_end emitiendo diagnósticos y snapshots

    Los pasos se acortan para caer exactamente en los instantes de salida.

    Args:
        q0: Estado inicial (impar en y si cfg.odd_symmetry)
        p: Parámetros del modelo
        cfg: Configuración del integrador
        sinks: Receptores de registros y snapshots
        shift: Fondo ψ̄ para el funcional E (opcional)
        nonlinear: Si es False integra solo la parte lineal

    Returns:
        RunResult con el estado final y los registros emitidos

    Raises:
        BlowUpError: La integración diverge (los sumideros se cierran con "blow_up")
    """
    if cfg.odd_symmetry and q0.odd_residual() > ODD_TOLERANCE:
        raise ValueError("q0 no es impar en y: aplique project_odd_y antes de integrar")
    if cfg.t_end <= q0.t:
        raise ValueError(f"t_end={cfg.t_end} debe ser posterior a t0={q0.t}")

    sinks = list(sinks or [])
    lattice = q0.lattice
    limit = BLOWUP_FACTOR * max(energy_W(q0), 1.0)
    stepper = Stepper(lattice, p, cfg, nonlinear, blowup_limit=limit)
    records: List[DiagnosticsRecord] = []

    def emit(state: LayerState, previous: Optional[LayerState], h: float, odd: float) -> None:
        record = make_record(state, previous, p, shift=shift, cfl=cfl_number(state, stepper.h),
                             dt=h, odd_residual=odd)
        records.append(record)
        for sink in sinks:
            sink.on_record(record)

    def snapshot(state: LayerState) -> None:
        for sink in sinks:
            sink.on_snapshot(state)

    logger.info(
        f"🔬 Integrando {cfg.scheme} K={lattice.K} N={lattice.N} dt={cfg.dt} "
        f"hasta t={cfg.t_end} ({'adaptativo' if cfg.adaptive else 'paso fijo'})"
    )
    started = time.time()
    progress = StepProgress(q0.t, cfg.t_end)
    state = q0
    steps = 0
    status = "partial"
    try:
        stepper.adapt(state)
        emit(state, None, stepper.h, state.odd_residual())
        snapshot(state)
        next_diag = q0.t + cfg.diagnostics_interval
        next_snap = q0.t + cfg.snapshot_interval
        tol = 1e-9 * cfg.dt

        while state.t < cfg.t_end - tol:
            stepper.adapt(state)
            h = stepper.h
            target = min(next_diag, next_snap, cfg.t_end)
            remaining = target - state.t
            landing = remaining <= h * (1.0 + LANDING_TOLERANCE)
            h_step = h if remaining >= h * (1.0 - LANDING_TOLERANCE) else remaining

            previous = state
            state = stepper.step(state, h_step)
            if landing:
                state = LayerState(state.q1, state.q2, target)
            steps += 1
            progress.update(state.t, steps)

            if state.t >= next_diag - tol:
                emit(state, previous, h_step, stepper.last_odd_residual)
                while next_diag <= state.t + tol:
                    next_diag += cfg.diagnostics_interval
            if state.t >= next_snap - tol:
                snapshot(state)
                while next_snap <= state.t + tol:
                    next_snap += cfg.snapshot_interval
        status = "complete"
    except BlowUpError as exc:
        status = "blow_up"
        logger.error(f"❌ {exc}")
        raise
    finally:
        for sink in sinks:
            sink.close(status)

    progress.finish()
    return RunResult(
        state=state,
        records=records,
        steps=steps,
        wall_time=time.time() - started,
        max_E=max(r.E for r in records),
        rebuilds=stepper.rebuilds,
    )
