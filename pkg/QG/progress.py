"""Estimación de tiempo de integración
Calibra la velocidad con los primeros pasos y registra el ETA periódicamente.
"""

import logging
import math
import time
from typing import Optional

logger = logging.getLogger(__name__)

CALIBRATION_STEPS = 10
LOG_INTERVAL_SECONDS = 30.0


def format_time(seconds: float) -> str:
    """Duración como HH:MM:SS, con prefijo de días ("2d 03:00:00"); "--:--:--" si no hay estimación"""
    if not math.isfinite(seconds) or seconds < 0:
        return "--:--:--"
    days, rest = divmod(int(round(seconds)), 86400)
    hours, rest = divmod(rest, 3600)
    minutes, secs = divmod(rest, 60)
    clock = f"{hours:02d}:{minutes:02d}:{secs:02d}"
    return f"{days}d {clock}" if days else clock


class StepProgress:
    """Progreso de una integración con ETA calibrado"""

    def __init__(self, t_start: float, t_end: float,
                 calibration_steps: int = CALIBRATION_STEPS,
                 log_interval: float = LOG_INTERVAL_SECONDS):
        self.t_start = t_start
        self.t_end = t_end
        self.calibration_steps = calibration_steps
        self.log_interval = log_interval
        self.started_at = time.time()
        self.last_log = self.started_at
        self.rate: Optional[float] = None

    def eta(self, t: float) -> float:
        if not self.rate:
            return -1.0
        return (self.t_end - t) / self.rate

    def update(self, t: float, steps: int) -> None:
        now = time.time()
        elapsed = now - self.started_at
        if elapsed <= 0:
            return
        self.rate = (t - self.t_start) / elapsed
        if steps == self.calibration_steps:
            logger.info(
                f"🔬 Calibración con {steps} pasos: {elapsed / steps * 1000:.1f} ms/paso "
                f"({steps / elapsed:.1f} pasos/s), "
                f"ETA {format_time(self.eta(t))}"
            )
            self.last_log = now
        elif now - self.last_log >= self.log_interval:
            span = self.t_end - self.t_start
            pct = 100.0 * (t - self.t_start) / span if span > 0 else 100.0
            logger.info(f"⏱️  t={t:.4g} ({pct:.1f}%) · ETA {format_time(self.eta(t))}")
            self.last_log = now

    def finish(self) -> float:
        elapsed = time.time() - self.started_at
        logger.info(f"✅ Integración completada en {format_time(elapsed)}")
        return elapsed
