"""Jerarquía de errores del simulador QG de dos capas

Todos los errores esperados heredan de QGError para que la CLI pueda
traducirlos a un JSON de error y a un código de salida estable.
"""

from typing import Optional, Tuple

ERROR_CODES = {
    'usage_error': 'usage_error',
    'config_error': 'config_error',
    'lattice_mismatch': 'lattice_mismatch',
    'invalid_field': 'invalid_field',
    'dealiasing': 'dealiasing',
    'blow_up': 'blow_up',
    'io_error': 'io_error',
    'runtime_error': 'runtime_error',
}

EXIT_CODES = {
    'ok': 0,
    'runtime_error': 1,
    'usage_error': 2,
    'config_error': 3,
    'lattice_mismatch': 3,
    'invalid_field': 3,
    'dealiasing': 3,
    'blow_up': 4,
    'io_error': 5,
}


class QGError(Exception):
    """Error base del paquete"""
    code = ERROR_CODES['runtime_error']

    def details(self) -> dict:
        return {}


class LatticeMismatchError(QGError, ValueError):
    code = ERROR_CODES['lattice_mismatch']


class SpectralFieldError(QGError, ValueError):
    code = ERROR_CODES['invalid_field']


class DealiasingError(QGError, ValueError):
    code = ERROR_CODES['dealiasing']


class ConfigError(QGError, ValueError):
    """Configuración inválida; `errors` lista {field, message} por campo"""
    code = ERROR_CODES['config_error']

    def __init__(self, message: str, errors: Optional[list] = None):
        super().__init__(message)
        self.errors = errors or []

    def details(self) -> dict:
        return {"fields": self.errors}


class BlowUpError(QGError, ArithmeticError):
    """La integración produjo coeficientes no finitos o fuera de escala"""
    code = ERROR_CODES['blow_up']

    def __init__(self, t: float, max_mode: Tuple[int, int], magnitude: float):
        self.t = float(t)
        self.max_mode = (int(max_mode[0]), int(max_mode[1]))
        self.magnitude = float(magnitude)
        super().__init__(
            f"Blow-up en t={self.t:.6g}: modo {self.max_mode} con |q_k|={self.magnitude:.3e}"
        )

    def details(self) -> dict:
        return {"t": self.t, "max_mode": list(self.max_mode), "magnitude": self.magnitude}


class OutputError(QGError, OSError):
    code = ERROR_CODES['io_error']


class UsageError(QGError):
    """Invocación incorrecta de la línea de comandos"""
    code = ERROR_CODES['usage_error']
