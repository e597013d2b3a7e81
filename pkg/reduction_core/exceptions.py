# Taxonomía de errores
"""
Excepciones del paquete reduction_core.

Todas heredan de ValueError o RuntimeError para que el código cliente que
ya captura esas excepciones estándar siga funcionando. Los resultados
degradados (rango deficiente, estancamiento, falta de convergencia) no son
errores: se informan con banderas en los objetos de resultado.
"""
from typing import Optional


class ReductionError(Exception):
    """Base común para los errores propios del paquete."""


class PoleProximityError(ReductionError, ValueError):
    """La matriz desplazada es singular: z coincide (numéricamente) con un polo."""

    def __init__(self, z: complex, message: Optional[str] = None):
        self.z = complex(z)
        super().__init__(message or f"Punto z={self.z} demasiado cercano a un polo del modelo")


class UnstableSystemError(ReductionError, ValueError):
    """El sistema tiene autovalores fuera del semiplano izquierdo abierto."""


class DuplicateSampleError(ReductionError, ValueError):
    """Dos puntos de muestreo coinciden dentro de la tolerancia relativa."""


class NotPositiveDefiniteError(ReductionError, ValueError):
    """Se esperaba una matriz hermítica definida positiva."""


class SingularPencilError(ReductionError, ValueError):
    """El haz (A, E) es singular: det(A - zE) se anula idénticamente."""


class EigenvalueConvergenceError(ReductionError, RuntimeError):
    """El backend de autovalores no convergió."""


class MatrixMarketError(ReductionError, ValueError):
    """Error de lectura de un archivo Matrix Market."""

    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class InfeasibleParametersError(ReductionError, ValueError):
    """Coeficientes de denominador no positivos (polos fuera de C-)."""


class FitFailedError(ReductionError, RuntimeError):
    """Ninguna inicialización del ajuste racional produjo un resultado válido."""


class MissingMomentsError(ReductionError, ValueError):
    """QuadVF necesita los momentos en infinito y el modelo no los proporciona."""


class UntabulatedPointError(ReductionError, ValueError):
    """Se evaluó un modelo tabulado fuera de sus puntos registrados."""


class UnsupportedModelError(ReductionError, ValueError):
    """La operación no está disponible para este tipo de modelo."""


class ConfigError(ReductionError, ValueError):
    """Configuración de experimento o de algoritmo inválida."""
