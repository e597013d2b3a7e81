# Núcleo numérico
"""
Primitivas de álgebra lineal densa y combinatoria.

Este módulo concentra todas las llamadas al backend (scipy.linalg,
scipy.optimize) que consumen el resto de módulos:
- QR con pivoteo de columnas y filas ordenadas por norma infinito
- Valores singulares, autovalores y autovalores generalizados
- Ecuación de Lyapunov continua (Bartels-Stewart con forma de Schur compleja)
- Asignación lineal de coste mínimo (Kuhn-Munkres)
- Mínimo de una forma cuadrática por complemento de Schur
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union
import logging

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from reduction_core.exceptions import (
    EigenvalueConvergenceError,
    NotPositiveDefiniteError,
    SingularPencilError,
    UnstableSystemError,
)

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

# Umbral relativo para declarar deficiencia de rango en R
RANK_TOLERANCE = 1e-14


def _require_finite(m: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError(f"La matriz '{name}' contiene valores no finitos")


def _require_square(m: np.ndarray, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"La matriz '{name}' debe ser cuadrada, forma recibida {m.shape}")


@dataclass(frozen=True)
class QrPivoted:
    """
    Factorización QR con pivoteo de columnas: m[:, column_permutation] = q @ r.

    Las filas se ordenan internamente por norma infinito descendente antes de
    factorizar; q se devuelve en el orden de filas original.
    """
    q: np.ndarray
    r: np.ndarray
    column_permutation: np.ndarray
    rank_deficient: bool

    @property
    def numerical_rank(self) -> int:
        diag = np.abs(np.diag(self.r))
        if diag.size == 0 or diag[0] == 0:
            return 0
        return int(np.count_nonzero(diag >= RANK_TOLERANCE * diag[0]))


def qr_pivoted_row_sorted(m: np.ndarray) -> QrPivoted:
    """
    QR con pivoteo de columnas sobre filas ordenadas por norma infinito.

    Args:
        m: Matriz real con al menos tantas filas como columnas.

    Returns:
        QrPivoted con q ortonormal, r triangular superior con diagonal no
        negativa y la permutación de columnas. La deficiencia de rango
        (|r_ii| < 1e-14 |r_11|) se informa con una bandera, nunca con error.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("qr_pivoted_row_sorted espera una matriz bidimensional")
    rows, cols = m.shape
    if rows < cols:
        raise ValueError(f"Se requieren al menos tantas filas como columnas ({rows} < {cols})")
    _require_finite(m, "m")

    if cols == 0:
        return QrPivoted(np.zeros((rows, 0)), np.zeros((0, 0)), np.zeros(0, dtype=int), False)

    row_order = np.argsort(-np.max(np.abs(m), axis=1), kind="stable")
    q_sorted, r, perm = scipy.linalg.qr(m[row_order], mode="economic", pivoting=True)

    # Normalizar signos para que diag(r) >= 0
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    r = signs[:, None] * r
    q_sorted = q_sorted * signs[None, :]

    q = np.empty_like(q_sorted)
    q[row_order] = q_sorted

    diag = np.abs(np.diag(r))
    rank_deficient = bool(diag[0] == 0 or np.any(diag < RANK_TOLERANCE * diag[0]))
    return QrPivoted(q=q, r=r, column_permutation=np.asarray(perm, dtype=int), rank_deficient=rank_deficient)


def svd_values(m: np.ndarray) -> np.ndarray:
    """Valores singulares en orden descendente."""
    m = np.asarray(m, dtype=complex)
    _require_finite(m, "m")
    if m.size == 0:
        return np.zeros(0)
    return scipy.linalg.svdvals(m)


def eigenvalues(m: np.ndarray) -> np.ndarray:
    """
    Autovalores de una matriz cuadrada.

    Raises:
        EigenvalueConvergenceError: Si el backend (LAPACK geev) no converge.
    """
    m = np.asarray(m)
    _require_square(m, "m")
    _require_finite(m, "m")
    if m.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return scipy.linalg.eigvals(m).astype(complex)
    except np.linalg.LinAlgError as e:
        logger.error(f"Fallo de convergencia en autovalores: {e}", extra={'size': m.shape[0]})
        raise EigenvalueConvergenceError(f"El cálculo de autovalores no convergió: {e}") from e


def eigen_decomposition(a: np.ndarray, e: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Autovalores y autovectores derechos de a (o del haz (a, e))."""
    a = np.asarray(a)
    _require_square(a, "a")
    _require_finite(a, "a")
    try:
        if e is None:
            values, vectors = scipy.linalg.eig(a)
        else:
            values, vectors = scipy.linalg.eig(a, np.asarray(e))
    except np.linalg.LinAlgError as err:
        raise EigenvalueConvergenceError(f"La descomposición espectral no convergió: {err}") from err
    return values.astype(complex), vectors.astype(complex)


class InfiniteEigenvalue(Enum):
    """Marca de autovalor generalizado infinito (beta = 0)."""
    INFINITE = "infinite"


PencilValue = Union[complex, InfiniteEigenvalue]


@dataclass(frozen=True)
class PencilSpectrum:
    """Espectro de un haz (a, e) con los autovalores infinitos etiquetados."""
    values: Tuple[PencilValue, ...]

    @property
    def finite(self) -> np.ndarray:
        return np.array([v for v in self.values if not isinstance(v, InfiniteEigenvalue)], dtype=complex)

    @property
    def infinite_count(self) -> int:
        return sum(1 for v in self.values if isinstance(v, InfiniteEigenvalue))

    def __len__(self) -> int:
        return len(self.values)


def generalized_eigenvalues(a: np.ndarray, e: np.ndarray) -> PencilSpectrum:
    """
    Autovalores λ del haz: a·x = λ·e·x.

    Los autovalores infinitos (beta ≈ 0) se devuelven como
    InfiniteEigenvalue.INFINITE, nunca como inf/NaN.

    Raises:
        SingularPencilError: Si alpha y beta se anulan a la vez (haz singular).
    """
    a = np.asarray(a)
    e = np.asarray(e)
    _require_square(a, "a")
    _require_square(e, "e")
    if a.shape != e.shape:
        raise ValueError(f"Las matrices del haz deben tener la misma forma: {a.shape} vs {e.shape}")
    _require_finite(a, "a")
    _require_finite(e, "e")
    n = a.shape[0]
    if n == 0:
        return PencilSpectrum(())

    try:
        alpha_beta = scipy.linalg.eig(a, e, right=False, homogeneous_eigvals=True)
    except np.linalg.LinAlgError as err:
        raise EigenvalueConvergenceError(f"QZ no convergió: {err}") from err
    alpha, beta = alpha_beta[0], alpha_beta[1]

    norm_a = max(np.linalg.norm(a, 1), np.finfo(float).tiny)
    norm_e = max(np.linalg.norm(e, 1), np.finfo(float).tiny)
    tol = 10 * n * np.finfo(float).eps

    values = []
    for al, be in zip(alpha, beta):
        small_alpha = abs(al) <= tol * norm_a
        small_beta = abs(be) <= tol * norm_e
        if small_alpha and small_beta:
            raise SingularPencilError("El haz (a, e) es singular: alpha y beta nulos simultáneamente")
        if small_beta:
            values.append(InfiniteEigenvalue.INFINITE)
        else:
            values.append(complex(al / be))
    return PencilSpectrum(tuple(values))


def solve_lyapunov(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Resuelve a·W + W·a* = rhs por Bartels-Stewart.

    Se reduce a a forma de Schur compleja a = Z T Z*, se transforma el lado
    derecho y se resuelve T X + X T* = G columna a columna (de la última a la
    primera) con sistemas triangulares superiores.

    Args:
        a: Matriz cuadrada estable (autovalores con parte real negativa).
        rhs: Lado derecho hermítico, típicamente -b b*.

    Returns:
        Solución hermítica W (real si a y rhs son reales).

    Raises:
        UnstableSystemError: Si algún autovalor de a tiene parte real >= 0.
    """
    a = np.asarray(a)
    rhs = np.asarray(rhs)
    _require_square(a, "a")
    _require_square(rhs, "rhs")
    if a.shape != rhs.shape:
        raise ValueError(f"Dimensiones incompatibles: a {a.shape}, rhs {rhs.shape}")
    _require_finite(a, "a")
    _require_finite(rhs, "rhs")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))

    t, z = scipy.linalg.schur(a.astype(complex), output="complex")
    spectrum = np.diag(t)
    if np.any(spectrum.real >= 0):
        logger.warning(
            "Lyapunov rechazado: matriz inestable",
            extra={'max_real_part': float(np.max(spectrum.real))}
        )
        raise UnstableSystemError(
            f"La matriz no es estable (max Re λ = {np.max(spectrum.real):.3e})"
        )

    g = z.conj().T @ rhs @ z
    x = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for j in range(n - 1, -1, -1):
        col = g[:, j] - x[:, j + 1:] @ t[j, j + 1:].conj()
        x[:, j] = scipy.linalg.solve_triangular(t + np.conj(t[j, j]) * eye, col, lower=False)

    w = z @ x @ z.conj().T
    w = 0.5 * (w + w.conj().T)
    if np.isrealobj(a) and np.isrealobj(rhs):
        return w.real
    return w


def linear_assignment(cost: np.ndarray) -> np.ndarray:
    """
    Permutación de coste total mínimo (algoritmo húngaro).

    Returns:
        Arreglo perm tal que la fila i se asigna a la columna perm[i].
    """
    cost = np.asarray(cost, dtype=float)
    _require_square(cost, "cost")
    _require_finite(cost, "cost")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def schur_complement_min(a: np.ndarray, b: np.ndarray, c: np.ndarray, y: np.ndarray) -> float:
    """
    Mínimo sobre x de la forma cuadrática [x; y]* [[a, b], [b*, c]] [x; y].

    El mínimo vale y* (c - b* a⁻¹ b) y y se alcanza en x = -a⁻¹ b y.

    Raises:
        NotPositiveDefiniteError: Si a no es hermítica definida positiva.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    c = np.atleast_2d(np.asarray(c, dtype=complex))
    b = np.asarray(b, dtype=complex).reshape(a.shape[0], c.shape[0])
    y = np.asarray(y, dtype=complex).reshape(-1)
    if y.shape[0] != c.shape[0]:
        raise ValueError(f"Longitud de y ({y.shape[0]}) incompatible con c {c.shape}")
    if not np.allclose(a, a.conj().T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(a).max())):
        raise NotPositiveDefiniteError("El bloque a no es hermítico")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"El bloque a no es definido positivo: {e}") from e
    schur = c - b.conj().T @ scipy.linalg.cho_solve(factor, b)
    return float(np.real(np.vdot(y, schur @ y)))
