# Geometría del espacio H2
"""
Maquinaria de núcleos reproductores en H2.

Este módulo implementa:
- SampleSet: puntos de muestreo μ ∈ C+ con valores H(μ) en caché
- Matriz de Gram de Cauchy M(μ) y su factorización P L D L* P* de alta
  precisión relativa (eliminación gaussiana con pivoteo completo que explota
  la estructura de desplazamiento de Cauchy, O(n²))
- Normas proyectadas ponderadas ‖P(μ)F‖ mediante blanqueo con el factor
- Matriz de Gram del espacio tangente M̂(λ) y ángulos entre subespacios

Convenciones:
    Núcleo reproductor v[μ](z) = (z + conj μ)⁻¹, de modo que <v[μ], F> = F(μ).
    La base tangente de un polo λ es {(z-λ)⁻¹, (z-λ)⁻²}, es decir v[a] y
    -v[a]' con a = -conj λ.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
import scipy.linalg

from reduction_core import numkit
from reduction_core.exceptions import DuplicateSampleError, NotPositiveDefiniteError

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

# Separación relativa por debajo de la cual dos puntos se consideran duplicados
DUPLICATE_TOLERANCE = 1e-12


def _is_duplicate(z: complex, points: np.ndarray, tol: float = DUPLICATE_TOLERANCE) -> np.ndarray:
    return np.abs(points - z) <= tol * np.maximum(np.abs(points), abs(z))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """
    Conjunto de puntos de muestreo en el semiplano derecho abierto.

    Es inmutable: append devuelve un conjunto nuevo que extiende al anterior,
    de modo que los conjuntos sucesivos del bucle externo quedan anidados.
    """
    mu: np.ndarray
    values: Optional[np.ndarray] = None
    closed_under_conjugation: bool = False

    def __post_init__(self):
        mu = np.array(self.mu, dtype=complex).reshape(-1)
        if mu.size and np.any(mu.real <= 0):
            raise ValueError(f"Todos los puntos deben estar en C+: {mu[mu.real <= 0].tolist()}")
        for j in range(1, mu.size):
            if np.any(_is_duplicate(mu[j], mu[:j])):
                raise DuplicateSampleError(f"Punto de muestreo duplicado: {mu[j]}")
        values = None
        if self.values is not None:
            values = np.array(self.values, dtype=complex).reshape(-1)
            if values.shape != mu.shape:
                raise ValueError(f"values tiene longitud {values.size}, se esperaban {mu.size}")
            values.setflags(write=False)
        if self.closed_under_conjugation:
            for z in mu[mu.imag != 0]:
                if not np.any(_is_duplicate(np.conj(z), mu)):
                    raise ValueError(f"El conjunto no es cerrado bajo conjugación: falta {np.conj(z)}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_points(cls, points: Sequence[complex], values: Optional[Sequence[complex]] = None,
                    close: bool = False) -> "SampleSet":
        """Crea un conjunto; con close=True añade los conjugados que falten (valores conjugados)."""
        pts = list(np.asarray(points, dtype=complex).reshape(-1))
        vals = None if values is None else list(np.asarray(values, dtype=complex).reshape(-1))
        if close:
            for i in range(len(pts)):
                z = pts[i]
                if z.imag != 0 and not np.any(_is_duplicate(np.conj(z), np.array(pts))):
                    pts.append(np.conj(z))
                    if vals is not None:
                        vals.append(np.conj(vals[i]))
        return cls(np.array(pts), None if vals is None else np.array(vals), closed_under_conjugation=close)

    @property
    def n(self) -> int:
        return int(self.mu.size)

    def __len__(self) -> int:
        return self.n

    def contains(self, z: complex, tol: float = DUPLICATE_TOLERANCE) -> bool:
        return bool(self.mu.size and np.any(_is_duplicate(complex(z), self.mu, tol)))

    def append(self, points: Sequence[complex], values: Optional[Sequence[complex]] = None) -> "SampleSet":
        points = np.asarray(points, dtype=complex).reshape(-1)
        new_values = None
        if self.values is not None:
            if values is None:
                raise ValueError("El conjunto tiene valores en caché: se requieren los valores nuevos")
            new_values = np.concatenate([self.values, np.asarray(values, dtype=complex).reshape(-1)])
        return SampleSet(np.concatenate([self.mu, points]), new_values, self.closed_under_conjugation)


PointsLike = Union[SampleSet, Sequence[complex], np.ndarray]


def as_points(samples: PointsLike) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.mu
    return np.asarray(samples, dtype=complex).reshape(-1)


def cauchy_gram(samples: PointsLike) -> np.ndarray:
    """M_jk = <v[μ_j], v[μ_k]> = (μ_j + conj μ_k)⁻¹."""
    mu = as_points(samples)
    if not isinstance(samples, SampleSet):
        SampleSet(mu)
    return 1.0 / (mu[:, None] + np.conj(mu)[None, :])


@dataclass(frozen=True, eq=False)
class CauchyFactorization:
    """
    Factores de M(μ)[perm][:, perm] = L D L*.

    whiten(x) = D^{-1/2} L⁻¹ x[perm] cumple ‖whiten(F(μ))‖ = ‖P(μ)F‖_H2.
    """
    permutation: np.ndarray
    lower: np.ndarray
    diag: np.ndarray

    @property
    def size(self) -> int:
        return int(self.diag.size)

    def whiten(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape[0] != self.size:
            raise ValueError(f"Longitud {x.shape[0]} incompatible con la factorización de tamaño {self.size}")
        if self.size == 0:
            return x.copy()
        y = scipy.linalg.solve_triangular(self.lower, x[self.permutation], lower=True, unit_diagonal=True)
        scale = 1.0 / np.sqrt(self.diag)
        return y * (scale if y.ndim == 1 else scale[:, None])

    def reconstruct(self) -> np.ndarray:
        """P L D L* P* en el orden original de los puntos."""
        permuted = (self.lower * self.diag[None, :]) @ self.lower.conj().T
        inverse = np.argsort(self.permutation)
        return permuted[np.ix_(inverse, inverse)]


def cauchy_cholesky(samples: PointsLike) -> CauchyFactorization:
    """
    Factorización LDL* de M(μ) con pivoteo completo en O(n²).

    El complemento de Schur de una matriz de Cauchy hermítica
    α_i conj(α_j) / (x_i + conj x_j) sigue siendo de Cauchy con generadores
    actualizados α_i ← α_i (x_i - x_k) / (x_i + conj x_k), por lo que cada
    entrada se forma sin restas entre cantidades grandes. En cada paso se
    pivota sobre la mayor diagonal |α_i|² / (2 Re x_i).

    Raises:
        DuplicateSampleError: Si hay puntos duplicados (M singular).
    """
    mu = as_points(samples)
    if not isinstance(samples, SampleSet):
        SampleSet(mu)
    n = mu.size
    x = mu.copy()
    alpha = np.ones(n, dtype=complex)
    perm = np.arange(n)
    lower = np.zeros((n, n), dtype=complex)
    diag = np.zeros(n)

    for k in range(n):
        pivots = np.abs(alpha[k:]) ** 2 / (2.0 * x[k:].real)
        j = k + int(np.argmax(pivots))
        if j != k:
            x[[k, j]] = x[[j, k]]
            alpha[[k, j]] = alpha[[j, k]]
            perm[[k, j]] = perm[[j, k]]
            lower[[k, j], :k] = lower[[j, k], :k]
        d = np.abs(alpha[k]) ** 2 / (2.0 * x[k].real)
        if d <= 0:
            raise DuplicateSampleError("Pivote nulo en la factorización de Cauchy: puntos duplicados")
        diag[k] = d
        lower[k, k] = 1.0
        rest = slice(k + 1, n)
        denom = x[rest] + np.conj(x[k])
        lower[rest, k] = alpha[rest] * np.conj(alpha[k]) / denom / d
        alpha[rest] *= (x[rest] - x[k]) / denom

    return CauchyFactorization(permutation=perm, lower=lower, diag=diag)


def projected_norm(fact: CauchyFactorization, values: np.ndarray) -> float:
    """‖P(μ)F‖_H2 a partir de las muestras F(μ)."""
    return float(np.linalg.norm(fact.whiten(values)))


def projected_mismatch(fact: CauchyFactorization, h_values: np.ndarray, rom_values: np.ndarray) -> float:
    """
    ‖P(μ)(H - H_r)‖_H2 = ‖D^{-1/2} L⁻¹ P (h - rom)‖₂.

    Raises:
        ValueError: Si las longitudes no coinciden con la factorización.
    """
    h_values = np.asarray(h_values, dtype=complex).reshape(-1)
    rom_values = np.asarray(rom_values, dtype=complex).reshape(-1)
    if h_values.size != fact.size or rom_values.size != fact.size:
        raise ValueError(
            f"Longitudes incompatibles: h={h_values.size}, rom={rom_values.size}, factorización={fact.size}"
        )
    return projected_norm(fact, h_values - rom_values)


# ---------------------------------------------------------------------------
# Espacio tangente
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TangentGram:
    """M̂(λ) en la base intercalada [(z-λ_1)⁻¹, (z-λ_1)⁻², (z-λ_2)⁻¹, ...]."""
    poles: np.ndarray
    mhat: np.ndarray

    def inverse_sqrt(self) -> np.ndarray:
        """M̂^{-1/2} por descomposición espectral de la matriz pequeña."""
        w, u = np.linalg.eigh(self.mhat)
        if np.min(w) <= 0:
            raise NotPositiveDefiniteError(
                f"M̂ no es definida positiva (autovalor mínimo {np.min(w):.3e})"
            )
        return (u / np.sqrt(w)[None, :]) @ u.conj().T


def _check_poles(poles: np.ndarray) -> None:
    if np.any(poles.real >= 0):
        raise ValueError(f"Los polos deben estar en el semiplano izquierdo: {poles[poles.real >= 0].tolist()}")
    for j in range(1, poles.size):
        if np.any(_is_duplicate(poles[j], poles[:j])):
            raise ValueError(f"Polo repetido: {poles[j]}")


def tangent_gram(poles: Sequence[complex]) -> TangentGram:
    """
    Bloques -(conj λ_j+λ_k)⁻¹, (conj λ_j+λ_k)⁻², -2(conj λ_j+λ_k)⁻³.
    """
    lam = np.asarray(poles, dtype=complex).reshape(-1)
    _check_poles(lam)
    s = np.conj(lam)[:, None] + lam[None, :]
    r = lam.size
    mhat = np.empty((2 * r, 2 * r), dtype=complex)
    mhat[0::2, 0::2] = -1.0 / s
    mhat[0::2, 1::2] = 1.0 / s ** 2
    mhat[1::2, 0::2] = 1.0 / s ** 2
    mhat[1::2, 1::2] = -2.0 / s ** 3
    return TangentGram(poles=lam, mhat=mhat)


def tangent_cross_gram(samples: PointsLike, poles: Sequence[complex]) -> np.ndarray:
    """C_ik = <v[μ_i], t_k>: columnas (μ_i - λ)⁻¹ y (μ_i - λ)⁻² por polo."""
    mu = as_points(samples)
    lam = np.asarray(poles, dtype=complex).reshape(-1)
    diff = mu[:, None] - lam[None, :]
    cross = np.empty((mu.size, 2 * lam.size), dtype=complex)
    cross[:, 0::2] = 1.0 / diff
    cross[:, 1::2] = 1.0 / diff ** 2
    return cross


def _blaschke(mu: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    B(a) = Π (a - μ_k)/(a + conj μ_k) y su derivada, con productos prefijo/sufijo
    para que B' sea exacta también cuando a coincide con algún μ_k.
    """
    a = points[:, None]
    f = (a - mu[None, :]) / (a + np.conj(mu)[None, :])
    fp = (2.0 * mu.real)[None, :] / (a + np.conj(mu)[None, :]) ** 2
    ones = np.ones((points.size, 1), dtype=complex)
    prefix = np.cumprod(np.hstack([ones, f[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, f[:, :0:-1]]), axis=1)[:, ::-1]
    value = prefix[:, -1] * f[:, -1] if mu.size else np.ones(points.size, dtype=complex)
    derivative = np.sum(fp * prefix * suffix, axis=1) if mu.size else np.zeros(points.size, dtype=complex)
    return value, derivative


def tangent_residual_gram(samples: PointsLike, poles: Sequence[complex]) -> np.ndarray:
    """
    Gram de (I - P(μ)) aplicado a la base tangente.

    El complemento ortogonal de V(μ) tiene núcleo B(z) conj B(w) / (z + conj w)
    con B el producto de Blaschke de las muestras, así que las entradas se
    obtienen sin restar M̂ - C* M⁻¹ C (sin cancelación para muestras agrupadas).
    """
    mu = as_points(samples)
    lam = np.asarray(poles, dtype=complex).reshape(-1)
    a = -np.conj(lam)
    b_val, b_der = _blaschke(mu, a)
    s = a[:, None] + np.conj(a)[None, :]
    bj, dj = b_val[:, None], b_der[:, None]
    bk, dk = np.conj(b_val)[None, :], np.conj(b_der)[None, :]
    r = lam.size
    gram = np.empty((2 * r, 2 * r), dtype=complex)
    gram[0::2, 0::2] = bj * bk / s
    gram[0::2, 1::2] = -bj * (dk / s - bk / s ** 2)
    gram[1::2, 0::2] = -(dj / s - bj / s ** 2) * bk
    gram[1::2, 1::2] = dj * dk / s - dj * bk / s ** 2 - bj * dk / s ** 2 + 2.0 * bj * bk / s ** 3
    return 0.5 * (gram + gram.conj().T)


def _residual_sines_squared(samples: PointsLike, poles: Sequence[complex]) -> np.ndarray:
    gram = tangent_gram(poles)
    residual = tangent_residual_gram(samples, gram.poles)
    try:
        values = scipy.linalg.eigh(residual, gram.mhat, eigvals_only=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"M̂ mal condicionada para el cálculo de ángulos: {e}") from e
    return np.clip(values, 0.0, 1.0)


def _whitened_cosines(samples: PointsLike, poles: Sequence[complex],
                      fact: Optional[CauchyFactorization]) -> Tuple[np.ndarray, int]:
    mu = as_points(samples)
    fact = fact if fact is not None else cauchy_cholesky(samples)
    gram = tangent_gram(poles)
    block = fact.whiten(tangent_cross_gram(mu, gram.poles)) @ gram.inverse_sqrt()
    cosines = np.clip(numkit.svd_values(block), 0.0, 1.0)
    return cosines, 2 * gram.poles.size


def principal_angles(samples: PointsLike, poles: Sequence[complex],
                     fact: Optional[CauchyFactorization] = None, method: str = "svd") -> np.ndarray:
    """
    Ángulos principales entre V(μ) y T(λ), en orden ascendente.

    Args:
        method: "svd" usa los valores singulares de M(μ)^{-1/2} C M̂^{-1/2}
            (con el blanqueo de la factorización de Cauchy); "residual" usa
            la Gram residual exacta del producto de Blaschke, precisa también
            cuando las muestras están agrupadas.

    Note:
        Si dim V(μ) < 2r los ángulos que faltan valen π/2.
    """
    if method == "residual":
        sines = np.sqrt(np.sort(_residual_sines_squared(samples, poles)))
        return np.arcsin(np.clip(sines, 0.0, 1.0))
    if method != "svd":
        raise ValueError(f"Método de ángulos desconocido '{method}'")
    cosines, dim = _whitened_cosines(samples, poles, fact)
    cosines = np.sort(cosines)[::-1][:dim]
    if cosines.size < dim:
        cosines = np.concatenate([cosines, np.zeros(dim - cosines.size)])
    # sin = sqrt((1-σ)(1+σ)) evita la cancelación de 1 - σ²
    sines = np.sqrt((1.0 - cosines) * (1.0 + cosines))
    return np.arctan2(sines, cosines)


ANGLE_METHODS = ("svd", "residual")


def subspace_angle_tangent(samples: PointsLike, fact: Optional[CauchyFactorization], pole: complex,
                           method: Optional[str] = None) -> float:
    """
    Ángulo máximo φ_max(V(μ), T(λ)) para un único polo, en [0, π/2].

    Sin method explícito, si se da fact se reutiliza su blanqueo sobre la
    matriz n×2 (method="svd", O(n²)); con fact=None se usa la Gram residual
    del producto de Blaschke (method="residual", O(n)), que no necesita la
    factorización y es la indicada para muestras agrupadas.

    Raises:
        ValueError: Si λ no está en el semiplano izquierdo o method es desconocido.
    """
    pole = complex(pole)
    if pole.real >= 0:
        raise ValueError(f"El polo {pole} no está en el semiplano izquierdo")
    if method is None:
        method = "svd" if fact is not None else "residual"
    return float(np.max(principal_angles(samples, [pole], fact, method=method)))


def subspace_angle_full(samples: PointsLike, poles: Sequence[complex],
                        fact: Optional[CauchyFactorization] = None, method: str = "svd") -> float:
    """Ángulo principal máximo entre V(μ) y T(λ) para todo el conjunto de polos."""
    return float(np.max(principal_angles(samples, poles, fact, method=method)))


def kernel_subspace_angle(samples: PointsLike, other: PointsLike) -> float:
    """
    Ángulo máximo de V(ν) respecto de V(μ): qué tan lejos está de V(μ) el
    peor elemento de V(ν). Vale 0 cuando ν ⊂ μ.
    """
    mu = as_points(samples)
    nu = as_points(other)
    b_val, _ = _blaschke(mu, nu)
    residual = np.outer(b_val, np.conj(b_val)) / (nu[:, None] + np.conj(nu)[None, :])
    fact = cauchy_cholesky(nu)
    w = fact.whiten(fact.whiten(residual).conj().T).conj().T
    sines_sq = np.clip(np.linalg.eigvalsh(0.5 * (w + w.conj().T)), 0.0, 1.0)
    return float(np.arcsin(np.sqrt(np.max(sines_sq)))) if sines_sq.size else 0.0


def projection_gap(samples: PointsLike, poles: Sequence[complex], coefficients: Sequence[complex]) -> float:
    """
    Distancia al cuadrado del elemento tangente Σ y_j t_j a V(μ).

    Es el mínimo sobre x de la forma cuadrática con bloques M(μ), C y M̂(λ),
    es decir y* (M̂ - C* M⁻¹ C) y.
    """
    mu = as_points(samples)
    gram = tangent_gram(poles)
    return numkit.schur_complement_min(cauchy_gram(mu), -tangent_cross_gram(mu, gram.poles), gram.mhat,
                                       np.asarray(coefficients, dtype=complex))
