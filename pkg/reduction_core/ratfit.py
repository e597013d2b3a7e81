# Ajuste racional ponderado (bucle interno)
"""
Aproximación racional real por mínimos cuadrados ponderados.

Este módulo implementa:
- Parametrización en fracciones parciales de dos términos con b > 0
  (todos los polos en el semiplano izquierdo)
- Proyección de variables (VARPRO): residuo y jacobiano respecto de b con
  los coeficientes lineales a eliminados mediante QR pivotada
- Ajuste con región de confianza reflectiva y cotas b >= b_min
  (scipy.optimize.least_squares, método 'trf')
- Inicialización con AAA y reparación de parejas conjugadas (Kuhn-Munkres)

La ponderación es intercambiable: la factorización de Cauchy de h2space
(norma H2 proyectada) o una ponderación diagonal (cuadratura de QuadVF).
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple
import logging

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares

from reduction_core import numkit
from reduction_core.exceptions import (
    ConfigError,
    FitFailedError,
    InfeasibleParametersError,
    PoleProximityError,
    SingularPencilError,
)
from reduction_core.h2space import PointsLike, as_points
from reduction_core.systems import RationalRom, conjugate_pairing

# Configurar logger para este módulo
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    """Parámetros del optimizador y de la inicialización AAA."""
    b_min: float = 1e-10
    max_nfev: int = 200
    gtol: float = 1e-10
    xtol: float = 1e-12
    ftol: float = 1e-14
    aaa_tol: float = 1e-13

    def __post_init__(self):
        if self.b_min <= 0:
            raise ConfigError("b_min debe ser positivo")
        if self.max_nfev < 1:
            raise ConfigError("max_nfev debe ser al menos 1")

    @classmethod
    def from_dict(cls, config: Optional[Dict[str, Any]]) -> "FitOptions":
        config = config or {}
        known = {k: config[k] for k in cls.__dataclass_fields__ if k in config}
        return cls(**known)


class Weighting(Protocol):
    """Operador de blanqueo: ‖whiten(x)‖ es la norma ponderada de x."""

    @property
    def size(self) -> int: ...

    def whiten(self, x: np.ndarray) -> np.ndarray: ...


class DiagonalWeighting:
    """Ponderación diagonal: whiten(x) = sqrt(w) ⊙ x."""

    def __init__(self, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(weights < 0):
            raise ValueError("Los pesos deben ser no negativos")
        self.sqrt_weights = np.sqrt(weights)

    @property
    def size(self) -> int:
        return int(self.sqrt_weights.size)

    def whiten(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape[0] != self.size:
            raise ValueError(f"Longitud {x.shape[0]} incompatible con {self.size} pesos")
        return x * (self.sqrt_weights if x.ndim == 1 else self.sqrt_weights[:, None])


@dataclass(frozen=True, eq=False)
class PartialFractionParams:
    """Parámetros (a, b) de la parametrización en fracciones parciales."""
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape != b.shape:
            raise ValueError("a y b deben tener la misma longitud")
        if np.any(b <= 0):
            raise InfeasibleParametersError(f"Parámetros no factibles: {b.tolist()}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def r(self) -> int:
        return int(self.b.size)

    def to_rom(self) -> RationalRom:
        return RationalRom(self.a, self.b)


@dataclass(frozen=True, eq=False)
class ThetaMatrix:
    """Θ(b): H_r(μ) = Θ(b) a."""
    columns: np.ndarray
    b: np.ndarray

    @property
    def r(self) -> int:
        return int(self.columns.shape[1])

    def apply(self, a: Sequence[float]) -> np.ndarray:
        return self.columns @ np.asarray(a, dtype=float)


def _check_feasible(b: Sequence[float]) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size == 0:
        raise ValueError("Se requiere al menos un parámetro de denominador")
    if not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise InfeasibleParametersError(f"Coeficientes de denominador no factibles: {b.tolist()}")
    return b


def _theta_columns(b: np.ndarray, z: np.ndarray, moment_rows: int = 0) -> np.ndarray:
    """Columnas [1/d, z/d] por bloque y 1/(z + b_r) si r es impar; filas de momentos al final."""
    r = b.size
    cols = np.zeros((z.size + moment_rows, r), dtype=complex)
    for k in range(r // 2):
        d = z * z + b[2 * k + 1] * z + b[2 * k]
        if np.any(d == 0):
            raise PoleProximityError(complex(z[np.argmax(d == 0)]))
        cols[:z.size, 2 * k] = 1.0 / d
        cols[:z.size, 2 * k + 1] = z / d
        cols[z.size:, 2 * k + 1] = 1.0
    if r % 2:
        d = z + b[-1]
        if np.any(d == 0):
            raise PoleProximityError(complex(-b[-1]))
        cols[:z.size, -1] = 1.0 / d
        cols[z.size:, -1] = 1.0
    return cols


def _theta_derivatives(b: np.ndarray, z: np.ndarray) -> List[List[Tuple[int, np.ndarray]]]:
    """∂Θ/∂b_j como lista de (columna, vector) no nulos por cada j."""
    r = b.size
    out: List[List[Tuple[int, np.ndarray]]] = []
    for k in range(r // 2):
        d = z * z + b[2 * k + 1] * z + b[2 * k]
        inv2 = 1.0 / d ** 2
        out.append([(2 * k, -inv2), (2 * k + 1, -z * inv2)])
        out.append([(2 * k, -z * inv2), (2 * k + 1, -z * z * inv2)])
    if r % 2:
        out.append([(r - 1, -1.0 / (z + b[-1]) ** 2)])
    return out


def build_theta(b: Sequence[float], samples: PointsLike) -> ThetaMatrix:
    """
    Ensambla Θ(b) en los puntos de muestreo.

    Raises:
        InfeasibleParametersError: Si algún b_k <= 0.
        PoleProximityError: Si un denominador se anula en algún punto.
    """
    b = _check_feasible(b)
    return ThetaMatrix(columns=_theta_columns(b, as_points(samples)), b=b)


def _stack(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag], axis=0)


@dataclass(frozen=True, eq=False)
class VarproEvaluation:
    """Residuo, jacobiano y coeficientes lineales en un b dado."""
    residual: np.ndarray
    jacobian: np.ndarray
    coefficients: np.ndarray
    rank_deficient: bool

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))


def varpro_residual_jacobian(b: Sequence[float], samples: PointsLike, h: Sequence[complex],
                             weighting: Weighting,
                             moments: Optional[Tuple[complex, complex]] = None) -> VarproEvaluation:
    """
    Residuo y jacobiano del problema proyectado sobre b.

    Con A = [Re; Im] del Θ blanqueado e y = [Re; Im] de h blanqueado,
    a = A⁺ y se obtiene de la QR pivotada con filas ordenadas y el residuo
    es r = (I - QQᵀ) y. El jacobiano es J = K + L con
    K_j = -(I - QQᵀ)(∂A/∂b_j) a y L_j = -Q R⁻ᵀ (∂A/∂b_j)ᵀ r.

    Args:
        b: Coeficientes de denominador factibles.
        samples: Puntos donde se conoce H.
        h: Valores H(μ).
        weighting: Factorización de Cauchy o DiagonalWeighting (con las filas
            de momentos incluidas si se usan).
        moments: (M+, M-) opcionales; añaden dos filas constantes respecto de b.

    Returns:
        VarproEvaluation; rank_deficient indica que la aproximación tiene
        grado efectivo menor que r.
    """
    b = _check_feasible(b)
    z = as_points(samples)
    h = np.asarray(h, dtype=complex).reshape(-1)
    if h.size != z.size:
        raise ValueError(f"h tiene longitud {h.size}, se esperaban {z.size}")
    moment_rows = 0 if moments is None else 2
    target = h if moments is None else np.concatenate([h, np.asarray(moments, dtype=complex)])
    if weighting.size != target.size:
        raise ValueError(f"La ponderación tiene tamaño {weighting.size}, se esperaban {target.size}")

    r = b.size
    design = _stack(weighting.whiten(_theta_columns(b, z, moment_rows)))
    y = _stack(weighting.whiten(target))
    qr = numkit.qr_pivoted_row_sorted(design)
    rank = qr.numerical_rank
    perm = qr.column_permutation
    q = qr.q[:, :rank]
    rr = qr.r[:rank, :rank]

    coefficients = np.zeros(r)
    if rank:
        coefficients[perm[:rank]] = scipy.linalg.solve_triangular(rr, q.T @ y)
    residual = y - q @ (q.T @ y)

    def pad(vec: np.ndarray) -> np.ndarray:
        return vec if moment_rows == 0 else np.concatenate([vec, np.zeros(moment_rows, dtype=complex)])

    jacobian = np.empty((y.size, r))
    for j, entries in enumerate(_theta_derivatives(b, z)):
        d_theta_a = np.zeros(z.size + moment_rows, dtype=complex)
        d_gram = np.zeros(r)
        for col, vec in entries:
            full = pad(vec)
            d_theta_a += full * coefficients[col]
            d_gram[col] = _stack(weighting.whiten(full)) @ residual
        k_term = _stack(weighting.whiten(d_theta_a))
        k_term = k_term - q @ (q.T @ k_term)
        l_term = np.zeros(y.size)
        if rank:
            l_term = q @ scipy.linalg.solve_triangular(rr, d_gram[perm[:rank]], trans="T")
        jacobian[:, j] = -k_term - l_term

    return VarproEvaluation(residual=residual, jacobian=jacobian, coefficients=coefficients,
                            rank_deficient=qr.rank_deficient)


# ---------------------------------------------------------------------------
# AAA
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AaaResult:
    """Aproximante baricéntrico r(z) = Σ w_j f_j/(z - z_j) / Σ w_j/(z - z_j)."""
    support_points: np.ndarray
    support_values: np.ndarray
    weights: np.ndarray
    errors: np.ndarray

    @property
    def degree(self) -> int:
        return max(int(self.support_points.size) - 1, 0)

    def __call__(self, z: Sequence[complex]) -> np.ndarray:
        zv = np.asarray(z, dtype=complex)
        flat = zv.reshape(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cc = 1.0 / np.subtract.outer(flat, self.support_points)
            values = (cc @ (self.weights * self.support_values)) / (cc @ self.weights)
        for i in np.flatnonzero(~np.isfinite(values)):
            hit = np.flatnonzero(flat[i] == self.support_points)
            if hit.size:
                values[i] = self.support_values[hit[0]]
        return values.reshape(zv.shape)

    @cached_property
    def poles(self) -> np.ndarray:
        keep = self.weights != 0
        w = self.weights[keep]
        zj = self.support_points[keep]
        m = w.size
        if m <= 1:
            return np.zeros(0, dtype=complex)
        pencil_b = np.eye(m + 1, dtype=complex)
        pencil_b[0, 0] = 0
        pencil_e = np.zeros((m + 1, m + 1), dtype=complex)
        pencil_e[0, 1:] = w
        pencil_e[1:, 0] = 1
        np.fill_diagonal(pencil_e[1:, 1:], zj)
        try:
            return numkit.generalized_eigenvalues(pencil_e, pencil_b).finite
        except SingularPencilError:
            logger.warning("Haz baricéntrico singular en AAA: sin polos", extra={'support_points': m})
            return np.zeros(0, dtype=complex)


def aaa(samples: PointsLike, h: Sequence[complex], degree: int, tol: float = 1e-13) -> AaaResult:
    """
    Algoritmo AAA voraz sin ponderación.

    En cada paso se añade como punto soporte la muestra de mayor residuo y
    los pesos baricéntricos salen del vector singular derecho mínimo de la
    matriz de Loewner. Se usan como mucho min(n-1, degree+1) puntos soporte.

    Args:
        samples: Puntos de muestreo.
        h: Valores de la función en esos puntos.
        degree: Grado objetivo (menor que el número de muestras).
        tol: Tolerancia relativa al máximo |h| para parar antes.
    """
    z = as_points(samples)
    f = np.asarray(h, dtype=complex).reshape(-1)
    n = z.size
    if f.size != n:
        raise ValueError("AAA: muestras y valores con longitudes distintas")
    if degree < 0 or degree >= n:
        raise ValueError(f"AAA requiere 0 <= degree < n (degree={degree}, n={n})")
    max_terms = max(1, min(n - 1, degree + 1))
    atol = tol * np.linalg.norm(f, ord=np.inf)

    mask = np.ones(n, dtype=bool)
    zj = np.empty(max_terms, dtype=complex)
    fj = np.empty(max_terms, dtype=complex)
    cauchy = np.empty((n, max_terms), dtype=complex)
    loewner = np.empty((n, max_terms), dtype=complex)
    errors: List[float] = []
    approx = np.repeat(np.mean(f), n)
    wj = np.ones(1, dtype=complex)

    m = 0
    for m in range(max_terms):
        jj = int(np.argmax(np.abs(f[mask] - approx[mask])))
        idx = int(np.flatnonzero(mask)[jj])
        zj[m], fj[m] = z[idx], f[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            cauchy[:, m] = 1.0 / (z - z[idx])
        mask[idx] = False
        with np.errstate(invalid="ignore"):
            loewner[:, m] = (f - fj[m]) * cauchy[:, m]

        rows = int(mask.sum())
        if rows >= m + 1:
            _, s, vh = scipy.linalg.svd(loewner[mask, :m + 1], full_matrices=False)
            smallest = s == np.min(s)
            wj = vh.conj()[smallest, :].sum(axis=0) / np.sqrt(smallest.sum())
        else:
            null = scipy.linalg.null_space(loewner[mask, :m + 1])
            if null.shape[1] == 0:
                logger.warning("Sistema de Loewner degenerado en AAA", extra={'step': m})
                break
            wj = null.sum(axis=-1) / np.sqrt(null.shape[1])

        nonzero = wj != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            num = cauchy[:, :m + 1][:, nonzero] @ (wj[nonzero] * fj[:m + 1][nonzero])
            den = cauchy[:, :m + 1][:, nonzero] @ wj[nonzero]
        bad = ~np.isfinite(den) | ~np.isfinite(num) | (den == 0)
        den[bad] = 1.0
        num[bad] = f[bad]
        approx = num / den
        max_error = float(np.linalg.norm(f - approx, ord=np.inf))
        errors.append(max_error)
        if max_error <= atol:
            break

    used = len(errors)
    return AaaResult(support_points=zj[:used].copy(), support_values=fj[:used].copy(),
                     weights=np.asarray(wj[:used], dtype=complex), errors=np.array(errors))


# ---------------------------------------------------------------------------
# Polos y parámetros
# ---------------------------------------------------------------------------

def _stable(lam: complex, floor: float) -> complex:
    re = -abs(lam.real)
    if re > -floor:
        re = -floor
    return complex(re, lam.imag)


def realify_poles(poles: Sequence[complex], floor: float = 1e-10) -> np.ndarray:
    """
    Repara una lista de polos para que sea cerrada bajo conjugación y estable.

    Cada polo se empareja con su compañero conjugado más cercano (Kuhn-Munkres
    sobre |λ_j - conj λ_k|); la pareja se sustituye por su promedio
    (λ_j + conj λ_k)/2 y el conjugado. Los polos sin pareja se proyectan al
    eje real y cualquier parte real no negativa se refleja al semiplano
    izquierdo.
    """
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    if poles.size == 0:
        raise ValueError("realify_poles requiere al menos un polo")
    pairs, singles = conjugate_pairing(poles)
    out: List[complex] = []
    for j, k in pairs:
        lam = _stable(0.5 * (poles[j] + np.conj(poles[k])), floor)
        out += [lam, np.conj(lam)]
    for j in singles:
        out.append(_stable(complex(poles[j].real), floor))
    return np.array(out, dtype=complex)


def poles_to_params(poles: Sequence[complex], b_min: float = 1e-10) -> np.ndarray:
    """
    Coeficientes de denominador b a partir de polos cerrados bajo conjugación.

    Pareja conjugada: b[2k] = |λ|², b[2k+1] = -2 Re λ. Polos reales se agrupan
    de dos en dos (b[2k] = λ1 λ2, b[2k+1] = -(λ1 + λ2)) y el sobrante, si r es
    impar, da b[r-1] = -λ. Partes reales nulas se fijan en -b_min.
    """
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    if poles.size == 0:
        raise ValueError("poles_to_params requiere al menos un polo")
    if np.any(poles.real > 0):
        raise InfeasibleParametersError(f"Polos en el semiplano derecho: {poles[poles.real > 0].tolist()}")
    pairs, singles = conjugate_pairing(poles)
    b: List[float] = []
    for j, k in sorted(pairs, key=lambda jk: (-abs(poles[jk[0]].imag), poles[jk[0]].real)):
        lam = 0.5 * (poles[j] + np.conj(poles[k]))
        re = min(lam.real, -b_min)
        b += [re * re + lam.imag * lam.imag, -2.0 * re]
    reals = sorted((min(float(poles[j].real), -b_min) for j in singles), reverse=True)
    while len(reals) >= 2:
        l1, l2 = reals.pop(0), reals.pop(0)
        b += [l1 * l2, -(l1 + l2)]
    if reals:
        b.append(-reals[0])
    return np.array(b)


def params_to_poles(b: Sequence[float]) -> np.ndarray:
    """Polos del denominador (fórmula cuadrática por bloque)."""
    b = _check_feasible(b)
    return RationalRom(np.zeros(b.size), b).poles


# ---------------------------------------------------------------------------
# Ajuste
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    """Resultado del ajuste racional ponderado."""
    params: PartialFractionParams
    rom: RationalRom
    residual_norm: float
    jacobian_condition: float
    iterations: int
    initializer_used: str
    converged: bool = True
    degraded: bool = False
    aaa: Optional[AaaResult] = None
    initial_residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def aaa_poles(self) -> np.ndarray:
        return np.zeros(0, dtype=complex) if self.aaa is None else self.aaa.poles


class _RankDrop(Exception):
    """Interrumpe el optimizador cuando R pierde rango."""


def _pad_poles(poles: np.ndarray, r: int, z: np.ndarray) -> np.ndarray:
    """Completa (o recorta) la lista de polos de AAA hasta r con polos reales deterministas."""
    poles = np.asarray(poles, dtype=complex)
    finite = poles[np.isfinite(poles)]
    if finite.size > r:
        order = np.argsort(np.abs(finite), kind="stable")
        finite = finite[order[:r]]
        # Recortar puede romper una pareja conjugada; realify_poles lo repara
    if finite.size < r:
        scale = float(np.median(np.abs(z))) if z.size else 1.0
        scale = scale if scale > 0 else 1.0
        extra = [-scale * (1.0 + 0.5 * k) for k in range(r - finite.size)]
        finite = np.concatenate([finite, np.array(extra, dtype=complex)])
    return finite


def _condition(jacobian: np.ndarray) -> float:
    s = numkit.svd_values(jacobian)
    if s.size == 0 or s[-1] == 0:
        return float("inf")
    return float(s[0] / s[-1])


def _optimize(b0: np.ndarray, z: np.ndarray, h: np.ndarray, weighting: Weighting,
              moments: Optional[Tuple[complex, complex]], options: FitOptions) -> Tuple[np.ndarray, int, bool, bool]:
    best = {"norm": np.inf, "b": b0.copy()}
    cache: Dict[bytes, VarproEvaluation] = {}

    def evaluation(b: np.ndarray) -> VarproEvaluation:
        key = np.asarray(b, dtype=float).tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = varpro_residual_jacobian(b, z, h, weighting, moments)
        ev = cache[key]
        if ev.rank_deficient:
            raise _RankDrop()
        if ev.residual_norm < best["norm"]:
            best["norm"] = ev.residual_norm
            best["b"] = np.array(b, dtype=float)
        return ev

    try:
        sol = least_squares(
            lambda b: evaluation(b).residual,
            b0,
            jac=lambda b: evaluation(b).jacobian,
            bounds=(options.b_min, np.inf),
            method="trf",
            x_scale="jac",
            max_nfev=options.max_nfev,
            gtol=options.gtol,
            xtol=options.xtol,
            ftol=options.ftol,
        )
    except _RankDrop:
        logger.warning(
            "R con deficiencia de rango: el ajuste tiene grado efectivo menor que r",
            extra={'r': b0.size, 'best_residual': best["norm"]}
        )
        return best["b"], 0, False, True
    converged = sol.status > 0
    if not converged:
        logger.warning(
            "El optimizador agotó su presupuesto de evaluaciones",
            extra={'r': b0.size, 'nfev': sol.nfev, 'residual': float(np.linalg.norm(sol.fun))}
        )
    return np.asarray(sol.x, dtype=float), int(sol.nfev), converged, False


def fit(samples: PointsLike, h: Sequence[complex], r: int, weighting: Weighting,
        init_poles: Optional[Sequence[complex]] = None, options: Optional[FitOptions] = None,
        moments: Optional[Tuple[complex, complex]] = None) -> FitResult:
    """
    Ajuste racional real de grado (r-1, r) por mínimos cuadrados ponderados.

    Se prueban dos inicializaciones: los polos del iterado anterior (si se
    dan y tienen longitud r) y los polos de AAA; se devuelve el resultado de
    menor residuo (el empate favorece a los polos anteriores).

    Args:
        samples: Puntos de muestreo (n >= 2r).
        h: Valores H en los puntos.
        r: Grado del modelo reducido (>= 1).
        weighting: Operador de blanqueo.
        init_poles: Polos del iterado anterior (opcional).
        options: FitOptions; por defecto b_min = 1e-10, 200 evaluaciones.
        moments: (M+, M-) para las filas de momentos de QuadVF.

    Returns:
        FitResult con el mejor ajuste y los polos de AAA (reutilizados por el
        filtro de polos espurios del bucle externo).

    Raises:
        ValueError: Si r < 1 o n < 2r.
        FitFailedError: Si ninguna inicialización produce un ajuste factible.
    """
    options = options or FitOptions()
    z = as_points(samples)
    h = np.asarray(h, dtype=complex).reshape(-1)
    if r < 1:
        raise ValueError(f"El grado del modelo reducido debe ser >= 1, recibido {r}")
    if z.size < 2 * r:
        raise ValueError(f"Muestras insuficientes: n={z.size} < 2r={2 * r}")
    if h.size != z.size:
        raise ValueError("h y las muestras deben tener la misma longitud")

    aaa_result = aaa(z, h, degree=min(r, z.size - 1), tol=options.aaa_tol)
    candidates: List[Tuple[str, np.ndarray]] = []
    if init_poles is not None and len(init_poles) == r:
        candidates.append(("previous_poles", np.asarray(init_poles, dtype=complex)))
    candidates.append(("aaa", _pad_poles(aaa_result.poles, r, z)))

    results: List[FitResult] = []
    initial_residuals: Dict[str, float] = {}
    for tag, poles in candidates:
        try:
            b0 = np.maximum(poles_to_params(realify_poles(poles, options.b_min), options.b_min), options.b_min)
            start = varpro_residual_jacobian(b0, z, h, weighting, moments)
            initial_residuals[tag] = start.residual_norm
            b_opt, nfev, converged, degraded = _optimize(b0, z, h, weighting, moments, options)
            final = varpro_residual_jacobian(b_opt, z, h, weighting, moments)
            params = PartialFractionParams(final.coefficients, b_opt)
            results.append(FitResult(
                params=params,
                rom=params.to_rom(),
                residual_norm=final.residual_norm,
                jacobian_condition=_condition(final.jacobian),
                iterations=nfev,
                initializer_used=tag,
                converged=converged,
                degraded=degraded or final.rank_deficient,
                aaa=aaa_result,
            ))
        except (InfeasibleParametersError, PoleProximityError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning(
                f"Inicialización '{tag}' descartada: {e}",
                extra={'initializer': tag, 'r': r, 'n': z.size}
            )

    if not results:
        raise FitFailedError(f"Ninguna inicialización produjo un ajuste factible (r={r}, n={z.size})")
    best = min(results, key=lambda res: res.residual_norm)
    best.initial_residuals = initial_residuals
    logger.info(
        f"Ajuste racional r={r} con residuo {best.residual_norm:.3e}",
        extra={'r': r, 'n': z.size, 'initializer': best.initializer_used, 'iterations': best.iterations}
    )
    return best
