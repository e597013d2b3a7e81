# Modelos de orden completo y reducido
"""
Representaciones de modelos y evaluación de funciones de transferencia.

Este módulo implementa:
- Modelos de orden completo: espacio de estados (con matriz de masa opcional),
  sistema con retardo en forma cerrada, racional y tabulado
- TransferFunctionModel: envoltorio con caché de evaluaciones y contador
  monótono de resoluciones (compartido de forma segura entre hilos)
- RationalRom: modelo reducido real en fracciones parciales de dos términos,
  con conversión a polos/residuos y a realización en espacio de estados
- Normas H2 (Gramianos, matriz de Gram polo-residuo y cuadratura BCC)
- Diagnóstico de condiciones de Meier-Luenberger
- Lectura de archivos Matrix Market y descriptores JSON de modelos
"""
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import copy
import json
import logging
import threading

import numpy as np
import scipy.io
import scipy.linalg

from reduction_core import numkit
from reduction_core.exceptions import (
    ConfigError,
    InfeasibleParametersError,
    MatrixMarketError,
    PoleProximityError,
    UnsupportedModelError,
    UntabulatedPointError,
    UnstableSystemError,
)
from reduction_core.h2space import DUPLICATE_TOLERANCE, cauchy_cholesky

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

MODEL_KINDS = ("state_space", "delay", "rational", "tabulated")

# Valores por defecto del sistema con retardo
DELAY_DEFAULTS = {"n": 1000, "tau": 1.0, "rho": 0.1, "epsilon": 0.01}

# Separación relativa mínima entre polos para usar la forma polo-residuo
SIMPLE_POLE_TOLERANCE = 1e-8

# Tolerancia relativa para reconocer un punto tabulado
TABULATED_POINT_TOLERANCE = 1e-12


# ---------------------------------------------------------------------------
# Conversión de números complejos desde/hacia JSON
# ---------------------------------------------------------------------------

def as_complex(value: Any) -> complex:
    """
    Convierte un valor de configuración a complejo.

    Acepta números, pares [re, im], diccionarios {"re": .., "im": ..} y
    cadenas del estilo "1+2j".
    """
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"Un complejo como lista debe tener 2 elementos, recibido {value}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, dict):
        return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", "").replace("i", "j"))
        except ValueError as e:
            raise ConfigError(f"No se pudo interpretar '{value}' como número complejo") from e
    return complex(value)


def complex_list(values: Optional[Sequence[Any]]) -> np.ndarray:
    """Lista de configuración -> arreglo complejo."""
    if values is None:
        return np.zeros(0, dtype=complex)
    return np.array([as_complex(v) for v in values], dtype=complex)


def complex_to_json(value: complex) -> List[float]:
    value = complex(value)
    return [float(value.real), float(value.imag)]


# ---------------------------------------------------------------------------
# Emparejamiento de polos conjugados
# ---------------------------------------------------------------------------

def conjugate_pairing(poles: np.ndarray) -> Tuple[List[Tuple[int, int]], List[int]]:
    """
    Empareja cada polo con su conjugado más cercano (Kuhn-Munkres sobre |λ_j - conj λ_k|).

    Returns:
        (pares, sueltos): pares de índices (j, k) que forman pareja conjugada e
        índices sin pareja (los polos casi reales se asignan a sí mismos).
    """
    poles = np.asarray(poles, dtype=complex)
    n = poles.size
    if n == 0:
        return [], []
    cost = np.abs(poles[:, None] - np.conj(poles)[None, :])
    perm = numkit.linear_assignment(cost)
    pairs: List[Tuple[int, int]] = []
    singles: List[int] = []
    seen = set()
    for j in range(n):
        if j in seen:
            continue
        k = int(perm[j])
        if k == j or k in seen or int(perm[k]) != j:
            singles.append(j)
            seen.add(j)
        else:
            pairs.append((j, k))
            seen.update((j, k))
    return pairs, singles


# ---------------------------------------------------------------------------
# Modelo reducido racional
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RationalRom:
    """
    Modelo reducido real de grado (r-1, r) en fracciones parciales de dos términos.

    Cada bloque k aporta (a[2k] + a[2k+1] z) / (z² + b[2k+1] z + b[2k]); si r es
    impar se añade el término de primer orden a[r-1] / (z + b[r-1]). Todos los
    coeficientes b son estrictamente positivos, lo que equivale a que todos los
    polos estén en el semiplano izquierdo abierto.

    La instancia es inmutable; with_params devuelve un modelo nuevo y la forma
    polo-residuo se calcula de forma perezosa una sola vez.
    """
    pf_a: np.ndarray
    pf_b: np.ndarray

    def __post_init__(self):
        a = np.array(self.pf_a, dtype=float).reshape(-1)
        b = np.array(self.pf_b, dtype=float).reshape(-1)
        if a.shape != b.shape:
            raise ValueError(f"pf_a y pf_b deben tener la misma longitud ({a.size} vs {b.size})")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("Los parámetros del ROM deben ser finitos")
        if np.any(b <= 0):
            raise InfeasibleParametersError(
                f"Coeficientes de denominador no positivos: {b[b <= 0].tolist()}"
            )
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "pf_a", a)
        object.__setattr__(self, "pf_b", b)

    # -- construcción -------------------------------------------------------

    @classmethod
    def zero(cls, r: int) -> "RationalRom":
        """ROM de grado r con residuos nulos (polos en -1 y -2)."""
        b = np.tile([2.0, 3.0], r // 2)
        if r % 2:
            b = np.append(b, 1.0)
        return cls(np.zeros(r), b)

    @classmethod
    def from_pole_residue(cls, poles: Sequence[complex], residues: Sequence[complex]) -> "RationalRom":
        """
        Construye los parámetros reales a partir de polos y residuos.

        Los pares conjugados forman un bloque cuadrático; los polos reales se
        agrupan de dos en dos y, si sobra uno, va al término de primer orden.
        Las pequeñas asimetrías numéricas se eliminan promediando cada pareja.
        """
        poles = np.asarray(poles, dtype=complex).reshape(-1)
        residues = np.asarray(residues, dtype=complex).reshape(-1)
        if poles.shape != residues.shape:
            raise ValueError("Polos y residuos deben tener la misma longitud")
        if np.any(poles.real >= 0):
            raise InfeasibleParametersError(
                f"Polos fuera del semiplano izquierdo: {poles[poles.real >= 0].tolist()}"
            )

        pairs, singles = conjugate_pairing(poles)
        a_blocks: List[float] = []
        b_blocks: List[float] = []
        for j, k in sorted(pairs, key=lambda jk: (-abs(poles[jk[0]].imag), poles[jk[0]].real)):
            lam = 0.5 * (poles[j] + np.conj(poles[k]))
            rho = 0.5 * (residues[j] + np.conj(residues[k]))
            a_blocks += [-2.0 * float(np.real(rho * np.conj(lam))), 2.0 * float(rho.real)]
            b_blocks += [float(abs(lam) ** 2), -2.0 * float(lam.real)]

        if singles:
            off_axis = [j for j in singles if abs(poles[j].imag) > 1e-6 * abs(poles[j])]
            if off_axis:
                logger.warning(
                    "Polos sin pareja conjugada proyectados al eje real",
                    extra={'poles': [complex(poles[j]) for j in off_axis]}
                )
        real_terms = sorted(((float(poles[j].real), float(residues[j].real)) for j in singles), reverse=True)
        while len(real_terms) >= 2:
            (l1, r1), (l2, r2) = real_terms.pop(0), real_terms.pop(0)
            a_blocks += [-(r1 * l2 + r2 * l1), r1 + r2]
            b_blocks += [l1 * l2, -(l1 + l2)]
        if real_terms:
            lam, rho = real_terms[0]
            a_blocks.append(rho)
            b_blocks.append(-lam)
        return cls(np.array(a_blocks), np.array(b_blocks))

    def with_params(self, pf_a: Sequence[float], pf_b: Sequence[float]) -> "RationalRom":
        return RationalRom(np.asarray(pf_a, dtype=float), np.asarray(pf_b, dtype=float))

    # -- propiedades ---------------------------------------------------------

    @property
    def degree(self) -> int:
        return int(self.pf_b.size)

    @property
    def num_blocks(self) -> int:
        return self.degree // 2

    @cached_property
    def _pole_residue(self) -> Tuple[np.ndarray, np.ndarray]:
        poles: List[complex] = []
        residues: List[complex] = []
        for k in range(self.num_blocks):
            a1, a2 = self.pf_a[2 * k], self.pf_a[2 * k + 1]
            b1, b2 = self.pf_b[2 * k], self.pf_b[2 * k + 1]
            disc = 0.25 * b2 * b2 - b1
            if disc < 0:
                root = complex(-0.5 * b2, np.sqrt(-disc))
                pair = (root, np.conj(root))
            else:
                # Fórmula estable: evita cancelación en la raíz pequeña
                q = -0.5 * b2 - np.sqrt(disc)
                pair = (complex(q), complex(b1 / q))
            for own, other in (pair, pair[::-1]):
                gap = own - other
                residue = (a1 + a2 * own) / gap if gap != 0 else complex(np.inf)
                poles.append(complex(own))
                residues.append(complex(residue))
        if self.degree % 2:
            poles.append(complex(-self.pf_b[-1]))
            residues.append(complex(self.pf_a[-1]))
        return np.array(poles, dtype=complex), np.array(residues, dtype=complex)

    @property
    def poles(self) -> np.ndarray:
        return self._pole_residue[0].copy()

    @property
    def residues(self) -> np.ndarray:
        return self._pole_residue[1].copy()

    @cached_property
    def simple_poles(self) -> bool:
        """True si los polos están suficientemente separados para la forma polo-residuo."""
        poles, residues = self._pole_residue
        if not np.all(np.isfinite(residues)):
            return False
        if poles.size < 2:
            return True
        scale = max(1.0, float(np.max(np.abs(poles))))
        gaps = np.abs(poles[:, None] - poles[None, :])
        np.fill_diagonal(gaps, np.inf)
        return bool(np.min(gaps) > SIMPLE_POLE_TOLERANCE * scale)

    @property
    def moment_at_infinity(self) -> float:
        """lim z·H_r(z) cuando |z| → ∞ (igual en ambos sentidos del eje imaginario)."""
        total = float(np.sum(self.pf_a[1:2 * self.num_blocks:2]))
        if self.degree % 2:
            total += float(self.pf_a[-1])
        return total

    # -- evaluación ----------------------------------------------------------

    def evaluate(self, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
        """Evaluación directa de la suma de fracciones parciales."""
        zz = np.asarray(z, dtype=complex)
        out = np.zeros(zz.shape, dtype=complex)
        for k in range(self.num_blocks):
            a1, a2 = self.pf_a[2 * k], self.pf_a[2 * k + 1]
            b1, b2 = self.pf_b[2 * k], self.pf_b[2 * k + 1]
            den = zz * zz + b2 * zz + b1
            if np.any(den == 0):
                raise PoleProximityError(complex(zz.reshape(-1)[np.argmax(den.reshape(-1) == 0)]))
            out += (a1 + a2 * zz) / den
        if self.degree % 2:
            den = zz + self.pf_b[-1]
            if np.any(den == 0):
                raise PoleProximityError(complex(-self.pf_b[-1]))
            out += self.pf_a[-1] / den
        return complex(out) if out.ndim == 0 else out

    def derivative(self, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
        zz = np.asarray(z, dtype=complex)
        out = np.zeros(zz.shape, dtype=complex)
        for k in range(self.num_blocks):
            a1, a2 = self.pf_a[2 * k], self.pf_a[2 * k + 1]
            b1, b2 = self.pf_b[2 * k], self.pf_b[2 * k + 1]
            den = zz * zz + b2 * zz + b1
            out += (a2 * den - (a1 + a2 * zz) * (2 * zz + b2)) / den ** 2
        if self.degree % 2:
            out -= self.pf_a[-1] / (zz + self.pf_b[-1]) ** 2
        return complex(out) if out.ndim == 0 else out

    __call__ = evaluate

    def to_state_space(self) -> "StateSpace":
        """Realización real diagonal por bloques (forma compañera controlable)."""
        r = self.degree
        a = np.zeros((r, r))
        b = np.zeros(r)
        c = np.zeros(r)
        for k in range(self.num_blocks):
            i = 2 * k
            a[i, i + 1] = 1.0
            a[i + 1, i] = -self.pf_b[i]
            a[i + 1, i + 1] = -self.pf_b[i + 1]
            b[i + 1] = 1.0
            c[i], c[i + 1] = self.pf_a[i], self.pf_a[i + 1]
        if r % 2:
            a[-1, -1] = -self.pf_b[-1]
            b[-1] = 1.0
            c[-1] = self.pf_a[-1]
        return StateSpace(a, b, c)

    # -- serialización -------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        poles, residues = self._pole_residue
        return {
            "degree": self.degree,
            "a": self.pf_a.tolist(),
            "b": self.pf_b.tolist(),
            "poles": [complex_to_json(p) for p in poles],
            "residues": [complex_to_json(p) if np.isfinite(p) else None for p in residues],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RationalRom":
        if "a" in data and "b" in data:
            rom = cls(np.asarray(data["a"], dtype=float), np.asarray(data["b"], dtype=float))
        elif "poles" in data and "residues" in data:
            rom = cls.from_pole_residue(complex_list(data["poles"]), complex_list(data["residues"]))
        else:
            raise ConfigError("Un ROM serializado requiere 'a' y 'b' o 'poles' y 'residues'")
        if "degree" in data and int(data["degree"]) != rom.degree:
            raise ConfigError(f"Grado declarado {data['degree']} distinto del grado real {rom.degree}")
        return rom

    def __repr__(self) -> str:
        return f"RationalRom(degree={self.degree}, a={self.pf_a.tolist()}, b={self.pf_b.tolist()})"


# ---------------------------------------------------------------------------
# Modelos de orden completo
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateSpace:
    """
    Sistema SISO H(z) = c* (zE - A)⁻¹ b, con E = I si no se proporciona.
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a))
        b = np.asarray(self.b).reshape(-1)
        c = np.asarray(self.c).reshape(-1)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"A debe ser cuadrada, forma {a.shape}")
        if b.size != n or c.size != n:
            raise ValueError(f"Dimensiones inconsistentes: A {a.shape}, b {b.size}, c {c.size}")
        e = None
        if self.e is not None:
            e = np.atleast_2d(np.asarray(self.e))
            if e.shape != (n, n):
                raise ValueError(f"E debe tener la forma de A: {e.shape} vs {a.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "e", e)

    @property
    def order(self) -> int:
        return self.a.shape[0]

    @property
    def is_real(self) -> bool:
        arrays = [self.a, self.b, self.c] + ([self.e] if self.e is not None else [])
        return all(np.isrealobj(x) or np.all(np.imag(x) == 0) for x in arrays)

    def mass(self) -> np.ndarray:
        return np.eye(self.order) if self.e is None else self.e

    def standard_form(self) -> "StateSpace":
        """Equivalente con E = I: (E⁻¹A, E⁻¹b, c)."""
        if self.e is None:
            return self
        return StateSpace(np.linalg.solve(self.e, self.a), np.linalg.solve(self.e, self.b), self.c)

    def _resolvent_solve(self, z: complex, rhs: np.ndarray, adjoint: bool = False) -> np.ndarray:
        shifted = z * self.mass() - self.a
        if adjoint:
            shifted = shifted.conj().T
        try:
            x = scipy.linalg.solve(shifted, rhs)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise PoleProximityError(z) from e
        if not np.all(np.isfinite(x)):
            raise PoleProximityError(z)
        return x

    def transfer(self, z: complex) -> complex:
        x = self._resolvent_solve(complex(z), self.b.astype(complex))
        return complex(np.vdot(self.c, x))

    def derivative(self, z: complex) -> complex:
        """H'(z) = -c* (zE - A)⁻¹ E (zE - A)⁻¹ b."""
        x = self._resolvent_solve(complex(z), self.b.astype(complex))
        y = self._resolvent_solve(complex(z), self.mass() @ x)
        return complex(-np.vdot(self.c, y))

    def poles(self) -> np.ndarray:
        if self.e is None:
            return numkit.eigenvalues(self.a)
        return numkit.generalized_eigenvalues(self.a, self.e).finite

    def is_stable(self) -> bool:
        return bool(np.all(self.poles().real < 0))

    @property
    def moment_at_infinity(self) -> complex:
        """c* E⁻¹ b = lim z H(z)."""
        if self.e is None:
            return complex(np.vdot(self.c, self.b))
        return complex(np.vdot(self.c, np.linalg.solve(self.e, self.b)))


def tridiagonal_template(n: int) -> np.ndarray:
    """Matriz T: unos en la primera super/subdiagonal y en las entradas (1,1) y (n,n)."""
    t = np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    t[0, 0] = 1.0
    t[n - 1, n - 1] = 1.0
    return t


@dataclass(frozen=True, eq=False)
class DelaySystem:
    """
    Sistema con retardo H(z) = cᵀ (zE - A0 - e^{-τz} A1)⁻¹ b.

    E = (2/√ε) I + T, A0 = (2+2ρ)/(τρ) (T - (2/√ε) I) y
    A1 = (2-2ρ)/(τρ) (T - (2/√ε) I). Como las tres matrices son combinación
    de T e I, la matriz desplazada es tridiagonal y se resuelve en O(n).
    """
    size_n: int
    delay_tau: float = 1.0
    rho: float = 0.1
    epsilon: float = 0.01
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        n = int(self.size_n)
        if n < 2:
            raise ValueError(f"El sistema con retardo requiere n >= 2, recibido {n}")
        if self.delay_tau <= 0 or self.rho <= 0 or self.epsilon <= 0:
            raise ValueError("tau, rho y epsilon deben ser positivos")
        default = np.zeros(n)
        default[:2] = 1.0
        b = default.copy() if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        c = b.copy() if self.c is None else np.asarray(self.c, dtype=float).reshape(-1)
        if b.size != n or c.size != n:
            raise ValueError("b y c deben tener longitud n")
        object.__setattr__(self, "size_n", n)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def shift(self) -> float:
        return 2.0 / np.sqrt(self.epsilon)

    @property
    def kappa0(self) -> float:
        return (2.0 + 2.0 * self.rho) / (self.delay_tau * self.rho)

    @property
    def kappa1(self) -> float:
        return (2.0 - 2.0 * self.rho) / (self.delay_tau * self.rho)

    def matrices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Matrices densas (E, A0, A1)."""
        n = self.size_n
        t = tridiagonal_template(n)
        s = self.shift
        e = s * np.eye(n) + t
        a0 = self.kappa0 * (t - s * np.eye(n))
        a1 = self.kappa1 * (t - s * np.eye(n))
        return e, a0, a1

    def _coefficients(self, z: complex) -> Tuple[complex, complex, complex, complex]:
        """K(z) = p T + q I y K'(z) = dp T + dq I."""
        delay = np.exp(-self.delay_tau * z)
        s = self.shift
        p = z - self.kappa0 - self.kappa1 * delay
        q = s * (z + self.kappa0 + self.kappa1 * delay)
        dp = 1.0 + self.delay_tau * self.kappa1 * delay
        dq = s * (1.0 - self.delay_tau * self.kappa1 * delay)
        return p, q, dp, dq

    def _banded(self, p: complex, q: complex) -> np.ndarray:
        n = self.size_n
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = p
        ab[1, :] = q
        ab[1, 0] += p
        ab[1, -1] += p
        ab[2, :-1] = p
        return ab

    def _apply_template(self, x: np.ndarray) -> np.ndarray:
        tx = np.zeros_like(x)
        tx[:-1] += x[1:]
        tx[1:] += x[:-1]
        tx[0] += x[0]
        tx[-1] += x[-1]
        return tx

    def _solve(self, z: complex, rhs: np.ndarray) -> np.ndarray:
        p, q, _, _ = self._coefficients(z)
        try:
            x = scipy.linalg.solve_banded((1, 1), self._banded(p, q), rhs.astype(complex))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise PoleProximityError(z) from e
        if not np.all(np.isfinite(x)):
            raise PoleProximityError(z)
        return x

    def transfer(self, z: complex) -> complex:
        z = complex(z)
        return complex(self.c @ self._solve(z, self.b))

    def derivative(self, z: complex) -> complex:
        """H'(z) = -cᵀ K⁻¹ K' K⁻¹ b (K simétrica, basta con dos resoluciones)."""
        z = complex(z)
        _, _, dp, dq = self._coefficients(z)
        x = self._solve(z, self.b)
        y = self._solve(z, self.c)
        return complex(-(y @ (dp * self._apply_template(x) + dq * x)))


@dataclass(frozen=True, eq=False)
class TabulatedResponse:
    """Respuesta en frecuencia registrada en una lista fija de puntos."""
    points: np.ndarray
    values: np.ndarray
    real: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).reshape(-1)
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if pts.shape != vals.shape:
            raise ValueError("points y values deben tener la misma longitud")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def transfer(self, z: complex) -> complex:
        z = complex(z)
        tol = TABULATED_POINT_TOLERANCE * max(1.0, abs(z))
        hits = np.flatnonzero(np.abs(self.points - z) <= tol)
        if hits.size:
            return complex(self.values[hits[0]])
        if self.real:
            hits = np.flatnonzero(np.abs(np.conj(self.points) - z) <= tol)
            if hits.size:
                return complex(np.conj(self.values[hits[0]]))
        raise UntabulatedPointError(f"El punto {z} no está tabulado")


# ---------------------------------------------------------------------------
# Modelo evaluable con contador
# ---------------------------------------------------------------------------

class TransferFunctionModel:
    """
    Modelo de orden completo evaluable con caché y contador de evaluaciones.

    El contador cuenta resoluciones distintas de H(z) (y de H'(z)). Para
    modelos reales, H(conj z) = conj H(z): una evaluación sirve a la pareja
    conjugada y no incrementa el contador. Caché y contador están protegidos
    por un cerrojo para que varios hilos puedan evaluar el mismo modelo.
    """

    def __init__(self, kind: str, payload: Any,
                 moment_at_infinity: Optional[Tuple[complex, complex]] = None,
                 name: Optional[str] = None):
        if kind not in MODEL_KINDS:
            raise ValueError(f"Tipo de modelo '{kind}' no soportado. Tipos válidos: {MODEL_KINDS}")
        self.kind = kind
        self.payload = payload
        self.name = name or kind
        if moment_at_infinity is None and kind == "state_space":
            m = payload.moment_at_infinity
            moment_at_infinity = (m, m)
        elif moment_at_infinity is None and kind == "rational":
            m = payload.moment_at_infinity
            moment_at_infinity = (complex(m), complex(m))
        self.moment_at_infinity = (
            None if moment_at_infinity is None
            else (complex(moment_at_infinity[0]), complex(moment_at_infinity[1]))
        )
        self._lock = threading.RLock()
        self._cache: Dict[complex, complex] = {}
        self._derivative_cache: Dict[complex, complex] = {}
        self._eval_counter = 0

    # -- fábricas ------------------------------------------------------------

    @classmethod
    def from_state_space(cls, sys: StateSpace, **kwargs) -> "TransferFunctionModel":
        return cls("state_space", sys, **kwargs)

    @classmethod
    def from_delay(cls, sys: DelaySystem, **kwargs) -> "TransferFunctionModel":
        return cls("delay", sys, **kwargs)

    @classmethod
    def from_rational(cls, rom: RationalRom, **kwargs) -> "TransferFunctionModel":
        return cls("rational", rom, **kwargs)

    @classmethod
    def from_tabulated(cls, table: TabulatedResponse, **kwargs) -> "TransferFunctionModel":
        return cls("tabulated", table, **kwargs)

    # -- propiedades ---------------------------------------------------------

    @property
    def eval_counter(self) -> int:
        with self._lock:
            return self._eval_counter

    @property
    def is_real(self) -> bool:
        if self.kind == "state_space":
            return self.payload.is_real
        if self.kind == "tabulated":
            return self.payload.real
        return True

    @property
    def supports_derivative(self) -> bool:
        return self.kind != "tabulated"

    @property
    def has_moments(self) -> bool:
        return self.moment_at_infinity is not None

    def clone(self) -> "TransferFunctionModel":
        """Copia con caché y contador propios (el payload inmutable se comparte)."""
        return TransferFunctionModel(self.kind, self.payload, self.moment_at_infinity, self.name)

    def record_solves(self, count: int) -> None:
        """Registra resoluciones hechas fuera de evaluate (p. ej. bases de Krylov de IRKA)."""
        if count < 0:
            raise ValueError("El número de resoluciones no puede ser negativo")
        with self._lock:
            self._eval_counter += int(count)

    # -- evaluación ----------------------------------------------------------

    def _raw_transfer(self, z: complex) -> complex:
        return complex(self.payload.transfer(z) if self.kind != "rational" else self.payload.evaluate(z))

    def _raw_derivative(self, z: complex) -> complex:
        if self.kind == "tabulated":
            raise UnsupportedModelError("Los modelos tabulados no proporcionan H'(z)")
        return complex(self.payload.derivative(z))

    def _lookup(self, cache: Dict[complex, complex], z: complex) -> Optional[complex]:
        if z in cache:
            return cache[z]
        if self.is_real and np.conj(z) in cache:
            return complex(np.conj(cache[np.conj(z)]))
        return None

    def evaluate(self, z: complex, *, record: bool = True, use_cache: bool = True) -> complex:
        """
        Evalúa H(z).

        Args:
            z: Punto complejo (no debe ser polo del modelo).
            record: Si False, ni consulta el caché ni incrementa el contador
                (para diagnósticos que no forman parte del presupuesto).
            use_cache: Si False, fuerza una resolución nueva que sí se cuenta.

        Raises:
            PoleProximityError: Si la matriz desplazada es singular en z.
        """
        z = complex(z)
        if not record:
            return self._raw_transfer(z)
        with self._lock:
            if use_cache:
                hit = self._lookup(self._cache, z)
                if hit is not None:
                    return hit
            value = self._raw_transfer(z)
            self._eval_counter += 1
            self._cache[z] = value
            return value

    def evaluate_many(self, points: Sequence[complex], **kwargs) -> np.ndarray:
        return np.array([self.evaluate(z, **kwargs) for z in np.asarray(points, dtype=complex)], dtype=complex)

    def evaluate_derivative(self, z: complex, *, record: bool = True, use_cache: bool = True) -> complex:
        """Evalúa H'(z) con la misma política de caché y contador que evaluate."""
        z = complex(z)
        if not record:
            return self._raw_derivative(z)
        with self._lock:
            if use_cache:
                hit = self._lookup(self._derivative_cache, z)
                if hit is not None:
                    return hit
            value = self._raw_derivative(z)
            self._eval_counter += 1
            self._derivative_cache[z] = value
            return value

    def __repr__(self) -> str:
        return f"TransferFunctionModel(kind={self.kind!r}, name={self.name!r}, evals={self.eval_counter})"


def evaluate(model: TransferFunctionModel, z: complex) -> complex:
    return model.evaluate(z)


def evaluate_derivative(model: TransferFunctionModel, z: complex) -> complex:
    return model.evaluate_derivative(z)


# ---------------------------------------------------------------------------
# Normas H2
# ---------------------------------------------------------------------------

def h2_norm_state_space(sys: StateSpace, gramian: str = "controllability") -> float:
    """
    Norma H2 por Gramianos: sqrt(c* W_c c) o sqrt(b* W_o b).

    Raises:
        UnstableSystemError: Si el sistema no es estable.
    """
    std = sys.standard_form()
    a, b, c = std.a, std.b, std.c
    if gramian == "controllability":
        w = numkit.solve_lyapunov(a, -np.outer(b, np.conj(b)))
        value = np.vdot(c, w @ c)
    elif gramian == "observability":
        w = numkit.solve_lyapunov(a.conj().T, -np.outer(c, np.conj(c)))
        value = np.vdot(b, w @ b)
    else:
        raise ValueError(f"Gramiano desconocido '{gramian}'")
    return float(np.sqrt(max(np.real(value), 0.0)))


def _pole_residue_gram(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """G_jk = <v[-conj p_j], v[-conj q_k]> = -(conj p_j + q_k)⁻¹."""
    return -1.0 / (np.conj(p)[:, None] + q[None, :])


def h2_inner_product_rom(r1: RationalRom, r2: RationalRom) -> complex:
    """Producto interno H2 <r1, r2> a partir de polos y residuos."""
    return complex(np.conj(r1.residues) @ _pole_residue_gram(r1.poles, r2.poles) @ r2.residues)


def _stacked_realization(r1: RationalRom, r2: RationalRom) -> StateSpace:
    s1, s2 = r1.to_state_space(), r2.to_state_space()
    return StateSpace(
        scipy.linalg.block_diag(s1.a, s2.a),
        np.concatenate([s1.b, s2.b]),
        np.concatenate([s1.c, -s2.c]),
    )


def _pole_residue_norm(poles: np.ndarray, residues: np.ndarray) -> float:
    """
    ‖Σ ρ_k / (z - λ_k)‖_H2 sin formar la forma cuadrática ρ* G ρ.

    G es la matriz de Cauchy M(-conj λ), así que ‖F‖ = ‖D^{1/2} L* ρ[perm]‖
    con los factores de alta precisión relativa; el error absoluto queda en
    el orden de eps·‖ρ‖ aun cuando F es una diferencia casi nula.
    Los polos que coinciden a DUPLICATE_TOLERANCE se fusionan sumando residuos.
    """
    merged_poles: List[complex] = []
    merged_residues: List[complex] = []
    for lam, rho in zip(poles, residues):
        for k, other in enumerate(merged_poles):
            if abs(lam - other) <= DUPLICATE_TOLERANCE * max(abs(lam), abs(other)):
                merged_residues[k] += rho
                break
        else:
            merged_poles.append(complex(lam))
            merged_residues.append(complex(rho))
    rho = np.array(merged_residues)
    if not np.any(rho):
        return 0.0
    fact = cauchy_cholesky(-np.conj(np.array(merged_poles)))
    projected = np.sqrt(fact.diag) * (fact.lower.conj().T @ rho[fact.permutation])
    return float(np.linalg.norm(projected))


def h2_norm_rom(rom: RationalRom) -> float:
    """‖H_r‖ a partir de polos y residuos; con polos repetidos se usa la realización y Lyapunov."""
    if rom.degree == 0 or not np.any(rom.pf_a):
        return 0.0
    if not rom.simple_poles:
        return h2_norm_state_space(rom.to_state_space())
    return _pole_residue_norm(rom.poles, rom.residues)


def rom_difference_norm(r1: RationalRom, r2: RationalRom) -> float:
    """‖r1 - r2‖_H2 exacto a partir de los polos apilados de ambos ROM."""
    if not (r1.simple_poles and r2.simple_poles):
        return h2_norm_state_space(_stacked_realization(r1, r2))
    poles = np.concatenate([r1.poles, r2.poles])
    rho = np.concatenate([r1.residues, -r2.residues])
    return _pole_residue_norm(poles, rho)


@dataclass(frozen=True)
class BccRule:
    """Regla de Boyd/Clenshaw-Curtis sobre el eje imaginario."""
    nodes: np.ndarray
    weights: np.ndarray
    moment_weight: float
    scale_L: float


def bcc_rule(num_nodes: int, scale_L: float = 10.0) -> BccRule:
    """
    Nodos z_j = i L cot(jπ/(n+1)), pesos w_j = L / (2(n+1) sin²(jπ/(n+1)))
    y peso de los momentos w± = 1 / (4L(n+1)).
    """
    if num_nodes < 1:
        raise ValueError("La regla BCC necesita al menos un nodo")
    if scale_L <= 0:
        raise ValueError("El parámetro de escala L debe ser positivo")
    n = int(num_nodes)
    theta = np.arange(1, n + 1) * np.pi / (n + 1)
    cot = np.cos(theta) / np.sin(theta)
    weights = scale_L / (2.0 * (n + 1) * np.sin(theta) ** 2)
    # nodos exactamente conjugados dos a dos (el caché del modelo los reconoce)
    half = n // 2
    cot[n - half:] = -cot[:half][::-1]
    weights[n - half:] = weights[:half][::-1]
    if n % 2:
        cot[half] = 0.0
    nodes = 1j * scale_L * cot
    return BccRule(nodes=nodes, weights=weights, moment_weight=1.0 / (4.0 * scale_L * (n + 1)), scale_L=scale_L)


def _bcc_squared_norm(values: np.ndarray, rule: BccRule,
                      moments: Optional[Tuple[complex, complex]]) -> float:
    total = float(np.sum(rule.weights * np.abs(values) ** 2))
    if moments is not None:
        total += rule.moment_weight * (abs(moments[0]) ** 2 + abs(moments[1]) ** 2)
    return total


def _bcc_values(model: TransferFunctionModel, rule: BccRule) -> np.ndarray:
    """H en los nodos sin tocar el contador; para modelos reales solo la mitad superior."""
    nodes = rule.nodes
    values = np.empty(nodes.size, dtype=complex)
    if model.is_real:
        half = nodes.size // 2
        for j in range(half):
            values[j] = model.evaluate(nodes[j], record=False)
            values[nodes.size - 1 - j] = np.conj(values[j])
        if nodes.size % 2:
            values[half] = model.evaluate(nodes[half], record=False)
    else:
        for j, z in enumerate(nodes):
            values[j] = model.evaluate(z, record=False)
    return values


def h2_error(model: TransferFunctionModel, rom: RationalRom, quad_points: int = 10000,
             scale_L: float = 10.0) -> float:
    """
    Error H2 relativo ‖H - H_r‖ / ‖H‖.

    Para modelos en espacio de estados o racionales se usa la ruta exacta
    (Gramianos o factorización de Cauchy de los polos). Cuando el error
    relativo de la ruta por Gramianos es menor que 1e-6 pierde dígitos por
    cancelación y el numerador se recalcula con la regla BCC aplicada a la
    diferencia puntual.
    Para el resto de modelos se usa la regla BCC con quad_points nodos.
    """
    if quad_points < 2:
        raise ValueError("h2_error requiere quad_points >= 2")

    exact_ref: Optional[float] = None
    exact_err: Optional[float] = None
    if model.kind == "rational":
        exact_ref = h2_norm_rom(model.payload)
        exact_err = rom_difference_norm(model.payload, rom)
    elif model.kind == "state_space":
        std = model.payload.standard_form()
        exact_ref = h2_norm_state_space(std)
        rs = rom.to_state_space()
        stacked = StateSpace(
            scipy.linalg.block_diag(std.a, rs.a),
            np.concatenate([std.b, rs.b]),
            np.concatenate([std.c, -rs.c]),
        )
        exact_err = h2_norm_state_space(stacked)

    if exact_ref is not None and exact_err is not None:
        if exact_ref == 0:
            return 0.0 if exact_err == 0 else float("inf")
        relative = exact_err / exact_ref
        if relative >= 1e-6 or model.kind == "rational":
            return float(relative)

    rule = bcc_rule(quad_points, scale_L)
    h_values = _bcc_values(model, rule)
    r_values = np.asarray(rom.evaluate(rule.nodes))
    moments = model.moment_at_infinity
    diff_moments = None
    if moments is not None:
        m_r = rom.moment_at_infinity
        diff_moments = (moments[0] - m_r, moments[1] - m_r)
    err = np.sqrt(_bcc_squared_norm(h_values - r_values, rule, diff_moments))
    ref = exact_ref if exact_ref is not None else np.sqrt(_bcc_squared_norm(h_values, rule, moments))
    if ref == 0:
        return 0.0 if err == 0 else float("inf")
    return float(err / ref)


# ---------------------------------------------------------------------------
# Condiciones de Meier-Luenberger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HermiteMismatch:
    """Desajuste de interpolación de Hermite en el polo reflejado -conj λ_k."""
    pole: complex
    residue: complex
    value_mismatch: float
    derivative_mismatch: float
    vacuous: bool


@dataclass
class MeierLuenbergerReport:
    entries: List[HermiteMismatch] = field(default_factory=list)

    @property
    def max_value_mismatch(self) -> float:
        return max((e.value_mismatch for e in self.entries if not e.vacuous), default=0.0)

    @property
    def max_derivative_mismatch(self) -> float:
        return max((e.derivative_mismatch for e in self.entries if not e.vacuous), default=0.0)

    @property
    def max_mismatch(self) -> float:
        return max(self.max_value_mismatch, self.max_derivative_mismatch)

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {
                "pole": complex_to_json(e.pole),
                "value_mismatch": e.value_mismatch,
                "derivative_mismatch": e.derivative_mismatch,
                "vacuous": e.vacuous,
            }
            for e in self.entries
        ]


def check_meier_luenberger(model: TransferFunctionModel, rom: RationalRom) -> MeierLuenbergerReport:
    """
    Desajustes |H - H_r| y |H' - H_r'| en cada -conj λ_k.

    Los polos con residuo nulo se marcan como vacuos (las condiciones no
    imponen nada allí). Las evaluaciones no cuentan en el presupuesto.
    """
    if not rom.simple_poles:
        raise ValueError("check_meier_luenberger requiere un ROM con polos simples")
    report = MeierLuenbergerReport()
    for lam, rho in zip(rom.poles, rom.residues):
        point = -np.conj(lam)
        h = model.evaluate(point, record=False)
        dh = model.evaluate_derivative(point, record=False)
        report.entries.append(HermiteMismatch(
            pole=complex(lam),
            residue=complex(rho),
            value_mismatch=float(abs(h - rom.evaluate(point))),
            derivative_mismatch=float(abs(dh - rom.derivative(point))),
            vacuous=bool(rho == 0),
        ))
    if any(e.vacuous for e in report.entries):
        logger.warning(
            "Polos con residuo nulo: condiciones de Meier-Luenberger vacuas",
            extra={'poles': [e.pole for e in report.entries if e.vacuous]}
        )
    return report


# ---------------------------------------------------------------------------
# Ingesta de archivos
# ---------------------------------------------------------------------------

def _read_matrix_market(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Archivo Matrix Market no encontrado: {path}")
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        header = f.readline().strip()
    tokens = header.split()
    if (len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket" or tokens[1].lower() != "matrix"
            or tokens[2].lower() not in ("coordinate", "array")):
        raise MatrixMarketError(path, 1, f"Cabecera Matrix Market inválida: '{header}'")
    try:
        data = scipy.io.mmread(str(path))
    except Exception as e:
        raise MatrixMarketError(path, None, f"Error de lectura: {e}") from e
    if hasattr(data, "toarray"):
        data = data.toarray()
    return np.asarray(data)


def load_matrix_market(path_a: Union[str, Path], path_b: Union[str, Path], path_c: Union[str, Path],
                       path_e: Optional[Union[str, Path]] = None) -> StateSpace:
    """
    Carga un sistema en espacio de estados desde archivos Matrix Market.

    Raises:
        FileNotFoundError: Si falta algún archivo.
        MatrixMarketError: Cabecera inválida, error de lectura o dimensiones incompatibles.
    """
    a = _read_matrix_market(path_a)
    b = _read_matrix_market(path_b)
    c = _read_matrix_market(path_c)
    e = _read_matrix_market(path_e) if path_e is not None else None
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise MatrixMarketError(path_a, None, f"A debe ser cuadrada, forma {a.shape}")
    for name, path, vec in (("b", path_b, b), ("c", path_c, c)):
        if vec.size != n or (vec.ndim == 2 and min(vec.shape) != 1):
            raise MatrixMarketError(path, None, f"El vector {name} debe tener {n} entradas, forma {vec.shape}")
    if e is not None and e.shape != a.shape:
        raise MatrixMarketError(path_e, None, f"E debe tener la forma de A {a.shape}, recibida {e.shape}")
    logger.info(
        f"Sistema cargado desde Matrix Market con n={n}",
        extra={'path_a': str(path_a), 'order': n, 'descriptor': e is not None}
    )
    return StateSpace(a, b.reshape(-1), c.reshape(-1), e)


def rightmost_poles(sys: StateSpace, count: int) -> np.ndarray:
    """Los count polos de mayor parte real (desempate por parte imaginaria)."""
    poles = sys.poles()
    order = np.lexsort((-poles.imag, -poles.real))
    return poles[order[:count]]


def load_model_descriptor(source: Union[str, Path, Dict[str, Any]]) -> TransferFunctionModel:
    """
    Construye un TransferFunctionModel desde un descriptor JSON.

    Tipos admitidos:
        - {"kind": "delay", "n": 1000, "tau": 1.0, "rho": 0.1, "epsilon": 0.01}
        - {"kind": "state_space", "a": "A.mtx", "b": "b.mtx", "c": "c.mtx", "e": "E.mtx"}
          (rutas relativas al descriptor) o matrices en línea con "matrices"
        - {"kind": "rational", "poles": [...], "residues": [...]} o {"a": [...], "b": [...]}
        - {"kind": "tabulated", "points": [...], "values": [...]}
    Todos aceptan "moments": [M+, M-] opcional y "name".

    Raises:
        FileNotFoundError: Si el descriptor o algún archivo referenciado no existe.
        ConfigError: Si el descriptor es inválido.
    """
    base_dir = Path(".")
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Descriptor de modelo no encontrado: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                descriptor = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Descriptor JSON inválido en {path}: {e}") from e
        base_dir = path.parent
    else:
        descriptor = copy.deepcopy(dict(source))
        base_dir = Path(descriptor.pop("_base_dir", "."))

    kind = descriptor.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"Tipo de modelo '{kind}' no soportado. Tipos válidos: {MODEL_KINDS}")
    moments = descriptor.get("moments")
    moments = None if moments is None else tuple(complex_list(moments))
    if moments is not None and len(moments) != 2:
        raise ConfigError("'moments' debe contener exactamente [M+, M-]")
    name = descriptor.get("name", kind)

    if kind == "delay":
        params = {**DELAY_DEFAULTS, **descriptor}
        sys = DelaySystem(int(params["n"]), float(params["tau"]), float(params["rho"]), float(params["epsilon"]))
        return TransferFunctionModel.from_delay(sys, moment_at_infinity=moments, name=name)

    if kind == "state_space":
        if "matrices" in descriptor:
            m = descriptor["matrices"]
            sys = StateSpace(np.array(m["a"], dtype=float), np.array(m["b"], dtype=float),
                             np.array(m["c"], dtype=float),
                             None if m.get("e") is None else np.array(m["e"], dtype=float))
        else:
            missing = [k for k in ("a", "b", "c") if k not in descriptor]
            if missing:
                raise ConfigError(f"Faltan rutas Matrix Market en el descriptor: {missing}")

            def resolve(p):
                p = Path(p)
                return p if p.is_absolute() else base_dir / p

            sys = load_matrix_market(resolve(descriptor["a"]), resolve(descriptor["b"]), resolve(descriptor["c"]),
                                     resolve(descriptor["e"]) if descriptor.get("e") else None)
        return TransferFunctionModel.from_state_space(sys, moment_at_infinity=moments, name=name)

    if kind == "rational":
        rom = RationalRom.from_dict(descriptor)
        return TransferFunctionModel.from_rational(rom, moment_at_infinity=moments, name=name)

    table = TabulatedResponse(complex_list(descriptor.get("points")), complex_list(descriptor.get("values")),
                              real=bool(descriptor.get("real", True)))
    return TransferFunctionModel.from_tabulated(table, moment_at_infinity=moments, name=name)
