# Bucle externo de reducción H2 proyectada
"""
Reducción de orden H2-óptima por mínimos cuadrados proyectados.

Este módulo implementa:
- Configuración del bucle externo (Ph2Config) y registro de iteraciones
- Dimensión intermedia cuando aún no hay 2r muestras
- Filtro de polos espurios con la caja F(μ) y los polos de AAA emparejados
- Selección del nuevo punto por el mayor ángulo entre el espacio tangente
  de cada polo y el espacio de núcleos V(μ), con su conjugado
- Terminación por la norma H2 de la diferencia entre iterados sucesivos
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from reduction_core import numkit
from reduction_core.exceptions import (
    ConfigError,
    FitFailedError,
    NotPositiveDefiniteError,
    UnsupportedModelError,
)
from reduction_core.h2space import (
    ANGLE_METHODS,
    DUPLICATE_TOLERANCE,
    CauchyFactorization,
    SampleSet,
    cauchy_cholesky,
    projected_mismatch,
    projected_norm,
    subspace_angle_tangent,
)
from reduction_core.ratfit import FitOptions, fit
from reduction_core.systems import (
    RationalRom,
    TransferFunctionModel,
    complex_list,
    h2_error,
    rightmost_poles,
    rom_difference_norm,
)

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

RUN_STATUSES = ("running", "converged", "stagnated", "max_iters", "fit_failed", "degraded")

# Un candidato a esta distancia relativa de una muestra deja M(μ) numéricamente singular
SELECTION_TOLERANCE = float(np.sqrt(np.finfo(float).eps))

# Residuo proyectado, relativo a ‖P(μ)H‖, que se toma como recuperación exacta
RECOVERY_TOLERANCE = 1e-10


@dataclass
class Ph2Config:
    """
    Parámetros del bucle externo.

    initial_mu puede omitirse para modelos en espacio de estados o
    racionales; en ese caso se usan los polos más a la derecha reflejados.
    angle_method "svd" reutiliza la factorización de Cauchy de la iteración
    para los ángulos; "residual" no la necesita y aguanta muestras agrupadas.
    """
    target_r: int
    initial_mu: Optional[List[complex]] = None
    tol_term: float = 1e-9
    max_outer_iters: int = 100
    spurious_box_factor: float = 10.0
    b_min: float = 1e-10
    track_h2_error: bool = False
    h2_error_quad_points: int = 10000
    angle_method: str = "residual"
    fit_options: Optional[FitOptions] = None

    def __post_init__(self):
        if int(self.target_r) < 1:
            raise ConfigError(f"target_r debe ser >= 1, recibido {self.target_r}")
        if self.tol_term <= 0:
            raise ConfigError("tol_term debe ser positivo")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters debe ser al menos 1")
        if self.spurious_box_factor <= 1:
            raise ConfigError("spurious_box_factor debe ser mayor que 1")
        if self.b_min <= 0:
            raise ConfigError("b_min debe ser positivo")
        if self.angle_method not in ANGLE_METHODS:
            raise ConfigError(f"angle_method debe ser uno de {ANGLE_METHODS}, recibido '{self.angle_method}'")
        self.target_r = int(self.target_r)
        if self.initial_mu is not None:
            mu = complex_list(self.initial_mu)
            if mu.size == 0:
                raise ConfigError("initial_mu no puede estar vacío")
            if np.any(mu.real <= 0):
                raise ConfigError(f"initial_mu debe estar en el semiplano derecho: {mu[mu.real <= 0].tolist()}")
            self.initial_mu = list(mu)
        if self.fit_options is None:
            self.fit_options = FitOptions(b_min=self.b_min)

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "Ph2Config":
        config = dict(config)
        fit_options = FitOptions.from_dict({"b_min": config.get("b_min", 1e-10), **config.pop("fit", {})})
        known = {k: config[k] for k in cls.__dataclass_fields__ if k in config and k != "fit_options"}
        if "target_r" not in known and "r" in config:
            known["target_r"] = config["r"]
        if "target_r" not in known:
            raise ConfigError("Falta 'target_r' en la configuración de PH2")
        return cls(fit_options=fit_options, **known)


@dataclass(frozen=True)
class SpuriousBox:
    """Caja F(μ) del semiplano izquierdo fuera de la cual un polo se considera espurio."""
    real_interval: Tuple[float, float]
    imag_interval: Tuple[float, float]

    @classmethod
    def from_samples(cls, samples: Any, factor: float = 10.0) -> "SpuriousBox":
        """
        Caja ampliada por factor a partir de las muestras actuales.

        Note:
            Si todas las muestras son reales la extensión imaginaria es nula;
            entonces se usa ±factor·max Re μ.
        """
        mu = samples.mu if isinstance(samples, SampleSet) else np.asarray(samples, dtype=complex)
        re_max, re_min = float(np.max(mu.real)), float(np.min(mu.real))
        im_lo, im_hi = float(np.min(mu.imag)), float(np.max(mu.imag))
        if im_hi - im_lo == 0:
            span = factor * re_max
            imag = (-span, span)
        else:
            lower = factor * im_lo if im_lo < 0 else im_lo / factor
            upper = factor * im_hi if im_hi > 0 else im_hi / factor
            imag = (lower, upper)
        return cls(real_interval=(-factor * re_max, -re_min / factor), imag_interval=imag)

    def contains(self, pole: complex) -> bool:
        pole = complex(pole)
        return (self.real_interval[0] <= pole.real <= self.real_interval[1]
                and self.imag_interval[0] <= pole.imag <= self.imag_interval[1])


@dataclass
class IterationRecord:
    """Una iteración del bucle externo (o de un algoritmo de referencia)."""
    iteration: int
    fom_evals: int
    rom: RationalRom
    projected_residual: Optional[float] = None
    h2_error_estimate: Optional[float] = None
    rom_difference: Optional[float] = None
    added_points: List[complex] = field(default_factory=list)
    replaced_spurious: List[complex] = field(default_factory=list)
    used_fallback: bool = False

    @property
    def degree(self) -> int:
        return self.rom.degree


@dataclass
class RunRecord:
    """Historial de una ejecución completa."""
    algorithm: str
    target_r: int
    iterations: List[IterationRecord] = field(default_factory=list)
    status: str = "running"
    error: Optional[str] = None
    # Cantidades del modelo según la regla, sin descontar las compartidas por conjugación
    nominal_evals: Optional[int] = None

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "stagnated")

    @property
    def fom_evals(self) -> int:
        return self.iterations[-1].fom_evals if self.iterations else 0

    @property
    def degree_sequence(self) -> List[int]:
        return [it.degree for it in self.iterations]

    def append(self, entry: IterationRecord) -> None:
        if self.iterations and entry.fom_evals < self.iterations[-1].fom_evals:
            raise ValueError("El contador de evaluaciones no puede decrecer entre iteraciones")
        self.iterations.append(entry)

    def to_frame(self) -> pd.DataFrame:
        """Historial como DataFrame (una fila por iteración)."""
        rows = [
            {
                "iteration": it.iteration,
                "fom_evals": it.fom_evals,
                "degree": it.degree,
                "projected_residual": it.projected_residual,
                "h2_error": it.h2_error_estimate,
                "rom_difference": it.rom_difference,
                "added_points": ";".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in it.added_points),
                "replaced_spurious": len(it.replaced_spurious),
            }
            for it in self.iterations
        ]
        columns = ["iteration", "fom_evals", "degree", "projected_residual", "h2_error",
                   "rom_difference", "added_points", "replaced_spurious"]
        return pd.DataFrame(rows, columns=columns)


@dataclass(frozen=True)
class PointSelection:
    """Resultado de select_new_point."""
    points: np.ndarray
    pole: Optional[complex]
    angle: float
    stagnated: bool = False
    used_fallback: bool = False


def intermediate_dimension(n: int, target_r: int) -> int:
    """Grado a ajustar con n muestras: r si n >= 2r, si no 2⌊n/4⌋ (o 1 si eso da 0)."""
    if n >= 2 * target_r:
        return target_r
    r_tilde = 2 * (n // 4)
    if r_tilde == 0:
        return 1 if n >= 2 else 0
    return r_tilde


def _flip_stable(poles: np.ndarray, floor: float) -> np.ndarray:
    re = -np.abs(poles.real)
    re = np.where(re > -floor, -floor, re)
    return re + 1j * poles.imag


def match_aaa_poles(rom_poles: Sequence[complex], aaa_poles: Sequence[complex]) -> np.ndarray:
    """
    Ordena los polos de AAA contra los del ROM con Kuhn-Munkres sobre |λ_i - λ̃_j|.

    Returns:
        Arreglo de la longitud de rom_poles; NaN donde no hay polo de AAA disponible.
    """
    rom_poles = np.asarray(rom_poles, dtype=complex).reshape(-1)
    aaa_poles = np.asarray(aaa_poles, dtype=complex).reshape(-1)
    r, q = rom_poles.size, aaa_poles.size
    matched = np.full(r, np.nan, dtype=complex)
    if r == 0 or q == 0:
        return matched
    size = max(r, q)
    cost = np.zeros((size, size))
    cost[:r, :q] = np.abs(rom_poles[:, None] - aaa_poles[None, :])
    perm = numkit.linear_assignment(cost)
    for i in range(r):
        if perm[i] < q:
            matched[i] = aaa_poles[perm[i]]
    return matched


def filter_spurious(rom_poles: Sequence[complex], aaa_poles: Sequence[complex],
                    box: SpuriousBox) -> Tuple[np.ndarray, List[complex]]:
    """
    Sustituye los polos fuera de la caja por su polo de AAA emparejado.

    Args:
        rom_poles: Polos del ROM actual.
        aaa_poles: Polos de AAA ya reflejados a C- y ordenados contra rom_poles.
        box: Caja F(μ) de las muestras actuales.

    Returns:
        (polos reparados, polos sustituidos).
    """
    poles = np.array(rom_poles, dtype=complex).reshape(-1)
    aaa_poles = np.asarray(aaa_poles, dtype=complex).reshape(-1)
    if aaa_poles.size != poles.size:
        raise ValueError("Las listas de polos del ROM y de AAA deben tener la misma longitud")
    replaced: List[complex] = []
    for k, lam in enumerate(poles):
        if box.contains(lam):
            continue
        candidate = aaa_poles[k]
        if not np.isfinite(candidate):
            logger.warning(
                "Polo espurio sin polo de AAA emparejado: se conserva",
                extra={'pole': complex(lam)}
            )
            continue
        replaced.append(complex(lam))
        poles[k] = candidate
    if replaced:
        logger.warning(
            f"Sustituidos {len(replaced)} polos espurios",
            extra={'replaced': replaced, 'box_real': box.real_interval, 'box_imag': box.imag_interval}
        )
    return poles, replaced


def _with_conjugate(point: complex, samples: SampleSet) -> np.ndarray:
    point = complex(point)
    if abs(point.imag) <= DUPLICATE_TOLERANCE * abs(point):
        return np.array([complex(point.real, 0.0)])
    points = [point]
    if not samples.contains(np.conj(point)):
        points.append(np.conj(point))
    return np.array(points, dtype=complex)


def select_new_point(rom_poles: Sequence[complex], samples: SampleSet,
                     fact: Optional[CauchyFactorization] = None,
                     method: str = "residual") -> PointSelection:
    """
    Nuevo punto -conj λ* para el polo λ* peor cubierto por V(μ).

    λ* maximiza sin φ_max(T(λ), V(μ)); los candidatos cuyo punto reflejado ya
    está en μ (a √eps relativo) se saltan. Si el polo no es real se añade
    también el conjugado del punto.

    Args:
        fact: Factorización de M(μ) de la iteración; la reutiliza method="svd".
        method: "residual" (Gram del producto de Blaschke) o "svd".

    Returns:
        PointSelection; con stagnated=True y sin puntos si todos los
        candidatos duplican muestras existentes.
    """
    poles = np.asarray(rom_poles, dtype=complex).reshape(-1)
    if poles.size == 0:
        raise ValueError("select_new_point requiere al menos un polo")
    poles = poles[poles.real < 0]
    if poles.size == 0:
        raise ValueError("Ningún polo en el semiplano izquierdo")
    if method not in ANGLE_METHODS:
        raise ValueError(f"Método de ángulos desconocido '{method}'")
    if method == "svd" and fact is None:
        fact = cauchy_cholesky(samples)

    try:
        angles = np.array([subspace_angle_tangent(samples, fact, lam, method=method) for lam in poles])
    except (NotPositiveDefiniteError, ValueError, np.linalg.LinAlgError) as e:
        logger.warning(
            f"Fallo en el cálculo de ángulos, se usa la distancia a las muestras: {e}",
            extra={'poles': poles.tolist()}
        )
        coverage = np.array([np.min(np.abs(samples.mu + np.conj(lam))) for lam in poles])
        for k in np.argsort(-coverage, kind="stable"):
            point = -np.conj(poles[k])
            if not samples.contains(point, SELECTION_TOLERANCE):
                return PointSelection(_with_conjugate(point, samples), complex(poles[k]), float("nan"),
                                      used_fallback=True)
        return PointSelection(np.zeros(0, dtype=complex), None, 0.0, stagnated=True, used_fallback=True)

    for k in np.argsort(-angles, kind="stable"):
        point = -np.conj(poles[k])
        if samples.contains(point, SELECTION_TOLERANCE):
            continue
        return PointSelection(_with_conjugate(point, samples), complex(poles[k]), float(angles[k]))

    logger.warning("Todos los candidatos duplican muestras existentes: estancamiento",
                   extra={'poles': poles.tolist()})
    return PointSelection(np.zeros(0, dtype=complex), None, 0.0, stagnated=True)


def initial_samples(model: TransferFunctionModel, r: int) -> np.ndarray:
    """
    Puntos iniciales: los polos más a la derecha reflejados a C+ (cuatro si r = 2),
    cerrados bajo conjugación.

    Raises:
        ConfigError: Si el modelo no expone sus polos (retardo o tabulado).
    """
    count = 4 if r == 2 else r
    if model.kind == "state_space":
        candidates = rightmost_poles(model.payload, count)
    elif model.kind == "rational":
        poles = model.payload.poles
        candidates = poles[np.lexsort((-poles.imag, -poles.real))][:count]
    else:
        raise ConfigError(f"El modelo de tipo '{model.kind}' requiere initial_mu explícito")
    points = -np.conj(candidates)
    if np.any(points.real <= 0):
        raise ConfigError("El modelo tiene polos fuera del semiplano izquierdo")
    unique: List[complex] = []
    for z in points:
        if not any(abs(z - u) <= DUPLICATE_TOLERANCE * max(abs(z), abs(u)) for u in unique):
            unique.append(complex(z))
    return SampleSet.from_points(unique, close=True).mu


def _best_iterate(record: RunRecord) -> RationalRom:
    full = [it for it in record.iterations if it.degree == record.target_r and it.rom_difference is not None]
    if full:
        return min(full, key=lambda it: it.rom_difference).rom
    return record.iterations[-1].rom


def run(model: TransferFunctionModel, cfg: Ph2Config) -> Tuple[RationalRom, RunRecord]:
    """
    Ejecuta el bucle externo de reducción H2 proyectada.

    Args:
        model: Modelo real (H(conj z) = conj H(z)).
        cfg: Configuración del bucle.

    Returns:
        (ROM, RunRecord). Si se alcanza max_outer_iters o hay estancamiento se
        devuelve el iterado de grado objetivo con menor diferencia respecto a
        su predecesor, con status "max_iters" o "stagnated". Con más de 2r
        muestras y residuo proyectado al nivel de redondeo el estado es
        "converged" sin esperar a la diferencia entre iterados.

    Raises:
        UnsupportedModelError: Si el modelo no es real.
        ConfigError: Si faltan puntos iniciales o son menos de dos.
    """
    if not model.is_real:
        raise UnsupportedModelError("La reducción H2 proyectada real requiere un modelo real")
    mu0 = cfg.initial_mu if cfg.initial_mu is not None else initial_samples(model, cfg.target_r)
    samples = SampleSet.from_points(mu0, close=True)
    if samples.n < 2:
        raise ConfigError("Se requieren al menos dos puntos de muestreo iniciales")

    counter0 = model.eval_counter
    samples = SampleSet(samples.mu, model.evaluate_many(samples.mu), closed_under_conjugation=True)
    record = RunRecord(algorithm="ph2", target_r=cfg.target_r)
    logger.info(
        f"Iniciando PH2 con r={cfg.target_r} y {samples.n} muestras",
        extra={'model': model.name, 'target_r': cfg.target_r, 'initial_samples': samples.n}
    )

    previous: Optional[RationalRom] = None
    previous_poles: Optional[np.ndarray] = None
    for iteration in range(1, cfg.max_outer_iters + 1):
        r_current = intermediate_dimension(samples.n, cfg.target_r)
        fact = cauchy_cholesky(samples)
        try:
            result = fit(samples, samples.values, r_current, fact, init_poles=previous_poles,
                         options=cfg.fit_options)
        except FitFailedError as e:
            logger.error(f"Fallo del ajuste interno en la iteración {iteration}: {e}",
                         extra={'iteration': iteration, 'r': r_current})
            record.status = "fit_failed"
            record.error = str(e)
            rom = _best_iterate(record) if record.iterations else RationalRom.zero(cfg.target_r)
            return rom, record

        rom = result.rom
        residual = projected_mismatch(fact, samples.values, rom.evaluate(samples.mu))
        difference = None if previous is None else rom_difference_norm(rom, previous)
        entry = IterationRecord(
            iteration=iteration,
            fom_evals=model.eval_counter - counter0,
            rom=rom,
            projected_residual=residual,
            h2_error_estimate=(h2_error(model, rom, cfg.h2_error_quad_points) if cfg.track_h2_error else None),
            rom_difference=difference,
        )
        logger.info(
            f"PH2 iteración {iteration}: grado {rom.degree}, residuo proyectado {residual:.3e}",
            extra={'iteration': iteration, 'r': rom.degree, 'fom_evals': entry.fom_evals,
                   'rom_difference': difference, 'degraded': result.degraded}
        )

        if difference is not None and difference < cfg.tol_term and r_current == cfg.target_r:
            record.append(entry)
            record.status = "converged"
            return rom, record

        # con n > 2r el ajuste ya no interpola: residuo nulo significa H = H_r en V(μ)
        if (r_current == cfg.target_r and samples.n > 2 * cfg.target_r
                and residual <= RECOVERY_TOLERANCE * projected_norm(fact, samples.values)):
            record.append(entry)
            record.status = "converged"
            logger.info(
                f"PH2 iteración {iteration}: residuo proyectado al nivel de redondeo, modelo recuperado",
                extra={'iteration': iteration, 'residual': residual}
            )
            return rom, record

        box = SpuriousBox.from_samples(samples, cfg.spurious_box_factor)
        poles = rom.poles
        aaa_poles = match_aaa_poles(poles, _flip_stable(result.aaa_poles, cfg.b_min))
        repaired, replaced = filter_spurious(poles, aaa_poles, box)
        entry.replaced_spurious = replaced

        selection = select_new_point(repaired, samples, fact, method=cfg.angle_method)
        entry.used_fallback = selection.used_fallback
        if selection.stagnated:
            record.append(entry)
            record.status = "stagnated"
            logger.warning("PH2 detenido por estancamiento", extra={'iteration': iteration})
            return _best_iterate(record), record

        values = model.evaluate_many(selection.points)
        samples = samples.append(selection.points, values)
        entry.added_points = [complex(z) for z in selection.points]
        record.append(entry)
        previous = rom
        previous_poles = repaired

    record.status = "max_iters"
    logger.warning(
        f"PH2 alcanzó el máximo de {cfg.max_outer_iters} iteraciones sin converger",
        extra={'target_r': cfg.target_r, 'fom_evals': record.fom_evals}
    )
    return _best_iterate(record), record
