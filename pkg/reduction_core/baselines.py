# Algoritmos de referencia
"""
Algoritmos de referencia para la comparación con el bucle proyectado.

Este módulo implementa:
- IRKA: proyección de Petrov-Galerkin con bases de Krylov racionales
- TF-IRKA: la misma iteración de punto fijo usando solo H y H' (Loewner)
- QuadVF: ajuste racional contra la discretización BCC de la norma H2

Los tres cuentan evaluaciones (o resoluciones lineales) en el contador del
modelo, de modo que el presupuesto es comparable con el de PH2.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union
import logging

import numpy as np
import scipy.linalg

from reduction_core import numkit
from reduction_core.exceptions import (
    ConfigError,
    MissingMomentsError,
    UnsupportedModelError,
)
from reduction_core.h2space import DUPLICATE_TOLERANCE
from reduction_core.ph2 import IterationRecord, RunRecord
from reduction_core.ratfit import DiagonalWeighting, FitOptions, fit
from reduction_core.systems import (
    BccRule,
    RationalRom,
    StateSpace,
    TransferFunctionModel,
    bcc_rule,
    complex_list,
    conjugate_pairing,
    rightmost_poles,
    rom_difference_norm,
)

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

# Condición de W*EV a partir de la cual se reinicia con desplazamientos perturbados
RESTART_CONDITION = 1e14
SHIFT_PERTURBATION = 1e-8
MAX_RESTARTS = 3


@dataclass
class IrkaConfig:
    """Parámetros comunes de IRKA y TF-IRKA."""
    r: int
    initial_shifts: Optional[List[complex]] = None
    tol_term: float = 1e-9
    max_iters: int = 100

    def __post_init__(self):
        if int(self.r) < 1:
            raise ConfigError(f"r debe ser >= 1, recibido {self.r}")
        self.r = int(self.r)
        if self.tol_term <= 0:
            raise ConfigError("tol_term debe ser positivo")
        if self.max_iters < 1:
            raise ConfigError("max_iters debe ser al menos 1")
        if self.initial_shifts is not None:
            shifts = complex_list(self.initial_shifts)
            if shifts.size != self.r:
                raise ConfigError(f"Se esperaban {self.r} desplazamientos iniciales, recibidos {shifts.size}")
            if np.any(shifts.real <= 0):
                raise ConfigError("Los desplazamientos iniciales deben estar en el semiplano derecho")
            for j in range(1, shifts.size):
                if np.any(np.abs(shifts[:j] - shifts[j]) <= DUPLICATE_TOLERANCE * np.abs(shifts[j])):
                    raise ConfigError(f"Desplazamiento repetido: {shifts[j]}")
            _require_conjugate_closed(shifts)
            self.initial_shifts = list(shifts)

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "IrkaConfig":
        known = {k: config[k] for k in cls.__dataclass_fields__ if k in config}
        if "r" not in known and "target_r" in config:
            known["r"] = config["target_r"]
        if "r" not in known:
            raise ConfigError("Falta 'r' en la configuración de IRKA")
        return cls(**known)


@dataclass
class QuadVfConfig:
    """Parámetros de QuadVF: nodos de la regla BCC y escala L."""
    r: int
    num_nodes: int = 2000
    scale_L: float = 10.0
    use_moments: bool = True
    fit_options: Optional[FitOptions] = None

    def __post_init__(self):
        if int(self.r) < 1:
            raise ConfigError(f"r debe ser >= 1, recibido {self.r}")
        self.r = int(self.r)
        if self.scale_L <= 0:
            raise ConfigError("scale_L debe ser positivo")
        if self.num_nodes < 2:
            raise ConfigError("num_nodes debe ser al menos 2")
        if self.fit_options is None:
            self.fit_options = FitOptions()

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "QuadVfConfig":
        config = dict(config)
        fit_options = FitOptions.from_dict(config.pop("fit", {}))
        known = {k: config[k] for k in cls.__dataclass_fields__ if k in config and k != "fit_options"}
        if "r" not in known and "target_r" in config:
            known["r"] = config["target_r"]
        if "r" not in known:
            raise ConfigError("Falta 'r' en la configuración de QuadVF")
        return cls(fit_options=fit_options, **known)


def _require_conjugate_closed(shifts: np.ndarray) -> None:
    for z in shifts[np.abs(shifts.imag) > DUPLICATE_TOLERANCE * np.abs(shifts)]:
        if not np.any(np.abs(shifts - np.conj(z)) <= DUPLICATE_TOLERANCE * abs(z)):
            raise ConfigError(f"Los desplazamientos deben ser cerrados bajo conjugación: falta {np.conj(z)}")


def _flip_to_right(poles: np.ndarray) -> np.ndarray:
    """μ = |Re λ| + i Im λ."""
    return np.abs(poles.real) + 1j * poles.imag


def _stable_rom(poles: np.ndarray, residues: np.ndarray, algorithm: str) -> RationalRom:
    unstable = poles.real >= 0
    if np.any(unstable):
        logger.warning(
            f"{algorithm}: polos inestables reflejados al semiplano izquierdo",
            extra={'poles': poles[unstable].tolist()}
        )
        poles = -np.abs(poles.real) + 1j * poles.imag
        poles = np.where(poles.real == 0, poles - 1e-10, poles)
    return RationalRom.from_pole_residue(poles, residues)


def _default_shifts(model: TransferFunctionModel, r: int) -> np.ndarray:
    """Polos más a la derecha reflejados; si no forman un conjunto cerrado, logspace real."""
    if model.kind == "state_space":
        shifts = -np.conj(rightmost_poles(model.payload, r))
        try:
            if shifts.size == r and np.all(shifts.real > 0):
                _require_conjugate_closed(shifts)
                return shifts
        except ConfigError:
            pass
    logger.info("Desplazamientos iniciales por defecto en logspace(-1, 1)", extra={'r': r})
    return np.logspace(-1, 1, r).astype(complex)


def _real_basis(columns: Dict[int, np.ndarray], shifts: np.ndarray) -> np.ndarray:
    """Base real ortonormal del espacio generado por las columnas de desplazamientos conjugados."""
    cols = []
    for j, s in enumerate(shifts):
        if j not in columns:
            continue
        v = columns[j]
        if abs(s.imag) <= DUPLICATE_TOLERANCE * abs(s):
            cols.append(v.real)
        else:
            cols += [v.real, v.imag]
    q, _ = scipy.linalg.qr(np.column_stack(cols), mode="economic")
    return q


def _irka_system(source: Union[StateSpace, TransferFunctionModel]) -> Tuple[TransferFunctionModel, StateSpace]:
    if isinstance(source, StateSpace):
        return TransferFunctionModel.from_state_space(source), source
    if source.kind == "state_space":
        return source, source.payload
    if source.kind == "rational":
        return source, source.payload.to_state_space()
    raise UnsupportedModelError(f"IRKA requiere una realización; el modelo es de tipo '{source.kind}'")


def _krylov_bases(sys: StateSpace, shifts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mass = sys.mass()
    v_cols: Dict[int, np.ndarray] = {}
    w_cols: Dict[int, np.ndarray] = {}
    for j, s in enumerate(shifts):
        if s.imag < -DUPLICATE_TOLERANCE * abs(s):
            continue
        lu = scipy.linalg.lu_factor(s * mass - sys.a)
        v_cols[j] = scipy.linalg.lu_solve(lu, sys.b.astype(complex))
        w_cols[j] = scipy.linalg.lu_solve(lu, sys.c.astype(complex), trans=2)
    return _real_basis(v_cols, shifts), _real_basis(w_cols, shifts)


def irka(source: Union[StateSpace, TransferFunctionModel], cfg: IrkaConfig) -> Tuple[RationalRom, RunRecord]:
    """
    Iteración de punto fijo IRKA con bases de Krylov racionales.

    En cada iteración se resuelven (μ_j E - A) v = b y (μ_j E - A)* w = c,
    se ortonormalizan V y W, se proyecta con la corrección (W*EV)⁻¹ y los
    nuevos desplazamientos son los polos reducidos reflejados a C+.

    Args:
        source: Sistema en espacio de estados o modelo con realización.
        cfg: Configuración; sin desplazamientos iniciales se usan los polos
            más a la derecha.

    Returns:
        (ROM, RunRecord). Cada iteración cuenta 2r resoluciones lineales.
    """
    model, sys = _irka_system(source)
    if not sys.is_real:
        raise UnsupportedModelError("IRKA real requiere matrices reales")
    r = cfg.r
    if r > sys.order:
        raise ConfigError(f"r={r} excede el orden del sistema ({sys.order})")
    shifts = complex_list(cfg.initial_shifts) if cfg.initial_shifts is not None else _default_shifts(model, r)
    mass = sys.mass()
    counter0 = model.eval_counter
    record = RunRecord(algorithm="irka", target_r=r)
    logger.info(f"Iniciando IRKA con r={r}", extra={'model': model.name, 'order': sys.order})

    previous: Optional[RationalRom] = None
    for iteration in range(1, cfg.max_iters + 1):
        for restart in range(MAX_RESTARTS + 1):
            v, w = _krylov_bases(sys, shifts)
            model.record_solves(2 * r)
            er = w.T @ mass @ v
            if np.linalg.cond(er) <= RESTART_CONDITION:
                break
            logger.warning(
                "W*EV casi singular: reinicio con desplazamientos perturbados",
                extra={'iteration': iteration, 'restart': restart + 1}
            )
            shifts = shifts.real * (1.0 + SHIFT_PERTURBATION * (restart + 1)) + 1j * shifts.imag
        ar = w.T @ sys.a @ v
        a_std = np.linalg.solve(er, ar)
        b_std = np.linalg.solve(er, w.T @ sys.b)
        c_red = v.T @ sys.c

        poles, vectors = numkit.eigen_decomposition(a_std)
        residues = (c_red @ vectors) * np.linalg.solve(vectors, b_std)
        rom = _stable_rom(poles, residues, "IRKA")
        difference = None if previous is None else rom_difference_norm(rom, previous)
        record.append(IterationRecord(
            iteration=iteration,
            fom_evals=model.eval_counter - counter0,
            rom=rom,
            rom_difference=difference,
            added_points=[complex(s) for s in shifts],
        ))
        logger.info(
            f"IRKA iteración {iteration}",
            extra={'iteration': iteration, 'r': r, 'rom_difference': difference}
        )
        if difference is not None and difference < cfg.tol_term:
            record.status = "converged"
            return rom, record
        previous = rom
        shifts = _flip_to_right(poles)

    record.status = "max_iters"
    logger.warning(f"IRKA no convergió en {cfg.max_iters} iteraciones", extra={'r': r})
    return record.iterations[-1].rom, record


def _reseed(new_shifts: np.ndarray, previous: np.ndarray, r: int) -> np.ndarray:
    """Completa hasta r desplazamientos con grupos conjugados del conjunto anterior."""
    shifts = list(new_shifts)
    pairs, singles = conjugate_pairing(previous)
    groups = [[previous[j]] for j in singles] + [[previous[j], previous[k]] for j, k in pairs]
    for group in groups:
        if len(shifts) + len(group) > r:
            continue
        if any(np.min(np.abs(np.array(shifts) - g)) <= DUPLICATE_TOLERANCE * abs(g) for g in group if shifts):
            continue
        shifts += group
        if len(shifts) == r:
            break
    extra = 1.0
    while len(shifts) < r:
        if not shifts or np.min(np.abs(np.array(shifts) - extra)) > DUPLICATE_TOLERANCE:
            shifts.append(complex(extra))
        extra *= 2.0
    return np.array(shifts, dtype=complex)


def loewner_matrices(shifts: np.ndarray, h: np.ndarray, dh: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Matrices (E_r, A_r) del interpolante de Hermite en los desplazamientos.

    E_jk = -(H_j - H_k)/(μ_j - μ_k), E_jj = -H'_j;
    A_jk = -(μ_j H_j - μ_k H_k)/(μ_j - μ_k), A_jj = -(H_j + μ_j H'_j).
    """
    mu = np.asarray(shifts, dtype=complex)
    diff = mu[:, None] - mu[None, :]
    np.fill_diagonal(diff, 1.0)
    e = -(h[:, None] - h[None, :]) / diff
    a = -(mu[:, None] * h[:, None] - mu[None, :] * h[None, :]) / diff
    np.fill_diagonal(e, -dh)
    np.fill_diagonal(a, -(h + mu * dh))
    return e, a


def tfirka(model: TransferFunctionModel, cfg: IrkaConfig) -> Tuple[RationalRom, RunRecord]:
    """
    TF-IRKA: IRKA con matrices de Loewner construidas solo con H y H'.

    Cada iteración evalúa H y H' en los r desplazamientos sin reutilizar
    evaluaciones anteriores (r + r = 2r en el contador).

    Raises:
        UnsupportedModelError: Si el modelo es tabulado (sin H').
    """
    if not model.supports_derivative:
        raise UnsupportedModelError("TF-IRKA requiere H'(z); los modelos tabulados no lo proporcionan")
    r = cfg.r
    if cfg.initial_shifts is not None:
        shifts = complex_list(cfg.initial_shifts)
    elif model.kind in ("state_space", "rational"):
        shifts = _default_shifts(model, r)
    else:
        raise ConfigError(f"TF-IRKA sobre un modelo '{model.kind}' requiere initial_shifts")
    counter0 = model.eval_counter
    record = RunRecord(algorithm="tfirka", target_r=r)
    logger.info(f"Iniciando TF-IRKA con r={r}", extra={'model': model.name})

    previous: Optional[RationalRom] = None
    for iteration in range(1, cfg.max_iters + 1):
        h = np.array([model.evaluate(s, use_cache=False) for s in shifts])
        dh = np.array([model.evaluate_derivative(s, use_cache=False) for s in shifts])
        e, a = loewner_matrices(shifts, h, dh)

        values, vectors = numkit.eigen_decomposition(a, e)
        finite = np.isfinite(values)
        if not np.all(finite):
            logger.warning(
                "TF-IRKA: autovalores infinitos descartados",
                extra={'iteration': iteration, 'dropped': int(np.count_nonzero(~finite))}
            )
        values, vectors = values[finite], vectors[:, finite]
        residues = (h @ vectors) * np.linalg.lstsq(e @ vectors, h, rcond=None)[0]
        rom = _stable_rom(values, residues, "TF-IRKA")
        difference = None if previous is None else rom_difference_norm(rom, previous)
        record.append(IterationRecord(
            iteration=iteration,
            fom_evals=model.eval_counter - counter0,
            rom=rom,
            rom_difference=difference,
            added_points=[complex(s) for s in shifts],
        ))
        logger.info(
            f"TF-IRKA iteración {iteration}",
            extra={'iteration': iteration, 'r': r, 'fom_evals': record.fom_evals, 'rom_difference': difference}
        )
        if difference is not None and difference < cfg.tol_term:
            record.status = "converged"
            return rom, record
        previous = rom
        new_shifts = _flip_to_right(values)
        shifts = new_shifts if new_shifts.size == r else _reseed(new_shifts, shifts, r)

    record.status = "max_iters"
    logger.warning(f"TF-IRKA no convergió en {cfg.max_iters} iteraciones", extra={'r': r})
    return record.iterations[-1].rom, record


def quadrature_nodes(num_nodes: int, scale_L: float = 10.0) -> BccRule:
    """Nodos z_j = i L cot(jπ/(n+1)) y pesos de la regla BCC."""
    return bcc_rule(num_nodes, scale_L)


def quadvf(model: TransferFunctionModel, cfg: QuadVfConfig) -> Tuple[RationalRom, RunRecord]:
    """
    Ajuste racional con la norma H2 discretizada por la regla BCC.

    Minimiza Σ w_j |H(z_j) - H_r(z_j)|² + w±(|M+ - m_r|² + |M- - m_r|²)
    con el motor VARPRO de ratfit y la ponderación diagonal.

    Raises:
        MissingMomentsError: Si use_moments y el modelo no tiene momentos.
    """
    if cfg.use_moments and not model.has_moments:
        raise MissingMomentsError(
            f"El modelo '{model.name}' no proporciona momentos en infinito; use use_moments=False"
        )
    rule = quadrature_nodes(cfg.num_nodes, cfg.scale_L)
    counter0 = model.eval_counter
    logger.info(
        f"Iniciando QuadVF con r={cfg.r} y {cfg.num_nodes} nodos",
        extra={'model': model.name, 'scale_L': cfg.scale_L}
    )
    values = model.evaluate_many(rule.nodes)
    weights = rule.weights
    moments = None
    if cfg.use_moments:
        moments = model.moment_at_infinity
        weights = np.concatenate([weights, [rule.moment_weight, rule.moment_weight]])
    result = fit(rule.nodes, values, cfg.r, DiagonalWeighting(weights), options=cfg.fit_options, moments=moments)

    record = RunRecord(algorithm="quadvf", target_r=cfg.r)
    record.append(IterationRecord(
        iteration=1,
        fom_evals=model.eval_counter - counter0,
        rom=result.rom,
        projected_residual=result.residual_norm,
    ))
    record.status = "converged" if result.converged and not result.degraded else "degraded"
    record.nominal_evals = rule.nodes.size + (2 if moments is not None else 0)
    logger.info(
        f"QuadVF: {record.fom_evals} evaluaciones reales de {record.nominal_evals} cantidades de la regla",
        extra={'model': model.name, 'status': record.status}
    )
    return result.rom, record
