# Banco de pruebas de experimentos
"""
Ejecución de experimentos de reducción y escritura de resultados.

Este módulo implementa:
- ExperimentConfig: configuración JSON de un experimento (modelo, algoritmos,
  parámetros, dimensiones r, directorio de salida)
- run_experiment: ejecuta cada combinación (algoritmo, r) con un clon privado
  del modelo, calcula el error H2 relativo y escribe resumen, historiales y ROMs
- emit_bode: tabla |H(iω)| y |H(iω) - H_r(iω)| para graficar

Los archivos se escriben de forma atómica (archivo temporal + reemplazo).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import copy
import json
import logging
import os
import time

import numpy as np
import pandas as pd

from reduction_core.baselines import IrkaConfig, QuadVfConfig, irka, quadvf, tfirka
from reduction_core.exceptions import ConfigError
from reduction_core.ph2 import Ph2Config, RunRecord, run as run_ph2
from reduction_core.systems import RationalRom, TransferFunctionModel, h2_error, load_model_descriptor

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

ALGORITHMS = ("ph2", "irka", "tfirka", "quadvf")
SUMMARY_COLUMNS = ["algorithm", "r", "fom_evals", "rel_h2_error", "converged", "wall_time_s"]
BODE_COLUMNS = ["frequency", "Hmag", "errmag"]
SHARED_TOLERANCE = 1e-9

# Directorio de salida por defecto (configurable por entorno)
DEFAULT_OUTPUT_DIR = os.getenv("H2MOR_OUTPUT_DIR", "results")


def _default_workers() -> int:
    try:
        return max(1, int(os.getenv("H2MOR_WORKERS", "1")))
    except ValueError:
        logger.warning("H2MOR_WORKERS inválido, se usa 1 hilo")
        return 1


@dataclass
class ExperimentConfig:
    """Configuración de un experimento."""
    model: Union[str, Dict[str, Any]]
    algorithms: List[str]
    rom_dims: List[int]
    algorithm_params: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    output_dir: str = DEFAULT_OUTPUT_DIR
    h2_error_quad_points: int = 10000
    tol_term: float = SHARED_TOLERANCE
    workers: int = field(default_factory=_default_workers)
    bode: Dict[str, Any] = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if isinstance(self.algorithms, str):
            self.algorithms = [self.algorithms]
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if not self.algorithms or unknown:
            raise ConfigError(f"Algoritmos no válidos: {unknown or self.algorithms}. Válidos: {ALGORITHMS}")
        if isinstance(self.rom_dims, int):
            self.rom_dims = [self.rom_dims]
        if not self.rom_dims or any(int(r) < 1 for r in self.rom_dims):
            raise ConfigError(f"rom_dims debe ser una lista no vacía de enteros positivos: {self.rom_dims}")
        self.rom_dims = [int(r) for r in self.rom_dims]
        if self.h2_error_quad_points < 2:
            raise ConfigError("h2_error_quad_points debe ser al menos 2")
        if self.tol_term <= 0:
            raise ConfigError("tol_term debe ser positivo")
        if int(self.workers) < 1:
            raise ConfigError("workers debe ser al menos 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Union[str, Path] = ".") -> "ExperimentConfig":
        data = dict(data)
        if "model" not in data:
            raise ConfigError("Falta la clave 'model' en la configuración del experimento")
        algorithms = data.pop("algorithms", data.pop("algorithm", None))
        if algorithms is None:
            raise ConfigError("Falta la clave 'algorithm' en la configuración del experimento")
        rom_dims = data.pop("rom_dims", None)
        if rom_dims is None:
            raise ConfigError("Falta la clave 'rom_dims' en la configuración del experimento")
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        known.setdefault("base_dir", str(base_dir))
        return cls(algorithms=algorithms, rom_dims=rom_dims, **known)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """
        Raises:
            FileNotFoundError: Si el archivo no existe.
            ConfigError: Si el JSON es inválido.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Archivo de configuración no encontrado: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"JSON inválido en {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"La configuración en {path} debe ser un objeto JSON")
        return cls.from_dict(data, base_dir=path.parent)

    def with_overrides(self, model: Optional[str] = None, algorithm: Optional[str] = None,
                       r: Optional[int] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        """Copia con los campos de primer nivel sobrescritos por la línea de comandos."""
        updated = copy.deepcopy(self)
        if model is not None:
            updated.model = model
            updated.base_dir = "."
        if algorithm is not None:
            updated.algorithms = [algorithm]
        if r is not None:
            updated.rom_dims = [int(r)]
        if output_dir is not None:
            updated.output_dir = output_dir
        updated.__post_init__()
        return updated

    def load_model(self) -> TransferFunctionModel:
        if isinstance(self.model, dict):
            return load_model_descriptor({"_base_dir": self.base_dir, **self.model})
        path = Path(self.model)
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        return load_model_descriptor(path)


@dataclass
class ResultRow:
    """Fila del resumen de un experimento."""
    algorithm: str
    r: int
    fom_evals: int
    rel_h2_error: float
    converged: bool
    wall_time_s: float
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if k in SUMMARY_COLUMNS}


def _atomic_write(path: Path, write) -> None:
    """Escribe en path.tmp y lo reemplaza sobre path."""
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = path.with_name(path.name + ".tmp")
    try:
        write(temp_file)
        os.replace(temp_file, path)
    except Exception:
        if temp_file.exists():
            temp_file.unlink()
        raise


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False))
    return path


def write_rom(rom: RationalRom, path: Union[str, Path]) -> Path:
    path = Path(path)

    def dump(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(rom.to_dict(), f, indent=2)

    _atomic_write(path, dump)
    return path


def read_rom(path: Union[str, Path]) -> RationalRom:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Archivo de ROM no encontrado: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return RationalRom.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON de ROM inválido en {path}: {e}") from e


def _params_for(params: Dict[str, Any], r: int, tol_term: float) -> Dict[str, Any]:
    """Parámetros del algoritmo para un r concreto; las listas por r van en un dict {"r": [...]}."""
    resolved = {"tol_term": tol_term}
    for key, value in params.items():
        if isinstance(value, dict) and key in ("initial_mu", "initial_shifts"):
            value = value.get(str(r))
            if value is None:
                continue
        resolved[key] = value
    return resolved


def run_algorithm(model: TransferFunctionModel, algorithm: str, r: int,
                  params: Optional[Dict[str, Any]] = None,
                  tol_term: float = SHARED_TOLERANCE) -> Tuple[RationalRom, RunRecord]:
    """Despacha a ph2, irka, tfirka o quadvf con la configuración correspondiente."""
    params = _params_for(params or {}, r, tol_term)
    if algorithm == "ph2":
        return run_ph2(model, Ph2Config.from_dict({**params, "target_r": r}))
    if algorithm == "irka":
        return irka(model, IrkaConfig.from_dict({**params, "r": r}))
    if algorithm == "tfirka":
        return tfirka(model, IrkaConfig.from_dict({**params, "r": r}))
    if algorithm == "quadvf":
        params.pop("tol_term", None)
        return quadvf(model, QuadVfConfig.from_dict({**params, "r": r}))
    raise ConfigError(f"Algoritmo '{algorithm}' no soportado. Válidos: {ALGORITHMS}")


def _run_one(model: TransferFunctionModel, algorithm: str, r: int,
             cfg: ExperimentConfig, output_dir: Path) -> ResultRow:
    private = model.clone()
    start = time.perf_counter()
    try:
        rom, record = run_algorithm(private, algorithm, r, cfg.algorithm_params.get(algorithm), cfg.tol_term)
    except Exception as e:
        logger.error(
            f"Fallo en la ejecución {algorithm} r={r}: {e}",
            extra={'algorithm': algorithm, 'r': r},
            exc_info=True
        )
        return ResultRow(algorithm, r, private.eval_counter, float("nan"), False,
                         time.perf_counter() - start, error=str(e))
    wall_time = time.perf_counter() - start
    fom_evals = private.eval_counter

    try:
        rel_error = h2_error(private, rom, cfg.h2_error_quad_points)
    except Exception as e:
        logger.warning(f"Error H2 no disponible para {algorithm} r={r}: {e}",
                       extra={'algorithm': algorithm, 'r': r})
        rel_error = float("nan")

    stem = f"{algorithm}_r{r}"
    write_frame(record.to_frame(), output_dir / f"history_{stem}.csv")
    write_rom(rom, output_dir / f"rom_{stem}.json")
    logger.info(
        f"{algorithm} r={r}: error H2 relativo {rel_error:.3e} con {fom_evals} evaluaciones",
        extra={'algorithm': algorithm, 'r': r, 'fom_evals': fom_evals, 'status': record.status}
    )
    return ResultRow(algorithm, r, fom_evals, float(rel_error), record.converged, wall_time)


def run_experiment(cfg: ExperimentConfig) -> List[ResultRow]:
    """
    Ejecuta todas las combinaciones (algoritmo, r) del experimento.

    Cada ejecución trabaja sobre un clon del modelo, de modo que fom_evals es
    exactamente el contador de ese clon. Los fallos de una ejecución se
    registran como filas con converged=False y el resto continúa.

    Returns:
        Filas del resumen en orden (algoritmo, r); también se escriben en
        output_dir/summary.csv.

    Raises:
        FileNotFoundError: Si el descriptor del modelo no existe.
        ConfigError: Si el descriptor es inválido.
    """
    model = cfg.load_model()
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(algorithm, r) for algorithm in cfg.algorithms for r in cfg.rom_dims]
    logger.info(
        f"Iniciando experimento con {len(jobs)} ejecuciones",
        extra={'model': model.name, 'algorithms': cfg.algorithms, 'rom_dims': cfg.rom_dims, 'workers': cfg.workers}
    )

    if cfg.workers == 1:
        rows = [_run_one(model, algorithm, r, cfg, output_dir) for algorithm, r in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_one, model, algorithm, r, cfg, output_dir) for algorithm, r in jobs]
            rows = [future.result() for future in futures]

    summary = pd.DataFrame([row.to_dict() for row in rows], columns=SUMMARY_COLUMNS)
    write_frame(summary, output_dir / "summary.csv")
    return rows


def bode_grid(spec: Optional[Dict[str, Any]] = None) -> np.ndarray:
    """Malla logarítmica {"fmin", "fmax", "points"} (por defecto 1e-1..1e3, 200 puntos)."""
    spec = spec or {}
    fmin = float(spec.get("fmin", 1e-1))
    fmax = float(spec.get("fmax", 1e3))
    points = int(spec.get("points", 200))
    if not (0 < fmin < fmax) or points < 2:
        raise ConfigError(f"Malla de frecuencias inválida: {spec}")
    return np.logspace(np.log10(fmin), np.log10(fmax), points)


def emit_bode(model: TransferFunctionModel, rom: RationalRom, freq_grid: Sequence[float],
              path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """
    Módulo de H(iω) y del error |H(iω) - H_r(iω)| en la malla dada.

    Las evaluaciones no cuentan en el presupuesto del modelo.

    Raises:
        ValueError: Si la malla no es positiva y creciente.
    """
    omega = np.asarray(freq_grid, dtype=float).reshape(-1)
    if omega.size == 0 or np.any(omega <= 0) or np.any(np.diff(omega) <= 0):
        raise ValueError("La malla de frecuencias debe ser positiva y estrictamente creciente")
    h = np.array([model.evaluate(1j * w, record=False) for w in omega])
    hr = np.asarray(rom.evaluate(1j * omega))
    frame = pd.DataFrame({"frequency": omega, "Hmag": np.abs(h), "errmag": np.abs(h - hr)}, columns=BODE_COLUMNS)
    if path is not None:
        write_frame(frame, path)
    return frame
