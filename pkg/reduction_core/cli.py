# Interfaz de línea de comandos
"""
Comando h2mor.

    h2mor run  --config exp.json [--model PATH --algo NAME --r N --out DIR]
    h2mor bode --config exp.json --rom ROM.json [--out CSV]

Códigos de salida: 0 éxito, 1 todas las ejecuciones fallaron, 2 error de
configuración o de E/S.
"""
from pathlib import Path
from typing import List, Optional
import argparse
import logging
import os
import sys

from reduction_core.exceptions import ConfigError, MatrixMarketError
from reduction_core.harness import ALGORITHMS, ExperimentConfig, bode_grid, emit_bode, read_rom, run_experiment

# Configurar logger para este módulo
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ALGORITHM_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def configure_logging(level: Optional[str] = None) -> None:
    level_name = (level or os.getenv("H2MOR_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2mor", description="Reducción de orden de modelos en la norma H2")
    parser.add_argument("--log-level", default=None, help="Nivel de logging (por defecto H2MOR_LOG_LEVEL o INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Ejecuta un experimento")
    run.add_argument("--config", required=True, help="Archivo JSON del experimento")
    run.add_argument("--model", default=None, help="Descriptor de modelo (sobrescribe 'model')")
    run.add_argument("--algo", choices=ALGORITHMS, default=None, help="Algoritmo (sobrescribe 'algorithm')")
    run.add_argument("--r", type=int, default=None, help="Dimensión del ROM (sobrescribe 'rom_dims')")
    run.add_argument("--out", default=None, help="Directorio de salida")

    bode = sub.add_parser("bode", help="Tabla de Bode de un ROM frente al modelo")
    bode.add_argument("--config", required=True, help="Archivo JSON del experimento")
    bode.add_argument("--rom", required=True, help="ROM serializado en JSON")
    bode.add_argument("--out", default=None, help="CSV de salida (por defecto bode.csv en output_dir)")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config).with_overrides(
        model=args.model, algorithm=args.algo, r=args.r, output_dir=args.out
    )
    rows = run_experiment(cfg)
    failed = [row for row in rows if row.error is not None]
    for row in rows:
        print(f"{row.algorithm:8s} r={row.r:<4d} evals={row.fom_evals:<6d} "
              f"error={row.rel_h2_error:.3e} convergido={row.converged}")
    if rows and len(failed) == len(rows):
        logger.error("Todas las ejecuciones fallaron")
        return EXIT_ALGORITHM_FAILURE
    return EXIT_OK


def _cmd_bode(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    model = cfg.load_model()
    rom = read_rom(args.rom)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "bode.csv"
    emit_bode(model, rom, bode_grid(cfg.bode), out)
    print(f"Tabla de Bode escrita en {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_bode(args)
    except (FileNotFoundError, ConfigError, MatrixMarketError, OSError) as e:
        logger.error(f"Error de configuración o E/S: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
