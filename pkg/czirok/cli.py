"""Línea de comandos:

    czirok <experimento> --config archivo.json [--seed S] [--out RUTA] [--threads T] [--format csv|json|xlsx]
    czirok figure <fig1..fig9> [--seed S] [--out RUTA] [--threads T] [--format ...]
"""

import argparse
import logging
import os

from .config import EXPERIMENTS, FIGURES, load_config, parse_config
from .errors import ConfigError, CzirokError
from .harness import FORMATS, figure_config, run_config, sweep_medians, emit

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="czirok",
        description="Simulación y estabilidad del modelo de Czirók en el toro 1D.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="tipo de experimento")
    parser.add_argument("figure_id", nargs="?", choices=FIGURES, help="preset (solo con 'figure')")
    parser.add_argument("--config", "-c", default=None, help="archivo JSON de configuración")
    parser.add_argument("--seed", type=int, default=None, help="semilla maestra (sobrescribe model.seed)")
    parser.add_argument("--out", "-o", default=None, help="ruta de salida (por defecto results/<experimento>.<formato>)")
    parser.add_argument("--threads", "-j", type=int, default=1, help="hilos para los barridos (por defecto: 1)")
    parser.add_argument("--format", "-f", choices=FORMATS, default="csv", help="formato de salida")
    parser.add_argument("--verbose", "-v", action="store_true", help="mensajes de progreso del paquete")
    parser.add_argument("--quiet", "-q", action="store_true", help="sin barra de progreso")
    return parser


def _load(args):
    if args.experiment == "figure":
        if args.figure_id is None:
            raise ConfigError("figure", "falta el identificador del preset (fig1..fig9)")
        return figure_config(args.figure_id)
    if args.figure_id is not None:
        raise ConfigError("figure", "el identificador de preset solo se admite con 'figure'")
    if args.config is None:
        return parse_config({}, kind=args.experiment)
    return load_config(args.config, kind=args.experiment)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        config = _load(args).with_overrides(seed=args.seed, out=args.out)
        if args.threads < 1:
            raise ConfigError("--threads", "debe ser >= 1")
    except ConfigError as exc:
        print(f"❌ Configuración inválida: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        print(f"❌ {exc}")
        return EXIT_IO

    name = config.figure or config.kind
    out = config.out or os.path.join("results", f"{name}.{args.format}")
    try:
        table = run_config(config, threads=args.threads, progress=not args.quiet)
    except CzirokError as exc:
        print(f"❌ {name} falló: {exc}")
        return EXIT_NUMERIC

    try:
        emit(table, args.format, out)
    except OSError as exc:
        print(f"❌ {exc}")
        return EXIT_IO

    if config.kind in ("sweep", "transitions") or name in ("fig7", "fig8", "fig9"):
        print(sweep_medians(table).to_string(index=False))
    if table.failed_rows:
        print(f"⚠️ {name}: {table.failed_rows} de {len(table)} filas con error numérico, guardado en {out}")
        return EXIT_NUMERIC
    print(f"✅ {name}: {len(table)} filas guardadas en {out}")
    return EXIT_OK
