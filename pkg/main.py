# -*- coding: utf-8 -*-
import argparse
import json
import sys
from typing import List, Optional

from config.schema import load_run_config
from src.services.retrieval_pipeline import RetrievalPipeline, run_command
from src.utils.exceptions import RetrievalAugmentationError
from src.utils.logger import setup_logger

# Configurar logging
logger = setup_logger()

MODES = ["off", "m0_init", "multi_attn", "combined"]
SPLITS = ["train", "val", "test"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="LSTM con recuperación de vecinos: captioning y sentimiento"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str, out: bool = False, split: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Ruta al JSON de configuración de la corrida")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="Override de un campo, p. ej. train.lr=0.001 (repetible)",
        )
        p.add_argument("--mode", choices=MODES, help="Modo de recuperación (override de model.retrieval_mode)")
        p.add_argument("--seed", type=int, help="Semilla (override de train.seed y model.seed)")
        if split:
            p.add_argument("--split", choices=SPLITS, default="test", help="Split a procesar")
        if out:
            p.add_argument("--out", required=name != "synth", help="Archivo o directorio de salida")
        return p

    command("build-index", "Construye el índice de ejemplos del split de train")
    command("train", "Entrena el modelo del modo configurado")
    command("evaluate", "Evalúa el mejor checkpoint", split=True)
    command("generate", "Captions voraces, una línea JSON por imagen", out=True, split=True)
    attend = command("attend", "Vuelca los pesos de atención por ejemplo", out=True, split=True)
    attend.add_argument("--limit", type=int, help="Máximo de ejemplos a volcar")
    command("ablate", "Entrena y evalúa los cuatro modos de recuperación", split=True)
    command("neighbors", "Vecino recuperado por ejemplo, para auditar la recuperación", out=True, split=True)
    command("synth", "Genera el benchmark sintético", out=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Función principal"""
    args = build_parser().parse_args(argv)

    try:
        config = load_run_config(args.config, args.overrides, mode=args.mode, seed=args.seed)
        pipeline = RetrievalPipeline(config)
        result = run_command(
            pipeline,
            args.command,
            mode=args.mode,
            split=getattr(args, "split", "test"),
            out=getattr(args, "out", None),
            limit=getattr(args, "limit", None),
        )
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130
    except (RetrievalAugmentationError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return 1

    if isinstance(result, dict):
        print(json.dumps(result, indent=2, sort_keys=True))
    elif args.command == "ablate":
        print(result.to_text(), end="")
    elif args.command == "train":
        print(f"best {result.best_metric:.6f} -> {result.best_checkpoint}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
