# -*- coding: utf-8 -*-
"""
Estudio de ablación: una fila de métricas por modo de recuperación
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

from src.models.config import RetrievalMode
from src.utils.exceptions import ConfigError
from src.utils.logger import setup_logger

logger = setup_logger()

ALL_MODES = (
    RetrievalMode.OFF,
    RetrievalMode.M0_INIT,
    RetrievalMode.MULTI_ATTN,
    RetrievalMode.COMBINED,
)


@dataclass
class AblationRow:
    mode: str
    metrics: Dict[str, float]


@dataclass
class AblationTable:
    task: str
    rows: List[AblationRow] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        cols: List[str] = []
        for row in self.rows:
            cols += [c for c in row.metrics if c not in cols]
        return cols

    def row(self, mode: str) -> AblationRow:
        for r in self.rows:
            if r.mode == mode:
                return r
        raise KeyError(mode)

    def to_json(self) -> str:
        return json.dumps(
            {"task": self.task, "rows": [{"mode": r.mode, **r.metrics} for r in self.rows]},
            sort_keys=True,
        )

    def to_text(self) -> str:
        cols = self.columns
        width = max([len("mode")] + [len(r.mode) for r in self.rows])
        lines = ["  ".join([f"{'mode':<{width}}"] + [f"{c:>10}" for c in cols])]
        for r in self.rows:
            cells = [f"{r.metrics[c]:>10.4f}" if c in r.metrics else f"{'-':>10}" for c in cols]
            lines.append("  ".join([f"{r.mode:<{width}}"] + cells))
        return "\n".join(lines) + "\n"


def run_ablation(
    task: str,
    evaluate_mode: Callable[[RetrievalMode], Dict[str, float]],
    store_available: bool,
    modes: Sequence[RetrievalMode] = ALL_MODES,
) -> AblationTable:
    """
    Entrena y evalúa cada modo con ``evaluate_mode``; los modos con
    recuperación exigen un índice construido.
    """
    modes = [RetrievalMode(m) for m in modes]
    missing = [m.value for m in modes if m.needs_store and not store_available]
    if missing:
        raise ConfigError(f"modes {missing} need an example store; run build-index first")

    table = AblationTable(task=task)
    for mode in modes:
        logger.info(f"Ablation: running mode {mode.value}")
        table.rows.append(AblationRow(mode=mode.value, metrics=dict(evaluate_mode(mode))))
    return table
