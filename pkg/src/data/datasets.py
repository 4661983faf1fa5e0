# -*- coding: utf-8 -*-
"""
Datasets en JSON Lines: un registro por línea, validado con pydantic.

Caption:   {"id", "split", "feature_path", "captions": [str | [tokens]]}
Sentiment: {"id", "split", "text", "label": 0 | 1}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.utils.atomic import atomic_write_text
from src.utils.exceptions import DatasetError
from src.utils.logger import setup_logger

logger = setup_logger()

SPLITS = ("train", "val", "test")
Split = Literal["train", "val", "test"]


def tokenize(text: str) -> List[str]:
    """Tokens separados por espacios, en minúsculas"""
    return text.lower().split()


class CaptionRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: int = Field(ge=0)
    split: Split
    feature_path: str
    captions: List[List[str]] = Field(min_length=1)

    @field_validator("captions", mode="before")
    @classmethod
    def _tokenize_captions(cls, value):
        if not isinstance(value, list):
            return value
        return [tokenize(c) if isinstance(c, str) else c for c in value]

    @field_validator("captions")
    @classmethod
    def _non_empty(cls, value: List[List[str]]) -> List[List[str]]:
        for i, caption in enumerate(value):
            if not caption:
                raise ValueError(f"caption {i} is empty")
        return value

    @property
    def tokens(self) -> List[str]:
        return self.captions[0]


class SentimentRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: int = Field(ge=0)
    split: Split
    text: str
    label: Literal[0, 1]

    @field_validator("text")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.split():
            raise ValueError("text is empty")
        return value

    @property
    def tokens(self) -> List[str]:
        return tokenize(self.text)


Record = Union[CaptionRecord, SentimentRecord]
_RECORD_TYPES = {"caption": CaptionRecord, "sentiment": SentimentRecord}


@dataclass
class Dataset:
    task: str
    path: Path
    records: List[Record] = field(default_factory=list)

    def split(self, name: str) -> List[Record]:
        return [r for r in self.records if r.split == name]

    def require_split(self, name: str) -> List[Record]:
        records = self.split(name)
        if not records:
            raise DatasetError(f"split {name!r} of {self.path} is empty")
        return records

    def counts(self) -> Dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(x) for x in err["loc"])
    return f"{loc}: {err['msg']}" if loc else err["msg"]


def load_dataset(path: Union[str, Path], task: str) -> Dataset:
    """Lee y valida el archivo; cualquier registro inválido produce un error con número de línea"""
    path = Path(path)
    if task not in _RECORD_TYPES:
        raise DatasetError(f"unknown task {task!r}")
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    record_type = _RECORD_TYPES[task]
    dataset = Dataset(task=task, path=path)
    seen: Dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = record_type.model_validate(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{line_no}: invalid JSON ({e.msg})") from e
            except ValidationError as e:
                raise DatasetError(f"{path}:{line_no}: {_first_error(e)}") from e
            if record.id in seen:
                raise DatasetError(
                    f"{path}:{line_no}: duplicate id {record.id} (first seen on line {seen[record.id]})"
                )
            seen[record.id] = line_no
            dataset.records.append(record)
    logger.info(f"Loaded {task} dataset from {path}: {dataset.counts()}")
    return dataset


def _record_line(record: Record) -> str:
    data = record.model_dump()
    if isinstance(record, CaptionRecord):
        data["captions"] = [" ".join(c) for c in record.captions]
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


def write_dataset(path: Union[str, Path], records: Iterable[Record]) -> Path:
    lines = [_record_line(r) for r in records]
    return atomic_write_text(path, "".join(line + "\n" for line in lines))


def select_caption(captions: Sequence[Sequence[str]], policy: str = "first") -> List[str]:
    """Caption de referencia usado como target recuperable"""
    if policy == "first":
        return list(captions[0])
    if policy == "longest":
        # empate: el primero en aparecer
        return list(max(captions, key=len))
    raise DatasetError(f"unknown target selection policy {policy!r}")
