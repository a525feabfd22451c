"""Dataset CSV files, model-config JSON and atomic writes.

Dataset CSV: header ``id,y1,y2,m2``; ``y2`` is the empty field when missing;
floats use 17 significant digits so values round-trip exactly. Files are
UTF-8 with LF line endings.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    MECHANISM_VARIANTS,
    Dataset,
    FlatModel,
    HierarchicalModel,
    ThetaParams,
    mechanism_to_dict,
    validate_dataset,
)
from .likelihood import LikelihoodKind

CSV_HEADER = ("id", "y1", "y2", "m2")
LATENT_HEADER = ("id", "y1", "y2_latent", "m2")
STRUCTURES = ("hierarchical", "flat")


class ConfigError(ValueError):
    """An input file could not be parsed; the message names the offending field or line."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Atomic writes


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, allow_nan=True) + "\n")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True)
class DatasetFile:
    """A dataset with the record ids it was stored under."""

    ids: tuple
    dataset: Dataset


def dataset_csv(d: Dataset, ids=None) -> str:
    ids = range(len(d)) if ids is None else ids
    rows = ((i, fmt(a), "" if m else fmt(b), int(m)) for i, a, b, m in zip(ids, d.y1, d.y2, d.m2))
    return csv_text(CSV_HEADER, rows)


def write_dataset(path, d: Dataset, ids=None) -> None:
    write_atomic(path, dataset_csv(d, ids))


def write_latent(path, d: Dataset, latent_y2, ids=None) -> None:
    """Every record with its true ``y2``, observed or not."""
    ids = range(len(d)) if ids is None else ids
    rows = ((i, fmt(a), fmt(b), int(m)) for i, a, b, m in zip(ids, d.y1, latent_y2, d.m2))
    write_atomic(path, csv_text(LATENT_HEADER, rows))


def _number(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}: not finite: {text!r}")
    return v


def parse_dataset(text: str, cause_count: Optional[int] = None, source: str = "<data>") -> DatasetFile:
    """Parse dataset CSV text; ``cause_count`` defaults to the largest code present (at least 1)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{source}:1: header must be {','.join(CSV_HEADER)}")
    ids, y1, y2, m2 = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{source}:{lineno}"
        if len(row) != 4:
            raise ConfigError(f"{where}: expected 4 fields, got {len(row)}")
        rid, a, b, m = row
        try:
            code = int(m)
        except ValueError:
            raise ConfigError(f"{where}: field m2 is not an integer: {m!r}") from None
        ids.append(rid)
        y1.append(_number(a, f"{where}: field y1"))
        y2.append(math.nan if b == "" else _number(b, f"{where}: field y2"))
        m2.append(code)
    if not ids:
        raise ConfigError(f"{source}: no records")
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{source}: duplicate record ids")
    if cause_count is None:
        cause_count = max(1, max(m2))
    d = Dataset(np.array(y1), np.array(y2), np.array(m2, dtype=np.int64), cause_count)
    report = validate_dataset(d)
    if not report.valid:
        first = report.violations[0]
        raise ConfigError(f"{source}: {first}" + (f" (and {len(report.violations) - 1} more)"
                                                   if len(report.violations) > 1 else ""))
    return DatasetFile(tuple(ids), d)


def read_dataset(path, cause_count: Optional[int] = None) -> DatasetFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read: {exc}") from None
    return parse_dataset(text, cause_count, str(path))


# ---------------------------------------------------------------------------
# Model config


@dataclass(frozen=True)
class ModelConfig:
    """Parsed model-config document.

    ``theta`` is optional: ``simulate`` needs one, ``fit`` uses it together
    with the cause parameters as its starting point.
    """

    model: object
    theta: Optional[ThetaParams] = None
    likelihood: Optional[LikelihoodKind] = None

    @property
    def structure(self) -> str:
        return "flat" if isinstance(self.model, FlatModel) else "hierarchical"

    def to_dict(self) -> dict:
        out = {}
        if self.theta is not None:
            out["theta"] = self.theta.to_dict()
        out["structure"] = self.structure
        out["causes"] = model_causes_json(self.model)
        if self.likelihood is not None:
            out["likelihood"] = self.likelihood.value.replace("_", "-")
        return out


def model_causes_json(model) -> list:
    return [{"code": c, "priority": c, **mechanism_to_dict(m)} for c, m in enumerate(model.causes, start=1)]


def _require(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}.{key}: missing")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__ if isinstance(kind, type) else 'number'}")
    return v


def parse_theta(block, where: str = "theta") -> ThetaParams:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    vals = {}
    for name in ThetaParams.NAMES:
        v = _require(block, name, where)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}.{name}: expected a number, got {v!r}")
        vals[name] = float(v)
    try:
        return ThetaParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_likelihood(value, where: str = "likelihood") -> LikelihoodKind:
    try:
        return LikelihoodKind(str(value).replace("-", "_"))
    except ValueError:
        raise ConfigError(f"{where}: expected full, semi-direct or direct, got {value!r}") from None


def _parse_cause(entry, where: str):
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: expected an object")
    variant = _require(entry, "variant", where)
    if variant not in MECHANISM_VARIANTS:
        raise ConfigError(f"{where}.variant: unknown variant {variant!r}; "
                          f"expected one of {', '.join(MECHANISM_VARIANTS)}")
    cls = MECHANISM_VARIANTS[variant]
    params = _require(entry, "params", where, dict)
    vals = []
    for f in cls.param_fields:
        v = _require(params, f, f"{where}.params")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{where}.params.{f}: expected a finite number, got {v!r}")
        vals.append(float(v))
    extra = sorted(set(params) - set(cls.param_fields))
    if extra:
        raise ConfigError(f"{where}.params.{extra[0]}: not a parameter of {variant}")
    try:
        return cls(*vals)
    except ValueError as exc:
        raise ConfigError(f"{where}.params: {exc}") from None


def parse_model_config(doc, require_theta: bool = False) -> ModelConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    structure = doc.get("structure", "hierarchical")
    if structure not in STRUCTURES:
        raise ConfigError(f"structure: expected hierarchical or flat, got {structure!r}")
    causes = _require(doc, "causes", "top level", list)
    if not causes:
        raise ConfigError("causes: at least one cause is required")
    mechs = []
    for k, entry in enumerate(causes):
        where = f"causes[{k}]"
        code = _require(entry, "code", where)
        if isinstance(code, bool) or not isinstance(code, int) or code != k + 1:
            raise ConfigError(f"{where}.code: causes must be listed with codes 1..C in order, got {code!r}")
        priority = entry.get("priority", code)
        if isinstance(priority, bool) or not isinstance(priority, int) or priority != code:
            raise ConfigError(f"{where}.priority: must equal the cause code ({code}), got {priority!r}")
        mechs.append(_parse_cause(entry, where))
    model = (FlatModel if structure == "flat" else HierarchicalModel)(tuple(mechs))
    theta = None
    if "theta" in doc:
        theta = parse_theta(doc["theta"])
    elif require_theta:
        raise ConfigError("theta: missing")
    likelihood = parse_likelihood(doc["likelihood"]) if "likelihood" in doc else None
    return ModelConfig(model, theta, likelihood)


def load_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None


def read_model_config(path, require_theta: bool = False) -> ModelConfig:
    try:
        return parse_model_config(load_json(path), require_theta)
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None


def read_theta(path) -> ThetaParams:
    """Theta from a file holding either a bare theta object or a ``theta`` block."""
    doc = load_json(path)
    try:
        if isinstance(doc, dict) and "theta" in doc:
            return parse_theta(doc["theta"])
        return parse_theta(doc, "top level")
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
