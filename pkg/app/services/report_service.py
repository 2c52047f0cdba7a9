"""CSV / JSON emission with full float precision and a provenance sidecar."""

import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, List, Optional, Sequence, Type

from pydantic import BaseModel

from app import __version__
from app.api.schemas import ExperimentConfig, Provenance
from app.config import get_settings

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def format_float(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = format(value, ".17g")
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def to_json_text(value: Any) -> str:
    """Compact JSON with 17 significant digits for every float"""
    if isinstance(value, BaseModel):
        return to_json_text(value.model_dump())
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{to_json_text(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(to_json_text(v) for v in value) + "]"
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (bool, list, tuple, dict)):
        return to_json_text(value)
    return str(value)


def render(records: Sequence[BaseModel], format: str = "csv", model: Optional[Type[BaseModel]] = None) -> str:
    """Records as CSV (header from the model fields) or a JSON array"""
    if format not in FORMATS:
        raise ValueError(f"Unknown output format '{format}'")
    kinds = {type(r) for r in records}
    if len(kinds) > 1:
        raise ValueError(f"Records must be homogeneous, got {sorted(k.__name__ for k in kinds)}")
    model = model or (next(iter(kinds)) if kinds else None)

    if format == "json":
        return "[" + ",\n".join(to_json_text(r) for r in records) + "]\n"

    if model is None:
        raise ValueError("Empty CSV output needs a record model for its header")
    columns = list(model.model_fields)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for record in records:
        row = record.model_dump()
        writer.writerow({column: _csv_cell(row[column]) for column in columns})
    return buffer.getvalue()


def resolve_output(path: str) -> Path:
    """Bare file names land in OUTPUT_DIR"""
    target = Path(path)
    if not target.is_absolute() and target.parent == Path("."):
        target = Path(get_settings().OUTPUT_DIR) / target
    return target


def emit(
    records: Sequence[BaseModel],
    format: str = "csv",
    path: Optional[str] = None,
    model: Optional[Type[BaseModel]] = None,
) -> str:
    """Write records to ``path`` (or return the text when no path is given)"""
    text = render(records, format, model)
    if path is not None:
        target = resolve_output(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        logger.info(f"Wrote {len(records)} records to {target}")
    return text


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical config JSON; output location and worker count excluded"""
    canonical = json.dumps(config.model_dump(exclude={"output", "workers"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def provenance(config: ExperimentConfig) -> Provenance:
    return Provenance(
        config_hash=config_hash(config),
        seed=config.seed,
        version=__version__,
        subcommand=config.subcommand,
    )


def write_provenance(config: ExperimentConfig, path: str) -> Path:
    target = resolve_output(path)
    sidecar = target.with_name(target.name + ".provenance.json")
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    sidecar.write_text(to_json_text(provenance(config)) + "\n")
    return sidecar


def load_records(text: str, model: Type[BaseModel]) -> List[BaseModel]:
    """Parse a JSON array produced by ``render``"""
    return [model.model_validate(item) for item in json.loads(text)]
