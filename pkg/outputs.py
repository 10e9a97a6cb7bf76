"""CSV/JSON writers and the per-run manifest.

Output files never carry timestamps; those live in manifest.json only, so a rerun
with the manifest's seed and config reproduces every other file byte for byte.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

import settings

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return None if np.isnan(value) else float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if is_dataclass(value):
        return asdict(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _clean_nan(value):
    if isinstance(value, float) and np.isnan(value):
        return None
    if isinstance(value, dict):
        return {key: _clean_nan(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean_nan(item) for item in value]
    return value


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean_nan(payload), f, ensure_ascii=False, indent=2, default=_jsonable)
        f.write("\n")
    logger.info("Wrote %s", path)
    return path


def write_csv(path, rows, columns: Optional[Sequence[str]] = None) -> Path:
    """Write a table with one header row; rows may be dicts or a DataFrame."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    frame = frame.map(lambda v: v.value if isinstance(v, Enum) else v)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def config_hash(config: Mapping) -> str:
    canonical = json.dumps(_clean_nan(dict(config)), sort_keys=True, default=_jsonable)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    subcommand: str
    seed: int
    config: Dict
    out_dir: Path
    version: str = settings.VERSION
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    outputs: List[str] = field(default_factory=list)

    def record(self, path: Path) -> Path:
        name = str(Path(path).relative_to(self.out_dir)) if Path(path).is_relative_to(self.out_dir) else str(path)
        self.outputs.append(name)
        return path

    def csv(self, name: str, rows, columns: Optional[Sequence[str]] = None) -> Path:
        return self.record(write_csv(self.out_dir / name, rows, columns))

    def json(self, name: str, payload) -> Path:
        return self.record(write_json(self.out_dir / name, payload))

    def write(self) -> Path:
        self.finished = _now()
        payload = {
            "version": self.version,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": config_hash(self.config),
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
        }
        return write_json(self.out_dir / MANIFEST_NAME, payload)


def read_manifest(out_dir) -> Dict:
    with open(Path(out_dir) / MANIFEST_NAME, "r", encoding="utf-8") as f:
        return json.load(f)
