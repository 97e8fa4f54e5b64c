"""On-disk formats: JSON checkpoints, TOML configs, and the run record tying artifacts together."""

import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomlkit

from . import __version__
from .errors import ContractError
from .flow import VelocityModel
from .utils import read_json, sha256_file, write_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CHECKPOINT_FORMAT = "flowmanifold-checkpoint"
RUN_RECORD_FORMAT = "flowmanifold-run"
OUTPUT_ROOT_ENV = "FLOWMANIFOLD_OUTPUT_ROOT"


def output_path(path):
    """Resolve a relative output path against ``$FLOWMANIFOLD_OUTPUT_ROOT`` when it is set."""
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def save_checkpoint(path, model):
    payload = {"format": CHECKPOINT_FORMAT, "tool_version": __version__, "model": model.to_dict()}
    write_json(path, payload)
    return sha256_file(path)


def load_checkpoint(path):
    payload = read_json(path)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not a checkpoint file")
    return VelocityModel.from_dict(payload["model"])


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ContractError(f"{path}: {exc}") from exc


def _drop_none(obj):
    # TOML has no null
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_drop_none(v) for v in obj]
    return obj


def dump_toml(obj):
    return tomlkit.dumps(_drop_none(obj))


@dataclass
class RunRecord:
    command: str
    config_toml: str
    config_hash: str
    seeds: dict
    checkpoint: str = None
    checkpoint_sha256: str = None
    loss_csv: str = None
    artifacts: dict = field(default_factory=dict)
    metrics: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tool_version: str = __version__

    def check(self, base):
        """Every referenced file exists and the checkpoint hash matches its bytes."""
        base = Path(base)
        paths = [p for p in (self.checkpoint, self.loss_csv) if p] + list(self.artifacts.values())
        for p in paths:
            if not (base / p).is_file():
                raise ContractError(f"run record references missing file {p}")
        if self.checkpoint and sha256_file(base / self.checkpoint) != self.checkpoint_sha256:
            raise ContractError("checkpoint hash mismatch")

    def write(self, path):
        path = Path(path)
        self.check(path.parent)
        write_json(path, {"format": RUN_RECORD_FORMAT, **asdict(self)})

    @classmethod
    def read(cls, path):
        d = read_json(path)
        if d.pop("format", None) != RUN_RECORD_FORMAT:
            raise ContractError(f"{path}: not a run record")
        return cls(**d)
