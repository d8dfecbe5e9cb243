"""Checkpoint files: JSON header + flat little-endian float64 parameter block.

Layout:
    8 bytes   magic b"RNAGVP01"
    8 bytes   header length L (little-endian uint64)
    L bytes   UTF-8 JSON header (sorted keys)
    rest      float64 LE: parameters in manifest order, then Adam first
              moments, then Adam second moments when "has_optimizer" is set
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.errors import InputValidationError
from core.model import RnaDesignModel, parameter_manifest
from runner.optim import Adam, AdamState, PlateauScheduler
from runner.schema import ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"RNAGVP01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: RnaDesignModel
    header: Dict[str, Any]
    adam_state: Optional[AdamState] = None
    scheduler: Optional[PlateauScheduler] = None

    @property
    def epoch(self) -> int:
        return int(self.header.get("epoch", 0))


def save_checkpoint(
    path: Union[str, Path],
    model: RnaDesignModel,
    epoch: int = 0,
    optimizer: Optional[Adam] = None,
    scheduler: Optional[PlateauScheduler] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write model parameters (and optionally optimizer/scheduler state)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    header: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.model_dump(),
        "seed": model.seed,
        "epoch": epoch,
        "manifest": [[name, list(shape)] for name, shape in parameter_manifest(model)],
        "num_parameters": model.num_parameters(),
        "has_optimizer": optimizer is not None,
        "adam_step": optimizer.state.step if optimizer is not None else 0,
        "scheduler": scheduler.state_dict() if scheduler is not None else None,
        "extra": extra or {},
    }
    blocks = [p.data.reshape(-1) for p in params]
    if optimizer is not None:
        blocks += [m.reshape(-1) for m in optimizer.state.m]
        blocks += [v.reshape(-1) for v in optimizer.state.v]
    payload = np.concatenate(blocks).astype("<f8").tobytes() if blocks else b""
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
    logger.debug(f"Saved checkpoint {path} (epoch {epoch})")
    return path


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "rb") as f:
        return _read_header(f, path)


def _read_header(f, path) -> Dict[str, Any]:
    if f.read(len(MAGIC)) != MAGIC:
        raise InputValidationError(f"{path} is not a model checkpoint")
    (length,) = struct.unpack("<Q", f.read(8))
    return json.loads(f.read(length).decode("utf-8"))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Rebuild the model (and optimizer/scheduler state) from a checkpoint file.

    Raises:
        InputValidationError: On a missing file, bad magic, or a parameter
            manifest that does not match the rebuilt model
    """
    path = Path(path)
    if not path.is_file():
        raise InputValidationError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        header = _read_header(f, path)
        values = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)

    model = RnaDesignModel(ModelConfig(**header["model_config"]), seed=header["seed"])
    manifest = [[name, list(shape)] for name, shape in parameter_manifest(model)]
    if manifest != header["manifest"]:
        raise InputValidationError(f"{path}: parameter manifest does not match the model configuration")

    params = model.parameters()
    total = int(np.sum([p.size for p in params]))
    expected = total * (3 if header["has_optimizer"] else 1)
    if values.size != expected:
        raise InputValidationError(f"{path}: expected {expected} values, found {values.size}")

    offset = 0
    for p in params:
        p.data[...] = values[offset:offset + p.size].reshape(p.shape)
        offset += p.size

    adam_state = None
    if header["has_optimizer"]:
        m, v = [], []
        for p in params:
            m.append(values[offset:offset + p.size].reshape(p.shape).copy())
            offset += p.size
        for p in params:
            v.append(values[offset:offset + p.size].reshape(p.shape).copy())
            offset += p.size
        adam_state = AdamState(m=m, v=v, step=header["adam_step"])

    scheduler = PlateauScheduler.from_state_dict(header["scheduler"]) if header.get("scheduler") else None
    return Checkpoint(model=model, header=header, adam_state=adam_state, scheduler=scheduler)
