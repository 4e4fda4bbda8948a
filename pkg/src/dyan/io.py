"""File formats: sequence files, model files, training configs and pole CSVs.

Sequence file layout::

    DYANSEQ1 H=<int> W=<int> T=<int> count=<int> channel=<label>\\n
    <count * T * H * W little-endian float32, row-major frames>

Model files are JSON; floats are written with ``repr`` so they read back
bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .atoms import PoleSet
from .training import TrainConfig

__all__ = [
    "FormatError",
    "SEQ_MAGIC",
    "SequenceFile",
    "read_sequences",
    "write_sequences",
    "ModelFile",
    "save_model",
    "load_model",
    "read_config",
    "write_pole_csv",
    "pole_rows",
    "save_snapshots",
    "load_snapshots",
    "convert_pgm_dir",
    "POLE_CSV_HEADER",
    "LOG_CSV_HEADER",
    "EVAL_CSV_HEADER",
]

SEQ_MAGIC = "DYANSEQ1"
MODEL_FORMAT = "dyan-model"
MODEL_VERSION = 1
POLE_CSV_HEADER = ["epoch", "pole_index", "rho", "psi", "re", "im"]
LOG_CSV_HEADER = ["epoch", "loss", "sparsity", "wall_time"]
EVAL_CSV_HEADER = ["frame", "mse", "psnr", "ssim"]
_MAX_HEADER = 4096


class FormatError(ValueError):
    pass


@dataclass
class SequenceFile:
    """``count`` sequences of ``T`` frames, each ``H x W``."""

    data: np.ndarray  # count x T x H x W, float32
    channel_id: str = "intensity"

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def H(self) -> int:
        return self.data.shape[2]

    @property
    def W(self) -> int:
        return self.data.shape[3]


def write_sequences(path, data, channel_id: str = "intensity") -> None:
    data = np.asarray(data)
    if data.ndim == 3:
        data = data[None]
    if data.ndim != 4:
        raise FormatError(f"expected count x T x H x W data, got shape {data.shape}")
    if any(ch.isspace() for ch in channel_id) or not channel_id:
        raise FormatError("channel id must be a non-empty token without spaces")
    count, T, H, W = data.shape
    header = f"{SEQ_MAGIC} H={H} W={W} T={T} count={count} channel={channel_id}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_sequences(path) -> SequenceFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n", 0, _MAX_HEADER)
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        parts = blob[:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: header is not ASCII")
    if not parts or parts[0] != SEQ_MAGIC:
        raise FormatError(f"{path}: bad magic (expected {SEQ_MAGIC})")
    meta = {}
    for tok in parts[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header token {tok!r}")
        meta[key] = val
    try:
        H, W, T = int(meta["H"]), int(meta["W"]), int(meta["T"])
        count = int(meta.get("count", 1))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete header ({exc})")
    if min(H, W, T) < 1 or count < 0:
        raise FormatError(f"{path}: invalid dimensions in header")
    payload = blob[nl + 1:]
    expected = 4 * H * W * T * count
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(count, T, H, W)
    if not np.isfinite(arr).all():
        raise FormatError(f"{path}: payload contains non-finite values")
    return SequenceFile(arr.astype(np.float32), meta.get("channel", "intensity"))


@dataclass
class ModelFile:
    T: int
    lam: float
    poles: PoleSet
    trainable_lambda: bool = False
    epochs: int = 0
    final_loss: Optional[float] = None
    format_version: int = MODEL_VERSION

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        same_loss = (self.final_loss == other.final_loss) or (
            self.final_loss is not None and other.final_loss is not None
            and math.isnan(self.final_loss) and math.isnan(other.final_loss)
        )
        return (
            self.T == other.T and self.lam == other.lam and self.poles == other.poles
            and self.trainable_lambda == other.trainable_lambda and self.epochs == other.epochs
            and same_loss and self.format_version == other.format_version
        )

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "format_version": self.format_version,
            "T": self.T,
            "lambda": self.lam,
            "trainable_lambda": self.trainable_lambda,
            "include_constant": self.poles.include_constant,
            "poles": [[r, p] for r, p in zip(self.poles.rho.tolist(), self.poles.psi.tolist())],
            "training": {"epochs": self.epochs, "final_loss": self.final_loss},
        }


def save_model(path, model: ModelFile) -> int:
    """Write ``model``; returns the file size in bytes."""
    text = json.dumps(model.to_json(), separators=(",", ":"), allow_nan=False)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)
    return len(text)


def load_model(path) -> ModelFile:
    try:
        with open(path, "r", encoding="ascii") as fh:
            obj = json.load(fh)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a model file ({exc})")
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a model file")
    if obj.get("format_version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported format version {obj.get('format_version')}")
    try:
        poles = np.array(obj["poles"], dtype=np.float64).reshape(-1, 2)
        ps = PoleSet(poles[:, 0], poles[:, 1], bool(obj.get("include_constant", True)))
        tr = obj.get("training", {})
        return ModelFile(
            T=int(obj["T"]),
            lam=float(obj["lambda"]),
            poles=ps,
            trainable_lambda=bool(obj.get("trainable_lambda", False)),
            epochs=int(tr.get("epochs", 0)),
            final_loss=None if tr.get("final_loss") is None else float(tr["final_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model ({exc})")


# config keys that map onto TrainConfig under a different name
_CONFIG_ALIASES = {"lambda": "lam"}
# keys that describe the initial pole ring rather than the optimizer
RING_KEYS = ("num_poles", "rho_min", "rho_max", "grid")


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"not a boolean: {v!r}")


def read_config(path) -> Tuple[TrainConfig, dict]:
    """Parse a flat ``key=value`` file.  Returns the config and the ring settings."""
    cfg = TrainConfig()
    types = {f.name: f.type for f in fields(TrainConfig)}
    ring = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, val = key.strip(), val.strip()
            if key in RING_KEYS:
                ring[key] = val
                continue
            name = _CONFIG_ALIASES.get(key, key)
            if name not in types:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(cfg, name)
            try:
                if isinstance(current, bool):
                    parsed = _parse_bool(val)
                elif isinstance(current, int):
                    parsed = int(val)
                elif isinstance(current, float):
                    parsed = float(val)
                else:
                    parsed = val
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad value for {key}: {val!r}")
            setattr(cfg, name, parsed)
    if cfg.loss_mode not in ("predict", "full"):
        raise FormatError(f"{path}: loss_mode must be predict or full")
    return cfg, ring


def pole_rows(ps: PoleSet, epoch: int) -> List[list]:
    return [
        [epoch, i, r, p, r * math.cos(p), r * math.sin(p)]
        for i, (r, p) in enumerate(zip(ps.rho.tolist(), ps.psi.tolist()))
    ]


def write_pole_csv(path_or_fh, snapshots: Iterable[Tuple[int, PoleSet]]) -> int:
    """CSV of ``epoch,pole_index,rho,psi,re,im``; returns the number of rows."""
    own = isinstance(path_or_fh, (str, os.PathLike))
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh)
        w.writerow(POLE_CSV_HEADER)
        n = 0
        for epoch, ps in snapshots:
            for row in pole_rows(ps, epoch):
                w.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])
                n += 1
        return n
    finally:
        if own:
            fh.close()


def save_snapshots(path, snapshots: Sequence[Tuple[int, PoleSet]]) -> None:
    obj = {
        "epochs": [int(e) for e, _ in snapshots],
        "rho": [ps.rho.tolist() for _, ps in snapshots],
        "psi": [ps.psi.tolist() for _, ps in snapshots],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(obj, fh, separators=(",", ":"))


def load_snapshots(path) -> List[Tuple[int, PoleSet]]:
    with open(path, "r", encoding="ascii") as fh:
        obj = json.load(fh)
    return [(int(e), PoleSet(r, p)) for e, r, p in zip(obj["epochs"], obj["rho"], obj["psi"])]


def convert_pgm_dir(src_dir, out_path, channel_id: str = "intensity") -> SequenceFile:
    """Stack the 8-bit PGM frames of ``src_dir`` (sorted by name) into one sequence.

    Pixel values are scaled to ``[0, 1]``.  Needs Pillow.
    """
    from PIL import Image

    names = sorted(n for n in os.listdir(src_dir) if n.lower().endswith(".pgm"))
    if not names:
        raise FormatError(f"{src_dir}: no .pgm files")
    frames = []
    for n in names:
        with Image.open(os.path.join(src_dir, n)) as im:
            if im.mode != "L":
                raise FormatError(f"{n}: expected 8-bit grayscale, got mode {im.mode}")
            frames.append(np.asarray(im, dtype=np.float32) / 255.0)
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise FormatError(f"{src_dir}: frames differ in size {sorted(shapes)}")
    data = np.stack(frames)[None]
    write_sequences(out_path, data, channel_id)
    return SequenceFile(data, channel_id)
