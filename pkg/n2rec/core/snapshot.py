"""Lossless text snapshots of a trained model and its shared embeddings"""

import hashlib
import io
import re
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ModelError
from .logger import get_logger
from .models import Recommender, SharedParams, create_model

logger = get_logger('snapshot')

SNAPSHOT_VERSION = 1
_HEADER_RE = re.compile(r"^#n2rec-model-v(\d+) kind=(\w+) d=(\d+) M=(\d+) Q=(\d+)$")
_CHECKSUM_PREFIX = "#checksum sha256="


def _format_array(name: str, value: np.ndarray) -> str:
    value = np.asarray(value)
    integer = np.issubdtype(value.dtype, np.integer)
    shape = "x".join(str(n) for n in value.shape)
    buffer = io.StringIO()
    if value.size:
        # 17 significant digits round-trip every double exactly
        np.savetxt(buffer, value.reshape(value.shape[0], -1), fmt="%d" if integer else "%.17g", delimiter="\t")
    return f"@{name} {'int64' if integer else 'float64'} {shape}\n{buffer.getvalue()}"


def save_snapshot(path: Path, model: Recommender, params: SharedParams,
                  meta: Optional[Dict[str, str]] = None) -> None:
    """
    Write model kind, dimensions, metadata and every array

    Args:
        path: Output file
        model: Trained model
        params: Shared embeddings
        meta: Extra key/value pairs (e.g. jtll flag, seed)
    """
    lines = [f"#n2rec-model-v{SNAPSHOT_VERSION} kind={model.kind} d={params.dim} "
             f"M={params.W_user.shape[0]} Q={params.W_poi.shape[0]}"]
    lines.extend(f"#meta {key}={value}" for key, value in (meta or {}).items())
    body = "\n".join(lines) + "\n"

    arrays = {**params.as_dict(), **model.parameters()}
    body += "".join(_format_array(name, value) for name, value in arrays.items())

    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    try:
        Path(path).write_text(body + f"{_CHECKSUM_PREFIX}{digest}\n", encoding="utf-8")
    except OSError as e:
        raise ModelError(f"Cannot write snapshot {path}: {e}") from e
    logger.info(f"Saved {model.kind} snapshot to: {path}")


def load_snapshot(path: Path) -> Tuple[Recommender, SharedParams, Dict[str, str]]:
    """
    Read a snapshot written by save_snapshot

    Returns:
        (model, shared params, metadata)

    Raises:
        ModelError: on unreadable files, version/checksum mismatch or missing arrays
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ModelError(f"Cannot read snapshot {path}: {e}") from e

    header = _HEADER_RE.match(lines[0]) if lines else None
    if header is None:
        raise ModelError(f"{path}: not an n2rec model snapshot")
    if int(header.group(1)) != SNAPSHOT_VERSION:
        raise ModelError(f"{path}: snapshot version {header.group(1)}, expected {SNAPSHOT_VERSION}")
    body = "\n".join(lines[:-1]) + "\n"
    if not lines[-1].startswith(_CHECKSUM_PREFIX) or \
            hashlib.sha256(body.encode("utf-8")).hexdigest() != lines[-1][len(_CHECKSUM_PREFIX):]:
        raise ModelError(f"{path}: checksum mismatch")

    kind, dim, num_users, num_pois = header.group(2), int(header.group(3)), int(header.group(4)), int(header.group(5))
    meta: Dict[str, str] = {}
    arrays: Dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines) - 1:
        line = lines[i]
        if line.startswith("#meta "):
            key, value = line[len("#meta "):].split("=", 1)
            meta[key] = value
            i += 1
            continue
        if not line.startswith("@"):
            raise ModelError(f"{path}:{i + 1}: unexpected line")
        name, dtype, shape_text = line[1:].split(" ")
        shape = tuple(int(n) for n in shape_text.split("x"))
        rows = shape[0] if int(np.prod(shape)) else 0
        values = np.loadtxt(lines[i + 1:i + 1 + rows], dtype=dtype, delimiter="\t", ndmin=2) \
            if rows else np.zeros(0, dtype=dtype)
        arrays[name] = values.reshape(shape)
        i += 1 + rows

    for name in ("W_user", "W_poi"):
        if name not in arrays:
            raise ModelError(f"{path}: missing {name}")
    params = SharedParams(arrays.pop("W_user"), arrays.pop("W_poi"))
    params.validate(num_users, num_pois)
    if params.dim != dim:
        raise ModelError(f"{path}: header d={dim} but embeddings have d={params.dim}")

    model = create_model(kind, num_users, num_pois, dim)
    try:
        model.load_parameters(arrays)
    except KeyError as e:
        raise ModelError(f"{path}: missing model array {e}") from e
    logger.info(f"Loaded {kind} snapshot from: {path}")
    return model, params, meta
