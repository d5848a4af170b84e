"""Parameter checkpoints.

Binary layout (all integers and floats little-endian)::

    b"KGCKPT1\\n"
    uint64  header length in bytes
    header  UTF-8 JSON: {"params": [{"name", "rows", "cols"}, ...], "meta": {...}}
    float64 payload, one matrix after another in manifest order,
            each matrix column-major

Vectors are stored as ``rows x 1`` matrices.  A ``.json`` suffix selects the
debugging variant, which holds the same manifest with an inline ``data``
list per parameter.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, ShapeError
from .tape import Params

MAGIC = b"KGCKPT1\n"


def _as_matrix(value: np.ndarray) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim == 2:
        return arr
    raise ShapeError(f"checkpoints hold matrices and vectors only, got shape {arr.shape}")


def save_checkpoint(path, params: Params | dict, meta: dict | None = None) -> Path:
    path = Path(path)
    values = params.values if isinstance(params, Params) else params
    mats = {name: _as_matrix(v) for name, v in values.items()}
    manifest = [{"name": n, "rows": int(m.shape[0]), "cols": int(m.shape[1])} for n, m in mats.items()]
    meta = meta or {}
    if path.suffix == ".json":
        doc = {
            "format": "kronograph-checkpoint",
            "version": 1,
            "meta": meta,
            "params": [dict(entry, data=mats[entry["name"]].ravel(order="F").tolist()) for entry in manifest],
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path
    header = json.dumps({"params": manifest, "meta": meta}, sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for entry in manifest:
            fh.write(mats[entry["name"]].ravel(order="F").astype("<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(matrices by name, meta)``; raises ContractError on corrupt files."""
    path = Path(path)
    if not path.exists():
        raise ContractError(f"checkpoint not found: {path}")
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
            out = {}
            for entry in doc["params"]:
                data = np.asarray(entry["data"], dtype=np.float64)
                out[entry["name"]] = data.reshape(entry["rows"], entry["cols"], order="F")
            return out, doc.get("meta", {})
        except (KeyError, ValueError, TypeError) as exc:
            raise ContractError(f"corrupt JSON checkpoint {path}: {exc}") from None
    raw = path.read_bytes()
    if not raw.startswith(MAGIC) or len(raw) < len(MAGIC) + 8:
        raise ContractError(f"{path} is not a kronograph checkpoint")
    (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, ValueError) as exc:
        raise ContractError(f"corrupt checkpoint header in {path}: {exc}") from None
    payload = np.frombuffer(raw, dtype="<f8", offset=start + hlen) if len(raw) > start + hlen else np.empty(0)
    expected = sum(e["rows"] * e["cols"] for e in header["params"])
    if payload.size != expected:
        raise ContractError(f"{path}: payload holds {payload.size} floats, manifest expects {expected}")
    out, pos = {}, 0
    for entry in header["params"]:
        size = entry["rows"] * entry["cols"]
        out[entry["name"]] = payload[pos:pos + size].reshape(entry["rows"], entry["cols"], order="F").astype(np.float64)
        pos += size
    return out, header.get("meta", {})


def restore_params(params: Params, stored: dict[str, np.ndarray]) -> None:
    """Copy stored matrices into ``params`` after checking names and shapes."""
    missing = set(params.names()) - set(stored)
    extra = set(stored) - set(params.names())
    if missing or extra:
        raise ShapeError(f"checkpoint parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name in params.names():
        want = params[name].shape
        got = stored[name]
        if _as_matrix(np.empty(want)).shape != got.shape:
            raise ShapeError(f"checkpoint shape mismatch for {name!r}: model expects {want}, file has {got.shape}")
        params[name] = got.reshape(want)
