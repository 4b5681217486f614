"""
Network checkpoints.

Layout (little-endian):

    magic "IUZC" | u16 version | u32 config length | UTF-8 JSON config
    | u32 tensor count
    then per tensor, in name order: u16 name length | UTF-8 name | u8 ndim
    | u32 extent per axis | f64 data

The JSON block is written with sorted keys and carries no timestamps, so
saving the same parameters twice gives identical files.
"""
import json
import logging
import os
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .net import NetConfig, NetParams, init_net

MAGIC = b"IUZC"
VERSION = 1


def checkpoint_bytes(net: NetParams, metadata: Optional[Dict[str, Any]] = None) -> bytes:
    block = {
        "net": net.config.to_dict(),
        "metadata": dict(metadata or {}, format=MAGIC.decode(), version=VERSION),
    }
    text = json.dumps(block, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = net.named_tensors()

    parts = [MAGIC, struct.pack("<HI", VERSION, len(text)), text, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        array = tensors[name]
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(net: NetParams, path: str, metadata: Optional[Dict[str, Any]] = None) -> None:
    blob = checkpoint_bytes(net, metadata)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
        logging.info(f"💾 Saved checkpoint with {net.parameter_count()} parameters to {path}")
    except OSError as e:
        logging.error(f"❌ Failed to save checkpoint {path}: {e}")
        raise


def parse_checkpoint(blob: bytes, origin: str = "<bytes>") -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Split a checkpoint into its config block and named tensors; ValueError on corruption."""
    if blob[:4] != MAGIC:
        raise ValueError(f"{origin} is not a checkpoint (bad magic {blob[:4]!r})")
    try:
        version, length = struct.unpack_from("<HI", blob, 4)
        if version != VERSION:
            raise ValueError(f"Unsupported checkpoint version {version}")
        offset = 10
        block = json.loads(blob[offset:offset + length].decode("utf-8"))
        offset += length
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4

        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if offset + 8 * size > len(blob):
                raise ValueError(f"Tensor {name} runs past the end of {origin}")
            tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
            offset += 8 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"Corrupt checkpoint {origin}: {e}") from e

    if offset != len(blob):
        raise ValueError(f"{origin} has {len(blob) - offset} trailing bytes")
    return block, tensors


def load_checkpoint(path: str) -> NetParams:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        logging.error(f"❌ Could not read checkpoint {path}: {e}")
        raise

    block, tensors = parse_checkpoint(blob, path)
    if "net" not in block:
        raise ValueError(f"{path} has no network config block")
    net = init_net(NetConfig.from_dict(block["net"]))
    net.load_tensors(tensors)
    logging.info(f"📂 Loaded {net.config.model} checkpoint ({net.parameter_count()} parameters) from {path}")
    return net


def checkpoint_metadata(path: str) -> Dict[str, Any]:
    with open(path, "rb") as fh:
        block, _ = parse_checkpoint(fh.read(), path)
    return block.get("metadata", {})
