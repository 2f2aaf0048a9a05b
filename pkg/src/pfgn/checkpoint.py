"""Binary checkpoints.

Layout (little-endian)::

    b"PFGN1" | u32 version | u32 header length | header (UTF-8 JSON)
    | f32 payload (every array of the model, running BN stats included)
    | u32 CRC32 of the payload

The JSON header carries the model kind, dims, per-array shapes, the
normalization statistics and free-form metadata (seed, sampler knobs).
"""

import json
import struct
import zlib

import numpy as np

from .autodiff import Tensor
from .data import NormStats
from .errors import PersistenceError
from .pointnet import BatchNormParams, Block, ModelParams

MAGIC = b"PFGN1"
VERSION = 1


def to_bytes(params, stats=None, meta=None):
    arrays = params.arrays()
    header = {
        "kind": params.kind,
        "d": params.d,
        "d_emb": params.d_emb,
        "n_cfd": params.n_cfd,
        "width_divisor": params.width_divisor,
        "blocks": [[list(t.shape) for t in b.arrays()] for b in params.blocks],
        "norm_stats": stats.to_dict() if stats is not None else None,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(t.data.astype("<f4").tobytes() for t in arrays)
    return b"".join([MAGIC, struct.pack("<II", VERSION, len(hbytes)), hbytes, payload,
                     struct.pack("<I", zlib.crc32(payload))])


def from_bytes(raw):
    """Returns (params, stats or None, meta)."""
    if raw[:5] != MAGIC:
        raise PersistenceError("not a checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack_from("<II", raw, 5)
        header = json.loads(raw[13:13 + hlen].decode())
    except (struct.error, ValueError) as exc:
        raise PersistenceError(f"corrupt checkpoint header: {exc}") from exc
    if version != VERSION:
        raise PersistenceError(f"unsupported checkpoint version {version}")
    shapes = [[tuple(s) for s in blk] for blk in header["blocks"]]
    n_values = sum(int(np.prod(s)) for blk in shapes for s in blk)
    start = 13 + hlen
    end = start + 4 * n_values
    if len(raw) != end + 4:
        raise PersistenceError(f"checkpoint size {len(raw)} does not match declared shapes ({end + 4})")
    payload = raw[start:end]
    (crc,) = struct.unpack_from("<I", raw, end)
    if zlib.crc32(payload) != crc:
        raise PersistenceError("checkpoint CRC mismatch")
    flat = np.frombuffer(payload, "<f4").astype(np.float32)
    off = 0
    blocks = []
    for blk in shapes:
        arrs = []
        for s in blk:
            n = int(np.prod(s))
            arrs.append(flat[off:off + n].reshape(s).copy())
            off += n
        w, b = Tensor(arrs[0], True), Tensor(arrs[1], True)
        bn = None
        if len(arrs) == 6:
            bn = BatchNormParams(Tensor(arrs[2], True), Tensor(arrs[3], True),
                                 Tensor(arrs[4], False), Tensor(arrs[5], False))
        blocks.append(Block(w, b, bn))
    params = ModelParams(header["kind"], header["d"], header["d_emb"], header["n_cfd"], blocks,
                         header.get("width_divisor", 1))
    stats = NormStats.from_dict(header["norm_stats"]) if header.get("norm_stats") else None
    return params, stats, header.get("meta", {})


def save(path, params, stats=None, meta=None):
    try:
        with open(path, "wb") as fh:
            fh.write(to_bytes(params, stats, meta))
    except OSError as exc:
        raise PersistenceError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise PersistenceError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(raw)
