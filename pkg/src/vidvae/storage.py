"""Bit-exact file formats.

Checkpoint ("CVVA"):
    magic       4 bytes  "CVVA"
    version     u32 LE   (currently 1)
    config_len  u32 LE   + that many UTF-8 bytes of key=value lines
    tensor table until EOF, per tensor:
        name_len u32 LE, name UTF-8, dtype u8 (0 = fp32), rank u8,
        dims u64 LE * rank, raw little-endian fp32 payload

Raw video ("RAWV"):
    magic 4 bytes, T,H,W,C u32 LE, fp32 LE payload in (T,H,W,C) order.

Tensors are written in the ParamStore's deterministic (lexicographic) order, so
save -> load -> save is byte-identical.
"""

import struct

import numpy as np

from .config import ModelConfig, format_kv, parse_kv_file
from .errors import FormatError
from .params import ParamStore

CHECKPOINT_MAGIC = b"CVVA"
CHECKPOINT_VERSION = 1
RAW_MAGIC = b"RAWV"
DTYPE_FP32 = 0


def save_checkpoint(params: ParamStore, config: ModelConfig, path: str) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    config_bytes = format_kv(config.to_kv()).encode("utf-8")
    blob += struct.pack("<I", len(config_bytes))
    blob += config_bytes
    for name, t in params.items():
        data = np.ascontiguousarray(t.data, dtype=np.float32)
        name_b = name.encode("utf-8")
        blob += struct.pack("<I", len(name_b))
        blob += name_b
        blob += struct.pack("<BB", DTYPE_FP32, data.ndim)
        blob += struct.pack(f"<{data.ndim}Q", *data.shape)
        blob += data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.off = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise FormatError(f"truncated {self.what} at offset {self.off} (wanted {n} bytes)")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    @property
    def exhausted(self) -> bool:
        return self.off == len(self.blob)


def load_checkpoint(path: str) -> tuple[ParamStore, ModelConfig]:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, "checkpoint")
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic at offset 0")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")
    config_len = r.u32()
    config = ModelConfig.from_kv(parse_kv_file(r.take(config_len).decode("utf-8")))
    store = ParamStore()
    while not r.exhausted:
        name_off = r.off
        name = r.take(r.u32()).decode("utf-8")
        dtype = r.u8()
        if dtype != DTYPE_FP32:
            raise FormatError(f"unknown dtype code {dtype} at offset {name_off}")
        rank = r.u8()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = 1
        for d in dims:
            count *= d
        payload = r.take(4 * count)
        store.create(name, np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32))
    return store, config


def save_raw_video(video: np.ndarray, path: str) -> None:
    """(T, H, W, C) fp32; any channel count (latents use C = latent_channels)."""
    video = np.asarray(video, dtype=np.float32)
    if video.ndim != 4:
        raise FormatError(f"raw video must be rank 4 (T,H,W,C), got {video.shape}")
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<4I", *video.shape))
        fh.write(video.astype("<f4").tobytes())


def load_raw_video(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, "raw video")
    if r.take(4) != RAW_MAGIC:
        raise FormatError("bad raw video magic at offset 0")
    t, h, w, c = struct.unpack("<4I", r.take(16))
    payload = r.take(4 * t * h * w * c)
    if not r.exhausted:
        raise FormatError(f"trailing bytes after payload at offset {r.off}")
    return np.frombuffer(payload, dtype="<f4").reshape(t, h, w, c).astype(np.float32)


def export_ppm(frame: np.ndarray, path: str) -> None:
    """Binary PPM (P6) export of one (H, W, 3) frame, [-1, 1] -> [0, 255]."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise FormatError(f"PPM export needs (H, W, 3), got {frame.shape}")
    h, w, _ = frame.shape
    pixels = np.clip((frame + 1.0) * 127.5, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
