"""Self-describing binary checkpoint container.

Layout (all integers little-endian)::

    b"GCFCKPT\\0"  magic
    u32           format version
    u32 + bytes   JSON header (architecture, vocabulary, diffusion, training metadata)
    u32           array count
    per array:    u16 name length, name, u8 ndim, u32 * ndim shape, float32 data
    32 bytes      SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .denoiser import Denoiser, GraphDenoiser
from .diffusion import TransitionModel, build_schedule

MAGIC = b"GCFCKPT\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    params: dict[str, np.ndarray]
    arch: dict
    vocab: list[int]
    T: int
    m_x: list[float]
    m_e: list[float]
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ModelCheckpoint):
            return NotImplemented
        if (self.arch, self.vocab, self.T, self.m_x, self.m_e, self.meta) != (
                other.arch, other.vocab, other.T, other.m_x, other.m_e, other.meta):
            return False
        if list(self.params) != list(other.params):
            return False
        return all(a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.params.values(), other.params.values()))

    def transition_model(self) -> TransitionModel:
        return TransitionModel(self.m_x, self.m_e, build_schedule(self.T))

    def build_net(self) -> GraphDenoiser:
        net = GraphDenoiser(n_conditions=len(self.vocab), T=self.T, **self.arch)
        state = {k: torch.from_numpy(v.copy()) for k, v in self.params.items()}
        net.load_state_dict(state)
        return net

    def denoiser(self) -> Denoiser:
        return Denoiser(self.build_net(), self.transition_model(), self.vocab)

    def check_compatible(self, a: int, b: int, vocab=None) -> None:
        if (self.arch["a"], self.arch["b"]) != (a, b):
            raise CheckpointError(
                f"checkpoint was trained for a={self.arch['a']}, b={self.arch['b']} "
                f"categories but the data has a={a}, b={b}")
        if vocab is not None and list(vocab) != list(self.vocab):
            raise CheckpointError(f"checkpoint vocabulary {self.vocab} != {list(vocab)}")


def from_net(net: GraphDenoiser, arch: dict, vocab, tm: TransitionModel, meta: dict) -> ModelCheckpoint:
    params = {k: v.detach().to(torch.float32).numpy().copy() for k, v in net.state_dict().items()}
    return ModelCheckpoint(params, dict(arch), list(vocab), tm.T, tm.m_x.tolist(), tm.m_e.tolist(), dict(meta))


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    header = json.dumps({
        "arch": ckpt.arch, "vocab": ckpt.vocab, "T": ckpt.T, "schedule": "cosine",
        "m_x": ckpt.m_x, "m_e": ckpt.m_e, "meta": ckpt.meta,
    }, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header, struct.pack("<I", len(ckpt.params))]
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    body = b"".join(out)
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> ModelCheckpoint:
    if len(data) < len(MAGIC) + 40 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<II", body, pos)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    pos += 8
    header = json.loads(body[pos:pos + hlen])
    pos += hlen
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) * 4
        params[name] = np.frombuffer(body, dtype="<f4", count=size // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += size
    if pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return ModelCheckpoint(params, header["arch"], header["vocab"], header["T"], header["m_x"], header["m_e"],
                           header["meta"])


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> ModelCheckpoint:
    return from_bytes(Path(path).read_bytes())
