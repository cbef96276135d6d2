"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"DARNCKPT"                      magic, 8 bytes
    u32 version                      FORMAT_VERSION
    u32 n, n bytes                   architecture/run config, UTF-8 JSON (sorted keys)
    u32 count                        number of arrays
    count times:
        u16 n, n bytes               array name, UTF-8
        u8 n, n bytes                numpy dtype string, e.g. "<f4"
        u8 ndim, ndim x u32          shape
        u64 n, n bytes               C-order array data

The writer is deterministic: identical parameters and config give identical
bytes.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig

MAGIC = b"DARNCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_arrays(path, arrays: dict[str, np.ndarray], config: dict):
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    chunks += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        nb = name.encode("utf-8")
        dt = arr.dtype.str.encode("ascii")
        chunks += [struct.pack("<H", len(nb)), nb, struct.pack("<B", len(dt)), dt]
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        raw = arr.tobytes(order="C")
        chunks += [struct.pack("<Q", len(raw)), raw]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def read_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = 8

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (n,) = take("<I")
    config = json.loads(buf[pos:pos + n].decode("utf-8"))
    pos += n
    (count,) = take("<I")
    arrays = {}
    for _ in range(count):
        (n,) = take("<H")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (n,) = take("<B")
        dtype = np.dtype(buf[pos:pos + n].decode("ascii"))
        pos += n
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        (n,) = take("<Q")
        arrays[name] = np.frombuffer(buf[pos:pos + n], dtype=dtype).reshape(shape).copy()
        pos += n
    return arrays, config


@dataclass
class ModelBundle:
    """Generator plus (optionally) the two discriminators and run metadata."""

    generator: Generator
    disc_albedo: Optional[Discriminator] = None
    disc_shading: Optional[Discriminator] = None
    meta: dict = field(default_factory=dict)

    def config(self) -> dict:
        gc = self.generator.config
        out = {"generator": {"width": gc.width, "n_blocks": gc.n_blocks, "target": gc.target}}
        if self.disc_albedo is not None:
            dc = self.disc_albedo.config
            out["discriminator"] = {"patch_size": dc.patch_size, "channels": list(dc.channels), "hidden": dc.hidden}
        out["meta"] = self.meta
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.generator.named_parameters().items():
            out[f"generator/{name}"] = t.data
        for name, stats in self.generator.named_buffers().items():
            if stats.initialized:
                out[f"generator/{name}.mean"] = stats.mean
                out[f"generator/{name}.var"] = stats.var
        for tag, disc in (("disc_albedo", self.disc_albedo), ("disc_shading", self.disc_shading)):
            if disc is not None:
                for name, t in disc.named_parameters().items():
                    out[f"{tag}/{name}"] = t.data
        return out


def save_checkpoint(path, bundle: ModelBundle):
    write_arrays(path, bundle.arrays(), bundle.config())


def load_checkpoint(path) -> ModelBundle:
    arrays, config = read_arrays(path)
    gcfg = GeneratorConfig(**config["generator"])
    dtype = arrays["generator/lift.w"].dtype
    gen = Generator(gcfg, dtype=dtype)
    _assign(gen.named_parameters(), arrays, "generator/", path)
    for name, stats in gen.named_buffers().items():
        key = f"generator/{name}"
        if f"{key}.mean" in arrays:
            stats.mean = arrays[f"{key}.mean"]
            stats.var = arrays[f"{key}.var"]
    discs = []
    for tag in ("disc_albedo", "disc_shading"):
        if "discriminator" in config and f"{tag}/fc1.w" in arrays:
            disc = Discriminator(DiscriminatorConfig(**config["discriminator"]), dtype=dtype)
            _assign(disc.named_parameters(), arrays, f"{tag}/", path)
            discs.append(disc)
        else:
            discs.append(None)
    return ModelBundle(gen, discs[0], discs[1], config.get("meta", {}))


def _assign(params, arrays, prefix, path):
    for name, t in params.items():
        key = prefix + name
        if key not in arrays:
            raise CheckpointError(f"{path}: missing array {key}")
        if arrays[key].shape != t.data.shape:
            raise CheckpointError(
                f"{path}: {key} has shape {arrays[key].shape}, architecture expects {t.data.shape}"
            )
        t.data = arrays[key]
