"""Deterministic encoder forward pass and the portable weight file.

The encoder maps a preprocessed 12 x 2800 record to the mean and
log-variance of a 256-dimensional latent Gaussian. Four residual blocks
(two convolutions with batch normalization, a 1x1 strided projection on
the skip path) halve the time axis each: 2800 -> 1400 -> 700 -> 350 ->
175, channels 12 -> 32 -> 64 -> 128 -> 256. Global average pooling over
time feeds two affine heads.

Conventions shared with any weight producer (part of the file contract):

* convolutions use symmetric zero padding of kernel//2 (none on the 1x1
  skip projection), so every layer's output length is len(in)//2 for the
  strided convs and len(in) for the stride-1 convs;
* batch normalization runs in inference mode with the stored running
  statistics and eps = 1e-5;
* the retrieval embedding is mu; nothing is sampled.

Weight file ("CRW1", little-endian): magic, u16 version, architecture
descriptor (u8 n_blocks, u16 per-block channels, u8 kernel, u8 stride,
u16 latent dim), u32 tensor count, then per tensor a u16-length UTF-8
name, u8 ndim, u32 dims and the float32 data.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, IoFailure, ShapeMismatch, TruncatedFile
from .records import EcgRecord, write_atomic

_CRW_MAGIC = b"CRW1"
_CRW_VERSION = 1

BN_EPS = 1e-5
INPUT_CHANNELS = 12
INPUT_SAMPLES = 2800


@dataclass(frozen=True)
class EncoderArchitecture:
    block_channels: tuple[int, ...] = (32, 64, 128, 256)
    kernel: int = 5
    stride: int = 2
    latent_dim: int = 256

    @property
    def n_blocks(self) -> int:
        return len(self.block_channels)


DEFAULT_ARCHITECTURE = EncoderArchitecture()

_BN_PARTS = ("gamma", "beta", "running_mean", "running_var")


def tensor_shapes(arch: EncoderArchitecture) -> dict[str, tuple[int, ...]]:
    """Complete name -> shape table the weight file must provide."""
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = INPUT_CHANNELS
    for i, c_out in enumerate(arch.block_channels):
        p = f"blocks.{i}"
        shapes[f"{p}.conv1.weight"] = (c_out, c_in, arch.kernel)
        shapes[f"{p}.conv1.bias"] = (c_out,)
        shapes[f"{p}.conv2.weight"] = (c_out, c_out, arch.kernel)
        shapes[f"{p}.conv2.bias"] = (c_out,)
        shapes[f"{p}.skip.weight"] = (c_out, c_in, 1)
        shapes[f"{p}.skip.bias"] = (c_out,)
        for bn in ("bn1", "bn2"):
            for part in _BN_PARTS:
                shapes[f"{p}.{bn}.{part}"] = (c_out,)
        c_in = c_out
    for head in ("mu", "logvar"):
        shapes[f"head.{head}.weight"] = (arch.latent_dim, arch.block_channels[-1])
        shapes[f"head.{head}.bias"] = (arch.latent_dim,)
    return shapes


@dataclass
class EncoderWeights:
    architecture: EncoderArchitecture
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = tensor_shapes(self.architecture)
        missing = sorted(set(expected) - set(self.tensors))
        if missing:
            raise ShapeMismatch(f"missing tensors: {missing[:4]}"
                                + ("..." if len(missing) > 4 else ""))
        for name, arr in self.tensors.items():
            want = expected.get(name)
            if want is None:
                raise ShapeMismatch(f"unexpected tensor {name!r}")
            if tuple(arr.shape) != want:
                raise ShapeMismatch(
                    f"tensor {name!r} has shape {tuple(arr.shape)}, expected {want}")
            self.tensors[name] = np.ascontiguousarray(arr, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


@dataclass
class LatentEmbedding:
    """Latent Gaussian parameters for one record (mu is the embedding)."""

    mu: np.ndarray
    log_var: np.ndarray
    record_id: str = ""

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_var = np.asarray(self.log_var, dtype=np.float64)
        if self.mu.shape != self.log_var.shape or self.mu.ndim != 1:
            raise ShapeMismatch("mu and log_var must be equal-length vectors")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_var))):
            raise ShapeMismatch("latent vectors must be finite")


# ---------------------------------------------------------------------------
# weight file io
# ---------------------------------------------------------------------------

def save_weights(weights: EncoderWeights, path: str | os.PathLike) -> None:
    arch = weights.architecture
    parts = [
        _CRW_MAGIC,
        struct.pack("<H", _CRW_VERSION),
        struct.pack("<B", arch.n_blocks),
    ]
    for c in arch.block_channels:
        parts.append(struct.pack("<H", c))
    parts.append(struct.pack("<BB", arch.kernel, arch.stride))
    parts.append(struct.pack("<H", arch.latent_dim))
    names = sorted(weights.tensors)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = weights.tensors[name]
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            parts.append(struct.pack("<I", d))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    try:
        write_atomic(path, b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_weights(path: str | os.PathLike) -> EncoderWeights:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedFile(f"{path}: ended at byte {len(view)}, needed {pos + n}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != _CRW_MAGIC:
        raise BadMagic(f"{path}: not an encoder weight file")
    (version,) = struct.unpack("<H", take(2))
    if version != _CRW_VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")

    (n_blocks,) = struct.unpack("<B", take(1))
    channels = tuple(struct.unpack("<H", take(2))[0] for _ in range(n_blocks))
    kernel, stride = struct.unpack("<BB", take(2))
    (latent_dim,) = struct.unpack("<H", take(2))
    arch = EncoderArchitecture(block_channels=channels, kernel=kernel,
                               stride=stride, latent_dim=latent_dim)

    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len )).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        n_vals = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * n_vals), dtype="<f4").reshape(dims).copy()
        tensors[name] = data

    return EncoderWeights(architecture=arch, tensors=tensors)


def random_weights(seed: int = 0,
                   arch: EncoderArchitecture = DEFAULT_ARCHITECTURE) -> EncoderWeights:
    """Fixed-seed Gaussian weights; the documented stand-in when no trained
    weight file is available. Batch-norm statistics are identity."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(arch).items():
        if name.endswith(".running_var") or name.endswith(".gamma"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith((".beta", ".running_mean", ".bias")):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            std = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
    return EncoderWeights(architecture=arch, tensors=tensors)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
            stride: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad)))
    k = w.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)[:, ::stride, :]
    y = np.tensordot(w, windows, axes=((1, 2), (0, 2)))
    return (y + b[:, None]).astype(np.float32)


def _batch_norm(x: np.ndarray, w: EncoderWeights, prefix: str) -> np.ndarray:
    gamma = w[f"{prefix}.gamma"][:, None]
    beta = w[f"{prefix}.beta"][:, None]
    mean = w[f"{prefix}.running_mean"][:, None]
    var = w[f"{prefix}.running_var"][:, None]
    return gamma * (x - mean) / np.sqrt(var + BN_EPS) + beta


def _forward(signals: np.ndarray, w: EncoderWeights) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    arch = w.architecture
    x = np.ascontiguousarray(signals, dtype=np.float32)
    if x.shape != (INPUT_CHANNELS, INPUT_SAMPLES):
        raise ShapeMismatch(f"encoder input must be "
                            f"{(INPUT_CHANNELS, INPUT_SAMPLES)}, got {x.shape}")
    pad = arch.kernel // 2
    activations = []
    for i in range(arch.n_blocks):
        p = f"blocks.{i}"
        h = _conv1d(x, w[f"{p}.conv1.weight"], w[f"{p}.conv1.bias"],
                    stride=arch.stride, pad=pad)
        h = _batch_norm(h, w, f"{p}.bn1")
        h = np.maximum(h, 0.0)
        h = _conv1d(h, w[f"{p}.conv2.weight"], w[f"{p}.conv2.bias"],
                    stride=1, pad=pad)
        h = _batch_norm(h, w, f"{p}.bn2")
        s = _conv1d(x, w[f"{p}.skip.weight"], w[f"{p}.skip.bias"],
                    stride=arch.stride, pad=0)
        x = np.maximum(h + s, 0.0).astype(np.float32)
        activations.append(x)

    pooled = x.mean(axis=1)
    mu = w["head.mu.weight"] @ pooled + w["head.mu.bias"]
    log_var = w["head.logvar.weight"] @ pooled + w["head.logvar.bias"]
    return mu, log_var, activations


def embed(rec: EcgRecord, w: EncoderWeights) -> LatentEmbedding:
    """Deterministic latent embedding of a preprocessed record.

    Depends only on the signal matrix; metadata never enters the forward
    pass. Repeated calls are bit-identical.
    """
    mu, log_var, _ = _forward(rec.signals, w)
    return LatentEmbedding(mu=mu, log_var=log_var, record_id=rec.record_id)


def kl_divergence(e: LatentEmbedding) -> float:
    """KL(q || N(0, I)) of the latent Gaussian, in double precision."""
    mu = e.mu
    lv = e.log_var
    return float(-0.5 * np.sum(1.0 + lv - mu * mu - np.exp(lv)))
