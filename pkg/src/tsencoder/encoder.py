"""Convolutional encoder with time-wise attention summarization.

Three conv blocks (conv -> instance norm -> PReLU -> dropout) separated by
two factor-2 max-pooling stages. The last block's filters are split in
half: the second half passes through a softmax over time and weights a dot
product with the first half, giving one number per filter regardless of
series length. A fully-connected layer and a normalization over the output
components produce the k-dimensional representation.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import Tensor

MIN_LENGTH = 4
MAGIC = b"TSENC001"

# Fixed header field order of the weight file (little-endian int32 each).
HEADER_FIELDS = (
    "c1", "c2", "c3", "kw1", "kw2", "kw3", "pad1", "pad2", "pad3", "k",
    "dropout_ppm", "eps_pico",
)


@dataclass(frozen=True)
class EncoderConfig:
    filters: tuple[int, int, int] = (128, 256, 512)
    kernels: tuple[int, int, int] = (5, 11, 21)
    paddings: tuple[int, int, int] = (2, 5, 10)
    dropout_p: float = 0.2
    k: int = 256
    eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "kernels", tuple(int(f) for f in self.kernels))
        object.__setattr__(self, "paddings", tuple(int(f) for f in self.paddings))

    def violations(self) -> list[str]:
        out = []
        if len(self.filters) != 3 or len(self.kernels) != 3 or len(self.paddings) != 3:
            out.append("filters, kernels and paddings need exactly 3 entries")
            return out
        if any(f < 1 for f in self.filters):
            out.append(f"filters must be positive, got {self.filters}")
        if self.filters[2] % 2:
            out.append(f"last filter count must be even, got {self.filters[2]}")
        if any(kw < 1 or kw % 2 == 0 for kw in self.kernels):
            out.append(f"kernels must be odd and positive, got {self.kernels}")
        if any(p < 0 for p in self.paddings):
            out.append(f"paddings must be non-negative, got {self.paddings}")
        if self.k < 1:
            out.append(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.dropout_p < 1.0:
            out.append(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if not self.eps > 0:
            out.append(f"eps must be positive, got {self.eps}")
        return out

    def validate(self) -> "EncoderConfig":
        problems = self.violations()
        if problems:
            raise ValueError("invalid encoder config: " + "; ".join(problems))
        return self

    def with_k(self, k: int) -> "EncoderConfig":
        return replace(self, k=k)

    def output_length(self, t: int) -> int:
        """Time extent entering the attention stage for an input of length ``t``."""
        for i, (kw, p) in enumerate(zip(self.kernels, self.paddings)):
            t = t + 2 * p - kw + 1
            if i < 2:
                t //= 2
        return t

    def min_length(self) -> int:
        t = MIN_LENGTH
        while not self._survives(t):
            t += 1
        return t

    def _survives(self, t: int) -> bool:
        for i, (kw, p) in enumerate(zip(self.kernels, self.paddings)):
            if t + 2 * p < kw:
                return False
            t = t + 2 * p - kw + 1
            if i < 2:
                if t < 2:
                    return False
                t //= 2
        return t >= 1


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of all parameters, in serialization order."""
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for i, (c, kw) in enumerate(zip(config.filters, config.kernels), start=1):
        shapes[f"block{i}.weight"] = (c, c_in, kw)
        shapes[f"block{i}.bias"] = (c,)
        shapes[f"block{i}.gamma"] = (c,)
        shapes[f"block{i}.beta"] = (c,)
        shapes[f"block{i}.slope"] = (c,)
        c_in = c
    half = config.filters[2] // 2
    shapes["fc.weight"] = (config.k, half)
    shapes["fc.bias"] = (config.k,)
    shapes["out.gamma"] = (config.k,)
    shapes["out.beta"] = (config.k,)
    return shapes


@dataclass
class EncoderParams:
    """All learnable encoder tensors, keyed by name in a fixed order."""

    config: EncoderConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def values(self) -> list[Tensor]:
        return list(self.tensors.values())

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {
            name: Tensor(t.data.copy(), requires_grad=True) for name, t in self.tensors.items()
        })

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}


def build(config: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Freshly initialized parameters.

    Weights and biases are uniform in ``±sqrt(1/fan_in)``, PReLU slopes
    0.25, normalization scales 1 and shifts 0.
    """
    config.validate()
    shapes = parameter_shapes(config)
    tensors = {}
    for name, shape in shapes.items():
        layer, kind = name.split(".")
        if kind in ("weight", "bias"):
            bound = np.sqrt(1.0 / np.prod(shapes[layer + ".weight"][1:]))
            values = rng.uniform(-bound, bound, size=shape)
        elif kind == "slope":
            values = np.full(shape, 0.25)
        elif kind == "gamma":
            values = np.ones(shape)
        else:
            values = np.zeros(shape)
        tensors[name] = Tensor(values, requires_grad=True)
    return EncoderParams(config, tensors)


def conv_block(x: Tensor, params: EncoderParams, index: int, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    """conv1d -> instance_norm -> prelu -> dropout for block ``index`` (1-based)."""
    cfg = params.config
    p = f"block{index}."
    h = nx.conv1d(x, params[p + "weight"], params[p + "bias"], cfg.paddings[index - 1])
    h = nx.instance_norm(h, params[p + "gamma"], params[p + "beta"], cfg.eps)
    h = nx.prelu(h, params[p + "slope"])
    return nx.dropout(h, cfg.dropout_p, train, rng)


def attention_summarize(features: Tensor, inspect: dict | None = None) -> Tensor:
    """Collapse time: first half of the filters dotted with softmax(second half).

    Args:
        features: ``[b, c, t]`` with even ``c``.
        inspect: optional dict; receives the attention weights under
            ``"attention"``.

    Returns:
        ``[b, c // 2]``.
    """
    c = features.shape[1]
    if c % 2:
        raise nx.ShapeError(f"attention needs an even filter count, got {c}")
    half = c // 2
    signal = nx.channel_slice(features, 0, half)
    weights = nx.softmax_time(nx.channel_slice(features, half, c))
    if inspect is not None:
        inspect["attention"] = weights.data
    return nx.sum_time(nx.mul(signal, weights))


def encode(params: EncoderParams, x, train: bool = False,
           rng: np.random.Generator | None = None, inspect: dict | None = None) -> Tensor:
    """Map a ``[b, 1, t]`` batch of equal-length series to ``[b, k]``."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim != 3 or x.shape[1] != 1:
        raise nx.ShapeError(f"encode expects [batch, 1, time], got {x.shape}")
    cfg = params.config
    t = x.shape[2]
    need = cfg.min_length()
    if t < need:
        raise nx.SeriesTooShortError(f"series length {t} is below the minimum of {need}")
    lengths = [t]
    h = conv_block(x, params, 1, train, rng)
    h = nx.max_pool2(h)
    lengths.append(h.shape[2])
    h = conv_block(h, params, 2, train, rng)
    h = nx.max_pool2(h)
    lengths.append(h.shape[2])
    h = conv_block(h, params, 3, train, rng)
    if inspect is not None:
        inspect["lengths"] = lengths
    h = attention_summarize(h, inspect)
    h = nx.linear(h, params["fc.weight"], params["fc.bias"])
    if inspect is not None:
        inspect["pre_norm"] = h.data
    return nx.feature_norm(h, params["out.gamma"], params["out.beta"], cfg.eps)


def encode_series(params: EncoderParams, series: Sequence[np.ndarray], train: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """Encode series of possibly different lengths.

    Equal-length series are batched together. Returns the ``[n, k]``
    representation tensor and the permutation ``order`` such that row ``i``
    belongs to ``series[order[i]]``.
    """
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(series):
        groups.setdefault(len(s), []).append(i)
    parts, order = [], []
    for length in sorted(groups):
        idx = groups[length]
        batch = np.stack([np.asarray(series[i], dtype=np.float64) for i in idx])[:, None, :]
        parts.append(encode(params, batch, train, rng))
        order.extend(idx)
    return nx.concat_rows(parts), np.asarray(order)


def represent(params: EncoderParams, series: Sequence[np.ndarray],
              batch_size: int = 256) -> np.ndarray:
    """Eval-mode representations ``[n, k]`` in the original series order."""
    out = np.empty((len(series), params.config.k))
    for start in range(0, len(series), batch_size):
        chunk = series[start:start + batch_size]
        reps, order = encode_series(params, chunk)
        out[start + order] = reps.data
    return out


# --------------------------------------------------------------------------
# weight file

class EncoderFileError(ValueError):
    """Base class for weight-file problems."""


class NotEncoderFileError(EncoderFileError):
    def __init__(self, path):
        super().__init__(f"{path}: not an encoder file")


class UnsupportedVersionError(EncoderFileError):
    def __init__(self, path, version):
        super().__init__(f"{path}: unsupported encoder file version {version!r}")


class TruncatedFileError(EncoderFileError):
    def __init__(self, path, expected, got):
        super().__init__(f"{path}: truncated encoder file (expected {expected} bytes, got {got})")


class ChecksumError(EncoderFileError):
    def __init__(self, path):
        super().__init__(f"{path}: checksum mismatch, encoder file is corrupted")


def _header_values(config: EncoderConfig) -> list[int]:
    return [*config.filters, *config.kernels, *config.paddings, config.k,
            int(round(config.dropout_p * 1e6)), int(round(config.eps * 1e12))]


def to_bytes(params: EncoderParams) -> bytes:
    """Serialize to the weight-file layout.

    ``MAGIC | u32 header length | int32[len(HEADER_FIELDS)] | float64 params | u32 crc32``.
    The checksum covers header length, header and parameters.
    """
    header = struct.pack(f"<{len(HEADER_FIELDS)}i", *_header_values(params.config))
    body = b"".join(
        np.ascontiguousarray(params[name].data, dtype="<f8").tobytes()
        for name in parameter_shapes(params.config))
    payload = struct.pack("<I", len(header)) + header + body
    return MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def from_bytes(blob: bytes, path="<bytes>") -> EncoderParams:
    if len(blob) < len(MAGIC) or blob[:5] != MAGIC[:5]:
        raise NotEncoderFileError(path)
    if blob[:len(MAGIC)] != MAGIC:
        raise UnsupportedVersionError(path, blob[5:8].decode("ascii", "replace"))
    pos = len(MAGIC)
    if len(blob) < pos + 4:
        raise TruncatedFileError(path, pos + 4, len(blob))
    (hlen,) = struct.unpack_from("<I", blob, pos)
    if hlen != 4 * len(HEADER_FIELDS):
        raise NotEncoderFileError(path)
    if len(blob) < pos + 4 + hlen:
        raise TruncatedFileError(path, pos + 4 + hlen, len(blob))
    values = struct.unpack_from(f"<{len(HEADER_FIELDS)}i", blob, pos + 4)
    fields_ = dict(zip(HEADER_FIELDS, values))
    config = EncoderConfig(
        filters=(fields_["c1"], fields_["c2"], fields_["c3"]),
        kernels=(fields_["kw1"], fields_["kw2"], fields_["kw3"]),
        paddings=(fields_["pad1"], fields_["pad2"], fields_["pad3"]),
        k=fields_["k"], dropout_p=fields_["dropout_ppm"] / 1e6, eps=fields_["eps_pico"] / 1e12)
    if config.violations():
        raise NotEncoderFileError(path)
    shapes = parameter_shapes(config)
    n_values = sum(int(np.prod(s)) for s in shapes.values())
    expected = pos + 4 + hlen + 8 * n_values + 4
    if len(blob) != expected:
        if len(blob) < expected:
            raise TruncatedFileError(path, expected, len(blob))
        raise NotEncoderFileError(path)
    payload = blob[pos:expected - 4]
    (crc,) = struct.unpack_from("<I", blob, expected - 4)
    if zlib.crc32(payload) != crc:
        raise ChecksumError(path)
    flat = np.frombuffer(blob, dtype="<f8", count=n_values, offset=pos + 4 + hlen)
    tensors, offset = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        tensors[name] = Tensor(flat[offset:offset + size].reshape(shape).astype(np.float64),
                               requires_grad=True)
        offset += size
    return EncoderParams(config, tensors)


def save(params: EncoderParams, path) -> None:
    Path(path).write_bytes(to_bytes(params))


def load(path) -> EncoderParams:
    path = Path(path)
    return from_bytes(path.read_bytes(), path)
