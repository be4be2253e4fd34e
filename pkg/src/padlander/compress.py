"""Magnitude pruning and 8-bit post-training quantization.

Weights are pruned per layer by magnitude, then stored as per-tensor affine
int8 (``w ≈ (q - zero_point) * scale``). The zero point makes 0.0 exactly
representable, so pruned entries stay exactly zero and a sparse tensor is
written as a bitmask of kept entries followed by their int8 codes. Layer
inputs can also be quantized to symmetric int8 with scales calibrated from
a set of observations; the matrix products then run in integer arithmetic.
Biases and the log-std vector stay in float32. The mean and value heads
are separate tensors so that pruning one never starves the other.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .policy import (
    ActionDistribution,
    Architecture,
    DTYPE_INT8,
    Policy,
    PolicyFormatError,
    read_header,
    write_header,
)

_DENSE = 0
_SPARSE = 1
DEFAULT_PRUNE_FRACTION = 0.2


@dataclass(frozen=True, eq=False)
class QuantTensor:
    shape: Tuple[int, ...]
    scale: float
    zero_point: int
    q: np.ndarray  # int8, same shape

    @classmethod
    def from_float(cls, w: np.ndarray) -> "QuantTensor":
        lo = min(float(w.min()), 0.0)
        hi = max(float(w.max()), 0.0)
        scale = np.float32((hi - lo) / 255.0) if hi > lo else np.float32(1.0)
        scale = float(scale)
        zp = int(np.clip(np.round(-128.0 - lo / scale), -128, 127))
        q = np.clip(np.round(w / scale) + zp, -128, 127).astype(np.int8)
        return cls(tuple(w.shape), scale, zp, q)

    def centered(self) -> np.ndarray:
        return self.q.astype(np.int32) - self.zero_point

    def dequantize(self) -> np.ndarray:
        return self.centered() * self.scale

    def nonzero(self) -> int:
        return int(np.count_nonzero(self.q != self.zero_point))

    def pack(self) -> bytes:
        flat = self.q.ravel()
        keep = flat != self.zero_point
        head = struct.pack("<fb", self.scale, self.zero_point)
        dense = bytes([_DENSE]) + head + flat.tobytes()
        sparse = bytes([_SPARSE]) + head + np.packbits(keep).tobytes() + flat[keep].tobytes()
        return sparse if len(sparse) < len(dense) else dense

    @classmethod
    def unpack(cls, buf: bytes, offset: int, shape) -> Tuple["QuantTensor", int]:
        n = int(np.prod(shape))
        try:
            mode = buf[offset]
            scale, zp = struct.unpack_from("<fb", buf, offset + 1)
        except (IndexError, struct.error):
            raise PolicyFormatError("truncated quantized tensor header") from None
        offset += 6
        if mode == _DENSE:
            raw = buf[offset:offset + n]
            if len(raw) != n:
                raise PolicyFormatError("truncated dense tensor")
            q = np.frombuffer(raw, dtype=np.int8).copy()
            offset += n
        elif mode == _SPARSE:
            mask_len = (n + 7) // 8
            raw_mask = buf[offset:offset + mask_len]
            if len(raw_mask) != mask_len:
                raise PolicyFormatError("truncated sparsity mask")
            keep = np.unpackbits(np.frombuffer(raw_mask, dtype=np.uint8), count=n).astype(bool)
            offset += mask_len
            k = int(keep.sum())
            raw = buf[offset:offset + k]
            if len(raw) != k:
                raise PolicyFormatError("truncated sparse values")
            q = np.full(n, zp, dtype=np.int8)
            q[keep] = np.frombuffer(raw, dtype=np.int8)
            offset += k
        else:
            raise PolicyFormatError(f"unknown tensor encoding {mode}")
        if not np.isfinite(scale) or scale <= 0:
            raise PolicyFormatError("bad quantization scale")
        return cls(tuple(shape), float(scale), int(zp), q.reshape(shape)), offset


class QuantizedPolicy:
    """Inference-only pruned int8 policy. Immutable and pure."""

    def __init__(self, arch: Architecture, weights: List[QuantTensor], biases: List[np.ndarray],
                 log_std: np.ndarray, act_scales: np.ndarray):
        self.arch = arch
        self.weights = weights  # hidden layers, then the mean head, then the value head
        self.biases = [np.asarray(b, dtype=np.float32) for b in biases]
        self.log_std = np.asarray(log_std, dtype=np.float32)
        self.std = np.exp(self.log_std.astype(np.float64))
        self.act_scales = np.asarray(act_scales, dtype=np.float32)  # 0 = leave that input in float
        self._centered = [w.centered() for w in weights]
        self._dequant = [w.dequantize() for w in weights]
        for arr in (self.std, self.act_scales, *self._centered, *self._dequant, *self.biases):
            arr.setflags(write=False)

    def nonzero_weights(self) -> int:
        return sum(w.nonzero() for w in self.weights)

    def _layer(self, i: int, h: np.ndarray) -> np.ndarray:
        s = float(self.act_scales[min(i, len(self.act_scales) - 1)])
        if s > 0:
            hq = np.clip(np.rint(h / s), -127, 127).astype(np.int32)
            acc = hq @ self._centered[i]
            return acc * (s * self.weights[i].scale) + self.biases[i]
        return h @ self._dequant[i] + self.biases[i]

    def forward(self, obs) -> Tuple[ActionDistribution, float]:
        h = np.asarray(obs, dtype=np.float64)
        if h.shape != (self.arch.input_dim,):
            raise ValueError(f"expected observation shape ({self.arch.input_dim},), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("non-finite observation")
        n_hidden = len(self.arch.hidden)
        for i in range(n_hidden):
            h = np.tanh(self._layer(i, h))
        mean = self._layer(n_hidden, h).astype(np.float64)
        value = self._layer(n_hidden + 1, h)
        return ActionDistribution(mean, self.std), float(value[0])

    def act(self, obs) -> np.ndarray:
        return self.forward(obs)[0].mode()

    def to_bytes(self) -> bytes:
        parts = [write_header(DTYPE_INT8, self.arch)]
        parts.append(self.act_scales.astype("<f4").tobytes())
        for w in self.weights:
            parts.append(w.pack())
        for b in self.biases:
            parts.append(b.astype("<f4").tobytes())
        parts.append(self.log_std.astype("<f4").tobytes())
        return b"".join(parts)

    @staticmethod
    def _shapes(arch: Architecture):
        dims = [arch.input_dim, *arch.hidden]
        w = [(dims[i], dims[i + 1]) for i in range(len(arch.hidden))]
        w += [(dims[-1], arch.action_dim), (dims[-1], 1)]
        b = [*arch.hidden, arch.action_dim, 1]
        return w, b

    @classmethod
    def from_payload(cls, arch: Architecture, buf: bytes, offset: int) -> "QuantizedPolicy":
        w_shapes, b_sizes = cls._shapes(arch)

        def take_f32(n):
            nonlocal offset
            raw = buf[offset:offset + 4 * n]
            if len(raw) != 4 * n:
                raise PolicyFormatError("truncated quantized payload")
            offset += 4 * n
            return np.frombuffer(raw, dtype="<f4").astype(np.float32)

        act_scales = take_f32(len(arch.hidden) + 1)
        weights = []
        for shape in w_shapes:
            t, offset = QuantTensor.unpack(buf, offset, shape)
            weights.append(t)
        biases = [take_f32(n) for n in b_sizes]
        log_std = take_f32(arch.action_dim)
        if offset != len(buf):
            raise PolicyFormatError(f"{len(buf) - offset} trailing bytes in quantized payload")
        return cls(arch, weights, biases, log_std, act_scales)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "QuantizedPolicy":
        dtype, arch, offset = read_header(bytes(buf))
        if dtype != DTYPE_INT8:
            raise PolicyFormatError("payload is not a quantized policy")
        return cls.from_payload(arch, bytes(buf), offset)


def prune_weights(w: np.ndarray, fraction: float) -> np.ndarray:
    """Zero the ``floor(fraction * w.size)`` smallest-magnitude entries."""
    k = int(np.floor(fraction * w.size))
    out = w.copy()
    if k:
        order = np.argsort(np.abs(w), axis=None, kind="stable")
        out.ravel()[order[:k]] = 0.0
    return out


def calibrate_activations(policy: Policy, obs: np.ndarray) -> np.ndarray:
    """Symmetric int8 scales for each layer input, from max |activation| over ``obs``."""
    _, _, cache = policy.forward_batch(np.asarray(obs, dtype=float))
    scales = [float(np.max(np.abs(c))) / 127.0 for c in cache]
    return np.array([s if s > 0 else 1.0 / 127.0 for s in scales], dtype=np.float32)


def prune_and_quantize(policy: Policy, prune_fraction: float = DEFAULT_PRUNE_FRACTION,
                       calibration_obs: Optional[np.ndarray] = None) -> QuantizedPolicy:
    """Prune every weight matrix by magnitude and quantize it to int8.

    ``calibration_obs`` (N, input_dim) sets the activation scales; when it is
    None the layer inputs stay in floating point and only weights are
    quantized.
    """
    if not 0.0 <= prune_fraction < 1.0:
        raise ValueError(f"prune fraction must be in [0, 1), got {prune_fraction}")
    arch = policy.arch
    L = policy.layers
    mats = [L[f"w{i}"] for i in range(len(arch.hidden))]
    mats += [L["w_mu"], L["w_v"]]
    biases = [L[f"b{i}"] for i in range(len(arch.hidden))] + [L["b_mu"], L["b_v"]]
    weights = []
    for i, w in enumerate(mats):
        pruned = prune_weights(w, prune_fraction)
        if not np.any(pruned):
            raise ValueError(f"pruning leaves layer {i} with no nonzero weights")
        weights.append(QuantTensor.from_float(pruned))
    if calibration_obs is None:
        act_scales = np.zeros(len(arch.hidden) + 1, dtype=np.float32)
    else:
        act_scales = calibrate_activations(policy, calibration_obs)
    return QuantizedPolicy(arch, weights, biases, L["log_std"], act_scales)


def size_reduction(float_policy: Policy, quantized: QuantizedPolicy) -> float:
    """Fractional serialized-size reduction of ``quantized`` relative to ``float_policy``."""
    return 1.0 - len(quantized.to_bytes()) / len(float_policy.to_bytes())
