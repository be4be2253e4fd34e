"""Actor-critic MLP with tanh-squashed Gaussian action heads.

The network maps a normalized 3-vector observation to four action means
(pitch, roll, yaw, throttle) and a scalar value estimate. Hidden layers are
shared between the two heads. The action standard deviation is a learned,
state-independent vector.

Parameters live in a single read-only float64 vector; layers are views into
it. Training code works on that flat vector and builds a new ``Policy`` for
every update, so a policy object never changes after construction.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from numba import njit

MAGIC = b"PDLN"
FORMAT_VERSION = 1
DTYPE_FLOAT64 = 0
DTYPE_INT8 = 1

LOG_2PI = math.log(2.0 * math.pi)
ACTION_EPS = 1e-6
_ACTIVATIONS = {"tanh": 0}
_HEADER = struct.Struct("<4sHBB")


class PolicyFormatError(ValueError):
    """Raised for corrupt, truncated or version-mismatched model payloads."""


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 3
    hidden: Tuple[int, ...] = (64, 64)
    action_dim: int = 4
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim <= 0 or self.action_dim <= 0 or not self.hidden or min(self.hidden) <= 0:
            raise ValueError(f"bad architecture {self}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")

    def layer_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Named parameter shapes in storage order. Weights are (fan_in, fan_out)."""
        shapes = []
        fan_in = self.input_dim
        for i, width in enumerate(self.hidden):
            shapes.append((f"w{i}", (fan_in, width)))
            shapes.append((f"b{i}", (width,)))
            fan_in = width
        shapes += [
            ("w_mu", (fan_in, self.action_dim)),
            ("b_mu", (self.action_dim,)),
            ("w_v", (fan_in, 1)),
            ("b_v", (1,)),
            ("log_std", (self.action_dim,)),
        ]
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layer_shapes())

    def pack(self) -> bytes:
        fields = [self.input_dim, len(self.hidden), *self.hidden, self.action_dim]
        return struct.pack("<B", _ACTIVATIONS[self.activation]) + struct.pack(f"<{len(fields)}H", *fields)

    @classmethod
    def unpack(cls, buf: bytes, offset: int) -> Tuple["Architecture", int]:
        try:
            (act,) = struct.unpack_from("<B", buf, offset)
            input_dim, n_hidden = struct.unpack_from("<2H", buf, offset + 1)
            hidden = struct.unpack_from(f"<{n_hidden}H", buf, offset + 5)
            (action_dim,) = struct.unpack_from("<H", buf, offset + 5 + 2 * n_hidden)
        except struct.error as exc:
            raise PolicyFormatError(f"truncated architecture descriptor: {exc}") from None
        names = {v: k for k, v in _ACTIVATIONS.items()}
        if act not in names:
            raise PolicyFormatError(f"unknown activation code {act}")
        try:
            arch = cls(input_dim, hidden, action_dim, names[act])
        except ValueError as exc:
            raise PolicyFormatError(str(exc)) from None
        return arch, offset + 7 + 2 * n_hidden


@dataclass(frozen=True, eq=False)
class ActionDistribution:
    """Diagonal Gaussian over pre-squash actions."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if not np.all(self.std > 0):
            raise ValueError("std must be positive")

    def mode(self) -> np.ndarray:
        """Deterministic action used at deployment."""
        return np.tanh(self.mean)


def squash_log_det(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|. Sums over the last axis."""
    u = np.asarray(u, dtype=float)
    return np.sum(2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)), axis=-1)


def gaussian_log_prob(mean, log_std, u) -> np.ndarray:
    """Diagonal Gaussian log-density of pre-squash ``u``, summed over the last axis."""
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def log_prob(dist: ActionDistribution, action) -> float:
    """Log-density of a squashed action.

    Components are clamped to ``±(1 - 1e-6)`` before ``atanh`` so that
    saturated actions give a finite (very negative or very large) value.
    """
    a = np.clip(np.asarray(action, dtype=float), -1.0 + ACTION_EPS, 1.0 - ACTION_EPS)
    u = np.arctanh(a)
    log_std = np.log(dist.std)
    return float(gaussian_log_prob(dist.mean, log_std, u) - np.sum(np.log1p(-a * a)))


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """Draw a squashed action and its log-probability."""
    u = dist.mean + dist.std * rng.standard_normal(dist.mean.shape)
    a = np.tanh(u)
    # keep strictly inside (-1, 1) so log_prob agrees with the draw
    a = np.clip(a, -1.0 + ACTION_EPS, 1.0 - ACTION_EPS)
    return a, log_prob(dist, a)


@njit(cache=True, fastmath={"nsz", "arcp", "contract", "afn", "reassoc"})
def _mlp_forward(obs, params, hidden, n_act, out):
    """Single-observation forward pass over the flat parameter layout.

    ``out`` receives the ``n_act`` action means followed by the value.
    Returns False, leaving ``out`` untouched, if ``obs`` is not finite.
    """
    for i in range(obs.shape[0]):
        if not np.isfinite(obs[i]):
            return False
    h = obs.copy()
    pos = 0
    fan_in = obs.shape[0]
    for width in hidden:
        bias = pos + fan_in * width
        z = params[bias:bias + width].copy()
        for i in range(fan_in):
            hi = h[i]
            row = pos + i * width
            for j in range(width):
                z[j] += hi * params[row + j]
        for j in range(width):
            z[j] = math.tanh(z[j])
        pos = bias + width
        fan_in = width
        h = z
    bias = pos + fan_in * n_act
    for j in range(n_act):
        acc = params[bias + j]
        for i in range(fan_in):
            acc += h[i] * params[pos + i * n_act + j]
        out[j] = acc
    pos = bias + n_act
    acc = params[pos + fan_in]
    for i in range(fan_in):
        acc += h[i] * params[pos + i]
    out[n_act] = acc
    return True


def _check_obs(obs: np.ndarray, input_dim: int) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != input_dim:
        raise ValueError(f"observation must have {input_dim} components, got shape {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("non-finite observation")
    return obs


class Policy:
    """Immutable actor-critic network."""

    def __init__(self, arch: Architecture, params: np.ndarray):
        params = np.array(params, dtype=np.float64)
        if params.shape != (arch.n_params(),):
            raise ValueError(f"expected {arch.n_params()} parameters, got shape {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("non-finite policy parameters")
        params.setflags(write=False)
        self.arch = arch
        self.params = params
        self.layers: Dict[str, np.ndarray] = {}
        self.slices: Dict[str, slice] = {}
        pos = 0
        for name, shape in arch.layer_shapes():
            n = int(np.prod(shape))
            self.slices[name] = slice(pos, pos + n)
            self.layers[name] = params[pos:pos + n].reshape(shape)
            pos += n
        self._hidden = [(self.layers[f"w{i}"], self.layers[f"b{i}"]) for i in range(len(arch.hidden))]
        self._head_w = np.concatenate([self.layers["w_mu"], self.layers["w_v"]], axis=1)
        self._head_b = np.concatenate([self.layers["b_mu"], self.layers["b_v"]])
        self.std = np.exp(self.layers["log_std"])
        if not np.all(self.std > 0):
            raise ValueError("log_std underflows to a zero standard deviation")
        self.std.setflags(write=False)
        self._hidden_sizes = np.array(arch.hidden, dtype=np.int64)

    @classmethod
    def init(cls, arch: Architecture = Architecture(), seed: int = 0, log_std: float = -0.5,
             mean_gain: float = 0.01) -> "Policy":
        """Scaled-Gaussian initialization with a near-zero action head."""
        rng = np.random.default_rng(seed)
        parts = []
        for name, shape in arch.layer_shapes():
            if name.startswith("b"):
                parts.append(np.zeros(shape))
            elif name == "log_std":
                parts.append(np.full(shape, log_std))
            else:
                gain = mean_gain if name == "w_mu" else 1.0
                parts.append(rng.standard_normal(shape) * gain / math.sqrt(shape[0]))
        return cls(arch, np.concatenate([p.ravel() for p in parts]))

    def with_params(self, params: np.ndarray) -> "Policy":
        return Policy(self.arch, params)

    @property
    def log_std(self) -> np.ndarray:
        return self.layers["log_std"]

    # -- inference -----------------------------------------------------------------
    def forward(self, obs) -> Tuple[ActionDistribution, float]:
        """Action distribution and value estimate for one observation."""
        h = np.asarray(obs, dtype=np.float64)
        if h.shape != (self.arch.input_dim,):
            raise ValueError(f"forward takes one observation of shape ({self.arch.input_dim},), got {h.shape}")
        out = np.empty(self.arch.action_dim + 1)
        if not _mlp_forward(h, self.params, self._hidden_sizes, self.arch.action_dim, out):
            raise ValueError("non-finite observation")
        # std was validated at construction; skip the per-call check
        dist = object.__new__(ActionDistribution)
        object.__setattr__(dist, "mean", out[:-1])
        object.__setattr__(dist, "std", self.std)
        return dist, float(out[-1])

    def act(self, obs) -> np.ndarray:
        """Deterministic (mean) action."""
        return self.forward(obs)[0].mode()

    def forward_batch(self, obs) -> Tuple[np.ndarray, np.ndarray, list]:
        """Means (N, A), values (N,) and the activation cache for ``backward``."""
        h = _check_obs(obs, self.arch.input_dim)
        if h.ndim != 2:
            raise ValueError("forward_batch takes an (N, input_dim) array")
        cache = [h]
        for w, b in self._hidden:
            h = np.tanh(h @ w + b)
            cache.append(h)
        out = h @ self._head_w + self._head_b
        return out[:, :-1], out[:, -1], cache

    def backward(self, cache: list, g_mean: np.ndarray, g_value: np.ndarray,
                 g_log_std: Optional[np.ndarray] = None) -> np.ndarray:
        """Flat gradient given upstream gradients on the batch means and values."""
        grad = np.zeros_like(self.params)
        top = cache[-1]
        g_out = np.concatenate([g_mean, g_value[:, None]], axis=1)
        a = self.arch.action_dim
        g_w = top.T @ g_out
        g_b = g_out.sum(axis=0)
        grad[self.slices["w_mu"]] = g_w[:, :a].ravel()
        grad[self.slices["w_v"]] = g_w[:, a:].ravel()
        grad[self.slices["b_mu"]] = g_b[:a]
        grad[self.slices["b_v"]] = g_b[a:]
        g_h = g_out @ self._head_w.T
        for i in range(len(self._hidden) - 1, -1, -1):
            h = cache[i + 1]
            g_z = g_h * (1.0 - h * h)
            grad[self.slices[f"w{i}"]] = (cache[i].T @ g_z).ravel()
            grad[self.slices[f"b{i}"]] = g_z.sum(axis=0)
            if i:
                g_h = g_z @ self._hidden[i][0].T
        if g_log_std is not None:
            grad[self.slices["log_std"]] = g_log_std
        return grad

    # -- serialization ---------------------------------------------------------------
    def to_bytes(self) -> bytes:
        """Header, architecture descriptor, then row-major little-endian float64 tensors."""
        return (_HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT64, 0) + self.arch.pack()
                + self.params.astype("<f8").tobytes())

    def __eq__(self, other):
        return isinstance(other, Policy) and self.arch == other.arch and np.array_equal(self.params, other.params)

    __hash__ = None


def read_header(buf: bytes) -> Tuple[int, Architecture, int]:
    """Validate the common header. Returns (dtype flag, architecture, payload offset)."""
    if len(buf) < _HEADER.size:
        raise PolicyFormatError("payload too short for a model header")
    magic, version, dtype, _ = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise PolicyFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise PolicyFormatError(f"unsupported model format version {version}")
    if dtype not in (DTYPE_FLOAT64, DTYPE_INT8):
        raise PolicyFormatError(f"unknown dtype flag {dtype}")
    arch, offset = Architecture.unpack(buf, _HEADER.size)
    return dtype, arch, offset


def write_header(dtype: int, arch: Architecture) -> bytes:
    return _HEADER.pack(MAGIC, FORMAT_VERSION, dtype, 0) + arch.pack()


def save(policy) -> bytes:
    return policy.to_bytes()


def load(buf: bytes):
    """Load a float or quantized policy from its serialized bytes."""
    buf = bytes(buf)
    dtype, arch, offset = read_header(buf)
    if dtype == DTYPE_INT8:
        from .compress import QuantizedPolicy

        return QuantizedPolicy.from_payload(arch, buf, offset)
    expected = offset + 8 * arch.n_params()
    if len(buf) != expected:
        raise PolicyFormatError(f"float payload has {len(buf)} bytes, expected {expected}")
    params = np.frombuffer(buf, dtype="<f8", offset=offset).astype(np.float64)
    try:
        return Policy(arch, params)
    except ValueError as exc:
        raise PolicyFormatError(str(exc)) from None


def save_file(policy, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save(policy))


def load_file(path):
    with open(path, "rb") as fh:
        return load(fh.read())
