"""Counter-based random streams.

Every variate is a pure function of ``(seed, label, position)``: the seed and
label path are hashed into a Philox key and ``position`` indexes the raw
64-bit output words.  Normals are produced by inverse-CDF so that one raw word
maps to exactly one variate, which keeps positions meaningful and replay exact.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

_TWO_M53 = 2.0**-53
_local = threading.local()


def _generator() -> np.random.Philox:
    # one re-keyed generator per thread; constructing a fresh one is slow
    gen = getattr(_local, "gen", None)
    if gen is None:
        gen = _local.gen = np.random.Philox(0)
    return gen


def _key(seed: int, label: tuple[str, ...]) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    for part in label:
        enc = part.encode("utf-8")
        h.update(struct.pack("<I", len(enc)))
        h.update(enc)
    return np.frombuffer(h.digest(), dtype=np.uint64).copy()


@dataclass
class Stream:
    """A seekable sub-stream of uniforms and standard normals.

    Only ``position`` changes after construction.  A stream must not be shared
    between workers; hand each worker its own :func:`substream`.
    """

    seed: int
    label: tuple[str, ...] = ()
    position: int = 0
    _key: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self._key = _key(self.seed, self.label)

    def clone(self) -> "Stream":
        return Stream(self.seed, self.label, self.position)

    def _raw(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("block size must be at least 1")
        gen = _generator()
        # Philox emits 4 words per counter value
        gen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([self.position // 4, 0, 0, 0], dtype=np.uint64),
                      "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        skip = self.position % 4
        if skip:
            gen.random_raw(skip)
        out = gen.random_raw(n)
        self.position += n
        return out

    def uniform(self, n: int) -> np.ndarray:
        # 53-bit mantissa shifted by half a step: never exactly 0 or 1
        raw = self._raw(n)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def normal(self, n: int) -> np.ndarray:
        return ndtri(self.uniform(n))

    def substream(self, label) -> "Stream":
        label = str(label)
        if not label:
            raise ValueError("substream label must be non-empty")
        return Stream(self.seed, self.label + (label,))


def new_stream(seed: int) -> Stream:
    return Stream(int(seed))


def draw_normal_block(s: Stream, n: int) -> np.ndarray:
    return s.normal(n)


def draw_uniform_block(s: Stream, n: int) -> np.ndarray:
    return s.uniform(n)


def substream(s: Stream, label) -> Stream:
    return s.substream(label)


@dataclass
class RandomInputs:
    """The base variates that fully determine one SMC run.

    ``v_x`` has shape ``(T, N)`` (or ``(T, N, d)`` for ``d``-dimensional
    states) and holds standard-normal deviates; ``v_a`` has shape ``(T-1, N)``
    and holds uniforms strictly inside ``(0, 1)``.
    """

    v_x: np.ndarray
    v_a: np.ndarray

    def __post_init__(self):
        self.v_x = np.asarray(self.v_x, dtype=np.float64)
        self.v_a = np.asarray(self.v_a, dtype=np.float64)
        T, N = self.v_x.shape[:2]
        if self.v_a.shape != (T - 1, N):
            raise ValueError(f"v_a has shape {self.v_a.shape}, expected {(T - 1, N)}")
        if self.v_a.size and not (np.all(self.v_a > 0.0) and np.all(self.v_a < 1.0)):
            raise ValueError("resampling variates must lie strictly inside (0, 1)")

    @property
    def T(self) -> int:
        return self.v_x.shape[0]

    @property
    def N(self) -> int:
        return self.v_x.shape[1]

    def copy(self) -> "RandomInputs":
        return RandomInputs(self.v_x.copy(), self.v_a.copy())


def draw_inputs(s: Stream, T: int, N: int, state_dim: int = 1) -> RandomInputs:
    """Fresh iid inputs: N(0,1) state variates, U(0,1) resampling variates."""
    shape = (T, N) if state_dim == 1 else (T, N, state_dim)
    v_x = s.normal(int(np.prod(shape))).reshape(shape)
    v_a = s.uniform((T - 1) * N).reshape(T - 1, N) if T > 1 else np.empty((0, N))
    return RandomInputs(v_x, v_a)
