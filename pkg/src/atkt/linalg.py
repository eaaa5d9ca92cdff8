"""Dense float64 vector/matrix primitives and the seeded RNG used everywhere else.

Vectors are 1-D and matrices are 2-D row-major ``numpy.float64`` arrays. There
is no broadcasting anywhere in this package: every shape is checked explicitly
so that the hand-written backward passes cannot hide a silent shape bug.
"""

from __future__ import annotations

import hashlib

import numpy as np

FLOAT = np.float64


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes."""


def vec(values) -> np.ndarray:
    """Build a 1-D float64 vector from any sequence of numbers."""
    v = np.asarray(values, dtype=FLOAT)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def mat(values) -> np.ndarray:
    """Build a 2-D row-major float64 matrix from nested sequences."""
    m = np.asarray(values, dtype=FLOAT)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return np.ascontiguousarray(m)


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def affine(w: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``w @ x + b`` with explicit shape validation."""
    if w.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(
            f"affine expects (matrix, vector, vector), got shapes "
            f"{w.shape}, {x.shape}, {b.shape}"
        )
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"affine: matrix is {w.shape} but input vector has length {x.shape[0]}")
    if w.shape[0] != b.shape[0]:
        raise ShapeError(f"affine: matrix is {w.shape} but bias has length {b.shape[0]}")
    return w @ x + b


def softmax(v: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax of a vector (max-subtraction trick)."""
    if v.size == 0:
        raise ShapeError("softmax of an empty vector is undefined")
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm of ``v`` flattened."""
    return float(np.sqrt(np.sum(np.asarray(v, dtype=FLOAT) ** 2)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise.

    Uses the branch form 1/(1+e^-x) for x >= 0 and e^x/(1+e^x) for x < 0 so
    the exponential argument is never positive.
    """
    x = np.asarray(x, dtype=FLOAT)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=FLOAT))


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid}


def elementwise(name: str, v: np.ndarray) -> np.ndarray:
    """Apply a named nonlinearity ('tanh' or 'sigmoid') entrywise."""
    try:
        fn = _ELEMENTWISE[name]
    except KeyError:
        raise ValueError(f"unknown elementwise function {name!r}") from None
    return fn(v)


class Rng:
    """Deterministic random stream, splittable by label.

    Backed by numpy's PCG64 bit generator (pinned; do not change across
    releases, reruns depend on it). A child stream derived with
    ``split(label)`` is statistically independent of its parent and of
    siblings with different labels, and depends only on the root seed and the
    sequence of labels used to reach it.
    """

    ALGORITHM = "pcg64-v1"

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def split(self, label: str) -> "Rng":
        """Derive an independent child stream named by ``label``."""
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        key = int.from_bytes(digest[:8], "big")
        return Rng(self.seed, self._path + (key,))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def random(self, size=None):
        return self._gen.random(size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size=size)
