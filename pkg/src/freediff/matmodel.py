"""Hermitian matrix models standing in for free semicircular systems.

A matrix tuple is an ``(m, N, N)`` complex array (leading batch axes are
allowed wherever noted).  Free Brownian motion is approximated by Hermitian
Brownian motion: each entry of an increment over ``dt`` has variance
``dt / N``, so ``tr_N(dS^2)`` concentrates at ``dt``.
"""

from __future__ import annotations

import numpy as np


class MatrixError(ValueError):
    pass


class RngStream:
    """Seeded Gaussian source; one owner per stream.

    Streams for parallel replicas are derived from ``(seed, replica)`` so
    each replica is reproducible on its own.
    """

    def __init__(self, seed: int, replica: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise MatrixError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.replica = int(replica)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.replica]))
        )

    def replica_stream(self, replica: int) -> "RngStream":
        return RngStream(self.seed, replica)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    @property
    def counter(self) -> dict:
        return self._gen.bit_generator.state


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _gue(shape, n: int, rng: RngStream) -> np.ndarray:
    """Hermitian matrices with unit-variance entries (diagonal real)."""
    g = rng.normal(tuple(shape) + (n, n, 2))
    z = g[..., 0] + 1j * g[..., 1]
    return hermitize(z)


def brownian_increment(m: int, n: int, dt: float, rng: RngStream) -> np.ndarray:
    """Increment of ``m`` independent N x N Hermitian Brownian motions over ``dt``."""
    if not dt > 0:
        raise MatrixError(f"dt must be positive, got {dt}")
    if n < 1 or m < 1:
        raise MatrixError(f"need m, N >= 1, got m={m}, N={n}")
    return _gue((m,), n, rng) * np.sqrt(dt / n)


def gue_tuple(m: int, n: int, rng: RngStream) -> np.ndarray:
    """Unscaled sample: spectrum approaches the semicircle on [-2, 2]."""
    return brownian_increment(m, n, 1.0, rng)


def op_norm(a: np.ndarray) -> np.ndarray:
    """Spectral norm of Hermitian matrices (broadcast over leading axes)."""
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise MatrixError("non-finite entries")
    ev = np.linalg.eigvalsh(a)
    return np.max(np.abs(ev), axis=-1)


def tuple_norm(x: np.ndarray) -> np.ndarray:
    """Max over the tuple axis of operator norms."""
    return np.max(op_norm(x), axis=-1)


def ntrace(a: np.ndarray) -> np.ndarray:
    """Normalized trace ``(1/N) Tr``."""
    a = np.asarray(a)
    return np.trace(a, axis1=-2, axis2=-1) / a.shape[-1]


def dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``X.Y = 1/2 sum_i (X_i Y_i^* + Y_i X_i^*)`` for tuples ``(..., m, N, N)``."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise MatrixError(f"shape mismatch {x.shape} vs {y.shape}")
    xy = np.sum(x @ np.conj(np.swapaxes(y, -1, -2)), axis=-3)
    yx = np.sum(y @ np.conj(np.swapaxes(x, -1, -2)), axis=-3)
    # both orders, so swapping X and Y gives a bit-identical result
    return hermitize(0.5 * (xy + yx))


def random_selfadjoint_tuple(m: int, n: int, bound: float, rng: RngStream) -> np.ndarray:
    """Hermitian tuple whose tuple norm is uniform on ``(0, bound]``."""
    if not bound > 0:
        raise MatrixError(f"bound must be positive, got {bound}")
    x = gue_tuple(m, n, rng)
    u = 1.0 - rng.uniform()
    return x * (u * bound / tuple_norm(x))


def scale_to_norm(x: np.ndarray, norm: float) -> np.ndarray:
    """Rescale a nonzero tuple so its tuple norm equals ``norm``."""
    cur = tuple_norm(x)
    if cur == 0:
        raise MatrixError("cannot rescale the zero tuple")
    return x * (norm / cur)


def is_hermitian(x: np.ndarray, tol: float = 1e-12) -> bool:
    x = np.asarray(x)
    return bool(np.max(np.abs(x - np.conj(np.swapaxes(x, -1, -2))), initial=0.0) <= tol)
