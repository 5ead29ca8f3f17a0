"""Sampling-based certifier/refuter for (c, M)-convexity of a potential.

For tuples ``X, Y`` with tuple norm at most ``M`` the gap matrix is

    G = (DV(X) - DV(Y)).(X - Y) - c (X - Y).(X - Y)

and the inequality holds at the pair iff ``G >= 0``.  ``mode="operator"``
scores a pair by the smallest eigenvalue of ``G``; ``mode="trace"`` scores it
by ``tr_N G``, the weaker form that controls the squared trace distance
between coupled solutions.

A refutation comes with a re-checkable witness pair.  A certificate only
means no sampled pair violated the inequality beyond tolerance.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import matmodel as mm
from .ncpoly import NCPoly, evaluate, gradient
from .polylang import print_poly

CERTIFIED = "certified-at-tolerance"
REFUTED = "refuted"


def _grad_values(grad, x: np.ndarray) -> np.ndarray:
    return np.stack([evaluate(g, x) for g in grad], axis=-3)


def _gap_matrices(potential: NCPoly, x, y, grad=None):
    grad = grad if grad is not None else gradient(potential)
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if x.shape != y.shape:
        raise mm.MatrixError(f"shape mismatch {x.shape} vs {y.shape}")
    d = x - y
    a = _grad_values(grad, x) - _grad_values(grad, y)
    return mm.dot(a, d), mm.dot(d, d)


def _score(g: np.ndarray, mode: str) -> np.ndarray:
    if mode == "operator":
        return np.linalg.eigvalsh(g)[..., 0]
    if mode == "trace":
        return mm.ntrace(g).real
    raise ValueError(f"unknown mode {mode!r}")


def convexity_gap(potential: NCPoly, x, y, c: float, mode: str = "operator"):
    """Smallest eigenvalue (or normalized trace) of the gap matrix.

    Broadcasts over leading batch axes of ``x`` and ``y``.
    """
    p, q = _gap_matrices(potential, x, y)
    return _score(mm.hermitize(p - c * q), mode)


@dataclass
class ConvexityReport:
    potential: str
    c: float
    M_bound: float
    N: int
    mode: str
    trials: int
    min_gap: float
    tolerance: float
    verdict: str
    witness: Optional[tuple] = field(default=None, repr=False)
    witness_gap: Optional[float] = None

    @property
    def refuted(self) -> bool:
        return self.verdict == REFUTED

    def as_dict(self) -> dict:
        doc = {
            "potential": self.potential, "c": self.c, "M_bound": self.M_bound,
            "N": self.N, "mode": self.mode, "trials": self.trials,
            "min_gap": self.min_gap, "tolerance": self.tolerance,
            "verdict": self.verdict, "witness": None,
        }
        if self.witness is not None:
            doc["witness"] = {
                "gap": self.witness_gap,
                "X": _snapshot_doc(self.witness[0]),
                "Y": _snapshot_doc(self.witness[1]),
            }
        return doc

    def to_json(self, path=None) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def _snapshot_doc(x: np.ndarray) -> dict:
    raw = np.ascontiguousarray(x, dtype="<c8").tobytes()
    return {"m": int(x.shape[-3]), "N": int(x.shape[-1]), "dtype": "<c8",
            "shape": list(x.shape), "order": "C",
            "data_base64": base64.b64encode(raw).decode("ascii")}


def witness_from_doc(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data_base64"])
    return np.frombuffer(raw, dtype="<c8").reshape(doc["shape"]).astype(np.complex128)


def _unit_direction(m: int, n: int, rng: mm.RngStream) -> np.ndarray:
    h = mm.gue_tuple(m, n, rng)
    return h / mm.tuple_norm(h)


def sample_pairs(m: int, n: int, M_bound: float, count: int, rng: mm.RngStream,
                 eps: Optional[float] = None, start: int = 0):
    """Pairs cycling through three kinds: independent, perturbed, boundary.

    Perturbed pairs are ``Y = X + eps * H`` with ``||H|| = 1`` and
    ``||X|| <= M - eps``; boundary pairs have both norms equal to ``M``.
    """
    eps = 1e-3 * M_bound if eps is None else eps
    xs = np.empty((count, m, n, n), dtype=np.complex128)
    ys = np.empty_like(xs)
    for j in range(count):
        kind = (start + j) % 3
        if kind == 0:
            xs[j] = mm.random_selfadjoint_tuple(m, n, M_bound, rng)
            ys[j] = mm.random_selfadjoint_tuple(m, n, M_bound, rng)
        elif kind == 1:
            xs[j] = mm.random_selfadjoint_tuple(m, n, M_bound - eps, rng)
            ys[j] = xs[j] + eps * _unit_direction(m, n, rng)
        else:
            xs[j] = mm.scale_to_norm(mm.gue_tuple(m, n, rng), M_bound)
            ys[j] = mm.scale_to_norm(mm.gue_tuple(m, n, rng), M_bound)
    return xs, ys


def certify(potential: NCPoly, c: float, M_bound: float, trials: int, N: int,
            rng: mm.RngStream, mode: str = "operator", eps: Optional[float] = None,
            batch: int = 500) -> ConvexityReport:
    """Search for pairs violating the convexity inequality.

    Refutes iff some sampled gap is below ``-1e-8 * max(1, M_bound**2)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = potential.nvars
    grad = gradient(potential)
    tol = 1e-8 * max(1.0, M_bound ** 2)
    best = np.inf
    best_pair = None
    done = 0
    while done < trials:
        count = min(batch, trials - done)
        xs, ys = sample_pairs(m, N, M_bound, count, rng, eps=eps, start=done)
        p, q = _gap_matrices(potential, xs, ys, grad)
        gaps = _score(mm.hermitize(p - c * q), mode)
        j = int(np.argmin(gaps))
        if gaps[j] < best:
            best = float(gaps[j])
            best_pair = (xs[j].copy(), ys[j].copy())
        done += count
    refuted = best < -tol
    return ConvexityReport(
        potential=print_poly(potential), c=c, M_bound=M_bound, N=N, mode=mode,
        trials=trials, min_gap=best, tolerance=tol,
        verdict=REFUTED if refuted else CERTIFIED,
        witness=best_pair if refuted else None,
        witness_gap=best if refuted else None,
    )


def estimate_constant(potential: NCPoly, M_bound: float, trials: int, N: int,
                      rng: mm.RngStream, mode: str = "trace", lo: float = -10.0,
                      hi: float = 10.0, iters: int = 60) -> float:
    """Largest ``c`` in ``[lo, hi]`` that no sampled pair refutes.

    Returns ``-inf`` when even ``lo`` is refuted.  The gap is decreasing in
    ``c`` for every pair, so bisection on the sampled minimum is valid.
    """
    m = potential.nvars
    grad = gradient(potential)
    tol = 1e-8 * max(1.0, M_bound ** 2)
    xs, ys = sample_pairs(m, N, M_bound, trials, rng)
    p, q = _gap_matrices(potential, xs, ys, grad)

    def ok(c):
        return bool(np.min(_score(mm.hermitize(p - c * q), mode)) >= -tol)

    if not ok(lo):
        return float("-inf")
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
