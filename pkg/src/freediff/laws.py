"""Empirical tracial laws and Schwinger-Dyson residuals.

An :class:`EmpiricalLaw` holds matrix-tuple samples grouped by replica.
Point estimates average ``tr_N(P(X))`` over all samples; standard errors
come from the scatter of per-replica means.  The product functional
``mu (x) mu`` is the product of averages.

Every estimator returns an :class:`Estimate` carrying its per-replica
linearization, so sums and products of estimates propagate error to first
order without assuming independence between moments.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import matmodel as mm
from .ncpoly import DomainError, DimensionError, Letter, NCPoly, TensorPoly, cyclic_grad, diff_quot
from .polylang import print_poly


class LawError(RuntimeError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: complex
    stderr: float
    replica_terms: np.ndarray = field(repr=False, compare=False, default=None)

    def __abs__(self) -> float:
        return abs(self.value)


def _make_estimate(value: complex, terms: np.ndarray) -> Estimate:
    r = len(terms)
    if r < 2:
        se = 0.0
    else:
        se = float(np.sqrt(np.sum(np.abs(terms - terms.mean()) ** 2) / (r - 1) / r))
    return Estimate(complex(value), se, terms)


class EmpiricalLaw:
    """Finite-sample estimator of a tracial law from matrix-tuple samples.

    ``replicas`` is a list of arrays shaped ``(n_samples, m, N, N)``; every
    replica must hold the same number of samples.
    """

    def __init__(self, replicas: Sequence[np.ndarray], metadata: Optional[dict] = None):
        reps = [np.asarray(r, dtype=np.complex128) for r in replicas]
        if not reps or any(len(r) == 0 for r in reps):
            raise LawError("empirical law needs at least one nonempty replica")
        shape = reps[0].shape
        if any(r.shape != shape for r in reps):
            raise LawError("replicas must share (n_samples, m, N, N)")
        if len(shape) != 4 or shape[-1] != shape[-2]:
            raise LawError(f"replica arrays must be (n, m, N, N), got {shape}")
        self._data = np.stack(reps)  # (R, S, m, N, N)
        self.metadata = dict(metadata or {})
        self._cache: dict = {}

    @classmethod
    def from_trajectories(cls, trajs, metadata: Optional[dict] = None) -> "EmpiricalLaw":
        trajs = list(trajs)
        reps = [np.stack([x for _, x in t.snapshots]) for t in trajs if t.snapshots]
        if len(reps) != len(trajs):
            raise LawError("every trajectory needs snapshots")
        return cls(reps, metadata)

    @classmethod
    def from_samples(cls, samples: Iterable[np.ndarray], metadata: Optional[dict] = None) -> "EmpiricalLaw":
        return cls([np.stack(list(samples))], metadata)

    @property
    def m(self) -> int:
        return self._data.shape[-3]

    @property
    def N(self) -> int:
        return self._data.shape[-1]

    @property
    def n_replicas(self) -> int:
        return self._data.shape[0]

    @property
    def n_samples(self) -> int:
        return self._data.shape[0] * self._data.shape[1]

    def replica_moments(self, p: NCPoly) -> np.ndarray:
        """Per-replica mean of ``tr_N(P(X))``."""
        if p.nvars != self.m:
            raise DimensionError(f"polynomial has {p.nvars} variables, law has {self.m}")
        words = [w for w, _ in p]
        self._ensure_words(words)
        out = np.zeros(self.n_replicas, dtype=complex)
        for w, c in p:
            out = out + c * self._cache[w]
        return out

    def _ensure_words(self, words) -> None:
        missing = sorted({w for w in words if w not in self._cache}, key=lambda w: (len(w), w))
        if not missing:
            return
        results = {w: np.empty(self.n_replicas, dtype=complex) for w in missing}
        for r in range(self.n_replicas):
            x = self._data[r]  # (S, m, N, N)
            mats: dict = {}

            def value(w):
                if w not in mats:
                    l = w[-1]
                    a = x[:, l.index - 1]
                    if l.starred:
                        a = np.conj(np.swapaxes(a, -1, -2))
                    mats[w] = a if len(w) == 1 else value(w[:-1]) @ a
                return mats[w]

            for w in missing:
                if not w:
                    results[w][r] = 1.0
                    continue
                h = (len(w) + 1) // 2
                u, v = w[:h], w[h:]
                if v:
                    tr = np.einsum("sij,sji->s", value(u), value(v)) / self.N
                else:
                    tr = np.trace(value(u), axis1=-2, axis2=-1) / self.N
                results[w][r] = tr.mean()
        self._cache.update(results)


def moment(law: EmpiricalLaw, p: NCPoly) -> Estimate:
    terms = law.replica_moments(p)
    return _make_estimate(terms.mean(), terms)


def tensor_moment(law: EmpiricalLaw, t: TensorPoly) -> Estimate:
    """``sum_j mu(Q_j) mu(R_j)`` with delta-method error bars."""
    value = 0j
    lin = np.zeros(law.n_replicas, dtype=complex)
    for a, b in t:
        ra, rb = law.replica_moments(a), law.replica_moments(b)
        ma, mb = ra.mean(), rb.mean()
        value += ma * mb
        lin += ra * mb + ma * rb
    return _make_estimate(value, lin)


def _combine(parts: Sequence[tuple[complex, Estimate]], n_replicas: int) -> Estimate:
    value = 0j
    lin = np.zeros(n_replicas, dtype=complex)
    for w, e in parts:
        value += w * e.value
        lin += w * e.replica_terms
    return _make_estimate(value, lin)


def _check_adjoint_free(*polys: NCPoly) -> None:
    for p in polys:
        if p.has_adjoints():
            raise DomainError(f"{print_poly(p)} contains adjoint letters")


def sd_residual_index(law: EmpiricalLaw, potential: NCPoly, p: NCPoly, i: int) -> Estimate:
    """``mu (x) mu(d_i P) - mu(D_i V . P)`` for one index ``i``."""
    _check_adjoint_free(potential, p)
    lhs = tensor_moment(law, diff_quot(p, i))
    rhs = moment(law, cyclic_grad(potential, i) * p)
    return _combine([(1, lhs), (-1, rhs)], law.n_replicas)


def sd_residual(law: EmpiricalLaw, potential: NCPoly, p: NCPoly) -> Estimate:
    """Schwinger-Dyson residual summed over indices.

    Zero for the stationary law; nonzero values measure departure from
    stationarity plus sampling and finite-N effects.
    """
    parts = [(1, sd_residual_index(law, potential, p, i)) for i in range(1, potential.nvars + 1)]
    return _combine(parts, law.n_replicas)


def sd_residual_thm2(law: EmpiricalLaw, potential: NCPoly, p: NCPoly) -> Estimate:
    """``sum_i [mu (x) mu(d_i D_i P) - mu(D_i V . D_i P)]``.

    Built from :func:`sd_residual_index` at ``D_i P`` so both forms share
    one arithmetic path.
    """
    _check_adjoint_free(potential, p)
    parts = [
        (1, sd_residual_index(law, potential, cyclic_grad(p, i), i))
        for i in range(1, potential.nvars + 1)
    ]
    return _combine(parts, law.n_replicas)


@dataclass
class ReportEntry:
    label: str
    estimate: complex
    stderr: float
    tolerance: float
    passed: bool
    target: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "polynomial": self.label,
            "estimate_re": self.estimate.real,
            "estimate_im": self.estimate.imag,
            "stderr": self.stderr,
            "target": self.target,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class MomentReport:
    kind: str
    entries: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list:
        return [e for e in self.entries if not e.passed]

    def to_json(self, path=None) -> str:
        doc = {"kind": self.kind, "metadata": self.metadata, "passed": self.passed,
               "entries": [e.as_dict() for e in self.entries]}
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["polynomial", "estimate_re", "estimate_im", "stderr", "target", "tolerance", "pass"])
        for e in self.entries:
            tgt = "" if e.target is None else f"{e.target:.17g}"
            w.writerow([e.label, f"{e.estimate.real:.17g}", f"{e.estimate.imag:.17g}",
                        f"{e.stderr:.17g}", tgt, f"{e.tolerance:.17g}", int(e.passed)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def monomials(nvars: int, degree: int) -> list[NCPoly]:
    """All adjoint-free monomials of exactly ``degree``, in canonical order."""
    letters = [Letter(i, False) for i in range(1, nvars + 1)]
    return [NCPoly.monomial(w, nvars) for w in itertools.product(letters, repeat=degree)]


def sd_residual_suite(law: EmpiricalLaw, potential: NCPoly, deg_max: int,
                      n_sigma: float = 3.0, abs_tol: float = 0.05) -> MomentReport:
    """Residuals for every monomial of degree ``1..deg_max``.

    An entry passes when ``|residual| < n_sigma * stderr + abs_tol``.
    """
    report = MomentReport("sd_residual", metadata={
        "potential": print_poly(potential), "deg_max": deg_max, "n_sigma": n_sigma,
        "abs_tol": abs_tol, "N": law.N, "replicas": law.n_replicas, **law.metadata})
    for d in range(1, deg_max + 1):
        for p in monomials(potential.nvars, d):
            r = sd_residual(law, potential, p)
            tol = n_sigma * r.stderr + abs_tol
            report.entries.append(ReportEntry(print_poly(p), r.value, r.stderr, tol,
                                              bool(abs(r.value) < tol), target=0.0))
    return report


def moment_bound_check(law: EmpiricalLaw, b0: float, k_max: int, n_sigma: float = 3.0) -> MomentReport:
    """Check ``mu(X_i^k) <= b0^k`` (even k) and ``|mu(X_i^k)| <= b0^k`` (odd k)."""
    if not b0 > 0:
        raise ValueError(f"B0 must be positive, got {b0}")
    report = MomentReport("moment_bound", metadata={"B0": b0, "k_max": k_max, "n_sigma": n_sigma,
                                                    "N": law.N, "replicas": law.n_replicas})
    for i in range(1, law.m + 1):
        for k in range(1, k_max + 1):
            p = NCPoly.var(i, law.m) ** k
            e = moment(law, p)
            bound = b0 ** k + n_sigma * e.stderr
            stat = e.value.real if k % 2 == 0 else abs(e.value)
            report.entries.append(ReportEntry(print_poly(p), e.value, e.stderr, bound,
                                              bool(stat <= bound), target=b0 ** k))
    return report
