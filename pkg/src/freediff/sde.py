"""Euler-Maruyama integration of ``dX = dS - 1/2 DV(X) dt`` on matrix tuples.

Single runs, coupled runs driven by one shared noise stream, and the
polynomial transport error between coupled runs.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import matmodel as mm
from .ncpoly import NCPoly, evaluate, gradient, is_self_adjoint
from .polylang import print_poly


class ConfigError(ValueError):
    pass


class BlowUpError(RuntimeError):
    """Non-finite state; ``t`` is the time of the failed step."""

    def __init__(self, t: float, partial: Optional["Trajectory"] = None):
        super().__init__(f"non-finite state at t={t:.17g}")
        self.t = t
        self.partial = partial


class DriftEvaluator:
    """Holds ``DV = (D_1 V, ..., D_m V)``, computed once."""

    def __init__(self, potential: NCPoly):
        self.potential = potential
        self.grad = gradient(potential)

    @property
    def nvars(self) -> int:
        return self.potential.nvars

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return drift(self, x)


def drift(ev: DriftEvaluator, x: np.ndarray) -> np.ndarray:
    """``1/2 DV(X)`` as a tuple with the same shape as ``x``."""
    parts = [evaluate(g, x) for g in ev.grad]
    return mm.hermitize(0.5 * np.stack(parts, axis=-3))


def em_step(x: np.ndarray, ev: DriftEvaluator, dt: float, ds: np.ndarray, t: float = float("nan")) -> np.ndarray:
    """One step ``X + dS - 1/2 DV(X) dt``, re-hermitized."""
    if x.shape != ds.shape:
        raise mm.MatrixError(f"state {x.shape} and increment {ds.shape} disagree")
    with np.errstate(over="ignore", invalid="ignore"):
        out = mm.hermitize(x + ds - drift(ev, x) * dt)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(t)
    return out


@dataclass
class SDEConfig:
    potential: NCPoly
    N: int
    dt: float
    t_max: float
    seed: int = 0
    replica: int = 0
    Z: Optional[np.ndarray] = None
    record_stride: int = 1
    M_cap: Optional[float] = None
    c: Optional[float] = None
    b: Optional[float] = None
    observables: Sequence[NCPoly] = ()
    snapshot_start: Optional[float] = None
    snapshot_every: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise ConfigError(f"t_max must be at least dt, got t_max={self.t_max}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.potential.has_adjoints():
            raise ConfigError("potential must be adjoint-free")
        if not is_self_adjoint(self.potential):
            raise ConfigError(f"potential {print_poly(self.potential)} is not self-adjoint")
        if self.Z is not None:
            self.Z = self._check_initial(self.Z)
        if not self.observables:
            self.observables = tuple(
                NCPoly.var(i, self.m) ** 2 for i in range(1, self.m + 1)
            )
        for p in self.observables:
            if p.nvars != self.m:
                raise ConfigError("observable arity differs from the potential")
        if (self.snapshot_every is None) != (self.snapshot_start is None):
            raise ConfigError("snapshot_start and snapshot_every go together")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            raise ConfigError("snapshot_every must be positive")

    def _check_initial(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        if z.shape != (self.m, self.N, self.N):
            raise ConfigError(f"Z must have shape {(self.m, self.N, self.N)}, got {z.shape}")
        if not mm.is_hermitian(z):
            raise ConfigError("Z must be Hermitian")
        if self.b is not None and not mm.tuple_norm(z) < self.b:
            raise ConfigError(f"||Z|| = {mm.tuple_norm(z):.6g} is not below b = {self.b}")
        return z

    @property
    def m(self) -> int:
        return self.potential.nvars

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def initial(self) -> np.ndarray:
        if self.Z is None:
            return np.zeros((self.m, self.N, self.N), dtype=np.complex128)
        return self.Z.copy()

    def snapshot_steps(self) -> set:
        if self.snapshot_every is None:
            return set()
        start = int(round(self.snapshot_start / self.dt))
        every = max(1, int(round(self.snapshot_every / self.dt)))
        return set(range(start, self.n_steps + 1, every))

    def observable_names(self) -> list[str]:
        return [f"tr[{print_poly(p)}]" for p in self.observables]


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    observables: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # (t, state)
    cap_violations: list = field(default_factory=list)
    noise_checksum: int = 0
    seed: int = 0
    replica: int = 0
    final: Optional[np.ndarray] = None

    @property
    def max_norm(self) -> float:
        return max(self.norms) if self.norms else float("nan")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.observables)
        w.writerow(["t", "norm_max"] + names)
        for k, t in enumerate(self.times):
            row = [t, self.norms[k]] + [self.observables[n][k] for n in names]
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def write_snapshot(path, x: np.ndarray, t: float, seed: int) -> tuple[Path, Path]:
    """Raw little-endian complex64 array plus a JSON sidecar."""
    path = Path(path)
    x = np.asarray(x)
    raw = path.with_suffix(".c64")
    side = path.with_suffix(".json")
    raw.write_bytes(np.ascontiguousarray(x, dtype="<c8").tobytes())
    meta = {"m": int(x.shape[-3]), "N": int(x.shape[-1]), "t": float(t), "seed": int(seed),
            "dtype": "<c8", "shape": list(x.shape), "order": "C"}
    side.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return raw, side


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.frombuffer(path.with_suffix(".c64").read_bytes(), dtype="<c8")
    return data.reshape(meta["shape"]).astype(np.complex128), meta


class _Recorder:
    def __init__(self, cfg: SDEConfig, traj: Trajectory):
        self.cfg = cfg
        self.traj = traj
        self.names = cfg.observable_names()
        for n in self.names:
            traj.observables[n] = []
        self.snaps = cfg.snapshot_steps()

    def __call__(self, k: int, x: np.ndarray, force: bool = False) -> Optional[float]:
        cfg, traj = self.cfg, self.traj
        if k in self.snaps:
            traj.snapshots.append((k * cfg.dt, x.copy()))
        if k % cfg.record_stride and not force:
            return None
        t = k * cfg.dt
        nrm = float(mm.tuple_norm(x))
        traj.times.append(t)
        traj.norms.append(nrm)
        for n, p in zip(self.names, cfg.observables):
            traj.observables[n].append(float(mm.ntrace(evaluate(p, x)).real))
        if cfg.M_cap is not None and nrm > cfg.M_cap:
            traj.cap_violations.append(t)
        return nrm


def _steps(cfg: SDEConfig) -> Iterator[tuple[int, np.ndarray]]:
    rng = mm.RngStream(cfg.seed, cfg.replica)
    for k in range(1, cfg.n_steps + 1):
        yield k, mm.brownian_increment(cfg.m, cfg.N, cfg.dt, rng)


def _checksum(crc: int, ds: np.ndarray) -> int:
    return zlib.crc32(ds.tobytes(), crc)


def simulate(cfg: SDEConfig) -> Trajectory:
    """Run from ``Z`` (or 0) to ``t_max``; record every ``record_stride`` steps."""
    ev = DriftEvaluator(cfg.potential)
    traj = Trajectory(seed=cfg.seed, replica=cfg.replica)
    rec = _Recorder(cfg, traj)
    x = cfg.initial()
    rec(0, x)
    last = cfg.n_steps
    for k, ds in _steps(cfg):
        traj.noise_checksum = _checksum(traj.noise_checksum, ds)
        try:
            x = em_step(x, ev, cfg.dt, ds, t=k * cfg.dt)
        except BlowUpError as exc:
            exc.partial = traj
            raise
        rec(k, x, force=(k == last))
    traj.final = x
    return traj


def _run_replica(args) -> Trajectory:
    cfg, replica = args
    from dataclasses import replace

    return simulate(replace(cfg, replica=replica))


def simulate_replicas(cfg: SDEConfig, replicas: int, workers: int = 1) -> list[Trajectory]:
    """Independent runs with streams ``(cfg.seed, r)``, ordered by ``r``."""
    jobs = [(cfg, r) for r in range(replicas)]
    if workers <= 1 or replicas == 1:
        return [_run_replica(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, replicas)) as pool:
        return list(pool.map(_run_replica, jobs))


@dataclass
class CoupledRun:
    run_z: Trajectory
    run_0: Trajectory
    times: np.ndarray
    distance: np.ndarray        # max_i ||X^Z_i - X^0_i||
    trace_distance: np.ndarray  # tr_N dot(X^Z - X^0, X^Z - X^0)
    extra: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.extra)
        w.writerow(["t", "dist_op", "dist_trace_sq", "norm_z", "norm_0"] + names)
        for k, t in enumerate(self.times):
            row = [t, self.distance[k], self.trace_distance[k],
                   self.run_z.norms[k], self.run_0.norms[k]] + [self.extra[n][k] for n in names]
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def _coupled(cfg: SDEConfig, z, hook: Optional[Callable] = None) -> CoupledRun:
    z = cfg._check_initial(z)
    ev = DriftEvaluator(cfg.potential)
    tz = Trajectory(seed=cfg.seed, replica=cfg.replica)
    t0 = Trajectory(seed=cfg.seed, replica=cfg.replica)
    rz, r0 = _Recorder(cfg, tz), _Recorder(cfg, t0)
    xz = z.copy()
    x0 = np.zeros_like(xz)
    dist, tdist = [], []

    def record(k, force=False):
        if rz(k, xz, force) is None:
            return
        r0(k, x0, force)
        diff = xz - x0
        dist.append(float(mm.tuple_norm(diff)))
        tdist.append(float(mm.ntrace(mm.dot(diff, diff)).real))
        if hook is not None:
            hook(k * cfg.dt, xz, x0)

    record(0)
    last = cfg.n_steps
    for k, ds in _steps(cfg):
        tz.noise_checksum = _checksum(tz.noise_checksum, ds)
        t0.noise_checksum = _checksum(t0.noise_checksum, ds)
        t = k * cfg.dt
        try:
            xz = em_step(xz, ev, cfg.dt, ds, t=t)
        except BlowUpError as exc:
            exc.partial = tz
            raise
        try:
            x0 = em_step(x0, ev, cfg.dt, ds, t=t)
        except BlowUpError as exc:
            exc.partial = t0
            raise
        record(k, force=(k == last))
    tz.final, t0.final = xz, x0
    return CoupledRun(tz, t0, np.asarray(tz.times), np.asarray(dist), np.asarray(tdist))


def coupled_simulate(cfg: SDEConfig, z) -> CoupledRun:
    """Runs from ``Z`` and from 0 driven by the same increments."""
    return _coupled(cfg, z)


def transport_errors(polys: Sequence[NCPoly], cfg: SDEConfig, z) -> CoupledRun:
    """Coupled run that also records ``||p(X^Z_t) - p(X^0_t)||`` for each ``p``.

    Series land in ``CoupledRun.extra`` keyed by the printed polynomial.
    """
    names = [f"transport[{print_poly(p)}]" for p in polys]
    series = {n: [] for n in names}

    def hook(t, xz, x0):
        for n, p in zip(names, polys):
            series[n].append(_matrix_norm(evaluate(p, xz) - evaluate(p, x0)))

    run = _coupled(cfg, z, hook)
    run.extra = {n: np.asarray(v) for n, v in series.items()}
    return run


def transport_check(p: NCPoly, cfg: SDEConfig, z) -> np.ndarray:
    """Series ``e_p(t)`` at the recorded times of a coupled run."""
    run = transport_errors([p], cfg, z)
    return next(iter(run.extra.values()))


def _matrix_norm(a: np.ndarray) -> float:
    """Operator norm; ``p(X)`` need not be Hermitian, so use singular values."""
    if mm.is_hermitian(a, tol=0.0):
        return float(mm.op_norm(a))
    return float(np.linalg.norm(a, ord=2))


def fit_decay_rate(times, values, t_min: float = 0.0, t_max: float = float("inf"), floor: float = 0.0) -> float:
    """Least-squares slope of ``log(values)`` against time on a window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= t_min) & (times <= t_max) & (values > floor)
    if sel.sum() < 2:
        raise ValueError("fewer than two usable points in the fit window")
    slope, _ = np.polyfit(times[sel], np.log(values[sel]), 1)
    return float(slope)
