"""Command-line front end.

Subcommands: ``grad``, ``simulate``, ``sd-check``, ``couple``, ``convexity``.
Every command except ``grad`` reads a JSON config whose ``"potential"`` key
holds polynomial text.  Exit status: 0 all checks passed, 2 checks ran and
failed, 1 operational error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import convexity as cvx
from . import laws
from . import matmodel as mm
from . import sde
from .ncpoly import NCPoly, PolyError, cyclic_grad, diff_quot
from .polylang import parse_poly, print_poly, print_tensor

log = logging.getLogger("freediff")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

# Sentinel replica index for the stream that draws the initial tuple Z.
Z_STREAM = 2**32 - 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    potential: NCPoly
    N: int = 32
    dt: float = 0.01
    t_max: float = 20.0
    seed: int = 0
    replicas: int = 8
    workers: int = 1
    record_stride: int = 10
    M_cap: Optional[float] = None
    c: Optional[float] = None
    b: Optional[float] = None
    B0: Optional[float] = None
    burn_in: Optional[float] = None
    sample_every: float = 1.0
    deg_max: int = 4
    k_max: int = 6
    n_sigma: float = 3.0
    abs_tol: float = 0.05
    Z: object = None
    observables: list = field(default_factory=list)
    transport: list = field(default_factory=list)
    fit_window: tuple = (0.0, 10.0)
    snapshot_every: Optional[float] = None
    convexity: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.potential.nvars

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if "potential" not in doc:
            raise ConfigError("config needs a 'potential' entry")
        known = set(cls.__dataclass_fields__) | {"m"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        try:
            doc["potential"] = parse_poly(doc["potential"], doc.pop("m", None))
            m = doc["potential"].nvars
            doc["observables"] = [parse_poly(t, m) for t in doc.get("observables", [])]
            doc["transport"] = [parse_poly(t, m) for t in doc.get("transport", [])]
        except PolyError as exc:
            raise ConfigError(f"bad polynomial: {exc}") from None
        if "fit_window" in doc:
            doc["fit_window"] = tuple(float(v) for v in doc["fit_window"])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: Optional[dict] = None) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(doc, dict):
            doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(doc)

    def validate(self) -> None:
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not self.t_max >= self.dt:
            raise ConfigError("t_max must be at least dt")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.deg_max < 0 or self.k_max < 0:
            raise ConfigError("degree caps must be >= 0")

    def initial_tuple(self) -> Optional[np.ndarray]:
        z = self.Z
        if z is None or z == "zero":
            return None
        if isinstance(z, dict) and "norm" in z:
            rng = mm.RngStream(self.seed, Z_STREAM)
            return mm.scale_to_norm(mm.gue_tuple(self.m, self.N, rng), float(z["norm"]))
        if isinstance(z, dict) and "file" in z:
            x, _ = sde.read_snapshot(z["file"])
            return mm.hermitize(x)
        raise ConfigError(f"cannot interpret Z = {z!r}")

    def burn(self) -> float:
        if self.burn_in is not None:
            return float(self.burn_in)
        return 10.0 / self.c if self.c else 10.0

    def sde_config(self, with_z: bool = True, snapshots: bool = False) -> sde.SDEConfig:
        kw = {}
        if snapshots:
            kw = dict(snapshot_start=min(self.burn(), self.t_max), snapshot_every=self.sample_every)
        try:
            return sde.SDEConfig(
                potential=self.potential, N=int(self.N), dt=float(self.dt), t_max=float(self.t_max),
                seed=int(self.seed), Z=self.initial_tuple() if with_z else None,
                record_stride=int(self.record_stride), M_cap=self.M_cap, c=self.c, b=self.b,
                observables=tuple(self.observables), **kw)
        except sde.ConfigError as exc:
            raise ConfigError(str(exc)) from None


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="")


def cmd_grad(args) -> int:
    p = parse_poly(args.poly, args.nvars)
    if not 1 <= args.index <= p.nvars:
        raise ConfigError(f"index {args.index} outside 1..{p.nvars}")
    print(print_poly(cyclic_grad(p, args.index)))
    print(print_tensor(diff_quot(p, args.index)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    out = _outdir(args)
    scfg = cfg.sde_config()
    if cfg.snapshot_every is not None:
        scfg = replace(scfg, snapshot_start=0.0, snapshot_every=cfg.snapshot_every)
    status = "ok"
    try:
        traj = sde.simulate(scfg)
    except sde.BlowUpError as exc:
        traj, status = exc.partial, f"blow-up at t={exc.t:.17g}"
        log.error("simulation aborted: %s", status)
    traj.to_csv(out / "trajectory.csv")
    if traj.snapshots:
        snapdir = out / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for k, (t, x) in enumerate(traj.snapshots):
            sde.write_snapshot(snapdir / f"snap_{k:05d}", x, t, cfg.seed)
    final = {n: float(v[-1]) for n, v in traj.observables.items()}
    summary = {
        "status": status, "potential": print_poly(cfg.potential), "m": cfg.m, "N": cfg.N,
        "dt": cfg.dt, "t_max": cfg.t_max, "seed": cfg.seed, "max_norm": float(traj.max_norm),
        "M_cap": cfg.M_cap, "cap_violations": len(traj.cap_violations),
        "final_moments": final, "noise_checksum": traj.noise_checksum,
    }
    _write_json(out / "summary.json", summary)
    ok = status == "ok" and not traj.cap_violations
    return EXIT_OK if ok else EXIT_FAILED


def _stationary_law(cfg: ExperimentConfig) -> tuple[laws.EmpiricalLaw, list]:
    scfg = cfg.sde_config(snapshots=True)
    trajs = sde.simulate_replicas(scfg, cfg.replicas, workers=cfg.workers)
    meta = {"dt": cfg.dt, "burn_in": scfg.snapshot_start, "seed": cfg.seed}
    return laws.EmpiricalLaw.from_trajectories(trajs, meta), trajs


def plateau_norm(trajs, t_from: float) -> float:
    """Mean tuple norm over recorded times at or after ``t_from``."""
    vals = [n for tr in trajs for t, n in zip(tr.times, tr.norms) if t >= t_from]
    return float(np.mean(vals))


def cmd_sd_check(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed, "replicas": args.replicas})
    out = _outdir(args)
    law, trajs = _stationary_law(cfg)
    report = laws.sd_residual_suite(law, cfg.potential, cfg.deg_max, cfg.n_sigma, cfg.abs_tol)
    report.to_json(out / "sd_report.json")
    report.to_csv(out / "sd_report.csv")
    ok = report.passed
    if cfg.k_max > 0:
        b0_hat = plateau_norm(trajs, min(cfg.burn(), cfg.t_max))
        b0 = cfg.B0 if cfg.B0 is not None else 1.1 * b0_hat
        bounds = laws.moment_bound_check(law, b0, cfg.k_max, cfg.n_sigma)
        bounds.metadata["B0_plateau"] = float(b0_hat)
        bounds.to_json(out / "moment_bounds.json")
        ok = ok and bounds.passed
    caps = sum(len(t.cap_violations) for t in trajs)
    if caps:
        log.warning("%d recorded states exceeded M_cap", caps)
    return EXIT_OK if ok and not caps else EXIT_FAILED


def cmd_couple(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    out = _outdir(args)
    z = cfg.initial_tuple()
    if z is None:
        z = np.zeros((cfg.m, cfg.N, cfg.N), dtype=np.complex128)
    scfg = cfg.sde_config(with_z=False)
    run = sde.transport_errors(cfg.transport, scfg, z)
    run.to_csv(out / "coupling.csv")
    lo, hi = cfg.fit_window
    summary = {"potential": print_poly(cfg.potential), "Z_norm": float(float(mm.tuple_norm(z))),
               "fit_window": [lo, hi], "seed": cfg.seed, "dt": cfg.dt, "N": cfg.N,
               "noise_checksums_match": run.run_z.noise_checksum == run.run_0.noise_checksum,
               "max_norm": float(max(run.run_z.max_norm, run.run_0.max_norm))}
    ok = summary["noise_checksums_match"]
    try:
        rate = sde.fit_decay_rate(run.times, run.trace_distance, lo, hi, floor=1e-300)
        summary["trace_distance_slope"] = float(rate)
    except ValueError:
        rate = None
        summary["trace_distance_slope"] = None
    if cfg.c is not None and rate is not None:
        summary["rate_check"] = bool(rate <= -0.8 * cfg.c)
        ok = ok and summary["rate_check"]
    if cfg.M_cap is not None:
        caps = len(run.run_z.cap_violations) + len(run.run_0.cap_violations)
        summary["cap_violations"] = caps
        ok = ok and caps == 0
    _write_json(out / "couple_summary.json", summary)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_convexity(args) -> int:
    cfg = ExperimentConfig.load(args.config, {"seed": args.seed})
    out = _outdir(args)
    cc = dict(cfg.convexity)
    c = float(cc.get("c", cfg.c if cfg.c is not None else 1.0))
    report = cvx.certify(
        cfg.potential, c=c, M_bound=float(cc.get("M_bound", cfg.M_cap or 1.0)),
        trials=int(cc.get("trials", 1000)), N=int(cc.get("N", min(cfg.N, 16))),
        rng=mm.RngStream(cfg.seed), mode=cc.get("mode", "operator"), eps=cc.get("eps"))
    report.to_json(out / "convexity.json")
    if report.witness is not None:
        sde.write_snapshot(out / "witness_X", report.witness[0], 0.0, cfg.seed)
        sde.write_snapshot(out / "witness_Y", report.witness[1], 0.0, cfg.seed)
    print(f"{report.verdict}: min_gap={report.min_gap:.17g} over {report.trials} trials")
    return EXIT_OK if not report.refuted else EXIT_FAILED


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freediff", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("grad", help="print D_i P and the difference quotient of P")
    g.add_argument("poly")
    g.add_argument("-i", "--index", type=int, default=1)
    g.add_argument("--nvars", type=int, default=None)
    g.set_defaults(func=cmd_grad)

    for name, func, help_ in [
        ("simulate", cmd_simulate, "run one trajectory"),
        ("sd-check", cmd_sd_check, "Schwinger-Dyson residual suite on a stationary sample"),
        ("couple", cmd_couple, "coupled runs from Z and from 0"),
        ("convexity", cmd_convexity, "sample-based convexity certificate"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--replicas", type=int, default=None)
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PolyError, sde.ConfigError, laws.LawError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
