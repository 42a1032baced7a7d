"""Experiment harness: YAML study configs in, CSV tables and a JSON summary out.

Usage::

    spde run --config study.yaml [--seed S] [--paths M] [--out DIR]

The exit status is 0 when every acceptance window declared for the
experiment passes, 1 when one fails, and 2 on configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .estimators import (
    duality_identity_check,
    estimate_convergence,
    estimate_dual_convergence,
    ito_isometry_check,
    regularity_sweep,
)
from .noise import NoiseSpec
from .scheme import ForcingSpec, SchemeConfig, forcing_matrix
from .spectral import build_dirichlet_laplacian_1d, build_dirichlet_laplacian_2d

log = logging.getLogger("spde")

EXPERIMENTS = ("convergence", "dual", "regularity", "isometry", "duality")
REQUIRED = ("experiment", "T", "ladder")


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    experiment: str
    T: float
    ladder: list
    dimension: int = 1
    modes: int = 64
    noise_modes: int = 64
    grid: int = 128
    refinement: int = 64
    p: float = 2.0
    q: float = 2.0
    paths: int = 256
    seed: int = 0
    forcing_kind: str = "deterministic_decay"
    forcing_decay: float = 1.0
    forcing_profile: str = "eigenfield_1"
    forcing_amplitude: float = 1.0
    dual_profile: str = "eigenfield_1"
    dual_time_profile: str | None = None
    output_dir: str = "."
    slope_min: float | None = None
    slope_max: float | None = None
    ratio_bound: float = 1.5
    sigma: float = 3.0
    isometry_target: float | None = None
    config_hash: str = field(default="", compare=False)

    @property
    def taus(self) -> list[float]:
        return [self.T / J for J in self.ladder]

    def forcing(self) -> ForcingSpec:
        return ForcingSpec(self.forcing_kind, self.forcing_decay, self.forcing_profile, self.forcing_amplitude)

    def basis(self):
        if self.dimension == 1:
            return build_dirichlet_laplacian_1d(self.modes, self.grid)
        return build_dirichlet_laplacian_2d(self.modes, self.grid)

    def scheme(self, J: int | None = None) -> SchemeConfig:
        return SchemeConfig(
            basis=self.basis(),
            T=self.T,
            J=J if J is not None else min(self.ladder),
            refinement=self.refinement,
            forcing=self.forcing(),
            noise=NoiseSpec(self.noise_modes, self.seed),
            p=self.p,
            q=self.q,
        )

    def window(self) -> tuple[float, float] | None:
        defaults = {"convergence": (0.40, 0.60) if self.p == self.q == 2 else (0.35, 0.65),
                    "dual": (0.90, 1.10)}
        if self.experiment not in defaults:
            return None
        lo, hi = defaults[self.experiment]
        return (lo if self.slope_min is None else self.slope_min,
                hi if self.slope_max is None else self.slope_max)


_FIELDS = {f.name: f for f in dataclasses.fields(StudyConfig) if f.name != "config_hash"}


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _validate(cfg: StudyConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if not cfg.T > 0:
        raise ConfigError("T must be positive")
    if not cfg.ladder:
        raise ConfigError("ladder must list at least one step count")
    if any(not isinstance(J, int) or not _is_power_of_two(J) for J in cfg.ladder):
        raise ConfigError(f"ladder entries must be powers of two (nested ladder), got {cfg.ladder}")
    if sorted(cfg.ladder) != cfg.ladder or len(set(cfg.ladder)) != len(cfg.ladder):
        raise ConfigError("ladder must be strictly increasing")
    for name in ("p", "q"):
        v = getattr(cfg, name)
        if not (2 <= v < math.inf):
            raise ConfigError(f"{name} must lie in [2, inf) (got {v})")
    if cfg.dimension not in (1, 2):
        raise ConfigError("dimension must be 1 or 2")
    if cfg.modes > cfg.grid:
        raise ConfigError(f"modes={cfg.modes} exceeds grid={cfg.grid}")
    if cfg.refinement < 1 or cfg.paths < 2 or cfg.noise_modes < 1:
        raise ConfigError("refinement >= 1, paths >= 2 and noise_modes >= 1 are required")
    if max(cfg.ladder) * cfg.refinement > 2**26:
        raise ConfigError("refinement * max(ladder) fine steps is too large")
    if cfg.experiment == "convergence" and cfg.refinement < 2:
        raise ConfigError("convergence needs refinement >= 2 for the reference run")
    if cfg.experiment == "duality" and not (cfg.p == cfg.q == 2):
        raise ConfigError("duality experiment requires p = q = 2")
    try:
        cfg.forcing()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, overrides: dict | None = None) -> StudyConfig:
    """Parse a flat YAML document into a validated :class:`StudyConfig`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key-value mapping")
    doc = {**doc, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
    values = dict(doc)
    if isinstance(values["ladder"], (int, float)):
        values["ladder"] = [values["ladder"]]
    try:
        cfg = StudyConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.ladder = list(cfg.ladder)
    cfg.T = float(cfg.T)
    _validate(cfg)
    # where results land does not change them, so it stays out of the identity
    identity = {k: v for k, v in doc.items() if k != "output_dir"}
    canonical = json.dumps(identity, sort_keys=True, separators=(",", ":"), default=str)
    cfg.config_hash = hashlib.sha256(canonical.encode()).hexdigest()[:12]
    return cfg


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list
    summary: dict
    passed: bool
    wall_time: float = 0.0
    files: list = field(default_factory=list)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def write_csv(rows, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "estimate", "stderr"])
            for row in rows:
                w.writerow([format(float(v), ".17g") for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> list[tuple[float, float, float]]:
    with Path(path).open() as fh:
        r = csv.reader(fh)
        next(r)
        return [tuple(float(v) for v in row) for row in r]


def write_summary(summary: dict, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _rate_summary(table, window):
    slope = table.slope
    passed = slope is not None and window[0] <= slope <= window[1]
    return {
        "slope": _num(slope),
        "intercept": _num(table.intercept),
        "halfwidth": _num(table.halfwidth),
        "window": list(window),
    }, passed


def run_study(cfg: StudyConfig, workers: int | None = None, write: bool = True) -> StudyResult:
    start = time.perf_counter()
    extra: dict = {}
    if cfg.experiment == "convergence":
        table = estimate_convergence(cfg.scheme(), cfg.taus, cfg.paths, workers)
        rows = table.rows()
        extra, passed = _rate_summary(table, cfg.window())
    elif cfg.experiment == "dual":
        table = estimate_dual_convergence(
            cfg.basis(), cfg.dual_profile, cfg.taus, cfg.T,
            reference_steps=max(cfg.ladder) * cfg.refinement, p=cfg.p, q=cfg.q,
            time_profile=cfg.dual_time_profile or "constant",
        )
        rows = table.rows()
        extra, passed = _rate_summary(table, cfg.window())
    elif cfg.experiment == "regularity":
        sweep = regularity_sweep(cfg.scheme(), cfg.taus, cfg.paths, workers, bound=cfg.ratio_bound)
        rows = [(r.tau, r.time_ratio if r.time_ratio is not None else 0.0,
                 r.time_stderr / r.forcing_norm if r.forcing_norm > 0 else 0.0) for r in sweep.reports]
        passed = bool(sweep.uniform)
        extra = {
            "ratio_bound": cfg.ratio_bound,
            "time_spread": _num(sweep.time_spread),
            "space_spread": _num(sweep.space_spread),
            "reports": [{k: _num(v) for k, v in dataclasses.asdict(r).items()} for r in sweep.reports],
        }
    elif cfg.experiment == "isometry":
        J = cfg.ladder[0]
        basis = cfg.basis()
        F = forcing_matrix(cfg.forcing(), basis, cfg.noise_modes)
        integrand = np.broadcast_to(F, (J,) + F.shape)
        chk = ito_isometry_check(basis, integrand, cfg.T / J, cfg.p, cfg.q, cfg.paths, cfg.seed, workers)
        target = cfg.isometry_target
        if target is None and cfg.p == cfg.q == 2:
            target = 1.0
        rows = [(cfg.T / J, chk.ratio if chk.ratio is not None else 0.0, chk.stderr)]
        passed = chk.ratio is not None and (
            target is None or abs(chk.ratio - target) <= cfg.sigma * chk.stderr
        )
        extra = {"lhs_moment": _num(chk.lhs_moment), "rhs_moment": _num(chk.rhs_moment),
                 "ratio": _num(chk.ratio), "stderr": _num(chk.stderr), "target": _num(target),
                 "sigma": cfg.sigma}
    else:  # duality
        scheme = cfg.scheme(J=cfg.ladder[0])
        chk = duality_identity_check(scheme, cfg.paths, cfg.dual_profile,
                                     cfg.dual_time_profile or "sine", workers)
        rows = [(scheme.fine_step, chk.relative_gap if math.isfinite(chk.relative_gap) else 0.0, chk.stderr)]
        passed = not chk.flagged and abs(chk.lhs - chk.rhs) <= cfg.sigma * chk.stderr
        extra = {"lhs": _num(chk.lhs), "rhs": _num(chk.rhs), "relative_gap": _num(chk.relative_gap),
                 "stderr": _num(chk.stderr), "flagged": chk.flagged, "sigma": cfg.sigma}

    summary = {
        "experiment": cfg.experiment,
        "config_hash": cfg.config_hash,
        "master_seed": cfg.seed,
        "paths": cfg.paths,
        "p": cfg.p,
        "q": cfg.q,
        "rows": [{"tau": _num(t), "estimate": _num(e), "stderr": _num(s)} for t, e, s in rows],
        **extra,
        "passed": bool(passed),
    }
    result = StudyResult(cfg, rows, summary, bool(passed))
    if write:
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
        result.files = [
            write_csv(rows, out / f"{cfg.experiment}_{cfg.config_hash}.csv"),
            write_summary(summary, out / f"summary_{cfg.config_hash}.json"),
        ]
    result.wall_time = time.perf_counter() - start
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one study described by a YAML config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="override master seed")
    run.add_argument("--paths", type=int, help="override number of Monte Carlo paths")
    run.add_argument("--out", help="override output directory")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"spde: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, {"seed": args.seed, "paths": args.paths, "output_dir": args.out})
        result = run_study(cfg)
    except ConfigError as exc:
        print(f"spde: invalid config {args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"spde: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"spde: {cfg.experiment} study failed: {exc}", file=sys.stderr)
        return 2
    for path in result.files:
        print(path)
    status = "PASS" if result.passed else "FAIL"
    print(f"{status} {cfg.experiment} ({result.wall_time:.1f}s)", file=sys.stderr)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
