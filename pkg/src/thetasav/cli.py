"""
Command-line driver: config parsing, experiment dispatch and file output.

Usage::

    thetasav run --config run.cfg [--theta 0.6] [--dt 1e-3] [--out results]

The config file holds plain ``key = value`` lines (``#`` starts a comment).
Every key can also be given as a ``--key value`` flag, which wins over the
file.  Outputs written to the run directory:

``diagnostics.csv``
    one row per completed step, full round-trip precision.
``snapshots/step_NNNNNN.{meta,bin}``
    field dumps every ``snapshot_stride`` steps (0 disables them).
``convergence_report.csv``
    errors and observed orders (convergence experiment only).
``summary.txt``
    final status, including the failing step on solver failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coupler import ModelParams, NonFiniteError, Simulation, initial_level
from .phase import SolvabilityError
from .spectral import Grid, create_grid
from .verification import random_ic, run_convergence_study

__all__ = [
    "RunConfig",
    "ConfigError",
    "SnapshotError",
    "parse_config",
    "write_snapshot",
    "read_snapshot",
    "run",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SOLVABILITY",
    "EXIT_NONFINITE",
    "EXIT_IO",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVABILITY = 3
EXIT_NONFINITE = 4
EXIT_IO = 5

MODELS = {"ns-cac": "ns", "d-cac": "darcy"}
EXPERIMENTS = ("convergence", "energy-mass", "phase-separation", "custom")
IC_CHOICES = ("auto", "2comp", "3comp", "3comp-independent")
REQUIRED = ("model", "theta", "dt")


class ConfigError(ValueError):
    """Malformed, incomplete or out-of-range run configuration."""


class SnapshotError(IOError):
    """Snapshot metadata and payload disagree."""


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """
    One validated run description.

    ``steps`` takes precedence over ``t_final`` for time-stepping experiments.
    For ``convergence`` the run goes to ``t_final`` with ``levels`` step sizes
    ``dt, dt/2, ...``.
    """

    model: str
    theta: float
    dt: float
    experiment: str = "custom"
    components: int = 2
    steps: int | None = None
    t_final: float | None = None
    nx: int = 64
    ny: int | None = None
    lx: float = 2.0
    ly: float | None = None
    mobility: float = 10.0
    lam: float = 0.01
    eps: float = 0.05
    nu: float = 1.0
    alpha: float = 1000.0
    tau: float = 1.0
    c_shift: float = 10.0
    seed: int = 0
    ic: str = "auto"
    snapshot_stride: int = 0
    levels: int = 5
    exact_start: bool = False
    dealias: bool = False
    out: str = "results"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {sorted(MODELS)}, got {self.model!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.ic not in IC_CHOICES:
            raise ConfigError(f"ic must be one of {IC_CHOICES}, got {self.ic!r}")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError(
                f"theta={self.theta} is outside [1/2, 1]; the scheme is only proven "
                "unconditionally energy stable for theta in [1/2, 1]"
            )
        if self.components < 2:
            raise ConfigError("components must be at least 2")
        positive = ("dt", "lx", "mobility", "lam", "eps", "nu", "alpha", "tau", "c_shift")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("t_final", "ly"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be at least 1")
        if self.snapshot_stride < 0 or self.levels < 2:
            raise ConfigError("snapshot_stride must be >= 0 and levels >= 2")
        if self.experiment == "convergence":
            if self.components not in (2, 3):
                raise ConfigError("manufactured solutions exist for 2 and 3 components only")
        elif self.steps is None and self.t_final is None:
            raise ConfigError("one of steps or t_final is required")
        try:
            self.model_params()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def n_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        return int(round(self.t_final / self.dt))

    def model_params(self, dt: float | None = None) -> ModelParams:
        return ModelParams(
            n_components=self.components,
            kind=MODELS[self.model],
            mobility=self.mobility,
            lam=self.lam,
            eps=self.eps,
            c_shift=self.c_shift,
            nu=self.nu,
            alpha=self.alpha,
            tau=self.tau,
            theta=self.theta,
            dt=self.dt if dt is None else dt,
        )

    def grid(self) -> Grid:
        ny = self.nx if self.ny is None else self.ny
        ly = self.lx if self.ly is None else self.ly
        return create_grid(self.nx, ny, self.lx, ly, dealias=self.dealias)

    def ic_kind(self) -> str:
        if self.ic != "auto":
            return self.ic
        if self.experiment == "phase-separation":
            return "3comp-independent"
        return "2comp" if self.components == 2 else "3comp"


def _field_types() -> dict:
    conv = {"int": int, "float": float, "str": str, "bool": _parse_bool}
    out = {}
    for f in dataclasses.fields(RunConfig):
        base = str(f.type).split("|")[0].strip()
        out[f.name] = conv[base]
    return out


FIELD_TYPES = _field_types()


def _read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """
    Merge a ``key = value`` file with overrides and validate.

    Raises
    ------
    ConfigError
        Unknown or missing keys, unparseable values, invalid ranges.
    """
    raw = _read_config_file(path) if path is not None else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    values = {}
    for key, value in raw.items():
        try:
            values[key] = FIELD_TYPES[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
    return RunConfig(**values)


# ----------------------------------------------------------------------
# snapshots


def write_snapshot(path, fields: dict, grid: Grid, time: float) -> None:
    """
    Write ``path.meta`` (text) and ``path.bin`` (little-endian float64).

    Fields are scalar ``(nx, ny)`` arrays stored row-major in dict order.
    """
    path = Path(path)
    names = list(fields)
    for name in names:
        if np.shape(fields[name]) != grid.shape:
            raise SnapshotError(f"field {name} has shape {np.shape(fields[name])}, expected {grid.shape}")
    meta = {
        "nx": grid.nx,
        "ny": grid.ny,
        "lx": repr(float(grid.lx)),
        "ly": repr(float(grid.ly)),
        "time": repr(float(time)),
        "fields": ",".join(names),
        "dtype": "float64",
        "endianness": "little",
        "order": "row-major",
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.with_suffix(".meta").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    payload = np.concatenate([np.ascontiguousarray(fields[n], dtype="<f8").ravel() for n in names])
    path.with_suffix(".bin").write_bytes(payload.tobytes())


def read_snapshot(path) -> tuple[dict, dict]:
    """Return ``(metadata, fields)``; inverse of :func:`write_snapshot`."""
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".meta").read_text().splitlines():
        if line.strip():
            key, value = (s.strip() for s in line.split("=", 1))
            meta[key] = value
    nx, ny = int(meta["nx"]), int(meta["ny"])
    names = meta["fields"].split(",") if meta["fields"] else []
    data = path.with_suffix(".bin").read_bytes()
    expected = len(names) * nx * ny * 8
    if len(data) != expected:
        raise SnapshotError(f"{path}.bin holds {len(data)} bytes, metadata implies {expected}")
    flat = np.frombuffer(data, dtype="<f8")
    fields = {n: flat[i * nx * ny : (i + 1) * nx * ny].reshape(nx, ny).copy() for i, n in enumerate(names)}
    meta = dict(meta, nx=nx, ny=ny, lx=float(meta["lx"]), ly=float(meta["ly"]), time=float(meta["time"]))
    return meta, fields


def level_fields(level) -> dict:
    out = {f"phi_{k + 1}": level.phi[k] for k in range(level.phi.shape[0])}
    out.update(u_x=level.u[0], u_y=level.u[1], p=level.p)
    return out


# ----------------------------------------------------------------------
# experiments


def _fmt(v) -> str:
    return format(float(v), ".17g")


def diagnostics_header(n_components: int) -> list:
    masses = [f"mass_{k + 1}" for k in range(n_components)]
    return ["step", "time", "modified_energy", *masses, "q", "r", "max_div_u", "margin_D", "margin_q"]


def diagnostics_row(d) -> list:
    return [str(d.step), *map(_fmt, (d.time, d.modified_energy, *d.mass, d.q, d.r, d.max_div_u, d.margin_D, d.margin_q))]


def _write_summary(out: Path, items: dict) -> None:
    (out / "summary.txt").write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


def _run_time_stepping(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    params = cfg.model_params()
    kind = cfg.ic_kind()
    n_expected = 1 if kind == "2comp" else 3
    if params.n_fields != n_expected:
        raise ConfigError(f"initial condition {kind!r} does not fit {cfg.components} components")
    phi, u, p = random_ic(kind, cfg.seed, grid)
    sim = Simulation(grid, params, initial_level(grid, phi, u, p, params))
    snaps = out / "snapshots"
    first = last = None
    status, code, message = "ok", EXIT_OK, ""
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(diagnostics_header(cfg.components))
        try:
            for d in sim.run(cfg.n_steps):
                if first is None:
                    first = d
                else:
                    writer.writerow(diagnostics_row(d))
                last = d
                if cfg.snapshot_stride and d.step % cfg.snapshot_stride == 0:
                    write_snapshot(snaps / f"step_{d.step:06d}", level_fields(sim.current), grid, d.time)
        except SolvabilityError as exc:
            status, code, message = "solvability_failure", EXIT_SOLVABILITY, str(exc)
        except NonFiniteError as exc:
            status, code, message = "non_finite", EXIT_NONFINITE, str(exc)
    summary = {
        "status": status,
        "experiment": cfg.experiment,
        "steps_completed": sim.n,
        "final_time": _fmt(sim.current.t),
        "initial_modified_energy": _fmt(first.modified_energy),
        "final_modified_energy": _fmt(last.modified_energy),
        "max_mass_drift": _fmt(max(abs(a - b) for a, b in zip(last.mass, first.mass))),
    }
    if code != EXIT_OK:
        summary["failed_step"] = sim.n + 1
        summary["message"] = message
        logger.error("step %d failed: %s", sim.n + 1, message)
    _write_summary(out, summary)
    return code


def _run_convergence(cfg: RunConfig, out: Path) -> int:
    dts = [cfg.dt / 2**i for i in range(cfg.levels)]
    overrides = {k: getattr(cfg, k) for k in ("mobility", "lam", "eps", "nu", "alpha", "tau", "c_shift")}
    try:
        (report,) = run_convergence_study(
            MODELS[cfg.model],
            cfg.components,
            [cfg.theta],
            dts=dts,
            grid=cfg.grid(),
            t_final=cfg.t_final if cfg.t_final is not None else 0.1,
            exact_start=cfg.exact_start,
            **overrides,
        )
    except SolvabilityError as exc:
        _write_summary(out, {"status": "solvability_failure", "message": str(exc)})
        return EXIT_SOLVABILITY
    except NonFiniteError as exc:
        _write_summary(out, {"status": "non_finite", "message": str(exc)})
        return EXIT_NONFINITE
    report.to_csv(out / "convergence_report.csv")
    print(f"{'dt':>12} {'err_phi':>12} {'err_u':>12} {'err_p':>12} {'ord_phi':>8} {'ord_u':>8} {'ord_p':>8}")
    for row in report.rows():
        dt, e1, e2, e3, o1, o2, o3 = row[3:]
        print(f"{dt:12.4e} {e1:12.4e} {e2:12.4e} {e3:12.4e} {o1:8.3f} {o2:8.3f} {o3:8.3f}")
    _write_summary(out, {"status": "ok", "experiment": "convergence", "levels": len(dts)})
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    """Execute one configured experiment; returns a process exit code."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(
            "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg) if getattr(cfg, f.name) is not None)
        )
        if cfg.experiment == "convergence":
            return _run_convergence(cfg, out)
        return _run_time_stepping(cfg, out)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


# ----------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thetasav", description="theta-SAV phase-field flow solver")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", help="key = value config file")
    for name in FIELD_TYPES:
        flags = {f"--{name}", f"--{name.replace('_', '-')}"}
        p_run.add_argument(*sorted(flags), dest=name, default=None, metavar=name.upper())
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
