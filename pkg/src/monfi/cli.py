"""Batch front-end: parameter scans to CSV with a reproducibility manifest.

Running a scan writes one CSV row per grid time with the requested QFI
columns, plus a JSON manifest holding the full configuration; re-running from
the manifest reproduces the CSV byte for byte.  ``plot-data`` reshapes one or
more scan CSVs into a long-format table keyed by (n_qubits, eta, unraveling)
for external plotting.

Exit codes: 0 success, 1 usage/validation, 2 numerical guard, 3 I/O.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name
from .errors import NumericalGuardError
from .estimator import effective_qfi
from .lindblad import ghz_ultimate_qfi, unconditional_qfi_curve
from .model import FrequencyModel, NoiseAxis, ghz_state
from .trajectories import UnravelingSpec

__all__ = ["RunConfig", "parse_config", "run_scan", "emit_plot_data", "main"]

CSV_COLUMNS = [
    "t",
    "q_unc",
    "q_ultimate",
    "f_traj",
    "q_cond_mean",
    "q_eff",
    "stderr_f",
    "stderr_q",
    "n_traj",
]

MODES = ("unconditional", "ultimate", "effective", "all")


@dataclass
class RunConfig:
    """One scan: model, unraveling, grid and sampling settings."""

    model: str = "parallel"
    n_qubits: int = 2
    omega: float = 1.0
    kappa: float = 1.0
    eta: float = 1.0
    unraveling: str = "pd"
    tmax: float = 1.0
    steps: int = 1000
    stride: int = 100
    ntraj: int = 1000
    seed: int = 0
    mode: str = "all"
    out: str = "scan.csv"
    workers: int = 0  # 0 means automatic

    def validate(self) -> None:
        if self.model not in ("parallel", "transverse"):
            raise ValueError(f"model must be parallel or transverse, got {self.model!r}")
        if self.n_qubits < 1:
            raise ValueError("N must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.unraveling not in ("pd", "hd", "photodetection", "homodyne"):
            raise ValueError(f"unknown unraveling {self.unraveling!r}")
        if self.tmax <= 0:
            raise ValueError("tmax must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.stride < 1 or self.steps % self.stride != 0:
            raise ValueError("stride must divide steps")
        if self.ntraj < 2:
            raise ValueError("ntraj must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def dt(self) -> float:
        return self.tmax / self.steps

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def frequency_model(self) -> FrequencyModel:
        axis = NoiseAxis.PARALLEL if self.model == "parallel" else NoiseAxis.TRANSVERSE
        return FrequencyModel(self.n_qubits, self.omega, self.kappa, axis)

    def unraveling_spec(self) -> UnravelingSpec:
        return UnravelingSpec(self.unraveling, self.eta, self.dt, self.steps)

    def t_grid(self) -> np.ndarray:
        n_points = self.steps // self.stride
        return np.array([i * self.stride * self.dt for i in range(n_points + 1)])


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit code 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_run_parser() -> _Parser:
    p = _Parser(prog="monfi", description="Scan QFI tiers for monitored frequency estimation.")
    p.add_argument("--config", type=str, default=None, help="JSON config or manifest; flags override")
    p.add_argument("--model", choices=["parallel", "transverse"])
    p.add_argument("--N", dest="n_qubits", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--unraveling", choices=["pd", "hd", "photodetection", "homodyne"])
    p.add_argument("--tmax", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--ntraj", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=list(MODES))
    p.add_argument("--out", type=str)
    p.add_argument("--workers", type=int)
    return p


def parse_config(argv: list[str]) -> RunConfig:
    """Build a validated RunConfig from flags, optionally over a JSON file."""
    parser = _build_run_parser()
    ns = parser.parse_args(argv)
    data: dict = {}
    if ns.config is not None:
        try:
            loaded = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise OSError(f"cannot read config file {ns.config}: {exc}") from exc
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]  # accept a manifest
        data.update(loaded)
    for f in fields(RunConfig):
        val = getattr(ns, f.name, None)
        if val is not None:
            data[f.name] = val
    cfg = RunConfig.from_dict(data)
    return cfg


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def run_scan(cfg: RunConfig) -> int:
    """Execute a scan and write its CSV and manifest; returns the exit code."""
    cfg.validate()
    t_start = time.monotonic()
    m = cfg.frequency_model()
    grid = cfg.t_grid()
    want_unc = cfg.mode in ("unconditional", "all")
    want_ult = cfg.mode in ("ultimate", "all")
    want_eff = cfg.mode in ("effective", "all")

    rows = {t: {c: "" for c in CSV_COLUMNS} for t in grid}
    for t in grid:
        rows[t]["t"] = _fmt(t)

    try:
        if want_unc:
            psi = ghz_state(cfg.n_qubits)
            rho0 = np.outer(psi, psi.conj())
            curve = unconditional_qfi_curve(m, rho0, grid)
            for t, v in zip(grid, curve.values):
                rows[t]["q_unc"] = _fmt(v)
        if want_ult:
            for t in grid:
                rows[t]["q_ultimate"] = _fmt(ghz_ultimate_qfi(m, float(t)))
        if want_eff:
            u = cfg.unraveling_spec()
            estimates = effective_qfi(
                m, u, None, grid, cfg.ntraj, cfg.seed,
                n_workers=cfg.workers if cfg.workers > 0 else None,
            )
            for est in estimates:
                r = rows[est.t]
                r["f_traj"] = _fmt(est.f_traj)
                r["q_cond_mean"] = _fmt(est.q_cond_mean)
                r["q_eff"] = _fmt(est.q_eff)
                r["stderr_f"] = _fmt(est.stderr_f)
                r["stderr_q"] = _fmt(est.stderr_q)
                r["n_traj"] = str(est.n_traj)
    except NumericalGuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 2

    out_path = Path(cfg.out)
    try:
        if out_path.parent and not out_path.parent.exists():
            raise OSError(f"output directory {out_path.parent} does not exist")
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for t in grid:
                writer.writerow(rows[t])
        manifest = {
            "artifact": "monfi",
            "version": __version__,
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "backend": backend_name(),
            "wall_time_s": time.monotonic() - t_start,
        }
        manifest_path(out_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    return 0


def manifest_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def emit_plot_data(out_path: str | Path, csv_paths: list[str | Path]) -> None:
    """Reshape scan CSVs into one long-format table for external plotting.

    Each input CSV must sit next to its manifest (as written by run_scan),
    which supplies the (n_qubits, eta, unraveling, model) series key.
    """
    series_cols = {
        "q_unc": None,
        "q_ultimate": None,
        "f_traj": "stderr_f",
        "q_cond_mean": None,
        "q_eff": "stderr_q",
    }
    out_rows = []
    for path in csv_paths:
        path = Path(path)
        mpath = manifest_path(path)
        if not mpath.exists():
            raise ValueError(f"manifest {mpath} not found for {path}")
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        cfg = manifest.get("config", {})
        key = {
            "n_qubits": cfg.get("n_qubits"),
            "eta": cfg.get("eta"),
            "unraveling": cfg.get("unraveling"),
            "model": cfg.get("model"),
        }
        if any(v is None for v in key.values()):
            raise ValueError(f"manifest {mpath} lacks series keys")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(CSV_COLUMNS) - set(reader.fieldnames):
                missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
                raise ValueError(f"{path} is missing columns: {sorted(missing)}")
            for row in reader:
                for col, err_col in series_cols.items():
                    if row[col] == "":
                        continue
                    out_rows.append(
                        {
                            **{k: str(v) for k, v in key.items()},
                            "series": col,
                            "t": row["t"],
                            "value": row[col],
                            "stderr": row[err_col] if err_col and row[err_col] != "" else "",
                        }
                    )
    header = ["n_qubits", "eta", "unraveling", "model", "series", "t", "value", "stderr"]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in out_rows:
            writer.writerow(row)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "plot-data":
        p = _Parser(prog="monfi plot-data", description="Reshape scan CSVs for plotting.")
        p.add_argument("out", type=str)
        p.add_argument("inputs", nargs="+")
        ns = p.parse_args(argv[1:])
        try:
            emit_plot_data(ns.out, ns.inputs)
        except (ValueError, OSError) as exc:
            print(f"plot-data failed: {exc}", file=sys.stderr)
            return 3
        return 0
    try:
        cfg = parse_config(argv)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    return run_scan(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
