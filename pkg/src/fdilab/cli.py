"""
Command-line front end.

Every subcommand reads an experiment spec (``--spec``, optional), applies
``--set section.key=value`` overrides, writes its files into ``--out`` and
always writes ``report.json``. Exit codes: 0 all checks pass, 1 a physics
violation was detected, 2 usage or spec error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .environments import classify
from .errors import (
    DampingVanishes,
    FdiLabError,
    NoTransitionNearOmega,
    NotDamping,
    SpecError,
    SpectrumNotPositive,
    Unstable,
)
from .experiment import ExperimentSpec, load_spec
from .fdr import coupling_independence_test, fdi_check, fdi_check_kappa, fdr_kernel_matrix, fdr_kernel_scalar
from .kernels import MatrixFunction
from .langevin import run_ensemble
from .qbm import hup_check, steady_state_covariance, uncertainty_product

__all__ = ["Report", "main", "run_kernel", "run_check", "run_fdr", "run_steady", "run_simulate", "run_discrete"]

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

# errors meaning the physics rules the request out, as opposed to a bad spec
PHYSICS_ERRORS = (NotDamping, DampingVanishes, SpectrumNotPositive, Unstable, NoTransitionNearOmega)


@dataclass
class Report:
    command: str
    version: str
    inputs: dict
    outputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        return all(v for v in self.verdicts.values() if v is not None)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(**json.loads(text))


def _floats(a) -> list:
    return [float(v) for v in np.ravel(a)]


def _matrix(a) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(np.asarray(a, dtype=float))]


def write_csv(path: Path, f: MatrixFunction) -> None:
    """``omega`` then row-major ``re_i_j, im_i_j`` columns, 17 significant digits."""
    n = f.n_channels
    header = ["omega"]
    cols = [f.omega]
    for i in range(n):
        for j in range(n):
            header += [f"re_{i}_{j}", f"im_{i}_{j}"]
            cols += [f.data[:, i, j].real, f.data[:, i, j].imag]
    _write_table(path, header, np.column_stack(cols))


def _write_table(path: Path, header: list[str], table: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _report(spec: ExperimentSpec, command: str) -> Report:
    return Report(command=command, version=__version__, inputs=spec.as_dict())


def _violations(report, limit: int | None = None) -> list:
    bad = report.violating_frequencies
    return _floats(bad if limit is None else bad[:limit])


def run_kernel(spec: ExperimentSpec, out: Path) -> Report:
    k = spec.kernels()
    rep = _report(spec, "kernel")
    for name in ("nu", "gamma", "alpha"):
        write_csv(out / f"{name}.csv", getattr(k, name))
    rep.outputs = {
        "files": ["nu.csv", "gamma.csv", "alpha.csv"],
        "n_points": len(k.grid),
        "classification": classify(k).value,
    }
    return rep


def run_check(spec: ExperimentSpec, out: Path) -> Report:
    k = spec.kernels()
    rep = _report(spec, "check")
    fdi = fdi_check(k, spec.run.tolerance)
    cls = classify(k)
    rep.outputs = {
        "classification": cls.value,
        "fdi_worst_margin": float(fdi.worst_margin),
        "fdi_tolerance": fdi.tol,
        "violating_frequencies": _violations(fdi),
    }
    rep.verdicts["fdi"] = bool(fdi.passed)
    try:
        cov = steady_state_covariance(spec.oscillators(), k)
    except NotDamping as exc:
        rep.outputs["hup_skipped"] = str(exc)
        rep.verdicts["hup"] = None
    else:
        dets = uncertainty_product(cov)
        rep.outputs["uncertainty_products"] = _floats(dets)
        rep.verdicts["hup"] = bool(np.all(hup_check(dets, spec.run.tolerance or 1e-12)))
    return rep


def run_fdr(spec: ExperimentSpec, out: Path) -> Report:
    k = spec.kernels()
    rep = _report(spec, "fdr")
    kappa = fdr_kernel_scalar(k) if k.n_channels == 1 else fdr_kernel_matrix(k)
    write_csv(out / "kappa.csv", kappa.as_matrix_function())
    check = fdi_check_kappa(kappa, spec.run.tolerance)
    rep.outputs = {
        "files": ["kappa.csv"],
        "kappa_worst_margin": float(check.worst_margin),
        "violating_frequencies": _violations(check),
    }
    rep.verdicts["kappa_bound"] = bool(check.passed)
    return rep


def run_steady(spec: ExperimentSpec, out: Path) -> Report:
    k = spec.kernels()
    bank = spec.oscillators()
    rep = _report(spec, "steady")
    cov = steady_state_covariance(bank, k)
    dets = uncertainty_product(cov)
    rep.outputs = {
        "sigma_xx": _matrix(cov.sigma_xx),
        "sigma_xp": _matrix(cov.sigma_xp),
        "sigma_pp": _matrix(cov.sigma_pp),
        "uncertainty_products": _floats(dets),
    }
    rep.verdicts["hup"] = bool(np.all(hup_check(dets, spec.run.tolerance or 1e-12)))
    return rep


def _row(name: str, pred, emp, se) -> dict:
    pred, emp, se = float(pred), float(emp), float(se)
    if se > 0:
        z = (emp - pred) / se
    else:
        z = 0.0 if emp == pred else None
    return {"quantity": name, "predicted": pred, "empirical": emp, "standard_error": se, "z": z}


def run_simulate(spec: ExperimentSpec, out: Path) -> Report:
    if spec.run.n_trajectories < 1:
        raise SpecError("run.n_trajectories must be >= 1")
    k = spec.kernels()
    bank = spec.oscillators()
    rep = _report(spec, "simulate")
    pred = steady_state_covariance(bank, k)
    pred_det = uncertainty_product(pred)
    st = run_ensemble(
        bank, k, spec.run.n_trajectories, spec.run.seed, mode=spec.run.mode, dt=spec.run.dt, measure=spec.run.measure
    )
    rows = []
    for name, p, e, s in (
        ("sigma_xx", pred.sigma_xx, st.sigma_xx, st.se_xx),
        ("sigma_xp", pred.sigma_xp, st.sigma_xp, st.se_xp),
        ("sigma_pp", pred.sigma_pp, st.sigma_pp, st.se_pp),
    ):
        rows += [_row(f"{name}[{i}]", p[i, i], e[i, i], s[i, i]) for i in range(bank.n_modes)]
    rows += [_row(f"det[{i}]", pred_det[i], st.det[i], st.se_det[i]) for i in range(bank.n_modes)]
    rep.outputs = {
        "table": rows,
        "burn_in_steps": st.burn_in,
        "n_steps": st.n_steps,
        "dt": st.dt,
        "n_batches": st.n_batches,
    }
    pp_ok = all(r["z"] is not None and abs(r["z"]) <= 3 for r in rows if r["quantity"].startswith("sigma_pp"))
    det_floor = 0.25 * (1 - 3 * np.divide(st.se_det, st.det, out=np.zeros_like(st.det), where=st.det > 0))
    rep.verdicts["sigma_pp_within_3se"] = bool(pp_ok)
    rep.verdicts["hup"] = bool(np.all(st.det >= det_floor))
    return rep


def run_discrete(spec: ExperimentSpec, out: Path) -> Report:
    d = spec.discrete
    rep = _report(spec, "discrete")
    res = coupling_independence_test(
        spec.levels(), spec.populations(), d.n_couplings, spec.run.seed, spec.frequency_grid(),
        broadening=d.broadening, n_channels=d.n_channels,
    )
    _write_table(out / "spread.csv", ["omega", "line", "spread"], np.column_stack([res.omega, res.line, res.spread]))
    lines = np.unique(res.line)
    per_line = [float(res.spread[res.line == ln].max()) for ln in lines]
    rep.outputs = {
        "files": ["spread.csv"],
        "lines": _floats(lines),
        "max_spread_per_line": per_line,
        "max_spread": res.max_spread,
    }
    return rep


COMMANDS = {
    "kernel": run_kernel,
    "check": run_check,
    "fdr": run_fdr,
    "steady": run_steady,
    "simulate": run_simulate,
    "discrete": run_discrete,
}


HELP = {
    "kernel": "write nu, gamma and alpha on the frequency grid",
    "check": "fluctuation-dissipation inequality and uncertainty bound",
    "fdr": "FDR kernel and the bound kappa >= |w|",
    "steady": "weak-damping steady-state covariance",
    "simulate": "Langevin ensemble against the steady-state prediction",
    "discrete": "coupling dependence of the FDR kernel of a discrete environment",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdilab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fdilab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--spec", help="experiment spec (INI)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a spec value")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
    return parser


def _finite(obj):
    # JSON has no NaN/inf; reports carry None instead
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def execute(command: str, spec: ExperimentSpec, out: Path) -> Report:
    """Run a subcommand, converting physics failures into exit code 1."""
    try:
        rep = COMMANDS[command](spec, out)
    except PHYSICS_ERRORS as exc:
        rep = _report(spec, command)
        rep.outputs = {"error": type(exc).__name__, "reason": str(exc)}
        rep.verdicts["physics"] = False
    rep.outputs = _finite(rep.outputs)
    rep.exit_code = EXIT_OK if rep.passed else EXIT_VIOLATION
    return rep


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        spec = load_spec(args.spec, args.set)
        out.mkdir(parents=True, exist_ok=True)
        rep = execute(args.command, spec, out)
    except (FdiLabError, ValueError, OSError) as exc:
        print(f"fdilab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    if rep.exit_code == EXIT_VIOLATION:
        detail = rep.outputs.get("reason") or ", ".join(k for k, v in rep.verdicts.items() if v is False)
        print(f"fdilab {args.command}: violation: {detail}", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
