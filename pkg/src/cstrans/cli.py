"""Command-line entry points: fit, simulate, aic, predict.

Datasets are CSVs with a header row and columns ``v``, ``delta``, one or
more ``z_*`` covariates (an intercept is added automatically), and zero or
more ``w_*`` additive covariates. Run settings come from a JSON config
file; a handful of flags override config values. Scalar results go to JSON
and grids to CSV, all with full float precision.

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 harness failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CstransError,
    DataFormatError,
    HarnessError,
    NonConvergenceError,
)
from .estimator import FitConfig, FitResult, confidence_interval, fit_dataset, select_knots
from .likelihood import Dataset, ModelSpec, ParameterVector
from .links import link_from_string
from .simulation import default_truth, run_monte_carlo
from .splines import make_basis

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGENCE = 3
EXIT_HARNESS = 4

THREADS_ENV_VAR = "CSTRANS_THREADS"

_CONFIG_KEYS = {
    "link": (str, list),
    "degree": (int, list),
    "knots": (list, type(None)),
    "aic_grid": (dict, list, type(None)),
    "knot_placement": (str,),
    "quadrature_order": (int,),
    "max_iterations": (int,),
    "gradient_tolerance": (float, int),
    "loglik_rel_tolerance": (float, int),
    "ridge_epsilon": (float, int),
    "seed": (int,),
    "curve_grid_points": (int,),
    "threads": (int,),
    "level": (float, int),
    "n": (int,),
    "replicates": (int,),
}

_DEFAULT_CONFIG = {
    "link": "extreme_value",
    "degree": 2,
    "knots": [5, 5],
    "aic_grid": None,
    "knot_placement": "equal",
    "quadrature_order": 15,
    "max_iterations": 200,
    "gradient_tolerance": 1e-6,
    "loglik_rel_tolerance": 1e-9,
    "ridge_epsilon": 1e-8,
    "seed": 20260810,
    "curve_grid_points": 201,
    "threads": None,
    "level": 0.95,
    "n": 400,
    "replicates": 200,
}


def _fmt(x) -> str:
    """Full-precision, round-trippable text for one CSV cell."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def load_config(path: str | os.PathLike | None) -> dict:
    cfg = dict(_DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    for key, value in user.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        if value is not None and not isinstance(value, _CONFIG_KEYS[key]):
            raise ConfigError(
                f"config key {key!r} has type {type(value).__name__}, "
                f"expected one of {[t.__name__ for t in _CONFIG_KEYS[key]]}"
            )
        cfg[key] = value
    return cfg


def _links_from_config(cfg: dict) -> list:
    raw = cfg["link"]
    names = raw if isinstance(raw, list) else [raw]
    if not names:
        raise ConfigError("config key 'link' must name at least one family")
    return [link_from_string(str(name)) for name in names]


def _aic_grid_from_config(cfg: dict, n_functions: int):
    raw = cfg["aic_grid"]
    if raw is None:
        return None
    if isinstance(raw, dict):
        extra = set(raw) - {"min", "max"}
        if extra:
            raise ConfigError(f"aic_grid object supports keys 'min' and 'max', got {sorted(extra)}")
        lo, hi = int(raw.get("min", 3)), int(raw.get("max", 10))
        if lo > hi:
            raise ConfigError(f"aic_grid has min {lo} > max {hi}")
        rng = range(lo, hi + 1)
        grid = [(k,) for k in rng]
        for _ in range(n_functions - 1):
            grid = [g + (k,) for g in grid for k in rng]
        return tuple(grid)
    grid = []
    for entry in raw:
        if not isinstance(entry, list) or len(entry) != n_functions:
            raise ConfigError(
                f"each aic_grid entry needs {n_functions} basis counts, got {entry!r}"
            )
        grid.append(tuple(int(k) for k in entry))
    return tuple(grid)


def _fit_config(cfg: dict, n_functions: int, *, need_knots: bool = True) -> FitConfig:
    degree = cfg["degree"]
    degrees = tuple(int(d) for d in degree) if isinstance(degree, list) else int(degree)
    if isinstance(degrees, tuple) and len(degrees) != n_functions:
        raise ConfigError(f"config 'degree' needs {n_functions} entries, got {len(degrees)}")
    knots = cfg["knots"]
    if knots is not None:
        if len(knots) != n_functions:
            raise ConfigError(f"config 'knots' needs {n_functions} entries, got {len(knots)}")
        knots = tuple(int(k) for k in knots)
    grid = _aic_grid_from_config(cfg, n_functions)
    if need_knots and knots is None and grid is None:
        raise ConfigError("config must provide 'knots' or 'aic_grid'")
    return FitConfig(
        link="extreme_value",  # set per fit by the caller
        degrees=degrees,
        num_basis=knots,
        aic_grid=grid,
        knot_placement=str(cfg["knot_placement"]),
        quadrature_order=int(cfg["quadrature_order"]),
        max_iterations=int(cfg["max_iterations"]),
        gradient_tolerance=float(cfg["gradient_tolerance"]),
        loglik_rel_tolerance=float(cfg["loglik_rel_tolerance"]),
        ridge_epsilon=float(cfg["ridge_epsilon"]),
    )


def read_dataset(path: str | os.PathLike) -> tuple[Dataset, list[str], list[str]]:
    """Read a dataset CSV; returns (data, z column names, w column names)."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot read data file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("data file is empty", line=1) from None
        header = [h.strip() for h in header]
        seen = set()
        for col in header:
            if col in seen:
                raise DataFormatError(f"duplicate column {col!r}", line=1, column=col)
            seen.add(col)
        for required in ("v", "delta"):
            if required not in header:
                raise DataFormatError(f"missing required column {required!r}", line=1)
        z_cols = [c for c in header if c.startswith("z_")]
        w_cols = [c for c in header if c.startswith("w_")]
        known = {"v", "delta", *z_cols, *w_cols}
        unknown = [c for c in header if c not in known]
        if unknown:
            raise DataFormatError(
                f"unrecognized columns {unknown}; use 'v', 'delta', 'z_*', 'w_*'", line=1
            )
        if not z_cols:
            raise DataFormatError("need at least one z_* covariate column", line=1)

        index = {c: i for i, c in enumerate(header)}
        rows_v, rows_delta, rows_z, rows_w = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", line=lineno
                )

            def cell(col: str) -> float:
                raw = row[index[col]].strip()
                if not raw:
                    raise DataFormatError("missing value", line=lineno, column=col)
                try:
                    return float(raw)
                except ValueError:
                    raise DataFormatError(
                        f"cannot parse {raw!r} as a number", line=lineno, column=col
                    ) from None

            d = cell("delta")
            if d not in (0.0, 1.0):
                raise DataFormatError(f"delta must be 0 or 1, got {d}", line=lineno, column="delta")
            rows_v.append(cell("v"))
            rows_delta.append(int(d))
            rows_z.append([cell(c) for c in z_cols])
            rows_w.append([cell(c) for c in w_cols])

    if not rows_v:
        raise DataFormatError("data file has no records", line=2)
    n = len(rows_v)
    z = np.column_stack([np.ones(n), np.asarray(rows_z, dtype=float).reshape(n, len(z_cols))])
    w = np.asarray(rows_w, dtype=float).reshape(n, len(w_cols))
    return Dataset(v=rows_v, delta=rows_delta, z=z, w=w), z_cols, w_cols


def _spec_to_dict(spec: ModelSpec) -> dict:
    def basis_dict(basis):
        return {
            "degree": basis.degree,
            "domain": [basis.domain[0], basis.domain[1]],
            "interior_knots": basis.interior_knots.tolist(),
            "num_basis": basis.num_basis,
        }

    return {
        "link": str(spec.link),
        "quadrature_order": spec.quadrature_order,
        "transform_basis": basis_dict(spec.basis0),
        "component_bases": [basis_dict(b) for b in spec.bases],
    }


def _spec_from_dict(payload: dict) -> ModelSpec:
    def basis_from(d):
        return make_basis(int(d["degree"]), d["interior_knots"], tuple(d["domain"]))

    return ModelSpec(
        link=link_from_string(payload["link"]),
        basis0=basis_from(payload["transform_basis"]),
        bases=tuple(basis_from(d) for d in payload["component_bases"]),
        quadrature_order=int(payload["quadrature_order"]),
    )


def _fit_to_dict(result: FitResult, level: float, beta_labels: list[str], w_cols: list[str]) -> dict:
    ci = confidence_interval(result, level)
    payload = {
        "model": _spec_to_dict(result.spec),
        "beta_labels": beta_labels,
        "beta": result.beta.tolist(),
        "se": result.se_beta.tolist(),
        "ci_level": level,
        "ci_lower": ci[:, 0].tolist(),
        "ci_upper": ci[:, 1].tolist(),
        "loglik": result.loglik_at_max,
        "aic": result.aic,
        "n_obs": result.n_obs,
        "iterations": result.iterations,
        "converged": bool(result.converged),
        "trace_summary": {
            "start_loglik": result.trace[0],
            "final_loglik": result.trace[-1],
            "accepted_steps": len(result.trace) - 1,
        },
        "coefficients": {
            "transform_log_slope": result.params.gamma0.tolist(),
            "components": [
                {"name": w_cols[j], "reduced": result.params.reduced[j].tolist()}
                for j in range(len(result.params.reduced))
            ],
        },
    }
    if result.selection_table is not None:
        payload["knot_selection"] = [
            {**row, "num_basis": list(row["num_basis"])} for row in result.selection_table
        ]
    return payload


def _params_from_dict(payload: dict) -> ParameterVector:
    coef = payload["coefficients"]
    return ParameterVector(
        beta=np.asarray(payload["beta"], dtype=float),
        gamma0=np.asarray(coef["transform_log_slope"], dtype=float),
        reduced=tuple(np.asarray(c["reduced"], dtype=float) for c in coef["components"]),
    )


def _curve_rows(spec: ModelSpec, params: ParameterVector, n_points: int, w_cols: list[str]):
    """(header, rows) for a curves table over equally spaced in-domain grids."""
    from .splines import ExpSplineIntegrator, basis_design

    grid_v = np.linspace(*spec.basis0.domain, n_points)
    transform = ExpSplineIntegrator(spec.basis0, grid_v, spec.quadrature_order).values(params.gamma0)
    header = ["v", "transform"]
    columns = [grid_v, transform]
    for j, basis in enumerate(spec.bases):
        grid_w = np.linspace(*basis.domain, n_points)
        values = basis_design(basis, grid_w) @ spec.centered_maps[j].expand(params.reduced[j])
        header += [f"w_{w_cols[j].removeprefix('w_')}", f"h_{w_cols[j].removeprefix('w_')}"]
        columns += [grid_w, values]
    rows = list(zip(*columns))
    return header, rows


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data, z_cols, w_cols = read_dataset(args.data)
    beta_labels = ["intercept"] + z_cols
    links = _links_from_config(cfg)

    fits = {}
    curve_tables = {}
    for link in links:
        fc = _fit_config(cfg, data.n_components + 1)
        fc.link = link
        try:
            result = fit_dataset(data, fc)
        except NonConvergenceError as exc:
            _write_json(out_dir / "trace.json", {"link": str(link), "error": str(exc), "trace": exc.trace})
            print(f"error: fit with link {link} did not converge: {exc}", file=sys.stderr)
            return EXIT_NONCONVERGENCE
        fits[str(link)] = _fit_to_dict(result, float(cfg["level"]), beta_labels, w_cols)
        curve_tables[str(link)] = _curve_rows(
            result.spec, result.params, int(cfg["curve_grid_points"]), w_cols
        )

    _write_json(out_dir / "fit.json", {"data": str(args.data), "fits": fits})
    first_header = next(iter(curve_tables.values()))[0]
    rows = []
    for link_name, (header, table) in curve_tables.items():
        if header != first_header:
            raise CstransError("curve tables disagree across links")
        rows += [(link_name, *row) for row in table]
    _write_csv(out_dir / "curves.csv", ["link"] + first_header, rows)
    print(f"wrote {out_dir / 'fit.json'} and {out_dir / 'curves.csv'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.fit) as fh:
        payload = json.load(fh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_points = int(args.grid_points)
    rows = []
    first_header = None
    for link_name, fit_payload in payload["fits"].items():
        spec = _spec_from_dict(fit_payload["model"])
        params = _params_from_dict(fit_payload)
        w_cols = [c["name"] for c in fit_payload["coefficients"]["components"]]
        header, table = _curve_rows(spec, params, n_points, w_cols)
        first_header = first_header or header
        rows += [(link_name, *row) for row in table]
    _write_csv(out_dir / "curves.csv", ["link"] + first_header, rows)
    print(f"wrote {out_dir / 'curves.csv'}")
    return EXIT_OK


def cmd_aic(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data, _, w_cols = read_dataset(args.data)
    n_functions = data.n_components + 1
    grid = _aic_grid_from_config(cfg, n_functions)
    if grid is None:
        raise ConfigError("cmd aic requires 'aic_grid' in the config")
    links = _links_from_config(cfg)
    fc = _fit_config(cfg, n_functions, need_knots=False)
    fc.link = links[0]
    selection = select_knots(data, fc, grid)
    header = [f"K{j}" for j in range(n_functions)] + ["loglik", "aic", "converged", "error"]
    rows = [
        list(row["num_basis"]) + [row["loglik"], row["aic"], row["converged"], row["error"] or ""]
        for row in selection.table
    ]
    _write_csv(out_dir / "aic.csv", header, rows)
    _write_json(
        out_dir / "aic_selection.json",
        {"chosen": list(selection.chosen), "aic": selection.fit.aic, "link": str(links[0])},
    )
    print(f"chosen num_basis: {selection.chosen}; wrote {out_dir / 'aic.csv'}")
    return EXIT_OK


def _summary_table_text(summary) -> str:
    lines = [
        f"Monte Carlo summary (n={summary.n}, replicates={summary.replicates}, "
        f"failed={summary.n_failed}, level={summary.level})",
        f"{'':14s}{'Bias':>10s}{'SD':>10s}{'ESD':>10s}{'Coverage':>10s}",
    ]
    for i, label in enumerate(summary.labels):
        sd = "n/a" if summary.sd is None else f"{summary.sd[i]:.4f}"
        lines.append(
            f"{label:14s}{summary.bias[i]:>10.4f}{sd:>10s}"
            f"{summary.mean_esd[i]:>10.4f}{summary.coverage[i]:>10.4f}"
        )
    lines.append(f"{'Joint':14s}{'':10s}{'':10s}{'':10s}{summary.joint_coverage:>10.4f}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    links = _links_from_config(cfg)
    fc = _fit_config(cfg, 2)
    fc.link = links[0]
    threads = cfg["threads"]
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV_VAR, "1"))
    summary, records = run_monte_carlo(
        truth=default_truth(),
        n=int(cfg["n"]),
        replicates=int(cfg["replicates"]),
        fit_config=fc,
        master_seed=int(cfg["seed"]),
        level=float(cfg["level"]),
        threads=int(threads),
    )
    _write_json(out_dir / "summary.json", summary.to_dict())
    header = (
        ["replicate", "seed", "converged", "iterations", "loglik"]
        + [f"beta_{i}" for i in range(3)]
        + [f"se_{i}" for i in range(3)]
        + ["ci_hit_beta1", "ci_hit_beta2", "joint_hit", "err_transform", "err_component", "error"]
    )
    rows = []
    for rec in records:
        beta = rec.beta_hat if rec.beta_hat is not None else [None] * 3
        se = rec.se if rec.se is not None else [None] * 3
        hits = rec.ci_hits if rec.ci_hits is not None else (None, None)
        rows.append(
            [rec.index, rec.seed, rec.converged, rec.iterations, rec.loglik]
            + list(beta)
            + list(se)
            + [hits[0], hits[1], rec.joint_hit, rec.err_transform, rec.err_component, rec.error or ""]
        )
    _write_csv(out_dir / "replicates.csv", header, rows)
    print(_summary_table_text(summary))
    print(f"wrote {out_dir / 'summary.json'} and {out_dir / 'replicates.csv'}")
    return EXIT_OK


def _apply_overrides(cfg: dict, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if getattr(args, "link", None) is not None:
        cfg["link"] = args.link.split(",") if "," in args.link else args.link
    if getattr(args, "knots", None) is not None:
        try:
            cfg["knots"] = [int(k) for k in args.knots.split(",")]
        except ValueError:
            raise ConfigError(f"--knots expects integers like '5,5', got {args.knots!r}") from None
    if getattr(args, "degree", None) is not None:
        try:
            parts = [int(d) for d in args.degree.split(",")]
        except ValueError:
            raise ConfigError(f"--degree expects integers like '2,2', got {args.degree!r}") from None
        cfg["degree"] = parts if len(parts) > 1 else parts[0]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cstrans",
        description="Fit semiparametric additive transformation models to current status data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data: bool):
        if data:
            p.add_argument("--data", required=True, help="dataset CSV (v, delta, z_*, w_*)")
        p.add_argument("--config", default=None, help="JSON run configuration")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--link", default=None, help="link family, comma-separated for several")
        p.add_argument("--knots", default=None, help="basis sizes K0,K1,...")
        p.add_argument("--degree", default=None, help="spline degrees D0,D1,...")

    common(sub.add_parser("fit", help="fit a dataset and write fit.json + curves.csv"), data=True)
    common(sub.add_parser("aic", help="tabulate AIC over a basis-size grid"), data=True)
    common(sub.add_parser("simulate", help="run the seeded Monte Carlo study"), data=False)
    predict = sub.add_parser("predict", help="re-evaluate curves from a saved fit.json")
    predict.add_argument("--fit", required=True, help="fit.json from a previous run")
    predict.add_argument("--out-dir", default=".")
    predict.add_argument("--grid-points", type=int, default=201)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"fit": cmd_fit, "simulate": cmd_simulate, "aic": cmd_aic, "predict": cmd_predict}
    try:
        return handlers[args.command](args)
    except (DataFormatError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HARNESS
    except CstransError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
