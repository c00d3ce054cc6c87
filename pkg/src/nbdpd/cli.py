"""Command-line front end.

Every command writes CSV with a header row, to ``--out`` or stdout.  When
``--out`` is given, the resolved configuration and library version go to a
``<out>.meta.json`` sidecar.

Exit codes: 0 success, 1 bad input or domain error, 2 numerical failure
(non-convergence or quadrature failure).

Column order
------------
divergence   family, gamma, params, cross_entropy, divergence, quad_error
estimate     <one column per parameter>, iterations, mean_psi_norm, converged
influence    x_o, psi_<p>..., tail_<p>..., class_<p>...
contaminate  estimator, phi, gamma, eps, n, statistic, <parameters>..., replicates_used, failures
sweep        grid_index, <grid keys>..., <columns of the wrapped command>..., status
verify       check, max_error, tol, result
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from . import __version__
from .densities import family_class, model_from_dict, read_dataset
from .divergences import DivergenceRequest, Family, HSpec, VSpec, evaluate
from .errors import ConvergenceError, NBDPDError, ParameterError
from .estimation import EmpiricalLossSpec, solve
from .phi import PhiSpec
from .quadrature import DEFAULT_CONFIG, QuadConfig
from .robustness import EstimatorSpec, contamination_experiment, influence_curve

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
U64_MAX = 2 ** 64 - 1


class ConfigError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# config and record parsing

def _scalar(text: str) -> Any:
    val = yaml.safe_load(text)
    return text if val is None else val


def parse_record(text: str | Mapping, default_key: str, what: str) -> dict:
    """Read a record given as a mapping, a file, inline ``k=v,k=v`` or a bare name."""
    if isinstance(text, Mapping):
        return dict(text)
    if not isinstance(text, str):
        raise ConfigError(f"{what}: expected a mapping or string, got {text!r}")
    path = Path(text)
    if path.is_file():
        return load_config(path, what)
    if "=" in text:
        out = {}
        for item in text.replace(";", ",").split(","):
            if not item.strip():
                continue
            key, sep, val = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{what}: cannot parse {item!r}; expected key=value")
            out[key.strip()] = _scalar(val.strip())
        return out
    if text.strip().replace("_", "").isalnum():
        return {default_key: text.strip()}
    raise ConfigError(f"{what}: {text!r} is neither a file nor key=value pairs")


def load_config(path, what: str = "config") -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what}: file {str(path)!r} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return dict(data)


def _field(cfg: Mapping, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing field {key!r}")
    return cfg[key]


def _number(value, key: str, where: str, minimum: float | None = None) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: field {key!r} must be a number, got {value!r}") from None
    if minimum is not None and not x >= minimum:
        raise ConfigError(f"{where}: field {key!r} must be >= {minimum}, got {value!r}")
    return x


def _integer(value, key: str, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        if not (isinstance(value, float) and value.is_integer()):
            raise ConfigError(f"{where}: field {key!r} must be an integer, got {value!r}")
    try:
        x = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: field {key!r} must be an integer, got {value!r}") from None
    if x < minimum:
        raise ConfigError(f"{where}: field {key!r} must be >= {minimum}, got {value!r}")
    return x


def _seed(value, where: str) -> int:
    s = _integer(value, "seed", where)
    if s > U64_MAX:
        raise ConfigError(f"{where}: seed must fit in 64 bits")
    return s


def model_record(spec, what: str):
    rec = parse_record(spec, "family", what)
    if "family" not in rec:
        # inline records may omit the family when the parameters name it
        if {"mu", "sigma"} <= set(rec):
            rec["family"] = "gaussian"
        elif "rate" in rec:
            rec["family"] = "exponential"
    return model_from_dict(rec)


def phi_record(spec, what: str = "phi") -> PhiSpec:
    rec = parse_record(spec, "kind", what)
    rec.pop("gamma", None)
    return PhiSpec.from_dict(rec)


def v_record(spec) -> VSpec:
    rec = parse_record(spec, "kind", "v")
    return VSpec(_field(rec, "kind", "v"), **{k: float(v) for k, v in rec.items() if k != "kind"})


def h_record(spec) -> HSpec:
    rec = parse_record(spec, "kind", "h")
    return HSpec(_field(rec, "kind", "h"), **{k: float(v) for k, v in rec.items() if k != "kind"})


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def write_csv(rows: list[dict], columns: list[str], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])


# --------------------------------------------------------------------------
# row builders shared by the single commands and the sweep

DIVERGENCE_COLUMNS = ["family", "gamma", "params", "cross_entropy", "divergence", "quad_error"]


def divergence_rows(cfg: Mapping, quad: QuadConfig) -> tuple[list[dict], list[str], int]:
    where = "divergence"
    q = model_record(_field(cfg, "q", where), "q")
    p = model_record(_field(cfg, "p", where), "p")
    family = Family(str(_field(cfg, "family", where)).lower())
    gamma = _number(_field(cfg, "gamma", where), "gamma", where, 0.0)
    params = {k: _number(cfg[k], k, where) for k in ("kappa", "lambda1", "lambda2", "t")
              if cfg.get(k) is not None}
    phi = phi_record(cfg["phi"]) if family is Family.NB_DPD and cfg.get("phi") is not None else None
    v = v_record(cfg["v"]) if family is Family.FDPD and cfg.get("v") is not None else None
    h = h_record(cfg["h"]) if family is Family.HD and cfg.get("h") is not None else None
    res = evaluate(DivergenceRequest(q, p, gamma, family, params, phi, v, h), quad)
    label = (phi.with_gamma(gamma).label if phi else v.label if v else h.label if h
             else ";".join(f"{k}={v:g}" for k, v in params.items()))
    row = {"family": family.value, "gamma": gamma, "params": label,
           "cross_entropy": res.cross_entropy, "divergence": res.divergence,
           "quad_error": res.quad_error}
    return [row], DIVERGENCE_COLUMNS, EXIT_OK


def _data(value, where):
    if isinstance(value, (list, tuple)):
        return np.asarray(value, dtype=float)
    return read_dataset(_existing(value, "data", where))


def _existing(value, key, where):
    path = Path(str(value))
    if not path.is_file():
        raise ConfigError(f"{where}: field {key!r}: file {str(path)!r} does not exist")
    return path


def estimate_rows(cfg: Mapping, quad: QuadConfig) -> tuple[list[dict], list[str], int]:
    where = "estimate"
    data = _data(_field(cfg, "data", where), where)
    fam = family_class(str(cfg.get("model", "gaussian")))
    gamma = _number(_field(cfg, "gamma", where), "gamma", where, 0.0)
    phi = phi_record(cfg.get("phi", "identity"))
    init = cfg.get("init", "auto")
    if isinstance(init, str) and init != "auto":
        init = [_number(v, "init", where) for v in init.split(",")]
    res = solve(EmpiricalLossSpec(data, fam, phi, gamma), init=init)
    row = dict(zip(fam.param_names, res.theta_hat))
    row.update(iterations=res.iterations, mean_psi_norm=res.mean_psi_norm, converged=res.converged)
    cols = list(fam.param_names) + ["iterations", "mean_psi_norm", "converged"]
    return [row], cols, EXIT_OK if res.converged else EXIT_NUMERIC


def _grid(spec, where) -> np.ndarray | None:
    if spec is None:
        return None
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ConfigError(f"{where}: grid must be lo:hi:n, got {spec!r}")
    lo, hi = (_number(v, "grid", where) for v in parts[:2])
    n = _integer(parts[2], "grid", where, 2)
    return np.linspace(lo, hi, n)


def influence_rows(cfg: Mapping, quad: QuadConfig) -> tuple[list[dict], list[str], int]:
    where = "influence"
    model = model_record(_field(cfg, "model", where), "model")
    gamma = _number(_field(cfg, "gamma", where), "gamma", where)
    curve = influence_curve(model, phi_record(cfg.get("phi", "identity")), gamma,
                            _grid(cfg.get("grid"), where))
    names = curve.param_names
    cols = (["x_o"] + [f"psi_{n}" for n in names] + [f"tail_{n}" for n in names]
            + [f"class_{n}" for n in names])
    rows = []
    for x, vals in zip(curve.x_grid, curve.psi_values):
        row = {"x_o": x}
        for j, n in enumerate(names):
            row[f"psi_{n}"] = vals[j]
            row[f"tail_{n}"] = curve.tail_limit[j]
            row[f"class_{n}"] = curve.classification[j]
        rows.append(row)
    return rows, cols, EXIT_OK


def _estimators(items, where) -> list[EstimatorSpec]:
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{where}: field 'estimators' must be a nonempty list")
    out = []
    for i, item in enumerate(items):
        w = f"{where}: estimators[{i}]"
        if not isinstance(item, Mapping):
            raise ConfigError(f"{w}: must be a mapping")
        out.append(EstimatorSpec(str(_field(item, "name", w)), phi_record(_field(item, "phi", w), w),
                                 _number(_field(item, "gamma", w), "gamma", w, 0.0)))
    return out


def contaminate_rows(cfg: Mapping, quad: QuadConfig) -> tuple[list[dict], list[str], int]:
    where = "contaminate"
    true_model = model_record(_field(cfg, "true_model", where), "true_model")
    contaminant = model_record(_field(cfg, "contaminant", where), "contaminant")
    eps = _number(_field(cfg, "eps", where), "eps", where, 0.0)
    n = _integer(_field(cfg, "n", where), "n", where, 2)
    reps = _integer(_field(cfg, "replicates", where), "replicates", where, 1)
    seed = _seed(_field(cfg, "master_seed", where), where)
    reports = contamination_experiment(true_model, contaminant, eps, n, reps,
                                       _estimators(_field(cfg, "estimators", where), where), seed)
    names = list(type(true_model).param_names)
    cols = ["estimator", "phi", "gamma", "eps", "n", "statistic"] + names + ["replicates_used", "failures"]
    rows = []
    for rep in reports.values():
        for stat in ("mean", "bias", "sd"):
            row = {"estimator": rep.estimator, "phi": rep.phi_label, "gamma": rep.gamma, "eps": eps,
                   "n": n, "statistic": stat, "replicates_used": rep.used, "failures": rep.failures}
            row.update(zip(names, getattr(rep, stat)))
            rows.append(row)
    return rows, cols, EXIT_OK


BUILDERS = {
    "divergence": divergence_rows,
    "estimate": estimate_rows,
    "influence": influence_rows,
    "contaminate": contaminate_rows,
}


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        child = node.get(k)
        if isinstance(child, str):
            child = parse_record(child, "kind" if k == "phi" else "family", k)
        elif child is None:
            child = {}
        node[k] = dict(child)
        node = node[k]
    node[keys[-1]] = value


def sweep_rows(cfg: Mapping, quad: QuadConfig, seed: int | None = None) -> tuple[list[dict], list[str], int]:
    where = "sweep"
    command = str(_field(cfg, "command", where))
    if command not in BUILDERS:
        raise ConfigError(f"{where}: field 'command' must be one of {sorted(BUILDERS)}, got {command!r}")
    base = _field(cfg, "base", where)
    grid = _field(cfg, "grid", where)
    if not isinstance(base, Mapping) or not isinstance(grid, Mapping) or not grid:
        raise ConfigError(f"{where}: 'base' and 'grid' must be mappings, 'grid' nonempty")
    keys = list(grid)
    values = []
    for k in keys:
        vals = grid[k] if isinstance(grid[k], list) else [grid[k]]
        if not vals:
            raise ConfigError(f"{where}: grid {k!r} is empty")
        values.append(vals)
    rows, wrapped = [], []
    for idx, point in enumerate(itertools.product(*values)):
        point_cfg = copy.deepcopy(dict(base))
        if seed is not None and command == "contaminate":
            point_cfg["master_seed"] = seed
        for k, v in zip(keys, point):
            _set_path(point_cfg, k, v)
        head = {"grid_index": idx, **dict(zip(keys, point))}
        try:
            sub, cols, code = BUILDERS[command](point_cfg, quad)
            status = "ok" if code == EXIT_OK else "not_converged"
            for c in cols:
                if c not in wrapped:
                    wrapped.append(c)
        except (NBDPDError, ValueError, ArithmeticError) as exc:
            log.warning("sweep point %d failed: %s", idx, exc)
            sub, status = [{}], f"error: {exc}"
        rows.extend({**head, **r, "status": status} for r in sub)
    cols = ["grid_index"] + keys + [c for c in wrapped if c not in keys] + ["status"]
    return rows, cols, EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (unsigned 64-bit)")
    p.add_argument("--quad-tol", type=float, default=argparse.SUPPRESS,
                   help="absolute and relative quadrature tolerance")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="nbdpd", description="Density-power divergences and robust estimation.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("divergence", parents=[common], help="cross-entropy and divergence of two models")
    d.add_argument("--q", required=True, help="model file or inline record for q")
    d.add_argument("--p", required=True, help="model file or inline record for p")
    d.add_argument("--family", required=True, choices=[f.value for f in Family])
    d.add_argument("--gamma", type=float, required=True)
    d.add_argument("--phi", help="generator spec for nb_dpd")
    d.add_argument("--v", help="v spec for fdpd")
    d.add_argument("--h", help="H spec for hd")
    for name in ("kappa", "lambda1", "lambda2", "t"):
        d.add_argument(f"--{name}", type=float)

    e = sub.add_parser("estimate", parents=[common], help="minimum-divergence estimate from data")
    e.add_argument("--data", required=True, help="CSV with one column of observations")
    e.add_argument("--model", default="gaussian", help="parametric family")
    e.add_argument("--phi", default="identity")
    e.add_argument("--gamma", type=float, required=True)
    e.add_argument("--init", default="auto", help="comma-separated start values or 'auto'")

    i = sub.add_parser("influence", parents=[common], help="psi along a grid of outlier positions")
    i.add_argument("--model", required=True)
    i.add_argument("--phi", default="identity")
    i.add_argument("--gamma", type=float, required=True)
    i.add_argument("--grid", help="lo:hi:n (default mu + sigma * [0, 12] in steps of 0.25)")

    c = sub.add_parser("contaminate", parents=[common], help="Monte-Carlo contamination study")
    c.add_argument("--config", required=True)

    s = sub.add_parser("sweep", parents=[common], help="Cartesian grid over any other command")
    s.add_argument("--config", required=True)

    sub.add_parser("verify", parents=[common], help="run the built-in identity suite")
    return parser


def _config_from_args(args) -> dict:
    if args.command in ("contaminate", "sweep"):
        return load_config(args.config, args.command)
    skip = {"command", "out", "seed", "quad_tol", "verbose"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _emit(rows, cols, args, cfg) -> None:
    out = getattr(args, "out", None)
    if out is None:
        write_csv(rows, cols, sys.stdout)
        return
    buf = io.StringIO()
    write_csv(rows, cols, buf)
    Path(out).write_text(buf.getvalue())
    meta = {"command": args.command, "version": __version__, "config": cfg,
            "seed": getattr(args, "seed", None), "quad_tol": getattr(args, "quad_tol", None)}
    Path(f"{out}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


def _run(args) -> int:
    tol = getattr(args, "quad_tol", None)
    if tol is not None and not tol > 0:
        raise ConfigError("--quad-tol must be positive")
    quad = QuadConfig(abs_tol=tol, rel_tol=tol) if tol else DEFAULT_CONFIG
    seed = getattr(args, "seed", None)
    if seed is not None:
        seed = _seed(seed, "--seed")

    if args.command == "verify":
        from .verify import run
        report = run()
        print(report.table(), file=sys.stderr)
        rows = [{"check": r.name, "max_error": r.error, "tol": r.tol,
                 "result": "PASS" if r.passed else "FAIL"} for r in report.rows]
        _emit(rows, ["check", "max_error", "tol", "result"], args, {})
        return EXIT_OK if report.passed else EXIT_INPUT

    cfg = _config_from_args(args)
    if args.command == "sweep":
        rows, cols, code = sweep_rows(cfg, quad, seed)
    else:
        if seed is not None and args.command == "contaminate":
            cfg["master_seed"] = seed
        rows, cols, code = BUILDERS[args.command](cfg, quad)
    _emit(rows, cols, args, cfg)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"nbdpd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NBDPDError, ValueError, KeyError, OSError) as exc:
        print(f"nbdpd: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
