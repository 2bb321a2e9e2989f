"""Command-line front end.

Three workflows:

``select``
    fit every requested method once and write one JSON line per method;
``risk``
    synthetic risk study, one CSV row per (method, sample size);
``predict``
    Mahalanobis-split predictive study, a per-round loss CSV followed by
    pairwise one-sided Wilcoxon tests.

Settings are resolved as defaults < command-line flags < ``--config``
(a JSON object whose keys are the long flag names, with ``-`` or ``_``).
Floats are written with 17 significant digits.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, evaluation, preselect, selection
from .data import Dataset, load_csv
from .errors import ConfigError, DataError, DPPSelectError

log = logging.getLogger("dppselect")

WORKFLOWS = ("select", "risk", "predict")
PRIOR_KEYS = ("g", "w", "theta", "alpha", "sigma2")
SPLIT_PRESETS = {"air-pollution": evaluation.AIR_POLLUTION_SPLIT, "body-fat": evaluation.BODY_FAT_SPLIT}

DEFAULTS = {
    "workflow": None,
    "data": None,
    "response": None,
    "methods": None,
    "prior": {},
    "alpha_max": 3.0,
    "preselect_k": 10,
    "seed": 0,
    "reps": 10000,
    "k_max": 20,
    "out": None,
    "posterior_table": False,
    "threads": 1,
    "split_preset": None,
    "test_pool": None,
    "exclude": None,
    "train_size": None,
    "rounds": None,
}


# ---------------------------------------------------------------------------
# output formatting
# ---------------------------------------------------------------------------

def fmt(x):
    """17 significant digits; enough to round-trip a double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_json(obj):
    """Compact JSON with floats at 17 significant digits and non-finite floats as null."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + to_json(v) for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return "" if v is None else str(v)


def write_csv_rows(handle, header, rows):
    w = csv.writer(handle, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(
        prog="dppselect",
        description="Bayesian variable selection with determinantal point process priors.",
        epilog="Precedence: built-in defaults < flags < --config file. "
               "Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.")
    d = argparse.SUPPRESS
    p.add_argument("--workflow", choices=WORKFLOWS, default=d)
    p.add_argument("--data", default=d, help="CSV with a header row; omit for the built-in synthetic data")
    p.add_argument("--response", default=d, help="response column name or 0-based index (default: last column)")
    p.add_argument("--methods", default=d, help="comma-separated subset of " + ",".join(evaluation.METHODS))
    p.add_argument("--prior", default=d, help="fixed hyperparameters, e.g. 'g=10,w=0.5' (keys g,w,theta,alpha,sigma2)")
    p.add_argument("--alpha-max", type=float, default=d, help="upper bound for the GDPP exponent (default 3)")
    p.add_argument("--preselect-k", type=int, default=d, help="LARS preselection size (default 10)")
    p.add_argument("--seed", type=int, default=d, help="master seed (default 0)")
    p.add_argument("--reps", type=int, default=d, help="risk-study repetitions (default 10000)")
    p.add_argument("--k-max", type=int, default=d, help="risk study sample sizes 20, 40, ..., 20*k_max (default 20)")
    p.add_argument("--out", default=d, help="output file (default stdout)")
    p.add_argument("--config", default=None, help="JSON file overriding the flags")
    p.add_argument("--posterior-table", action="store_true", default=d,
                   help="include the full posterior over submodels (p <= 20)")
    p.add_argument("--threads", type=int, default=d, help="worker processes for the risk study (default 1)")
    p.add_argument("--split-preset", choices=sorted(SPLIT_PRESETS), default=d)
    p.add_argument("--test-pool", type=int, default=d)
    p.add_argument("--exclude", type=int, default=d)
    p.add_argument("--train-size", type=int, default=d)
    p.add_argument("--rounds", type=int, default=d)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_prior(text):
    """``'g=10,w=0.5'`` or a mapping → {name: float}."""
    if isinstance(text, dict):
        items = text.items()
    elif not text:
        return {}
    else:
        items = []
        for part in str(text).split(","):
            if "=" not in part:
                raise ConfigError(f"--prior entry {part!r} is not key=value")
            k, v = part.split("=", 1)
            items.append((k.strip(), v.strip()))
    out = {}
    for k, v in items:
        if k not in PRIOR_KEYS:
            raise ConfigError(f"unknown prior key {k!r}; expected one of {', '.join(PRIOR_KEYS)}")
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"prior value for {k!r} is not a number: {v!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"prior value for {k!r} must be finite")
        out[k] = v
    if out.get("g", 1.0) <= 0 or out.get("w", 1.0) <= 0 or out.get("sigma2", 1.0) <= 0:
        raise ConfigError("g, w and sigma2 must be positive")
    if not 0.0 <= out.get("theta", 0.0) <= 1.0:
        raise ConfigError("theta must lie in [0, 1]")
    if out.get("alpha", 0.0) < 0:
        raise ConfigError("alpha must be non-negative")
    return out


def _read_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    out = {}
    for k, v in cfg.items():
        key = k.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        out[key] = v
    return out


def resolve_config(argv):
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose", False)
    config_path = args.pop("config", None)
    cfg = dict(DEFAULTS)
    cfg.update(args)
    if config_path:
        cfg.update(_read_config(config_path))
    cfg["verbose"] = verbose

    if cfg["workflow"] not in WORKFLOWS:
        raise ConfigError("--workflow must be one of " + ", ".join(WORKFLOWS))
    cfg["prior"] = parse_prior(cfg["prior"])
    for key, lo in (("preselect_k", 1), ("reps", 2), ("k_max", 1), ("threads", 1)):
        try:
            cfg[key] = int(cfg[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer") from None
        if cfg[key] < lo:
            raise ConfigError(f"{key} must be at least {lo}")
    try:
        cfg["alpha_max"] = float(cfg["alpha_max"])
        cfg["seed"] = int(cfg["seed"])
    except (TypeError, ValueError):
        raise ConfigError("alpha_max and seed must be numbers") from None
    if not cfg["alpha_max"] >= 0:
        raise ConfigError("alpha_max must be non-negative")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    methods = cfg["methods"]
    if isinstance(methods, str):
        methods = [m.strip().upper() for m in methods.split(",") if m.strip()]
    cfg["methods"] = methods
    return cfg


def _default_methods(cfg, synthetic):
    if cfg["methods"] is not None:
        return cfg["methods"]
    base = ["EB", "DPP", "LDPP", "GDPP", "RIDGE", "OLS"]
    return base + ["ORACLE"] if synthetic and cfg["workflow"] != "predict" else base


def _load(cfg):
    response = cfg["response"]
    return load_csv(cfg["data"], -1 if response is None else response)


# ---------------------------------------------------------------------------
# workflows
# ---------------------------------------------------------------------------

def _names(dataset, mask):
    return [dataset.names[j] for j in np.flatnonzero(mask)]


def _select_one(method, dataset, cfg, synthetic, spec):
    """One JSON-ready record for ``method``."""
    fixed = dict(cfg["prior"])
    sigma2 = fixed.pop("sigma2", None)
    intercept = not synthetic
    if synthetic:
        sigma2 = spec.noise_sd ** 2 if sigma2 is None else sigma2
    rec = {"method": method, "n": dataset.n, "p": dataset.p}
    X, y = dataset.X, dataset.y
    if method in evaluation.BAYES_METHODS:
        support = None
        if dataset.p > cfg["preselect_k"]:
            support = preselect.select_support(X, y, cfg["preselect_k"])
            rec["support"] = _names(dataset, support)
        opts = selection.FitOptions(intercept=intercept, sigma2=sigma2, fixed=fixed, support=support,
                                    alpha_max=cfg["alpha_max"])
        want_table = bool(cfg["posterior_table"])
        res = selection.fit_and_select(dataset, evaluation.BAYES_METHODS[method], opts, with_table=want_table)
        rec["selected"] = _names(dataset, res.best_mask)
        rec["hyperparameters"] = res.hyper.as_dict()
        rec["beta"] = dict(zip(dataset.names, res.beta))
        rec["intercept"] = res.intercept
        rec["log_type2"] = res.log_type2
        if want_table:
            table = res.log_posterior
            order = np.argsort(-table.values, kind="stable")
            rec["posterior"] = [{"model": _names(dataset, table.masks[r]), "probability": math.exp(table.values[r])}
                                for r in order]
        return rec
    if method == "RIDGE":
        fit = baselines.fit_ridge(X, y, sigma2=sigma2, intercept=intercept)
        beta, b0 = fit.beta, fit.intercept
        rec["hyperparameters"] = {"lambda": fit.lam, "sigma2": fit.sigma2, "sigma2_known": sigma2 is not None}
        rec["log_type2"] = fit.log_evidence
    elif method == "OLS":
        beta, b0 = baselines.ols(X, y, intercept=intercept)
    elif method == "ORACLE":
        beta, b0 = baselines.oracle(X, y, spec.true_support, intercept=intercept)
    else:
        raise ConfigError(f"unknown method {method!r}")
    rec["selected"] = _names(dataset, beta != 0)
    rec["beta"] = dict(zip(dataset.names, beta))
    rec["intercept"] = b0
    return rec


def run_select(cfg, out):
    synthetic = cfg["data"] is None
    spec = None
    if synthetic:
        spec = evaluation.SyntheticSpec(seed=cfg["seed"])
        k = cfg["k_max"]
        if 20 * k > spec.rows:
            raise ConfigError(f"k_max={k} needs {20 * k} rows; the synthetic design has {spec.rows}")
        X = evaluation.generate_synthetic(spec)[:20 * k]
        dataset = Dataset(X, evaluation.synthetic_response(spec, X, k, 0))
    else:
        dataset = _load(cfg)
    methods = evaluation.check_methods(_default_methods(cfg, synthetic), oracle_allowed=synthetic)
    for m in methods:
        out.write(to_json(_select_one(m, dataset, cfg, synthetic, spec)) + "\n")


def run_risk(cfg, out):
    if cfg["data"] is not None:
        raise ConfigError("the risk workflow uses the built-in synthetic design; drop --data")
    spec = evaluation.SyntheticSpec(seed=cfg["seed"])
    methods = _default_methods(cfg, True)
    curve = evaluation.run_risk_study(spec, methods, k_max=cfg["k_max"], reps=cfg["reps"],
                                      workers=cfg["threads"])
    for m, fails in curve.failures.items():
        if fails.any():
            log.warning("%s: %d failed fits scored as +inf", m, int(fails.sum()))
    write_csv_rows(out, ["method", "sampleSize", "meanMaxLoss", "stdErr", "reps"], curve.rows())


def _split_spec(cfg):
    base = SPLIT_PRESETS[cfg["split_preset"]] if cfg["split_preset"] else evaluation.SplitSpec()
    kw = {"test_pool_size": base.test_pool_size, "exclude_furthest": base.exclude_furthest,
          "train_size": base.train_size, "rounds": base.rounds, "seed": cfg["seed"]}
    for flag, field_ in (("test_pool", "test_pool_size"), ("exclude", "exclude_furthest"),
                         ("train_size", "train_size"), ("rounds", "rounds")):
        if cfg[flag] is not None:
            kw[field_] = int(cfg[flag])
    return evaluation.SplitSpec(**kw)


def run_predict(cfg, out, summary_out):
    dataset = evaluation.make_collinear_dataset(seed=cfg["seed"]) if cfg["data"] is None else _load(cfg)
    spec = _split_spec(cfg)
    methods = _default_methods(cfg, False)
    result = evaluation.run_predictive_study(dataset, spec, methods, preselect_k=cfg["preselect_k"],
                                             alpha_max=cfg["alpha_max"], fixed=cfg["prior"] or None)
    for f in result.failures:
        log.warning("round %d, %s failed: %s", f["round"], f["method"], f["message"])
    rows = ([r, int(result.test_rows[r])] + [result.losses[m][r] for m in methods] for r in range(spec.rounds))
    write_csv_rows(out, ["round", "test_row"] + methods, rows)
    if summary_out is out:
        out.write("\n")
    summary = evaluation.pairwise_wilcoxon(result.losses, methods)
    write_csv_rows(summary_out, ["a", "b", "alternative", "pairs", "n_eff", "statistic", "pvalue", "method"],
                   ([s["a"], s["b"], "a<b", s["pairs"], s["n_eff"], s["statistic"], s["pvalue"], s["method"]]
                    for s in summary))


def summary_path(out_path):
    p = Path(out_path)
    return p.with_name(p.stem + ".wilcoxon.csv")


def run(cfg, stdout):
    """Execute a resolved configuration, writing to ``cfg['out']`` or ``stdout``."""
    buf = io.StringIO()
    side = io.StringIO() if cfg["workflow"] == "predict" and cfg["out"] else buf
    if cfg["workflow"] == "select":
        run_select(cfg, buf)
    elif cfg["workflow"] == "risk":
        run_risk(cfg, buf)
    else:
        run_predict(cfg, buf, side)
    # write only after the whole computation succeeded
    if cfg["out"]:
        try:
            Path(cfg["out"]).write_text(buf.getvalue())
            if side is not buf:
                summary_path(cfg["out"]).write_text(side.getvalue())
        except OSError as exc:
            raise DataError(f"cannot write {cfg['out']}: {exc}") from exc
    else:
        stdout.write(buf.getvalue())


def error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc),
           "exit_code": getattr(exc, "exit_code", 4)}
    for attr in ("line", "column", "value"):
        if hasattr(exc, attr):
            rec[attr] = getattr(exc, attr)
    return rec


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=stderr)
        run(cfg, stdout)
    except DPPSelectError as exc:
        stderr.write(to_json(error_record(exc)) + "\n")
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        stderr.write(to_json({"error": type(exc).__name__, "message": str(exc), "exit_code": 4}) + "\n")
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
