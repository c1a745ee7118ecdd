"""Command-line front end.

Subcommands: ``gen-data``, ``train``, ``eval``, ``sweep``, ``report``.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import model as M
from . import synthdata as sd
from .calibrate import fit_temperature, scaled_nll
from .errors import ConfigError, FcalError
from .experiment import LOSS_NAMES, Protocol, loss_spec, median, pct_drop, pretrain, finetune
from .metrics import EVAL_SEED, EvalConfig, evaluate
from .synthdata import SynthConfig

RUN_CONFIG_VERSION = 1
NOISE_FLAGS = {"homo": "homo", "hetero": "hetero", "gamma": "gamma", "laplace": "laplace"}
SWEEP_COLUMNS = ["setting", "seed", "smooth_l1", "smooth_l1_gt", "ece_z", "ece_q", "nll",
                 "baseline_smooth_l1_gt", "pct_drop", "status"]
SUMMARY_COLUMNS = ["setting", "n_ok", "smooth_l1", "smooth_l1_gt", "ece_z", "ece_q", "nll", "pct_drop"]
TRAIN_LOG_COLUMNS = ["epoch", "emp_risk", "fcal_loss", "combined"]


class UsageError(Exception):
    """Bad flag value; reported with exit code 2."""


# -- parsing helpers ----------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a non-negative 64-bit integer")
    return v


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def _k_value(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"K must be >= 2, got {v}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=0, help="root seed for every random draw")
    p.add_argument("--out", help="output directory (required)")
    p.add_argument("--config", help="JSON file whose keys override flags")


def _model_flags(p):
    p.add_argument("--hidden", type=_int_list, default=[32, 32], help="hidden layer widths, e.g. 32,32")
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-norm", type=float, default=10.0, help="gradient norm clip (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcal", description="Distribution-matching calibration for regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic disc-tracking dataset")
    _common(g)
    g.add_argument("--noise", choices=sorted(NOISE_FLAGS), default="hetero")
    g.add_argument("--n", type=int, default=5000, help="number of samples")
    g.add_argument("--n-distractors", type=int, default=5)
    g.add_argument("--sigma", type=float, default=2.0, help="homoscedastic noise scale")
    g.add_argument("--gamma", type=float, default=200.0, help="Gamma noise shape")

    t = sub.add_parser("train", help="train a model")
    _common(t)
    t.add_argument("--data", help="dataset directory (required)")
    t.add_argument("--loss", choices=LOSS_NAMES, default="nll")
    t.add_argument("--lambda", dest="lam", type=float, default=0.0)
    t.add_argument("--emp-risk", choices=("nll", "smooth-l1"), default="nll")
    t.add_argument("--K", type=_k_value, default=64)
    t.add_argument("--H", type=int, default=64)
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--lr", type=float, default=1e-2)
    t.add_argument("--init-from", help="checkpoint to warm-start from")
    _model_flags(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint (or the oracle) on a split")
    _common(e)
    e.add_argument("--data", help="dataset directory (required)")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--oracle", action="store_true", help="evaluate the known-noise oracle")
    e.add_argument("--sigma-factor", type=float, default=1.0, help="oracle sigma multiplier")
    e.add_argument("--split", choices=sd.SPLITS, default="test")
    e.add_argument("--K", type=_k_value, default=64)
    e.add_argument("--H", type=int, default=512)
    e.add_argument("--bins", type=int, default=10)
    e.add_argument("--eval-seed", type=_seed, default=EVAL_SEED)
    e.add_argument("--temperature-scale", action="store_true", help="fit sigma temperature on the val split")

    s = sub.add_parser("sweep", help="train and evaluate over a grid of settings and seeds")
    _common(s)
    s.add_argument("--param", choices=("lambda", "K", "gamma"))
    s.add_argument("--values", help="comma-separated grid values (required)")
    s.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    s.add_argument("--loss", choices=("fcal-kl", "fcal-wass", "calibration-loss"), default="fcal-kl")
    s.add_argument("--lambda", dest="lam", type=float, default=0.2, help="fixed lambda for K/gamma sweeps")
    s.add_argument("--K", type=_k_value, default=64)
    s.add_argument("--H", type=int, default=64)
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--noise", choices=("homo", "hetero"), default="hetero", help="noise for lambda/K sweeps")
    s.add_argument("--pretrain-epochs", type=int, default=150)
    s.add_argument("--pretrain-lr", type=float, default=1e-2)
    s.add_argument("--epochs", type=int, default=100, help="fine-tuning epochs per setting")
    s.add_argument("--lr", type=float, default=3e-3, help="fine-tuning learning rate")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes (one per seed)")
    _model_flags(s)

    r = sub.add_parser("report", help="tabulate eval reports")
    r.add_argument("reports", nargs="+", help="report.json files or eval output directories")
    r.add_argument("--out", help="also write the table here")
    r.add_argument("--config", help=argparse.SUPPRESS)
    return parser


# -- config handling ----------------------------------------------------------

_NOT_ECHOED = {"command", "config", "out", "func"}


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if not getattr(args, "config", None):
        return
    try:
        blob = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {args.config}: {exc}") from exc
    if not isinstance(blob, dict):
        raise UsageError("--config: expected a JSON object")
    blob.pop("format_version", None)
    blob.pop("command", None)
    known = set(vars(args)) - _NOT_ECHOED
    unknown = sorted(set(blob) - known)
    if unknown:
        raise UsageError(f"--config: unknown keys {unknown}")
    for k, v in blob.items():
        setattr(args, k, v)


# Checked after --config is merged so a config file can supply them.
REQUIRED = {"gen-data": ("out",), "train": ("data", "out"), "eval": ("data", "out"),
            "sweep": ("param", "values", "out"), "report": ()}


def _check_required(args: argparse.Namespace) -> None:
    for key in REQUIRED[args.command]:
        _require(getattr(args, key) is not None, "--" + key.replace("_", "-"), "is required")
    if args.command == "eval":
        _require(bool(args.checkpoint) != bool(args.oracle), "--checkpoint/--oracle", "give exactly one")
    if args.command == "sweep":
        _require(args.param in ("lambda", "K", "gamma"), "--param", "must be lambda, K or gamma")


def _resolved(args: argparse.Namespace) -> dict:
    d = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    d["command"] = args.command
    d["format_version"] = RUN_CONFIG_VERSION
    return d


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _require(cond: bool, flag: str, message: str) -> None:
    if not cond:
        raise UsageError(f"{flag}: {message}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _clip(v):
    return None if not v else float(v)


# -- commands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    _require(args.n >= 50, "--n", f"must be >= 50, got {args.n}")
    _require(args.n_distractors >= 0, "--n-distractors", "must be >= 0")
    _require(args.sigma >= 0, "--sigma", "must be >= 0")
    if args.noise == "gamma":
        _require(args.gamma > 0, "--gamma", f"Gamma shape must be > 0, got {args.gamma}")
    cfg = SynthConfig(n_samples=args.n, n_distractors=args.n_distractors, noise=NOISE_FLAGS[args.noise],
                      sigma=args.sigma, gamma_shape=args.gamma if args.gamma > 0 else 200.0, seed=args.seed)
    out = _out_dir(args)
    sd.save(sd.generate(cfg), out)
    _write_json(out / "config.json", _resolved(args))
    a, b, c = sd.split_sizes(args.n)
    print(f"wrote {args.n} samples ({a}/{b}/{c}) to {out}")
    return 0


def _validate_train(args) -> None:
    _require(0.0 <= args.lam <= 1.0, "--lambda", f"must lie in [0, 1], got {args.lam}")
    _require(args.loss != "nll" or args.lam == 0.0, "--lambda", "the nll loss takes no calibration weight")
    _require(args.K >= 2, "--K", "must be >= 2")
    _require(args.H >= 2, "--H", "must be >= 2")
    _require(args.epochs >= 0, "--epochs", "must be >= 0")
    _require(args.lr >= 0, "--lr", "must be >= 0")
    _require(0 <= args.momentum < 1, "--momentum", "must lie in [0, 1)")
    _require(args.batch_size >= 1, "--batch-size", "must be >= 1")
    _require(all(h >= 1 for h in args.hidden), "--hidden", "widths must be >= 1")
    if args.loss.startswith("fcal"):
        _require(args.batch_size * 2 >= args.K, "--batch-size", f"too small to form hyper-constraints of K={args.K}")


def cmd_train(args) -> int:
    _validate_train(args)
    ds = sd.load(args.data)
    tr = ds.train
    if args.init_from:
        model = M.load_checkpoint(args.init_from)
    else:
        model = M.init_for_data(args.seed, tr.features, tr.y_noisy, hidden=tuple(args.hidden))
    spec = loss_spec(args.loss, args.lam, args.K, args.H, args.emp_risk)
    cfg = M.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, momentum=args.momentum,
                        clip_norm=_clip(args.clip_norm), seed=args.seed)
    out = _out_dir(args)
    log_path = out / "train_log.csv"
    with log_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAIN_LOG_COLUMNS)

        def log(rec):
            w.writerow([rec.epoch, repr(rec.emp_risk), repr(rec.fcal_loss), repr(rec.combined)])
            fh.flush()

        model, history = M.fit(model, tr.features, tr.y_noisy, spec, cfg, log=log)
    M.save_checkpoint(model, out / "checkpoint.json")
    _write_json(out / "config.json", _resolved(args))
    last = history[-1]
    print(f"epoch {last.epoch}: emp_risk={last.emp_risk:.6g} combined={last.combined:.6g}")
    return 0


def cmd_eval(args) -> int:
    _require(args.K >= 2, "--K", "must be >= 2")
    _require(args.H >= 2, "--H", "must be >= 2")
    _require(args.bins >= 2, "--bins", "must be >= 2")
    _require(args.sigma_factor > 0, "--sigma-factor", "must be > 0")
    ds = sd.load(args.data)
    predictor = sd.OracleModel(ds.config, args.sigma_factor) if args.oracle else M.load_checkpoint(args.checkpoint)
    config = EvalConfig(K=args.K, H=args.H, S=args.bins, eval_seed=args.eval_seed)
    split = ds.split(args.split)
    extra = {}
    val_pred = predictor.predict(ds.val.features)
    extra["val_nll"] = scaled_nll(1.0, val_pred, ds.val.y_noisy)
    if args.temperature_scale:
        temp = fit_temperature(val_pred, ds.val.y_noisy)
        extra["temperature"] = temp.t
        extra["val_nll_before_scaling"] = extra["val_nll"]
        extra["val_nll"] = scaled_nll(temp.t, val_pred, ds.val.y_noisy)
        predictor = temp.predict_with(predictor)
    report = evaluate(predictor, split, config)
    report.extra.update(extra)
    out = _out_dir(args)
    (out / "report.json").write_text(report.to_json())
    (out / "reliability_z.csv").write_text(report.reliability_z.to_csv())
    (out / "reliability_q.csv").write_text(report.reliability_q.to_csv())
    _write_json(out / "config.json", _resolved(args))
    print(f"ece_z={report.ece_z:.4g} ece_q={report.ece_q:.4g} nll={report.nll:.4g}")
    return 0


def _sweep_values(args) -> list:
    try:
        vals = _float_list(args.values)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"--values: {exc}") from None
    _require(len(vals) > 0, "--values", "grid is empty")
    if args.param == "K":
        _require(all(v == int(v) and v >= 2 for v in vals), "--values", "K values must be integers >= 2")
        vals = [int(v) for v in vals]
    elif args.param == "lambda":
        _require(all(0 <= v <= 1 for v in vals), "--values", "lambda values must lie in [0, 1]")
    else:
        _require(all(v > 0 for v in vals), "--values", "gamma values must be > 0")
    return vals


def _sweep_seed(job: dict) -> list[dict]:
    """All grid points for one seed; failures are recorded per row."""
    p = job["params"]
    seed = job["seed"]
    proto = Protocol(**{**job["protocol"], "hidden": tuple(job["protocol"]["hidden"])})
    eval_config = EvalConfig(K=p["K"], H=512)
    rows = []
    cache = {}

    def data_for(value):
        if p["param"] != "gamma":
            key = "base"
            cfg = SynthConfig(n_samples=p["n"], noise=p["noise"], seed=seed)
        else:
            key = value
            cfg = SynthConfig(n_samples=p["n"], noise="gamma", gamma_shape=value, seed=seed)
        if key not in cache:
            ds = sd.generate(cfg)
            base = pretrain(ds, seed, proto)
            baseline = finetune(base, ds, loss_spec("nll", 0.0, p["K"], p["H"]), seed, proto)
            cache[key] = (ds, base, evaluate(baseline, ds.test, eval_config))
        return cache[key]

    for value in job["values"]:
        row = {"setting": value, "seed": seed}
        try:
            ds, base, base_report = data_for(value)
            lam = value if p["param"] == "lambda" else p["lam"]
            K = value if p["param"] == "K" else p["K"]
            if lam == 0.0:
                rep = base_report
            else:
                spec = loss_spec(p["loss"], lam, K, p["H"])
                rep = evaluate(finetune(base, ds, spec, seed, proto), ds.test, eval_config)
            row.update(smooth_l1=rep.smooth_l1, smooth_l1_gt=rep.smooth_l1_gt, ece_z=rep.ece_z,
                       ece_q=rep.ece_q, nll=rep.nll, baseline_smooth_l1_gt=base_report.smooth_l1_gt,
                       pct_drop=pct_drop(rep.smooth_l1_gt, base_report.smooth_l1_gt), status="ok")
        except (FcalError, ArithmeticError, ValueError) as exc:
            row.update(status=f"failed: {type(exc).__name__}: {exc}")
        rows.append(row)
    sub = Path(job["out"]) / f"seed_{seed}"
    sub.mkdir(parents=True, exist_ok=True)
    _write_rows(sub / "sweep.csv", rows)
    return rows


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in SWEEP_COLUMNS])


def cmd_sweep(args) -> int:
    values = _sweep_values(args)
    _require(len(args.seeds) > 0, "--seeds", "need at least one seed")
    _require(0 <= args.lam <= 1, "--lambda", f"must lie in [0, 1], got {args.lam}")
    _require(args.K >= 2, "--K", "must be >= 2")
    _require(args.H >= 2, "--H", "must be >= 2")
    _require(args.jobs >= 1, "--jobs", "must be >= 1")
    _require(args.n >= 50, "--n", "must be >= 50")
    proto = Protocol(hidden=tuple(args.hidden), batch_size=args.batch_size, momentum=args.momentum,
                     clip_norm=_clip(args.clip_norm), pretrain_epochs=args.pretrain_epochs,
                     pretrain_lr=args.pretrain_lr, finetune_epochs=args.epochs, finetune_lr=args.lr,
                     K=args.K, H=args.H)
    params = {"param": args.param, "loss": args.loss, "lam": args.lam, "K": args.K, "H": args.H,
              "n": args.n, "noise": args.noise}
    out = _out_dir(args)
    jobs = [{"seed": s, "values": values, "params": params, "protocol": proto.to_dict(), "out": str(out)}
            for s in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            per_seed = list(pool.map(_sweep_seed, jobs))
    else:
        per_seed = [_sweep_seed(j) for j in jobs]
    rows = sorted((r for rs in per_seed for r in rs), key=lambda r: (values.index(r["setting"]), r["seed"]))
    _write_rows(out / "sweep.csv", rows)
    with (out / "sweep_summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for v in values:
            ok = [r for r in rows if r["setting"] == v and r["status"] == "ok"]
            w.writerow([_fmt(v), len(ok)] + [_fmt(median(r[c] for r in ok)) for c in SUMMARY_COLUMNS[2:]])
    _write_json(out / "config.json", _resolved(args))
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"setting={r['setting']} seed={r['seed']}: {r['status']}", file=sys.stderr)
    print(f"{len(rows) - len(failed)}/{len(rows)} runs succeeded; results in {out}")
    return 1 if failed else 0


REPORT_COLUMNS = [("smooth_l1_gt", "SmoothL1 (GT)"), ("smooth_l1", "SmoothL1"), ("ece_z", "ECE(z)"),
                  ("ece_q", "ECE(q)"), ("nll", "NLL")]


def cmd_report(args) -> int:
    lines = ["| Approach | " + " | ".join(h for _, h in REPORT_COLUMNS) + " |",
             "|---" * (len(REPORT_COLUMNS) + 1) + "|"]
    for item in args.reports:
        path = Path(item)
        if path.is_dir():
            path = path / "report.json"
        try:
            rep = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FcalError(f"cannot read report {path}: {exc}") from exc
        name = path.parent.name or str(path)
        cells = []
        for key, _ in REPORT_COLUMNS:
            v = rep.get(key)
            cells.append("-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4g}")
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(table)
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, parser)
        _check_required(args)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"fcal {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FcalError, OSError) as exc:
        print(f"fcal {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
