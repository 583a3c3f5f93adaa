"""Command-line surface.

Subcommands: ``gen``, ``train``, ``eval``, ``sweep``, ``simulate``,
``markov``. Every command is deterministic given its ``--seed``; internal
randomness is derived from (seed, fixed role index) so parallelism never
changes results. Exit codes: 0 success, 2 config/usage error, 1 runtime
failure.

Options may also come from a JSON file via ``--config``; files are
validated against the schemas shipped in ``randcal/schemas`` (unknown keys
rejected), and explicit command-line flags override file values. Outputs
(report/certificate/game summary JSON) are validated against their schemas
before being written.
"""

import argparse
import csv
import importlib.resources
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import calibration, data, decision, training
from .errors import ConfigError, ParseError, RandcalError
from .forecaster import load_forecaster, save_forecaster

META_FILE = "meta.json"
SPLITS = ("train", "val", "test")

# Role indices for deriving per-subsystem RNG streams from the user seed.
ROLE_EVAL_REPORT = 101
ROLE_EVAL_RECAL = 102
ROLE_MARKOV = 103
ROLE_STREAM = 104
ROLE_CERT = 105


def _rng(seed, role):
    return np.random.default_rng(np.random.SeedSequence([int(seed), role]))


def _schema(name):
    ref = importlib.resources.files("randcal.schemas") / f"{name}.schema.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def validate_against_schema(doc, schema_name):
    try:
        jsonschema.validate(doc, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{schema_name} validation failed: {exc.message}") from None


def _merge_config(args, command, defaults):
    """Config file < command-line flags; result validated against the schema."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        validate_against_schema(file_cfg, command)
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    validate_against_schema({k: v for k, v in merged.items() if v is not None}, command)
    return merged


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def _load_split(data_dir, name):
    path = Path(data_dir) / f"{name}.csv"
    if not path.exists():
        raise ConfigError(f"missing dataset file: {path}")
    return data.load_csv(path)


def _load_meta(data_dir):
    path = Path(data_dir) / META_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t != ""]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t != ""]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args):
    defaults = {
        "kind": "heteroscedastic",
        "n": 5000,
        "seed": 0,
        "d": 8,
        "noise": None,
        "fractions": [0.6, 0.2, 0.2],
        "out": None,
    }
    cfg = _merge_config(args, "gen", defaults)
    if cfg["out"] is None:
        raise ConfigError("missing required option: out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    meta = {"kind": kind, "n": cfg["n"], "seed": cfg["seed"], "fractions": cfg["fractions"]}
    if kind == "toy":
        spec = data.ToySpec(n=cfg["n"], seed=cfg["seed"],
                            **({"noise": cfg["noise"]} if cfg["noise"] is not None else {}))
        ds = data.gen_toy(spec)
    elif kind == "heteroscedastic":
        spec = data.HeteroscedasticSpec(n=cfg["n"], seed=cfg["seed"], d=cfg["d"])
        ds = data.gen_heteroscedastic(spec)
        meta["d"] = cfg["d"]
    elif kind == "credit":
        spec = data.CreditSpec(
            n=cfg["n"], seed=cfg["seed"], d=cfg["d"],
            **({"noise": cfg["noise"]} if cfg["noise"] is not None else {}),
        )
        ds, y0 = data.gen_credit(spec)
        meta["d"] = cfg["d"]
        meta["y0"] = y0
        meta["noise"] = spec.noise
    else:
        raise ConfigError(f"unknown generator kind: {kind!r}")
    parts = data.split(ds, cfg["fractions"], seed=cfg["seed"])
    for name, part in zip(SPLITS, parts):
        data.save_csv(part, out / f"{name}.csv")
    (out / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(parts)} splits to {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "data": None,
    "out": None,
    "alpha": 1.0,
    "hidden": [64, 64],
    "epochs": 150,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "seed": 0,
    "patience": 25,
    "sigma_floor": 1e-3,
    "epsilon": 0.1,
    "gamma": 0.05,
}


def _run_train(cfg):
    train_ds = _load_split(cfg["data"], "train")
    val_ds = _load_split(cfg["data"], "val")
    tc = training.TrainConfig(
        alpha=cfg["alpha"],
        hidden=tuple(cfg["hidden"]),
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        seed=cfg["seed"],
        patience=cfg["patience"],
        sigma_floor=cfg["sigma_floor"],
    )
    result = training.train(train_ds, val_ds, tc)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_forecaster(result.forecaster, out / "checkpoint.json", train_config=tc.to_dict())
    _write_csv(out / "history.csv", training.HISTORY_COLUMNS, training.history_rows(result.history))
    # Certificate on the held-out test split (never touched by training or
    # the early-stopping criterion).
    test_ds = _load_split(cfg["data"], "test")
    cert = training.certify_forecaster(
        result.forecaster, test_ds, cfg["epsilon"], cfg["gamma"], _rng(cfg["seed"], ROLE_CERT)
    )
    doc = cert.to_dict()
    validate_against_schema(doc, "certificate")
    (out / "certificate.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return result


def cmd_train(args):
    cfg = _merge_config(args, "train", TRAIN_DEFAULTS)
    for req in ("data", "out"):
        if cfg[req] is None:
            raise ConfigError(f"missing required option: {req}")
    result = _run_train(cfg)
    status = "aborted: " + result.abort_reason if result.aborted else "ok"
    print(f"trained alpha={cfg['alpha']} seed={cfg['seed']} best_epoch={result.best_epoch} [{status}]")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {
    "data": None,
    "model": None,
    "out": None,
    "split": "test",
    "deltas": list(calibration.EVAL_DELTAS_DEFAULT),
    "seed": 0,
    "recalibrate": None,
    "epsilon": 0.1,
    "gamma": 0.05,
}


def _report_and_curves(forecaster, ds, cfg, out, tag, rng):
    report = calibration.evaluate(
        forecaster, ds, rng, deltas=cfg["deltas"], epsilon=cfg["epsilon"], gamma=cfg["gamma"]
    )
    suffix = "" if tag == "pre" else "_recalibrated"
    _write_csv(
        out / f"curve{suffix}.csv",
        ("delta", "epsilon_hat"),
        [(p.delta, p.epsilon_hat) for p in report.curve],
    )
    groups = calibration.interpretable_groups(ds, min_size=report.min_group_size)
    pits = None
    if groups:
        pits = calibration.pit_sample(forecaster, ds, _rng(cfg["seed"], ROLE_EVAL_REPORT + 50))
        _write_csv(
            out / f"groups{suffix}.csv",
            ("group", "size", "error"),
            [(g.name, g.size, calibration.group_calibration_error(pits, g)) for g in groups],
        )
    return report


def cmd_eval(args):
    cfg = _merge_config(args, "eval", EVAL_DEFAULTS)
    for req in ("data", "model", "out"):
        if cfg[req] is None:
            raise ConfigError(f"missing required option: {req}")
    ds = _load_split(cfg["data"], cfg["split"])
    forecaster = load_forecaster(cfg["model"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pre = _report_and_curves(forecaster, ds, cfg, out, "pre", _rng(cfg["seed"], ROLE_EVAL_REPORT))
    post = None
    if cfg["recalibrate"]:
        val_ds = _load_split(cfg["data"], "val")
        recal = calibration.recalibrate(forecaster, val_ds, _rng(cfg["seed"], ROLE_EVAL_RECAL))
        save_forecaster(recal, out / "checkpoint_recalibrated.json")
        post = _report_and_curves(recal, ds, cfg, out, "post", _rng(cfg["seed"], ROLE_EVAL_RECAL + 1))
    doc = {"pre": pre.to_dict(), "post": post.to_dict() if post else None}
    validate_against_schema(doc, "report")
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"average_w1={pre.average_w1:.6f} (report in {out})")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_DEFAULTS = {
    "data": None,
    "out": None,
    "alphas": [0.1, 0.3, 0.5, 0.7, 1.0],
    "seeds": 5,
    "jobs": 1,
    "hidden": [64, 64],
    "epochs": 150,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "patience": 25,
    "sigma_floor": 1e-3,
    "epsilon": 0.1,
    "gamma": 0.05,
    "deltas": list(calibration.EVAL_DELTAS_DEFAULT),
}

SWEEP_COLUMNS = ("alpha", "seed", "nll", "mean_sigma", "worst_group_err", "worst_interp_err")


def _sweep_cell(cfg, alpha, seed):
    """Train + evaluate one (alpha, seed) cell; returns the summary row."""
    cell_dir = Path(cfg["out"]) / f"alpha{alpha}_seed{seed}"
    summary_path = cell_dir / "cell.json"
    if summary_path.exists():  # resumable: completed cells are skipped
        return json.loads(summary_path.read_text(encoding="utf-8"))
    train_cfg = dict(cfg, alpha=alpha, seed=seed, out=str(cell_dir))
    for key in ("alphas", "seeds", "jobs", "deltas"):
        train_cfg.pop(key, None)
    result = _run_train(train_cfg)
    test_ds = _load_split(cfg["data"], "test")
    report = calibration.evaluate(
        result.forecaster,
        test_ds,
        _rng(seed, ROLE_EVAL_REPORT),
        deltas=cfg["deltas"],
        epsilon=cfg["epsilon"],
        gamma=cfg["gamma"],
    )
    by_delta = {round(p.delta, 6): p.epsilon_hat for p in report.curve}
    worst_group = by_delta.get(0.2, report.curve[0].epsilon_hat)
    worst_interp = report.worst_interpretable[1] if report.worst_interpretable else float("nan")
    row = {
        "alpha": alpha,
        "seed": seed,
        "nll": report.sharpness.mean_nll,
        "mean_sigma": report.sharpness.mean_sigma,
        "worst_group_err": worst_group,
        "worst_interp_err": worst_interp,
    }
    summary_path.write_text(json.dumps(row) + "\n", encoding="utf-8")
    return row


def cmd_sweep(args):
    cfg = _merge_config(args, "sweep", SWEEP_DEFAULTS)
    for req in ("data", "out"):
        if cfg[req] is None:
            raise ConfigError(f"missing required option: {req}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    cells = [(a, s) for a in cfg["alphas"] for s in range(cfg["seeds"])]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            rows = list(pool.map(_sweep_cell, [cfg] * len(cells), *zip(*cells)))
    else:
        rows = [_sweep_cell(cfg, a, s) for a, s in cells]
    _write_csv(
        out / "summary.csv",
        SWEEP_COLUMNS,
        [[r[c] for c in SWEEP_COLUMNS] for r in rows],
    )
    print(f"sweep complete: {len(rows)} cells -> {out / 'summary.csv'}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

SIMULATE_DEFAULTS = {
    "data": None,
    "model": None,
    "out": None,
    "stream_n": 20000,
    "seed": 0,
    "refit_every": 200,
    "y0": None,
}


def _customer_stream(cfg, meta):
    """Fresh customers: re-generate from the recorded credit spec when the
    data directory came from `gen --kind credit`, else replay the test split."""
    if meta.get("kind") == "credit":
        spec = data.CreditSpec(
            n=cfg["stream_n"],
            seed=int(np.random.SeedSequence([cfg["seed"], ROLE_STREAM]).generate_state(1)[0]),
            d=meta.get("d", 8),
            noise=meta.get("noise", 0.06),
        )
        ds, _ = data.gen_credit(spec)
        return ds.X, ds.y
    ds = _load_split(cfg["data"], "test")
    return ds.X, ds.y


def cmd_simulate(args):
    cfg = _merge_config(args, "simulate", SIMULATE_DEFAULTS)
    for req in ("data", "model", "out"):
        if cfg[req] is None:
            raise ConfigError(f"missing required option: {req}")
    meta = _load_meta(cfg["data"])
    y0 = cfg["y0"] if cfg["y0"] is not None else meta.get("y0")
    if y0 is None:
        raise ConfigError("y0 not given and not recorded in the dataset meta file")
    forecaster = load_forecaster(cfg["model"])
    stream_X, stream_y = _customer_stream(cfg, meta)
    game_cfg = decision.BankGameConfig(y0=float(y0), seed=cfg["seed"], refit_every=cfg["refit_every"])
    result = decision.run_credit_game(forecaster, game_cfg, stream_X, stream_y)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    header = ["round", "phase", "y", "applied", "decision", "bank_utility", "customer_utility", "exploit"]
    rows = []
    for trace in result.traces:
        for i in range(trace.applied.size):
            rows.append(
                (
                    i,
                    trace.phase,
                    float(stream_y[i]),
                    int(trace.applied[i]),
                    int(trace.decision[i]),
                    float(trace.bank_utility[i]),
                    float(trace.customer_utility[i]),
                    int(trace.exploit[i]),
                )
            )
    _write_csv(out / "trace.csv", header, rows)
    doc = result.summary_dict()
    validate_against_schema(doc, "game_summary")
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(
        "bank utility: random={:.4f} rational={:.4f} exploit={:.3f}".format(
            result.random_phase.mean_bank_utility,
            result.rational_phase.mean_bank_utility,
            result.rational_phase.exploit_fraction,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# markov
# ---------------------------------------------------------------------------

MARKOV_DEFAULTS = {
    "data": None,
    "model": None,
    "out": None,
    "k": [2.0, 4.0, 8.0, 16.0],
    "split": "test",
    "seed": 0,
    "pivot": None,
}

MARKOV_COLUMNS = ("k", "empirical", "bound_avg", "bound_paic")


def one_sided_error_spec(pivot, probe_range):
    """Non-negative monotone loss pair: overshoot vs undershoot around pivot."""
    return decision.MonotonicLossSpec(
        actions=("over", "under"),
        curves={
            "over": decision.CurveLoss(fn=lambda y: np.maximum(y - pivot, 0.0), direction="non-decreasing"),
            "under": decision.CurveLoss(fn=lambda y: np.maximum(pivot - y, 0.0), direction="non-increasing"),
        },
        nonnegative=True,
        probe_range=probe_range,
    )


def cmd_markov(args):
    cfg = _merge_config(args, "markov", MARKOV_DEFAULTS)
    for req in ("data", "model", "out"):
        if cfg[req] is None:
            raise ConfigError(f"missing required option: {req}")
    ds = _load_split(cfg["data"], cfg["split"])
    forecaster = load_forecaster(cfg["model"])
    pivot = cfg["pivot"] if cfg["pivot"] is not None else float(np.median(ds.y))
    lo, hi = float(ds.y.min()), float(ds.y.max())
    span = max(hi - lo, 1e-6)
    spec = one_sided_error_spec(pivot, (lo - span, hi + span))
    rows = decision.markov_check(forecaster, ds, spec, cfg["k"], _rng(cfg["seed"], ROLE_MARKOV))
    _write_csv(
        Path(cfg["out"]),
        MARKOV_COLUMNS,
        [(r.k, r.empirical, r.bound_avg, r.bound_paic) for r in rows],
    )
    for r in rows:
        print(f"k={r.k:g}: empirical={r.empirical:.4f} bound_avg={r.bound_avg:.4f} bound_paic={r.bound_paic:.4f}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="randcal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic datasets and split them")
    p.add_argument("--config")
    p.add_argument("--kind", choices=["toy", "heteroscedastic", "credit"])
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--fractions", type=_float_list)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a forecaster")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--alpha", type=float)
    p.add_argument("--hidden", type=_int_list)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--sigma-floor", dest="sigma_floor", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="calibration report for a trained model")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--split", choices=list(SPLITS))
    p.add_argument("--deltas", type=_float_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--recalibrate", action="store_const", const=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="alpha x seed trade-off study")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--alphas", type=_float_list)
    p.add_argument("--seeds", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--hidden", type=_int_list)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="two-phase adversarial credit game")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--stream-n", dest="stream_n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--refit-every", dest="refit_every", type=int)
    p.add_argument("--y0", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("markov", help="empirical loss-exceedance table")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--k", type=_float_list)
    p.add_argument("--split", choices=list(SPLITS))
    p.add_argument("--seed", type=int)
    p.add_argument("--pivot", type=float)
    p.set_defaults(func=cmd_markov)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RandcalError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
