"""Command-line front end: ``damrl {synthesize,fit-inflow,train,evaluate,simulate,rerun}``.

Every command writes its artifacts plus one ``manifest.json`` recording the
argument vector, the resolved configuration, the seed and artifact hashes.
Artifacts are deterministic; the wall-clock timestamp lives only in the
manifest. Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date, datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .data import load_csv, resolve_data_path, series, synthesize, write_csv
from .env import BootstrapSource, EpisodeConfig, ReplaySource, water_year_start
from .exceptions import DamRLError, DivergenceError
from .experiment import RunConfig, evaluation_config, fit_inflow_model, prepare_records, train_config
from .hydro import read_config, read_config_text
from .inflow import InflowModelKind, InflowSpec, filter_series, load_model, nse, save_model, write_records_csv
from .policies import ConstantPolicy, RandomPolicy, SchedulePolicy
from .rl.evaluation import evaluate_policy
from .rl.learners import ALGORITHMS, TrainedPolicy
from .rl.tasks import DamControlTask

log = logging.getLogger("damrl")

MODEL_FILES = {InflowModelKind.GLS: "gls.json", InflowModelKind.DLM: "dlm.json",
               InflowModelKind.GLS_PLUS_DLM: "gls_dlm.json"}
METRIC_KEYS = ("mean_return", "std_return", "mean_discounted_return", "std_discounted_return",
               "flood_days", "spill_total")


class CliError(Exception):
    """Runtime failure reported to the user with exit code 1."""


# -- shared plumbing ---------------------------------------------------------------------

def load_run(config_path=None) -> RunConfig:
    """Benchmark settings overlaid with the user's key-value file, if any."""
    mapping = read_config_text(resources.files("damrl").joinpath("benchmark.cfg").read_text())
    if config_path:
        path = resolve_data_path(config_path)
        if not path.exists():
            raise CliError(f"config file not found: {config_path}")
        mapping.update(read_config(path))
    return RunConfig.from_mapping(mapping)


def _seed(args, run) -> int:
    return int(args.seed if args.seed is not None else run.extra.get("seed", 0))


def _params(args, run):
    k = getattr(args, "k", None)
    return run.params if k is None else dataclasses.replace(run.params, rainfall_window=k)


def _records(args, run, params):
    if args.data:
        path = resolve_data_path(args.data)
        if not path.exists():
            raise CliError(f"data file not found: {args.data}")
        records = load_csv(path)
    else:
        records = synthesize(run.synthetic_config(), params)
    return prepare_records(records, params)


def _split(args, run, records):
    train_end = args.train_end if args.train_end is not None else int(run.extra.get("train_end", 2018))
    test_year = args.test_year if args.test_year is not None else int(run.extra.get("test_year", 2019))
    if train_end >= test_year:
        raise CliError(f"--train-end {train_end} must precede --test-year {test_year}")
    train = [r for r in records if r.date.year <= train_end]
    test = [r for r in records if r.date.year == test_year]
    if not train or not test:
        raise CliError(f"data must cover years up to {train_end} and the year {test_year}")
    return train, test, test_year


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_manifest(path, command, argv, run, seed, artifacts, status="ok", **extra):
    doc = {
        "command": command, "argv": list(argv), "config": run.snapshot(), "seed": seed,
        "version": __version__, "status": status,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "artifacts": {name: {"path": str(p), "sha256": _sha256(p)}
                      for name, p in sorted(artifacts.items()) if Path(p).exists()},
    }
    doc.update(extra)
    write_json(path, doc)
    return doc


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ------------------------------------------------------------------------------

def cmd_synthesize(args, argv):
    run = load_run(args.config)
    seed = _seed(args, run)
    overrides = {"seed": seed}
    if args.years is not None:
        overrides["years"] = args.years
    if args.start_year is not None:
        overrides["start_year"] = args.start_year
    cfg = dataclasses.replace(run.synthetic_config(), **overrides)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, synthesize(cfg, run.params))
    write_manifest(out.with_name(out.stem + ".manifest.json"), "synthesize", argv, run, seed,
                   {"data": out})
    print(f"wrote {out}")


def cmd_fit_inflow(args, argv):
    run = load_run(args.config)
    params = _params(args, run)
    records = _records(args, run, params)
    train, test, _ = _split(args, run, records)
    out = _out_dir(args.out_dir)
    rain_train, rain_test = series(train, "rainfall_mm"), series(test, "rainfall_mm")
    flow_train, flow_test = series(train, "inflow_bcm"), series(test, "inflow_bcm")
    test_dates = [r.date for r in test]

    report, artifacts = {}, {}
    for kind, filename in MODEL_FILES.items():
        try:
            est = fit_inflow_model(kind, train, params.rainfall_window)
            train_recs = (est.records_ if hasattr(est, "records_")
                          else est.forecast_records(rain_train, flow_train, [r.date for r in train]))
            test_recs = est.forecast_records(rain_test, flow_test, test_dates, history=rain_train)
            report[kind.value] = {"train": nse(train_recs), "test": nse(test_recs)}
        except (DamRLError, ValueError, ArithmeticError) as exc:
            raise CliError(f"{kind.value}: {exc}") from exc
        save_model(out / filename, est)
        forecasts = out / f"{filename[:-5]}_test_forecasts.csv"
        write_records_csv(forecasts, test_recs)
        artifacts[kind.value] = out / filename
        artifacts[f"{kind.value}_forecasts"] = forecasts
    replay = {split: nse(filter_series("REPLAY", r, f, params.rainfall_window))
              for split, r, f in (("train", rain_train, flow_train), ("test", rain_test, flow_test))}
    report[InflowModelKind.REPLAY.value] = replay

    metrics = out / "metrics.json"
    write_json(metrics, {"nse": report, "k": params.rainfall_window})
    artifacts["metrics"] = metrics
    write_manifest(out / "manifest.json", "fit-inflow", argv, run, _seed(args, run), artifacts)
    print(f"{'model':<14}{'train NSE':>12}{'test NSE':>12}")
    for name, row in report.items():
        print(f"{name:<14}{row['train']:>12.4f}{row['test']:>12.4f}")


def _inflow_spec(args, run, train, params) -> InflowSpec:
    choice = args.inflow or str(run.extra.get("inflow", "DLM"))
    if choice.lower() == "replay":
        return InflowSpec.replay(params.rainfall_window)
    path = resolve_data_path(choice)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise CliError(f"inflow model not found: {choice}")
        spec = load_model(path)
    else:
        spec = InflowSpec.from_estimator(fit_inflow_model(choice, train, params.rainfall_window))
    if spec.n_lags != params.rainfall_window:
        raise CliError(f"inflow model uses {spec.n_lags} lags, simulator window is "
                       f"{params.rainfall_window}")
    return spec


def write_curve(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_return", "std_return"])
        for step, mean, std in curve:
            w.writerow([step, repr(float(mean)), repr(float(std))])


def _train_one(run, algo, seed, steps, eval_interval, train_recs, test_recs, spec, params, out):
    overrides = {"seed": seed}
    if steps is not None:
        overrides["total_steps"] = steps
    if eval_interval is not None:
        overrides["eval_interval"] = eval_interval
    learner = run.learner_for(algo, **overrides)
    task = DamControlTask(train_config(train_recs, params, spec, seed))
    eval_task = DamControlTask(evaluation_config(test_recs, params, seed))
    out.mkdir(parents=True, exist_ok=True)
    curve_path, policy_path = out / "curve.csv", out / "policy.json"
    try:
        learner.fit(task, eval_task)
    except DivergenceError as exc:
        write_curve(curve_path, getattr(learner, "curve_", []))
        return {"curve": curve_path}, str(exc)
    write_curve(curve_path, learner.curve_)
    learner.to_policy(params).save(policy_path)
    return {"curve": curve_path, "policy": policy_path}, None


def cmd_train(args, argv):
    run = load_run(args.config)
    params = _params(args, run)
    records = _records(args, run, params)
    train, test, _ = _split(args, run, records)
    spec = _inflow_spec(args, run, train, params)
    master = _seed(args, run)
    seeds = [master + i for i in range(args.replicates)]
    out = _out_dir(args.out_dir)
    dirs = [out if len(seeds) == 1 else out / f"seed_{s}" for s in seeds]

    def job(pair):
        s, d = pair
        return _train_one(run, args.algo, s, args.steps, args.eval_interval, train, test, spec,
                          params, d)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(job, zip(seeds, dirs)))

    artifacts, failures = {}, []
    for s, d, (arts, err) in zip(seeds, dirs, results):
        prefix = "" if len(seeds) == 1 else f"seed_{s}/"
        artifacts.update({prefix + k: v for k, v in arts.items()})
        if err:
            failures.append(f"seed {s}: {err}")
    write_manifest(out / "manifest.json", "train", argv, run, master, artifacts,
                   status="diverged" if failures else "ok", seeds=seeds)
    if failures:
        raise CliError("training diverged (partial curve kept): " + "; ".join(failures))
    for d in dirs:
        print(f"wrote {d / 'policy.json'}")


def _load_policies(args):
    policies = {}
    names = [p for p in (args.policies or "").split(",") if p.strip()]
    for name in names:
        path = resolve_data_path(name.strip())
        if not path.exists():
            raise CliError(f"policy artifact not found: {name}")
        label = path.stem if path.stem not in policies else str(path)
        policies[label] = TrainedPolicy.load(path)
    if args.baseline:
        policies["baseline"] = SchedulePolicy()
    return policies


def cmd_evaluate(args, argv):
    if not args.policies and not args.baseline:
        raise UsageError("evaluate needs --policies and/or --baseline")
    run = load_run(args.config)
    params = _params(args, run)
    policies = _load_policies(args)
    records = _records(args, run, params)
    _, test, test_year = _split(args, run, records)
    seed = _seed(args, run)
    out = _out_dir(args.out_dir)
    report, artifacts = {}, {}
    for name, policy in policies.items():
        if getattr(policy, "sim_params", params) not in (None, params):
            log.warning("policy %s was trained with different simulator parameters", name)
        res = evaluate_policy(policy, evaluation_config(test, params, seed), args.episodes, seed)
        report[name] = {k: res[k] for k in METRIC_KEYS}
        for i, trace in enumerate(res["traces"]):
            path = out / (f"trace_{name}.csv" if args.episodes == 1 else f"trace_{name}_{i}.csv")
            trace.to_csv(path)
            artifacts[path.stem] = path
    metrics = out / "metrics.json"
    write_json(metrics, {"policies": report, "test_year": test_year, "episodes": args.episodes,
                         "seed": seed})
    artifacts["metrics"] = metrics
    write_manifest(out / "manifest.json", "evaluate", argv, run, seed, artifacts)
    print(f"{'policy':<20}{'return':>14}{'discounted':>14}{'flood days':>12}")
    for name, row in report.items():
        print(f"{name:<20}{row['mean_return']:>14.4f}{row['mean_discounted_return']:>14.4f}"
              f"{row['flood_days']:>12.1f}")


def _make_policy(text, seed, params):
    if text == "baseline":
        return SchedulePolicy(a_max=params.a_max)
    if text == "random":
        return RandomPolicy(seed, (0.0, params.a_max))
    if text.startswith("constant:"):
        return ConstantPolicy(float(text.split(":", 1)[1]), params.a_max)
    path = resolve_data_path(text)
    if not path.exists():
        raise CliError(f"policy artifact not found: {text}")
    return TrainedPolicy.load(path)


def cmd_simulate(args, argv):
    run = load_run(args.config)
    params = _params(args, run)
    seed = _seed(args, run)
    policy = _make_policy(args.policy, seed, params)
    records = _records(args, run, params)
    test_year = args.test_year if args.test_year is not None else int(run.extra.get("test_year", 2019))
    start = args.start_date or water_year_start(test_year, params)
    source = BootstrapSource(records) if args.source == "bootstrap" else ReplaySource(records)
    rec = next((r for r in records if r.date == start), None)
    level = rec.water_level_m if rec is not None and rec.water_level_m is not None else None
    cfg = EpisodeConfig(params=params, source=source, seed=seed, start_date=start,
                        initial_level=level)
    res = evaluate_policy(policy, cfg, 1, seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trace = res["traces"][0]
    trace.to_csv(out)
    write_manifest(out.with_name(out.stem + ".manifest.json"), "simulate", argv, run, seed,
                   {"trace": out}, metrics={k: res[k] for k in METRIC_KEYS})
    print(f"wrote {out} ({len(trace.outcomes)} days, return {trace.undiscounted_return:.4f})")


def cmd_rerun(args, argv):
    path = Path(args.manifest)
    if not path.exists():
        raise CliError(f"manifest not found: {args.manifest}")
    return main(json.loads(path.read_text())["argv"])


# -- parser --------------------------------------------------------------------------------

class UsageError(Exception):
    pass


def _date(text):
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file overlaid on the benchmark")
    common.add_argument("--seed", type=int, help="master seed for every stochastic component")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="dataset CSV (default: the synthetic benchmark)")
    data.add_argument("--train-end", type=int)
    data.add_argument("--test-year", type=int)
    data.add_argument("--k", type=_positive, help="rainfall lags (overrides rainfall_window)")

    parser = argparse.ArgumentParser(prog="damrl", description="Reservoir release learning toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--years", type=_positive)
    p.add_argument("--start-year", type=int)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("fit-inflow", parents=[common, data], help="fit inflow models, report NSE")
    p.add_argument("--out-dir", default="inflow")
    p.set_defaults(func=cmd_fit_inflow)

    p = sub.add_parser("train", parents=[common, data], help="train a release policy")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--steps", type=_positive)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--inflow", help="inflow model JSON, a model kind to fit, or 'replay'")
    p.add_argument("--out-dir", default="train")
    p.add_argument("--replicates", type=_positive, default=1,
                   help="train seeds seed..seed+N-1 into seed_<s> subdirectories")
    p.add_argument("--jobs", type=_positive, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, data], help="compare policies on the test year")
    p.add_argument("--policies", help="comma-separated policy JSON files")
    p.add_argument("--baseline", action="store_true", help="include the operators' schedule")
    p.add_argument("--episodes", type=_positive, default=1)
    p.add_argument("--out-dir", default="evaluation")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common, data], help="dump one episode trace")
    p.add_argument("--policy", default="baseline",
                   help="baseline, random, constant:<cumecs> or a policy JSON")
    p.add_argument("--start-date", type=_date)
    p.add_argument("--source", choices=("replay", "bootstrap"), default="replay")
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rerun", help="repeat the invocation recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun, config=None, seed=None, verbose=False)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"damrl: error: {exc}", file=sys.stderr)
        return 2
    except (CliError, DamRLError, ValueError, KeyError, OSError, ArithmeticError) as exc:
        print(f"damrl: error: {exc}", file=sys.stderr)
        return 1
    return int(result or 0)


if __name__ == "__main__":
    sys.exit(main())
