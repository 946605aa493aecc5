"""Command-line interface: ``mlaqp <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

from . import __version__
from .catalogue import load, save
from .config import resolve
from .engine import LineIssue, Predictor, TrainConfig, train
from .errors import MlaqpError, SQLError
from .evaluation import curve, run_protocol
from .executor import load_csv, save_csv
from .gbdt import GbdtConfig
from .monitoring import (
    MONITOR_ALPHA,
    MONITOR_CHECK_EVERY,
    MONITOR_WINDOW,
    LogMonitor,
    follow,
    run_monitor,
)
from .drift import WorkloadShiftMonitor
from .querylog import LogError, iter_log, write_log
from .schema import load_schema, save_schema
from .workload import WorkloadSpec, gen_analyst_workload, gen_dataset, gen_queries

log = logging.getLogger("mlaqp")

TRAIN_DEFAULTS = {
    "t": 0.1,
    "intervals": True,
    "clustering": False,
    "growth_threshold": None,
    "min_cluster_size": 20,
    "min_samples_leaf": GbdtConfig().min_samples_leaf,
    "max_depth": GbdtConfig().max_depth,
    "learning_rate": GbdtConfig().learning_rate,
    "rounds": GbdtConfig().rounds,
    "seed": 0,
}


def _read_log(path):
    records, issues, numbers = [], [], []
    for no, rec in iter_log(path):
        if isinstance(rec, LogError):
            issues.append(LineIssue(no, rec.message))
        else:
            records.append(rec)
            numbers.append(no)
    return records, issues, numbers


def _train_config(s: dict) -> TrainConfig:
    point = GbdtConfig.point(min_samples_leaf=int(s["min_samples_leaf"]), max_depth=int(s["max_depth"]),
                             learning_rate=float(s["learning_rate"]), rounds=int(s["rounds"]),
                             seed=int(s["seed"]))
    return TrainConfig(point=point, t=float(s["t"]), intervals=bool(s["intervals"]),
                       clustering=bool(s["clustering"]),
                       growth_threshold=None if s["growth_threshold"] is None else float(s["growth_threshold"]),
                       min_cluster_size=int(s["min_cluster_size"]))


def _train_settings(args) -> dict:
    cli = {k: getattr(args, k, None) for k in TRAIN_DEFAULTS}
    return resolve(cli, TRAIN_DEFAULTS, args.config)


def cmd_gen_workload(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = gen_dataset(args.dims, args.rows, seed=args.seed)
    if args.analysts:
        recs = gen_analyst_workload(ds, args.analysts, args.sigma, args.queries, seed=args.seed + 1,
                                    p=args.predicates)
    else:
        recs = gen_queries(WorkloadSpec(args.queries, args.dims, args.predicates, seed=args.seed + 1), ds)
    save_schema(ds.schema, out / "schema.json")
    write_log(recs, out / "queries.jsonl")
    if not args.no_data:
        save_csv(ds, out / "data.csv")
    print(f"wrote {len(recs)} queries to {out / 'queries.jsonl'}")
    return 0


def cmd_train(args) -> int:
    settings = _train_settings(args)
    schema = load_schema(args.schema)
    records, issues, numbers = _read_log(args.log)
    cat, issues = train(records, schema, _train_config(settings), issues, numbers)
    for issue in sorted(issues, key=lambda i: i.line):
        print(f"{args.log}:{issue.line}: {issue.message}", file=sys.stderr)
    size = save(cat, args.out)
    print(f"catalogue with {len(cat.entries)} entries written to {args.out} ({size} bytes)")
    return 0


def cmd_eval(args) -> int:
    settings = _train_settings(args)
    schema = load_schema(args.schema)
    records, issues, _ = _read_log(args.log)
    for issue in issues:
        print(f"{args.log}:{issue.line}: {issue.message}", file=sys.stderr)
    cfg = _train_config(settings)
    report, _ = run_protocol(records, schema, args.split, cfg, int(settings["seed"]), latency_n=args.latency)
    if args.curve:
        sizes = [int(x) for x in args.curve.split(",")]
        pts = curve(records, schema, sizes, args.split, TrainConfig(point=cfg.point, intervals=False),
                    int(settings["seed"]))
        report.curve = {str(k): v for k, v in pts.items()}
    if args.json:
        Path(args.json).write_text(report.to_json())
    print(report.to_text())
    return 0


def cmd_serve(args) -> int:
    from .service import make_server

    s = resolve({"host": args.host, "port": args.port}, {"host": "127.0.0.1", "port": 8080}, args.config)
    server, _ = make_server(args.catalogue, s["host"], int(s["port"]))
    print(f"serving {args.catalogue} on http://{s['host']}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _fmt(v) -> str:
    # shortest round-trip form, so REPL output matches the HTTP JSON exactly
    return "NULL" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _print_result(res: dict, out) -> None:
    items = res.get("results", [res])
    for r in items:
        if r.get("groups") is not None:
            print(f"{r['model_id']}: {len(r['groups'])} groups", file=out)
            for g in r["groups"]:
                print(f"  {tuple(g['group'])}: {_fmt_one(g)}", file=out)
        else:
            print(f"{r['model_id']}: {_fmt_one(r)}", file=out)
    print(f"({res['latency_micros']} us)", file=out)


def _fmt_one(r: dict) -> str:
    s = _fmt(r["estimate"])
    iv = r.get("interval")
    if iv:
        s += f"  [{_fmt(iv['low'])}, {_fmt(iv['high'])}] @ {iv['nominal_coverage']:.0%}"
    return s


def repl(predictor: Predictor, lines, out) -> None:
    workload = None
    if predictor.catalogue.workload_stats is not None:
        workload = WorkloadShiftMonitor(predictor.catalogue.workload_stats, min_samples=1)
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line in (".quit", ".exit"):
            break
        try:
            if line.startswith(".explain"):
                q = predictor.parse(line[len(".explain"):].strip())
                for m, g in predictor.vectors(q):
                    prefix = "" if g is None else f"{tuple(g)} "
                    print(prefix + repr(m), file=out)
            elif line == ".drift":
                if workload is None:
                    print("no workload statistics in this catalogue", file=out)
                else:
                    print(json.dumps(workload.status()), file=out)
            elif line.startswith("."):
                print(f"unknown command {line.split()[0]}; try .explain, .drift, .quit", file=out)
            else:
                q = predictor.parse(line)
                res = predictor.predict_sql(line)
                _print_result(res, out)
                if workload is not None and not q.group_by:
                    workload.observe(predictor.vectors(q)[0][0])
        except SQLError as exc:
            print(f"error: {exc.message} at position {exc.position}", file=out)
            print(f"  {line}\n  {' ' * exc.position}^", file=out)
        except MlaqpError as exc:
            print(f"error: {exc}", file=out)


def cmd_repl(args) -> int:
    predictor = Predictor(load(args.catalogue))

    def lines():
        interactive = sys.stdin.isatty()
        while True:
            if interactive:
                sys.stdout.write("mlaqp> ")
                sys.stdout.flush()
            line = sys.stdin.readline()
            if not line:
                return
            yield line

    repl(predictor, lines(), sys.stdout)
    return 0


def cmd_monitor(args) -> int:
    s = resolve({"alpha": args.alpha, "window": args.window, "check_every": args.check_every},
                {"alpha": MONITOR_ALPHA, "window": MONITOR_WINDOW, "check_every": MONITOR_CHECK_EVERY},
                args.config)
    mon = LogMonitor(load(args.catalogue), float(s["alpha"]), int(s["window"]), int(s["check_every"]))
    if args.follow:
        lines = follow(args.log, args.poll, args.idle_timeout)
    else:
        lines = (ln.rstrip("\n") for ln in open(args.log))
    out = open(args.events, "a") if args.events else sys.stdout
    try:
        n = run_monitor(mon, lines, out)
    finally:
        if args.events:
            out.close()
    print(f"{n} drift events", file=sys.stderr)
    return 0


def _add_train_flags(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--t", type=float, help="interval miscoverage (levels t/2, 1-t/2); default 0.1")
    p.add_argument("--no-intervals", dest="intervals", action="store_const", const=False)
    p.add_argument("--clustering", action="store_const", const=True,
                   help="also train per-cluster local models")
    p.add_argument("--growth-threshold", type=float)
    p.add_argument("--min-cluster-size", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlaqp", description="learned answers for aggregate SQL queries")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-workload", help="generate a synthetic dataset and query log")
    p.add_argument("--dims", type=int, default=10)
    p.add_argument("--predicates", type=int, default=2)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--rows", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--analysts", type=int, default=0, help="use N Gaussian analysts instead of uniform centers")
    p.add_argument("--sigma", type=float, default=0.02, help="analyst spread as a fraction of column span")
    p.add_argument("--no-data", action="store_true", help="skip writing data.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("train", help="train a model catalogue from a query log")
    p.add_argument("--log", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True, help="catalogue directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="70/30 evaluation of a query log")
    p.add_argument("--log", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--curve", help="comma-separated training sizes, e.g. 100,300,1000")
    p.add_argument("--latency", type=int, default=0, help="number of timed predictions")
    p.add_argument("--json", help="write the report as JSON here")
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="HTTP prediction service")
    p.add_argument("--catalogue", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("repl", help="interactive SQL prompt")
    p.add_argument("--catalogue", required=True)
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("monitor", help="drift monitoring over a live query log")
    p.add_argument("--catalogue", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--check-every", type=int)
    p.add_argument("--follow", action="store_true", help="keep tailing the log")
    p.add_argument("--poll", type=float, default=0.5)
    p.add_argument("--idle-timeout", type=float, help="stop following after this many idle seconds")
    p.add_argument("--events", help="append events here instead of stdout")
    p.add_argument("--config")
    p.set_defaults(func=cmd_monitor)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MlaqpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
