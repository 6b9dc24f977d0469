#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/08 09:30
@File    : cli.py

Command line front end.

    python -m src.cli run --scenario figure1 --policy perflow --policy terra --out out/figure1
    python -m src.cli run --topology swan --generate config/yaml/workload.yaml --seed 1 --seed 2 --out out/swan
    python -m src.cli compare out/swan
    python -m src.cli sweep k 1 3 5 10 15 --topology swan --generate config/yaml/workload.yaml --out out/k

Every (policy, seed) run writes ``<policy>-seed<seed>.metrics.csv`` and
``<policy>-seed<seed>.trace.jsonl`` into ``--out``; ``run`` also writes a
combined ``metrics.csv``.
"""
import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from base.bound_thread_pool import BoundedThreadPoolExecutor
from config.terra_config import SchedulerConfig, TerraConfig
from src.flowsim import FlowSimulator, Metrics, Trace, read_metrics_csv, write_metrics_csv
from src.policies import POLICIES, make_policy
from src.scenarios import get_scenario, scenario_names
from src.wan_topology import WanGraph, load_topology
from src.workload import Workload, WorkloadSpec, generate, load
from utils.errors import ConfigError, TerraError
from utils.log import LEVEL_ENV, Logger
from utils.utils import Utils

logger = Logger('TerraCli')

POLICY_ORDER = ["terra", "perflow", "multipath", "varys", "swan_mcf"]
SCHEDULER_PARAMS = {"k": int, "alpha": float, "rho": float, "eta": float}
SPEC_PARAMS = {"rate": "rate_multiplier", "scale": "volume_multiplier", "d": "deadline_d", "compute": "compute_delay"}
SWEEP_PARAMS = sorted(list(SCHEDULER_PARAMS) + list(SPEC_PARAMS))


@dataclass
class RunResult:
    policy: str
    seed: int
    metrics: Metrics
    trace: Trace
    schedule_trace: Optional[List[Dict]] = None


def _policy_key(name: str) -> int:
    return POLICY_ORDER.index(name) if name in POLICY_ORDER else len(POLICY_ORDER)


def _load_config(args) -> TerraConfig:
    return TerraConfig.from_file(args.config) if args.config else TerraConfig.default()


def _scheduler_config(base: SchedulerConfig, args, **extra) -> SchedulerConfig:
    flags = {"alpha": args.alpha, "rho": args.rho, "eta": args.eta, "k": args.k}
    return base.override(**{**flags, **extra})


def build_inputs(args, cfg: TerraConfig, seed: int,
                 overrides: Optional[Dict] = None) -> Tuple[WanGraph, Workload, SchedulerConfig]:
    """Topology, workload and scheduler config of one run, after applying ``overrides``."""
    overrides = dict(overrides or {})
    sched_extra = {k: SCHEDULER_PARAMS[k](overrides.pop(k)) for k in list(overrides) if k in SCHEDULER_PARAMS}
    spec_extra = {SPEC_PARAMS[k]: v for k, v in overrides.items()}

    if args.scenario:
        scenario = get_scenario(args.scenario)
        base = cfg.scheduler.override(**scenario.scheduler.model_dump(exclude_defaults=True))
        scheduler = _scheduler_config(base, args, **sched_extra)
        workload = scenario.workload
        if set(spec_extra) - {"compute_delay"}:
            raise ConfigError(f"scenario {args.scenario} only sweeps scheduler parameters and compute")
        if "compute_delay" in spec_extra:
            workload.compute_delay = float(spec_extra["compute_delay"])
        return scenario.topology, workload, scheduler

    topology = load_topology(args.topology)
    scheduler = _scheduler_config(cfg.scheduler, args, **sched_extra)
    if args.generate:
        spec = WorkloadSpec.from_file(args.generate).override(seed=seed, **spec_extra)
        workload = load(generate(spec, topology))
    elif args.workload:
        workload = load(args.workload)
        if set(spec_extra) - {"compute_delay"}:
            raise ConfigError("sweeping workload parameters needs --generate")
        if "compute_delay" in spec_extra:
            workload.compute_delay = float(spec_extra["compute_delay"])
    else:
        raise ConfigError("give --scenario, --workload or --generate")
    return topology, workload, scheduler


def simulate(topology: WanGraph, workload: Workload, policy: str, scheduler: SchedulerConfig, cfg: TerraConfig,
             seed: int, trace_schedule: bool = False) -> RunResult:
    extra = {"record_trace": True} if trace_schedule and policy == "terra" else {}
    instance = make_policy(policy, scheduler, **extra)
    result = FlowSimulator(topology, instance, cfg.simulator).run(workload, seed)
    schedule_trace = instance.scheduler.trace if extra else None
    return RunResult(policy, seed, result.metrics, result.trace, schedule_trace)


def _write_run(out: Path, run: RunResult, prefix: str = ""):
    stem = f"{prefix}{run.policy}-seed{run.seed}"
    write_metrics_csv(out / f"{stem}.metrics.csv", [run.metrics])
    run.trace.write(out / f"{stem}.trace.jsonl")
    if run.schedule_trace is not None:
        Utils().write_jsonl(out / f"{stem}.schedule.jsonl", run.schedule_trace)


def _prepare_out(out: str) -> Path:
    ok, info = Utils().init_directory(out)
    if not ok:
        raise ConfigError(info)
    return Path(out)


def factor_of_improvement(rows: Sequence[Metrics], baseline: str) -> Dict[str, float]:
    """Baseline over Terra for times, Terra over baseline for utilization; averaged over matching runs."""
    terra = {(m.workload, m.seed): m for m in rows if m.policy == "terra"}
    if not terra:
        raise ConfigError("no terra rows to compare against")
    ratios: Dict[str, List[float]] = {"avg_cct": [], "avg_jct": [], "utilization": []}
    for m in rows:
        t = terra.get((m.workload, m.seed))
        if m.policy != baseline or t is None:
            continue
        if t.avg_cct > 0:
            ratios["avg_cct"].append(m.avg_cct / t.avg_cct)
        if t.avg_jct > 0:
            ratios["avg_jct"].append(m.avg_jct / t.avg_jct)
        if m.utilization > 0:
            ratios["utilization"].append(t.utilization / m.utilization)
    return {k: sum(v) / len(v) if v else float("nan") for k, v in ratios.items()}


def foi_table(rows: Sequence[Metrics], title: str) -> str:
    baselines = sorted({m.policy for m in rows if m.policy != "terra"}, key=_policy_key)
    table = []
    for baseline in baselines:
        foi = factor_of_improvement(rows, baseline)
        table.append([baseline, foi["avg_cct"], foi["avg_jct"], foi["utilization"]])
    return Utils().render_table(title, ["baseline", "FoI avg CCT", "FoI avg JCT", "FoI utilization"], table)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _prepare_out(args.out)
    policies = sorted(set(args.policy or ["terra"]), key=_policy_key)
    seeds = args.seed or [0]
    inputs = {seed: build_inputs(args, cfg, seed) for seed in seeds}

    def task(item: Tuple[str, int]) -> RunResult:
        policy, seed = item
        topology, workload, scheduler = inputs[seed]
        return simulate(topology, workload, policy, scheduler, cfg, seed, args.trace_schedule)

    items = [(p, s) for p in policies for s in seeds]
    with BoundedThreadPoolExecutor(max_workers=args.workers, max_queue_size=2 * args.workers) as pool:
        runs = pool.map_ordered(task, items)
    for run in runs:
        _write_run(out, run)
    write_metrics_csv(out / "metrics.csv", [run.metrics for run in runs])
    rows = [[r.policy, r.seed, r.metrics.avg_cct, r.metrics.avg_jct, r.metrics.utilization] for r in runs]
    print(Utils().render_table("runs", ["policy", "seed", "avg CCT", "avg JCT", "utilization"], rows))
    logger.info(f"wrote {len(runs)} runs to {out}")
    return 0


def cmd_compare(args) -> int:
    path = Path(args.results)
    path = path / "metrics.csv" if path.is_dir() else path
    if not path.exists():
        raise ConfigError(f"no metrics file at {path}")
    rows = read_metrics_csv(path)
    print(foi_table(rows, f"factor of improvement ({path})"))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _prepare_out(args.out)
    policies = sorted(set(args.policy or ["terra", "perflow"]), key=_policy_key)
    seeds = args.seed or [0]
    values = [SCHEDULER_PARAMS.get(args.parameter, float)(v) for v in args.values]

    def task(item: Tuple[float, str, int]) -> RunResult:
        value, policy, seed = item
        topology, workload, scheduler = build_inputs(args, cfg, seed, {args.parameter: value})
        return simulate(topology, workload, policy, scheduler, cfg, seed, args.trace_schedule)

    items = [(v, p, s) for v in values for p in policies for s in seeds]
    with BoundedThreadPoolExecutor(max_workers=args.workers, max_queue_size=2 * args.workers) as pool:
        runs = pool.map_ordered(task, items)

    columns = ["parameter", "value"] + list(Metrics.__dataclass_fields__)
    with open(out / f"sweep_{args.parameter}.csv", "w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for (value, _, _), run in zip(items, runs):
            row = {k: repr(v) if isinstance(v, float) else v for k, v in run.metrics.to_row().items()}
            writer.writerow({"parameter": args.parameter, "value": repr(value), **row})
            _write_run(out, run, prefix=f"{args.parameter}={value}-")

    if "terra" in policies and len(policies) > 1:
        for value in values:
            rows = [run.metrics for (v, _, _), run in zip(items, runs) if v == value]
            print(foi_table(rows, f"{args.parameter} = {value}"))
    logger.info(f"sweep {args.parameter} over {values}: {len(runs)} runs in {out}")
    return 0


def _add_inputs(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--scenario', choices=scenario_names(), help='builtin regression scenario')
    source.add_argument('--workload', type=str, help='workload document (json)')
    source.add_argument('--generate', type=str, help='workload generator spec (yaml)')
    parser.add_argument('--topology', type=str, default='swan', help='topology document or builtin name')
    parser.add_argument('--policy', action='append', choices=sorted(POLICIES), help='repeatable')
    parser.add_argument('--seed', action='append', type=int, help='repeatable')
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--rho', type=float)
    parser.add_argument('--eta', type=float)
    parser.add_argument('--k', type=int)
    parser.add_argument('--config', type=str, help='terra config yaml')
    parser.add_argument('--out', type=str, default='out')
    parser.add_argument('--workers', type=int, default=4)
    parser.add_argument('--trace-schedule', action='store_true', help='dump every terra scheduling round')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='terra', description='coflow scheduling and WAN routing simulator')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='simulate policies over seeds')
    _add_inputs(run)
    run.set_defaults(handler=cmd_run)

    compare = sub.add_parser('compare', help='factor of improvement of terra over the baselines')
    compare.add_argument('results', type=str, help='results directory or metrics.csv')
    compare.set_defaults(handler=cmd_compare)

    sweep = sub.add_parser('sweep', help='vary one parameter')
    sweep.add_argument('parameter', choices=SWEEP_PARAMS)
    sweep.add_argument('values', nargs='+', type=float)
    _add_inputs(sweep)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    if os.environ.get(LEVEL_ENV):
        Logger.set_level(os.environ[LEVEL_ENV])
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except TerraError as e:
        logger.error(str(e))
        return 1


if __name__ == '__main__':
    sys.exit(main())
