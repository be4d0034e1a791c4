"""
Command-line entry point.

    mwiab simulate --scenario rural_montreal --trace bundled --policy proposed --seed 7
    mwiab compare  --scenario rural_montreal --trace bundled --seed 7
    mwiab optimize --scenario rural_montreal --trace bundled
    mwiab validate --scenario my.yaml --trace my.csv
    mwiab report   --out results/

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime failure.
Outputs go to ``--out`` or, when absent, the directory named by the
``MWIAB_OUT`` environment variable (default ``./mwiab-out``).  Every output
file begins with a provenance header.
"""

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from mwiab import __version__
from mwiab.domain import ScenarioError
from mwiab.dual import DualPolicy, MonitoringCost
from mwiab.phy import capacities
from mwiab.scenario import load_scenario, scenario_hash
from mwiab.sim import (POLICIES, SimulationConfig, SimulationError, radio_specs, build_demand, compare,
                       comparison_csv, header_lines, metrics_csv, provenance, run, summary, summary_json,
                       transitions_jsonl)
from mwiab.traffic import DemandSeries, TraceError, load_trace

OUT_ENV = "MWIAB_OUT"
DEFAULT_OUT = "mwiab-out"

# --set keys: name -> (parser, description)
SETTABLE = {
    "xi": (float, "monitoring energy per bit (J/bit)"),
    "bucket_bps": (float, "demand bucket width of the optimizer's answer table (bit/s)"),
    "iab_period": (int, "ticks between IAB allocations; 0 disables the access pass"),
    "iab_mode": (str, "adaptive or fixed"),
    "iab_start": (int, "first tick of the access pass"),
    "p_fail_startup": (float, "probability a startup fails"),
    "p_fail_wakeup": (float, "probability a wake-up fails"),
    "moisture_seconds": (float, "daily powered maintenance time of a sleeping radio (s)"),
    "max_infeasible_fraction": (float, "tolerated fraction of ticks above all-on capacity"),
    "packet_size": (float, "bits per counted packet"),
    "jitter": (float, "log-normal sigma of the trace augmentation"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mwiab", description="Microwave backhaul and IAB energy simulator.")
    p.add_argument("--version", action="version", version=f"mwiab {__version__}")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    def common(sp, scenario_required=True, trace=True, policy=False):
        sp.add_argument("--scenario", required=scenario_required,
                        help="scenario YAML path or bundled name (rural_montreal)")
        if trace:
            sp.add_argument("--trace", default="bundled",
                            help="count trace CSV (timestamp,site_id,count) or 'bundled'")
        if policy:
            sp.add_argument("--policy", default="proposed", choices=POLICIES)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a setting: " + ", ".join(sorted(SETTABLE)))
        sp.add_argument("--horizon", type=int, default=None, help="ticks to simulate (default: whole trace)")
        sp.add_argument("--ticks-per-second", type=int, default=1, dest="ticks_per_second")

    common(sub.add_parser("simulate", help="run one policy"), policy=True)
    common(sub.add_parser("compare", help="run all three policies"))
    common(sub.add_parser("optimize", help="solve the dual problem for every demand bucket in the trace"))
    v = sub.add_parser("validate", help="lint a scenario and/or trace")
    v.add_argument("--scenario", default=None)
    v.add_argument("--trace", default=None)
    r = sub.add_parser("report", help="summarize prior outputs")
    r.add_argument("--out", default=None)
    return p


def _parse_sets(items: Sequence[str]) -> Dict[str, object]:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in SETTABLE:
            raise UsageError(f"unknown --set key {key!r}; documented keys: {', '.join(sorted(SETTABLE))}")
        try:
            out[key] = SETTABLE[key][0](raw)
        except ValueError:
            raise UsageError(f"--set {key}: cannot parse {raw!r}") from None
    return out


def _echo_flags(args) -> Dict[str, object]:
    """Flags exactly as given, for the provenance header."""
    out: Dict[str, object] = {"verb": args.verb}
    for name in ("scenario", "trace", "policy", "seed", "out", "horizon", "ticks_per_second"):
        if hasattr(args, name):
            out["--" + name.replace("_", "-")] = getattr(args, name)
    if getattr(args, "set", None):
        out["--set"] = list(args.set)
    return out


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str):
    """Atomic write: temp file in the same directory, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _repeat(demand: DemandSeries, k: int) -> DemandSeries:
    if k == 1:
        return demand
    return DemandSeries(list(demand.terminal_ids), demand.site_index, demand.shares,
                        np.repeat(demand.site_rates, k, axis=0))


def _configs(args, policies):
    sets = _parse_sets(args.set)
    if args.ticks_per_second < 1:
        raise UsageError("--ticks-per-second must be >= 1")
    if args.horizon is not None and args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    scenario = load_scenario(args.scenario)
    trace = load_trace(args.trace)
    demand = build_demand(scenario, trace, args.seed, sets.pop("packet_size", 12000.0), sets.pop("jitter", None))
    demand = _repeat(demand, args.ticks_per_second)
    return [SimulationConfig(scenario, demand, p, dt=1.0 / args.ticks_per_second, horizon=args.horizon,
                             seed=args.seed, **sets) for p in policies]


def _emit_run(report, out: Path):
    _write(out / f"{report.policy}_metrics.csv", metrics_csv(report))
    _write(out / f"{report.policy}_summary.json", summary_json(report))
    _write(out / f"{report.policy}_transitions.jsonl", transitions_jsonl(report))
    if report.iab_log:
        _write(out / f"{report.policy}_iab.csv", header_lines(report.provenance)
               + "tick,du,terminal,band,rbs,mcs,power_w\n" + "\n".join(report.iab_log) + "\n")


def cmd_simulate(args) -> int:
    (cfg,) = _configs(args, [args.policy])
    rep = run(cfg, _echo_flags(args))
    out = _out_dir(args)
    _emit_run(rep, out)
    s = summary(rep)
    print(f"{rep.policy}: energy {s['microwave_energy_j'] / 1e6:.6f} MJ, satisfaction "
          f"{s['satisfaction']:.4f} (raw {s['satisfaction_raw']:.4f}) -> {out}")
    for a in rep.annotations:
        print(f"note: {a}", file=sys.stderr)
    return 0


def format_table(rows) -> str:
    lines = [f"{'policy':<10} {'energy_MJ':>12} {'saving_MJ':>12} {'EE_bit/J':>12} {'satisf':>8} {'raw':>8}"]
    for r in rows:
        lines.append(f"{r.policy:<10} {r.energy / 1e6:>12.6f} {r.saving / 1e6:>12.6f} "
                     f"{r.energy_efficiency:>12.4g} {r.satisfaction:>8.4f} {r.satisfaction_raw:>8.4f}")
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfgs = _configs(args, POLICIES)
    flags = _echo_flags(args)
    reports = {c.policy: run(c, flags) for c in cfgs}
    out = _out_dir(args)
    for rep in reports.values():
        _emit_run(rep, out)
    rows = compare(reports)
    prov = dict(reports["baseline1"].provenance)
    prov["settings"] = {k: v for k, v in prov["settings"].items() if k != "policy"}
    _write(out / "comparison.csv", comparison_csv(rows, prov))
    print(format_table(rows))
    return 0


def cmd_optimize(args) -> int:
    (cfg,) = _configs(args, ["proposed"])
    sc = cfg.scenario
    demand = np.asarray(cfg.demand.aggregate[:cfg.horizon])
    out = _out_dir(args)
    result = {"provenance": provenance(cfg, _echo_flags(args)), "nodes": {}}
    for node in sc.root_nodes:
        caps = capacities(node.radios)
        pol = DualPolicy(radio_specs(node, caps), MonitoringCost.for_node(len(node.radios), cfg.xi),
                         cfg.bucket_bps, cfg.dt)
        buckets = sorted({pol.bucket_of(d) for d in demand})
        rows = []
        for b in buckets:
            res = pol.result(b * pol.bucket)
            rows.append({"demand_bps": b * pol.bucket, "serving": sorted(res.serving_set),
                         **res.to_dict()})
        result["nodes"][node.id] = {"radios": [r.id for r in node.radios],
                                    "capacities_bps": caps.tolist(), "buckets": rows}
        print(f"{node.id}: {len(rows)} demand buckets solved")
    _write(out / "optimize.json", json.dumps(result, indent=2, sort_keys=True, default=float) + "\n")
    return 0


def cmd_validate(args) -> int:
    if not args.scenario and not args.trace:
        raise UsageError("validate needs --scenario and/or --trace")
    sc = None
    if args.scenario:
        sc = load_scenario(args.scenario)
        print(f"scenario {sc.name}: ok ({len(sc.nodes)} nodes, {len(sc.dus)} DUs, "
              f"{len(sc.terminals)} terminals; hash {scenario_hash(sc)})")
    if args.trace:
        tr = load_trace(args.trace)
        if sc is not None:
            missing = sorted({t.site_id for t in sc.cpes} - set(tr.sites))
            if missing:
                raise TraceError(f"trace lacks sites used by the scenario: {', '.join(missing)}")
        print(f"trace: ok ({len(tr)} windows x {len(tr.sites)} sites at {tr.resolution:g} s)")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    files = sorted(out.glob("*_summary.json"))
    if not files:
        raise FileNotFoundError(f"no *_summary.json files in {out}; run simulate or compare first")
    lines = [f"{'policy':<10} {'energy_MJ':>12} {'satisf':>8} {'raw':>8} {'transitions':>11}  config_hash"]
    provs = []
    for f in files:
        s = json.loads(f.read_text())
        provs.append(s["provenance"])
        lines.append(f"{s['policy']:<10} {s['microwave_energy_j'] / 1e6:>12.6f} {s['satisfaction']:>8.4f} "
                     f"{s['satisfaction_raw']:>8.4f} {s['transitions']:>11}  {s['provenance']['config_hash']}")
    text = "\n".join(lines) + "\n"
    prov = {"tool": "mwiab", "version": __version__, "sources": [p.name for p in files],
            "config_hashes": [p["config_hash"] for p in provs],
            "seeds": [p["seed"] for p in provs], "flags": {"verb": "report", "--out": args.out}}
    _write(out / "report.txt", header_lines(prov) + text)
    print(text, end="")
    return 0


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "optimize": cmd_optimize,
            "validate": cmd_validate, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            raise UsageError("missing verb; choose one of " + ", ".join(COMMANDS))
        return COMMANDS[args.verb](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        print("run 'mwiab VERB --help' for the flags of a verb", file=sys.stderr)
        return 1
    except (ScenarioError, TraceError, FileNotFoundError, ValueError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - last-resort exit code contract
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
