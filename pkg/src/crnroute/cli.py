"""Command-line entry point.

    crnroute run --protocol crp --seed 7 [--trace run.csv]
    crnroute sweep --seeds 10 --ncr 20,40,60,80,100 --out results [--svg]
    crnroute scenario --seed 7 --out world.json
    crnroute fig3 [--variant no_relay]

Exit codes: 0 ran to completion, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import form_clusters
from .engine import SimulationError
from .fixtures import VARIANTS, run_fig3
from .harness import DEFAULT_GRID, PROTOCOLS, compare, config_for, run_episode, run_sweep, write_results
from .invariants import InvariantViolation, assert_episode
from .model import ConfigError, SimConfig, generate_scenario

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3

SWEEP_KEYS = {"ncr", "seeds", "protocols", "pu_fraction", "workers"}


@dataclass
class CliConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    ncr: list[int] = field(default_factory=lambda: list(DEFAULT_GRID))
    seeds: list[int] = field(default_factory=lambda: list(range(1, 11)))
    protocols: list[str] = field(default_factory=lambda: list(PROTOCOLS))
    pu_fraction: float = 0.2
    workers: int = 1


def load_config(path: str | None) -> CliConfig:
    """Read a JSON config: SimConfig keys at the top level plus an optional "sweep" object."""
    if path is None:
        return CliConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    sweep = data.pop("sweep", {}) or {}
    unknown = set(sweep) - SWEEP_KEYS
    if unknown:
        raise ConfigError(f"unknown sweep field(s): {', '.join(sorted(unknown))}")
    cfg = CliConfig(sim=SimConfig.from_dict(data))
    if "ncr" in sweep:
        cfg.ncr = _int_list(sweep["ncr"], "sweep.ncr")
    if "seeds" in sweep:
        s = sweep["seeds"]
        cfg.seeds = list(range(1, _count(s, "sweep.seeds") + 1)) if isinstance(s, int) else _int_list(s, "sweep.seeds")
    if "protocols" in sweep:
        cfg.protocols = list(sweep["protocols"])
        for p in cfg.protocols:
            if p not in PROTOCOLS:
                raise ConfigError(f"sweep.protocols: unknown protocol {p!r}")
    if "pu_fraction" in sweep:
        cfg.pu_fraction = float(sweep["pu_fraction"])
        if not 0.0 <= cfg.pu_fraction < 1.0:
            raise ConfigError("sweep.pu_fraction must be in [0, 1)")
    if "workers" in sweep:
        cfg.workers = _count(sweep["workers"], "sweep.workers")
    return cfg


def _count(value, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name}: expected a positive integer, got {value!r}")
    return value


def _int_list(value, name: str) -> list[int]:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        try:
            value = [int(p) for p in parts]
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated integers, got {value!r}") from None
    if not isinstance(value, list) or not value or not all(isinstance(v, int) and v > 0 for v in value):
        raise ConfigError(f"{name}: expected a non-empty list of positive integers")
    return value


def _apply_flags(cfg: CliConfig, args) -> CliConfig:
    if getattr(args, "seed", None) is not None:
        cfg.sim = cfg.sim.with_(seed=args.seed)
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = list(range(1, _count(args.seeds, "--seeds") + 1))
    if getattr(args, "ncr", None) is not None:
        cfg.ncr = _int_list(args.ncr, "--ncr")
    if getattr(args, "protocol", None) is not None and args.command == "sweep":
        cfg.protocols = [args.protocol]
    if getattr(args, "workers", None) is not None:
        cfg.workers = _count(args.workers, "--workers")
    cfg.sim.validate()
    return cfg


def cmd_run(cfg: CliConfig, args) -> int:
    sim_cfg = cfg.sim
    if args.ncr is not None:
        if len(cfg.ncr) != 1:
            raise ConfigError("--ncr takes a single population for run")
        sim_cfg = config_for(sim_cfg, cfg.ncr[0], sim_cfg.seed, cfg.pu_fraction)
    ep = run_episode(sim_cfg, args.protocol, trace=args.trace is not None)
    m = ep.metrics
    delay = "" if m.routing_delay is None else f"{m.routing_delay:.6f}"
    n_cr = sim_cfg.n_primary + sim_cfg.n_secondary
    print(
        f"protocol={args.protocol} seed={sim_cfg.seed} n_cr={n_cr} src={ep.src} dst={ep.dst} "
        f"rreq={m.rreq_count} rrep={m.rrep_count} delay={delay} success={int(m.success)}"
    )
    if args.trace is not None:
        ep.sim.write_trace(args.trace)
    assert_episode(ep)
    return EXIT_OK


def cmd_sweep(cfg: CliConfig, args) -> int:
    runs, points = run_sweep(cfg.sim, cfg.ncr, cfg.seeds, cfg.protocols, cfg.pu_fraction, cfg.workers)
    out = Path(args.out)
    paths = write_results(out, runs, points)
    report = compare(points) if len(cfg.protocols) == len(PROTOCOLS) else None
    text = report.render() if report is not None else "single protocol sweep: no comparison\n"
    (out / "report.txt").write_text(text)
    if not args.no_plots:
        from .plotting import render_figures  # matplotlib only when figures are wanted

        render_figures(points, out, svg=args.svg)
    print(text, end="")
    print(f"wrote {len(paths)} CSV files to {out}")
    return EXIT_OK


def cmd_scenario(cfg: CliConfig, args) -> int:
    world = generate_scenario(cfg.sim)
    doc = world.to_dict()
    if args.clusters:
        doc["clusters"] = form_clusters(world).dump()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"wrote {len(world)} nodes to {args.out}")
    return EXIT_OK


def cmd_fig3(cfg: CliConfig, args) -> int:
    outcome = run_fig3(args.variant, trace=args.trace is not None)
    print(outcome.render())
    print(f"CH4 duplicate drops: {outcome.ch4_drops}")
    if args.trace is not None:
        outcome.episode.sim.write_trace(args.trace)
    assert_episode(outcome.episode)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crnroute", description="Cluster-based routing for cognitive radio ad hoc networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")

    p = sub.add_parser("run", help="one discovery episode")
    common(p)
    p.add_argument("--protocol", choices=PROTOCOLS, default="crp")
    p.add_argument("--seed", type=int)
    p.add_argument("--ncr", help="total user count (20%% primary by default)")
    p.add_argument("--trace", help="write the event trace to this CSV file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="seed-averaged sweep over user counts, both protocols")
    common(p)
    p.add_argument("--seeds", type=int, help="number of seeds (1..N)")
    p.add_argument("--ncr", help="comma-separated user counts, e.g. 20,40,60")
    p.add_argument("--protocol", choices=PROTOCOLS, help="restrict to one protocol")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--svg", action="store_true", help="figures as SVG instead of PNG")
    p.add_argument("--no-plots", action="store_true", help="CSV output only")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="generate a world and dump it as JSON")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--clusters", action="store_true", help="include the initial cluster table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("fig3", help="run the shipped four-cluster example")
    p.add_argument("--variant", choices=VARIANTS, default="default")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_fig3, config=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
