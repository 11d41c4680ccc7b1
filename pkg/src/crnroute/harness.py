"""Seed-averaged experiment sweeps, trend comparison and CSV output."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .aodv import Aodv
from .clustering import ClusterState, form_clusters
from .crp import ClusterRouting
from .engine import EventKind, RunMetrics, Simulator
from .model import ConfigError, SimConfig, World, generate_scenario, rng_for

PROTOCOLS = ("crp", "aodv")
DEFAULT_GRID = (20, 40, 60, 80, 100)

RUN_HEADER = ["n_cr", "protocol", "seed", "rreq", "rrep", "delay", "success"]
AGG_HEADER = ["n_cr", "protocol", "mean_rreq", "mean_rrep", "mean_delay", "success_rate"]

FIGURES = {
    "rreq": ("mean_rreq", "Average number of RREQ"),
    "rrep": ("mean_rrep", "Average number of RREP"),
    "delay": ("mean_delay", "Average routing delay"),
    "success": ("success_rate", "Route discovery success rate"),
}


@dataclass
class Episode:
    protocol: str
    src: int
    dst: int
    start: float
    metrics: RunMetrics
    sim: Simulator
    agent: object

    @property
    def world(self) -> World:
        return self.sim.world


@dataclass(frozen=True)
class RunRecord:
    n_cr: int
    protocol: str
    seed: int
    rreq: int
    rrep: int
    delay: float | None
    success: bool

    def row(self) -> list[str]:
        delay = "" if self.delay is None else fmt(self.delay)
        return [str(self.n_cr), self.protocol, str(self.seed), str(self.rreq), str(self.rrep), delay, str(int(self.success))]


@dataclass(frozen=True)
class SweepPoint:
    n_cr: int
    protocol: str
    mean_rreq: float
    mean_rrep: float
    mean_delay: float | None
    success_rate: float
    n_seeds: int

    def row(self) -> list[str]:
        delay = "" if self.mean_delay is None else fmt(self.mean_delay)
        return [str(self.n_cr), self.protocol, fmt(self.mean_rreq), fmt(self.mean_rrep), delay, fmt(self.success_rate)]


def fmt(x: float) -> str:
    return f"{x:.6f}"


def config_for(base: SimConfig, n_cr: int, seed: int, pu_fraction: float = 0.2) -> SimConfig:
    n_primary = int(round(n_cr * pu_fraction))
    return base.with_(n_primary=n_primary, n_secondary=n_cr - n_primary, seed=seed)


def pick_pair(world: World) -> tuple[int, int]:
    """Random distinct source/destination SUs drawn from the run's own seed stream."""
    sus = sorted(n.id for n in world.secondaries)
    if len(sus) < 2:
        raise ConfigError("need at least two secondary users for a discovery episode")
    a, b = rng_for(world.config.seed, "pairs").choice(len(sus), size=2, replace=False)
    return sus[int(a)], sus[int(b)]


def start_time(config: SimConfig) -> float:
    # two hello periods for orphaned members to rejoin
    return 2.5 * config.hello_period


def build(
    world: World, protocol: str, trace: bool = False, clusters: ClusterState | None = None
) -> tuple[Simulator, object]:
    if protocol == "crp":
        agent = ClusterRouting(world, clusters if clusters is not None else form_clusters(world))
        sim = Simulator(world, agent, trace=trace)
        sim.start_hello(0.0)
    elif protocol == "aodv":
        agent = Aodv(world)
        sim = Simulator(world, agent, trace=trace)
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")
    cfg = world.config
    if cfg.mobility:
        sim.enable_mobility(n.id for n in world.secondaries)
    if cfg.pu_activity_rate > 0:
        sim.enable_pu_activity()
    return sim, agent


def run_episode(
    config: SimConfig,
    protocol: str,
    trace: bool = False,
    pair: tuple[int, int] | None = None,
    world: World | None = None,
    clusters: ClusterState | None = None,
) -> Episode:
    """One discovery episode on a fresh world (or on ``world`` when given).

    ``clusters`` skips K-means formation, for hand-built topologies.
    """
    world = generate_scenario(config) if world is None else world
    src, dst = pick_pair(world) if pair is None else pair
    sim, agent = build(world, protocol, trace, clusters)
    t0 = start_time(world.config)
    sim.schedule(t0, EventKind.TIMER, node=src, tag=("discover", (src, dst)))
    horizon = t0 + world.config.discovery_deadline + world.config.link_delay
    metrics = sim.run(until=horizon)
    metrics.check()
    return Episode(protocol, src, dst, t0, metrics, sim, agent)


def _one(args) -> RunRecord:
    base, n_cr, protocol, seed, pu_fraction = args
    cfg = config_for(base, n_cr, seed, pu_fraction)
    m = run_episode(cfg, protocol).metrics
    return RunRecord(n_cr, protocol, seed, m.rreq_count, m.rrep_count, m.routing_delay, m.success)


def run_sweep(
    base: SimConfig,
    n_cr_values: Iterable[int] = DEFAULT_GRID,
    seeds: Iterable[int] = range(1, 11),
    protocols: Iterable[str] = PROTOCOLS,
    pu_fraction: float = 0.2,
    workers: int = 1,
) -> tuple[list[RunRecord], list[SweepPoint]]:
    n_cr_values, seeds, protocols = list(n_cr_values), list(seeds), list(protocols)
    if not seeds:
        raise ConfigError("at least one seed is required")
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {p!r}")
    for n in n_cr_values:
        n_su = n - int(round(n * pu_fraction))
        k = base.kmeans_k if base.kmeans_k is not None else max(1, round(math.sqrt(n_su)))
        if n_su < max(2, k):
            raise ConfigError(f"n_cr={n} leaves {n_su} SUs, too few for {k} clusters")
    jobs = [(base, n, p, s, pu_fraction) for n in n_cr_values for p in protocols for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one, jobs, chunksize=4))
    else:
        runs = [_one(j) for j in jobs]
    runs.sort(key=lambda r: (r.n_cr, PROTOCOLS.index(r.protocol), r.seed))
    return runs, aggregate(runs)


def aggregate(runs: list[RunRecord]) -> list[SweepPoint]:
    groups: dict[tuple[int, str], list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.n_cr, r.protocol), []).append(r)
    points = []
    for (n_cr, protocol), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], PROTOCOLS.index(kv[0][1]))):
        rs = sorted(rs, key=lambda r: r.seed)
        delays = [r.delay for r in rs if r.success]
        points.append(
            SweepPoint(
                n_cr=n_cr,
                protocol=protocol,
                mean_rreq=math.fsum(r.rreq for r in rs) / len(rs),
                mean_rrep=math.fsum(r.rrep for r in rs) / len(rs),
                mean_delay=math.fsum(delays) / len(delays) if delays else None,
                success_rate=sum(r.success for r in rs) / len(rs),
                n_seeds=len(rs),
            )
        )
    return points


# trend comparison ---------------------------------------------------------


@dataclass
class TrendReport:
    grid: list[int]
    deltas: list[dict]
    verdicts: dict[str, bool | None] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)
    low_confidence: bool = False

    def render(self) -> str:
        out = io.StringIO()
        out.write("n_cr,rreq_gap,rrep_gap,delay_gap,success_gap\n")
        for d in self.deltas:
            out.write(",".join(_cell(d[k]) for k in ("n_cr", "rreq_gap", "rrep_gap", "delay_gap", "success_gap")) + "\n")
        out.write("\n")
        for name in sorted(self.verdicts):
            v = self.verdicts[name]
            word = "PASS" if v else ("n/a" if v is None else "FAIL")
            note = self.notes.get(name, "")
            out.write(f"trend {name}: {word}{' - ' + note if note else ''}\n")
        if self.low_confidence:
            out.write("low confidence: single seed per point\n")
        return out.getvalue()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return fmt(x)
    return str(x)


def _series(points: list[SweepPoint], protocol: str, attr: str) -> dict[int, float | None]:
    return {p.n_cr: getattr(p, attr) for p in points if p.protocol == protocol}


def compare(points: list[SweepPoint], delay_tolerance: float = 1.0, min_success: float = 0.9) -> TrendReport:
    """Per-grid-point gaps (AODV minus CRP for costs, CRP minus AODV for success) and trend verdicts A-D.

    ``delay_tolerance`` is the per-step slack allowed in the non-decreasing delay check.
    """
    crp_grid = sorted({p.n_cr for p in points if p.protocol == "crp"})
    aodv_grid = sorted({p.n_cr for p in points if p.protocol == "aodv"})
    report = TrendReport(grid=crp_grid, deltas=[])
    if crp_grid != aodv_grid or not crp_grid:
        report.notes["grid"] = f"mismatched grids crp={crp_grid} aodv={aodv_grid}"
        for name in "ABCD":
            report.verdicts[name] = None
            report.notes[name] = "mismatched grids"
        return report
    grid = crp_grid
    report.low_confidence = any(p.n_seeds < 2 for p in points)
    s = {(proto, a): _series(points, proto, a) for proto in PROTOCOLS for a in ("mean_rreq", "mean_rrep", "mean_delay", "success_rate")}

    def gap(a, n, flip=False):
        c, o = s[("crp", a)][n], s[("aodv", a)][n]
        if c is None or o is None:
            return None
        return c - o if flip else o - c

    for n in grid:
        report.deltas.append(
            {
                "n_cr": n,
                "rreq_gap": gap("mean_rreq", n),
                "rrep_gap": gap("mean_rrep", n),
                "delay_gap": gap("mean_delay", n),
                "success_gap": gap("success_rate", n, flip=True),
            }
        )
    lo, hi = grid[0], grid[-1]
    upper = [n for n in grid if n >= 40] or grid
    lo_a = upper[0]
    multi = len(grid) > 1

    # A: fewer RREQ where the figure shows separation, and a widening gap
    a_ok = all(s[("crp", "mean_rreq")][n] < s[("aodv", "mean_rreq")][n] for n in upper)
    if multi:
        a_ok = a_ok and gap("mean_rreq", hi) > gap("mean_rreq", lo_a)
    else:
        report.notes["A"] = "insufficient points for gap growth"
    report.verdicts["A"] = a_ok

    # B: no more RREP anywhere, strictly fewer at the largest population
    report.verdicts["B"] = all(
        s[("crp", "mean_rrep")][n] <= s[("aodv", "mean_rrep")][n] for n in grid
    ) and s[("crp", "mean_rrep")][hi] < s[("aodv", "mean_rrep")][hi]

    # C: lower delay everywhere, both series non-decreasing within tolerance
    def nondecreasing(series):
        vals = [series[n] for n in grid]
        if any(v is None for v in vals):
            return False
        return all(b >= a - delay_tolerance for a, b in zip(vals, vals[1:]))

    cd, ad = s[("crp", "mean_delay")], s[("aodv", "mean_delay")]
    c_ok = all(cd[n] is not None and ad[n] is not None and cd[n] < ad[n] for n in grid)
    report.verdicts["C"] = c_ok and nondecreasing(cd) and nondecreasing(ad)

    # D: success never worse, widening gap, and near-full success at the top
    cs, as_ = s[("crp", "success_rate")], s[("aodv", "success_rate")]
    d_ok = all(cs[n] >= as_[n] for n in grid) and cs[hi] >= min_success
    if multi:
        d_ok = d_ok and (cs[hi] - as_[hi]) >= (cs[lo_a] - as_[lo_a])
    else:
        report.notes["D"] = "insufficient points for gap growth"
    report.verdicts["D"] = d_ok
    if report.low_confidence:
        for name in "ABCD":
            report.notes.setdefault(name, "low confidence (single seed)")
    return report


# output -------------------------------------------------------------------


def write_csv(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_runs(path: Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        return [
            RunRecord(
                n_cr=int(r["n_cr"]),
                protocol=r["protocol"],
                seed=int(r["seed"]),
                rreq=int(r["rreq"]),
                rrep=int(r["rrep"]),
                delay=float(r["delay"]) if r["delay"] else None,
                success=r["success"] == "1",
            )
            for r in csv.DictReader(fh)
        ]


def write_results(out: Path, runs: list[RunRecord], points: list[SweepPoint]) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"runs": out / "runs.csv", "summary": out / "summary.csv"}
    write_csv(paths["runs"], RUN_HEADER, (r.row() for r in runs))
    write_csv(paths["summary"], AGG_HEADER, (p.row() for p in points))
    grid = sorted({p.n_cr for p in points})
    protos = [p for p in PROTOCOLS if any(q.protocol == p for q in points)]
    for name, (attr, _title) in FIGURES.items():
        path = out / f"fig_{name}.csv"
        rows = []
        for n in grid:
            row = [str(n)]
            for proto in protos:
                v = _series(points, proto, attr).get(n)
                row.append("" if v is None else fmt(v))
            rows.append(row)
        write_csv(path, ["n_cr", *protos], rows)
        paths[f"fig_{name}"] = path
    return paths
