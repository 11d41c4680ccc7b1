from __future__ import annotations

import pytest

from crnroute.clustering import load_clusters
from crnroute.crp import ClusterRouting
from crnroute.engine import EventKind, Simulator
from crnroute.model import Node, NodeKind, SimConfig, World


def su(nid, x, y, energy=0.5, throughput=10.0, label=None):
    return dict(id=nid, kind="secondary", x=x, y=y, energy=energy, throughput=throughput, label=label)


def pu(nid, x, y, channel, active=False, radio_range=None):
    return dict(id=nid, kind="primary", x=x, y=y, licensed=channel, active=active, radio_range=radio_range)


def make_world(specs, **cfg) -> World:
    """Hand-placed world; SU channel sets come from the PUs like in generated worlds."""
    n_pu = sum(1 for s in specs if s["kind"] == "primary")
    defaults = dict(n_primary=n_pu, n_secondary=len(specs) - n_pu, channel_count=1, radio_range=150.0, head_range=None)
    defaults.update(cfg)
    config = SimConfig(**defaults).validate()
    world = World(config)
    for s in specs:
        if s["kind"] == "primary":
            node = Node(
                s["id"], NodeKind.PRIMARY, s["x"], s["y"], s["radio_range"] or config.radio_range,
                frozenset({s["licensed"]}), licensed=s["licensed"], active=s["active"],
            )
        else:
            node = Node(
                s["id"], NodeKind.SECONDARY, s["x"], s["y"], config.radio_range, frozenset(),
                energy=s["energy"], throughput=s["throughput"], label=s["label"],
            )
        world.nodes[node.id] = node
    world.refresh_channels()
    return world


def clustered(world: World, table: dict[int, tuple[int, list[int]]]):
    """``table`` maps cluster id -> (head, members); heads get the configured head range."""
    dump = {"clusters": [{"id": c, "head": h, "members": sorted(set(m) | {h})} for c, (h, m) in table.items()]}
    state = load_clusters(world, dump)
    for c in state:
        world[c.head].radio_range = world.config.head_radio_range
    return state


def start_crp(world: World, clusters, trace=False):
    agent = ClusterRouting(world, clusters)
    sim = Simulator(world, agent, trace=trace)
    sim.start_hello(0.0)
    return sim, agent


def discover_at(sim, at, src, dst):
    sim.schedule(at, EventKind.TIMER, node=src, tag=("discover", (src, dst)))


def build_line_world():
    """Three clusters in a row plus a fourth off to the side.

    H1 - H2 - H3 are neighbouring heads, H4 only hears H1. S sits in cluster 1,
    D in cluster 3, R1 (faster) and R2 are relay candidates in cluster 2.
    A primary user on channel 0 sits right next to R1, idle at the start.
    """
    specs = [
        pu(0, 250, 45, 0, radio_range=20.0),
        su(1, 100, 100, energy=1.0, label="H1"),
        su(2, 250, 100, energy=1.0, label="H2"),
        su(3, 400, 100, energy=1.0, label="H3"),
        su(4, 100, 240, energy=1.0, label="H4"),
        su(5, 60, 100, label="S"),
        su(6, 440, 100, label="D"),
        su(7, 250, 60, throughput=90.0, label="R1"),
        su(8, 250, 140, throughput=50.0, label="R2"),
        su(9, 60, 250, label="M4"),
    ]
    world = make_world(specs, area_side=500.0)
    clusters = clustered(world, {1: (1, [5]), 2: (2, [7, 8]), 3: (3, [6]), 4: (4, [9])})
    return world, clusters


@pytest.fixture
def line_world():
    return build_line_world()


CRITERIA: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERIA.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
