"""The shipped four-cluster, eight-SU topology used for the worked discovery example.

Heads CH1..CH4 lead clusters 1..4. CH1 neighbours CH2 and CH4, CH2 also
neighbours CH3 and CH4, and CH3 and CH4 cannot hear each other. SU1 asks for
a route to SU8. Only SU5 in cluster 2 shares a channel with both SU1 and SU8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .clustering import ClusterState, load_clusters
from .harness import Episode, run_episode
from .model import World

VARIANTS = ("default", "no_relay", "same_cluster")


@dataclass
class Fig3Outcome:
    episode: Episode
    success: bool
    route: list[str]  # node labels, source first
    head_clusters: list[int]  # cluster ids of the heads on the route
    ch4_drops: int
    reason: str

    def render(self) -> str:
        if not self.success:
            return f"no route: {self.reason}"
        heads = "->".join(str(c) for c in self.head_clusters)
        return f"heads {heads} route {{{', '.join(self.route)}}}"


def load_fig3(variant: str = "default") -> tuple[World, ClusterState, int, int]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown fixture variant {variant!r}")
    doc = json.loads(resources.files("crnroute").joinpath("data/fig3.json").read_text())
    world = World.from_dict(doc["world"])
    dump = doc["clusters"]
    if variant == "no_relay":
        su5 = world.by_label("SU5")
        su5.channels = frozenset({2, 3})  # loses channel 1, the only one shared with SU1
    elif variant == "same_cluster":
        su8 = world.by_label("SU8")
        ch1 = world.by_label("CH1")
        su8.x, su8.y = ch1.x - 30.0, ch1.y - 60.0
        dump = {
            "clusters": [
                dict(c, members=[m for m in c["members"] if m != su8.id] + ([su8.id] if c["head"] == ch1.id else []))
                for c in dump["clusters"]
            ]
        }
    clusters = load_clusters(world, dump)
    return world, clusters, world.by_label(doc["source"]).id, world.by_label(doc["destination"]).id


def run_fig3(variant: str = "default", trace: bool = False) -> Fig3Outcome:
    world, clusters, src, dst = load_fig3(variant)
    ep = run_episode(world.config, "crp", trace=trace, pair=(src, dst), world=world, clusters=clusters)
    agent = ep.agent
    session = next(iter(agent.sessions.values()))
    ch4 = world.by_label("CH4").id
    route, heads = [], []
    if session.success:
        route = [world[n].name for n in session.route.nodes]
        heads = [world[h].cluster for h in session.route.heads]
    return Fig3Outcome(ep, session.success, route, heads, agent.drop_count(ch4, "duplicate"), session.reason)
