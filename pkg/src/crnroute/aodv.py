"""Flat AODV-style discovery used as the comparison baseline.

Only the discovery core: network-wide RREQ flooding with per-node duplicate
suppression and the same hop cap as the cluster protocol, and an RREP sent
back along the reversed path of the first request to reach the destination.
A link needs radio range and at least one common channel.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, replace

from .engine import Protocol, SimulationError, Simulator
from .messages import AodvRrep, AodvRreq, RequestKey
from .model import NodeId, World, common_channels


@dataclass
class AodvSession:
    key: RequestKey
    started: float
    done: bool = False
    success: bool = False
    delay: float | None = None
    route: tuple[NodeId, ...] | None = None
    reason: str = ""


class Aodv(Protocol):
    name = "aodv"

    def __init__(self, world: World):
        self.world = world
        self.cfg = world.config
        self.request_ids: Counter = Counter()
        self.seen: dict[NodeId, set[RequestKey]] = defaultdict(set)
        self.sessions: dict[RequestKey, AodvSession] = {}
        self.drops: Counter = Counter()
        self.forwards: list[tuple[float, NodeId, AodvRreq]] = []
        self.replies: list[tuple[AodvRreq, AodvRrep]] = []
        self.result: dict = {}

    def links(self, nid: NodeId) -> list[NodeId]:
        me = self.world[nid]
        return [
            n for n in self.world.neighbors(nid)
            if self.world[n].is_su and common_channels(me, self.world[n])
        ]

    def discover(self, sim: Simulator, src: NodeId, dst: NodeId) -> AodvSession:
        if src == dst:
            raise SimulationError("discovery towards self")
        self.request_ids[src] += 1
        rreq = AodvRreq(self.request_ids[src], src, dst, (src,))
        session = AodvSession(rreq.key, sim.now)
        self.sessions[rreq.key] = session
        self.seen[src].add(rreq.key)
        sim.set_timer(self.cfg.discovery_deadline, src, ("deadline", rreq.key))
        self.forwards.append((sim.now, src, rreq))
        sim.transmit(src, self.links(src), rreq)
        return session

    def _on_rreq(self, sim: Simulator, at: NodeId, rreq: AodvRreq) -> None:
        if at in rreq.node_path:
            self.drops["loop"] += 1
            return
        if rreq.key in self.seen[at]:
            self.drops["duplicate"] += 1
            return
        self.seen[at].add(rreq.key)
        out = replace(rreq, node_path=rreq.node_path + (at,))
        if at == rreq.dst:
            rrep = AodvRrep(rreq.request_id, rreq.src, rreq.dst, tuple(reversed(out.node_path)))
            self.replies.append((out, rrep))
            self._send_rrep(sim, at, rrep)
            return
        if out.hops + 1 > self.cfg.hmax:
            self.drops["hmax"] += 1
            return
        self.forwards.append((sim.now, at, out))
        sim.transmit(at, self.links(at), out)

    def _send_rrep(self, sim: Simulator, at: NodeId, rrep: AodvRrep) -> None:
        nxt = rrep.node_path[rrep.position + 1]
        if not common_channels(self.world[at], self.world[nxt]):
            self.drops["rrep_channel"] += 1
            return
        sim.transmit(at, [nxt], replace(rrep, position=rrep.position + 1))

    def _on_rrep(self, sim: Simulator, at: NodeId, rrep: AodvRrep) -> None:
        if rrep.node_path[rrep.position] != at:
            return
        if at == rrep.src:
            session = self.sessions.get(rrep.key)
            if session is None or session.done:
                return
            session.done = True
            session.success = True
            session.delay = sim.now - session.started
            session.route = tuple(reversed(rrep.node_path))
            self._update_result(session)
            return
        self._send_rrep(sim, at, rrep)

    def _update_result(self, session: AodvSession) -> None:
        first = next(iter(self.sessions.values()))
        if session is first:
            self.result = {"success": session.success, "delay": session.delay, "reason": session.reason}

    def on_deliver(self, sim: Simulator, to: NodeId, sender: NodeId, msg) -> None:
        if isinstance(msg, AodvRreq):
            self._on_rreq(sim, to, msg)
        elif isinstance(msg, AodvRrep):
            self._on_rrep(sim, to, msg)

    def on_timer(self, sim: Simulator, owner: NodeId, tag) -> None:
        what, key = tag
        if what == "deadline":
            session = self.sessions.get(key)
            if session is not None and not session.done:
                session.done = True
                session.reason = "deadline"
                self._update_result(session)
        elif what == "discover":
            self.discover(sim, *key)
