"""Cluster-based routing for cognitive radio ad hoc networks.

Cluster heads keep a neighbor table (other heads in range), a routing table
and a cache of forwarded requests. A source hands its RREQ to its own head;
heads flood it head-to-head, the destination's head collects candidates for
``tr`` time units and answers the shortest head path with an RREP that picks
one relay member per intermediate cluster on the way back.
"""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

from .clustering import ClusterState, HelloSample, knn_join, resign_head
from .engine import Protocol, SimulationError, Simulator
from .messages import CheckForNewClusterHead, Hello, RequestKey, Rerr, Rrep, Rreq, TriggeredHello
from .model import Node, NodeId, Role, World, common_channels, distance, in_range


class Action(str, enum.Enum):
    REPLY = "reply"  # destination side: feed the collector
    FORWARD_BROADCAST = "forward_broadcast"
    FORWARD_DIRECTED = "forward_directed"
    DROP = "drop"


@dataclass
class Decision:
    action: Action
    rreq: Rreq
    targets: tuple[NodeId, ...] = ()
    reason: str = ""


@dataclass
class NeighborEntry:
    channels: frozenset
    last_heard: float


@dataclass
class RouteEntry:
    next_hop_head: NodeId
    full_head_path: tuple[NodeId, ...]
    learned_at: float


@dataclass
class Collector:
    key: RequestKey
    tr_expiry: float
    candidates: list[tuple[Rreq, float]] = field(default_factory=list)
    closed: bool = False


@dataclass
class HeadState:
    id: NodeId
    neighbors: dict[NodeId, NeighborEntry] = field(default_factory=dict)
    routes: dict[NodeId, RouteEntry] = field(default_factory=dict)
    seen: set[RequestKey] = field(default_factory=set)
    collectors: dict[RequestKey, Collector] = field(default_factory=dict)
    drops: Counter = field(default_factory=Counter)


@dataclass
class Route:
    src: NodeId
    dst: NodeId
    heads: tuple[NodeId, ...]  # source head first
    relays: tuple[NodeId, ...]  # forward order, relays[i] belongs to heads[i + 1]
    installed_at: float
    # channel sets of ``nodes`` when the route was installed
    channels: tuple[frozenset, ...] = ()

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return (self.src, *self.relays, self.dst)

    def head_at(self, position: int) -> NodeId:
        """Head responsible for ``nodes[position]``."""
        return self.heads[min(position, len(self.heads) - 1)]


@dataclass
class Session:
    key: RequestKey
    started: float
    deadline: float
    done: bool = False
    success: bool = False
    delay: float | None = None
    route: Route | None = None
    reason: str = ""


@dataclass
class DecisionRecord:
    at: float
    head: NodeId
    key: RequestKey
    action: Action
    reason: str
    ch_path: tuple[NodeId, ...]
    targets: tuple[NodeId, ...]


def process_rreq(
    head: HeadState, rreq: Rreq, sender: NodeId, members: set[NodeId], hmax: int
) -> Decision:
    """Route-request decision at a cluster head.

    Order: loop check, append own id, destination-side check (the collector
    accepts every loop-free copy), duplicate suppression, hop cap, directed
    forwarding from the routing table, otherwise broadcast to neighbor heads.
    """
    if head.id in rreq.ch_path:
        return Decision(Action.DROP, rreq, reason="loop")
    out = replace(rreq, ch_path=rreq.ch_path + (head.id,))
    key = rreq.key
    if rreq.dst in members:
        head.seen.add(key)
        return Decision(Action.REPLY, out)
    if key in head.seen:
        return Decision(Action.DROP, out, reason="duplicate")
    head.seen.add(key)
    if out.hops > hmax:
        return Decision(Action.DROP, out, reason="hmax")
    if rreq.via and rreq.via[0] in head.neighbors:
        return Decision(Action.FORWARD_DIRECTED, replace(out, via=rreq.via[1:]), (rreq.via[0],))
    entry = head.routes.get(rreq.dst)
    if entry is not None and entry.next_hop_head in head.neighbors:
        directed = replace(out, via=entry.full_head_path[1:])
        return Decision(Action.FORWARD_DIRECTED, directed, (entry.next_hop_head,))
    targets = tuple(n for n in sorted(head.neighbors) if n != sender)
    if not targets:
        return Decision(Action.DROP, replace(out, via=()), reason="no_neighbors")
    return Decision(Action.FORWARD_BROADCAST, replace(out, via=()), targets)


def collect_and_select(candidates: list[tuple[Rreq, float]]) -> Rreq:
    """Fewest heads wins; ties by earliest arrival, then smallest head path."""
    if not candidates:
        raise SimulationError("route selection with no candidates")
    return min(candidates, key=lambda c: (len(c[0].ch_path), c[1], c[0].ch_path))[0]


def select_intermediate_node(
    members: Iterable[Node],
    prev_hop: Node,
    next_hop: Node | None = None,
    exclude: Iterable[NodeId] = (),
) -> NodeId | None:
    """Highest-throughput member sharing a channel with ``prev_hop`` (and ``next_hop`` if given).

    Ties go to the lowest id. None means no member qualifies.
    """
    skip = set(exclude)
    best = None
    for m in members:
        if m.id in skip or not m.is_su:
            continue
        if not common_channels(m, prev_hop):
            continue
        if next_hop is not None and not common_channels(m, next_hop):
            continue
        if best is None or (m.throughput, -m.id) > (best.throughput, -best.id):
            best = m
    return None if best is None else best.id


class ClusterRouting(Protocol):
    name = "crp"

    def __init__(self, world: World, clusters: ClusterState):
        self.world = world
        self.cfg = world.config
        self.clusters = clusters
        self.heads: dict[NodeId, HeadState] = {h: HeadState(h) for h in clusters.heads}
        self.request_ids: Counter = Counter()
        self.sessions: dict[RequestKey, Session] = {}
        self.routes: dict[tuple[NodeId, NodeId], Route] = {}
        self.decisions: list[DecisionRecord] = []
        self.installed: list[Route] = []
        self.rrep_log: list[tuple[Rreq, Rrep]] = []
        self.repairs: list[tuple[RequestKey, NodeId, NodeId]] = []
        self.result: dict = {}
        self.founded: list[tuple[float, NodeId, int]] = []
        self._winners: dict[RequestKey, Rreq] = {}
        # hello bookkeeping
        self._last_head_hello: dict[NodeId, float] = {}
        self._heard_heads: dict[NodeId, dict[NodeId, tuple[int, float]]] = defaultdict(dict)
        self._samples: dict[NodeId, list[HelloSample]] = defaultdict(list)
        self._hello_sent: set[NodeId] = set()
        self._joined_at: dict[NodeId, float] = {m.id: 0.0 for m in world.secondaries if m.cluster is not None}
        self._repairing: set[tuple[NodeId, NodeId]] = set()

    # helpers ----------------------------------------------------------------

    def members_of(self, head: NodeId) -> set[NodeId]:
        return self.clusters.cluster_of_head(head).members

    def head_of(self, nid: NodeId) -> NodeId | None:
        return self.clusters.head_of(nid)

    def _record(self, sim: Simulator, head: NodeId, d: Decision) -> None:
        self.decisions.append(
            DecisionRecord(sim.now, head, d.rreq.key, d.action, d.reason, d.rreq.ch_path, d.targets)
        )

    def drop_count(self, head: NodeId, reason: str | None = None) -> int:
        drops = self.heads[head].drops
        return drops[reason] if reason else sum(drops.values())

    # hello exchange ---------------------------------------------------------

    def hello_tick(self, sim: Simulator) -> None:
        now = sim.now
        hp = self.cfg.hello_period
        for hs in self.heads.values():
            stale = [n for n, e in hs.neighbors.items() if e.last_heard < now - 3 * hp]
            for n in stale:
                del hs.neighbors[n]
        # members that missed their head's beacon for a whole period become undecided
        for su in self.world.secondaries:
            if su.role is not Role.MEMBER:
                continue
            heard = self._last_head_hello.get(su.id)
            if heard is None:
                orphan = now - self._joined_at.get(su.id, 0.0) >= hp
            else:
                orphan = heard < now - hp
            if orphan:
                self.clusters.leave(su.id)
                self._last_head_hello.pop(su.id, None)
        # undecided nodes with samples try to join
        for su in self.world.secondaries:
            if su.role is Role.UNDECIDED and su.id in self._hello_sent:
                self._try_join(sim, su)
        for h in sorted(self.heads):
            node = self.world[h]
            targets = [n for n in self.world.neighbors(h) if self.world[n].is_su]
            sim.transmit(h, targets, Hello(h, node.cluster, True, now))
        for su in self.world.secondaries:
            if su.role is Role.UNDECIDED:
                targets = [n for n in self.world.neighbors(su.id) if self.world[n].is_su]
                self._samples[su.id].clear()
                self._hello_sent.add(su.id)
                sim.transmit(su.id, targets, Hello(su.id, None, False, now))

    def _try_join(self, sim: Simulator, su: Node) -> None:
        hp = self.cfg.hello_period
        # only clusters whose head this node can hear are joinable
        heard = {cid: t for cid, t in self._heard_heads[su.id].values() if t >= sim.now - hp}
        usable = [s for s in self._samples[su.id] if s.responder_cluster in heard]
        cid = knn_join(su, usable, self.cfg.knn_k)
        if cid is None:
            # nobody joinable answered a whole round: start a cluster of its own
            c = self.clusters.found(su.id)
            self.heads[su.id] = HeadState(su.id)
            self._hello_sent.discard(su.id)
            self.founded.append((sim.now, su.id, c.id))
            return
        self.clusters.join(su.id, cid)
        self._joined_at[su.id] = sim.now
        self._last_head_hello[su.id] = heard[cid]
        self._hello_sent.discard(su.id)
        self.on_joined(sim, su.id)

    def _on_hello(self, sim: Simulator, to: NodeId, msg: Hello) -> None:
        me = self.world[to]
        if msg.is_head:
            if to in self.heads and msg.sender != to:
                self.heads[to].neighbors[msg.sender] = NeighborEntry(
                    common_channels(me, self.world[msg.sender]), msg.sent_at
                )
            self._heard_heads[to][msg.sender] = (msg.cluster, msg.sent_at)
            if me.role is Role.MEMBER and self.head_of(to) == msg.sender:
                self._last_head_hello[to] = msg.sent_at
            return
        if msg.cluster is None and me.role is not Role.UNDECIDED:
            # triggered hello; the response delay grows with distance
            d = distance(me, self.world[msg.sender])
            rng = max(me.radio_range, 1e-9)
            delay = self.cfg.link_delay * (1.0 + d / rng) + sim.jitter(self.cfg.hello_jitter)
            sim.transmit(to, [msg.sender], TriggeredHello(to, me.cluster, msg.sent_at), delay=delay)

    # discovery --------------------------------------------------------------

    def initiate_discovery(self, sim: Simulator, src: NodeId, dst: NodeId) -> Session | None:
        """Start a route discovery. Returns None when no request is needed or allowed."""
        if src == dst:
            raise SimulationError("discovery towards self")
        node = self.world[src]
        if (src, dst) in self.routes:
            return None
        if node.role is Role.UNDECIDED or not node.is_su:
            return None
        self.request_ids[src] += 1
        rreq = Rreq(self.request_ids[src], src, dst)
        session = Session(rreq.key, sim.now, sim.now + self.cfg.discovery_deadline)
        self.sessions[rreq.key] = session
        sim.set_timer(self.cfg.discovery_deadline, src, ("deadline", rreq.key))
        head = self.head_of(src)
        if head == src:
            self._head_rreq(sim, src, rreq, src)
        else:
            sim.transmit(src, [head], rreq)
        return session

    def _head_rreq(self, sim: Simulator, head: NodeId, rreq: Rreq, sender: NodeId) -> None:
        hs = self.heads[head]
        d = process_rreq(hs, rreq, sender, self.members_of(head), self.cfg.hmax)
        self._record(sim, head, d)
        if d.action is Action.DROP:
            hs.drops[d.reason] += 1
        elif d.action is Action.REPLY:
            col = hs.collectors.get(rreq.key)
            if col is None:
                col = Collector(rreq.key, sim.now + self.cfg.tr)
                hs.collectors[rreq.key] = col
                sim.set_timer(self.cfg.tr, head, ("tr", rreq.key))
            if col.closed:
                hs.drops["late"] += 1
            else:
                col.candidates.append((d.rreq, sim.now))
        else:
            sim.transmit(head, d.targets, d.rreq)

    def _close_collector(self, sim: Simulator, head: NodeId, key: RequestKey) -> None:
        col = self.heads[head].collectors[key]
        col.closed = True
        winner = collect_and_select(col.candidates)
        self._winners[key] = winner
        rrep = Rrep(winner.request_id, winner.src, winner.dst, tuple(reversed(winner.ch_path)))
        self.rrep_log.append((winner, rrep))
        self._head_rrep(sim, head, rrep)

    def _head_rrep(self, sim: Simulator, head: NodeId, rrep: Rrep) -> None:
        path = rrep.ch_path
        idx = path.index(head)
        src = self.world[rrep.src]
        last = idx == len(path) - 1
        if 0 < idx < len(path) - 1:
            downstream = self.world[rrep.relay_nodes[-1] if rrep.relay_nodes else rrep.dst]
            also = src if idx == len(path) - 2 else None
            members = [self.world[m] for m in sorted(self.members_of(head))]
            relay = select_intermediate_node(
                members, downstream, also, exclude=(rrep.src, rrep.dst)
            )
            if relay is None:
                self._notify_failure(sim, head, rrep, path[idx + 1 :], "no_relay")
                return
            rrep = replace(
                rrep,
                relay_nodes=rrep.relay_nodes + (relay,),
                relay_heads=rrep.relay_heads + (head,),
            )
        if not last:
            sim.transmit(head, [path[idx + 1]], rrep)
            return
        first = self.world[rrep.relay_nodes[-1] if rrep.relay_nodes else rrep.dst]
        if not common_channels(src, first):
            self._notify_failure(sim, head, rrep, (), "no_common_channel")
            return
        forward = tuple(reversed(path))
        if len(forward) > 1:
            self.heads[head].routes[rrep.dst] = RouteEntry(forward[1], forward[1:], sim.now)
        if rrep.src == head:
            self._source_rrep(sim, head, rrep)
        else:
            sim.transmit(head, [rrep.src], rrep)

    def _source_rrep(self, sim: Simulator, src: NodeId, rrep: Rrep) -> None:
        session = self.sessions.get(rrep.key)
        if session is None or session.done:
            return
        route = Route(
            src=rrep.src,
            dst=rrep.dst,
            heads=tuple(reversed(rrep.ch_path)),
            relays=tuple(reversed(rrep.relay_nodes)),
            installed_at=sim.now,
        )
        if not self._sound(route.nodes):
            # a primary user took a link's last channel while the reply was in flight
            self._fail_session(rrep.key, "stale_channels")
            return
        route = self._snapshot(route)
        session.done = True
        session.success = True
        session.delay = sim.now - session.started
        session.route = route
        self.routes[(route.src, route.dst)] = route
        self.installed.append(route)
        self._update_result(session)

    def _sound(self, nodes) -> bool:
        return all(common_channels(self.world[a], self.world[b]) for a, b in zip(nodes, nodes[1:]))

    def _snapshot(self, route: Route) -> Route:
        return replace(route, channels=tuple(self.world[n].channels for n in route.nodes))

    def _notify_failure(self, sim, head, rrep: Rrep, heads_left: tuple, reason: str) -> None:
        self.heads[head].drops[reason] += 1
        path = tuple(heads_left) + ((rrep.src,) if rrep.src != (heads_left or (head,))[-1] else ())
        err = Rerr(head, (head, None), rrep.key, reason=reason, path=path)
        if not path:
            self._final_rerr(sim, head, err)
        else:
            sim.transmit(head, [path[0]], err)

    def _fail_session(self, key: RequestKey, reason: str) -> None:
        session = self.sessions.get(key)
        if session is None or session.done:
            return
        session.done = True
        session.reason = reason
        self._update_result(session)

    def _update_result(self, session: Session) -> None:
        first = next(iter(self.sessions.values()))
        if session is first:
            self.result = {"success": session.success, "delay": session.delay, "reason": session.reason}

    # maintenance ------------------------------------------------------------

    def on_joined(self, sim: Simulator, nid: NodeId) -> None:
        for (src, _dst), route in sorted(self.routes.items()):
            if src == nid:
                self.handle_source_move(sim, nid, route)

    def handle_source_move(self, sim: Simulator, src: NodeId, route: Route) -> str:
        """Splice or rediscover after ``src`` changed clusters. Returns what was done."""
        new_head = self.head_of(src)
        if new_head is None:
            return "undecided"
        if new_head == route.heads[0]:
            return "noop"
        if new_head in route.heads:
            j = route.heads.index(new_head)
            heads = route.heads[j:]
            relays = route.relays[j:]  # relays[i] sits at heads[i + 1]
            if self._sound((src, *relays, route.dst)):
                new = self._snapshot(replace(route, heads=heads, relays=relays, installed_at=sim.now))
                self.routes[(src, route.dst)] = new
                self.installed.append(new)
                key = (src, route.dst, self.request_ids[src])
                err = Rerr(src, (src, route.heads[0]), key, "moved", path=(new_head,), new_heads=heads)
                if new_head != src:
                    sim.transmit(src, [new_head], err)
                else:
                    self._install_from_rerr(sim, new_head, err)
                return "truncated"
        del self.routes[(src, route.dst)]
        key = (src, route.dst, self.request_ids[src])
        if new_head != src:
            sim.transmit(src, [new_head], Rerr(src, (src, route.heads[0]), key, "moved", path=(new_head,)))
        self.initiate_discovery(sim, src, route.dst)
        return "rediscover"

    def _install_from_rerr(self, sim: Simulator, head: NodeId, err: Rerr) -> None:
        if err.new_heads and len(err.new_heads) > 1 and head in self.heads:
            self.heads[head].routes[err.affected[1]] = RouteEntry(
                err.new_heads[1], err.new_heads[1:], sim.now
            )

    def check_routes(self, sim: Simulator) -> None:
        """Look for route links that lost their last common channel."""
        for (src, dst), route in sorted(self.routes.items()):
            if (src, dst) in self._repairing:
                continue
            nodes = route.nodes
            for t in range(len(nodes) - 1):
                if not common_channels(self.world[nodes[t]], self.world[nodes[t + 1]]):
                    self._repairing.add((src, dst))
                    self.handle_link_failure(sim, route, nodes[t], nodes[t + 1])
                    break

    def handle_link_failure(self, sim: Simulator, route: Route, reporter: NodeId, failed: NodeId) -> None:
        nodes = route.nodes
        t = nodes.index(reporter)
        key = (route.src, route.dst, self.request_ids[route.src])
        if failed == route.dst:
            back = tuple(reversed(route.heads[: route.heads.index(route.head_at(t)) + 1])) + (route.src,)
            self._send_rerr(sim, reporter, Rerr(reporter, (reporter, failed), key, "dst_lost", path=back))
            return
        i = route.heads.index(route.head_at(t))
        j = route.heads.index(route.head_at(t + 1))
        path = tuple(h for h in route.heads[i : j + 1] if h != reporter)
        err = Rerr(reporter, (reporter, failed), key, "link", path=path)
        self._send_rerr(sim, reporter, err)

    def _send_rerr(self, sim: Simulator, sender: NodeId, err: Rerr) -> None:
        # strip leading hops that are the sender itself
        path = err.path
        while path and path[0] == sender:
            path = path[1:]
        err = replace(err, path=path)
        if not path:
            self._final_rerr(sim, sender, err)
        else:
            sim.transmit(sender, [path[0]], err)

    def _on_rerr(self, sim: Simulator, to: NodeId, err: Rerr) -> None:
        if not err.path or err.path[0] != to:
            return
        rest = err.path[1:]
        if err.reason == "moved":
            self._install_from_rerr(sim, to, err)
        if rest:
            sim.transmit(to, [rest[0]], replace(err, path=rest))
        else:
            self._final_rerr(sim, to, err)

    def _final_rerr(self, sim: Simulator, at: NodeId, err: Rerr) -> None:
        src, dst, _ = err.affected
        if err.reason in ("no_relay", "no_common_channel"):
            if at == src:
                self._fail_session(err.affected, err.reason)
            return
        if err.reason == "link":
            self._repair(sim, at, err)
            return
        if err.reason in ("repaired", "unrepairable", "dst_lost") and at == src:
            self._repairing.discard((src, dst))
        if err.reason == "repaired" and at == src:
            failed, replacement = err.repair
            route = self.routes.get((src, dst))
            if route is None or failed not in route.relays:
                return
            relays = tuple(replacement if r == failed else r for r in route.relays)
            if self._sound((src, *relays, dst)):
                new = self._snapshot(replace(route, relays=relays, installed_at=sim.now))
                self.routes[(src, dst)] = new
                self.installed.append(new)
                return
            # another link broke meanwhile; fall through to a fresh discovery
        if err.reason in ("unrepairable", "dst_lost", "repaired") and at == src:
            if (src, dst) in self.routes:
                del self.routes[(src, dst)]
            self._invalidate_tables(dst)
            self.initiate_discovery(sim, src, dst)

    def _repair(self, sim: Simulator, head: NodeId, err: Rerr) -> None:
        reporter, failed = err.broken_hop
        src, dst, _ = err.affected
        route = self.routes.get((src, dst))
        if route is None or failed not in route.relays:
            return
        nodes = route.nodes
        pos = nodes.index(failed)
        members = [self.world[m] for m in sorted(self.members_of(head))]
        replacement = select_intermediate_node(
            members,
            self.world[nodes[pos - 1]],
            self.world[nodes[pos + 1]],
            exclude=(failed, src, dst),
        )
        j = route.heads.index(head)
        back = tuple(reversed(route.heads[:j])) + (src,)
        if replacement is None:
            reply = Rerr(head, err.broken_hop, err.affected, "unrepairable", path=back)
        else:
            self.repairs.append((err.affected, failed, replacement))
            reply = Rerr(head, err.broken_hop, err.affected, "repaired", path=back, repair=(failed, replacement))
        self._send_rerr(sim, head, reply)

    def _invalidate_tables(self, dst: NodeId) -> None:
        for hs in self.heads.values():
            hs.routes.pop(dst, None)

    def resign(self, sim: Simulator, head: NodeId) -> NodeId:
        """Hand the head role to the best remaining member of the cluster."""
        cluster = self.clusters.cluster_of_head(head)
        others = sorted(m for m in cluster.members if m != head)
        new = resign_head(head, cluster, self.world)
        sim.transmit(head, others, CheckForNewClusterHead(head, cluster.id))
        del self.heads[head]
        self.heads[new] = HeadState(new)
        self._last_head_hello[head] = sim.now
        return new

    # engine hooks -----------------------------------------------------------

    def on_hello_tick(self, sim: Simulator) -> None:
        self.hello_tick(sim)

    def on_deliver(self, sim: Simulator, to: NodeId, sender: NodeId, msg) -> None:
        if isinstance(msg, Rreq):
            if to in self.heads:
                self._head_rreq(sim, to, msg, sender)
        elif isinstance(msg, Rrep):
            if to == msg.src and to not in msg.ch_path:
                self._source_rrep(sim, to, msg)
            elif to in self.heads and to in msg.ch_path:
                self._head_rrep(sim, to, msg)
        elif isinstance(msg, Rerr):
            self._on_rerr(sim, to, msg)
        elif isinstance(msg, Hello):
            self._on_hello(sim, to, msg)
        elif isinstance(msg, TriggeredHello):
            node = self.world[to]
            if node.role is Role.UNDECIDED:
                delay = sim.now - msg.hello_sent_at
                self._samples[to].append(HelloSample(msg.responder, msg.cluster, delay))
        elif isinstance(msg, CheckForNewClusterHead):
            self._last_head_hello[to] = sim.now

    def on_timer(self, sim: Simulator, owner: NodeId, tag) -> None:
        what, key = tag
        if what == "tr":
            if owner in self.heads and key in self.heads[owner].collectors:
                self._close_collector(sim, owner, key)
        elif what == "deadline":
            self._fail_session(key, "deadline")
        elif what == "discover":
            src, dst = key
            self.initiate_discovery(sim, src, dst)
        elif what == "resign":
            self.resign(sim, owner)

    def on_move(self, sim: Simulator, nid: NodeId) -> None:
        node = self.world[nid]
        if node.role is Role.MEMBER:
            head = self.head_of(nid)
            if head is not None and not in_range(node, self.world[head]):
                self.clusters.leave(nid)
                self._last_head_hello.pop(nid, None)
        self.check_routes(sim)

    def on_pu_toggle(self, sim: Simulator, pu: NodeId) -> None:
        self.check_routes(sim)
