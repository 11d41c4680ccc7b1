"""Deterministic discrete-event core.

Events pop in ``(at, seq)`` order where ``seq`` is assigned at scheduling
time, so a run is a pure function of the world, the protocol and the seed.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .messages import describe, kind_of
from .model import NodeId, World, in_range, rng_for


class SimulationError(RuntimeError):
    """Logic error inside a run (scheduling in the past, handler failure, broken invariant)."""


class EventKind(str, enum.Enum):
    DELIVER = "deliver"
    TIMER = "timer"
    NODE_MOVE = "move"
    PU_TOGGLE = "pu_toggle"
    HELLO_TICK = "hello_tick"


@dataclass(frozen=True)
class SimEvent:
    at: float
    seq: int
    kind: EventKind
    node: NodeId | None = None
    sender: NodeId | None = None
    msg: Any = None
    tag: Any = None
    pos: tuple[float, float] | None = None

    def sort_key(self) -> tuple[float, int]:
        return (self.at, self.seq)


class EventQueue:
    def __init__(self):
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def push(self, at: float, kind: EventKind, **fields) -> SimEvent:
        ev = SimEvent(at=at, seq=next(self._seq), kind=kind, **fields)
        heapq.heappush(self._heap, (ev.at, ev.seq, ev))
        return ev

    def peek(self) -> SimEvent:
        return self._heap[0][2]

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)[2]

    def pending(self) -> list[SimEvent]:
        return [e for _, _, e in sorted(self._heap)]


@dataclass
class Transmission:
    """One send action: a unicast or a single broadcast to several receivers."""

    at: float
    sender: NodeId
    receivers: tuple[NodeId, ...]
    msg: Any
    kind: str


@dataclass
class RunMetrics:
    rreq_count: int = 0
    rrep_count: int = 0
    routing_delay: float | None = None
    success: bool = False
    rerr_count: int = 0
    dropped: int = 0

    def check(self) -> None:
        if self.rreq_count < 0 or self.rrep_count < 0:
            raise SimulationError("negative message count")
        if (self.routing_delay is not None) != self.success:
            raise SimulationError("routing_delay must be present iff success")


class Protocol:
    """Hook surface the engine dispatches to. Subclasses override what they need."""

    name = "base"

    def start(self, sim: "Simulator") -> None:
        pass

    def on_deliver(self, sim: "Simulator", to: NodeId, sender: NodeId, msg) -> None:
        pass

    def on_timer(self, sim: "Simulator", owner: NodeId, tag) -> None:
        pass

    def on_hello_tick(self, sim: "Simulator") -> None:
        pass

    def on_move(self, sim: "Simulator", nid: NodeId) -> None:
        pass

    def on_pu_toggle(self, sim: "Simulator", pu: NodeId) -> None:
        pass


class Simulator:
    def __init__(self, world: World, protocol: Protocol | None = None, trace: bool = False):
        self.world = world
        self.config = world.config
        self.protocol = protocol or Protocol()
        self.queue = EventQueue()
        self.now = 0.0
        self.processed = 0
        self.dropped = 0
        self.tx: Counter[str] = Counter()
        self.transmissions: list[Transmission] = []
        self.trace: list[str] | None = [] if trace else None
        self._stopped = False
        self._jitter = rng_for(self.config.seed, "jitter")
        self._mobility: RandomWaypoint | None = None
        self._pu_rng = rng_for(self.config.seed, "pu_toggle")

    # scheduling -----------------------------------------------------------

    def schedule(self, at: float, kind: EventKind, **fields) -> SimEvent:
        if at < self.now:
            raise SimulationError(f"scheduling {kind.value} at {at} before now={self.now}")
        return self.queue.push(at, kind, **fields)

    def set_timer(self, delay: float, owner: NodeId, tag) -> SimEvent:
        return self.schedule(self.now + delay, EventKind.TIMER, node=owner, tag=tag)

    def jitter(self, hi: float) -> float:
        return float(self._jitter.uniform(0.0, hi)) if hi > 0 else 0.0

    def deliver(self, sender: NodeId, receiver: NodeId, msg, delay: float | None = None) -> bool:
        """Schedule one Deliver event, or drop (and count) an out-of-range send."""
        if not in_range(self.world[sender], self.world[receiver]):
            self.dropped += 1
            return False
        d = self.config.link_delay if delay is None else delay
        self.schedule(self.now + d, EventKind.DELIVER, node=receiver, sender=sender, msg=msg)
        return True

    def transmit(self, sender: NodeId, receivers: Iterable[NodeId], msg, delay: float | None = None) -> int:
        """One transmission (unicast or broadcast); counted once regardless of fan-out.

        Returns the number of receivers that were in range.
        """
        receivers = tuple(receivers)
        if not receivers:
            return 0
        kind = kind_of(msg)
        self.tx[kind] += 1
        self.transmissions.append(Transmission(self.now, sender, receivers, msg, kind))
        return sum(self.deliver(sender, r, msg, delay) for r in receivers)

    def stop(self) -> None:
        self._stopped = True

    # environment dynamics -------------------------------------------------

    def enable_mobility(self, nodes: Iterable[NodeId]) -> None:
        self._mobility = RandomWaypoint(self, list(nodes))
        self._mobility.start()

    def enable_pu_activity(self) -> None:
        for pu in self.world.primaries:
            self._schedule_pu_toggle(pu.id)

    def _schedule_pu_toggle(self, pu: NodeId) -> None:
        rate = self.config.pu_activity_rate
        if rate <= 0:
            return
        epochs = int(self._pu_rng.geometric(rate))
        at = (math.floor(self.now / self.config.pu_epoch) + epochs) * self.config.pu_epoch
        self.schedule(at, EventKind.PU_TOGGLE, node=pu)

    def start_hello(self, at: float = 0.0) -> None:
        self.schedule(at, EventKind.HELLO_TICK)

    # main loop ------------------------------------------------------------

    def run(self, until: float = math.inf) -> RunMetrics:
        self._stopped = False
        while self.queue and not self._stopped:
            if self.queue.peek().at > until:
                break
            ev = self.queue.pop()
            if ev.at < self.now:
                raise SimulationError(f"time went backwards at {ev}")
            self.now = ev.at
            self.processed += 1
            self._log(ev)
            try:
                self._dispatch(ev)
            except SimulationError:
                raise
            except Exception as exc:  # noqa: BLE001 - rewrapped with diagnostics
                raise SimulationError(f"handler failed on event {ev}: {exc!r}") from exc
        return self.metrics()

    def _dispatch(self, ev: SimEvent) -> None:
        p = self.protocol
        if ev.kind is EventKind.DELIVER:
            p.on_deliver(self, ev.node, ev.sender, ev.msg)
        elif ev.kind is EventKind.TIMER:
            p.on_timer(self, ev.node, ev.tag)
        elif ev.kind is EventKind.HELLO_TICK:
            p.on_hello_tick(self)
            self.schedule(self.now + self.config.hello_period, EventKind.HELLO_TICK)
        elif ev.kind is EventKind.NODE_MOVE:
            node = self.world[ev.node]
            node.x, node.y = ev.pos
            self.world.refresh_channels()
            if self._mobility is not None and ev.tag == "waypoint":
                self._mobility.advance(ev.node)
            p.on_move(self, ev.node)
        elif ev.kind is EventKind.PU_TOGGLE:
            pu = self.world[ev.node]
            pu.active = not pu.active
            self.world.refresh_channels()
            if ev.tag != "scripted":
                self._schedule_pu_toggle(ev.node)
            p.on_pu_toggle(self, ev.node)

    def metrics(self) -> RunMetrics:
        m = getattr(self.protocol, "result", None)
        success = bool(m and m.get("success"))
        return RunMetrics(
            rreq_count=self.tx["rreq"],
            rrep_count=self.tx["rrep"],
            routing_delay=m.get("delay") if success else None,
            success=success,
            rerr_count=self.tx["rerr"],
            dropped=self.dropped,
        )

    # tracing --------------------------------------------------------------

    def _log(self, ev: SimEvent) -> None:
        if self.trace is None:
            return
        msg = ""
        key = hops = path = ""
        if ev.msg is not None:
            msg = kind_of(ev.msg)
            key, hops, path = describe(ev.msg)
        sender = "" if ev.sender is None else str(ev.sender)
        node = "" if ev.node is None else str(ev.node)
        tag = "" if ev.tag is None else str(ev.tag)
        self.trace.append(
            f"{ev.at:.6f},{ev.seq},{ev.kind.value},{node},{sender},{msg},{key},{hops},{path},{tag}"
        )

    def write_trace(self, path: str | Path) -> None:
        if self.trace is None:
            raise SimulationError("tracing was not enabled for this run")
        Path(path).write_text(TRACE_HEADER + "\n" + "\n".join(self.trace) + "\n")


TRACE_HEADER = "time,seq,event,node,from,msg,key,hops,path,tag"


class RandomWaypoint:
    """Random waypoint mobility for a set of nodes, stepped as NodeMove events."""

    def __init__(self, sim: Simulator, nodes: list[NodeId]):
        self.sim = sim
        self.nodes = sorted(nodes)
        self.rng = rng_for(sim.config.seed, "mobility")
        self.target: dict[NodeId, tuple[float, float]] = {}
        self.pause_until: dict[NodeId, float] = {}

    def start(self) -> None:
        for nid in self.nodes:
            self._new_target(nid)
            self._schedule(nid)

    def _new_target(self, nid: NodeId) -> None:
        side = self.sim.config.area_side
        x, y = self.rng.uniform(0.0, side, size=2)
        self.target[nid] = (float(x), float(y))

    def _schedule(self, nid: NodeId) -> None:
        cfg = self.sim.config
        node = self.sim.world[nid]
        now = self.sim.now
        if now < self.pause_until.get(nid, 0.0):
            at = self.pause_until[nid]
            self.sim.schedule(at, EventKind.NODE_MOVE, node=nid, pos=node.pos, tag="waypoint")
            return
        tx, ty = self.target[nid]
        dx, dy = tx - node.x, ty - node.y
        dist = math.hypot(dx, dy)
        step = cfg.speed * cfg.mobility_step
        if dist <= step:
            pos = (tx, ty)
        else:
            pos = (node.x + dx / dist * step, node.y + dy / dist * step)
        self.sim.schedule(now + cfg.mobility_step, EventKind.NODE_MOVE, node=nid, pos=pos, tag="waypoint")

    def advance(self, nid: NodeId) -> None:
        node = self.sim.world[nid]
        if node.pos == self.target[nid] and self.sim.now >= self.pause_until.get(nid, 0.0):
            self.pause_until[nid] = self.sim.now + self.sim.config.pause
            self._new_target(nid)
        self._schedule(nid)
