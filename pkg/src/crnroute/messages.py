"""Control messages exchanged by the routing protocols."""

from __future__ import annotations

from dataclasses import dataclass

from .model import NodeId

RequestKey = tuple[NodeId, NodeId, int]  # (src, dst, request_id)


@dataclass(frozen=True)
class Hello:
    sender: NodeId
    cluster: int | None
    is_head: bool
    sent_at: float


@dataclass(frozen=True)
class TriggeredHello:
    responder: NodeId
    cluster: int
    hello_sent_at: float


@dataclass(frozen=True)
class Rreq:
    request_id: int
    src: NodeId
    dst: NodeId
    ch_path: tuple[NodeId, ...] = ()
    # remaining head path when forwarded from a routing-table entry
    via: tuple[NodeId, ...] = ()

    @property
    def key(self) -> RequestKey:
        return (self.src, self.dst, self.request_id)

    @property
    def hops(self) -> int:
        return len(self.ch_path)


@dataclass(frozen=True)
class Rrep:
    request_id: int
    src: NodeId
    dst: NodeId
    ch_path: tuple[NodeId, ...]  # reversed winning head path, destination head first
    relay_nodes: tuple[NodeId, ...] = ()  # appended in travel order
    relay_heads: tuple[NodeId, ...] = ()

    @property
    def key(self) -> RequestKey:
        return (self.src, self.dst, self.request_id)

    @property
    def hops(self) -> int:
        return len(self.ch_path)


@dataclass(frozen=True)
class Rerr:
    reporter: NodeId
    broken_hop: tuple[NodeId, NodeId | None]
    affected: RequestKey
    reason: str = "link"
    # remaining head path back towards the source (or towards the repairing head)
    path: tuple[NodeId, ...] = ()
    repair: tuple[NodeId, NodeId] | None = None  # (failed, replacement)
    new_heads: tuple[NodeId, ...] = ()  # head path after a source-move splice

    @property
    def key(self) -> RequestKey:
        return self.affected


@dataclass(frozen=True)
class CheckForNewClusterHead:
    old_head: NodeId
    cluster: int


@dataclass(frozen=True)
class AodvRreq:
    request_id: int
    src: NodeId
    dst: NodeId
    node_path: tuple[NodeId, ...]

    @property
    def key(self) -> RequestKey:
        return (self.src, self.dst, self.request_id)

    @property
    def hops(self) -> int:
        return len(self.node_path) - 1


@dataclass(frozen=True)
class AodvRrep:
    request_id: int
    src: NodeId
    dst: NodeId
    node_path: tuple[NodeId, ...]  # reverse of the winning request path, dst first
    position: int = 0  # index of the current holder in node_path

    @property
    def key(self) -> RequestKey:
        return (self.src, self.dst, self.request_id)

    @property
    def hops(self) -> int:
        return len(self.node_path) - 1


ControlMessage = (
    Hello | TriggeredHello | Rreq | Rrep | Rerr | CheckForNewClusterHead | AodvRreq | AodvRrep
)

# counter bucket for each message type
KIND = {
    Hello: "hello",
    TriggeredHello: "triggered_hello",
    Rreq: "rreq",
    Rrep: "rrep",
    Rerr: "rerr",
    CheckForNewClusterHead: "check_head",
    AodvRreq: "rreq",
    AodvRrep: "rrep",
}


def kind_of(msg) -> str:
    return KIND[type(msg)]


def describe(msg) -> tuple[str, str, str]:
    """(request key, hops, path) strings for trace lines."""
    key = getattr(msg, "key", None)
    key_s = "" if key is None else f"{key[0]}>{key[1]}#{key[2]}"
    hops = getattr(msg, "hops", None)
    hops_s = "" if hops is None else str(hops)
    path = getattr(msg, "ch_path", None) or getattr(msg, "node_path", None) or ()
    return key_s, hops_s, "-".join(str(p) for p in path)
