"""Post-run invariant checks over a finished episode.

Everything is read back from the simulator's transmission log and the
protocol's own logs, so a check never trusts the code path it is checking.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .aodv import Aodv
from .crp import ClusterRouting
from .messages import AodvRrep, AodvRreq, Rrep, Rreq


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.detail}"


class InvariantViolation(AssertionError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations[:5]))


def _distinct(path) -> bool:
    return len(set(path)) == len(path)


def check_crp(sim, agent: ClusterRouting) -> list[Violation]:
    out: list[Violation] = []
    hmax = sim.config.hmax
    forwards: Counter = Counter()
    winners = {w.key: w for w, _ in agent.rrep_log}
    for tx in sim.transmissions:
        msg = tx.msg
        if isinstance(msg, Rreq):
            if msg.ch_path:
                # a head forwards with itself as the last entry
                if msg.ch_path[-1] != tx.sender:
                    out.append(Violation("forward-once", f"{tx.sender} sent rreq {msg.key} not ending at itself"))
                forwards[(tx.sender, msg.key)] += 1
                if msg.hops > hmax:
                    out.append(Violation("hop-bound", f"rreq {msg.key} forwarded with {msg.hops} hops"))
            if not _distinct(msg.ch_path):
                out.append(Violation("loop-free", f"rreq {msg.key} path {msg.ch_path}"))
        elif isinstance(msg, Rrep):
            if not _distinct(msg.ch_path):
                out.append(Violation("loop-free", f"rrep {msg.key} path {msg.ch_path}"))
            w = winners.get(msg.key)
            if w is None or tuple(reversed(w.ch_path)) != msg.ch_path:
                out.append(Violation("rrep-reversal", f"rrep {msg.key} path {msg.ch_path} vs winner"))
    for (head, key), n in forwards.items():
        if n > 1:
            out.append(Violation("forward-once", f"head {head} forwarded {key} {n} times"))
    per_head = Counter((d.head, d.key) for d in agent.decisions if d.action.value.startswith("forward"))
    for (head, key), n in per_head.items():
        if n > 1:
            out.append(Violation("forward-once", f"head {head} decided to forward {key} {n} times"))
    for winner, rrep in agent.rrep_log:
        if tuple(reversed(winner.ch_path)) != rrep.ch_path:
            out.append(Violation("rrep-reversal", f"{winner.key}: {winner.ch_path} vs {rrep.ch_path}"))
    for route in agent.installed:
        nodes = route.nodes
        if len(route.channels) != len(nodes):
            out.append(Violation("channel-soundness", f"route {nodes} has no channel snapshot"))
            continue
        for i in range(len(nodes) - 1):
            if not route.channels[i] & route.channels[i + 1]:
                out.append(
                    Violation("channel-soundness", f"route {nodes}: {nodes[i]}-{nodes[i + 1]} share no channel")
                )
        if not _distinct(nodes):
            out.append(Violation("loop-free", f"route nodes {nodes}"))
    return out


def check_aodv(sim, agent: Aodv) -> list[Violation]:
    out: list[Violation] = []
    hmax = sim.config.hmax
    forwards: Counter = Counter()
    winners = {req.key: req for req, _ in agent.replies}
    for tx in sim.transmissions:
        msg = tx.msg
        if isinstance(msg, AodvRreq):
            forwards[(tx.sender, msg.key)] += 1
            if not _distinct(msg.node_path):
                out.append(Violation("loop-free", f"rreq {msg.key} path {msg.node_path}"))
            if msg.hops >= hmax:
                out.append(Violation("hop-bound", f"rreq {msg.key} forwarded with {msg.hops} hops"))
        elif isinstance(msg, AodvRrep):
            w = winners.get(msg.key)
            if w is None or tuple(reversed(w.node_path)) != msg.node_path:
                out.append(Violation("rrep-reversal", f"rrep {msg.key} path {msg.node_path}"))
    for (node, key), n in forwards.items():
        if n > 1:
            out.append(Violation("forward-once", f"node {node} forwarded {key} {n} times"))
    return out


def check_episode(ep) -> list[Violation]:
    if isinstance(ep.agent, ClusterRouting):
        return check_crp(ep.sim, ep.agent)
    if isinstance(ep.agent, Aodv):
        return check_aodv(ep.sim, ep.agent)
    return []


def assert_episode(ep) -> None:
    violations = check_episode(ep)
    if violations:
        raise InvariantViolation(violations)
