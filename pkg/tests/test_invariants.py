from dataclasses import replace

import pytest

from crnroute.engine import Transmission
from crnroute.harness import config_for, run_episode
from crnroute.invariants import InvariantViolation, assert_episode, check_episode
from crnroute.messages import AodvRreq, Rreq
from crnroute.model import SimConfig


def _ep(protocol, seed=3):
    return run_episode(config_for(SimConfig(), 60, seed), protocol)


@pytest.mark.parametrize("protocol", ["crp", "aodv"])
def test_clean_runs_pass(protocol):
    for seed in range(1, 6):
        assert check_episode(_ep(protocol, seed)) == []


def _replay(ep, kind, mutate):
    tx = next(t for t in ep.sim.transmissions if isinstance(t.msg, kind))
    ep.sim.transmissions.append(Transmission(tx.at, tx.sender, tx.receivers, mutate(tx.msg), tx.kind))


def test_double_forward_is_caught():
    ep = _ep("aodv")
    _replay(ep, AodvRreq, lambda m: m)
    with pytest.raises(InvariantViolation, match="forward-once"):
        assert_episode(ep)


def test_looping_path_is_caught():
    ep = _ep("aodv")
    _replay(ep, AodvRreq, lambda m: replace(m, request_id=99, node_path=m.node_path + (m.src,)))
    rules = {v.rule for v in check_episode(ep)}
    assert "loop-free" in rules


def test_crp_hop_bound_is_caught():
    for seed in range(1, 20):
        ep = _ep("crp", seed)
        forwarded = [t for t in ep.sim.transmissions if isinstance(t.msg, Rreq) and t.msg.ch_path]
        if forwarded:
            break
    tx = forwarded[0]
    long = tuple(range(1000, 1000 + ep.world.config.hmax + 1)) + (tx.sender,)
    ep.sim.transmissions.append(Transmission(tx.at, tx.sender, tx.receivers, replace(tx.msg, ch_path=long), tx.kind))
    assert "hop-bound" in {v.rule for v in check_episode(ep)}


def test_unsound_route_is_caught():
    ep = _ep("crp")
    (route, *_) = [r for r in ep.agent.installed if len(r.nodes) >= 2]
    route.channels = (frozenset({0}),) + (frozenset(),) * (len(route.nodes) - 1)
    assert "channel-soundness" in {v.rule for v in check_episode(ep)}
