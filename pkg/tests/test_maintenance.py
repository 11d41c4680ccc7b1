from crnroute.engine import EventKind
from crnroute.messages import CheckForNewClusterHead, Rerr, Rreq
from crnroute.model import Role

from conftest import discover_at, start_crp

S, D, R1, R2 = 5, 6, 7, 8


def _routed(world, clusters):
    sim, agent = start_crp(world, clusters)
    discover_at(sim, 12.5, S, D)
    sim.run(until=29)
    route = agent.routes[(S, D)]
    assert route.heads == (1, 2, 3) and route.relays == (R1,)
    return sim, agent


def _sent_after(sim, t, kind):
    return [x for x in sim.transmissions if x.at >= t and isinstance(x.msg, kind)]


def test_source_moves_onto_route_truncates(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    sim.schedule(30, EventKind.NODE_MOVE, node=S, pos=(290.0, 130.0), tag="scripted")
    sim.run(until=45)
    assert world[S].cluster == 2
    route = agent.routes[(S, D)]
    assert route.heads == (2, 3)
    assert route.nodes == (S, D)
    assert _sent_after(sim, 30, Rreq) == []
    moved = [x for x in _sent_after(sim, 30, Rerr) if x.msg.reason == "moved"]
    assert [(x.sender, x.receivers) for x in moved] == [(S, (2,))]
    # the new source head learned the spliced path
    assert agent.heads[2].routes[D].full_head_path == (3,)


def test_source_moves_elsewhere_rediscovers(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    sim.schedule(30, EventKind.NODE_MOVE, node=S, pos=(100.0, 290.0), tag="scripted")
    sim.run(until=80)
    assert world[S].cluster == 4
    from_src = [x for x in _sent_after(sim, 30, Rreq) if x.sender == S]
    assert len(from_src) == 1
    assert from_src[0].receivers == (4,)
    route = agent.routes[(S, D)]
    assert route.heads == (4, 1, 2, 3)


def test_relay_failure_repairs_locally(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    sim.schedule(30, EventKind.PU_TOGGLE, node=0, tag="scripted")
    sim.run(until=45)
    assert world[R1].channels == frozenset()
    assert _sent_after(sim, 30, Rreq) == []
    assert agent.routes[(S, D)].relays == (R2,)
    assert agent.repairs == [((S, D, 1), R1, R2)]
    reasons = [x.msg.reason for x in _sent_after(sim, 30, Rerr)]
    assert reasons == ["link", "link", "repaired", "repaired"]


def test_relay_failure_without_alternate_rediscovers(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    world[0].radio_range = 120.0  # now covers all of cluster 2
    sim.schedule(30, EventKind.PU_TOGGLE, node=0, tag="scripted")
    sim.run(until=80)
    reasons = [x.msg.reason for x in _sent_after(sim, 30, Rerr)]
    assert "unrepairable" in reasons
    from_src = [x for x in _sent_after(sim, 30, Rreq) if x.sender == S]
    assert len(from_src) == 1
    second = agent.sessions[(S, D, 2)]
    assert second.done and not second.success and second.reason == "no_relay"


def test_destination_failure_reported_to_source(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    world[0].x, world[0].y = 440.0, 85.0  # the primary user now sits next to D
    sim.schedule(30, EventKind.PU_TOGGLE, node=0, tag="scripted")
    sim.run(until=80)
    errs = [x for x in _sent_after(sim, 30, Rerr) if x.msg.reason == "dst_lost"]
    assert errs and errs[-1].receivers == (S,)
    assert [x.sender for x in _sent_after(sim, 30, Rreq) if x.sender == S] == [S]


def test_rejoining_same_cluster_is_noop(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    route = agent.routes[(S, D)]
    assert agent.handle_source_move(sim, S, route) == "noop"
    assert agent.routes[(S, D)] is route


def test_resignation_hands_over(line_world):
    world, clusters = line_world
    sim, agent = _routed(world, clusters)
    new = agent.resign(sim, 2)
    assert new == R1  # energies tie, lowest id wins
    assert world[2].role is Role.MEMBER and world[R1].role is Role.CLUSTER_HEAD
    assert 2 not in agent.heads and agent.heads[R1].neighbors == {}
    (note,) = [x for x in sim.transmissions if isinstance(x.msg, CheckForNewClusterHead)]
    assert note.sender == 2 and set(note.receivers) == {R1, R2}
    clusters.check()
