import itertools

import pytest

from crnroute.fixtures import load_fig3, run_fig3
from crnroute.model import common_channels, in_range


def _lab(world, name):
    return world.by_label(name)


def test_layout_matches_description():
    world, clusters, src, dst = load_fig3()
    heads = {name: _lab(world, name) for name in ("CH1", "CH2", "CH3", "CH4")}
    links = {frozenset((a, b)) for a, b in itertools.combinations(heads, 2) if in_range(heads[a], heads[b])}
    assert links == {frozenset(p) for p in [("CH1", "CH2"), ("CH1", "CH4"), ("CH2", "CH3"), ("CH2", "CH4")]}
    su1, su8 = world[src], world[dst]
    cluster2 = clusters[_lab(world, "CH2").cluster].members
    sharing = [m for m in cluster2 if common_channels(world[m], su1) and common_channels(world[m], su8)]
    assert [world[m].name for m in sharing] == ["SU5"]
    clusters.check()


def test_default_route():
    out = run_fig3()
    assert out.success
    assert out.head_clusters == [1, 2, 3]
    assert out.route == ["SU1", "SU5", "SU8"]
    assert out.ch4_drops == 1
    assert out.render() == "heads 1->2->3 route {SU1, SU5, SU8}"


def test_ch4_hears_request_twice_and_forwards_once():
    out = run_fig3(trace=True)
    world, agent = out.episode.world, out.episode.agent
    ch4 = _lab(world, "CH4").id
    got = [d for d in agent.decisions if d.head == ch4]
    assert len(got) == 2
    assert sum(d.action.value.startswith("forward") for d in got) <= 1


def test_no_relay_variant():
    out = run_fig3("no_relay")
    assert not out.success
    assert out.reason == "no_relay"
    assert out.render() == "no route: no_relay"


def test_same_cluster_variant():
    out = run_fig3("same_cluster")
    assert out.success
    assert out.route == ["SU1", "SU8"]
    assert out.head_clusters == [1]


def test_unknown_variant():
    with pytest.raises(ValueError):
        load_fig3("sideways")
