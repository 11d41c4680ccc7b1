import json

import pytest

from crnroute.model import (
    ConfigError,
    Node,
    NodeKind,
    SimConfig,
    World,
    common_channels,
    generate_scenario,
    in_range,
    rng_for,
)


def _node(nid, x, y, r=100.0, ch=()):
    return Node(nid, NodeKind.SECONDARY, x, y, r, frozenset(ch))


def test_single_su_gets_every_channel():
    w = generate_scenario(SimConfig(n_primary=0, n_secondary=1, channel_count=5))
    (only,) = w.secondaries
    assert only.channels == frozenset(range(5))


def test_same_seed_same_world():
    a = generate_scenario(SimConfig(seed=42))
    b = generate_scenario(SimConfig(seed=42))
    assert a.to_json() == b.to_json()
    assert generate_scenario(SimConfig(seed=43)).to_json() != a.to_json()


def test_hundred_users():
    w = generate_scenario(SimConfig(n_primary=50, n_secondary=50))
    assert len(w) == 100
    assert len(w.primaries) == 50
    assert all(0 <= n.x <= 1000 and 0 <= n.y <= 1000 for n in w)


def test_channel_sets_exclude_active_pus_in_range():
    w = generate_scenario(SimConfig(seed=5, channel_count=3, pu_active_prob=0.8))
    for s in w.secondaries:
        for p in w.primaries:
            if p.active and in_range(p, s):
                assert p.licensed not in s.channels
        blocked = {p.licensed for p in w.primaries if p.active and in_range(p, s)}
        assert s.channels == frozenset(range(3)) - blocked


def test_attributes_drawn_in_range():
    w = generate_scenario(SimConfig(seed=9))
    for s in w.secondaries:
        assert 0 <= s.energy <= 1
        assert 1 <= s.throughput <= 100
    for p in w.primaries:
        assert p.channels == {p.licensed}


@pytest.mark.parametrize("bad", [dict(area_side=0), dict(channel_count=0), dict(hmax=0), dict(tr=0), dict(n_secondary=-1)])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        generate_scenario(SimConfig(**bad))


def test_in_range_boundaries():
    a = _node(1, 0, 0)
    assert in_range(a, _node(2, 0, 0))
    assert in_range(a, _node(3, 100, 0))
    assert not in_range(a, _node(4, 101, 0))
    # the shorter range decides
    assert not in_range(_node(5, 0, 0, r=300), _node(6, 150, 0, r=100))


def test_common_channels():
    assert common_channels(_node(1, 0, 0, ch={1, 2}), _node(2, 0, 0, ch={2, 3})) == {2}
    assert common_channels(_node(1, 0, 0, ch={1, 2}), _node(2, 0, 0, ch={1, 2})) == {1, 2}
    assert common_channels(_node(1, 0, 0, ch={1}), _node(2, 0, 0, ch={3})) == frozenset()


def test_world_json_round_trip(tmp_path):
    w = generate_scenario(SimConfig(seed=3))
    path = tmp_path / "w.json"
    w.save(path)
    back = World.load(path)
    assert back.to_json() == w.to_json()
    assert json.loads(path.read_text())["config"]["seed"] == 3


def test_config_unknown_field_is_named():
    with pytest.raises(ConfigError, match="bogus"):
        SimConfig.from_dict({"bogus": 1})


def test_config_bad_type_is_named():
    with pytest.raises(ConfigError, match="hmax"):
        SimConfig.from_dict({"hmax": "ten"})


def test_streams_are_independent():
    a = rng_for(1, "positions").random(3)
    b = rng_for(1, "energy").random(3)
    assert list(a) != list(b)
    assert list(rng_for(1, "positions").random(3)) == list(a)


def test_head_range_never_below_radio_range():
    assert SimConfig(radio_range=950, head_range=900).head_radio_range == 950
    assert SimConfig(radio_range=300, head_range=None).head_radio_range == 300
    assert SimConfig(radio_range=0, head_range=900).head_radio_range == 0
