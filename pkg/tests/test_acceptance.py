"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import networkx as nx
import pytest

import test_maintenance as maint
from crnroute.fixtures import run_fig3
from crnroute.harness import DEFAULT_GRID, compare, config_for, run_episode, run_sweep
from crnroute.invariants import check_episode
from crnroute.model import SimConfig, in_range

from conftest import build_line_world, report_criterion


@pytest.fixture(scope="module")
def trends():
    _, points = run_sweep(SimConfig(), DEFAULT_GRID, seeds=range(1, 11))
    return points, compare(points)


def _series(points, proto, attr):
    return {p.n_cr: getattr(p, attr) for p in points if p.protocol == proto}


def _fmt(series):
    return " ".join(f"{n}:{v:.2f}" for n, v in sorted(series.items()))


def test_criterion_1_rreq_trend(trends):
    points, _ = trends
    crp, aodv = _series(points, "crp", "mean_rreq"), _series(points, "aodv", "mean_rreq")
    ok = all(crp[n] < aodv[n] for n in (40, 60, 80, 100)) and aodv[100] - crp[100] > aodv[40] - crp[40]
    report_criterion(1, ok, f"RREQ crp[{_fmt(crp)}] aodv[{_fmt(aodv)}]")
    assert ok
    assert trends[1].verdicts["A"] is True


def test_criterion_2_rrep_trend(trends):
    points, _ = trends
    crp, aodv = _series(points, "crp", "mean_rrep"), _series(points, "aodv", "mean_rrep")
    ok = all(crp[n] <= aodv[n] for n in DEFAULT_GRID) and crp[100] < aodv[100]
    report_criterion(2, ok, f"RREP crp[{_fmt(crp)}] aodv[{_fmt(aodv)}]")
    assert ok
    assert trends[1].verdicts["B"] is True


def test_criterion_3_delay_trend(trends):
    points, _ = trends
    crp, aodv = _series(points, "crp", "mean_delay"), _series(points, "aodv", "mean_delay")
    tol = SimConfig().link_delay

    def nondecreasing(s):
        vals = [s[n] for n in DEFAULT_GRID]
        return all(b >= a - tol for a, b in zip(vals, vals[1:]))

    ok = all(crp[n] < aodv[n] for n in DEFAULT_GRID) and nondecreasing(crp) and nondecreasing(aodv)
    report_criterion(3, ok, f"delay crp[{_fmt(crp)}] aodv[{_fmt(aodv)}]")
    assert ok
    assert trends[1].verdicts["C"] is True


def test_criterion_4_success_trend(trends):
    points, _ = trends
    crp, aodv = _series(points, "crp", "success_rate"), _series(points, "aodv", "success_rate")
    ok = (
        all(crp[n] >= aodv[n] for n in DEFAULT_GRID)
        and crp[100] - aodv[100] >= crp[40] - aodv[40]
        and crp[100] >= 0.9
    )
    report_criterion(4, ok, f"success crp[{_fmt(crp)}] aodv[{_fmt(aodv)}]")
    assert ok
    assert trends[1].verdicts["D"] is True


def _head_graph(world, heads):
    g = nx.Graph()
    g.add_nodes_from(heads)
    for i, a in enumerate(heads):
        for b in heads[i + 1:]:
            if in_range(world[a], world[b]):
                g.add_edge(a, b)
    return g


def test_criterion_5_route_length_oracle():
    checked = mismatched = 0
    for seed in range(1, 80):
        for n in (20, 30, 36):
            cfg = config_for(SimConfig(), n, seed)
            assert cfg.n_secondary <= 30
            ep = run_episode(cfg, "crp")
            world, agent = ep.world, ep.agent
            g = _head_graph(world, sorted(agent.heads))
            for winner, _ in agent.rrep_log:
                session = agent.sessions[winner.key]
                if not session.success:
                    continue
                a, b = winner.ch_path[0], winner.ch_path[-1]
                assert a == agent.head_of(winner.src) and b == agent.head_of(winner.dst)
                want = nx.shortest_path_length(g, a, b)
                if want > cfg.hmax:
                    continue
                checked += 1
                mismatched += len(winner.ch_path) - 1 != want
    ok = checked >= 100 and mismatched == 0
    report_criterion(5, ok, f"{checked} successful discoveries checked against BFS, {mismatched} mismatches")
    assert ok


def test_criterion_6_fig3_fixture():
    out = run_fig3()
    ok = out.success and out.route == ["SU1", "SU5", "SU8"] and out.head_clusters == [1, 2, 3] and out.ch4_drops == 1
    report_criterion(6, ok, f"{out.render()}, CH4 duplicate drops {out.ch4_drops}")
    assert ok


def _varied_configs():
    base = SimConfig()
    for seed in range(1, 11):
        for n in (20, 60, 100):
            yield config_for(base, n, seed)
        yield config_for(base.with_(pu_activity_rate=0.3, pu_epoch=5.0), 60, seed)
        yield config_for(base.with_(mobility=True, speed=8.0, pause=2.0), 60, seed)
        yield config_for(base.with_(radio_range=200.0, head_range=450.0, hmax=4), 80, seed)


def test_criterion_7_invariants():
    runs, violations = 0, []
    for cfg in _varied_configs():
        for protocol in ("crp", "aodv"):
            violations += check_episode(run_episode(cfg, protocol, trace=True))
            runs += 1
    ok = runs >= 50 and not violations
    report_criterion(7, ok, f"{runs} randomized runs, {len(violations)} violations")
    assert ok, violations[:5]


def test_criterion_8_determinism(tmp_path):
    cases = 0
    identical = True
    for protocol in ("crp", "aodv"):
        for seed in (1, 7):
            cfg = config_for(SimConfig(pu_activity_rate=0.2, mobility=True), 60, seed)
            rows, traces = [], []
            for rep in range(2):
                ep = run_episode(cfg, protocol, trace=True)
                m = ep.metrics
                delay = "" if m.routing_delay is None else f"{m.routing_delay:.6f}"
                rows.append(f"{protocol},{seed},{m.rreq_count},{m.rrep_count},{delay},{int(m.success)}")
                path = tmp_path / f"{protocol}-{seed}-{rep}.csv"
                ep.sim.write_trace(path)
                traces.append(path.read_bytes())
            identical &= rows[0] == rows[1] and traces[0] == traces[1]
            cases += 1
    report_criterion(8, identical, f"{cases} config/seed pairs rerun, CSV rows and traces byte-identical={identical}")
    assert identical


def test_criterion_9_maintenance():
    results = {}
    for name, fn in [
        ("a", maint.test_source_moves_onto_route_truncates),
        ("b", maint.test_source_moves_elsewhere_rediscovers),
        ("c", maint.test_relay_failure_repairs_locally),
    ]:
        try:
            fn(build_line_world())
            results[name] = True
        except AssertionError:
            results[name] = False
    ok = all(results.values())
    report_criterion(9, ok, " ".join(f"({k}) {'ok' if v else 'failed'}" for k, v in results.items()))
    assert ok
