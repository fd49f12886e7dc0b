"""Kernel layer: subnet formation, membership, leave/silent cleanup."""

from pear2pear.core import parse_ssid
from pear2pear.node import MEMBER, ROOT, SCANNING

from helpers import arrive, clique, make_world, members_of, roots_of, star, trace_events


def test_lone_device_hosts():
    w = make_world()
    w.add_device(1)
    arrive(w, [1])
    w.run_until(1.0)
    node = w.nodes[1]
    assert node.role == ROOT
    assert parse_ssid(node.ssid).root_id == 1


def test_star_forms_single_subnet():
    w = make_world()
    star(w, 1, [2, 3, 4])
    w.run_until(1.0)
    assert w.nodes[1].role == ROOT
    for d in (2, 3, 4):
        assert w.nodes[d].role == MEMBER
        assert w.nodes[d].attached == w.nodes[1].ssid
    assert members_of(w, w.nodes[1].ssid) == {2, 3, 4}


def test_clique_forms_single_subnet():
    w = make_world()
    for d in (5, 6, 7):
        w.add_device(d)
    clique(w, [5, 6, 7])
    arrive(w, [5, 6, 7])
    w.run_until(1.0)
    assert len(roots_of(w)) == 1


def test_join_prefers_lowest_root_id():
    w = make_world()
    for d in (10, 20):
        w.add_device(d)
        arrive(w, [d])
    w.add_device(30)
    w.add_edge(30, 10)
    w.add_edge(30, 20)
    arrive(w, [30], t=1.0)
    w.run_until(2.0)
    assert w.nodes[30].attached == w.nodes[10].ssid


def test_join_timeout_falls_back_to_hosting():
    # device 2 sees root 1, but root 1 cannot see device 2 back, so the join
    # request is lost and the join timer must fire
    w = make_world()
    w.add_device(1)
    arrive(w, [1])
    w.run_until(0.5)
    w.vis[2] = {1}          # one-way visibility: 2 sees 1, 1 never sees 2
    w.add_device(2)
    arrive(w, [2], t=1.0)
    w.run_until(1.0 + w.p.join_timeout - 0.01)
    assert w.nodes[2].role != ROOT
    w.run_until(1.0 + w.p.join_timeout + 0.1)
    assert w.nodes[2].role == ROOT


def test_capacity_boundary():
    w = make_world()
    star(w, 1, range(2, 2 + w.p.max_members + 3))
    w.run_until(w.p.join_timeout * 3)
    admitted = members_of(w, w.nodes[1].ssid)
    assert len(admitted) == w.p.max_members
    rejected = set(range(2, 2 + w.p.max_members + 3)) - admitted
    assert len(rejected) == 3
    # rejects fall back to hosting their own (empty) subnets
    for d in rejected:
        assert w.nodes[d].role == ROOT


def test_duplicate_join_is_idempotent():
    w = make_world()
    star(w, 1, [2])
    w.run_until(1.0)
    root = w.nodes[1]
    before = dict(root.members)
    # a stray re-join from an existing member must not duplicate or reject
    from pear2pear.frames import Frame, FrameKind
    w.schedule(2.0, "frame", frame=Frame(FrameKind.JOIN_REQUEST, src=2, dst=1,
                                         payload={"ssid": root.ssid,
                                                  "wants_catalog": False}))
    w.run_until(3.0)
    assert set(root.members) == set(before)
    assert w.nodes[2].role == MEMBER


def test_polite_leave_purges_after_exact_countdown():
    w = make_world()
    star(w, 1, [2, 3])
    w.run_until(1.0)
    w.schedule(10.0, "depart", device=2, silent=False)
    w.run_until(200.0)
    root = w.nodes[1]
    assert 2 not in root.members
    (leaving,) = trace_events(w, "leaving", device=1)
    (purge,) = [r for r in trace_events(w, "purge", device=1)
                if r.details["peer"] == 2]
    assert purge.details["reason"] == "leave"
    assert purge.time - leaving.time == w.p.leave_countdown


def test_rejoin_during_countdown_cancels_purge():
    w = make_world()
    star(w, 1, [2, 3])
    w.run_until(1.0)
    w.schedule(10.0, "depart", device=2, silent=False)
    w.schedule(15.0, "arrive", device=2)
    w.run_until(10.0 + w.p.leave_countdown + 10.0)
    root = w.nodes[1]
    assert 2 in root.members
    assert root.members[2].leaving_since is None
    assert w.nodes[2].role == MEMBER
    assert not [r for r in trace_events(w, "purge", device=1)
                if r.details["peer"] == 2]


def test_silent_member_purged_within_bound():
    w = make_world()
    star(w, 1, [2, 3])
    w.run_until(1.0)
    w.schedule(20.0, "depart", device=2, silent=True)
    w.run_until(20.0 + w.p.silent_timeout + w.p.ping_interval)
    root = w.nodes[1]
    assert 2 not in root.members
    (purge,) = [r for r in trace_events(w, "purge", device=1)
                if r.details["peer"] == 2]
    assert purge.details["reason"] == "silent"
    assert purge.time <= 20.0 + w.p.silent_timeout + w.p.ping_interval


def test_member_outlives_silent_timeout_while_responsive():
    w = make_world()
    star(w, 1, [2])
    w.run_until(2 * w.p.silent_timeout)
    assert 2 in w.nodes[1].members
    assert w.nodes[2].role == MEMBER


def test_root_loss_sends_members_back_to_scanning():
    w = make_world()
    star(w, 1, [2, 3])
    w.add_edge(2, 3)
    w.run_until(1.0)
    w.schedule(5.0, "depart", device=1, silent=True)
    w.run_until(5.0 + w.p.silent_timeout + w.p.ping_interval + w.p.join_timeout + 5.0)
    # survivors regroup into a new subnet among themselves
    assert not w.nodes[1].active
    states = {w.nodes[2].role, w.nodes[3].role}
    assert states == {ROOT, MEMBER}


def test_new_hosting_generation_gets_fresh_ssid():
    w = make_world()
    w.add_device(1)
    arrive(w, [1])
    w.run_until(1.0)
    first = w.nodes[1].ssid
    w.schedule(2.0, "depart", device=1, silent=True)
    w.schedule(3.0, "arrive", device=1)
    w.run_until(4.0)
    second = w.nodes[1].ssid
    assert w.nodes[1].role == ROOT
    assert first != second
    assert parse_ssid(first).root_id == parse_ssid(second).root_id == 1
