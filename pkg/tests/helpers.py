"""Shared test scaffolding: world builders and independent oracles.

The BFS oracle here is deliberately separate from the production code: it
recomputes subnet adjacency straight from the visibility graph and observed
membership, so catalog hop counts are checked against something that never
touches the merge logic.
"""

import random
from collections import deque

from pear2pear.node import MEMBER, ROOT
from pear2pear.params import Params
from pear2pear.sim import World


def make_world(seed=0, **overrides):
    return World(params=Params().override(**overrides), seed=seed)


def clique(world, ids):
    ids = list(ids)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            world.add_edge(a, b)


def arrive(world, ids, t=0.0):
    for d in ids:
        world.schedule(t, "arrive", device=d)


def star(world, root, members, files=None):
    """One hotspot: `root` (lowest id wins the hosting race if wired as a
    clique) plus members that each see only the root."""
    world.add_device(root, (files or {}).get(root, ()))
    for m in members:
        world.add_device(m, (files or {}).get(m, ()))
        world.add_edge(m, root)
    arrive(world, [root] + list(members))


def roots_of(world):
    """ssid -> root device for every active hotspot."""
    return {n.ssid: d for d, n in world.nodes.items()
            if n.active and n.role == ROOT}


def members_of(world, ssid):
    """Member devices as the root currently believes them (non-leaving)."""
    root = world.nodes[world.find_root(ssid)]
    return {p for p, rec in root.members.items() if rec.leaving_since is None}


def subnet_adjacency(world):
    """Directed adjacency between subnets: A -> B iff some member of A has a
    visibility edge to the root of B. This mirrors what scan reports can ever
    tell A's root, but is computed structurally, not from protocol state."""
    roots = roots_of(world)
    root_of_device = {d: s for s, d in roots.items()}
    adj = {ssid: set() for ssid in roots}
    for a, root_dev in ((s, d) for s, d in roots.items()):
        for m in members_of(world, a):
            for other in world.vis.get(m, ()):
                b = root_of_device.get(other)
                if b is not None and b != a:
                    adj[a].add(b)
    return adj


def bfs_distances(adj, start):
    """Hop distance from `start` to every reachable subnet."""
    dist = {start: 0}
    q = deque([start])
    while q:
        cur = q.popleft()
        for nxt in sorted(adj.get(cur, ())):
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                q.append(nxt)
    return dist


def downloads(world):
    return world.metrics.report()["downloads"]


def only_download(world):
    recs = downloads(world)
    assert len(recs) == 1, f"expected one download, got {recs}"
    return recs[0]


def trace_events(world, kind, device=None):
    return [r for r in world.trace
            if r.kind == kind and (device is None or r.device == device)]


def random_content(seed, size):
    return random.Random(seed).randbytes(size)
