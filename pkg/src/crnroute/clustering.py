"""K-means cluster formation, cluster-head election, KNN join and head resignation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import ConfigError, Node, NodeId, Role, World, rng_for


class ClusteringError(RuntimeError):
    pass


@dataclass
class Cluster:
    id: int
    head: NodeId | None
    members: set[NodeId] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {"id": self.id, "head": self.head, "members": sorted(self.members)}


@dataclass(frozen=True)
class HelloSample:
    responder: NodeId
    responder_cluster: int
    delay: float

    def __post_init__(self):
        if not self.delay > 0:
            raise ValueError("hello sample delay must be positive")


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss: list[float]  # after every Lloyd iteration, starting with the initial assignment
    iterations: int


def wcss(points: np.ndarray, labels: np.ndarray, k: int) -> float:
    total = 0.0
    for c in range(k):
        pts = points[labels == c]
        if len(pts):
            total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def _repair_empty(points: np.ndarray, labels: np.ndarray, k: int) -> None:
    # steal the farthest point of the largest cluster
    for c in range(k):
        if np.any(labels == c):
            continue
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        idx = np.flatnonzero(labels == big)
        centre = points[idx].mean(axis=0)
        d = ((points[idx] - centre) ** 2).sum(axis=1)
        labels[idx[int(np.argmax(d))]] = c


def kmeans_lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100) -> KMeansResult:
    n = len(points)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"cannot form {k} clusters from {n} points")
    init = np.sort(rng.choice(n, size=k, replace=False))
    centroids = points[init].astype(float)

    def assign(cents):
        d = ((points[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d, axis=1)  # ties -> lowest centroid index

    labels = assign(centroids)
    _repair_empty(points, labels, k)
    history = [wcss(points, labels, k)]
    it = 0
    while it < max_iter:
        it += 1
        centroids = np.array([points[labels == c].mean(axis=0) for c in range(k)])
        new = assign(centroids)
        _repair_empty(points, new, k)
        history.append(wcss(points, new, k))
        if np.array_equal(new, labels):
            break
        labels = new
    centroids = np.array([points[labels == c].mean(axis=0) for c in range(k)])
    return KMeansResult(labels=labels, centroids=centroids, wcss=history, iterations=it)


def kmeans_partition(sus: list[Node], k: int, seed: int) -> list[Cluster]:
    """Partition SUs by position; heads are not elected yet."""
    if k > len(sus):
        raise ConfigError(f"kmeans_k={k} exceeds the {len(sus)} secondary users")
    sus = sorted(sus, key=lambda n: n.id)
    pts = np.array([[n.x, n.y] for n in sus], dtype=float)
    res = kmeans_lloyd(pts, k, rng_for(seed, "kmeans"))
    clusters = [Cluster(id=c, head=None) for c in range(k)]
    for node, lab in zip(sus, res.labels):
        clusters[int(lab)].members.add(node.id)
    return clusters


def elect_cluster_head(c: Cluster, world: World, exclude: set[NodeId] = frozenset()) -> NodeId:
    candidates = [world[m] for m in c.members if m not in exclude]
    if not candidates:
        raise ClusteringError(f"cluster {c.id} has no eligible member")
    best = min(candidates, key=lambda n: (-n.energy, n.id))
    c.head = best.id
    best.role = Role.CLUSTER_HEAD
    best.cluster = c.id
    best.radio_range = world.config.head_radio_range
    return best.id


def knn_join(u: Node, samples: list[HelloSample], k: int) -> int | None:
    """Majority cluster among the ``k`` lowest-delay samples.

    Ties go to the cluster of the single fastest responder. Returns None (and
    leaves ``u`` undecided) when there are no samples.
    """
    if not samples:
        return None
    ranked = sorted(samples, key=lambda s: (s.delay, s.responder, s.responder_cluster))
    top = ranked[: max(1, k)]
    votes = Counter(s.responder_cluster for s in top)
    best = max(votes.values())
    leaders = {c for c, v in votes.items() if v == best}
    if len(leaders) == 1:
        chosen = leaders.pop()
    else:
        chosen = next(s.responder_cluster for s in top if s.responder_cluster in leaders)
    u.role = Role.MEMBER
    u.cluster = chosen
    return chosen


def resign_head(h: NodeId, c: Cluster, world: World) -> NodeId:
    if c.head != h:
        raise ClusteringError(f"node {h} is not the head of cluster {c.id}")
    if len(c.members) < 2:
        raise ClusteringError(f"cluster {c.id} has no successor for head {h}")
    new = elect_cluster_head(c, world, exclude={h})
    world[h].role = Role.MEMBER
    world[h].radio_range = world.config.radio_range
    return new


class ClusterState:
    """Cluster table for one run, kept consistent with the nodes' role fields."""

    def __init__(self, world: World, clusters: list[Cluster] | None = None):
        self.world = world
        self.clusters: dict[int, Cluster] = {c.id: c for c in clusters or []}

    def __iter__(self):
        return iter(self.clusters[c] for c in sorted(self.clusters))

    def __getitem__(self, cid: int) -> Cluster:
        return self.clusters[cid]

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def heads(self) -> list[NodeId]:
        return sorted(c.head for c in self.clusters.values() if c.head is not None)

    def head_of(self, nid: NodeId) -> NodeId | None:
        cid = self.world[nid].cluster
        if cid is None or cid not in self.clusters:
            return None
        return self.clusters[cid].head

    def cluster_of_head(self, head: NodeId) -> Cluster:
        return self.clusters[self.world[head].cluster]

    def leave(self, nid: NodeId) -> None:
        node = self.world[nid]
        if node.cluster is not None and node.cluster in self.clusters:
            self.clusters[node.cluster].members.discard(nid)
        node.role = Role.UNDECIDED
        node.cluster = None

    def join(self, nid: NodeId, cid: int) -> None:
        node = self.world[nid]
        self.clusters[cid].members.add(nid)
        node.cluster = cid
        if node.role is Role.UNDECIDED:
            node.role = Role.MEMBER

    def found(self, nid: NodeId) -> Cluster:
        """Open a new singleton cluster headed by the undecided node ``nid``."""
        node = self.world[nid]
        if node.role is not Role.UNDECIDED:
            raise ClusteringError(f"node {nid} already belongs to a cluster")
        cid = max(self.clusters, default=-1) + 1
        c = Cluster(id=cid, head=None, members={nid})
        self.clusters[cid] = c
        elect_cluster_head(c, self.world)
        return c

    def check(self) -> None:
        """Raise if the partition, head or role invariants are broken."""
        seen: set[NodeId] = set()
        for c in self.clusters.values():
            if c.head is None or c.head not in c.members:
                raise ClusteringError(f"cluster {c.id} head {c.head} not among its members")
            if seen & c.members:
                raise ClusteringError(f"cluster {c.id} overlaps another cluster")
            seen |= c.members
            for m in c.members:
                node = self.world[m]
                if not node.is_su:
                    raise ClusteringError(f"primary user {m} placed in cluster {c.id}")
                if node.cluster != c.id:
                    raise ClusteringError(f"node {m} cluster field {node.cluster} != {c.id}")
                want = Role.CLUSTER_HEAD if m == c.head else Role.MEMBER
                if node.role is not want:
                    raise ClusteringError(f"node {m} role {node.role} != {want}")
        for su in self.world.secondaries:
            if su.id not in seen and (su.role is not Role.UNDECIDED or su.cluster is not None):
                raise ClusteringError(f"unclustered node {su.id} is not undecided")

    def dump(self) -> dict:
        return {
            "clusters": [
                {"id": c.id, "head": c.head, "members": sorted(c.members)} for c in self
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.dump(), indent=2)


def form_clusters(world: World, k: int | None = None) -> ClusterState:
    """Initial formation at t=0: K-means over SU positions, then per-cluster election."""
    cfg = world.config
    k = cfg.clusters_wanted if k is None else k
    sus = world.secondaries
    for n in world:
        n.role = Role.UNDECIDED
        n.cluster = None
    if not sus:
        return ClusterState(world, [])
    clusters = kmeans_partition(sus, k, cfg.seed)
    for c in clusters:
        for m in c.members:
            world[m].role = Role.MEMBER
            world[m].cluster = c.id
        elect_cluster_head(c, world)
    state = ClusterState(world, clusters)
    state.check()
    return state


def load_clusters(world: World, dump: dict) -> ClusterState:
    """Rebuild a cluster table from a dump (fixtures); roles are reassigned."""
    clusters = [
        Cluster(id=int(d["id"]), head=int(d["head"]), members={int(m) for m in d["members"]})
        for d in dump["clusters"]
    ]
    for n in world:
        n.role = Role.UNDECIDED
        n.cluster = None
    for c in clusters:
        for m in c.members:
            world[m].cluster = c.id
            world[m].role = Role.CLUSTER_HEAD if m == c.head else Role.MEMBER
    state = ClusterState(world, clusters)
    state.check()
    return state
