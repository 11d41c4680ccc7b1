"""World model: nodes, channels, geometry and scenario generation."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

NodeId = int
ChannelId = int


class ConfigError(ValueError):
    """Raised for invalid simulation or experiment configuration."""


class NodeKind(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


class Role(str, enum.Enum):
    UNDECIDED = "undecided"
    MEMBER = "member"
    CLUSTER_HEAD = "cluster_head"


# fixed sub-seed tags; a new subsystem gets a new tag so existing streams never shift
_STREAMS = {
    "positions": 1,
    "pu_channels": 2,
    "pu_state": 3,
    "energy": 4,
    "throughput": 5,
    "kmeans": 6,
    "jitter": 7,
    "mobility": 8,
    "pu_toggle": 9,
    "pairs": 10,
}


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for one subsystem, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), _STREAMS[stream]]))


@dataclass
class SimConfig:
    area_side: float = 1000.0
    n_primary: int = 20
    n_secondary: int = 80
    channel_count: int = 6
    radio_range: float = 350.0
    pu_range: float | None = None  # PU protection radius; None -> radio_range
    head_range: float | None = 900.0  # control-channel range of elected heads; None -> radio_range
    hmax: int = 10
    tr: float = 0.1
    hello_period: float = 5.0
    knn_k: int = 3
    kmeans_k: int | None = None  # None -> round(sqrt(n_secondary))
    link_delay: float = 1.0
    pu_activity_rate: float = 0.0
    pu_epoch: float = 50.0
    pu_active_prob: float = 0.5
    energy_range: tuple[float, float] = (0.0, 1.0)
    throughput_range: tuple[float, float] = (1.0, 100.0)
    hello_jitter: float = 0.1
    mobility: bool = False
    speed: float = 10.0
    pause: float = 5.0
    mobility_step: float = 1.0
    seed: int = 0

    def validate(self) -> "SimConfig":
        if not self.area_side > 0:
            raise ConfigError("area_side must be > 0")
        if self.channel_count < 1:
            raise ConfigError("channel_count must be >= 1")
        for name in ("n_primary", "n_secondary", "knn_k"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.radio_range < 0:
            raise ConfigError("radio_range must be >= 0")
        if self.head_range is not None and self.head_range < 0:
            raise ConfigError("head_range must be >= 0")
        if self.pu_range is not None and self.pu_range < 0:
            raise ConfigError("pu_range must be >= 0")
        if self.hmax < 1:
            raise ConfigError("hmax must be >= 1")
        if not self.tr > 0:
            raise ConfigError("tr must be > 0")
        if not self.hello_period > 0:
            raise ConfigError("hello_period must be > 0")
        if not self.link_delay > 0:
            raise ConfigError("link_delay must be > 0")
        if not 0.0 <= self.pu_activity_rate <= 1.0:
            raise ConfigError("pu_activity_rate must be in [0, 1]")
        if not 0.0 <= self.pu_active_prob <= 1.0:
            raise ConfigError("pu_active_prob must be in [0, 1]")
        if self.kmeans_k is not None and self.kmeans_k < 1:
            raise ConfigError("kmeans_k must be >= 1")
        return self

    @property
    def clusters_wanted(self) -> int:
        if self.kmeans_k is not None:
            return self.kmeans_k
        return max(1, round(math.sqrt(self.n_secondary)))

    @property
    def head_radio_range(self) -> float:
        # heads never hear less than an ordinary SU; a zero range means radios are off
        if self.radio_range <= 0:
            return 0.0
        return max(self.radio_range, self.head_range or 0.0)

    @property
    def discovery_deadline(self) -> float:
        return self.tr + 2 * self.link_delay * self.hmax

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_range"] = list(self.energy_range)
        d["throughput_range"] = list(self.throughput_range)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        defaults = cls()
        for key, value in data.items():
            if key in ("energy_range", "throughput_range"):
                try:
                    lo, hi = value
                    data[key] = (float(lo), float(hi))
                except (TypeError, ValueError):
                    raise ConfigError(f"{key}: expected a [low, high] pair, got {value!r}") from None
                continue
            want = getattr(defaults, key)
            if value is None and key in ("pu_range", "head_range", "kmeans_k"):
                continue
            if isinstance(want, bool):
                ok = isinstance(value, bool)
            elif isinstance(want, int) or key == "kmeans_k":
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not ok:
                raise ConfigError(f"{key}: invalid value {value!r}")
        return cls(**data)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass
class Node:
    id: NodeId
    kind: NodeKind
    x: float
    y: float
    radio_range: float
    channels: frozenset[ChannelId]
    energy: float = 0.0
    throughput: float = 0.0
    role: Role = Role.UNDECIDED
    cluster: int | None = None
    # primary users only
    licensed: ChannelId | None = None
    active: bool = False
    label: str | None = None

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def name(self) -> str:
        return self.label or f"n{self.id}"

    @property
    def is_su(self) -> bool:
        return self.kind is NodeKind.SECONDARY

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "x": self.x,
            "y": self.y,
            "radio_range": self.radio_range,
            "channels": sorted(self.channels),
            "energy": self.energy,
            "throughput": self.throughput,
            "role": self.role.value,
            "cluster": self.cluster,
            "licensed": self.licensed,
            "active": self.active,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        return cls(
            id=int(d["id"]),
            kind=NodeKind(d["kind"]),
            x=float(d["x"]),
            y=float(d["y"]),
            radio_range=float(d["radio_range"]),
            channels=frozenset(int(c) for c in d.get("channels", ())),
            energy=float(d.get("energy", 0.0)),
            throughput=float(d.get("throughput", 0.0)),
            role=Role(d.get("role", "undecided")),
            cluster=d.get("cluster"),
            licensed=d.get("licensed"),
            active=bool(d.get("active", False)),
            label=d.get("label"),
        )


def distance(a: Node, b: Node) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def in_range(a: Node, b: Node) -> bool:
    # inclusive boundary
    return distance(a, b) <= min(a.radio_range, b.radio_range)


def common_channels(a: Node, b: Node) -> frozenset[ChannelId]:
    return a.channels & b.channels


@dataclass
class World:
    config: SimConfig
    nodes: dict[NodeId, Node] = field(default_factory=dict)

    def __getitem__(self, nid: NodeId) -> Node:
        return self.nodes[nid]

    def __iter__(self):
        return iter(self.nodes.values())

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def primaries(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.PRIMARY]

    @property
    def secondaries(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.SECONDARY]

    def neighbors(self, nid: NodeId) -> list[NodeId]:
        me = self.nodes[nid]
        return [n.id for n in self.nodes.values() if n.id != nid and in_range(me, n)]

    def by_label(self, label: str) -> Node:
        for n in self.nodes.values():
            if n.label == label:
                return n
        raise KeyError(label)

    def refresh_channels(self) -> None:
        """Recompute every SU channel set from the current PU activity."""
        universe = frozenset(range(self.config.channel_count))
        active = [p for p in self.primaries if p.active]
        for su in self.secondaries:
            blocked = {p.licensed for p in active if in_range(p, su)}
            su.channels = universe - blocked

    def copy(self) -> "World":
        return World(self.config, {nid: replace(n) for nid, n in self.nodes.items()})

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        config = SimConfig.from_dict(data.get("config", {}))
        nodes = [Node.from_dict(d) for d in data["nodes"]]
        return cls(config, {n.id: n for n in nodes})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "World":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_scenario(config: SimConfig) -> World:
    """Random world for ``config``; identical config and seed give an identical world."""
    config.validate()
    n_total = config.n_primary + config.n_secondary
    seed = config.seed

    xy = rng_for(seed, "positions").uniform(0.0, config.area_side, size=(n_total, 2))
    pu_ch = rng_for(seed, "pu_channels").integers(0, config.channel_count, size=config.n_primary)
    pu_on = rng_for(seed, "pu_state").random(config.n_primary) < config.pu_active_prob
    energy = rng_for(seed, "energy").uniform(*config.energy_range, size=config.n_secondary)
    thr = rng_for(seed, "throughput").uniform(*config.throughput_range, size=config.n_secondary)

    world = World(config)
    for i in range(config.n_primary):
        ch = int(pu_ch[i])
        world.nodes[i] = Node(
            id=i,
            kind=NodeKind.PRIMARY,
            x=float(xy[i, 0]),
            y=float(xy[i, 1]),
            radio_range=config.radio_range if config.pu_range is None else config.pu_range,
            channels=frozenset({ch}),
            licensed=ch,
            active=bool(pu_on[i]),
        )
    for j in range(config.n_secondary):
        i = config.n_primary + j
        world.nodes[i] = Node(
            id=i,
            kind=NodeKind.SECONDARY,
            x=float(xy[i, 0]),
            y=float(xy[i, 1]),
            radio_range=config.radio_range,
            channels=frozenset(),
            energy=float(energy[j]),
            throughput=float(thr[j]),
        )
    world.refresh_channels()
    return world
