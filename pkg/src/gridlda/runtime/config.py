"""Topology and training configuration, plus the key=value config file."""

import hashlib
from dataclasses import dataclass, field

__all__ = [
    "PipelineConfig",
    "ClusterTopology",
    "TrainConfig",
    "parse_config_file",
    "parse_config_text",
    "topology_fingerprint",
]


@dataclass
class PipelineConfig:
    """Transport pipeline sizing: in-flight slots and package size.

    The package size counts tokens for the in-process transport and bytes
    on the socket transport.
    """

    slots: int = 8
    package_size: int = 256

    def __post_init__(self):
        if self.slots < 1 or self.package_size < 1:
            raise ValueError("pipeline slots and package size must be >= 1")


@dataclass
class ClusterTopology:
    num_configs: int = 1
    num_shards: int = 1
    sync_period: int = 4
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.num_configs < 1 or self.num_shards < 1 or self.sync_period < 1:
            raise ValueError("topology counts must be >= 1")


@dataclass
class TrainConfig:
    topology: ClusterTopology = field(default_factory=ClusterTopology)
    num_topics: int = 20
    alpha_init: float = None  # None -> 50 / K
    beta: float = 0.01
    seeds: tuple = (0,)
    mode: str = "deterministic"  # or "threads"
    psi_sync: str = "segment"  # or "iteration"
    schedule: str = "diagonal"  # or "free"
    alpha_opt_iters: int = 5
    optimize_priors: bool = True

    def __post_init__(self):
        if self.num_topics < 1:
            raise ValueError("need at least one topic")
        if self.mode not in ("deterministic", "threads"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.psi_sync not in ("segment", "iteration"):
            raise ValueError(f"unknown psi sync granularity {self.psi_sync!r}")
        if self.schedule not in ("diagonal", "free"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.alpha_init is None:
            self.alpha_init = 50.0 / self.num_topics
        if not self.seeds:
            raise ValueError("need at least one seed")
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def seed(self):
        return self.seeds[0]


_INT_KEYS = {"C", "M", "K", "sync_period", "T", "L"}
_FLOAT_KEYS = {"alpha_init", "beta"}
_STR_KEYS = {"mode", "psi_sync", "schedule"}


def parse_config_text(text):
    """key=value lines into a TrainConfig; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key == "seeds":
            values[key] = tuple(int(s) for s in val.replace(",", " ").split())
        elif key in _STR_KEYS:
            values[key] = val
        else:
            raise ValueError(f"unknown config key {key!r} on line {lineno}")
    pipeline = PipelineConfig(
        slots=values.get("T", 8), package_size=values.get("L", 256)
    )
    topology = ClusterTopology(
        num_configs=values.get("C", 1),
        num_shards=values.get("M", 1),
        sync_period=values.get("sync_period", 4),
        pipeline=pipeline,
    )
    return TrainConfig(
        topology=topology,
        num_topics=values.get("K", 20),
        alpha_init=values.get("alpha_init"),
        beta=values.get("beta", 0.01),
        seeds=values.get("seeds", (0,)),
        mode=values.get("mode", "deterministic"),
        psi_sync=values.get("psi_sync", "segment"),
        schedule=values.get("schedule", "diagonal"),
    )


def parse_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def topology_fingerprint(config, num_words, num_docs, total_tokens, seed):
    """Digest of everything a checkpoint must agree on to be resumable."""
    topo = config.topology
    canon = "|".join(
        str(x)
        for x in (
            topo.num_configs,
            topo.num_shards,
            topo.sync_period,
            config.num_topics,
            config.beta,
            config.psi_sync,
            config.schedule,
            num_words,
            num_docs,
            total_tokens,
            seed,
        )
    )
    return hashlib.sha256(canon.encode()).digest()
