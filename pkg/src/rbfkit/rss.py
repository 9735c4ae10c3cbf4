"""Red stop set construction and route-trace replay.

A learning cycle of traceroutes yields the set of penultimate nodes (one
hop before each destination).  That set, encoded as an explicit list, a
Bloom filter, or a retouched Bloom filter, then drives a stopping rule
when later cycles are replayed: a probe walk stops at the first hop the
implementation reports as a member.  Stopping at the true penultimate node
is a success, stopping earlier is stopping short, and reaching the
destination is a collision.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .filters import BloomFilter, FilterParams, derive_seed
from .retouch import TroublesomeSet, run_clearing

RSS_KINDS = ("list", "bloom", "rbf")

_GATEWAY_BASE = 1_000_000
_INTERIOR_BASE = 2_000_000
_PENULTIMATE_BASE = 3_000_000
_DESTINATION_BASE = 4_000_000
_DYNAMIC_BASE = 5_000_000

METRICS_HEADER = (
    "impl,m,beta,cycle,success,stopping_short,collision,nodes_missed,links_missed"
)


class CorpusParseError(ValueError):
    """Corpus file is malformed; message carries the line number."""


class InsufficientCyclesError(ValueError):
    """Corpus holds fewer probing cycles than requested."""


@dataclass(frozen=True)
class TraceRoute:
    monitor: str
    destination: int
    hops: tuple[int, ...]

    def __post_init__(self):
        if not self.hops:
            raise ValueError("a trace needs at least one hop")

    @property
    def reached(self) -> bool:
        return self.hops[-1] == self.destination

    @property
    def penultimate(self) -> Optional[int]:
        if self.reached and len(self.hops) >= 2:
            return self.hops[-2]
        return None


@dataclass(frozen=True)
class PathCorpus:
    """Cycles of traces; cycle 0 is the learning round."""

    cycles: tuple[tuple[TraceRoute, ...], ...]
    monitors: frozenset[str]
    destinations: frozenset[int]

    @classmethod
    def from_cycles(cls, cycles: Sequence[Sequence[TraceRoute]]) -> "PathCorpus":
        cycles = tuple(tuple(c) for c in cycles)
        monitors = frozenset(t.monitor for c in cycles for t in c)
        destinations = frozenset(t.destination for c in cycles for t in c)
        return cls(cycles=cycles, monitors=monitors, destinations=destinations)


@dataclass(frozen=True)
class SyntheticTopologyConfig:
    monitor_count: int = 10
    destination_count: int = 1000
    mean_path_length: int = 8
    sharing_factor: float = 0.5
    dynamics_rate: float = 0.05

    def __post_init__(self):
        if self.monitor_count < 1 or self.destination_count < 1:
            raise ValueError("monitor_count and destination_count must be >= 1")
        if self.mean_path_length < 3:
            raise ValueError("mean_path_length must be >= 3 (gateway, hop, target)")
        if not 0.0 <= self.sharing_factor <= 1.0:
            raise ValueError("sharing_factor must be in [0, 1]")
        if not 0.0 <= self.dynamics_rate <= 1.0:
            raise ValueError("dynamics_rate must be in [0, 1]")


def generate_corpus(
    config: SyntheticTopologyConfig, seed: int, cycles: int = 2
) -> PathCorpus:
    """Deterministic synthetic corpus of `cycles` rounds of traceroutes.

    Destination-rooted paths share interior nodes through a skewed draw and
    per-monitor core chains, so a false positive on a frequent node stalls
    many traces.  Between cycles each trace mutates with probability
    dynamics_rate: its route tail is replaced, a new node slips in front of
    the destination, or its middle is rerouted.
    """
    if cycles < 1:
        raise ValueError("need at least one cycle")
    rng = np.random.default_rng(derive_seed(seed, 0x70B0))
    mc, dc = config.monitor_count, config.destination_count

    monitors = [f"mon{ix:03d}" for ix in range(mc)]
    gateways = {mon: _GATEWAY_BASE + ix for ix, mon in enumerate(monitors)}
    interior_pool = np.arange(
        _INTERIOR_BASE, _INTERIOR_BASE + max(10, 2 * dc), dtype=np.int64
    )
    pen_pool_size = max(1, int(math.floor(dc * (1.0 - config.sharing_factor) + 0.5)))
    pen_pool = np.arange(
        _PENULTIMATE_BASE, _PENULTIMATE_BASE + pen_pool_size, dtype=np.int64
    )
    destinations = np.arange(_DESTINATION_BASE, _DESTINATION_BASE + dc, dtype=np.int64)

    # Skewed reuse of interior nodes: low-index nodes appear on many paths,
    # so a false positive there stalls much of the probing.
    weights = 1.0 / np.arange(1, interior_pool.size + 1)
    weights /= weights.sum()

    # Every trace of a monitor runs through its gateway and a fixed core
    # chain, mirroring the shared first hops of real route traces.
    core = {
        mon: [int(x) for x in rng.choice(interior_pool, size=3, replace=False, p=weights)]
        for mon in monitors
    }
    pen_of = {int(d): int(rng.choice(pen_pool)) for d in destinations}

    def draw_mid() -> list[int]:
        extra = int(rng.poisson(max(0, config.mean_path_length - 6)))
        if extra == 0:
            return []
        return [int(x) for x in rng.choice(interior_pool, size=extra, p=weights)]

    first = []
    for mon in monitors:
        for d in destinations:
            d = int(d)
            hops = [gateways[mon], *core[mon], *draw_mid(), pen_of[d], d]
            first.append(TraceRoute(monitor=mon, destination=d, hops=tuple(hops)))

    dynamic_counter = 0
    all_cycles = [first]
    for _ in range(1, cycles):
        prev = all_cycles[-1]
        nxt = []
        for trace in prev:
            if rng.random() >= config.dynamics_rate:
                nxt.append(trace)
                continue
            hops = list(trace.hops)
            flavor = rng.random()
            if flavor < 0.4:
                # Reroute the tail through a (possibly) new penultimate node.
                new_pen = int(rng.choice(pen_pool))
                hops = hops[:3] + draw_mid() + [new_pen, trace.destination]
            elif flavor < 0.7:
                # A fresh node appears between the old penultimate node and
                # the destination.
                fresh = _DYNAMIC_BASE + dynamic_counter
                dynamic_counter += 1
                hops = hops[:-1] + [fresh, trace.destination]
            else:
                hops = hops[:3] + draw_mid() + hops[-2:]
            nxt.append(
                TraceRoute(
                    monitor=trace.monitor,
                    destination=trace.destination,
                    hops=tuple(hops),
                )
            )
        all_cycles.append(nxt)
    return PathCorpus.from_cycles(all_cycles)


def write_corpus(corpus: PathCorpus, path) -> None:
    """One trace per line: cycle, monitor, destination, comma-joined hops."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# cycle\tmonitor\tdestination\thop1,hop2,...\n")
        for ci, cycle in enumerate(corpus.cycles):
            for t in cycle:
                hops = ",".join(str(h) for h in t.hops)
                fh.write(f"{ci}\t{t.monitor}\t{t.destination}\t{hops}\n")


def ingest_corpus(path) -> PathCorpus:
    """Parse a corpus file; cycles are grouped by label and sorted."""
    by_cycle: dict[int, list[TraceRoute]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorpusParseError(
                    f"line {lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            try:
                cycle = int(parts[0])
                destination = int(parts[2])
                hops = tuple(int(h) for h in parts[3].split(",") if h != "")
            except ValueError as exc:
                raise CorpusParseError(f"line {lineno}: {exc}") from exc
            if not hops:
                raise CorpusParseError(f"line {lineno}: empty hop list")
            by_cycle.setdefault(cycle, []).append(
                TraceRoute(monitor=parts[1], destination=destination, hops=hops)
            )
    if not by_cycle:
        raise CorpusParseError("corpus holds no traces")
    ordered = [by_cycle[label] for label in sorted(by_cycle)]
    return PathCorpus.from_cycles(ordered)


def build_rss(learning: Iterable[TraceRoute]) -> frozenset[int]:
    """Penultimate nodes over all traces that reached their destination."""
    out = set()
    for trace in learning:
        pen = trace.penultimate
        if pen is not None:
            out.add(pen)
    return frozenset(out)


@dataclass(frozen=True)
class RssImplementation:
    """Stop-set oracle: exact list, Bloom filter, or retouched Bloom filter.

    rss_keys is kept on every kind as the exact reference used for
    topology-coverage accounting; only `list` answers membership from it.
    """

    kind: str
    rss_keys: frozenset[int]
    filter: Optional[BloomFilter] = None
    beta: Optional[float] = None
    algorithm: Optional[str] = None

    def contains(self, key: int) -> bool:
        if self.kind == "list":
            return key in self.rss_keys
        return self.filter.contains(key)

    def positive_subset(self, keys: Sequence[int]) -> frozenset[int]:
        """The members of `keys` this implementation answers positively."""
        if self.kind == "list":
            return frozenset(k for k in keys if k in self.rss_keys)
        if not keys:
            return frozenset()
        arr = np.asarray(list(keys), dtype=np.uint64)
        mask = self.filter.contains_many(arr)
        return frozenset(int(k) for k, hit in zip(arr.tolist(), mask) if hit)

    @property
    def m(self) -> Optional[int]:
        return self.filter.m if self.filter is not None else None

    @classmethod
    def from_set(cls, keys) -> "RssImplementation":
        return cls(kind="list", rss_keys=frozenset(int(x) for x in keys))


def encode_rss(
    rss_keys,
    kind: str,
    m: int | None = None,
    k: int = 5,
    seed: int = 0,
    beta: float = 0.25,
    algorithm: str = "ratio",
    learning: Sequence[TraceRoute] | None = None,
) -> RssImplementation:
    """Encode the stop set; `rbf` additionally clears troublesome bits.

    For the rbf kind the false positives are enumerated against every node
    id seen in the learning cycle, ranked by how many learning traces stop
    short at them (a dry run against the plain Bloom filter), and the top
    ceil(beta*|F_P|) become the troublesome set handed to the clearing
    algorithm.
    """
    if kind not in RSS_KINDS:
        raise ValueError(f"unknown RSS kind {kind!r}")
    keys = frozenset(int(x) for x in rss_keys)
    if kind == "list":
        return RssImplementation(kind="list", rss_keys=keys)
    if m is None:
        raise ValueError("bloom/rbf encoding needs the filter size m")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    params = FilterParams(m=m, k=k, seed=seed)
    filt = BloomFilter.from_keys(params, sorted(keys))
    if kind == "bloom":
        return RssImplementation(kind="bloom", rss_keys=keys, filter=filt)
    if learning is None:
        raise ValueError("rbf encoding needs the learning traces")
    universe = sorted({hop for trace in learning for hop in trace.hops})
    candidates = np.asarray(
        [x for x in universe if x not in keys], dtype=np.uint64
    )
    fp_keys = (
        candidates[filt.contains_many(candidates)].tolist() if candidates.size else []
    )
    if beta > 0.0 and fp_keys:
        dry = replay_probing(
            learning, RssImplementation(kind="bloom", rss_keys=keys, filter=filt)
        )
        degree = dry.troublesomeness
        ranked = sorted(fp_keys, key=lambda x: (-degree.get(x, 0), x))
        b_size = math.ceil(beta * len(fp_keys))
        troublesome = TroublesomeSet.from_keys(ranked[:b_size])
        run_clearing(
            algorithm,
            filt,
            troublesome=troublesome,
            members=np.asarray(sorted(keys), dtype=np.uint64),
            rng=np.random.default_rng(derive_seed(seed, 0xE)),
            fp_universe=np.asarray(fp_keys, dtype=np.uint64),
        )
    return RssImplementation(
        kind="rbf", rss_keys=keys, filter=filt, beta=beta, algorithm=algorithm
    )


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round classification rates and topology coverage loss."""

    n_traces: int
    success_rate: float
    stopping_short_rate: float
    collision_rate: float
    no_stop_rate: float
    nodes_missed: float
    links_missed: float
    troublesomeness: dict[int, int] = field(repr=False, default_factory=dict)


def _walk(trace: TraceRoute, positive: frozenset) -> tuple[str, Optional[int]]:
    """Classify one trace under the stopping rule; returns (kind, stop index).

    The first hop never triggers a stop on its own trace (a monitor is not
    blocked by its own gateway).  Reaching the last hop of a trace that got
    to its destination is a collision regardless of membership.
    """
    hops = trace.hops
    last = len(hops) - 1
    reached = trace.reached
    for i, hop in enumerate(hops):
        if reached and i == last:
            return "collision", i
        if i == 0:
            continue
        if hop in positive:
            if reached and i == last - 1:
                return "success", i
            return "stopping_short", i
    return "no_stop", None


def _coverage(trace: TraceRoute, stop: Optional[int]) -> tuple[set, set]:
    end = stop if stop is not None else len(trace.hops) - 1
    nodes = set(trace.hops[: end + 1])
    links = {(trace.hops[j], trace.hops[j + 1]) for j in range(end)}
    return nodes, links


def replay_probing(
    traces: Sequence[TraceRoute], impl: RssImplementation
) -> RoundMetrics:
    """Replay one probing round under the stopping rule of `impl`.

    Rates are fractions of the replayed traces.  Topology coverage is
    compared against the exact-list replay of the same traces, so a list
    implementation always reports zero missed nodes and links.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("cannot replay an empty round")
    counts = Counter()
    trouble: Counter = Counter()
    impl_nodes: set = set()
    impl_links: set = set()
    ref_nodes: set = set()
    ref_links: set = set()
    # One vectorized membership pass over the round's distinct nodes, then
    # pure set lookups while walking.
    seen = {hop for trace in traces for hop in trace.hops}
    positive = impl.positive_subset(sorted(seen))
    reference = frozenset(impl.rss_keys & seen)
    for trace in traces:
        kind, stop = _walk(trace, positive)
        counts[kind] += 1
        if kind == "stopping_short":
            trouble[trace.hops[stop]] += 1
        nodes, links = _coverage(trace, stop)
        impl_nodes |= nodes
        impl_links |= links
        _, ref_stop = _walk(trace, reference)
        nodes, links = _coverage(trace, ref_stop)
        ref_nodes |= nodes
        ref_links |= links
    n = len(traces)
    nodes_missed = len(ref_nodes - impl_nodes) / len(ref_nodes) if ref_nodes else 0.0
    links_missed = len(ref_links - impl_links) / len(ref_links) if ref_links else 0.0
    return RoundMetrics(
        n_traces=n,
        success_rate=counts["success"] / n,
        stopping_short_rate=counts["stopping_short"] / n,
        collision_rate=counts["collision"] / n,
        no_stop_rate=counts["no_stop"] / n,
        nodes_missed=nodes_missed,
        links_missed=links_missed,
        troublesomeness=dict(trouble),
    )


def beta_sweep(
    corpus: PathCorpus,
    m: int,
    betas: Sequence[float],
    k: int = 5,
    seed: int = 0,
    algorithm: str = "ratio",
) -> list[tuple[float, RoundMetrics]]:
    """Replay the first probing cycle with an rbf stop set at each beta.

    beta = 0 degenerates to the plain Bloom filter encoding.
    """
    if len(corpus.cycles) < 2:
        raise InsufficientCyclesError("need a learning cycle and a probing cycle")
    learning = corpus.cycles[0]
    rss = build_rss(learning)
    out = []
    for beta in betas:
        impl = encode_rss(
            rss,
            "rbf",
            m=m,
            k=k,
            seed=seed,
            beta=beta,
            algorithm=algorithm,
            learning=learning,
        )
        out.append((beta, replay_probing(corpus.cycles[1], impl)))
    return out


def multi_cycle_replay(
    corpus: PathCorpus, impl: RssImplementation, cycles: int = 10
) -> list[RoundMetrics]:
    """Replay probing cycles 1..cycles against a fixed stop set."""
    if len(corpus.cycles) < cycles + 1:
        raise InsufficientCyclesError(
            f"corpus has {len(corpus.cycles)} cycles, need {cycles + 1}"
        )
    return [replay_probing(corpus.cycles[t], impl) for t in range(1, cycles + 1)]
