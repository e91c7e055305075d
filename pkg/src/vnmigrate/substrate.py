"""Substrate networks: representation, generation, ingestion and cost tables.

All costs live on one unitless axis. Access costs are shortest-path
distances (hop count or summed latency); a migration from ``u`` to ``v``
costs ``server_size / bottleneck_bandwidth + crossings * pi`` along the
chosen migration path.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

T1_MBPS = 1.544
T2_MBPS = 6.312
DEFAULT_BANDWIDTHS = (T1_MBPS, T2_MBPS)
MAX_CONNECT_ATTEMPTS = 1000
CONNECT_MODES = ("resample", "patch", "auto")

ACCESS_METRICS = ("hops", "latency")
MIGRATION_PATH_MODES = ("optimal", "shortest_latency")


class NetworkError(ValueError):
    """Invalid substrate network."""


class NetworkFormatError(NetworkError):
    """Malformed network document."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class GenerationError(RuntimeError):
    """A random generator could not produce a valid network."""


@dataclass(frozen=True)
class Node:
    node_id: int
    pip_id: int = 0
    capacity: float | None = None


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    bandwidth: float
    latency: float = 1.0


@dataclass(frozen=True, eq=False)
class SubstrateNetwork:
    """Undirected, simple, connected substrate graph.

    Edges are normalized so that ``u < v`` and stored sorted by ``(u, v)``.
    ``meta`` carries generator provenance (e.g. the number of sampling
    attempts) and is not part of equality.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes, key=lambda nd: nd.node_id))
        edges = tuple(sorted(
            (Edge(min(e.u, e.v), max(e.u, e.v), float(e.bandwidth), float(e.latency))
             for e in self.edges),
            key=lambda e: (e.u, e.v),
        ))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        self._validate()

    def _validate(self):
        n = len(self.nodes)
        if n == 0:
            raise NetworkError("network has no nodes")
        if [nd.node_id for nd in self.nodes] != list(range(n)):
            raise NetworkError("node ids must be dense 0..n-1")
        for nd in self.nodes:
            if nd.capacity is not None and nd.capacity < 0:
                raise NetworkError(f"node {nd.node_id}: negative capacity")
        seen = set()
        for e in self.edges:
            if e.u == e.v:
                raise NetworkError(f"self-loop at node {e.u}")
            if not (0 <= e.u < n and 0 <= e.v < n):
                raise NetworkError(f"edge ({e.u},{e.v}) references an unknown node")
            if (e.u, e.v) in seen:
                raise NetworkError(f"duplicate edge ({e.u},{e.v})")
            seen.add((e.u, e.v))
            if not e.bandwidth > 0:
                raise NetworkError(f"edge ({e.u},{e.v}): bandwidth must be positive")
            if e.latency < 0:
                raise NetworkError(f"edge ({e.u},{e.v}): negative latency")
        if not _is_connected(n, self.edges):
            raise NetworkError("network is disconnected")

    def __eq__(self, other):
        if not isinstance(other, SubstrateNetwork):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        return hash((self.nodes, self.edges))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def pip_of(self) -> np.ndarray:
        return np.array([nd.pip_id for nd in self.nodes], dtype=np.int64)

    @property
    def pips(self) -> list[int]:
        return sorted({nd.pip_id for nd in self.nodes})

    @property
    def bandwidths(self) -> np.ndarray:
        return np.array([e.bandwidth for e in self.edges], dtype=float)

    def adjacency(self) -> list[list[tuple[int, Edge]]]:
        adj: list[list[tuple[int, Edge]]] = [[] for _ in range(self.n)]
        for e in self.edges:
            adj[e.u].append((e.v, e))
            adj[e.v].append((e.u, e))
        return adj

    def fingerprint(self) -> str:
        return hashlib.sha256(serialize_network(self).encode()).hexdigest()[:16]


def _is_connected(n: int, edges: Iterable[Edge]) -> bool:
    return len(_components(n, edges)) <= 1


def _components(n: int, edges: Iterable[Edge]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        adj[e.u].append(e.v)
        adj[e.v].append(e.u)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [s], deque([s])
        while queue:
            x = queue.popleft()
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    comp.append(y)
                    queue.append(y)
        comps.append(sorted(comp))
    return comps


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _draw_latencies(rng, m, latency):
    if latency in (None, "unit"):
        return np.ones(m)
    lo, hi = latency
    if not 0 <= lo <= hi:
        raise ValueError(f"bad latency range ({lo}, {hi})")
    return rng.uniform(lo, hi, size=m)


def generate_erdos_renyi(
    n: int,
    p_conn: float,
    bw_choices: Sequence[float] = DEFAULT_BANDWIDTHS,
    latency="unit",
    pip_id: int = 0,
    seed: int = 0,
    connect: str = "resample",
    max_attempts: int = MAX_CONNECT_ATTEMPTS,
) -> SubstrateNetwork:
    """Sample a connected G(n, p) graph.

    ``latency`` is ``"unit"`` or a ``(lo, hi)`` range for uniform draws.
    With ``connect="resample"`` the whole graph is redrawn until it is
    connected, at most ``max_attempts`` times. ``connect="patch"`` keeps the
    first sample and joins its components with random bridging edges, which
    is the only practical option for sparse settings such as p=1%.
    ``connect="auto"`` resamples and patches the last draw (with a warning)
    if every attempt came out disconnected.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < p_conn <= 1:
        raise ValueError("p_conn must be in (0, 1]")
    if not bw_choices:
        raise ValueError("bw_choices must be nonempty")
    if connect not in CONNECT_MODES:
        raise ValueError(f"unknown connect strategy {connect!r}")
    bw_choices = np.asarray(bw_choices, dtype=float)
    rng = np.random.default_rng(seed)
    nodes = tuple(Node(i, pip_id) for i in range(n))
    iu, ju = np.triu_indices(n, k=1)

    for attempt in range(1, max_attempts + 1):
        mask = rng.random(iu.size) < p_conn
        us, vs = iu[mask], ju[mask]
        bws = rng.choice(bw_choices, size=us.size)
        lats = _draw_latencies(rng, us.size, latency)
        edges = [Edge(int(u), int(v), float(b), float(l))
                 for u, v, b, l in zip(us, vs, bws, lats)]
        comps = _components(n, edges)
        if len(comps) == 1:
            return SubstrateNetwork(nodes, tuple(edges), {"attempts": attempt, "bridges": 0})
        last = attempt == max_attempts
        if connect == "patch" or (connect == "auto" and last):
            if connect == "auto":
                log.warning("G(n=%d, p=%g) disconnected after %d draws; patching %d components",
                            n, p_conn, attempt, len(comps))
            # chain components in order of their smallest node
            for a, b in zip(comps, comps[1:]):
                u, v = int(rng.choice(a)), int(rng.choice(b))
                edges.append(Edge(u, v, float(rng.choice(bw_choices)),
                                  float(_draw_latencies(rng, 1, latency)[0])))
            return SubstrateNetwork(nodes, tuple(edges),
                                    {"attempts": attempt, "bridges": len(comps) - 1})
    raise GenerationError(
        f"no connected G(n={n}, p={p_conn}) sample in {max_attempts} attempts")


def compose_pip_ring(
    subnets: Sequence[SubstrateNetwork],
    inter_bw: float = T1_MBPS,
    inter_latency: float = 1.0,
    seed: int = 0,
) -> SubstrateNetwork:
    """Join provider networks into a ring, one random link per adjacent pair.

    Subnet ``i`` becomes PIP ``i``; node ids are shifted to stay dense.
    """
    if not subnets:
        raise ValueError("compose_pip_ring needs at least one subnet")
    k = len(subnets)
    if k == 1:
        return subnets[0]
    rng = np.random.default_rng(seed)
    offsets = np.cumsum([0] + [s.n for s in subnets])
    nodes, edges = [], []
    for i, sub in enumerate(subnets):
        off = int(offsets[i])
        nodes += [Node(nd.node_id + off, i, nd.capacity) for nd in sub.nodes]
        edges += [Edge(e.u + off, e.v + off, e.bandwidth, e.latency) for e in sub.edges]
    pairs = [(0, 1)] if k == 2 else [(i, (i + 1) % k) for i in range(k)]
    for a, b in pairs:
        u = int(offsets[a]) + int(rng.integers(subnets[a].n))
        v = int(offsets[b]) + int(rng.integers(subnets[b].n))
        edges.append(Edge(u, v, inter_bw, inter_latency))
    return SubstrateNetwork(tuple(nodes), tuple(edges), {"pips": k})


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_network(net: SubstrateNetwork) -> str:
    lines = [f"# substrate v1 nodes={net.n} edges={len(net.edges)}"]
    for nd in net.nodes:
        cap = "" if nd.capacity is None else " " + _fmt(nd.capacity)
        lines.append(f"node {nd.node_id} {nd.pip_id}{cap}")
    for e in net.edges:
        lines.append(f"edge {e.u} {e.v} {_fmt(e.bandwidth)} {_fmt(e.latency)}")
    return "\n".join(lines) + "\n"


def _num(tok, kind, lineno):
    try:
        return kind(tok)
    except ValueError:
        raise NetworkFormatError(f"bad {kind.__name__} {tok!r}", lineno) from None


def parse_network(text: str) -> SubstrateNetwork:
    nodes: dict[int, Node] = {}
    edges: dict[tuple[int, int], Edge] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if tok[0] == "node":
            if edges:
                raise NetworkFormatError("node lines must precede edge lines", lineno)
            if len(tok) not in (3, 4):
                raise NetworkFormatError("expected 'node <id> <pip_id> [capacity]'", lineno)
            nid, pip = _num(tok[1], int, lineno), _num(tok[2], int, lineno)
            cap = _num(tok[3], float, lineno) if len(tok) == 4 else None
            if nid in nodes:
                raise NetworkFormatError(f"duplicate node {nid}", lineno)
            nodes[nid] = Node(nid, pip, cap)
        elif tok[0] == "edge":
            if len(tok) != 5:
                raise NetworkFormatError(
                    "expected 'edge <u> <v> <bandwidth_mbps> <latency_ms>'", lineno)
            u, v = _num(tok[1], int, lineno), _num(tok[2], int, lineno)
            bw, lat = _num(tok[3], float, lineno), _num(tok[4], float, lineno)
            for x in (u, v):
                if x not in nodes:
                    raise NetworkFormatError(f"unknown node {x}", lineno)
            key = (min(u, v), max(u, v))
            if key in edges:
                raise NetworkFormatError(f"duplicate edge ({u},{v})", lineno)
            if u == v:
                raise NetworkFormatError(f"self-loop at node {u}", lineno)
            edges[key] = Edge(key[0], key[1], bw, lat)
        else:
            raise NetworkFormatError(f"unknown record {tok[0]!r}", lineno)
    if not nodes:
        raise NetworkFormatError("document declares no nodes")
    return SubstrateNetwork(tuple(nodes.values()), tuple(edges.values()))


def import_rocketfuel_weights(
    text: str,
    bw_choices: Sequence[float] = DEFAULT_BANDWIDTHS,
    pip_id: int = 0,
    seed: int = 0,
) -> SubstrateNetwork:
    """Build a network from a Rocketfuel ``weights.intra`` style file.

    Each line is ``<router_a> <router_b> <weight>``; the weight becomes the
    link latency. Router names are relabeled densely in order of first
    appearance, directed duplicates are merged (first weight wins), and
    bandwidths are drawn from ``bw_choices``.
    """
    names: dict[str, int] = {}
    links: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 3:
            raise NetworkFormatError("expected '<a> <b> <weight>'", lineno)
        a, b = (names.setdefault(t, len(names)) for t in tok[:2])
        w = _num(tok[2], float, lineno)
        if a != b:
            links.setdefault((min(a, b), max(a, b)), w)
    if not names:
        raise NetworkFormatError("document declares no links")
    rng = np.random.default_rng(seed)
    bws = rng.choice(np.asarray(bw_choices, dtype=float), size=len(links))
    edges = tuple(Edge(u, v, float(b), w) for (u, v), w, b in zip(links, links.values(), bws))
    return SubstrateNetwork(tuple(Node(i, pip_id) for i in range(len(names))), edges,
                            {"routers": list(names)})


# ---------------------------------------------------------------------------
# Cost model and tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Cost parameters shared by every policy and the offline optimum.

    ``threshold`` is the counter level that triggers single-provider
    migrations; it defaults to ``beta`` (constant bandwidth) and is
    ``server_size / min bandwidth`` when derived for mixed bandwidths.
    """

    server_size: float
    beta: float
    pi: float = 0.0
    mu: float = 1.0
    access_metric: str = "hops"
    migration_path_mode: str = "optimal"
    det_tau: float = 1 / 3
    pdet_tau_large: float = 1 / 40
    threshold: float | None = None

    def __post_init__(self):
        if not self.server_size > 0:
            raise ValueError("server_size must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.pi < 0:
            raise ValueError("pi must be nonnegative")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.access_metric not in ACCESS_METRICS:
            raise ValueError(f"unknown access metric {self.access_metric!r}")
        if self.migration_path_mode not in MIGRATION_PATH_MODES:
            raise ValueError(f"unknown migration path mode {self.migration_path_mode!r}")
        for name in ("det_tau", "pdet_tau_large"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.threshold is None:
            object.__setattr__(self, "threshold", self.beta)
        elif not self.threshold > 0:
            raise ValueError("threshold must be positive")


def derive_cost_parameters(
    net: SubstrateNetwork,
    server_size: float,
    pi_over_beta: float = 3.0,
    access_metric: str = "hops",
    migration_path_mode: str = "optimal",
    det_tau: float = 1 / 3,
    pdet_tau_large: float = 1 / 40,
) -> CostModel:
    """beta = size / mean bandwidth, pi = pi_over_beta * beta, mu = max/min bandwidth."""
    if not server_size > 0:
        raise ValueError("server_size must be positive")
    if pi_over_beta < 0:
        raise ValueError("pi_over_beta must be nonnegative")
    bws = net.bandwidths
    if bws.size == 0:
        # single node: nothing ever migrates, any positive scale works
        bws = np.array([1.0])
    beta = server_size / float(bws.mean())
    lo, hi = float(bws.min()), float(bws.max())
    mu = hi / lo
    return CostModel(
        server_size=server_size,
        beta=beta,
        pi=pi_over_beta * beta,
        mu=mu,
        access_metric=access_metric,
        migration_path_mode=migration_path_mode,
        det_tau=det_tau,
        pdet_tau_large=pdet_tau_large,
        threshold=beta if hi == lo else server_size / lo,
    )


@dataclass(frozen=True, eq=False)
class AccessMatrix:
    dist: np.ndarray
    metric: str = "hops"

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def request_mass(self, origins) -> np.ndarray:
        """Vector of summed distances from a request multiset to every node."""
        if len(origins) == 0:
            return np.zeros(self.n)
        weights = np.bincount(np.asarray(origins, dtype=np.int64), minlength=self.n)
        return weights.astype(float) @ self.dist


def _edge_weight(e: Edge, metric: str) -> float:
    return 1.0 if metric == "hops" else e.latency


def access_cost_matrix(net: SubstrateNetwork, metric: str = "hops") -> AccessMatrix:
    """All-pairs shortest path distances (Floyd-Warshall)."""
    if metric not in ACCESS_METRICS:
        raise ValueError(f"unknown access metric {metric!r}")
    n = net.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for e in net.edges:
        w = _edge_weight(e, metric)
        if w < d[e.u, e.v]:
            d[e.u, e.v] = d[e.v, e.u] = w
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    d.setflags(write=False)
    return AccessMatrix(d, metric)


@dataclass(frozen=True, eq=False)
class MigrationTable:
    cost: np.ndarray
    crossings: np.ndarray


def _crossing_bfs(n, adj, pip_of, src, min_bw):
    """0-1 BFS: fewest PIP-boundary crossings from src over edges with bandwidth >= min_bw."""
    dist = [math.inf] * n
    dist[src] = 0
    dq = deque([src])
    while dq:
        x = dq.popleft()
        for y, e in adj[x]:
            if e.bandwidth < min_bw:
                continue
            w = 1 if pip_of[x] != pip_of[y] else 0
            if dist[x] + w < dist[y]:
                dist[y] = dist[x] + w
                if w:
                    dq.append(y)
                else:
                    dq.appendleft(y)
    return dist


def _shortest_path_tree(n, adj, src, metric):
    """Dijkstra with deterministic lowest-id tie-breaking; returns predecessors."""
    dist = [math.inf] * n
    pred = [-1] * n
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = [False] * n
    while heap:
        dx, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        for y, e in sorted(adj[x], key=lambda t: t[0]):
            nd = dx + _edge_weight(e, metric)
            if nd < dist[y]:
                dist[y], pred[y] = nd, x
                heapq.heappush(heap, (nd, y))
    return pred


def migration_cost_table(net: SubstrateNetwork, cm: CostModel) -> MigrationTable:
    n = net.n
    adj = net.adjacency()
    pip_of = net.pip_of.tolist()
    cost = np.full((n, n), np.inf)
    cross = np.zeros((n, n), dtype=np.int64)

    if cm.migration_path_mode == "optimal":
        # The best path with bottleneck b is the fewest-crossings path in the
        # subgraph of edges with bandwidth >= b; scan every distinct b.
        for b in sorted({e.bandwidth for e in net.edges}, reverse=True):
            base = cm.server_size / b
            for s in range(n):
                hops = _crossing_bfs(n, adj, pip_of, s, b)
                for t in range(n):
                    if hops[t] == math.inf:
                        continue
                    c = base + hops[t] * cm.pi
                    if c < cost[s, t]:
                        cost[s, t], cross[s, t] = c, hops[t]
    else:
        for s in range(n):
            pred = _shortest_path_tree(n, adj, s, cm.access_metric)
            for t in range(n):
                if t == s:
                    continue
                min_bw, k, y = math.inf, 0, t
                while y != s:
                    x = pred[y]
                    bw = next(e.bandwidth for z, e in adj[x] if z == y)
                    min_bw = min(min_bw, bw)
                    k += pip_of[x] != pip_of[y]
                    y = x
                cost[s, t] = cm.server_size / min_bw + k * cm.pi
                cross[s, t] = k
    np.fill_diagonal(cost, 0.0)
    np.fill_diagonal(cross, 0)
    cost.setflags(write=False)
    cross.setflags(write=False)
    return MigrationTable(cost, cross)


def pip_graph_diameter(net: SubstrateNetwork) -> int:
    """Largest fewest-crossings count over all node pairs."""
    adj = net.adjacency()
    pip_of = net.pip_of.tolist()
    return int(max(max(_crossing_bfs(net.n, adj, pip_of, s, -math.inf)) for s in range(net.n)))
