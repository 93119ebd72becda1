"""Prize-Collecting Steiner Tree on small node-weighted graphs.

Objective: maximize sum of kept node prizes minus sum of kept edge costs over
connected, acyclic subgraphs. Exact mode enumerates connected node subsets and
connects each with its minimum spanning tree; approx mode takes the best of a
cluster-growing forest, the minimum spanning forest and greedy shortest-path
attachment, each strongly pruned.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import networkx as nx

from config import pcst_auto_exact_nodes, pcst_exact_max_nodes
from exceptions import ConfigError, InputError

logger = logging.getLogger(__name__)

EPS = 1e-9


class PcstMode(Enum):
    EXACT = 'exact'
    APPROX = 'approx'
    AUTO = 'auto'


@dataclass
class PrizedGraph:
    graph: nx.Graph

    @classmethod
    def build(cls, prizes: Mapping[Hashable, float], edges: Iterable[Sequence]) -> 'PrizedGraph':
        """Edges are (u, v, cost) or (u, v, cost, key); parallel edges keep the cheapest, then lowest key."""
        g = nx.Graph()
        for node, prize in prizes.items():
            if not math.isfinite(prize) or prize < 0:
                raise InputError(f'prize of {node!r} must be a finite non-negative number, got {prize!r}')
            g.add_node(node, prize=float(prize))
        for edge in edges:
            u, v, cost = edge[0], edge[1], edge[2]
            key = edge[3] if len(edge) > 3 else None
            if u == v:
                raise InputError(f'self-loop on {u!r}')
            if not math.isfinite(cost) or cost <= 0:
                raise InputError(f'edge {u!r}-{v!r} cost must be positive, got {cost!r}')
            for node in (u, v):
                if node not in g:
                    g.add_node(node, prize=0.0)
            if g.has_edge(u, v):
                old = g.edges[u, v]
                if (old['cost'], _key_order(old['key'])) <= (float(cost), _key_order(key)):
                    continue
            g.add_edge(u, v, cost=float(cost), key=key)
        return cls(g)

    def prize(self, node) -> float:
        return self.graph.nodes[node]['prize']

    def cost(self, u, v) -> float:
        return self.graph.edges[u, v]['cost']

    def order(self) -> list:
        return sorted(self.graph.nodes)

    def __len__(self) -> int:
        return self.graph.number_of_nodes()


def _key_order(key):
    return (key is None, key if key is not None else 0)


@dataclass(frozen=True)
class PcstTree:
    nodes: tuple
    edges: tuple
    objective: float
    prize: float

    def keys(self) -> list:
        return [key for _, _, key in self.edges]


def assign_prizes(ranked_candidates: Sequence, k: int) -> dict:
    """The i-th ranked candidate (0-based, i < k) gets prize k - i; the rest get 0."""
    if not isinstance(k, int) or k <= 0:
        raise ConfigError(f'k must be a positive integer, got {k!r}')
    if len(set(ranked_candidates)) != len(ranked_candidates):
        raise ConfigError('ranked candidates must be distinct')
    return {node: float(k - i) if i < k else 0.0 for i, node in enumerate(ranked_candidates)}


def _make_tree(pg: PrizedGraph, nodes: Iterable, edges: Iterable[tuple]) -> PcstTree:
    nodes = tuple(sorted(nodes))
    norm = []
    for u, v in edges:
        a, b = (u, v) if u <= v else (v, u)
        norm.append((a, b, pg.graph.edges[a, b]['key']))
    norm.sort(key=lambda e: (e[0], e[1]))
    prize = sum(pg.prize(v) for v in nodes)
    cost = sum(pg.cost(a, b) for a, b, _ in norm)
    return PcstTree(nodes, tuple(norm), prize - cost, prize)


def is_better(a: PcstTree, b: Optional[PcstTree], rooted: bool) -> bool:
    if b is None:
        return True
    if not math.isclose(a.objective, b.objective, rel_tol=EPS, abs_tol=EPS):
        return a.objective > b.objective
    if rooted and not math.isclose(a.prize, b.prize, rel_tol=EPS, abs_tol=EPS):
        return a.prize > b.prize
    return a.nodes < b.nodes


def _solve_exact(pg: PrizedGraph, root) -> PcstTree:
    order = pg.order()
    n = len(order)
    if n > pcst_exact_max_nodes:
        raise ConfigError(f'exact PCST is limited to {pcst_exact_max_nodes} nodes, got {n}')
    prizes = [pg.prize(v) for v in order]
    root_bit = 1 << order.index(root) if root is not None else 0
    best: Optional[PcstTree] = None
    for mask in range(1, 1 << n):
        if root_bit and not mask & root_bit:
            continue
        members = [i for i in range(n) if mask >> i & 1]
        prize = sum(prizes[i] for i in members)
        if best is not None and prize < best.objective - EPS:
            continue
        sub = pg.graph.subgraph(order[i] for i in members)
        if not nx.is_connected(sub):
            continue
        mst = nx.minimum_spanning_tree(sub, weight='cost')
        candidate = _make_tree(pg, sub.nodes, mst.edges())
        if is_better(candidate, best, root is not None):
            best = candidate
    return best


def _grow_clusters(pg: PrizedGraph, root, trace: Optional[list]) -> nx.Graph:
    """Cluster growing: active clusters spend their prize on incident edges; tight edges merge clusters."""
    order = pg.order()
    parent = {v: v for v in order}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    budget = {v: pg.prize(v) for v in order}
    has_root = {v: v == root for v in order}
    active = {v: pg.prize(v) > EPS and v != root for v in order}
    edges = sorted(tuple(sorted(e)) for e in pg.graph.edges())
    slack = {e: pg.cost(*e) for e in edges}
    forest = nx.Graph()
    forest.add_nodes_from(order)
    now = 0.0

    while True:
        clusters = sorted({find(v) for v in order})
        live = [c for c in clusters if active[c]]
        if not live:
            break
        events = [(max(budget[c], 0.0), 1, c) for c in live]
        crossing = []
        for e in edges:
            cu, cv = find(e[0]), find(e[1])
            if cu == cv:
                continue
            rate = int(active[cu]) + int(active[cv])
            if rate == 0:
                continue
            crossing.append((e, rate))
            events.append((max(slack[e], 0.0) / rate, 0, e))
        dt, kind, key = min(events)
        for c in live:
            budget[c] -= dt
        for e, rate in crossing:
            slack[e] -= dt * rate
        now += dt

        if kind == 0:
            u, v = key
            cu, cv = find(u), find(v)
            keep, gone = min(cu, cv), max(cu, cv)
            parent[gone] = keep
            budget[keep] = max(budget[cu], 0.0) + max(budget[cv], 0.0)
            has_root[keep] = has_root[cu] or has_root[cv]
            active[keep] = budget[keep] > EPS and not has_root[keep]
            forest.add_edge(u, v)
            if trace is not None:
                trace.append({'event': 'merge', 'time': round(now, 9), 'edge': [u, v]})
        else:
            active[key] = False
            budget[key] = 0.0
            if trace is not None:
                trace.append({'event': 'deactivate', 'time': round(now, 9), 'cluster': key})
    return forest


def _best_subtree(pg: PrizedGraph, forest: nx.Graph, root) -> Optional[PcstTree]:
    """Strong pruning: best connected subtree of a forest (containing root when given)."""
    rooted = root is not None
    if rooted:
        components = [nx.node_connected_component(forest, root)]
    else:
        components = sorted(nx.connected_components(forest), key=min)
    best: Optional[PcstTree] = None
    for comp in components:
        top = root if rooted else min(comp)
        preorder = list(nx.dfs_preorder_nodes(forest, top))
        preds = nx.dfs_predecessors(forest, top)
        children: dict = {v: [] for v in preorder}
        for v in preorder:
            if v in preds:
                children[preds[v]].append(v)
        value, collected, kept = {}, {}, {}
        for v in reversed(preorder):
            total, got, keep = pg.prize(v), pg.prize(v), []
            for c in sorted(children[v]):
                gain = value[c] - pg.cost(v, c)
                if gain > EPS or (rooted and gain >= -EPS and collected[c] > EPS):
                    total += gain
                    got += collected[c]
                    keep.append(c)
            value[v], collected[v], kept[v] = total, got, keep
        tops = [root] if rooted else sorted(preorder)
        for t in tops:
            nodes, edges, stack = [t], [], [t]
            while stack:
                v = stack.pop()
                for c in kept[v]:
                    nodes.append(c)
                    edges.append((v, c))
                    stack.append(c)
            candidate = _make_tree(pg, nodes, edges)
            if is_better(candidate, best, rooted):
                best = candidate
    return best


def _greedy_attach(pg: PrizedGraph, root) -> Optional[PcstTree]:
    """From each start, repeatedly attach the cheapest path to the node with the largest net gain."""
    order = pg.order()
    starts = [root] if root is not None else [v for v in order if pg.prize(v) > EPS]
    best: Optional[PcstTree] = None
    for start in starts:
        tree = nx.Graph()
        tree.add_node(start)
        while True:
            dist, paths = nx.multi_source_dijkstra(pg.graph, set(tree.nodes), weight='cost')
            target, target_gain = None, EPS
            for w in order:
                if w in tree or w not in dist:
                    continue
                gain = sum(pg.prize(x) for x in paths[w] if x not in tree) - dist[w]
                if gain > target_gain + EPS:
                    target, target_gain = w, gain
            if target is None:
                break
            path = paths[target]
            for a, b in zip(path, path[1:]):
                tree.add_edge(a, b)
        candidate = _best_subtree(pg, tree, root)
        if candidate is not None and is_better(candidate, best, root is not None):
            best = candidate
    return best


def _solve_approx(pg: PrizedGraph, root, trace: Optional[list]) -> PcstTree:
    rooted = root is not None
    candidates = [
        _best_subtree(pg, _grow_clusters(pg, root, trace), root),
        _best_subtree(pg, nx.minimum_spanning_tree(pg.graph, weight='cost'), root),
        _greedy_attach(pg, root),
    ]
    best = None
    for candidate in candidates:
        if candidate is not None and is_better(candidate, best, rooted):
            best = candidate
    return best


def solve_pcst(pg: PrizedGraph, mode=PcstMode.EXACT, root=None, trace: Optional[list] = None) -> PcstTree:
    """Best prize-minus-cost tree; with root, only trees containing root are feasible.

    Ties: exact objective first, then (rooted only) larger collected prize, then the
    lexicographically smallest sorted node tuple.
    """
    mode = PcstMode(mode)
    if root is not None and root not in pg.graph:
        raise ConfigError(f'root {root!r} is not a node of the graph')
    if len(pg) == 0:
        return PcstTree((), (), 0.0, 0.0)
    if mode is PcstMode.AUTO:
        mode = PcstMode.EXACT if len(pg) <= pcst_auto_exact_nodes else PcstMode.APPROX
    if mode is PcstMode.EXACT:
        tree = _solve_exact(pg, root)
    else:
        tree = _solve_approx(pg, root, trace)
    logger.debug(f'PCST ({mode.value}) over {len(pg)} nodes: {len(tree.nodes)} kept, objective {tree.objective:.4f}')
    return tree
