"""Optimal-transport distances and an integral min-cost-flow solver."""

import heapq
from dataclasses import dataclass, field

import numpy as np


class InfeasibleFlowError(ValueError):
    """Raised when the required flow cannot be routed from source to sink."""


def _check_weights(values, weights, side):
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError(f"wasserstein_1d: empty sample set on side {side}")
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != values.shape:
        raise ValueError(f"side {side}: {weights.size} weights for {values.size} samples")
    if np.any(weights < 0):
        raise ValueError(f"side {side}: weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"side {side}: weights must sum to 1 (got {weights.sum():.12g})")
    return values, weights


def wasserstein_1d(u_values, v_values, u_weights=None, v_weights=None):
    """Earth mover's distance between two weighted 1-D samples.

    Computed as the integral of ``|F_u - F_v|`` over the merged support,
    which equals the cost of matching the two quantile functions.
    """
    u, uw = _check_weights(u_values, u_weights, "u")
    v, vw = _check_weights(v_values, v_weights, "v")
    support = np.concatenate([u, v])
    order = np.argsort(support, kind="mergesort")
    support = support[order]
    mass_u = np.concatenate([uw, np.zeros_like(vw)])[order]
    mass_v = np.concatenate([np.zeros_like(uw), vw])[order]
    cdf_gap = np.cumsum(mass_u - mass_v)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(support)))


def wasserstein_per_feature(A, B, a_weights=None, b_weights=None):
    """Sum over columns of the 1-D distances between weighted row sets."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    return float(sum(wasserstein_1d(A[:, k], B[:, k], a_weights, b_weights) for k in range(A.shape[1])))


@dataclass
class FlowNetwork:
    """Directed network with integer capacities and real unit costs.

    ``arcs`` holds ``(tail, head, capacity, unit_cost)`` tuples; nodes are
    ``0..n_nodes-1``.
    """

    n_nodes: int
    source: int
    sink: int
    required_flow: int
    arcs: list = field(default_factory=list)

    def add_arc(self, tail, head, capacity, cost):
        self.arcs.append((int(tail), int(head), int(capacity), float(cost)))
        return len(self.arcs) - 1

    def validate(self):
        if self.required_flow < 0:
            raise ValueError("required flow must be nonnegative")
        for k, (t, h, cap, _) in enumerate(self.arcs):
            if not (0 <= t < self.n_nodes and 0 <= h < self.n_nodes):
                raise ValueError(f"arc {k} references a node outside 0..{self.n_nodes - 1}")
            if t == h:
                raise ValueError(f"arc {k} is a self-loop on node {t}")
            if cap < 0:
                raise ValueError(f"arc {k} has negative capacity {cap}")


def _bellman_ford(n, graph, source):
    inf = float("inf")
    dist = [inf] * n
    dist[source] = 0.0
    for _ in range(n):
        changed = False
        for u in range(n):
            if dist[u] == inf:
                continue
            for e in graph[u]:
                to, cap, cost = e[0], e[1], e[2]
                if cap > 0 and dist[u] + cost < dist[to] - 1e-12:
                    dist[to] = dist[u] + cost
                    changed = True
        if not changed:
            return dist
    raise ValueError("network contains a negative-cost cycle; only acyclic cost structures are supported")


def min_cost_flow(net):
    """Route ``net.required_flow`` units at minimum cost.

    Successive shortest augmenting paths with Johnson potentials: one
    Bellman-Ford pass seeds the potentials (arc costs may be negative),
    after which every shortest path search is a Dijkstra over reduced
    costs. Capacities are integral, so the returned flow is integral.

    Returns:
        ``(flows, total_cost)`` where ``flows[k]`` is the flow on ``net.arcs[k]``.
    """
    net.validate()
    n = net.n_nodes
    # residual edge: [to, residual capacity, cost, index of reverse edge, arc id or -1]
    graph = [[] for _ in range(n)]
    handles = []
    for k, (t, h, cap, cost) in enumerate(net.arcs):
        graph[t].append([h, cap, cost, len(graph[h]), k])
        graph[h].append([t, 0, -cost, len(graph[t]) - 1, -1])
        handles.append((t, len(graph[t]) - 1))

    inf = float("inf")
    potential = _bellman_ford(n, graph, net.source)
    potential = [p if p < inf else 0.0 for p in potential]

    remaining = net.required_flow
    total_cost = 0.0
    while remaining > 0:
        dist = [inf] * n
        prev = [None] * n
        dist[net.source] = 0.0
        heap = [(0.0, net.source)]
        while heap:
            d_u, u = heapq.heappop(heap)
            if d_u > dist[u]:
                continue
            for idx, e in enumerate(graph[u]):
                if e[1] <= 0:
                    continue
                # reduced costs are nonnegative up to rounding
                nd = d_u + max(e[2] + potential[u] - potential[e[0]], 0.0)
                if nd < dist[e[0]] - 1e-15:
                    dist[e[0]] = nd
                    prev[e[0]] = (u, idx)
                    heapq.heappush(heap, (nd, e[0]))
        if dist[net.sink] == inf:
            raise InfeasibleFlowError(
                f"only {net.required_flow - remaining} of {net.required_flow} units can reach the sink"
            )
        for v in range(n):
            if dist[v] < inf:
                potential[v] += dist[v]

        push = remaining
        v = net.sink
        while v != net.source:
            u, idx = prev[v]
            push = min(push, graph[u][idx][1])
            v = u
        v = net.sink
        while v != net.source:
            u, idx = prev[v]
            e = graph[u][idx]
            e[1] -= push
            graph[e[0]][e[3]][1] += push
            total_cost += push * e[2]
            v = u
        remaining -= push

    flows = [net.arcs[k][2] - graph[t][i][1] for k, (t, i) in enumerate(handles)]
    return flows, float(total_cost)
