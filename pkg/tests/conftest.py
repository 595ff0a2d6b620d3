"""Shared fixtures and independent oracles used across the suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from mcfnd.model import Arc, Commodity, Instance
from mcfnd.relaxation import solve_flow_lp


def tiny_instance() -> Instance:
    """4-node diamond, 5 arcs, 2 commodities. Small enough to enumerate."""
    arcs = [
        Arc(0, 1, 2.0, 12.0, 10.0),
        Arc(0, 2, 3.0, 12.0, 4.0),
        Arc(1, 3, 2.0, 12.0, 6.0),
        Arc(2, 3, 1.0, 12.0, 7.0),
        Arc(0, 3, 8.0, 20.0, 5.0),
    ]
    commodities = [Commodity(0, 3, 6.0), Commodity(0, 3, 4.0)]
    return Instance(4, arcs, commodities, name="diamond")


def path_instance() -> Instance:
    """2 nodes, 1 arc, 1 commodity."""
    return Instance(
        2,
        [Arc(0, 1, 2.0, 10.0, 5.0)],
        [Commodity(0, 1, 3.0)],
        name="single-arc",
    )


@pytest.fixture
def diamond() -> Instance:
    return tiny_instance()


def brute_force_optimum(instance: Instance) -> tuple[float, np.ndarray]:
    """Exhaustive enumeration over all designs with a flow LP per design.

    Prunes safely before each LP: fixed cost alone exceeding the incumbent
    (variable costs are nonnegative), disconnected commodities, and a
    capacity-free shortest-path routing bound (a valid lower bound because
    dropping capacities can only cheapen routing).
    """
    n = instance.n_arcs
    best_obj = np.inf
    best_design = None

    all_open = np.ones(n, dtype=np.int8)
    flows = solve_flow_lp(instance, all_open)
    if flows is not None:
        best_obj = flows.objective + float(instance.fixed_cost.sum())
        best_design = all_open

    fixed = instance.fixed_cost
    for bits in itertools.product((0, 1), repeat=n):
        design = np.array(bits, dtype=np.int8)
        fcost = float(np.dot(fixed, design))
        if fcost >= best_obj:
            continue
        if not _all_connected(instance, design):
            continue
        routing_lb = _shortest_path_routing_bound(instance, design)
        if fcost + routing_lb >= best_obj:
            continue
        flows = solve_flow_lp(instance, design)
        if flows is None:
            continue
        total = flows.objective + fcost
        if total < best_obj - 1e-12:
            best_obj = total
            best_design = design
    return best_obj, best_design


def _shortest_path_routing_bound(instance: Instance, design: np.ndarray) -> float:
    """Sum over commodities of demand times the uncapacitated cheapest path."""
    import heapq

    total = 0.0
    for k, com in enumerate(instance.commodities):
        costs = instance.arc_cost(k)
        dist = {com.origin: 0.0}
        heap = [(0.0, com.origin)]
        goal = None
        while heap:
            d, node = heapq.heappop(heap)
            if node == com.destination:
                goal = d
                break
            if d > dist.get(node, np.inf):
                continue
            for arc in instance.out_arcs[node]:
                if design[arc]:
                    head = instance.arcs[arc].head
                    nd = d + costs[arc]
                    if nd < dist.get(head, np.inf):
                        dist[head] = nd
                        heapq.heappush(heap, (nd, head))
        if goal is None:
            return np.inf
        total += com.demand * goal
    return total


def _all_connected(instance: Instance, design: np.ndarray) -> bool:
    for com in instance.commodities:
        seen = {com.origin}
        stack = [com.origin]
        hit = False
        while stack:
            node = stack.pop()
            if node == com.destination:
                hit = True
                break
            for arc in instance.out_arcs[node]:
                if design[arc]:
                    head = instance.arcs[arc].head
                    if head not in seen:
                        seen.add(head)
                        stack.append(head)
        if not hit:
            return False
    return True


def max_flow_augmenting(capacity: dict[tuple[int, int], float], source: int, sink: int, n: int) -> float:
    """Edmonds-Karp max flow; the independent oracle for the max-flow-as-LP test."""
    residual = {k: v for k, v in capacity.items()}
    flow = 0.0
    while True:
        parent = {source: None}
        queue = [source]
        while queue and sink not in parent:
            u = queue.pop(0)
            for (a, b), cap in residual.items():
                if a == u and cap > 1e-12 and b not in parent:
                    parent[b] = (a, b)
                    queue.append(b)
        if sink not in parent:
            return flow
        path = []
        node = sink
        while parent[node] is not None:
            edge = parent[node]
            path.append(edge)
            node = edge[0]
        push = min(residual[e] for e in path)
        for e in path:
            residual[e] -= push
            back = (e[1], e[0])
            residual[back] = residual.get(back, 0.0) + push
        flow += push
