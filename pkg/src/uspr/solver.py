"""Optimization engines and the routing-structure constructions.

`benders_solve` runs the decomposition loop: an integer master enumerates
candidate routing forests (per-origin trees combined under the coupling
capacity constraint) in nondecreasing total-load order, and the weight
recovery subproblem decides whether each candidate is realizable as a unique
shortest-path system.  Unrealizable candidates are excluded with no-good
cuts; because candidates arrive best-first, the first realizable one is
optimal.  `brute_force_solve` is the independent reference: it enumerates
every weight vector on the grid and keeps the best capacity-feasible
unique-routing outcome.

The module also implements the structure mappings used by the property
suites: loop stripping, the demand-to-origin aggregation (y = max x,
f = sum d*x), the backward path-assigning walk from destination to origin,
and the per-origin sub-path optimality check.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from . import lp, spf
from .instance import Instance
from .lp import GridSearchLimitError
from .rational import format_number, grid_points
from .spf import RoutingForest, WeightVector


class ConservationError(ValueError):
    """Flow conservation violated where an operation requires it."""


class RoutingLoopError(ValueError):
    pass


class SubpathOptimalityError(ValueError):
    def __init__(self, origin: str, node: str):
        self.origin = origin
        self.node = node
        super().__init__(
            f"demands from origin {origin!r} enter node {node!r} on different links"
        )


class MalformedForestError(ValueError):
    pass


@dataclass(frozen=True)
class DemandRouting:
    """Per-demand link selections, aligned with the instance demand order."""

    links: tuple[frozenset[tuple[str, str]], ...]


@dataclass(frozen=True)
class Diagnostics:
    iterations: int = 0
    cuts_added: int = 0
    nodes_explored: int = 0
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Solution:
    status: str  # "Optimal" | "Infeasible" | "BoundsExhausted"
    weights: WeightVector | None
    forest: RoutingForest | None
    objective: Fraction | None
    diagnostics: Diagnostics


@dataclass(frozen=True)
class SolverConfig:
    eps: Fraction | None = None
    big_M: Fraction | None = None
    node_limit: int | None = None
    time_limit: float | None = None
    grid_limit: int = 200_000
    strengthen_cuts: bool = False


# ---------------------------------------------------------------------------
# Demand-routing checks and constructions.


def routing_objective(instance: Instance, routing: DemandRouting) -> Fraction:
    total = Fraction(0)
    for demand, links in zip(instance.demands, routing.links):
        total += demand.bandwidth * len(links)
    return total


def _balance_violations(instance: Instance, routing: DemandRouting) -> list[str]:
    out = []
    if len(routing.links) != len(instance.demands):
        return [
            f"routing covers {len(routing.links)} demands, instance has "
            f"{len(instance.demands)}"
        ]
    link_set = set(instance.link_pairs())
    for k, (demand, links) in enumerate(zip(instance.demands, routing.links)):
        for pair in links:
            if pair not in link_set:
                out.append(f"demand {k}: {pair} is not an instance link")
        for node in instance.nodes:
            inflow = sum(1 for (i, j) in links if j == node)
            outflow = sum(1 for (i, j) in links if i == node)
            if node == demand.origin:
                expected = -1
            elif node == demand.destination:
                expected = 1
            else:
                expected = 0
            if inflow - outflow != expected:
                out.append(
                    f"demand {k}: balance at {node!r} is {inflow - outflow}, "
                    f"expected {expected}"
                )
    return out


def _find_cycle(
    links: frozenset[tuple[str, str]], node_order: Sequence[str]
) -> list[tuple[str, str]] | None:
    adj: dict[str, list[str]] = {}
    for i, j in sorted(links):
        adj.setdefault(i, []).append(j)
    color: dict[str, str] = {}
    for start in node_order:
        if color.get(start) is not None or start not in adj:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(start, iter(adj.get(start, [])))]
        color[start] = "gray"
        path = [start]
        while stack:
            node, neighbors = stack[-1]
            advanced = False
            for nxt in neighbors:
                state = color.get(nxt)
                if state == "gray":
                    at = path.index(nxt)
                    cycle_nodes = path[at:] + [nxt]
                    return list(zip(cycle_nodes, cycle_nodes[1:]))
                if state is None:
                    color[nxt] = "gray"
                    path.append(nxt)
                    stack.append((nxt, iter(adj.get(nxt, []))))
                    advanced = True
                    break
            if not advanced:
                color[node] = "black"
                path.pop()
                stack.pop()
    return None


def strip_loops(instance: Instance, routing: DemandRouting) -> DemandRouting:
    """Remove every directed cycle from each demand's link selection.

    Requires flow conservation (cycles allowed); removal preserves it, and
    the routing objective strictly decreases whenever something was removed.
    """
    problems = _balance_violations(instance, routing)
    if problems:
        raise ConservationError("; ".join(problems))
    stripped = []
    for links in routing.links:
        current = set(links)
        while True:
            cycle = _find_cycle(frozenset(current), instance.nodes)
            if cycle is None:
                break
            current.difference_update(cycle)
        stripped.append(frozenset(current))
    return DemandRouting(tuple(stripped))


def routing_paths(instance: Instance, routing: DemandRouting) -> dict[tuple[str, str], tuple[str, ...]]:
    """Per-demand node sequences; requires loop-free path-form selections."""
    out = {}
    for k, (demand, links) in enumerate(zip(instance.demands, routing.links)):
        succ: dict[str, list[str]] = {}
        for i, j in sorted(links):
            succ.setdefault(i, []).append(j)
        path = [demand.origin]
        seen = {demand.origin}
        while path[-1] != demand.destination:
            nexts = succ.get(path[-1], [])
            if len(nexts) != 1:
                raise RoutingLoopError(
                    f"demand {k}: node {path[-1]!r} has {len(nexts)} outgoing links"
                )
            nxt = nexts[0]
            if nxt in seen:
                raise RoutingLoopError(f"demand {k}: cycle through {nxt!r}")
            seen.add(nxt)
            path.append(nxt)
        if len(links) != len(path) - 1:
            raise RoutingLoopError(f"demand {k}: selection is larger than its path")
        out[(demand.origin, demand.destination)] = tuple(path)
    return out


@dataclass(frozen=True)
class SubpathViolation:
    origin: str
    node: str
    entering_links: tuple[tuple[str, str], ...]


def subpath_optimality_check(instance: Instance, routing: DemandRouting) -> list[SubpathViolation]:
    """Nodes entered on more than one link by demands sharing an origin."""
    out = []
    demand_index = {k: d for k, d in enumerate(instance.demands)}
    for origin in instance.origins():
        entering: dict[str, set[tuple[str, str]]] = {}
        for k, links in enumerate(routing.links):
            if demand_index[k].origin != origin:
                continue
            for i, j in links:
                entering.setdefault(j, set()).add((i, j))
        for node in instance.nodes:
            if node == origin:
                continue
            used = entering.get(node, set())
            if len(used) > 1:
                out.append(SubpathViolation(origin, node, tuple(sorted(used))))
    return out


def demand_routing_violations(instance: Instance, routing: DemandRouting) -> list[str]:
    """Constraint check for the relaxed demand model: conservation, capacity,
    sub-path optimality."""
    out = _balance_violations(instance, routing)
    loads: dict[tuple[str, str], Fraction] = {}
    for demand, links in zip(instance.demands, routing.links):
        for pair in links:
            loads[pair] = loads.get(pair, Fraction(0)) + demand.bandwidth
    for link in instance.links:
        load = loads.get((link.tail, link.head), Fraction(0))
        if load > link.capacity:
            out.append(
                f"link ({link.tail!r}, {link.head!r}): load {load} exceeds "
                f"capacity {link.capacity}"
            )
    for v in subpath_optimality_check(instance, routing):
        out.append(
            f"origin {v.origin!r}: node {v.node!r} entered via {len(v.entering_links)} links"
        )
    return out


def demand_to_origin(instance: Instance, routing: DemandRouting) -> RoutingForest:
    """Aggregate per-demand selections into per-origin trees.

    A used link of the tree is any link used by some demand of the origin;
    its flow is the bandwidth sum of the demands using it.  Requires a
    loop-free, conservation-satisfying, sub-path-optimal routing.
    """
    problems = _balance_violations(instance, routing)
    if problems:
        raise ConservationError("; ".join(problems))
    for k, links in enumerate(routing.links):
        if _find_cycle(links, instance.nodes) is not None:
            raise RoutingLoopError(f"demand {k}: selection contains a directed cycle")
    violations = subpath_optimality_check(instance, routing)
    if violations:
        v = violations[0]
        raise SubpathOptimalityError(v.origin, v.node)
    paths = routing_paths(instance, routing)
    forest = spf.forest_from_paths(instance, paths)
    leftover = spf.forest_violations(instance, forest)
    assert not leftover, f"internal: aggregated forest invalid: {leftover}"
    return forest


def origin_to_demand(instance: Instance, forest: RoutingForest) -> DemandRouting:
    """Extract per-demand selections by walking trees backward.

    For each demand the walk starts at the destination and repeatedly takes
    the single used incoming link of the origin's tree until it reaches the
    origin; malformed trees (no incoming link, several, or a cycle) raise
    MalformedForestError.
    """
    selections = []
    for demand in instance.demands:
        used = forest.used_links(demand.origin)
        incoming: dict[str, list[tuple[str, str]]] = {}
        for i, j in used:
            incoming.setdefault(j, []).append((i, j))
        node = demand.destination
        visited = {node}
        chosen: list[tuple[str, str]] = []
        while node != demand.origin:
            links = incoming.get(node, [])
            if not links:
                raise MalformedForestError(
                    f"origin {demand.origin!r}: node {node!r} has no used incoming link"
                )
            if len(links) > 1:
                raise MalformedForestError(
                    f"origin {demand.origin!r}: node {node!r} has several used "
                    "incoming links"
                )
            link = links[0]
            chosen.append(link)
            node = link[0]
            if node in visited:
                raise MalformedForestError(
                    f"origin {demand.origin!r}: cycle detected while assigning the "
                    f"path of demand ({demand.origin!r} -> {demand.destination!r})"
                )
            visited.add(node)
        selections.append(frozenset(chosen))
    return DemandRouting(tuple(selections))


# ---------------------------------------------------------------------------
# Master enumeration.


@dataclass(frozen=True)
class NoGoodCut:
    """Forbid every forest agreeing with all (origin, link, used) bindings."""

    bindings: frozenset[tuple[str, tuple[str, str], int]]


def exact_combination_cut(instance: Instance, forest: RoutingForest) -> NoGoodCut:
    bindings = set()
    for s in instance.origins():
        used = forest.used_links(s)
        for pair in instance.link_pairs():
            bindings.add((s, pair, 1 if pair in used else 0))
    return NoGoodCut(frozenset(bindings))


def cut_matches(cut: NoGoodCut, used_by_origin: dict[str, set[tuple[str, str]]]) -> bool:
    for s, pair, value in cut.bindings:
        used = used_by_origin.get(s, set())
        if (pair in used) != bool(value):
            return False
    return True


def simple_paths(instance: Instance, origin: str, destination: str) -> list[tuple[str, ...]]:
    """All simple paths origin -> destination, in deterministic DFS order."""
    out_links = instance.out_links()
    result: list[tuple[str, ...]] = []
    path = [origin]
    on_path = {origin}

    def visit(node: str) -> None:
        if node == destination:
            result.append(tuple(path))
            return
        for link in out_links[node]:
            if link.head in on_path:
                continue
            path.append(link.head)
            on_path.add(link.head)
            visit(link.head)
            path.pop()
            on_path.remove(link.head)

    visit(origin)
    return result


@dataclass(frozen=True)
class _OriginTree:
    load: Fraction
    paths: dict[tuple[str, str], tuple[str, ...]]
    flows: dict[tuple[str, str], Fraction]


def _origin_trees(instance: Instance, origin: str) -> Iterator[_OriginTree]:
    """Per-origin candidate trees in nondecreasing load order (best-first).

    States assign paths to the origin's demands one at a time; a partial
    assignment is compatible when every node keeps a single incoming link.
    The completion bound (each unassigned demand at its own minimum load)
    keeps emissions ordered.
    """
    demands = instance.demands_from(origin)
    caps = {(l.tail, l.head): l.capacity for l in instance.links}
    path_lists = []
    for d in demands:
        paths = simple_paths(instance, origin, d.destination)
        if not paths:
            return
        path_lists.append(paths)
    min_load = [
        min(len(p) - 1 for p in paths) * d.bandwidth
        for d, paths in zip(demands, path_lists)
    ]
    suffix_bound = [Fraction(0)] * (len(demands) + 1)
    for i in range(len(demands) - 1, -1, -1):
        suffix_bound[i] = suffix_bound[i + 1] + min_load[i]

    counter = itertools.count()
    start = (Fraction(0) + suffix_bound[0], next(counter), 0, (), {})
    heap = [start]
    while heap:
        bound, _, idx, chosen, inlink = heapq.heappop(heap)
        if idx == len(demands):
            flows: dict[tuple[str, str], Fraction] = {}
            paths: dict[tuple[str, str], tuple[str, ...]] = {}
            load = Fraction(0)
            for pos, pi in enumerate(chosen):
                d = demands[pos]
                nodes = path_lists[pos][pi]
                paths[(d.origin, d.destination)] = nodes
                load += d.bandwidth * (len(nodes) - 1)
                for a, b in zip(nodes, nodes[1:]):
                    flows[(a, b)] = flows.get((a, b), Fraction(0)) + d.bandwidth
            if all(flow <= caps[pair] for pair, flow in flows.items()):
                yield _OriginTree(load, paths, flows)
            continue
        demand = demands[idx]
        g = bound - suffix_bound[idx]
        for pi, nodes in enumerate(path_lists[idx]):
            new_inlink = dict(inlink)
            ok = True
            for a, b in zip(nodes, nodes[1:]):
                if new_inlink.get(b, a) != a:
                    ok = False
                    break
                new_inlink[b] = a
            if not ok:
                continue
            new_g = g + demand.bandwidth * (len(nodes) - 1)
            heapq.heappush(
                heap,
                (
                    new_g + suffix_bound[idx + 1],
                    next(counter),
                    idx + 1,
                    chosen + (pi,),
                    new_inlink,
                ),
            )


class _LazyStream:
    """Memoized pull access over a generator of origin trees."""

    def __init__(self, gen: Iterator[_OriginTree]):
        self._gen = gen
        self._items: list[_OriginTree] = []
        self._done = False

    def get(self, k: int) -> _OriginTree | None:
        while len(self._items) <= k and not self._done:
            try:
                self._items.append(next(self._gen))
            except StopIteration:
                self._done = True
        return self._items[k] if k < len(self._items) else None


def master_search(
    instance: Instance,
    cuts: Sequence[NoGoodCut] = (),
    incumbent_bound: Fraction | None = None,
    stats: dict | None = None,
) -> Iterator[RoutingForest]:
    """Stream every capacity-feasible routing forest, best objective first.

    Per-origin trees are enumerated independently and combined lazily through
    a sorted-sums merge, so the coupling capacity constraint and the no-good
    cuts are only checked on emission.  `cuts` is read live: entries appended
    while iterating suppress later candidates.  An empty stream means the
    master is infeasible.
    """
    if stats is None:
        stats = {}
    stats.setdefault("combinations", 0)
    origins = instance.origins()
    caps = {(l.tail, l.head): l.capacity for l in instance.links}
    if not origins:
        empty = RoutingForest(flows={}, paths={})
        used: dict[str, set[tuple[str, str]]] = {}
        stats["combinations"] += 1
        if not any(cut_matches(c, used) for c in cuts):
            yield empty
        return
    streams = [_LazyStream(_origin_trees(instance, s)) for s in origins]
    first = [st.get(0) for st in streams]
    if any(t is None for t in first):
        return
    m = len(origins)
    start_total = sum((t.load for t in first), Fraction(0))
    heap: list[tuple[Fraction, tuple[int, ...]]] = [(start_total, (0,) * m)]
    seen = {(0,) * m}
    while heap:
        total, idx = heapq.heappop(heap)
        if incumbent_bound is not None and total > incumbent_bound:
            return
        trees = [streams[i].get(idx[i]) for i in range(m)]
        stats["combinations"] += 1
        loads: dict[tuple[str, str], Fraction] = {}
        for tree in trees:
            for pair, flow in tree.flows.items():
                loads[pair] = loads.get(pair, Fraction(0)) + flow
        feasible = all(load <= caps[pair] for pair, load in loads.items())
        if feasible:
            used_by_origin = {s: set(t.flows) for s, t in zip(origins, trees)}
            if not any(cut_matches(c, used_by_origin) for c in cuts):
                flows = {s: dict(t.flows) for s, t in zip(origins, trees)}
                paths: dict[tuple[str, str], tuple[str, ...]] = {}
                for t in trees:
                    paths.update(t.paths)
                yield RoutingForest(flows=flows, paths=paths)
        for i in range(m):
            nxt = idx[:i] + (idx[i] + 1,) + idx[i + 1 :]
            if nxt in seen:
                continue
            tree = streams[i].get(idx[i] + 1)
            if tree is None:
                continue
            seen.add(nxt)
            heapq.heappush(heap, (total - trees[i].load + tree.load, nxt))


# ---------------------------------------------------------------------------
# Solvers.


def _verified_solution(
    instance: Instance,
    weights: WeightVector,
    forest: RoutingForest,
    diagnostics: Diagnostics,
) -> Solution:
    routed = spf.routing_from_weights(instance, weights)
    if routed != forest:
        raise RuntimeError("internal: recovered weights do not reproduce the forest")
    if spf.check_capacity(instance, routed):
        raise RuntimeError("internal: accepted forest violates capacity")
    objective = spf.evaluate_objective(instance, routed)
    return Solution("Optimal", weights, routed, objective, diagnostics)


def benders_solve(instance: Instance, config: SolverConfig | None = None) -> Solution:
    """Decomposition solve: best-first master candidates, LP weight recovery,
    no-good cuts on failures.  The first recovered candidate is optimal."""
    config = config or SolverConfig()
    started = time.perf_counter()
    cuts: list[NoGoodCut] = []
    stats: dict = {}
    stream = master_search(instance, cuts, stats=stats)
    iterations = 0
    lp_solves = 0
    grid_fallbacks = 0

    def diagnostics() -> Diagnostics:
        return Diagnostics(
            iterations=iterations,
            cuts_added=len(cuts),
            nodes_explored=stats.get("combinations", 0),
            wall_time=time.perf_counter() - started,
            details={"lp_solves": lp_solves, "grid_fallbacks": grid_fallbacks},
        )

    while True:
        if config.time_limit is not None and time.perf_counter() - started >= config.time_limit:
            return Solution("BoundsExhausted", None, None, None, diagnostics())
        if config.node_limit is not None and iterations >= config.node_limit:
            return Solution("BoundsExhausted", None, None, None, diagnostics())
        try:
            candidate = next(stream)
        except StopIteration:
            return Solution("Infeasible", None, None, None, diagnostics())
        iterations += 1
        lp_solves += 1
        recovery = lp.recover_weights(
            instance,
            candidate,
            config.eps,
            config.big_M,
            include_vacuous_rows=False,
            compute_hint=config.strengthen_cuts,
            grid_search_limit=config.grid_limit,
        )
        if recovery.ok:
            if recovery.stage == "exhaustive":
                grid_fallbacks += 1
            return _verified_solution(instance, recovery.weights, candidate, diagnostics())
        if recovery.status == "grid_infeasible":
            grid_fallbacks += 1
        if config.strengthen_cuts and recovery.status == "lp_infeasible" and recovery.bindings:
            cuts.append(NoGoodCut(recovery.bindings))
        else:
            cuts.append(exact_combination_cut(instance, candidate))


def brute_force_solve(instance: Instance, grid_limit: int = 200_000) -> Solution:
    """Exhaustive reference: evaluate the routing oracle on every admissible
    weight vector, lexicographically over the fixed link order, keeping the
    first vector attaining the minimum objective."""
    started = time.perf_counter()
    points = grid_points(instance.w_min, instance.w_max, instance.weight_resolution)
    pairs = instance.link_pairs()
    total = len(points) ** len(pairs) if pairs else 1
    if total > grid_limit:
        raise GridSearchLimitError(
            f"{total} weight combinations exceed grid_limit {grid_limit}"
        )

    cg = spf.CompiledGraph(instance)
    wscale = 1
    for p in points:
        wscale = wscale * p.denominator // math.gcd(wscale, p.denominator)
    point_units = [int(p * wscale) for p in points]
    dscale = 1
    for d in instance.demands:
        dscale = dscale * d.bandwidth.denominator // math.gcd(dscale, d.bandwidth.denominator)
    demand_units = [int(d.bandwidth * dscale) for d in instance.demands]
    cap_scaled = [l.capacity * dscale for l in instance.links]
    groups = []
    for origin in instance.origins():
        src = cg.index[origin]
        members = [
            (cg.index[d.destination], demand_units[k])
            for k, d in enumerate(instance.demands)
            if d.origin == origin
        ]
        groups.append((src, members))

    edge_of = {(t, h): e for e, (t, h) in enumerate(zip(cg.tails, cg.heads))}
    best_units: int | None = None
    best_combo: tuple[int, ...] | None = None
    evaluated = 0
    n_links = len(pairs)
    for combo in itertools.product(range(len(points)), repeat=n_links):
        evaluated += 1
        wunits = [point_units[i] for i in combo]
        loads = [0] * n_links
        objective_units = 0
        ok = True
        for src, members in groups:
            dist = spf.dijkstra_units(cg, wunits, src)
            counts = spf.count_paths_capped(cg, wunits, dist)
            for dest, units in members:
                if dist[dest] is None or counts[dest] != 1:
                    ok = False
                    break
                node_path = spf.walk_back_unique(cg, wunits, dist, src, dest)
                objective_units += units * (len(node_path) - 1)
                for a, b in zip(node_path, node_path[1:]):
                    loads[edge_of[(a, b)]] += units
            if not ok:
                break
        if not ok:
            continue
        if any(loads[e] > cap_scaled[e] for e in range(n_links)):
            continue
        if best_units is None or objective_units < best_units:
            best_units = objective_units
            best_combo = combo

    diagnostics = Diagnostics(
        iterations=evaluated,
        cuts_added=0,
        nodes_explored=evaluated,
        wall_time=time.perf_counter() - started,
        details={"grid_points": len(points)},
    )
    if best_combo is None:
        return Solution("Infeasible", None, None, None, diagnostics)
    weights = WeightVector({pair: points[i] for pair, i in zip(pairs, best_combo)})
    forest = spf.routing_from_weights(instance, weights)
    objective = spf.evaluate_objective(instance, forest)
    assert objective == Fraction(best_units, dscale)
    return Solution("Optimal", weights, forest, objective, diagnostics)


# ---------------------------------------------------------------------------
# Solution export.


def _num_json(x: Fraction) -> str:
    s = format_number(x)
    return json.dumps(s) if "/" in s else s


def solution_to_json(instance: Instance, solution: Solution) -> str:
    out = ["{\n"]
    out.append(f'  "status": {json.dumps(solution.status)},\n')
    if solution.objective is not None:
        out.append(f'  "objective": {_num_json(solution.objective)},\n')
    else:
        out.append('  "objective": null,\n')
    if solution.forest is not None:
        util = spf.max_utilization(instance, solution.forest)
        out.append(f'  "max_utilization": {_num_json(util)},\n')
    else:
        out.append('  "max_utilization": null,\n')
    if solution.weights is not None:
        rows = [
            f'    {{"tail": {json.dumps(t)}, "head": {json.dumps(h)}, '
            f'"weight": {_num_json(w)}}}'
            for (t, h), w in sorted(solution.weights.values.items())
        ]
        out.append('  "weights": [\n' + ",\n".join(rows) + "\n  ],\n")
    else:
        out.append('  "weights": null,\n')
    if solution.forest is not None:
        rows = []
        for demand in instance.demands:
            path = solution.forest.paths[(demand.origin, demand.destination)]
            rows.append(
                f'    {{"origin": {json.dumps(demand.origin)}, '
                f'"destination": {json.dumps(demand.destination)}, '
                f'"path": {json.dumps(list(path))}}}'
            )
        out.append('  "paths": [\n' + ",\n".join(rows) + "\n  ],\n")
    else:
        out.append('  "paths": null,\n')
    d = solution.diagnostics
    out.append(
        '  "diagnostics": {'
        f'"iterations": {d.iterations}, "cuts_added": {d.cuts_added}, '
        f'"nodes_explored": {d.nodes_explored}, "wall_time": {d.wall_time:.6f}'
        "}\n"
    )
    out.append("}\n")
    return "".join(out)
