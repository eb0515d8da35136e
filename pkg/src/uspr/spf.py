"""Exact shortest-path oracle: lengths, uniqueness, routing, evaluation.

All decisions are made in exact arithmetic.  Weights live on the instance's
resolution grid; internally they are scaled to integers (by the common
denominator of the weight values), so distance comparisons and uniqueness
checks never involve an epsilon.

Uniqueness is decided by counting shortest paths over the tight-edge DAG
(dist[j] == dist[i] + w_ij), with the count capped at two.  With strictly
positive weights the tight-edge graph is acyclic and ordered by distance, so
the count is a single linear pass and stays polynomial; it is validated
against exhaustive path enumeration in the tests.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .instance import Demand, Instance
from .rational import format_number, on_grid, parse_number, snap_to_grid


class InvalidWeightsError(ValueError):
    """Weight vector does not fit the instance (missing links or off-grid)."""


class UnreachablePathError(ValueError):
    def __init__(self, origin: str, destination: str):
        self.origin = origin
        self.destination = destination
        super().__init__(f"no path from {origin!r} to {destination!r}")


class UnreachableDemandError(ValueError):
    def __init__(self, demand: Demand):
        self.demand = demand
        super().__init__(
            f"demand ({demand.origin!r} -> {demand.destination!r}) has no routing path"
        )


class NonUniqueRoutingError(ValueError):
    def __init__(self, demand: Demand):
        self.demand = demand
        super().__init__(
            f"demand ({demand.origin!r} -> {demand.destination!r}) has two or more "
            "shortest paths"
        )


class ZeroCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class WeightVector:
    """Per-link weights; each value must be a grid point of its instance."""

    values: dict[tuple[str, str], Fraction]


@dataclass(frozen=True)
class PathLengths:
    """Shortest-path lengths from one origin; unreachable nodes are absent."""

    origin: str
    dist: dict[str, Fraction]


@dataclass(frozen=True)
class RoutingForest:
    """Per-origin routing trees with aggregated flows plus per-demand paths.

    `flows[s][(i, j)]` is the total bandwidth of demands from origin s carried
    by link (i, j); a link is "used" by s exactly when it has an entry.
    `paths[(s, t)]` is the node sequence routing the demand s -> t.
    """

    flows: dict[str, dict[tuple[str, str], Fraction]]
    paths: dict[tuple[str, str], tuple[str, ...]]

    def used_links(self, origin: str) -> set[tuple[str, str]]:
        return set(self.flows.get(origin, {}))


def weight_violations(instance: Instance, weights: WeightVector) -> list[str]:
    out = []
    pairs = set(instance.link_pairs())
    for pair in pairs:
        if pair not in weights.values:
            out.append(f"link {pair}: missing weight")
    for pair, value in weights.values.items():
        if pair not in pairs:
            out.append(f"link {pair}: not an instance link")
        elif not on_grid(value, instance.w_min, instance.w_max, instance.weight_resolution):
            out.append(f"link {pair}: weight {value} is not an admissible grid point")
    return out


def _check_weights(instance: Instance, weights: WeightVector) -> None:
    problems = weight_violations(instance, weights)
    if problems:
        raise InvalidWeightsError("; ".join(problems))


# ---------------------------------------------------------------------------
# Compiled integer-unit core.  Shared by the public operations and by the
# brute-force solver, which calls it in a tight loop.


class CompiledGraph:
    """Index-based adjacency view of an instance, for the hot paths."""

    __slots__ = ("nodes", "index", "tails", "heads", "out_links", "in_links")

    def __init__(self, instance: Instance):
        self.nodes = instance.nodes
        self.index = {n: i for i, n in enumerate(instance.nodes)}
        self.tails = [self.index[l.tail] for l in instance.links]
        self.heads = [self.index[l.head] for l in instance.links]
        n = len(instance.nodes)
        self.out_links: list[list[int]] = [[] for _ in range(n)]
        self.in_links: list[list[int]] = [[] for _ in range(n)]
        for e, (t, h) in enumerate(zip(self.tails, self.heads)):
            self.out_links[t].append(e)
            self.in_links[h].append(e)


def scale_weights(instance: Instance, weights: WeightVector) -> tuple[list[int], int]:
    """Weights as integers in 1/scale units, ordered like instance.links."""
    ordered = [weights.values[(l.tail, l.head)] for l in instance.links]
    scale = 1
    for w in ordered:
        scale = scale * w.denominator // math.gcd(scale, w.denominator)
    return [int(w * scale) for w in ordered], scale


def dijkstra_units(cg: CompiledGraph, wunits: list[int], src: int) -> list:
    """Exact integer Dijkstra; unreachable entries are None."""
    dist: list = [None] * len(cg.nodes)
    dist[src] = 0
    heap = [(0, src)]
    while heap:
        d, node = heapq.heappop(heap)
        if d != dist[node]:
            continue
        for e in cg.out_links[node]:
            nd = d + wunits[e]
            head = cg.heads[e]
            if dist[head] is None or nd < dist[head]:
                dist[head] = nd
                heapq.heappush(heap, (nd, head))
    return dist


def count_paths_capped(cg: CompiledGraph, wunits: list[int], dist: list) -> list[int]:
    """Shortest-path counts from the Dijkstra source, capped at 2 per node."""
    order = sorted(
        (i for i in range(len(cg.nodes)) if dist[i] is not None),
        key=lambda i: (dist[i], i),
    )
    counts = [0] * len(cg.nodes)
    if order:
        counts[order[0]] = 1
    for node in order:
        if counts[node]:
            continue
        total = 0
        for e in cg.in_links[node]:
            tail = cg.tails[e]
            if dist[tail] is not None and dist[tail] + wunits[e] == dist[node]:
                total += counts[tail]
                if total >= 2:
                    break
        counts[node] = min(total, 2)
    return counts


def walk_back_unique(
    cg: CompiledGraph, wunits: list[int], dist: list, src: int, dest: int
) -> list[int]:
    """Node-index sequence of the unique shortest path (caller checked count==1)."""
    path = [dest]
    node = dest
    while node != src:
        tight = [
            e
            for e in cg.in_links[node]
            if dist[cg.tails[e]] is not None and dist[cg.tails[e]] + wunits[e] == dist[node]
        ]
        assert len(tight) == 1, "walk on a non-unique shortest-path DAG"
        node = cg.tails[tight[0]]
        path.append(node)
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# Public operations.


def shortest_path_lengths(instance: Instance, weights: WeightVector, origin: str) -> PathLengths:
    """Exact shortest-path lengths from `origin` under the given weights."""
    _check_weights(instance, weights)
    if origin not in instance.node_index():
        raise ValueError(f"unknown origin {origin!r}")
    cg = CompiledGraph(instance)
    wunits, scale = scale_weights(instance, weights)
    dist = dijkstra_units(cg, wunits, cg.index[origin])
    out = {
        node: Fraction(dist[i], scale)
        for i, node in enumerate(instance.nodes)
        if dist[i] is not None
    }
    return PathLengths(origin=origin, dist=out)


def count_shortest_paths(
    instance: Instance, weights: WeightVector, origin: str, destination: str
) -> int:
    """1 if exactly one minimum-length path exists, 2 for two or more.

    Unreachable destinations raise UnreachablePathError rather than counting
    as zero.
    """
    _check_weights(instance, weights)
    idx = instance.node_index()
    if origin not in idx or destination not in idx:
        raise ValueError("unknown origin or destination node")
    if origin == destination:
        return 1
    cg = CompiledGraph(instance)
    wunits, _scale = scale_weights(instance, weights)
    dist = dijkstra_units(cg, wunits, cg.index[origin])
    if dist[cg.index[destination]] is None:
        raise UnreachablePathError(origin, destination)
    return count_paths_capped(cg, wunits, dist)[cg.index[destination]]


def routing_from_weights(instance: Instance, weights: WeightVector) -> RoutingForest:
    """Route every demand along its unique shortest path.

    Raises NonUniqueRoutingError if any demand has two or more shortest paths
    and UnreachableDemandError if some demand has none.
    """
    _check_weights(instance, weights)
    cg = CompiledGraph(instance)
    wunits, _scale = scale_weights(instance, weights)
    flows: dict[str, dict[tuple[str, str], Fraction]] = {}
    paths: dict[tuple[str, str], tuple[str, ...]] = {}
    for origin in instance.origins():
        src = cg.index[origin]
        dist = dijkstra_units(cg, wunits, src)
        counts = count_paths_capped(cg, wunits, dist)
        tree: dict[tuple[str, str], Fraction] = {}
        for demand in instance.demands_from(origin):
            di = cg.index[demand.destination]
            if dist[di] is None:
                raise UnreachableDemandError(demand)
            if counts[di] != 1:
                raise NonUniqueRoutingError(demand)
            node_path = walk_back_unique(cg, wunits, dist, src, di)
            names = tuple(instance.nodes[i] for i in node_path)
            paths[(demand.origin, demand.destination)] = names
            for a, b in zip(names, names[1:]):
                tree[(a, b)] = tree.get((a, b), Fraction(0)) + demand.bandwidth
        flows[origin] = tree
    return RoutingForest(flows=flows, paths=paths)


def evaluate_objective(instance: Instance, forest: RoutingForest) -> Fraction:
    """Total carried load: the sum of all per-origin link flows."""
    total = Fraction(0)
    for tree in forest.flows.values():
        for flow in tree.values():
            total += flow
    return total


@dataclass(frozen=True)
class CapacityViolation:
    link: tuple[str, str]
    load: Fraction
    capacity: Fraction

    @property
    def excess(self) -> Fraction:
        return self.load - self.capacity


def link_loads(forest: RoutingForest) -> dict[tuple[str, str], Fraction]:
    loads: dict[tuple[str, str], Fraction] = {}
    for tree in forest.flows.values():
        for pair, flow in tree.items():
            loads[pair] = loads.get(pair, Fraction(0)) + flow
    return loads


def check_capacity(instance: Instance, forest: RoutingForest) -> list[CapacityViolation]:
    """Every link whose carried load strictly exceeds its capacity."""
    loads = link_loads(forest)
    out = []
    for link in instance.links:
        load = loads.get((link.tail, link.head), Fraction(0))
        if load > link.capacity:
            out.append(CapacityViolation((link.tail, link.head), load, link.capacity))
    return out


def max_utilization(instance: Instance, forest: RoutingForest) -> Fraction:
    """max over links of load/capacity; 0 when nothing is loaded."""
    loads = link_loads(forest)
    best = Fraction(0)
    caps = {(l.tail, l.head): l.capacity for l in instance.links}
    for pair, load in loads.items():
        if load == 0:
            continue
        cap = caps[pair]
        if cap == 0:
            raise ZeroCapacityError(f"link {pair} carries load {load} but has zero capacity")
        best = max(best, load / cap)
    return best


def hop_count_weights(instance: Instance) -> WeightVector:
    """Uniform weights: the grid point closest to 1 inside the bounds."""
    value = snap_to_grid(
        Fraction(1), instance.w_min, instance.w_max, instance.weight_resolution
    )
    return WeightVector({(l.tail, l.head): value for l in instance.links})


def inv_cap_weights(instance: Instance) -> WeightVector:
    """Weights proportional to max_capacity / capacity, clamped to the grid.

    The raw value w_min * max_capacity / c_ij is snapped to the nearest grid
    point inside [w_min, w_max]; links with zero capacity are an error.
    """
    if not instance.links:
        return WeightVector({})
    for link in instance.links:
        if link.capacity == 0:
            raise ZeroCapacityError(
                f"link ({link.tail!r}, {link.head!r}) has zero capacity"
            )
    max_cap = max(l.capacity for l in instance.links)
    values = {}
    for link in instance.links:
        raw = instance.w_min * max_cap / link.capacity
        values[(link.tail, link.head)] = snap_to_grid(
            raw, instance.w_min, instance.w_max, instance.weight_resolution
        )
    return WeightVector(values)


def forest_violations(instance: Instance, forest: RoutingForest) -> list[str]:
    """Check every routing-forest invariant; empty list means valid."""
    out = []
    origins = instance.origins()
    for origin in forest.flows:
        if origin not in origins:
            out.append(f"origin {origin!r}: no demands originate here")
    for origin in origins:
        if origin not in forest.flows:
            out.append(f"origin {origin!r}: tree missing")
            continue
        tree = forest.flows[origin]
        d_s = instance.origin_bandwidth(origin)
        pairs = set(instance.link_pairs())
        in_used: dict[str, list[tuple[str, str]]] = {}
        for pair, flow in tree.items():
            if pair not in pairs:
                out.append(f"origin {origin!r}: {pair} is not an instance link")
                continue
            if flow <= 0:
                out.append(f"origin {origin!r}: link {pair} has non-positive flow {flow}")
            if flow > d_s:
                out.append(
                    f"origin {origin!r}: link {pair} flow {flow} exceeds origin total {d_s}"
                )
            in_used.setdefault(pair[1], []).append(pair)
        dests = set(instance.destinations_from(origin))
        for node in instance.nodes:
            indeg = len(in_used.get(node, []))
            if node == origin and indeg != 0:
                out.append(f"origin {origin!r}: root has {indeg} used incoming links")
            elif node in dests and indeg != 1:
                out.append(
                    f"origin {origin!r}: destination {node!r} has {indeg} used incoming links"
                )
            elif node != origin and node not in dests and indeg > 1:
                out.append(f"origin {origin!r}: node {node!r} has {indeg} used incoming links")
        # Flow conservation with the origin supply d_s and sinks d_k.
        sink = {d.destination: d.bandwidth for d in instance.demands_from(origin)}
        for node in instance.nodes:
            inflow = sum((f for (i, j), f in tree.items() if j == node), Fraction(0))
            outflow = sum((f for (i, j), f in tree.items() if i == node), Fraction(0))
            expected = -d_s if node == origin else sink.get(node, Fraction(0))
            if inflow - outflow != expected:
                out.append(
                    f"origin {origin!r}: flow balance at {node!r} is "
                    f"{inflow - outflow}, expected {expected}"
                )
    wanted = {(d.origin, d.destination) for d in instance.demands}
    for key in forest.paths:
        if key not in wanted:
            out.append(f"path {key}: no such demand")
    for demand in instance.demands:
        key = (demand.origin, demand.destination)
        path = forest.paths.get(key)
        if path is None:
            out.append(f"path {key}: missing")
            continue
        if len(path) < 2 or path[0] != demand.origin or path[-1] != demand.destination:
            out.append(f"path {key}: endpoints do not match the demand")
            continue
        if len(set(path)) != len(path):
            out.append(f"path {key}: repeats a node")
        tree = forest.flows.get(demand.origin, {})
        for a, b in zip(path, path[1:]):
            if (a, b) not in tree:
                out.append(f"path {key}: uses link ({a!r}, {b!r}) absent from the tree")
            elif tree[(a, b)] < demand.bandwidth:
                out.append(f"path {key}: link ({a!r}, {b!r}) carries less than the demand")
    return out


def forest_from_paths(instance: Instance, paths: dict[tuple[str, str], tuple[str, ...]]) -> RoutingForest:
    """Aggregate per-demand node paths into per-origin trees with flows."""
    flows: dict[str, dict[tuple[str, str], Fraction]] = {o: {} for o in instance.origins()}
    by_key = {(d.origin, d.destination): d for d in instance.demands}
    for key, path in paths.items():
        demand = by_key.get(key)
        if demand is None:
            raise ValueError(f"path {key}: no such demand")
        tree = flows[demand.origin]
        for a, b in zip(path, path[1:]):
            tree[(a, b)] = tree.get((a, b), Fraction(0)) + demand.bandwidth
    return RoutingForest(flows=flows, paths=dict(paths))


# ---------------------------------------------------------------------------
# Weight-vector file I/O and the forest report used by the CLI.


def save_weights(weights: WeightVector) -> str:
    items = sorted(weights.values.items())
    rows = [
        f'  {{"tail": {json.dumps(t)}, "head": {json.dumps(h)}, '
        f'"weight": {_weight_json(w)}}}'
        for (t, h), w in items
    ]
    return "[\n" + ",\n".join(rows) + "\n]\n"


def _weight_json(w: Fraction) -> str:
    s = format_number(w)
    return json.dumps(s) if "/" in s else s


def load_weights(text: str) -> WeightVector:
    try:
        raw = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise InvalidWeightsError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise InvalidWeightsError("weights file must be a JSON array")
    values = {}
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise InvalidWeightsError(f"weights[{i}]: must be an object")
        try:
            tail = item["tail"]
            head = item["head"]
            weight = parse_number(item["weight"], f"weights[{i}].weight")
        except KeyError as exc:
            raise InvalidWeightsError(f"weights[{i}]: missing field {exc}") from exc
        if not isinstance(tail, str) or not isinstance(head, str):
            raise InvalidWeightsError(f"weights[{i}]: tail and head must be strings")
        values[(tail, head)] = weight
    return WeightVector(values)


def render_forest(instance: Instance, forest: RoutingForest) -> str:
    """Plain-text forest report: per-demand paths, then per-origin flows."""
    lines = []
    for demand in instance.demands:
        path = forest.paths.get((demand.origin, demand.destination))
        route = " ".join(path) if path else "(missing)"
        lines.append(
            f"demand {demand.origin}->{demand.destination} "
            f"(bandwidth {format_number(demand.bandwidth)}): {route}"
        )
    for origin in instance.origins():
        tree = forest.flows.get(origin, {})
        lines.append(f"origin {origin}:")
        for (a, b), flow in sorted(tree.items()):
            lines.append(f"  link {a}->{b} flow {format_number(flow)}")
    return "\n".join(lines) + "\n"
