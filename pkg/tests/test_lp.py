import random
from fractions import Fraction

import pytest

from conftest import diamond, small_random, triangle, two_node
from uspr import lp, spf
from uspr.lp import (
    GridSearchLimitError,
    LinearSystem,
    maximize_margin,
    path_length_system,
    recover_weights,
    solve_feasibility,
    strictness_margin,
)
from uspr.models import Constraint, Variable
from uspr.spf import RoutingForest, WeightVector


def F(x):
    return Fraction(x)


def var(name, lb=None, ub=None):
    return Variable(name, "continuous", None if lb is None else F(lb),
                    None if ub is None else F(ub))


def row(name, terms, sense, rhs):
    return Constraint(name, tuple((n, F(c)) for n, c in terms), sense, F(rhs))


def test_bound_conflict_infeasible():
    system = LinearSystem((var("x", 0, 1),), (row("r1", [("x", 1)], ">=", 2),))
    result = solve_feasibility(system)
    assert not result.feasible
    assert result.removal_hint == ("r1",)


def test_simple_feasible_with_witness():
    system = LinearSystem(
        (var("x", 1, 10), var("y", 1, 10)),
        (row("sum", [("x", 1), ("y", 1)], "<=", 3),),
    )
    result = solve_feasibility(system)
    assert result.feasible
    assert result.assignment["x"] + result.assignment["y"] <= 3
    assert result.assignment["x"] >= 1 and result.assignment["y"] >= 1


def test_equality_rows_and_free_variables():
    system = LinearSystem(
        (var("x"), var("y", 0)),
        (
            row("e1", [("x", 1), ("y", 1)], "=", 5),
            row("e2", [("x", 1), ("y", -1)], "=", -9),
        ),
    )
    result = solve_feasibility(system)
    assert result.feasible
    assert result.assignment == {"x": F(-2), "y": F(7)}


def test_optimization_maximize_and_minimize():
    base = (
        (var("x", 0, 4), var("y", 0, 4)),
        (row("r", [("x", 1), ("y", 2)], "<=", 6),),
    )
    mx = solve_feasibility(LinearSystem(*base, objective=(("x", F(1)), ("y", F(1))),
                                        maximize=True))
    assert mx.objective_value == 5  # x=4, y=1
    mn = solve_feasibility(LinearSystem(*base, objective=(("x", F(1)), ("y", F(1))),
                                        maximize=False))
    assert mn.objective_value == 0


def test_unbounded_objective_raises():
    system = LinearSystem(
        (var("x", 0),), (), objective=(("x", F(1)),), maximize=True
    )
    with pytest.raises(lp.UnboundedObjectiveError):
        solve_feasibility(system)


def test_random_systems_built_around_witness_are_feasible():
    rng = random.Random(5)
    for _ in range(60):
        nvars = rng.randint(1, 5)
        names = [f"v{i}" for i in range(nvars)]
        point = {n: F(rng.randint(-5, 5)) for n in names}
        variables = tuple(
            var(n, point[n] - rng.randint(0, 3), point[n] + rng.randint(0, 3))
            for n in names
        )
        rows = []
        for r in range(rng.randint(1, 6)):
            terms = [(n, rng.randint(-3, 3)) for n in names if rng.random() < 0.7]
            if not terms:
                continue
            lhs = sum(F(c) * point[n] for n, c in terms)
            sense = ("<=", ">=", "=")[rng.randrange(3)]
            slack = F(rng.randint(0, 4))
            rhs = lhs + slack if sense == "<=" else lhs - slack if sense == ">=" else lhs
            rows.append(row(f"r{r}", terms, sense, rhs))
        system = LinearSystem(variables, tuple(rows))
        result = solve_feasibility(system)
        assert result.feasible
        # independent substitution re-check
        for c in rows:
            lhs = sum(coef * result.assignment[n] for n, coef in c.terms)
            assert (lhs <= c.rhs if c.sense == "<=" else
                    lhs >= c.rhs if c.sense == ">=" else lhs == c.rhs)


def test_contradictory_rows_detected_and_hint_restores_feasibility():
    rng = random.Random(9)
    for _ in range(20):
        nvars = rng.randint(1, 4)
        names = [f"v{i}" for i in range(nvars)]
        variables = tuple(var(n, 0, 10) for n in names)
        pick = names[rng.randrange(nvars)]
        a = rng.randint(2, 8)
        rows = (
            row("lo", [(pick, 1)], ">=", a),
            row("hi", [(pick, 1)], "<=", a - 1),
            row("extra", [(n, 1) for n in names], "<=", 10 * nvars),
        )
        system = LinearSystem(variables, rows)
        result = solve_feasibility(system)
        assert not result.feasible
        remaining = tuple(r for r in rows if r.name not in result.removal_hint)
        assert solve_feasibility(LinearSystem(variables, remaining)).feasible
        assert set(result.conflict_core) == {"lo", "hi"}


def forest_via(instance, weights):
    return spf.routing_from_weights(instance, WeightVector(weights))


def test_recover_weights_diamond():
    inst = diamond()
    forest = forest_via(inst, {("s", "a"): F(1), ("a", "t"): F(1),
                               ("s", "b"): F(1), ("b", "t"): F(2)})
    result = recover_weights(inst, forest)
    assert result.ok
    assert spf.routing_from_weights(inst, result.weights) == forest


def test_recover_diamond_system_feasible_with_half_eps():
    inst = diamond()
    forest = forest_via(inst, {("s", "a"): F(1), ("a", "t"): F(1),
                               ("s", "b"): F(1), ("b", "t"): F(2)})
    system, _ = path_length_system(inst, forest, Fraction(1, 2), F(31))
    result = solve_feasibility(system)
    assert result.feasible
    # the hand witness is admissible for this system
    witness = dict(result.assignment)
    witness.update({"w_s_a": F(1), "w_a_t": F(1), "w_s_b": F(1), "w_b_t": F(2),
                    "l_s_s": F(0), "l_s_a": F(1), "l_s_b": F(1), "l_s_t": F(2)})
    for c in system.rows:
        lhs = sum(coef * witness[n] for n, coef in c.terms)
        assert (lhs <= c.rhs if c.sense == "<=" else
                lhs >= c.rhs if c.sense == ">=" else lhs == c.rhs)


def test_recover_single_link_trivial():
    inst = two_node()
    forest = forest_via(inst, {("a", "b"): F(4)})
    result = recover_weights(inst, forest)
    assert result.ok


def test_recover_forced_long_path_with_fixed_weights_infeasible():
    inst = diamond(w_min=2, w_max=2)
    forced = RoutingForest(
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    result = recover_weights(inst, forced, compute_hint=True)
    assert result.status == "lp_infeasible"
    assert result.removal_hint  # best-effort hint present
    assert result.bindings  # cut support extracted from the core


def test_recover_subpath_violating_forest_always_infeasible():
    # Two used incoming links at one node for the same origin contradict the
    # strict/equality pair regardless of the weights.
    inst = diamond()
    bad = RoutingForest(
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1),
                     ("s", "b"): F(1), ("b", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    assert recover_weights(inst, bad).status == "lp_infeasible"


def test_recover_round_trip_on_random_instances():
    for seed in range(25):
        inst = small_random(seed)
        try:
            forest = spf.routing_from_weights(inst, spf.hop_count_weights(inst))
        except (spf.NonUniqueRoutingError, spf.UnreachableDemandError):
            continue
        result = recover_weights(inst, forest)
        assert result.ok
        assert spf.routing_from_weights(inst, result.weights) == forest


def test_maximize_margin_diamond_at_least_one():
    inst = diamond()
    forest = forest_via(inst, {("s", "a"): F(1), ("a", "t"): F(1),
                               ("s", "b"): F(1), ("b", "t"): F(3)})
    result = maximize_margin(inst, forest)
    assert result.ok
    assert result.lp_margin >= 1
    realized = strictness_margin(inst, forest, result.weights)
    assert realized is not None and realized >= 1


def test_maximize_margin_fixed_geometry():
    inst = triangle(w_min=3, w_max=3)
    forest = forest_via(inst, {("s", "a"): F(3), ("a", "t"): F(3), ("s", "t"): F(3)})
    result = maximize_margin(inst, forest)
    assert result.ok
    assert result.lp_margin == 3  # the only strict slack the geometry allows
    assert strictness_margin(inst, forest, result.weights) == 3


def test_maximize_margin_propagates_infeasible():
    inst = diamond(w_min=2, w_max=2)
    forced = RoutingForest(
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    assert maximize_margin(inst, forced).status == "lp_infeasible"


def test_margin_at_least_eps_whenever_feasible():
    for seed in range(12):
        inst = small_random(seed)
        try:
            forest = spf.routing_from_weights(inst, spf.hop_count_weights(inst))
        except (spf.NonUniqueRoutingError, spf.UnreachableDemandError):
            continue
        result = maximize_margin(inst, forest)
        assert result.ok
        eps = lp.default_recovery_eps(inst)
        assert result.lp_margin is None or result.lp_margin >= eps


def _fourier_motzkin_feasible(variables, rows) -> bool:
    """Independent exact feasibility oracle: eliminate variables one by one.

    All constraints are normalized to <= form (equalities become two
    inequalities, bounds become rows); eliminating x from a system keeps it
    feasible iff every (lower bound on x) <= every (upper bound on x).
    """
    names = [v.name for v in variables]
    ineqs = []  # ({name: coef}, rhs) meaning sum coef*x <= rhs
    for v in variables:
        if v.lb is not None:
            ineqs.append(({v.name: F(-1)}, -v.lb))
        if v.ub is not None:
            ineqs.append(({v.name: F(1)}, v.ub))
    for r in rows:
        coeffs = {n: c for n, c in r.terms}
        if r.sense in ("<=", "="):
            ineqs.append((dict(coeffs), r.rhs))
        if r.sense in (">=", "="):
            ineqs.append(({n: -c for n, c in coeffs.items()}, -r.rhs))
    for name in names:
        uppers, lowers, rest = [], [], []
        for coeffs, rhs in ineqs:
            c = coeffs.get(name, F(0))
            reduced = {n: v for n, v in coeffs.items() if n != name and v != 0}
            if c > 0:
                uppers.append(({n: v / c for n, v in reduced.items()}, rhs / c))
            elif c < 0:
                lowers.append(({n: v / c for n, v in reduced.items()}, rhs / c))
            else:
                rest.append((reduced, rhs))
        for lo_coeffs, lo_rhs in lowers:  # x >= lo_rhs - lo_coeffs . x_rest
            for up_coeffs, up_rhs in uppers:
                combined = dict(up_coeffs)
                for n, v in lo_coeffs.items():
                    combined[n] = combined.get(n, F(0)) - v
                rest.append((combined, up_rhs - lo_rhs))
        ineqs = rest
    return all(rhs >= 0 for coeffs, rhs in ineqs if not coeffs)


def test_simplex_agrees_with_fourier_motzkin():
    rng = random.Random(1234)
    feasible_seen = infeasible_seen = 0
    for _ in range(300):
        nvars = rng.randint(1, 4)
        names = [f"v{i}" for i in range(nvars)]
        variables = tuple(
            var(n, rng.choice([None, rng.randint(-4, 0)]),
                rng.choice([None, rng.randint(1, 5)]))
            for n in names
        )
        rows = []
        for r in range(rng.randint(1, 5)):
            terms = [(n, rng.randint(-3, 3)) for n in names if rng.random() < 0.8]
            terms = [(n, c) for n, c in terms if c]
            if not terms:
                continue
            sense = ("<=", ">=", "=")[rng.randrange(3)]
            rows.append(row(f"r{r}", terms, sense, rng.randint(-6, 6)))
        system = LinearSystem(variables, tuple(rows))
        got = solve_feasibility(system, with_hint=False).feasible
        want = _fourier_motzkin_feasible(variables, rows)
        assert got == want
        feasible_seen += got
        infeasible_seen += not got
    assert feasible_seen > 50 and infeasible_seen > 50


def test_grid_search_fallback_both_ways():
    inst = diamond(w_min=1, w_max=2)
    realizable = RoutingForest(
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    witness = lp._grid_search(inst, realizable, limit=10_000)
    assert witness is not None
    assert spf.routing_from_weights(inst, witness) == realizable
    never = RoutingForest(  # two used incoming links: no weights realize it
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1),
                     ("s", "b"): F(1), ("b", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    assert lp._grid_search(inst, never, limit=10_000) is None


def test_pivot_budget_resource_error():
    system = LinearSystem(
        (var("x", 0, 4), var("y", 0, 4)),
        (row("r", [("x", 1), ("y", 2)], ">=", 3),),
        objective=(("x", F(1)), ("y", F(1))), maximize=True,
    )
    with pytest.raises(lp.SimplexResourceError):
        lp._Simplex(system, max_pivots=0).solve()


def test_grid_search_limit_refusal():
    inst = diamond()
    forced = RoutingForest(
        flows={"s": {("s", "a"): F(1), ("a", "t"): F(1)}},
        paths={("s", "t"): ("s", "a", "t")},
    )
    with pytest.raises(GridSearchLimitError):
        lp._grid_search(inst, forced, limit=3)


def test_recover_stage_progression(monkeypatch):
    # Force the direct snap to be rejected: recovery must fall through to the
    # margin stage, and with that rejected too, to the exhaustive stage.
    inst = diamond()
    forest = forest_via(inst, {("s", "a"): F(1), ("a", "t"): F(1),
                               ("s", "b"): F(1), ("b", "t"): F(2)})
    real_matches = lp._matches_forest
    calls = {"n": 0}

    def reject_first(instance, weights, target):
        calls["n"] += 1
        if calls["n"] == 1:
            return False
        return real_matches(instance, weights, target)

    monkeypatch.setattr(lp, "_matches_forest", reject_first)
    result = recover_weights(inst, forest)
    assert result.ok and result.stage == "margin"

    calls["n"] = 0

    def reject_two(instance, weights, target):
        calls["n"] += 1
        if calls["n"] <= 2:
            return False
        return real_matches(instance, weights, target)

    monkeypatch.setattr(lp, "_matches_forest", reject_two)
    result = recover_weights(inst, forest)
    assert result.ok and result.stage == "exhaustive"
    assert spf.routing_from_weights(inst, result.weights) == forest


def test_vacuous_rows_do_not_change_answers():
    for seed in range(15):
        inst = small_random(seed)
        try:
            forest = spf.routing_from_weights(inst, spf.hop_count_weights(inst))
        except (spf.NonUniqueRoutingError, spf.UnreachableDemandError):
            continue
        full = recover_weights(inst, forest, include_vacuous_rows=True)
        slim = recover_weights(inst, forest, include_vacuous_rows=False)
        assert full.status == slim.status == "ok"
