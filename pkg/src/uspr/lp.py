"""Exact linear feasibility: the weight-recovery subproblem.

Given a fixed routing forest, decide whether link weights inside the bounds
and per-origin length values exist that satisfy the path-length constraints,
and recover a concrete grid weight vector when they do.

The solver is a dense two-phase primal simplex over `fractions.Fraction` with
Bland's smallest-index rule for both the entering and the leaving choice, so
pivoting is deterministic and cannot cycle.  Exact arithmetic is the point:
the strict inequalities that separate a unique shortest path from a tie must
not be blurred by floating error.  Feasible results are verified by direct
substitution before they are returned.

Weight recovery runs a three-stage policy:

 1. solve the feasibility system and snap the weights to the grid;
 2. if snapping breaks strictness, re-solve maximizing the smallest strict
    slack (the margin) and snap again;
 3. if that still fails, enumerate the weight grid for this forest (bounded
    by a combination limit), which settles grid realizability exactly.

A reported infeasibility therefore means the forest is not realizable as a
unique-shortest-path system at the requested strictness; `grid_infeasible`
(the grid has no witness although the continuous system has one) is reported
distinctly from `lp_infeasible`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .instance import Instance
from .models import Constraint, LinearModel, Variable
from .rational import format_number, frac_gcd, grid_points, parse_number, snap_to_grid
from . import spf
from .spf import RoutingForest, WeightVector


class UnboundedObjectiveError(ValueError):
    pass


class SimplexResourceError(RuntimeError):
    """Pivot count or rational bit-size exceeded the configured budget."""


class GridSearchLimitError(RuntimeError):
    """Exhaustive grid verification would exceed the combination limit."""


@dataclass(frozen=True)
class LinearSystem:
    """Continuous variables with bounds, sparse rows, optional objective."""

    variables: tuple[Variable, ...]
    rows: tuple[Constraint, ...]
    objective: tuple[tuple[str, Fraction], ...] = ()
    maximize: bool = True


@dataclass(frozen=True)
class Feasible:
    assignment: dict[str, Fraction]
    objective_value: Fraction | None = None

    @property
    def feasible(self) -> bool:
        return True


@dataclass(frozen=True)
class Infeasible:
    """Infeasibility certificate with a best-effort repair hint.

    `removal_hint` is a set of row names whose removal restores feasibility
    (verified).  `conflict_core` is one minimal infeasible subsystem found by
    a deletion filter; both are empty when hint computation was skipped or
    capped.
    """

    removal_hint: tuple[str, ...] = ()
    conflict_core: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return False


def system_violations(system: LinearSystem) -> list[str]:
    out = []
    seen = {}
    for v in system.variables:
        if v.kind != "continuous":
            out.append(f"variable {v.name}: must be continuous")
        if v.name in seen:
            out.append(f"variable {v.name}: declared twice")
        seen[v.name] = v
        if v.lb is not None and v.ub is not None and v.lb > v.ub:
            out.append(f"variable {v.name}: empty bound interval")
    names = set()
    for r in system.rows:
        if r.name in names:
            out.append(f"row {r.name}: declared twice")
        names.add(r.name)
        if r.sense not in ("<=", ">=", "="):
            out.append(f"row {r.name}: unknown sense {r.sense!r}")
        for var, _ in r.terms:
            if var not in seen:
                out.append(f"row {r.name}: references undeclared {var!r}")
    for var, _ in system.objective:
        if var not in seen:
            out.append(f"objective: references undeclared {var!r}")
    return out


def system_to_model(system: LinearSystem, label: str = "SUBPROBLEM") -> LinearModel:
    """View a system as a LinearModel so it can be dumped with export_lp."""
    return LinearModel(
        label, Fraction(0), Fraction(0), system.variables, system.rows,
        system.objective,
    )


# ---------------------------------------------------------------------------
# Two-phase simplex.

_ZERO = Fraction(0)
_ONE = Fraction(1)


class _Simplex:
    def __init__(self, system: LinearSystem, max_pivots: int = 200_000,
                 max_bits: int = 1_000_000):
        problems = system_violations(system)
        if problems:
            raise ValueError("ill-formed system: " + "; ".join(problems))
        self.system = system
        self.max_pivots = max_pivots
        self.max_bits = max_bits
        self.pivots = 0

        # Column encoding: every structural variable becomes one or two
        # nonnegative columns, x = base + sum(sign * u).
        self.col_sign: list[Fraction] = []
        self.col_var: list[int] = []
        self.var_base: list[Fraction] = []
        self.var_cols: list[list[int]] = []
        extra_rows: list[tuple[dict[int, Fraction], str, Fraction]] = []
        for vi, v in enumerate(system.variables):
            cols: list[int] = []
            if v.lb is not None and v.lb == v.ub:
                base = v.lb  # fixed variable: no column at all
            elif v.lb is not None:
                base = v.lb
                cols.append(self._new_col(vi, _ONE))
                if v.ub is not None:
                    extra_rows.append(({cols[0]: _ONE}, "<=", v.ub - v.lb))
            elif v.ub is not None:
                base = v.ub
                cols.append(self._new_col(vi, -_ONE))
            else:
                base = _ZERO
                cols.append(self._new_col(vi, _ONE))
                cols.append(self._new_col(vi, -_ONE))
            self.var_base.append(base)
            self.var_cols.append(cols)
        self.n_struct = len(self.col_sign)

        var_index = {v.name: i for i, v in enumerate(system.variables)}
        raw_rows: list[tuple[dict[int, Fraction], str, Fraction]] = []
        for row in system.rows:
            coeffs: dict[int, Fraction] = {}
            rhs = row.rhs
            for name, coef in row.terms:
                vi = var_index[name]
                rhs -= coef * self.var_base[vi]
                for c in self.var_cols[vi]:
                    coeffs[c] = coeffs.get(c, _ZERO) + coef * self.col_sign[c]
            raw_rows.append((coeffs, row.sense, rhs))
        raw_rows.extend(extra_rows)

        # Slack columns, rhs normalization, initial basis (slack or artificial).
        m = len(raw_rows)
        ncols = self.n_struct
        slack_of_row: list[int | None] = []
        senses = []
        for coeffs, sense, rhs in raw_rows:
            senses.append(sense)
            if sense in ("<=", ">="):
                slack_of_row.append(ncols)
                ncols += 1
            else:
                slack_of_row.append(None)
        self.rows: list[list[Fraction]] = []
        self.basis: list[int] = []
        self.artificial_start = None
        art_cols: list[int] = []
        for r, (coeffs, sense, rhs) in enumerate(raw_rows):
            dense = [_ZERO] * ncols
            for c, coef in coeffs.items():
                dense[c] = coef
            if sense == "<=":
                dense[slack_of_row[r]] = _ONE
            elif sense == ">=":
                dense[slack_of_row[r]] = -_ONE
            flip = rhs < 0
            if flip:
                dense = [-x for x in dense]
                rhs = -rhs
            dense.append(rhs)
            self.rows.append(dense)
            slack = slack_of_row[r]
            if slack is not None and dense[slack] == _ONE:
                self.basis.append(slack)
            else:
                self.basis.append(-1)  # placeholder: artificial added below
                art_cols.append(r)
        self.artificial_start = ncols
        for k, r in enumerate(art_cols):
            col = ncols + k
            for rr in range(m):
                self.rows[rr].insert(col, _ONE if rr == r else _ZERO)
            self.basis[r] = col
        self.ncols = ncols + len(art_cols)
        self.active = list(range(m))

    def _new_col(self, var_index: int, sign: Fraction) -> int:
        self.col_sign.append(sign)
        self.col_var.append(var_index)
        return len(self.col_sign) - 1

    def _zrow(self, cost: list[Fraction]) -> list[Fraction]:
        z = list(cost)
        for r in self.active:
            cb = cost[self.basis[r]]
            if cb != 0:
                row = self.rows[r]
                for j in range(self.ncols):
                    if row[j] != 0:
                        z[j] -= cb * row[j]
        return z

    def _objective_value(self, cost: list[Fraction]) -> Fraction:
        total = _ZERO
        for r in self.active:
            cb = cost[self.basis[r]]
            if cb != 0:
                total += cb * self.rows[r][-1]
        return total

    def _pivot_rows(self, r: int, c: int) -> list[Fraction]:
        """Normalize row r on column c and eliminate c from the other rows."""
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise SimplexResourceError(f"pivot budget {self.max_pivots} exceeded")
        piv = self.rows[r][c]
        if piv.numerator.bit_length() + piv.denominator.bit_length() > self.max_bits:
            raise SimplexResourceError("rational coefficients exceeded the bit budget")
        inv = _ONE / piv
        self.rows[r] = row = [x * inv for x in self.rows[r]]
        for rr in self.active:
            if rr == r:
                continue
            other = self.rows[rr]
            factor = other[c]
            if factor != 0:
                self.rows[rr] = [a - factor * b for a, b in zip(other, row)]
        self.basis[r] = c
        return row

    def _pivot(self, r: int, c: int) -> None:
        factor = self.z[c]
        row = self._pivot_rows(r, c)
        if factor != 0:
            self.z = [a - factor * b for a, b in zip(self.z, row)]

    def _minimize(self, cost: list[Fraction], banned: set[int]) -> None:
        self.z = self._zrow(cost)
        while True:
            enter = None
            for j in range(self.ncols):
                if j in banned:
                    continue
                if self.z[j] < 0:
                    enter = j
                    break
            if enter is None:
                return
            leave = None
            best = None
            for r in self.active:
                a = self.rows[r][enter]
                if a > 0:
                    ratio = self.rows[r][-1] / a
                    if best is None or ratio < best or (
                        ratio == best and self.basis[r] < self.basis[leave]
                    ):
                        best = ratio
                        leave = r
            if leave is None:
                raise UnboundedObjectiveError("objective is unbounded")
            self._pivot(leave, enter)

    def solve(self) -> Feasible | Infeasible:
        art = set(range(self.artificial_start, self.ncols))
        if art:
            cost = [_ZERO] * self.ncols
            for c in art:
                cost[c] = _ONE
            self._minimize(cost, banned=set())
            if self._objective_value(cost) > 0:
                return Infeasible()
            # Drive surviving artificials out of the basis; rows that cannot
            # pivot are redundant and dropped.
            for r in list(self.active):
                if self.basis[r] in art:
                    pivot_col = None
                    for j in range(self.artificial_start):
                        if self.rows[r][j] != 0:
                            pivot_col = j
                            break
                    if pivot_col is None:
                        self.active.remove(r)
                    else:
                        # Degenerate pivot (rhs is 0), so feasibility holds
                        # whatever the sign of the pivot element.
                        self._pivot_rows(r, pivot_col)

        objective_value = None
        if self.system.objective:
            var_index = {v.name: i for i, v in enumerate(self.system.variables)}
            cost = [_ZERO] * self.ncols
            sense = Fraction(-1) if self.system.maximize else _ONE
            for name, coef in self.system.objective:
                for c in self.var_cols[var_index[name]]:
                    cost[c] += sense * coef * self.col_sign[c]
            self._minimize(cost, banned=art)

        values = [_ZERO] * self.ncols
        for r in self.active:
            values[self.basis[r]] = self.rows[r][-1]
        assignment = {}
        for vi, v in enumerate(self.system.variables):
            x = self.var_base[vi]
            for c in self.var_cols[vi]:
                x += self.col_sign[c] * values[c]
            assignment[v.name] = x
        if self.system.objective:
            objective_value = sum(
                (coef * assignment[name] for name, coef in self.system.objective), _ZERO
            )
        _verify_assignment(self.system, assignment)
        return Feasible(assignment=assignment, objective_value=objective_value)


def _verify_assignment(system: LinearSystem, assignment: dict[str, Fraction]) -> None:
    for v in system.variables:
        x = assignment[v.name]
        if v.lb is not None and x < v.lb or v.ub is not None and x > v.ub:
            raise RuntimeError(f"internal: bound on {v.name} violated by {x}")
    for row in system.rows:
        lhs = sum((coef * assignment[name] for name, coef in row.terms), _ZERO)
        ok = lhs <= row.rhs if row.sense == "<=" else lhs >= row.rhs if row.sense == ">=" else lhs == row.rhs
        if not ok:
            raise RuntimeError(f"internal: row {row.name} violated ({lhs} {row.sense} {row.rhs})")


def _is_feasible(variables, rows) -> bool:
    result = _Simplex(LinearSystem(variables, tuple(rows))).solve()
    return result.feasible


_HINT_ROW_CAP = 300


def _infeasibility_hint(system: LinearSystem) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Deletion-filter search for removable rows; best-effort, work-capped."""
    rows = list(system.rows)
    if len(rows) > _HINT_ROW_CAP:
        names = tuple(r.name for r in rows)
        return names, names
    removed: list[Constraint] = []
    first_core: tuple[str, ...] = ()
    while not _is_feasible(system.variables, rows):
        kept = list(rows)
        for row in list(kept):
            trial = [r for r in kept if r is not row]
            if not _is_feasible(system.variables, trial):
                kept = trial
        if not first_core:
            first_core = tuple(r.name for r in kept)
        removed.extend(kept)
        kept_set = {r.name for r in kept}
        rows = [r for r in rows if r.name not in kept_set]
    return tuple(r.name for r in removed), first_core


def solve_feasibility(system: LinearSystem, with_hint: bool = True) -> Feasible | Infeasible:
    """Decide the system exactly; Feasible results are substitution-verified.

    On infeasibility a removal hint is attached unless `with_hint` is False
    (the hint re-solves reduced systems and can dominate the run time).
    """
    result = _Simplex(system).solve()
    if result.feasible or not with_hint:
        return result
    hint, core = _infeasibility_hint(system)
    return Infeasible(removal_hint=hint, conflict_core=core)


# ---------------------------------------------------------------------------
# The path-length system for a fixed forest, and weight recovery.

_MARGIN_VAR = "t_margin"


def default_recovery_eps(instance: Instance) -> Fraction:
    """The smallest positive gap two grid path lengths can have.

    Path lengths live on the lattice generated by w_min and the resolution,
    so their differences are multiples of gcd(w_min, resolution).  Using this
    as the strictness constant keeps every grid-realizable forest feasible in
    the continuous system.
    """
    return frac_gcd(instance.w_min, instance.weight_resolution)


def path_length_system(
    instance: Instance,
    forest: RoutingForest,
    eps: Fraction,
    big_M: Fraction,
    include_vacuous_rows: bool = True,
    margin_variable: bool = False,
) -> tuple[LinearSystem, dict[str, tuple[str, str, tuple[str, str]]]]:
    """Instantiate the path-length constraints for fixed routing binaries.

    Returns the system plus row metadata name -> (kind, origin, link).  With
    `margin_variable` the strict rows get a shared slack variable t in
    [eps, big_M] and the objective becomes max t.  `include_vacuous_rows`
    keeps the lower-bound rows of unused links (they are implied at any
    feasible point, so dropping them changes no feasibility answer but
    shrinks the solve).
    """
    variables: list[Variable] = []
    wname: dict[tuple[str, str], str] = {}
    for link in instance.links:
        name = f"w_{link.tail}_{link.head}"
        wname[(link.tail, link.head)] = name
        variables.append(Variable(name, "continuous", instance.w_min, instance.w_max))
    lname: dict[tuple[str, str], str] = {}
    origins = instance.origins()
    for s in origins:
        for node in instance.nodes:
            name = f"l_{s}_{node}"
            lname[(s, node)] = name
            ub = Fraction(0) if node == s else None
            variables.append(Variable(name, "continuous", Fraction(0), ub))
    if margin_variable:
        variables.append(Variable(_MARGIN_VAR, "continuous", eps, big_M))

    in_links = instance.in_links()
    rows: list[Constraint] = []
    meta: dict[str, tuple[str, str, tuple[str, str]]] = {}
    for s in origins:
        used = forest.used_links(s)
        insum = {node: sum(1 for l in in_links[node] if (l.tail, l.head) in used)
                 for node in instance.nodes}
        for link in instance.links:
            i, j = link.tail, link.head
            y = 1 if (i, j) in used else 0
            gap = insum[j] - y
            terms: list[tuple[str, Fraction]] = [
                (wname[(i, j)], Fraction(-1)),
                (lname[(s, i)], Fraction(-1)),
                (lname[(s, j)], Fraction(1)),
            ]
            if margin_variable and gap > 0:
                terms.append((_MARGIN_VAR, Fraction(gap)))
                rhs = Fraction(0)
            else:
                rhs = -eps * gap
            name = f"pl_ub_{s}_{i}_{j}"
            rows.append(Constraint(name, tuple(terms), "<=", rhs))
            meta[name] = ("ub", s, (i, j))
            if y == 0 and not include_vacuous_rows:
                continue
            terms = [
                (wname[(i, j)], Fraction(-1)),
                (lname[(s, i)], Fraction(-1)),
                (lname[(s, j)], Fraction(1)),
            ]
            name = f"pl_lb_{s}_{i}_{j}"
            rows.append(Constraint(name, tuple(terms), ">=", -big_M * (1 - y)))
            meta[name] = ("lb", s, (i, j))

    objective = ((_MARGIN_VAR, Fraction(1)),) if margin_variable else ()
    system = LinearSystem(tuple(variables), tuple(rows), objective, maximize=True)
    return system, meta


def row_bindings(
    instance: Instance,
    forest: RoutingForest,
    meta: dict[str, tuple[str, str, tuple[str, str]]],
    row_names: tuple[str, ...],
) -> frozenset[tuple[str, tuple[str, str], int]]:
    """The (origin, link, value) assignments that parametrize the given rows.

    Any forest agreeing with these bindings instantiates identical rows, so
    an infeasible core's bindings are a sound no-good pattern.
    """
    in_links = instance.in_links()
    bindings: set[tuple[str, tuple[str, str], int]] = set()
    for name in row_names:
        kind, s, (i, j) = meta[name]
        used = forest.used_links(s)
        bindings.add((s, (i, j), 1 if (i, j) in used else 0))
        if kind == "ub":
            for link in in_links[j]:
                pair = (link.tail, link.head)
                bindings.add((s, pair, 1 if pair in used else 0))
    return frozenset(bindings)


@dataclass(frozen=True)
class WeightRecovery:
    """Outcome of recover_weights / maximize_margin.

    status: "ok" (weights verified through the routing oracle),
    "lp_infeasible" (the continuous system has no solution), or
    "grid_infeasible" (continuous solutions exist but no grid point realizes
    the forest).
    """

    status: str
    weights: WeightVector | None = None
    stage: str | None = None  # "direct" | "margin" | "exhaustive"
    lp_margin: Fraction | None = None
    removal_hint: tuple[str, ...] = ()
    conflict_core: tuple[str, ...] = ()
    bindings: frozenset = frozenset()

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _snap_vector(instance: Instance, assignment: dict[str, Fraction]) -> WeightVector:
    values = {}
    for link in instance.links:
        raw = assignment[f"w_{link.tail}_{link.head}"]
        values[(link.tail, link.head)] = snap_to_grid(
            raw, instance.w_min, instance.w_max, instance.weight_resolution
        )
    return WeightVector(values)


def _matches_forest(instance: Instance, weights: WeightVector, forest: RoutingForest) -> bool:
    try:
        routed = spf.routing_from_weights(instance, weights)
    except (spf.NonUniqueRoutingError, spf.UnreachableDemandError):
        return False
    return routed == forest


def _grid_search(
    instance: Instance, forest: RoutingForest, limit: int
) -> WeightVector | None:
    points = grid_points(instance.w_min, instance.w_max, instance.weight_resolution)
    total = len(points) ** len(instance.links)
    if total > limit:
        raise GridSearchLimitError(
            f"{total} grid combinations exceed the limit {limit}"
        )
    pairs = instance.link_pairs()
    for combo in itertools.product(points, repeat=len(pairs)):
        candidate = WeightVector(dict(zip(pairs, combo)))
        if _matches_forest(instance, candidate, forest):
            return candidate
    return None


def _resolve_recovery_params(instance: Instance, eps, big_M) -> tuple[Fraction, Fraction]:
    eps = default_recovery_eps(instance) if eps is None else parse_number(eps, "eps")
    if not 0 < eps <= instance.weight_resolution:
        raise ValueError(
            f"eps must satisfy 0 < eps <= weight_resolution, got {format_number(eps)}"
        )
    floor = (len(instance.nodes) - 1) * instance.w_max + eps
    big_M = floor if big_M is None else parse_number(big_M, "big_M")
    if big_M < floor:
        raise ValueError(f"big_M must be at least {format_number(floor)}")
    return eps, big_M


def recover_weights(
    instance: Instance,
    forest: RoutingForest,
    eps=None,
    big_M=None,
    *,
    include_vacuous_rows: bool = True,
    compute_hint: bool = False,
    grid_search_limit: int = 200_000,
) -> WeightRecovery:
    """Find grid weights whose unique shortest paths reproduce the forest.

    Successful results are re-verified through the routing oracle: the
    returned weights route every demand along exactly the forest's paths.
    """
    eps, big_M = _resolve_recovery_params(instance, eps, big_M)
    system, meta = path_length_system(
        instance, forest, eps, big_M, include_vacuous_rows=include_vacuous_rows
    )
    result = solve_feasibility(system, with_hint=compute_hint)
    if not result.feasible:
        bindings = row_bindings(instance, forest, meta, result.conflict_core)
        return WeightRecovery(
            status="lp_infeasible",
            removal_hint=result.removal_hint,
            conflict_core=result.conflict_core,
            bindings=bindings,
        )
    snapped = _snap_vector(instance, result.assignment)
    if _matches_forest(instance, snapped, forest):
        return WeightRecovery(status="ok", weights=snapped, stage="direct")

    margin_system, _ = path_length_system(
        instance, forest, eps, big_M,
        include_vacuous_rows=include_vacuous_rows, margin_variable=True,
    )
    margin_result = solve_feasibility(margin_system, with_hint=False)
    if margin_result.feasible:
        snapped = _snap_vector(instance, margin_result.assignment)
        if _matches_forest(instance, snapped, forest):
            return WeightRecovery(
                status="ok", weights=snapped, stage="margin",
                lp_margin=margin_result.objective_value,
            )

    witness = _grid_search(instance, forest, grid_search_limit)
    if witness is not None:
        return WeightRecovery(status="ok", weights=witness, stage="exhaustive")
    return WeightRecovery(status="grid_infeasible")


def strictness_margin(
    instance: Instance, forest: RoutingForest, weights: WeightVector
) -> Fraction | None:
    """Smallest strict-row slack realized by the weights (None if no strict rows).

    A strict row exists for each unused link into a node that the origin's
    tree visits; its slack is (l_i + w_ij) - l_j under exact distances.
    """
    in_links = instance.in_links()
    best: Fraction | None = None
    for s in instance.origins():
        used = forest.used_links(s)
        visited = {node for (_, node) in used}
        lengths = spf.shortest_path_lengths(instance, weights, s).dist
        for node in visited:
            for link in in_links[node]:
                pair = (link.tail, link.head)
                if pair in used:
                    continue
                li = lengths.get(link.tail)
                if li is None:
                    continue
                slack = li + weights.values[pair] - lengths[node]
                if best is None or slack < best:
                    best = slack
    return best


def maximize_margin(instance: Instance, forest: RoutingForest, eps=None, big_M=None) -> WeightRecovery:
    """Recover weights maximizing the smallest strict slack before snapping.

    When the plain recovery is feasible the margin LP is feasible too and its
    optimum is at least eps.  Infeasibility is propagated unchanged.
    """
    eps, big_M = _resolve_recovery_params(instance, eps, big_M)
    system, meta = path_length_system(
        instance, forest, eps, big_M, margin_variable=True
    )
    result = solve_feasibility(system, with_hint=False)
    if not result.feasible:
        plain, plain_meta = path_length_system(instance, forest, eps, big_M)
        plain_result = solve_feasibility(plain)
        hint = plain_result.removal_hint if not plain_result.feasible else ()
        core = plain_result.conflict_core if not plain_result.feasible else ()
        return WeightRecovery(
            status="lp_infeasible", removal_hint=hint, conflict_core=core,
            bindings=row_bindings(instance, forest, plain_meta, core),
        )
    snapped = _snap_vector(instance, result.assignment)
    if _matches_forest(instance, snapped, forest):
        return WeightRecovery(
            status="ok", weights=snapped, stage="margin",
            lp_margin=result.objective_value,
        )
    fallback = recover_weights(instance, forest, eps, big_M)
    if fallback.ok:
        return WeightRecovery(
            status="ok", weights=fallback.weights, stage=fallback.stage,
            lp_margin=result.objective_value,
        )
    return fallback
