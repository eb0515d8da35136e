"""Mixed-integer model builders for the two routing formulations.

Two complete formulations are constructed as explicit variable/constraint
tables and rendered to LP text:

 - DBM (demand-based): one binary routing variable per (demand, link), plus
   link weights and per-origin path-length variables.  Constraint families:
   flow conservation, link capacity, and the big-M/epsilon linearization of
   the path-length logic.
 - OBM (origin-based): one binary routing variable and one continuous flow
   variable per (origin, link).  Constraint families: per-tree flow
   conservation, flow bounds, link capacity, path uniqueness, and the same
   path-length linearization over origins.

Variable naming is fixed for golden-file stability: `x_<k>_<i>_<j>` (demand
index k, link i->j), `y_<s>_<i>_<j>`, `f_<s>_<i>_<j>`, `w_<i>_<j>`, and
`l_<s>_<i>`.  Components are joined with underscores; node ids containing
underscores still build correct models but produce less readable names.

Constraint names carry a family tag: `fc_*` flow conservation, `cap_*`
capacity, `fb_*` flow bound, `uniq_*` uniqueness, `pl_ub_*`/`pl_lb_*` the
path-length pair, `lift_*`/`spo_*` the optional sub-path lifting.

Defaults: eps = weight_resolution (the smallest strict gap the grid can
express) and big_M = (|N| - 1) * w_max + eps (the longest simple path plus
that gap); with these the linearized pair is exactly equivalent to the
three-case logic form, which `linearization_check` verifies case by case.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .instance import Instance, InstanceDims
from .rational import format_number, parse_number


class ModelParameterError(ValueError):
    """eps/big_M do not satisfy the documented validity bounds."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" | "continuous"
    lb: Fraction | None
    ub: Fraction | None


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, Fraction], ...]
    sense: str  # "<=" | ">=" | "="
    rhs: Fraction


@dataclass(frozen=True)
class LinearModel:
    formulation: str
    eps: Fraction
    big_M: Fraction
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[str, Fraction], ...]  # minimized


def model_violations(model: LinearModel) -> list[str]:
    out = []
    declared = {}
    for v in model.variables:
        if v.name in declared:
            out.append(f"variable {v.name}: declared twice")
        declared[v.name] = v
        if v.kind == "binary" and (v.lb != 0 or v.ub != 1):
            out.append(f"variable {v.name}: binary must be bounded [0, 1]")
        if v.kind not in ("binary", "continuous"):
            out.append(f"variable {v.name}: unknown kind {v.kind!r}")
        if v.lb is not None and v.ub is not None and v.lb > v.ub:
            out.append(f"variable {v.name}: empty bound interval")
    names = set()
    for c in model.constraints:
        if c.name in names:
            out.append(f"constraint {c.name}: declared twice")
        names.add(c.name)
        if c.sense not in ("<=", ">=", "="):
            out.append(f"constraint {c.name}: unknown sense {c.sense!r}")
        for var, coef in c.terms:
            if var not in declared:
                out.append(f"constraint {c.name}: references undeclared {var!r}")
            if coef == 0:
                out.append(f"constraint {c.name}: keeps a zero coefficient on {var!r}")
    for var, _ in model.objective:
        if var not in declared:
            out.append(f"objective: references undeclared {var!r}")
    return out


def default_eps(instance: Instance) -> Fraction:
    return instance.weight_resolution


def default_big_m(instance: Instance, eps: Fraction) -> Fraction:
    return (len(instance.nodes) - 1) * instance.w_max + eps


def _resolve_params(instance: Instance, eps, big_M) -> tuple[Fraction, Fraction]:
    eps = default_eps(instance) if eps is None else parse_number(eps, "eps")
    big_M = default_big_m(instance, eps) if big_M is None else parse_number(big_M, "big_M")
    if not 0 < eps <= instance.weight_resolution:
        raise ModelParameterError(
            f"eps must satisfy 0 < eps <= weight_resolution "
            f"({format_number(instance.weight_resolution)}), got {format_number(eps)}"
        )
    floor = default_big_m(instance, eps)
    if big_M < floor:
        raise ModelParameterError(
            f"big_M must be at least (|N|-1)*w_max + eps = {format_number(floor)}, "
            f"got {format_number(big_M)}"
        )
    return eps, big_M


class _ModelBuilder:
    """Accumulates variables/rows; keeps term order = declaration order."""

    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self.index: dict[str, int] = {}
        self.constraints: list[Constraint] = []

    def var(self, name: str, kind: str, lb, ub) -> str:
        self.index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, lb, ub))
        return name

    def row(self, name: str, coeffs: dict[str, Fraction], sense: str, rhs: Fraction) -> None:
        terms = tuple(
            (v, c) for v, c in sorted(coeffs.items(), key=lambda kv: self.index[kv[0]]) if c != 0
        )
        self.constraints.append(Constraint(name, terms, sense, Fraction(rhs)))


def build_dbm(instance: Instance, eps=None, big_M=None, subpath_lift: bool = False) -> LinearModel:
    """Demand-based formulation.

    With `subpath_lift` the optional lifted sub-path family is added (extra
    binaries y_s_i_j with y >= x and per-node in-degree rows); it is redundant
    for the complete model and excluded from the size formulas.
    """
    eps, big_M = _resolve_params(instance, eps, big_M)
    b = _ModelBuilder()
    origins = instance.origins()
    in_links = instance.in_links()
    out_links = instance.out_links()

    xname = {}
    for k, demand in enumerate(instance.demands):
        for link in instance.links:
            xname[(k, link.tail, link.head)] = b.var(
                f"x_{k}_{link.tail}_{link.head}", "binary", Fraction(0), Fraction(1)
            )
    wname = {}
    for link in instance.links:
        wname[(link.tail, link.head)] = b.var(
            f"w_{link.tail}_{link.head}", "continuous", instance.w_min, instance.w_max
        )
    lname = {}
    for s in origins:
        for node in instance.nodes:
            ub = Fraction(0) if node == s else None
            lname[(s, node)] = b.var(
                f"l_{s}_{node}", "continuous", Fraction(0), ub
            )

    for k, demand in enumerate(instance.demands):
        for node in instance.nodes:
            coeffs: dict[str, Fraction] = {}
            for link in in_links[node]:
                coeffs[xname[(k, link.tail, link.head)]] = Fraction(1)
            for link in out_links[node]:
                coeffs[xname[(k, link.tail, link.head)]] = Fraction(-1)
            if node == demand.origin:
                rhs = Fraction(-1)
            elif node == demand.destination:
                rhs = Fraction(1)
            else:
                rhs = Fraction(0)
            b.row(f"fc_{k}_{node}", coeffs, "=", rhs)

    for link in instance.links:
        coeffs = {}
        for k, demand in enumerate(instance.demands):
            coeffs[xname[(k, link.tail, link.head)]] = demand.bandwidth
        b.row(f"cap_{link.tail}_{link.head}", coeffs, "<=", link.capacity)

    for k, demand in enumerate(instance.demands):
        s = demand.origin
        for link in instance.links:
            i, j = link.tail, link.head
            # l_j <= l_i + w_ij - eps * (sum_h x_hj - x_ij)
            coeffs = {lname[(s, j)]: Fraction(1), lname[(s, i)]: Fraction(-1)}
            coeffs[wname[(i, j)]] = coeffs.get(wname[(i, j)], Fraction(0)) - 1
            for other in in_links[j]:
                key = xname[(k, other.tail, other.head)]
                coeffs[key] = coeffs.get(key, Fraction(0)) + eps
            key = xname[(k, i, j)]
            coeffs[key] = coeffs.get(key, Fraction(0)) - eps
            b.row(f"pl_ub_{k}_{i}_{j}", coeffs, "<=", Fraction(0))
            # l_j >= l_i + w_ij - M * (1 - x_ij)
            coeffs = {lname[(s, j)]: Fraction(1), lname[(s, i)]: Fraction(-1)}
            coeffs[wname[(i, j)]] = coeffs.get(wname[(i, j)], Fraction(0)) - 1
            coeffs[xname[(k, i, j)]] = coeffs.get(xname[(k, i, j)], Fraction(0)) - big_M
            b.row(f"pl_lb_{k}_{i}_{j}", coeffs, ">=", -big_M)

    if subpath_lift:
        yname = {}
        for s in origins:
            for link in instance.links:
                yname[(s, link.tail, link.head)] = b.var(
                    f"y_{s}_{link.tail}_{link.head}", "binary", Fraction(0), Fraction(1)
                )
        for s in origins:
            for k, demand in enumerate(instance.demands):
                if demand.origin != s:
                    continue
                for link in instance.links:
                    b.row(
                        f"lift_{s}_{k}_{link.tail}_{link.head}",
                        {
                            yname[(s, link.tail, link.head)]: Fraction(1),
                            xname[(k, link.tail, link.head)]: Fraction(-1),
                        },
                        ">=",
                        Fraction(0),
                    )
            for node in instance.nodes:
                if node == s:
                    continue
                coeffs = {
                    yname[(s, link.tail, link.head)]: Fraction(1) for link in in_links[node]
                }
                b.row(f"spo_{s}_{node}", coeffs, "<=", Fraction(1))

    objective = tuple(
        (xname[(k, link.tail, link.head)], demand.bandwidth)
        for k, demand in enumerate(instance.demands)
        for link in instance.links
    )
    formulation = "DBM+SPO" if subpath_lift else "DBM"
    return LinearModel(
        formulation, eps, big_M, tuple(b.variables), tuple(b.constraints), objective
    )


def build_obm(instance: Instance, eps=None, big_M=None) -> LinearModel:
    """Origin-based formulation (one tree per origin)."""
    eps, big_M = _resolve_params(instance, eps, big_M)
    b = _ModelBuilder()
    origins = instance.origins()
    in_links = instance.in_links()
    out_links = instance.out_links()

    yname = {}
    for s in origins:
        for link in instance.links:
            yname[(s, link.tail, link.head)] = b.var(
                f"y_{s}_{link.tail}_{link.head}", "binary", Fraction(0), Fraction(1)
            )
    fname = {}
    for s in origins:
        for link in instance.links:
            fname[(s, link.tail, link.head)] = b.var(
                f"f_{s}_{link.tail}_{link.head}", "continuous", Fraction(0), None
            )
    wname = {}
    for link in instance.links:
        wname[(link.tail, link.head)] = b.var(
            f"w_{link.tail}_{link.head}", "continuous", instance.w_min, instance.w_max
        )
    lname = {}
    for s in origins:
        for node in instance.nodes:
            ub = Fraction(0) if node == s else None
            lname[(s, node)] = b.var(f"l_{s}_{node}", "continuous", Fraction(0), ub)

    for s in origins:
        sink = {d.destination: d.bandwidth for d in instance.demands_from(s)}
        d_s = instance.origin_bandwidth(s)
        for node in instance.nodes:
            coeffs: dict[str, Fraction] = {}
            for link in in_links[node]:
                coeffs[fname[(s, link.tail, link.head)]] = Fraction(1)
            for link in out_links[node]:
                coeffs[fname[(s, link.tail, link.head)]] = Fraction(-1)
            rhs = -d_s if node == s else sink.get(node, Fraction(0))
            b.row(f"fc_{s}_{node}", coeffs, "=", rhs)

    for s in origins:
        d_s = instance.origin_bandwidth(s)
        for link in instance.links:
            b.row(
                f"fb_{s}_{link.tail}_{link.head}",
                {
                    fname[(s, link.tail, link.head)]: Fraction(1),
                    yname[(s, link.tail, link.head)]: -d_s,
                },
                "<=",
                Fraction(0),
            )

    for link in instance.links:
        coeffs = {fname[(s, link.tail, link.head)]: Fraction(1) for s in origins}
        b.row(f"cap_{link.tail}_{link.head}", coeffs, "<=", link.capacity)

    for s in origins:
        dests = set(instance.destinations_from(s))
        for node in instance.nodes:
            coeffs = {yname[(s, link.tail, link.head)]: Fraction(1) for link in in_links[node]}
            if node == s:
                b.row(f"uniq_{s}_{node}", coeffs, "=", Fraction(0))
            elif node in dests:
                b.row(f"uniq_{s}_{node}", coeffs, "=", Fraction(1))
            else:
                b.row(f"uniq_{s}_{node}", coeffs, "<=", Fraction(1))

    for s in origins:
        for link in instance.links:
            i, j = link.tail, link.head
            coeffs = {lname[(s, j)]: Fraction(1), lname[(s, i)]: Fraction(-1)}
            coeffs[wname[(i, j)]] = coeffs.get(wname[(i, j)], Fraction(0)) - 1
            for other in in_links[j]:
                key = yname[(s, other.tail, other.head)]
                coeffs[key] = coeffs.get(key, Fraction(0)) + eps
            key = yname[(s, i, j)]
            coeffs[key] = coeffs.get(key, Fraction(0)) - eps
            b.row(f"pl_ub_{s}_{i}_{j}", coeffs, "<=", Fraction(0))
            coeffs = {lname[(s, j)]: Fraction(1), lname[(s, i)]: Fraction(-1)}
            coeffs[wname[(i, j)]] = coeffs.get(wname[(i, j)], Fraction(0)) - 1
            coeffs[yname[(s, i, j)]] = coeffs.get(yname[(s, i, j)], Fraction(0)) - big_M
            b.row(f"pl_lb_{s}_{i}_{j}", coeffs, ">=", -big_M)

    objective = tuple(
        (fname[(s, link.tail, link.head)], Fraction(1))
        for s in origins
        for link in instance.links
    )
    return LinearModel(
        "OBM", eps, big_M, tuple(b.variables), tuple(b.constraints), objective
    )


def master_submodel(model: LinearModel) -> LinearModel:
    """The integer master kept by the decomposition split.

    DBM: routing binaries with flow-conservation and capacity rows (objective
    unchanged).  OBM: routing binaries with the uniqueness rows; the flow
    objective drops with the flow variables.
    """
    if model.formulation.startswith("DBM"):
        keep_var = lambda v: v.name.startswith("x_")
        keep_row = lambda c: c.name.startswith(("fc_", "cap_"))
        suffix = "DBM_MASTER"
    elif model.formulation.startswith("OBM"):
        keep_var = lambda v: v.name.startswith("y_")
        keep_row = lambda c: c.name.startswith("uniq_")
        suffix = "OBM_MASTER"
    else:
        raise ValueError(f"no master split for formulation {model.formulation!r}")
    variables = tuple(v for v in model.variables if keep_var(v))
    names = {v.name for v in variables}
    constraints = tuple(
        Constraint(c.name, tuple((v, k) for v, k in c.terms if v in names), c.sense, c.rhs)
        for c in model.constraints
        if keep_row(c)
    )
    objective = tuple((v, k) for v, k in model.objective if v in names)
    return LinearModel(suffix, model.eps, model.big_M, variables, constraints, objective)


# ---------------------------------------------------------------------------
# Size accounting.

_VAR_FAMILY_LABEL = {
    "x": "routing",
    "y": "routing",
    "f": "flow",
    "w": "weight",
    "l": "length",
}
_ROW_FAMILY_LABEL = {
    "fc": "flow_conservation",
    "cap": "capacity",
    "pl": "path_length",
    "fb": "flow_bound",
    "uniq": "uniqueness",
    "lift": "subpath_lift",
    "spo": "subpath",
}


@dataclass(frozen=True)
class SizeTable:
    label: str
    variables: dict[str, int]
    constraints: dict[str, int]

    @property
    def total_variables(self) -> int:
        return sum(self.variables.values())

    @property
    def total_constraints(self) -> int:
        return sum(self.constraints.values())


@dataclass(frozen=True)
class SizeReport:
    dims: InstanceDims
    dbm: SizeTable
    dbm_master: SizeTable
    obm: SizeTable
    obm_reduced: SizeTable
    obm_master: SizeTable
    note: str


def size_report(dims: InstanceDims) -> SizeReport:
    """Closed-form variable/constraint counts for both formulations.

    The full OBM is reported under two accountings, because they disagree:
    `obm` counts every family (weights, lengths and path-length rows
    included), while `obm_reduced` counts only the binary+flow variables and
    the master/bound/conservation/capacity rows.  Both are emitted, labeled,
    with the discrepancy flagged in `note`.
    """
    n, L, D, S = dims.n_nodes, dims.n_links, dims.n_demands, dims.n_origins
    dbm = SizeTable(
        "DBM original",
        {"routing": D * L, "weight": L, "length": S * n},
        {"flow_conservation": D * n, "capacity": L, "path_length": 2 * D * L},
    )
    dbm_master = SizeTable(
        "DBM master",
        {"routing": D * L},
        {"flow_conservation": D * n, "capacity": L},
    )
    obm = SizeTable(
        "OBM original (all families)",
        {"routing": S * L, "flow": S * L, "weight": L, "length": S * n},
        {
            "flow_conservation": S * n,
            "flow_bound": S * L,
            "capacity": L,
            "uniqueness": S * n,
            "path_length": 2 * S * L,
        },
    )
    obm_reduced = SizeTable(
        "OBM original (binary+flow variables, master+bound constraint families)",
        {"routing": S * L, "flow": S * L},
        {
            "flow_conservation": S * n,
            "flow_bound": S * L,
            "capacity": L,
            "uniqueness": S * n,
        },
    )
    obm_master = SizeTable(
        "OBM master",
        {"routing": S * L},
        {"uniqueness": S * n},
    )
    note = (
        "note: the two OBM accountings disagree "
        f"({obm.total_variables}/{obm.total_constraints} vs "
        f"{obm_reduced.total_variables}/{obm_reduced.total_constraints}); "
        "the reduced accounting omits weight/length variables and the "
        "path-length rows."
    )
    return SizeReport(dims, dbm, dbm_master, obm, obm_reduced, obm_master, note)


def model_counts(model: LinearModel) -> SizeTable:
    """Actual per-family counts of a built model, keyed like size_report."""
    variables: dict[str, int] = {}
    for v in model.variables:
        fam = _VAR_FAMILY_LABEL.get(v.name.split("_", 1)[0], v.name)
        variables[fam] = variables.get(fam, 0) + 1
    constraints: dict[str, int] = {}
    for c in model.constraints:
        fam = _ROW_FAMILY_LABEL.get(c.name.split("_", 1)[0], c.name)
        constraints[fam] = constraints.get(fam, 0) + 1
    return SizeTable(model.formulation, variables, constraints)


def render_size_report(report: SizeReport, fmt: str = "text") -> str:
    tables = [report.dbm, report.dbm_master, report.obm, report.obm_reduced, report.obm_master]
    if fmt == "tsv":
        lines = ["model\tvariables\tconstraints"]
        for t in tables:
            lines.append(f"{t.label}\t{t.total_variables}\t{t.total_constraints}")
        lines.append(f"# {report.note}")
        return "\n".join(lines) + "\n"
    d = report.dims
    lines = [
        f"model sizes at |N|={d.n_nodes} |L|={d.n_links} |D|={d.n_demands} |S|={d.n_origins}:"
    ]
    width = max(len(t.label) for t in tables)
    for t in tables:
        lines.append(
            f"  {t.label.ljust(width)}  {t.total_variables:>12,} variables"
            f"  {t.total_constraints:>12,} constraints"
        )
        for fam, count in t.variables.items():
            lines.append(f"    {'var ' + fam:<24} {count:>12,}")
        for fam, count in t.constraints.items():
            lines.append(f"    {'con ' + fam:<24} {count:>12,}")
    lines.append(report.note)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Structure report: which variable families each constraint family touches.

_VAR_FAMILY_ORDER = ("x", "y", "f", "w", "l")


@dataclass(frozen=True)
class StructureReport:
    formulation: str
    couplings: dict[str, tuple[str, ...]]


def structure_report(model: LinearModel) -> StructureReport:
    """Per constraint family, the variable families its rows touch.

    Families with no rows (e.g. flow conservation in a demand-free model) are
    omitted, so the report reflects the actual block structure of the model.
    """
    seen: dict[str, set[str]] = {}
    order: list[str] = []
    for c in model.constraints:
        fam = _ROW_FAMILY_LABEL.get(c.name.split("_", 1)[0], c.name)
        if fam not in seen:
            seen[fam] = set()
            order.append(fam)
        for var, _coef in c.terms:
            seen[fam].add(var.split("_", 1)[0])
    couplings = {
        fam: tuple(v for v in _VAR_FAMILY_ORDER if v in seen[fam]) for fam in order
    }
    return StructureReport(model.formulation, couplings)


def render_structure_report(report: StructureReport, fmt: str = "text") -> str:
    if fmt == "tsv":
        lines = ["family\tvariable_families"]
        for fam, vars_ in report.couplings.items():
            lines.append(f"{fam}\t{','.join(vars_)}")
        return "\n".join(lines) + "\n"
    lines = [f"constraint structure of {report.formulation}:"]
    for fam, vars_ in report.couplings.items():
        shown = ", ".join(vars_) if vars_ else "(none)"
        lines.append(f"  {fam:<20} touches {shown}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Path-length linearization check.


@dataclass(frozen=True)
class PathLengthCase:
    """Feasible relation on q = l_j - (l_i + w_ij) implied by the binaries."""

    relation: str  # "equal" | "strict" | "slack"
    lower: Fraction
    upper: Fraction


def linearization_check(link_used: int, incoming_sum: int, eps, big_M) -> PathLengthCase:
    """Resolve one binary pattern of the path-length pair to its logic case.

    `link_used` is the routing binary on (i, j); `incoming_sum` is the total
    of routing binaries over all links into j (including (i, j)).  The
    returned interval is exactly the feasible set of the linearized pair for
    that pattern and is asserted to match the logic form:

      used            -> q = 0             (equality)
      merge, unused   -> q <= -eps         (strict)
      elsewhere       -> -M <= q <= 0      (slack)
    """
    eps = parse_number(eps, "eps")
    big_M = parse_number(big_M, "big_M")
    if not 0 < eps < big_M:
        raise ModelParameterError("need 0 < eps < big_M")
    if link_used not in (0, 1):
        raise ValueError(f"link_used must be a binary value, got {link_used!r}")
    if incoming_sum not in (0, 1):
        raise ValueError(
            f"incoming_sum must be 0 or 1 under path uniqueness, got {incoming_sum!r}"
        )
    if link_used > incoming_sum:
        raise ValueError("inconsistent binaries: the link contributes to the incoming sum")
    upper = -eps * (incoming_sum - link_used)
    lower = -big_M * (1 - link_used)
    if link_used == 1:
        relation = "equal"
        assert lower == upper == 0
    elif incoming_sum == 1:
        relation = "strict"
        assert upper == -eps and lower == -big_M
    else:
        relation = "slack"
        assert upper == 0 and lower == -big_M
    return PathLengthCase(relation, lower, upper)


# ---------------------------------------------------------------------------
# LP text export and the matching reader (used to round-trip in tests).


def _format_terms(terms: tuple[tuple[str, Fraction], ...]) -> str:
    if not terms:
        return "0"
    parts = []
    for pos, (var, coef) in enumerate(terms):
        mag = abs(coef)
        body = var if mag == 1 else f"{format_number(mag)} {var}"
        if pos == 0:
            parts.append(f"- {body}" if coef < 0 else body)
        else:
            parts.append(f"- {body}" if coef < 0 else f"+ {body}")
    return " ".join(parts)


def export_lp(model: LinearModel) -> str:
    """Deterministic LP text; identical models export byte-identical text."""
    lines = [
        f"\\ formulation: {model.formulation}",
        f"\\ eps: {format_number(model.eps)}",
        f"\\ big_M: {format_number(model.big_M)}",
        "Minimize",
        f" obj: {_format_terms(model.objective)}",
        "Subject To",
    ]
    for c in model.constraints:
        lines.append(f" {c.name}: {_format_terms(c.terms)} {c.sense} {format_number(c.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.lb is None and v.ub is None:
            lines.append(f" {v.name} free")
        elif v.lb is not None and v.ub is not None and v.lb == v.ub:
            lines.append(f" {v.name} = {format_number(v.lb)}")
        elif v.ub is None:
            lines.append(f" {format_number(v.lb)} <= {v.name}")
        elif v.lb is None:
            lines.append(f" -inf <= {v.name} <= {format_number(v.ub)}")
        else:
            lines.append(f" {format_number(v.lb)} <= {v.name} <= {format_number(v.ub)}")
    binaries = [v.name for v in model.variables if v.kind == "binary"]
    if binaries:
        lines.append("Binary")
        for name in binaries:
            lines.append(f" {name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


class LpParseError(ValueError):
    pass


def _parse_terms(tokens: list[str], where: str) -> tuple[tuple[str, Fraction], ...]:
    terms: list[tuple[str, Fraction]] = []
    sign = Fraction(1)
    pending: Fraction | None = None
    for tok in tokens:
        if tok == "+":
            sign = Fraction(1)
            continue
        if tok == "-":
            sign = Fraction(-1)
            continue
        try:
            value = Fraction(tok)
            is_number = True
        except ValueError:
            is_number = False
        if is_number:
            if pending is not None:
                raise LpParseError(f"{where}: two consecutive numbers")
            pending = value
        else:
            coef = sign * (pending if pending is not None else Fraction(1))
            terms.append((tok, coef))
            sign = Fraction(1)
            pending = None
    if pending is not None:
        if len(terms) == 0 and pending == 0:
            return ()  # the literal "0" objective / empty row
        raise LpParseError(f"{where}: trailing number without a variable")
    return tuple(terms)


def parse_lp(text: str) -> LinearModel:
    """Read LP text produced by export_lp back into a LinearModel."""
    formulation = ""
    eps = Fraction(0)
    big_M = Fraction(0)
    section = None
    objective: tuple[tuple[str, Fraction], ...] = ()
    constraints: list[Constraint] = []
    bounds: list[tuple[str, Fraction | None, Fraction | None, bool]] = []
    binaries: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            body = line[1:].strip()
            if body.startswith("formulation:"):
                formulation = body.split(":", 1)[1].strip()
            elif body.startswith("eps:"):
                eps = Fraction(body.split(":", 1)[1].strip())
            elif body.startswith("big_M:"):
                big_M = Fraction(body.split(":", 1)[1].strip())
            continue
        if line in ("Minimize", "Subject To", "Bounds", "Binary", "End"):
            section = line
            continue
        where = f"line {lineno}"
        if section == "Minimize":
            if not line.startswith("obj:"):
                raise LpParseError(f"{where}: expected 'obj:'")
            objective = _parse_terms(line[len("obj:"):].split(), where)
        elif section == "Subject To":
            if ":" not in line:
                raise LpParseError(f"{where}: constraint without a name")
            name, rest = line.split(":", 1)
            tokens = rest.split()
            sense_pos = None
            for i, tok in enumerate(tokens):
                if tok in ("<=", ">=", "="):
                    sense_pos = i
                    break
            if sense_pos is None or sense_pos != len(tokens) - 2:
                raise LpParseError(f"{where}: expected '<terms> <sense> <rhs>'")
            terms = _parse_terms(tokens[:sense_pos], where)
            constraints.append(
                Constraint(name.strip(), terms, tokens[sense_pos], Fraction(tokens[-1]))
            )
        elif section == "Bounds":
            tokens = line.split()
            if len(tokens) == 2 and tokens[1] == "free":
                bounds.append((tokens[0], None, None, False))
            elif len(tokens) == 3 and tokens[1] == "=":
                v = Fraction(tokens[2])
                bounds.append((tokens[0], v, v, False))
            elif len(tokens) == 3 and tokens[1] == "<=":
                lb = None if tokens[0] == "-inf" else Fraction(tokens[0])
                bounds.append((tokens[2], lb, None, False))
            elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
                lb = None if tokens[0] == "-inf" else Fraction(tokens[0])
                bounds.append((tokens[2], lb, Fraction(tokens[4]), False))
            else:
                raise LpParseError(f"{where}: unrecognized bounds line {line!r}")
        elif section == "Binary":
            binaries.add(line)
        elif section == "End":
            raise LpParseError(f"{where}: content after End")
        else:
            raise LpParseError(f"{where}: content outside any section")

    variables = tuple(
        Variable(name, "binary" if name in binaries else "continuous", lb, ub)
        for name, lb, ub, _ in bounds
    )
    return LinearModel(formulation, eps, big_M, variables, tuple(constraints), objective)
