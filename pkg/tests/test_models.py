from fractions import Fraction
from pathlib import Path

import pytest

from conftest import diamond, mk_instance, small_random, two_node
from uspr import models
from uspr.instance import InstanceDims
from uspr.models import (
    ModelParameterError,
    build_dbm,
    build_obm,
    export_lp,
    linearization_check,
    master_submodel,
    model_counts,
    model_violations,
    parse_lp,
    size_report,
    structure_report,
)

GOLDEN = Path(__file__).parent / "golden"


def test_two_node_dbm_counts():
    m = build_dbm(two_node())
    assert len(m.variables) == 4
    assert len(m.constraints) == 5
    assert model_violations(m) == []


def test_two_node_obm_counts():
    m = build_obm(two_node())
    assert len(m.variables) == 5
    assert len(m.constraints) == 8
    assert model_violations(m) == []


def expected_families(dims, formulation):
    report = size_report(dims)
    table = report.dbm if formulation == "DBM" else report.obm
    return table


def assert_family_match(instance, model, formulation):
    table = expected_families(instance.dims(), formulation)
    actual = model_counts(model)
    expected_vars = {k: v for k, v in table.variables.items() if v}
    expected_cons = {k: v for k, v in table.constraints.items() if v}
    assert actual.variables == expected_vars
    assert actual.constraints == expected_cons


def test_builders_match_formulas_family_by_family():
    for seed in range(20):
        inst = small_random(seed)
        assert_family_match(inst, build_dbm(inst), "DBM")
        assert_family_match(inst, build_obm(inst), "OBM")


def test_size_report_reference_dims():
    report = size_report(InstanceDims(50, 642, 1000, 50))
    assert report.dbm.total_variables == 645_142
    assert report.dbm.total_constraints == 1_334_642
    assert report.dbm_master.total_variables == 642_000
    assert report.dbm_master.total_constraints == 50_642
    assert report.obm.total_variables == 67_342
    assert report.obm.total_constraints == 101_942
    assert report.obm_reduced.total_variables == 64_200
    assert report.obm_reduced.total_constraints == 37_742
    assert report.obm_master.total_variables == 32_100
    assert report.obm_master.total_constraints == 2_500
    assert "disagree" in report.note


def test_size_report_zero_dims():
    report = size_report(InstanceDims(0, 0, 0, 0))
    for table in (report.dbm, report.dbm_master, report.obm,
                  report.obm_reduced, report.obm_master):
        assert table.total_variables == 0
        assert table.total_constraints == 0


def test_master_submodels_match_reference_counts():
    inst = diamond()
    d = inst.dims()
    dbm_master = master_submodel(build_dbm(inst))
    assert len(dbm_master.variables) == d.n_demands * d.n_links
    assert len(dbm_master.constraints) == d.n_demands * d.n_nodes + d.n_links
    obm_master = master_submodel(build_obm(inst))
    assert len(obm_master.variables) == d.n_origins * d.n_links
    assert len(obm_master.constraints) == d.n_origins * d.n_nodes
    assert obm_master.objective == ()


def test_empty_demand_model_is_degenerate():
    inst = mk_instance("ab", [("a", "b", 10)], [])
    m = build_dbm(inst)
    assert [v.name for v in m.variables] == ["w_a_b"]
    assert [c.name for c in m.constraints] == ["cap_a_b"]
    assert m.objective == ()
    text = export_lp(m)
    assert " obj: 0" in text
    assert "Bounds" in text
    report = structure_report(m)
    assert list(report.couplings) == ["capacity"]


def test_eps_big_m_validation():
    inst = two_node()
    with pytest.raises(ModelParameterError):
        build_dbm(inst, eps=2)  # eps > resolution
    with pytest.raises(ModelParameterError):
        build_dbm(inst, eps=0)
    with pytest.raises(ModelParameterError):
        build_dbm(inst, big_M=5)  # below (|N|-1)*w_max + eps = 11
    m = build_dbm(inst, eps=Fraction(1, 2), big_M=20)
    assert m.eps == Fraction(1, 2)


def test_structure_report_dbm_families():
    report = structure_report(build_dbm(diamond()))
    assert report.couplings == {
        "flow_conservation": ("x",),
        "capacity": ("x",),
        "path_length": ("x", "w", "l"),
    }


def test_structure_report_obm_families():
    report = structure_report(build_obm(diamond()))
    assert report.couplings == {
        "flow_conservation": ("f",),
        "flow_bound": ("y", "f"),
        "capacity": ("f",),
        "uniqueness": ("y",),
        "path_length": ("y", "w", "l"),
    }


def test_subpath_lift_variant():
    inst = mk_instance(
        ["s", "a", "t"],
        [("s", "a", 10), ("a", "t", 10)],
        [("s", "a", 1), ("s", "t", 1)],
    )
    m = build_dbm(inst, subpath_lift=True)
    assert model_violations(m) == []
    families = model_counts(m)
    assert families.constraints["subpath_lift"] == 2 * 2  # 2 demands x 2 links
    assert families.constraints["subpath"] == 2  # nodes a, t for origin s


def test_linearization_cases():
    eps, big_M = Fraction(1), Fraction(11)
    used = linearization_check(1, 1, eps, big_M)
    assert used.relation == "equal"
    assert (used.lower, used.upper) == (0, 0)
    merge = linearization_check(0, 1, eps, big_M)
    assert merge.relation == "strict"
    assert (merge.lower, merge.upper) == (-big_M, -eps)
    away = linearization_check(0, 0, eps, big_M)
    assert away.relation == "slack"
    assert (away.lower, away.upper) == (-big_M, 0)


def test_linearization_inconsistent_binaries():
    with pytest.raises(ValueError):
        linearization_check(1, 0, 1, 11)
    with pytest.raises(ValueError):
        linearization_check(0, 2, 1, 11)
    with pytest.raises(ModelParameterError):
        linearization_check(0, 0, 2, 1)  # eps >= big_M


def test_export_deterministic():
    inst = diamond()
    m = build_dbm(inst)
    assert export_lp(m) == export_lp(build_dbm(inst))


def test_export_matches_golden_dbm():
    text = export_lp(build_dbm(two_node()))
    assert text == (GOLDEN / "dbm_two_node.lp").read_text()


def test_export_matches_golden_obm():
    text = export_lp(build_obm(two_node()))
    assert text == (GOLDEN / "obm_two_node.lp").read_text()


def test_export_matches_golden_obm_master():
    text = export_lp(master_submodel(build_obm(diamond())))
    assert text == (GOLDEN / "obm_diamond_master.lp").read_text()


def fractional_instance():
    return mk_instance(
        "abc",
        [("a", "b", Fraction(5, 2)), ("b", "c", Fraction(7, 2)), ("a", "c", Fraction(6, 5))],
        [("a", "c", Fraction(1, 4))],
        w_min=Fraction(1, 2), w_max=Fraction(5, 2), step=Fraction(1, 2),
    )


def test_export_matches_golden_fractional():
    m = build_dbm(fractional_instance())
    text = export_lp(m)
    assert text == (GOLDEN / "dbm_fractional.lp").read_text()
    assert parse_lp(text) == m


def test_lp_round_trip_exact():
    for build in (build_dbm, build_obm):
        for inst in (two_node(), diamond()):
            m = build(inst)
            assert parse_lp(export_lp(m)) == m


def test_lp_round_trip_master():
    m = master_submodel(build_obm(diamond()))
    assert parse_lp(export_lp(m)) == m
