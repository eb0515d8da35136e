import pytest
from fractions import Fraction

from conftest import mk_instance, two_node
from uspr.instance import (
    GenerationError,
    InstanceDims,
    InstanceParseError,
    InstanceValidationError,
    generate_random_instance,
    load_instance,
    save_instance,
    validate_instance,
)


def test_minimal_valid_instance():
    assert validate_instance(two_node()) == []


def test_origin_equals_destination_flagged():
    inst = mk_instance("ab", [("a", "b", 10)], [("a", "a", 1)])
    report = validate_instance(inst)
    assert any("origin equals destination" in str(v) for v in report)


def test_duplicate_od_pair_flagged():
    inst = mk_instance(
        "ab", [("a", "b", 10)], [("a", "b", 1), ("a", "b", 2)]
    )
    report = validate_instance(inst)
    assert any("duplicate OD pair" in str(v) for v in report)


def test_self_loop_and_duplicate_link_flagged():
    inst = mk_instance("ab", [("a", "a", 1), ("a", "b", 1), ("a", "b", 2)], [])
    messages = [str(v) for v in validate_instance(inst)]
    assert any("self-loop" in m for m in messages)
    assert any("duplicate link" in m for m in messages)


def test_unreachable_demand_flagged():
    inst = mk_instance("abc", [("a", "b", 1)], [("a", "c", 1)])
    assert any("unreachable" in str(v) for v in validate_instance(inst))


def test_negative_capacity_flagged():
    inst = mk_instance("ab", [("a", "b", -3)], [])
    assert any("negative capacity" in str(v) for v in validate_instance(inst))


def test_whitespace_node_id_flagged():
    inst = mk_instance(("a b", "c"), [("a b", "c", 1)], [])
    assert any("whitespace" in str(v) for v in validate_instance(inst))


def test_off_grid_bounds_flagged():
    inst = mk_instance("ab", [("a", "b", 1)], [], w_min=1, w_max=Fraction(5, 2), step=1)
    assert any("grid" in str(v) for v in validate_instance(inst))


def test_dims_invariants():
    with pytest.raises(ValueError):
        InstanceDims(2, 1, 1, 2)  # more origins than demands
    with pytest.raises(ValueError):
        InstanceDims(1, 0, 5, 2)  # more origins than nodes
    d = InstanceDims(50, 642, 1000, 50)
    assert (d.n_nodes, d.n_links, d.n_demands, d.n_origins) == (50, 642, 1000, 50)


def test_generation_deterministic():
    a = generate_random_instance(4, 2, 3, seed=7)
    b = generate_random_instance(4, 2, 3, seed=7)
    assert a == b
    c = generate_random_instance(4, 2, 3, seed=8)
    assert a != c


def test_generation_counting_infeasible():
    with pytest.raises(GenerationError):
        generate_random_instance(2, 1, 3, seed=0)


def test_generation_reference_dims():
    inst = generate_random_instance(50, 12.84, 1000, seed=0)
    d = inst.dims()
    assert d.n_nodes == 50
    assert d.n_links == 642
    assert d.n_demands == 1000
    assert d.n_origins <= 50
    assert validate_instance(inst) == []


def test_generated_instances_valid_and_round_trip():
    for seed in range(25):
        inst = generate_random_instance(3 + seed % 5, 1.5, 2 + seed % 4, seed=seed)
        assert validate_instance(inst) == []
        assert load_instance(save_instance(inst)) == inst


def test_round_trip_fractional_values():
    inst = mk_instance(
        "ab", [("a", "b", Fraction(5, 2))], [("a", "b", Fraction(1, 4))],
        w_min=Fraction(1, 2), w_max=Fraction(5, 2), step=Fraction(1, 2),
    )
    assert load_instance(save_instance(inst)) == inst


def test_round_trip_non_decimal_rational():
    inst = mk_instance("ab", [("a", "b", Fraction(1, 3))], [("a", "b", 1)])
    text = save_instance(inst)
    assert '"1/3"' in text  # no finite decimal form: saved as a string
    assert load_instance(text) == inst


def test_load_missing_field_names_it():
    with pytest.raises(InstanceParseError, match="w_min"):
        load_instance('{"nodes": ["a"], "links": [], "demands": [], '
                      '"w_max": 1, "weight_resolution": 1}')


def test_load_missing_link_field_names_location():
    text = (
        '{"nodes": ["a", "b"], "links": [{"tail": "a", "head": "b"}], '
        '"demands": [], "w_min": 1, "w_max": 1, "weight_resolution": 1}'
    )
    with pytest.raises(InstanceParseError, match=r"links\[0\]"):
        load_instance(text)


def test_load_surfaces_validation_violations():
    text = (
        '{"nodes": ["a", "b"], '
        '"links": [{"tail": "a", "head": "b", "capacity": -3}], '
        '"demands": [], "w_min": 1, "w_max": 10, "weight_resolution": 1}'
    )
    with pytest.raises(InstanceValidationError, match="negative capacity"):
        load_instance(text)


def test_load_rejects_bad_json():
    with pytest.raises(InstanceParseError):
        load_instance("{not json")


def test_derived_sets_recomputed():
    inst = mk_instance(
        "abc", [("a", "b", 1), ("b", "c", 1), ("c", "a", 1)],
        [("a", "b", 1), ("a", "c", 2), ("b", "c", 1)],
    )
    assert inst.origins() == ("a", "b")
    assert [d.destination for d in inst.demands_from("a")] == ["b", "c"]
    assert inst.destinations_from("a") == ("b", "c")
    assert inst.origin_bandwidth("a") == 3
    assert inst.dims() == InstanceDims(3, 3, 3, 2)
