import itertools
import json

import pytest

import attnroute as ar

MINIMAL = {
    "name": "minimal",
    "wsp": {"rows": 1, "width": 10},
    "instterms": [
        {"id": 0, "net": 0, "kind": "G", "x1": 0, "x2": 2, "row": 0},
        {"id": 1, "net": 0, "kind": "SD", "x1": 5, "x2": 7, "row": 0},
    ],
}

SMALL = json.dumps({"n_instterms": [6, 8], "nets_count": [2, 3], "rows": 1, "width": 10,
                    "max_term_length": 4, "max_depth": 3})


def test_parse_and_route_minimal_problem():
    p = ar.parse_problem(json.dumps(MINIMAL))
    assert p.instterm_count == 2 and p.net_count == 1
    assert ar.validate_problem(p) == []
    inst = ar.build_instance(p)
    assert len(inst) == 1
    result = ar.route(inst, [0])
    assert result["opens"] == 0
    assert result["cost"] == result["wirelength"]


def test_generation_is_deterministic_and_round_trips():
    a = ar.generate_problem(seed=7)
    b = ar.generate_problem(seed=7)
    assert a == b
    assert ar.parse_problem(a.to_json()) == a


def test_cost_identity_and_invalid_orders():
    inst = ar.build_instance(ar.generate_problem(seed=3))
    n = len(inst)
    for seed in range(5):
        r = ar.route(inst, ar.random_order(inst, seed))
        assert r["cost"] == ar.WIRELENGTH_WEIGHT * r["wirelength"] + ar.OPEN_WEIGHT * r["opens"]
    with pytest.raises(ar.InvalidOrder):
        ar.route(inst, [0] * n)


def test_ga_never_beats_the_oracle():
    for seed in range(20):
        try:
            inst = ar.build_instance(ar.generate_problem(SMALL, seed=seed))
        except ar.ProblemError:
            continue
        if not 2 <= len(inst) <= 5:
            continue
        best = min(ar.route(inst, list(o))["cost"] for o in itertools.permutations(range(len(inst))))
        assert ar.route(inst, ar.oracle_order(inst))["cost"] == best
        ga = ar.ga_sequence(inst, generations=5, population=8, seed=seed)
        assert ga["cost"] >= best
        assert ga["history"] == sorted(ga["history"], reverse=True)


def test_padding_and_mask():
    p = ar.generate_problem(seed=1)
    inst = ar.build_instance(p, n_max=200)
    assert inst.n_max == 200
    assert sum(inst.mask) == len(inst)
    assert all(f == (0,) * 7 or list(f) == [0] * 7 for f in inst.features[len(inst):])


def test_statistics_helpers():
    assert ar.paired_ttest([1, 2, 3], [1, 2, 3]) == 1.0
    assert ar.paired_ttest([1, 2, 3], [2, 3, 5]) == pytest.approx(0.0286, abs=1e-4)
    assert ar.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)


def test_bad_input_raises_value_errors():
    with pytest.raises(ValueError):
        ar.parse_problem("{")
    with pytest.raises(ValueError):
        ar.build_instance(ar.generate_problem(seed=1), pad="sideways")
