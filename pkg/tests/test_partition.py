import json

import numpy as np
import pytest

from core.errors import DomainError, PartitionError
from core.partition import (
    Cell,
    Interval,
    MultilevelPartition,
    NestedStructure,
    SupportIndex,
    build_dyadic,
    build_perturbed,
    interval_level,
    load_partition,
    nested_structure,
    omega_neighborhood,
    save_partition,
    support_interval,
    supports,
)


def test_dyadic_cell_counts():
    P = build_dyadic((-1.0, 2.0), 3, 2)
    assert P.L == 3
    assert [P.ncells(m) for m in range(4)] == [5, 10, 20, 40]
    assert np.allclose(P.lengths(0), 0.6)
    assert np.allclose(P.lengths(3), 3.0 / 40)


def test_dyadic_order3_finest_level():
    P = build_dyadic((-1.0, 2.0), 8, 3)
    assert P.ncells(8) == 7 * 256
    assert np.allclose(P.lengths(8), 3.0 / (7 * 256))


def test_level_zero_only():
    P = build_dyadic((0.0, 1.0), 0, 2)
    assert P.L == 0
    assert P.ncells(0) == 5


def test_dyadic_r_rho():
    P = build_dyadic((-1.0, 2.0), 4, 2)
    assert P.r_rho() == (0.5, 0.5)
    assert P.measured_lambda() == pytest.approx(1.0)


def test_level_zero_too_coarse():
    with pytest.raises(PartitionError, match="2k\\+1"):
        MultilevelPartition(Interval(0.0, 1.0), (np.linspace(0.0, 1.0, 5),), 2)


def test_level_outside_range():
    P = build_dyadic((0.0, 1.0), 2, 2)
    with pytest.raises(DomainError):
        P.knots(3)


def test_perturbed_without_jitter_is_dyadic():
    P = build_perturbed((-1.0, 2.0), 4, 2, 0.0, 7)
    D = build_dyadic((-1.0, 2.0), 4, 2)
    for m in range(5):
        assert np.array_equal(P.knots(m), D.knots(m))


def test_perturbed_is_reproducible():
    a = build_perturbed((-1.0, 2.0), 5, 3, 0.2, 42)
    b = build_perturbed((-1.0, 2.0), 5, 3, 0.2, 42)
    c = build_perturbed((-1.0, 2.0), 5, 3, 0.2, 43)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_perturbed_declares_measured_lambda():
    P = build_perturbed((-1.0, 2.0), 5, 2, 0.2, 42)
    assert P.measured_lambda() <= P.lam * (1 + 1e-9)
    r, rho = P.r_rho()
    for m in range(1, P.L + 1):
        ratio = P.lengths(m) / np.repeat(P.lengths(m - 1), 2)
        assert np.all(ratio >= r * (1 - 1e-9))
        assert np.all(ratio <= rho * (1 + 1e-9))


@pytest.mark.parametrize("L", [0, 1, 4, 7])
def test_perturbed_lambda_grows_at_most_geometrically(L):
    jitter = 0.2
    r = (0.5 + jitter) / (0.5 - jitter)
    P = build_perturbed((-1.0, 2.0), L, 2, jitter, 11)
    assert P.lam >= r * (1 - 1e-12)
    assert P.lam <= r ** max(L, 1) * (1 + 1e-9)
    for m in range(L + 1):
        h = P.lengths(m)
        assert np.max(h) / np.min(h) <= r ** m * (1 + 1e-9)


def test_perturbed_rejects_large_jitter():
    with pytest.raises(PartitionError, match="jitter"):
        build_perturbed((-1.0, 2.0), 3, 2, 0.4, 0)


def test_support_counts():
    P = build_dyadic((-1.0, 2.0), 2, 2)
    assert len(supports(P, 0)) == 4
    assert [len(supports(P, m)) for m in range(3)] == [4, 9, 19]
    P3 = build_dyadic((-1.0, 2.0), 1, 3)
    assert len(supports(P3, 0)) == 5


def test_support_interval():
    P = build_dyadic((-1.0, 2.0), 1, 2)
    Q = support_interval(P, SupportIndex(0, 1))
    assert Q.lo == pytest.approx(-0.4)
    assert Q.hi == pytest.approx(0.8)
    with pytest.raises(DomainError):
        support_interval(P, SupportIndex(0, 4))


def test_omega_neighborhood():
    P = build_dyadic((-1.0, 2.0), 1, 2)
    x = P.knots(0)
    assert omega_neighborhood(P, Cell(0, 2)) == Interval(x[1], x[4])
    assert omega_neighborhood(P, Cell(0, 0)) == Interval(x[0], x[2])
    assert omega_neighborhood(P, Cell(0, 4)) == Interval(x[3], x[5])
    P3 = build_dyadic((-1.0, 2.0), 0, 3)
    y = P3.knots(0)
    assert omega_neighborhood(P3, Cell(0, 3)) == Interval(y[1], y[6])


def test_omega_comparable_to_cell():
    P = build_perturbed((-1.0, 2.0), 4, 2, 0.2, 3)
    k = P.k
    for m in range(P.L + 1):
        for j in range(P.ncells(m)):
            ratio = omega_neighborhood(P, Cell(m, j)).length / P.cell(m, j).length
            assert 1.0 <= ratio <= (2 * k - 1) * P.lam * (1 + 1e-9)


def test_interval_level():
    P = build_dyadic((-1.0, 2.0), 4, 2)
    assert interval_level(P, Interval(0.0, 0.31)) == 1
    assert interval_level(P, P.window) == 0
    assert interval_level(P, P.cell(4, 3)) == 4
    with pytest.raises(DomainError):
        interval_level(P, Interval(1.5, 2.5))


def test_truncated_shares_knots():
    P = build_dyadic((-1.0, 2.0), 4, 2)
    T = P.truncated(2)
    assert T.L == 2
    assert np.array_equal(T.knots(2), P.knots(2))


def test_nested_structure_conditions():
    P = build_dyadic((-1.0, 2.0), 4, 2)
    s = nested_structure(P)
    assert s.size == sum(len(supports(P, m)) for m in range(P.L + 1))
    assert s.check_conditions(P.lam) == {"a": True, "b": True, "c": True, "d": True, "e": True}


def test_nested_structure_children_fill_parent():
    P = build_dyadic((-1.0, 2.0), 3, 3)
    s = nested_structure(P)
    for i in range(s.size):
        kids = s.children(i)
        if len(kids) and s.level[i] < s.depth - 1:
            assert s.lengths[kids].sum() == pytest.approx(s.lengths[i])


def test_nested_structure_level_measure():
    P = build_dyadic((-1.0, 2.0), 3, 2)
    s = nested_structure(P)
    for m in range(P.L + 1):
        h = 3.0 / (5 * 2 ** m)
        assert s.level_measure(m) == pytest.approx(3.0 - (P.k - 1) * h)


def test_nested_structure_labels():
    P = build_dyadic((-1.0, 2.0), 2, 2)
    s = nested_structure(P)
    i = s.index_of(SupportIndex(1, 3))
    assert s.level[i] == 1
    assert s.lo[i] == pytest.approx(P.knots(1)[3])


def test_dyadic_tree():
    t = NestedStructure.dyadic_tree(4)
    assert t.size == 15
    assert t.depth == 4
    assert list(t.roots()) == [0]
    assert list(t.children(0)) == [1, 2]
    assert all(t.check_conditions(1.0).values())
    with pytest.raises(DomainError):
        NestedStructure.dyadic_tree(0)


def test_save_and_load(tmp_path):
    P = build_perturbed((-1.0, 2.0), 3, 2, 0.1, 5)
    path = tmp_path / "partition.json"
    save_partition(P, str(path))
    Q = load_partition(str(path))
    assert Q.to_dict() == P.to_dict()
    assert Q.digest() == P.digest()


def test_load_rejects_non_nested_levels(tmp_path):
    path = tmp_path / "bad.json"
    data = {"window": [0.0, 1.0], "k": 2, "levels": [np.linspace(0, 1, 6).tolist(), np.linspace(0, 1, 12).tolist()]}
    path.write_text(json.dumps(data))
    with pytest.raises(PartitionError, match="condition \\(b\\)"):
        load_partition(str(path))


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(PartitionError):
        load_partition(str(path))
