import numpy as np
import pytest

from exactdesign.criteria import DesignProblem
from exactdesign.errors import ParseError, RankError
from exactdesign.instances import (
    InstanceSpec,
    Kind,
    correlation_matrix,
    fingerprint,
    format_instance,
    generate,
    parse_instance,
    read_instance,
    write_instance,
)


def test_spec_examples():
    p = generate(InstanceSpec(50, 5, Kind.INDEPENDENT, 1))
    assert p.N == 7 and p.m == 50 and p.n == 5
    assert set(np.unique(p.u_global)) <= {1, 2}
    q = generate(InstanceSpec(10, 1, "correlated", 3))
    assert q.N == 1 and np.all(q.u_global == 1)


@pytest.mark.parametrize("kind", ["independent", "correlated"])
def test_deterministic(kind):
    a = generate(InstanceSpec(30, 3, kind, 5))
    b = generate(InstanceSpec(30, 3, kind, 5))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.u_global, b.u_global)
    c = generate(InstanceSpec(30, 3, kind, 6))
    assert not np.array_equal(a.A, c.A)


def test_kind_parse():
    assert Kind.parse("i") is Kind.INDEPENDENT
    assert Kind.parse("corr") is Kind.CORRELATED
    with pytest.raises(ValueError):
        Kind.parse("uniform")


def test_correlated_rows_have_requested_correlation():
    p = generate(InstanceSpec(10_000, 4, "correlated", 1, rho=0.9))
    C = np.corrcoef(p.A.T)
    np.testing.assert_allclose(C, correlation_matrix(4, 0.9), atol=0.03)
    q = generate(InstanceSpec(10_000, 4, "independent", 1))
    np.testing.assert_allclose(np.corrcoef(q.A.T), np.eye(4), atol=0.03)


def test_round_trip(tmp_path, toy):
    path = tmp_path / "toy.txt"
    write_instance(toy, path)
    assert read_instance(path) == toy
    p = generate(InstanceSpec(20, 2, "correlated", 4))
    assert parse_instance(format_instance(p)) == p
    assert fingerprint(format_instance(p)) == fingerprint(format_instance(p).encode())


def test_comments_and_blank_lines():
    text = "# toy\n3 1 2\n\n2 2 2  # caps\n1\n2\n3\n"
    p = parse_instance(text)
    assert p == DesignProblem(np.array([[1.0], [2.0], [3.0]]), 2, [2, 2, 2])


def test_row_count_mismatch():
    with pytest.raises(ParseError) as err:
        parse_instance("2 1 1\n1 1\n1\n2\n3\n")
    assert err.value.line is not None


@pytest.mark.parametrize(
    "text",
    ["", "2 1\n", "2 1 1\n1\n1\n2\n", "2 1 1\n1 1\n1\nx\n", "2 1 1\n1 1\n1\ninf\n", "2 1 1\n1 a\n1\n2\n"],
)
def test_malformed(text):
    with pytest.raises(ParseError):
        parse_instance(text)


def test_rank_deficient_file():
    with pytest.raises(RankError):
        parse_instance("3 2 2\n1 1 1\n1 1\n2 2\n3 3\n")
