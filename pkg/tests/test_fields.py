"""Expression field tests."""

import math
import pickle

import numpy as np
import pytest

from jumplab.errors import ConfigError
from jumplab.fields import FieldExpr, expression_eval


def test_constant_expression():
    assert expression_eval("1", [0.3, 0.7]) == 1.0


def test_polynomial_expression():
    assert expression_eval("x1*x1 + x2", [2.0, 3.0]) == pytest.approx(7.0)


def test_trig_expression():
    assert expression_eval("sin(x1)", [math.pi / 2]) == pytest.approx(1.0)


def test_constants_and_functions():
    assert expression_eval("cos(pi)", [0.0]) == pytest.approx(-1.0)
    assert expression_eval("exp(1) - e", [0.0]) == pytest.approx(0.0, abs=1e-12)
    assert expression_eval("min(x1, 2, -1)", [5.0]) == -1.0
    assert expression_eval("max(abs(x1), 0.5)", [-0.2]) == 0.5
    assert expression_eval("2**x1 / 4", [3.0]) == pytest.approx(2.0)


def test_vectorized_evaluation_and_broadcast():
    f = FieldExpr("x1 + 2*x2", 2)
    pts = np.array([[1.0, 1.0], [0.0, 2.0], [3.0, -1.0]])
    assert np.allclose(f(pts), [3.0, 4.0, 1.0])
    const = FieldExpr("7", 2)
    assert np.allclose(const(pts), [7.0, 7.0, 7.0])


def test_builtin_names():
    assert FieldExpr("zero", 2)([1.0, 2.0]) == 0.0
    assert FieldExpr("one", 1)([4.0]) == 1.0


def test_unknown_identifier_reports_position():
    with pytest.raises(ConfigError, match="offset"):
        FieldExpr("x1 + y", 2)
    with pytest.raises(ConfigError, match="x3"):
        FieldExpr("x3", 2)


def test_arity_mismatch():
    with pytest.raises(ConfigError, match="one argument"):
        FieldExpr("sin(x1, x2)", 2)
    with pytest.raises(ConfigError, match="two arguments"):
        FieldExpr("min(x1)", 2)


def test_rejected_syntax():
    for bad in ("__import__('os')", "x1.real", "[1,2]", "x1 if 1 else 2",
                "lambda: 1", "f'{x1}'"):
        with pytest.raises(ConfigError):
            FieldExpr(bad, 2)


def test_parse_error_reports_offset():
    with pytest.raises(ConfigError, match="offset"):
        FieldExpr("x1 + * 2", 2)


def test_pickle_roundtrip():
    f = FieldExpr("sin(x1) * exp(x2)", 2)
    g = pickle.loads(pickle.dumps(f))
    pts = np.array([[0.5, 0.1], [1.0, 0.0]])
    assert np.allclose(f(pts), g(pts))


def test_deterministic():
    f = FieldExpr("sin(x1)*cos(x2) + x1**2", 2)
    pts = np.array([[0.3, 0.8]])
    assert f(pts)[0] == f(pts)[0] == FieldExpr("sin(x1)*cos(x2) + x1**2", 2)(pts)[0]
