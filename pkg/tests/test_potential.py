import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steplike import potential as P


def test_square_well_values_and_support():
    q = P.square_well(-1.0, -2.0, -1.0)
    assert P.evaluate(q, -1.5) == -1.0
    assert P.evaluate(q, 0.5) == 0.0
    assert q.support() == (-2.0, -1.0)
    assert q.is_compact()


def test_plus_minus_split(headline):
    qp, qm = headline.plus(), headline.minus()
    x = np.linspace(-3, 3, 61)
    np.testing.assert_array_equal(P.evaluate(qp, x) + P.evaluate(qm, x), P.evaluate(headline, x))
    assert np.all(P.evaluate(qp, x[x < 0]) == 0)
    assert np.all(P.evaluate(qm, x[x > 0]) == 0)


def test_soliton_profile():
    q = P.soliton(1.0, math.sqrt(2.0))
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(P.evaluate(q, x), -2 / np.cosh(x) ** 2, atol=1e-14)


def test_classify_norms_of_barrier():
    q = P.constant(0.5, 0.0, 1.0)
    rep = P.classify(q)
    assert rep.l1_plus == pytest.approx(0.5, rel=1e-12)
    assert rep.l1x_plus == pytest.approx(0.25, rel=1e-12)
    assert rep.l11_plus == pytest.approx(0.75, rel=1e-12)
    assert rep.admissible


def test_contour_params_headline(headline):
    cp = P.contour_params(headline)
    assert cp.beta == pytest.approx(2.0)
    assert cp.h == pytest.approx(4.8637, abs=1e-3)


def test_contour_constants_decrease_with_height():
    assert P.C_minus(8.0, 1.0, 1.0) < P.C_minus(4.0, 1.0, 1.0)
    assert P.C_plus(8.0, 1.0, 1.0) < P.C_plus(4.0, 1.0, 1.0)


def test_truncate_cuts_left_tail():
    q = P.exp_decay(-1.0, 1.0, -P.INF, 0.0)
    qt = P.truncate(q, 3.0)
    assert P.evaluate(qt, -3.5) == 0.0
    assert P.evaluate(qt, -2.0) == pytest.approx(-math.exp(-2.0))


def test_config_round_trip(headline):
    q = P.from_config(headline.to_dict())
    x = np.linspace(-3, 2, 51)
    np.testing.assert_array_equal(P.evaluate(q, x), P.evaluate(headline, x))


def test_unknown_shape_rejected():
    with pytest.raises(P.PotentialError):
        P.from_config({"pieces": [{"shape": "lorentzian"}]})


def test_sampled_csv(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("x,q\n0,0\n1,1\n2,0\n")
    q = P.from_config({"pieces": [{"shape": "sampled", "file": "q.csv"}]}, tmp_path)
    assert P.evaluate(q, 0.5) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 2), st.floats(-2, 2))
def test_integrate_constant_piece(level, width, a):
    q = P.constant(level, a, a + width)
    val = P.integrate(q, lambda v, x: v, -P.INF, P.INF)
    assert val == pytest.approx(level * width, rel=1e-12, abs=1e-14)
