import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from wavesurrogate.splines import (TensorBasis, basis_funs, cardinal_centers, collocation_matrix, colex,
                                   colex_inverse, eval_basis, gauss_legendre, is_cardinal, make_open_uniform)


def scipy_basis(kv, k, x, deriv=0):
    c = np.zeros(kv.m)
    c[k] = 1.0
    spl = BSpline(kv.knots, c, kv.p, extrapolate=False)
    return np.nan_to_num(spl(x, nu=deriv))


@pytest.mark.parametrize("p,m", [(1, 5), (2, 12), (3, 17), (4, 20)])
def test_values_and_derivatives_match_scipy(p, m):
    kv = make_open_uniform(p, m)
    x = np.linspace(0, 1, 101)[:-1] + 0.0037
    for k in range(m):
        np.testing.assert_allclose(eval_basis(kv, k, x), scipy_basis(kv, k, x), atol=1e-14)
        np.testing.assert_allclose(eval_basis(kv, k, x, deriv=1), scipy_basis(kv, k, x, 1), atol=1e-11)


def test_open_uniform_knots():
    kv = make_open_uniform(2, 7)
    np.testing.assert_allclose(kv.knots, [0, 0, 0, 0.2, 0.4, 0.6, 0.8, 1, 1, 1])
    assert kv.h == pytest.approx(0.2)
    assert kv.n_elements == 5


@pytest.mark.parametrize("p,m", [(0, 5), (2, 4), (3, 6)])
def test_rejects_bad_sizes(p, m):
    with pytest.raises(ValueError):
        make_open_uniform(p, m)


def test_last_function_is_one_at_right_end():
    kv = make_open_uniform(3, 9)
    assert eval_basis(kv, 8, 1.0) == pytest.approx(1.0)
    assert eval_basis(kv, 0, 0.0) == pytest.approx(1.0)


def test_eval_basis_index_error():
    kv = make_open_uniform(2, 6)
    with pytest.raises(IndexError):
        eval_basis(kv, 6, 0.5)


@settings(max_examples=50, deadline=None)
@given(p=st.integers(1, 5), extra=st.integers(1, 20), x=st.floats(0, 1))
def test_partition_of_unity(p, extra, x):
    kv = make_open_uniform(p, 2 * p + extra)
    _, vals, ders = basis_funs(kv.knots, p, np.array([x]), deriv=1)
    assert vals.sum() == pytest.approx(1.0, abs=1e-13)
    assert abs(ders.sum()) < 1e-9 * kv.m
    assert np.all(vals >= -1e-15)


def test_cardinal_functions_are_translates():
    kv = make_open_uniform(3, 14)
    h = kv.h
    x = np.linspace(0, 4 * h, 33)
    ref = eval_basis(kv, 3, x)
    for k in range(4, kv.m - 3):
        np.testing.assert_allclose(eval_basis(kv, k, x + (k - 3) * h), ref, atol=1e-14)


def test_cardinal_centers_are_support_midpoints():
    kv = make_open_uniform(2, 10)
    centers = cardinal_centers(kv)
    k = np.arange(2, 8)
    # support of function k is [(k - p) h, (k + 1) h]
    np.testing.assert_allclose(centers, ((k - 2) + (k + 1)) * kv.h / 2)


def test_colex_examples():
    assert colex((0, 0), 5) == 0
    assert colex((3, 0), 5) == 3
    assert colex((0, 1), 5) == 5
    assert colex((2, 4), 5) == 22
    assert colex_inverse(22, 5) == (2, 4)
    with pytest.raises(IndexError):
        colex((5, 0), 5)
    with pytest.raises(IndexError):
        colex_inverse(25, 5)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 40), data=st.data())
def test_colex_roundtrip(m, data):
    i = data.draw(st.integers(0, m * m - 1))
    assert colex(colex_inverse(i, m), m) == i


def test_tensor_basis_cardinal_flags():
    b = TensorBasis(2, 7)
    assert b.N == 49
    assert b.n_cardinal == 9
    assert is_cardinal(b, colex((2, 2), 7))
    assert not is_cardinal(b, colex((1, 3), 7))
    assert not is_cardinal(b, colex((3, 5), 7))
    assert sum(is_cardinal(b, i) for i in range(b.N)) == b.n_cardinal


def test_element_tables_match_collocation():
    b = TensorBasis(3, 11)
    nodes, weights, V, D = b.element_tables()
    assert weights.sum() == pytest.approx(1.0)
    e = 4
    x = (e + nodes) * b.h
    A = collocation_matrix(b.kv.knots, 3, x)
    Ad = collocation_matrix(b.kv.knots, 3, x, deriv=1)
    np.testing.assert_allclose(V[e], A[:, e:e + 4].T, atol=1e-15)
    np.testing.assert_allclose(D[e], Ad[:, e:e + 4].T, atol=1e-12)


def test_gauss_legendre_exactness():
    x, w = gauss_legendre(4)
    for d in range(8):
        assert np.dot(w, x ** d) == pytest.approx(1 / (d + 1), rel=1e-14)
