import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmeigen.operators import (EllipticityError, NormalizedPLaplacian, PLaplacian, PucciMinimal,
                               SingularGradientError, check_convexity_in_X, check_ellipticity, check_homogeneity,
                               eval_F, eval_G, flipped_pucci, sym_eigenvalues)

OPS = [PLaplacian(1.5), PLaplacian(2), PLaplacian(3), NormalizedPLaplacian(2), NormalizedPLaplacian(3),
       PucciMinimal(1, 2)]


def test_laplacian_is_minus_trace():
    X = np.array([[1.0, 0.3], [0.3, -2.0]])
    assert eval_F(PLaplacian(2), [0.4, 0.1], X) == pytest.approx(1.0)


def test_p_laplacian_closed_form():
    p, xi, X = 3.0, np.array([1.0, 2.0]), np.array([[2.0, 1.0], [1.0, -1.0]])
    n = np.linalg.norm(xi)
    expected = -(n ** (p - 2) * np.trace(X) + (p - 2) * n ** (p - 4) * xi @ X @ xi)
    assert eval_F(PLaplacian(p), xi, X) == pytest.approx(expected, rel=1e-13)


def test_normalized_closed_form():
    p, xi, X = 3.0, np.array([3.0, 4.0]), np.array([[1.0, 0.5], [0.5, 2.0]])
    e = xi / 5
    expected = -(np.trace(X) + (p - 2) * e @ X @ e) / p
    assert eval_F(NormalizedPLaplacian(p), xi, X) == pytest.approx(expected, rel=1e-13)


def test_pucci_on_diagonal_matrix():
    X = np.diag([2.0, -3.0])
    # -(lam * positive + Lam * negative)
    assert eval_F(PucciMinimal(1, 2), [0, 0], X) == pytest.approx(-(1 * 2 + 2 * -3))


def test_G_transform():
    op, xi, X = PLaplacian(3), np.array([0.5, -1.0]), np.array([[1.0, 0.2], [0.2, 0.7]])
    assert eval_G(op, xi, X) == pytest.approx(-eval_F(op, xi, np.outer(xi, xi) - X))


def test_singular_gradient_raises():
    with pytest.raises(SingularGradientError):
        eval_F(NormalizedPLaplacian(3), [0.0, 0.0], np.eye(2))


@pytest.mark.parametrize("bad", [lambda: PLaplacian(1.0), lambda: PucciMinimal(2, 1), lambda: PucciMinimal(0, 1)])
def test_invalid_parameters(bad):
    with pytest.raises((EllipticityError, ValueError)):
        bad()


@pytest.mark.parametrize("op", OPS, ids=lambda o: o.label if hasattr(o, "label") else str(o))
def test_hypothesis_checks_pass(op):
    assert check_homogeneity(op, 2000).passed
    assert check_convexity_in_X(op, 2000).passed
    c, C = check_ellipticity(op, 2000)
    lo, hi = op.ellipticity
    assert lo * (1 - 1e-10) <= c <= C <= hi * (1 + 1e-10)


def test_flipped_pucci_is_not_convex():
    assert not check_convexity_in_X(flipped_pucci(1, 2), 2000).passed


def test_sym_eigenvalues_descending_and_exact():
    X = np.array([[[2.0, 1.0], [1.0, 2.0]]])
    e1, e2 = sym_eigenvalues(X)
    assert (e1[0], e2[0]) == pytest.approx((3.0, 1.0))


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite, c=finite, s=st.floats(0.01, 3))
def test_degenerate_ellipticity_property(a, b, c, s):
    # adding a PSD matrix never increases F
    X = np.array([[a, b], [b, c]])
    Y = s * np.array([[1.0, 0.3], [0.3, 0.5]])
    xi = np.array([0.7, -0.4])
    for op in OPS:
        assert eval_F(op, xi, X + Y) <= eval_F(op, xi, X) + 1e-9
