import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmeigen.bmcheck import (BMConfig, EigenCache, bm_verify, build_subsolution, deficit, maximum_principle_probe,
                             rescaled_form, verify_subsolution)
from bmeigen.eigensolver import radial_eigenvalue_oracle
from bmeigen.geometry import Disc, Square, minkowski_combine
from bmeigen.operators import PLaplacian, PucciMinimal

H = 1 / 32


@pytest.fixture(scope="module")
def cache():
    return EigenCache()


def test_deficit_formula():
    # beta = 1/2 for the Laplacian
    assert deficit(4.0, 1.0, 2.0, 0.5, 0.5) == pytest.approx(2 ** -0.5 - 0.5 * (0.5 + 1.0))


@pytest.mark.parametrize("op", [PLaplacian(2), PLaplacian(3), PucciMinimal(1, 2)], ids=str)
def test_homothetic_discs_have_zero_deficit_with_oracle(op):
    beta = 1 / (op.alpha + 2)
    l0, l1 = radial_eigenvalue_oracle(op, 1.0), radial_eigenvalue_oracle(op, 2.0)
    for t in (0.25, 0.5):
        lt = radial_eigenvalue_oracle(op, 1 + t)
        assert abs(deficit(l0, l1, lt, t, beta)) <= 1e-7 * lt ** -beta


@settings(max_examples=50, deadline=None)
@given(l0=st.floats(0.1, 100), l1=st.floats(0.1, 100), lt=st.floats(0.1, 100), t=st.floats(0.01, 0.99),
       alpha=st.floats(-0.5, 2))
def test_deficit_scaling_property(l0, l1, lt, t, alpha):
    # dilating every domain by k multiplies lambda by k^-(alpha+2) and the deficit by k
    beta, k = 1 / (alpha + 2), 2.0
    s = k ** -(alpha + 2)
    assert deficit(s * l0, s * l1, s * lt, t, beta) == pytest.approx(k * deficit(l0, l1, lt, t, beta),
                                                                     rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(l0=st.floats(0.1, 100), l1=st.floats(0.1, 100), t=st.floats(0.01, 0.99), alpha=st.floats(-0.5, 2))
def test_rescaled_form_identity(l0, l1, t, alpha):
    beta = 1 / (alpha + 2)
    tp, k0, k1 = rescaled_form(l0, l1, t, beta)
    S = (1 - t) * l0 ** -beta + t * l1 ** -beta
    # rescaled domains have eigenvalue one and combine to O_t / S
    assert l0 / k0 ** (alpha + 2) == pytest.approx(1.0) and l1 / k1 ** (alpha + 2) == pytest.approx(1.0)
    assert (1 - tp) * k0 == pytest.approx((1 - t) / S) and tp * k1 == pytest.approx(t / S)


def test_bm_square_disc_passes(cache):
    reports = bm_verify(BMConfig(PLaplacian(2), Square(1), Disc((0, 0), 1), ts=(0.0, 0.5, 1.0), h=H), cache)
    assert [r.t for r in reports] == [0.0, 0.5, 1.0]
    assert reports[0].note == "endpoint passthrough" and reports[0].deficit == 0.0
    r = reports[1]
    assert r.passed and r.complete and r.deficit > 0
    assert r.subsolution["passed"] and r.probe["status"] == "checked" and r.probe["holds"]
    assert set(r.csv_row()) == {"t", "lambda0", "lambda1", "lambda_t", "deficit", "slack",
                                "sub_violation_frac", "pass"}


def test_symmetry_under_swap(cache):
    a = bm_verify(BMConfig(PLaplacian(2), Square(1), Disc((0, 0), 1), ts=(0.3,), h=H), cache)[0]
    b = bm_verify(BMConfig(PLaplacian(2), Disc((0, 0), 1), Square(1), ts=(0.7,), h=H), cache)[0]
    assert a.lambda_t == pytest.approx(b.lambda_t, rel=1e-9)
    assert a.deficit == pytest.approx(b.deficit, rel=1e-6, abs=1e-12)


def test_homothetic_discs_near_equality(cache):
    r = bm_verify(BMConfig(PLaplacian(2), Disc((0, 0), 1), Disc((0, 0), 2), ts=(0.5,), h=H), cache)[0]
    assert abs(r.relative_deficit) <= 1e-2 and r.passed


def test_subsolution_check_detects_bad_candidate(cache):
    op = PLaplacian(2)
    u0 = cache.get(op, Disc((0, 0), 1), H).eigenfunction
    # an eigenfunction of the unit disc is not a subsolution for a much smaller level
    rep = verify_subsolution(u0, op, 0.5 * 5.78)
    assert not rep["passed"]
    ok = verify_subsolution(u0, op, cache.get(op, Disc((0, 0), 1), H).lam)
    assert ok["passed"]


def test_probe_precondition_unmet():
    op = PLaplacian(2)
    d = Disc((0, 0), 1)
    rep = maximum_principle_probe(None, 1.0, op, d, subsolution={"passed": False})
    assert rep["status"] == "precondition-unmet" and rep["holds"] is None


def test_build_subsolution_range(cache):
    op = PLaplacian(2)
    d0, d1, t = Square(1), Disc((0, 0), 1), 0.5
    u0, u1 = cache.get(op, d0, H).eigenfunction, cache.get(op, d1, H).eigenfunction
    out = cache.get(op, minkowski_combine([d0, d1], [1 - t, t]), H).grid
    ubar, res = build_subsolution(u0, u1, t, out)
    assert ubar.values.max() <= 1.0 and ubar.values.min() >= 0.0
    assert np.all(ubar.values[~out.mask] == 0)


def test_config_validation():
    with pytest.raises(ValueError):
        BMConfig(PLaplacian(2), Square(1), Disc((0, 0), 1), ts=(1.5,))
