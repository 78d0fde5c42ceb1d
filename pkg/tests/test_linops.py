import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopvar.errors import EmptyRegion, InvalidParameter, ShiftNotAdmissible
from coopvar.linops import (
    FULL,
    ZERO_ONLY,
    ShiftedOperator,
    assemble,
    inv_sqrt_apply,
    l2_inner,
    l2_norm,
    laplacian,
    nonlocal_quadform,
    shifted_solve,
)

from conftest import grid_1d, grid_2d
from oracles import closed_form_sigma1, dense_laplacian


@pytest.mark.parametrize("make", [lambda: grid_1d(17), lambda: grid_2d(9)])
def test_laplacian_matches_dense_oracle(make):
    g = make()
    A = laplacian(g).toarray()
    assert np.allclose(A, dense_laplacian(g.shape, g.h), rtol=0, atol=1e-9 * np.abs(A).max())
    assert np.array_equal(A, A.T)


def test_zero_only_is_principal_submatrix(s2d):
    A = s2d.op.matrix.toarray()
    idx = s2d.grid.zero_index
    assert np.array_equal(s2d.op_zero.matrix.toarray(), A[np.ix_(idx, idx)])
    assert s2d.op_zero.size == idx.size


@pytest.mark.parametrize("n", [9, 65, 257])
def test_sigma1_closed_form_1d(n):
    op = ShiftedOperator(grid_1d(n))
    assert op.sigma1 == pytest.approx(closed_form_sigma1([n], [1.0]), rel=1e-12)


def test_sigma1_closed_form_2d(s2d):
    assert s2d.op.sigma1 == pytest.approx(closed_form_sigma1([24, 24], [1.0, 1.0]), rel=1e-12)


def test_check_shift(s1d):
    s1 = s1d.op.sigma1
    s1d.op.check_shift(s1 - 1e-9)
    with pytest.raises(ShiftNotAdmissible) as info:
        s1d.op.check_shift(s1)
    assert info.value.bound == pytest.approx(s1)
    with pytest.raises(ShiftNotAdmissible):
        s1d.op.solve(s1 + 1.0, np.ones(s1d.op.size))


def test_zero_only_shift_bound_is_larger(s1d):
    assert s1d.op_zero.sigma1 > s1d.op.sigma1
    lam = 0.5 * (s1d.op.sigma1 + s1d.op_zero.sigma1)
    s1d.op_zero.check_shift(lam)
    with pytest.raises(ShiftNotAdmissible):
        s1d.op.check_shift(lam)


def test_bad_region():
    with pytest.raises(InvalidParameter):
        ShiftedOperator(grid_1d(9), "plus_only")


def test_solve_and_apply_are_inverse(canon):
    rng = np.random.default_rng(1)
    lam = 0.3 * canon.op.sigma1
    b = rng.standard_normal(canon.op.size)
    x = shifted_solve(canon.op, lam, b)
    assert np.max(np.abs(canon.op.apply(x, lam) - b)) <= 1e-10 * np.max(np.abs(b))


def test_solve_accepts_column_stack(s1d):
    rhs = np.eye(s1d.op.size)[:, :3]
    X = s1d.op.solve(0.0, rhs)
    assert X.shape == rhs.shape
    assert np.allclose(s1d.op.matrix @ X, rhs, atol=1e-10)


def test_quadform_equals_inverse_square_root_norm(canon):
    rng = np.random.default_rng(2)
    lam = 0.25 * canon.op.sigma1
    u = rng.standard_normal(canon.op.size)
    q = nonlocal_quadform(canon.op, lam, u)
    Su = inv_sqrt_apply(canon.op, lam, u)
    assert q == pytest.approx(l2_inner(canon.op, Su, Su), rel=1e-10)


def test_quadform_zero_vector(s1d):
    assert s1d.op.quadform(0.0, np.zeros(s1d.op.size)) == 0.0


def test_dense_inverse(s1d):
    G = s1d.op.dense_inverse(1.0)
    A = s1d.op.matrix.toarray() - np.eye(s1d.op.size)
    assert np.allclose(G @ A, np.eye(s1d.op.size), atol=1e-10)


def test_factor_cache_is_bounded(s1d):
    op = assemble(s1d.grid)
    for k in range(12):
        op.factor(-float(k))
    assert len(op._factors) <= 8


def test_l2_norm_of_constant(s1d):
    u = np.ones(s1d.op.size)
    assert l2_norm(s1d.op, u) == pytest.approx(np.sqrt(s1d.op.size * s1d.grid.cell_volume))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), frac=st.floats(-3.0, 0.99))
def test_quadform_positive_and_symmetric(s1d, seed, frac):
    rng = np.random.default_rng(seed)
    lam = frac * s1d.op.sigma1
    u = rng.standard_normal(s1d.op.size)
    w = rng.standard_normal(s1d.op.size)
    assert s1d.op.quadform(lam, u) > 0
    a = s1d.op.quadform(lam, u, w)
    b = s1d.op.quadform(lam, w, u)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_resolvent_preserves_positivity(s2d, seed):
    # (A - lam)^{-1} is entrywise positive below sigma_1 (maximum principle)
    rng = np.random.default_rng(seed)
    f = rng.random(s2d.op.size) + 1e-3
    x = s2d.op.solve(0.5 * s2d.op.sigma1, f)
    assert np.all(x > 0)
