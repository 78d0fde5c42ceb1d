import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopvar.errors import InvalidParameter, ShiftNotAdmissible
from coopvar.linops import ShiftedOperator
from coopvar.spectra import (
    block_shift_identity_error,
    cooperative_matrix,
    cooperative_proportionality_error,
    dense_principal,
    gershgorin_lower,
    perron_pair,
    principal_cooperative,
    principal_L1,
    principal_selfadjoint,
    profile_eps_sweep,
    sigma_bound,
    sigma_bound_supinf,
)

from conftest import grid_1d, grid_2d
from oracles import closed_form_sigma1, dense_laplacian, dense_sigma_bound

# Sigma^h(lambda) at lambda = 0, sigma_1/4, sigma_1/2 from the dense Cholesky
# oracle in oracles.dense_sigma_bound (frozen).
SIGMA_FROZEN = {
    "1d65": [803.5330751887516, 582.7651251474235, 375.18732203762886],
    "1d129": [943.5398510810345, 688.7433059364847, 446.5508497545301],
    "2d24": [2780.3653972827547, 2022.6631001402209, 1308.083260730856],
}


@pytest.mark.parametrize("n", [9, 65, 257])
def test_principal_selfadjoint_closed_form(n):
    op = ShiftedOperator(grid_1d(n))
    pair = principal_selfadjoint(op)
    assert pair.value == pytest.approx(closed_form_sigma1([n], [1.0]), rel=1e-10)
    assert pair.positivity_margin > 0
    assert np.max(pair.function) == pytest.approx(1.0)
    h = 1.0 / (n + 1)
    x = h * np.arange(1, n + 1)
    assert np.allclose(pair.function, np.sin(np.pi * x) / np.sin(np.pi * x).max(), atol=1e-8)


def test_principal_2d_second_order_convergence():
    vals = [principal_selfadjoint(ShiftedOperator(grid_2d(n))).value for n in (15, 31, 63)]
    errs = [abs(v - 2 * np.pi**2) for v in vals]
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    assert all(abs(o - 2.0) <= 0.1 for o in orders)


def test_zero_region_per_component(s2d):
    pair = principal_selfadjoint(s2d.op_zero)
    ncomp, _ = s2d.op_zero.components()
    assert ncomp == 2
    dense = np.linalg.eigvalsh(s2d.op_zero.matrix.toarray())[0]
    assert pair.value == pytest.approx(dense, rel=1e-10)
    # the eigenfunction lives on the component carrying the eigenvalue
    assert pair.support.sum() < s2d.op_zero.size
    assert np.all(pair.function[pair.support] > 0)
    assert np.all(pair.function[~pair.support] == 0)


def test_gershgorin_lower_bound(s1d):
    lb = gershgorin_lower(s1d.op.matrix)
    assert lb <= np.linalg.eigvalsh(s1d.op.matrix.toarray())[0]


@pytest.mark.parametrize("alpha,beta", [(4, 9), (1, 1), (0.5, 8)])
def test_block_identity(canon, alpha, beta):
    s1 = principal_selfadjoint(canon.op).value
    assert block_shift_identity_error(canon.op, alpha, beta) <= 1e-9 * s1
    assert cooperative_proportionality_error(canon.op, alpha, beta) <= 1e-9


def test_cooperative_with_potentials_against_dense(s1d):
    rng = np.random.default_rng(3)
    V1 = rng.random(s1d.op.size) * 5
    V2 = rng.random(s1d.op.size) * 5
    pair = principal_cooperative(s1d.op, V1, V2, 2.0, 3.0)
    dense = dense_principal(cooperative_matrix(s1d.op, V1, V2, 2.0, 3.0))
    assert pair.value == pytest.approx(dense, rel=1e-9)
    phi, psi = pair.function
    assert np.all(phi > 0) and np.all(psi > 0)


def test_cooperative_rejects_nonpositive_coupling(s1d):
    with pytest.raises(InvalidParameter):
        principal_cooperative(s1d.op, alpha=0.0, beta=1.0)
    with pytest.raises(InvalidParameter):
        principal_L1(s1d.op, 1.0, -1.0)


def test_L1_equal_coupling_closed_form(canon):
    c = 3.0
    s10 = principal_selfadjoint(canon.op_zero).value
    assert principal_L1(canon.op_zero, c, c).value == pytest.approx((s10 - c) / 2, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(0.1, 20), beta=st.floats(0.1, 20))
def test_remark_inequality(s1d, alpha, beta):
    if abs(alpha - beta) < 1e-3:
        return
    l1 = principal_L1(s1d.op_zero, alpha, beta).value
    coop0 = principal_cooperative(s1d.op_zero, 0.0, 0.0, alpha, beta).value
    assert l1 < coop0


def test_perron_pair_symmetric_dense_check(s2d):
    val, vec, res, margin, it, support = perron_pair(s2d.op.matrix, True, 0.0)
    assert res <= 1e-8 * val
    assert margin > 0
    assert val == pytest.approx(np.linalg.eigvalsh(s2d.op.matrix.toarray())[0], rel=1e-12)


@pytest.mark.parametrize("key,make", [("1d65", lambda: grid_1d(65)), ("2d24", lambda: grid_2d(24))])
def test_bound_chain(key, make):
    g = make()
    op, opz = ShiftedOperator(g), ShiftedOperator(g, "zero_only")
    s1 = op.sigma1
    for k, lam in enumerate([0.0, s1 / 4, s1 / 2]):
        sb = sigma_bound(op, opz, lam)
        assert sb.lower_bound < sb.value <= sb.upper_bound * (1 + 1e-12)
        assert sb.value == pytest.approx(SIGMA_FROZEN[key][k], rel=1e-9)
        assert sb.minimizer_sign == "positive"
        assert sb.pencil_asymmetry < 1e-10


def test_sigma_frozen_value_n129(s1d129):
    sb = sigma_bound(s1d129.op, s1d129.op_zero, 0.0)
    assert sb.value == pytest.approx(SIGMA_FROZEN["1d129"][0], rel=1e-9)


def test_sigma_matches_live_dense_oracle(s1d):
    A = dense_laplacian(s1d.grid.shape, s1d.grid.h)
    for lam in (-3.0, 1.0):
        sb = sigma_bound(s1d.op, s1d.op_zero, lam)
        assert sb.value == pytest.approx(dense_sigma_bound(A, s1d.grid.zero_index, lam), rel=1e-9)


def test_sigma_zero_only_denominator_reproduces_upper_bound(s1d):
    sb = sigma_bound(s1d.op, s1d.op_zero, 1.0, denominator="zero_only")
    assert sb.value == pytest.approx(sb.upper_bound, rel=1e-9)


def test_sigma_decreases_in_lambda(s1d):
    s1 = s1d.op.sigma1
    vals = [sigma_bound(s1d.op, s1d.op_zero, lam).value for lam in np.linspace(-5, 0.9 * s1, 6)]
    assert np.all(np.diff(vals) < 0)


def test_sigma_bound_inadmissible_shift(s1d):
    with pytest.raises(ShiftNotAdmissible):
        sigma_bound(s1d.op, s1d.op_zero, s1d.op.sigma1 + 0.1)


def test_supinf_never_exceeds_sigma(canon):
    rng = np.random.default_rng(7)
    sb = sigma_bound(canon.op, canon.op_zero, 0.0)
    est = sigma_bound_supinf(canon.op, canon.op_zero, 0.0, 32, rng=rng, bound=sb)
    assert est <= sb.value * (1 + 1e-9)
    assert est >= 0.99 * sb.value


def test_eps_sweep_approaches_sigma(s1d):
    sb = sigma_bound(s1d.op, s1d.op_zero, 0.0)
    phi = principal_selfadjoint(s1d.op).function
    rows = profile_eps_sweep(s1d.op, sb, phi)
    ratios = [r for _, r in rows]
    assert all(r <= sb.value * (1 + 1e-9) for r in ratios)
    assert np.all(np.diff(ratios) >= -1e-9 * sb.value)
    assert abs(ratios[-1] - sb.value) <= 1e-3 * sb.value
