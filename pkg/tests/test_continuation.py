import numpy as np
import pytest

from coopvar.continuation import (
    BLOWUP_CAP,
    REACHED_HI,
    STEP_UNDERFLOW,
    bifurcation_locate,
    blowup_probe,
    dgamma_check,
    existence_interval,
    gamma_grid,
    smallest_linearized_eig,
    trace_branch,
)
from coopvar.errors import InvalidParameter, ShiftNotAdmissible
from coopvar.spectra import sigma_bound


@pytest.fixture(scope="module")
def branch1d(s1d129):
    return trace_branch(s1d129.problem(0.0), 24)


def test_existence_interval(s1d, s2d):
    for s in (s1d, s2d):
        P = s.problem(0.0)
        lo, hi = existence_interval(P)
        assert lo == pytest.approx(s.op.sigma1**2, rel=1e-10)
        assert hi == pytest.approx(sigma_bound(s.op, s.op_zero, 0.0).value)
        assert lo < hi


def test_existence_interval_coarse_value():
    from conftest import Setup, grid_1d

    s = Setup(grid_1d(9))
    lo, _ = existence_interval(s.problem(0.0))
    assert lo == pytest.approx(9.788696740969293**2, rel=1e-10)


def test_existence_interval_nonempty_and_left_end_vanishes(s1d):
    s1 = s1d.op.sigma1
    for frac in (-2.0, 0.0, 0.5, 0.9, 0.999):
        lo, hi = existence_interval(s1d.problem(frac * s1))
        assert lo < hi
    lo, _ = existence_interval(s1d.problem(0.999999 * s1))
    assert lo < 1e-9


def test_gamma_grid_layout():
    g = gamma_grid(100.0, 900.0, 24)
    assert g[0] == pytest.approx(100.1)
    assert g[-1] == pytest.approx(900.0 * (1 - 1e-3))
    assert np.all(np.diff(g) > 0)
    gaps = 900.0 - g
    assert np.allclose(gaps[1:] / gaps[:-1], gaps[1] / gaps[0])
    with pytest.raises(InvalidParameter):
        gamma_grid(100.0, 100.05, 24)
    with pytest.raises(InvalidParameter):
        gamma_grid(100.0, 900.0, 1)


def test_branch_monotone_and_limits(branch1d):
    b = branch1d
    assert b.termination in (REACHED_HI, BLOWUP_CAP)
    assert len(b.points) >= 8
    assert np.all(np.diff(b.gammas) > 0)
    assert all(b.gamma_lo < g < b.gamma_hi for g in b.gammas)
    assert b.min_increments().min() >= -1e-9
    mid = b.sup_u[b.mid_index()]
    assert b.sup_u[0] <= 0.05 * mid
    assert b.sup_u[-1] >= 10 * mid
    assert all(p.ordering_margin > 0 for p in b.points)
    assert all(p.newton_residual <= 1e-10 for p in b.points)
    assert all(p.result.positivity_margin > 0 for p in b.points)


def test_branch_tail_concentrates_on_zero_set(branch1d):
    mf = np.array([p.mass_frac_plus for p in branch1d.points])
    assert np.all(np.diff(mf) < 0)


def test_branch_2d(s2d):
    b = trace_branch(s2d.problem(0.0), 12)
    assert b.min_increments().min() >= -1e-9
    assert b.sup_u[-1] >= 10 * b.sup_u[b.mid_index()]


@pytest.mark.parametrize("frac", [0.0, 0.25, 0.5])
def test_bifurcation_location(s1d, frac):
    P = s1d.problem(frac * s1d.op.sigma1)
    rep = bifurcation_locate(P)
    assert rep.rel_error <= 1e-8
    assert rep.gamma_star == pytest.approx((s1d.op.sigma1 * (1 - frac)) ** 2, rel=1e-8)
    assert rep.slope == pytest.approx(rep.slope_expected, rel=1e-6)


def test_bifurcation_2d_uses_sparse_eigensolver(s2d):
    P = s2d.problem(0.0)
    assert P.op.size > 200
    rep = bifurcation_locate(P)
    assert rep.rel_error <= 1e-8


def test_linearized_eig_is_affine_in_gamma(s1d):
    P = s1d.problem(0.0)
    vals = [smallest_linearized_eig(P, g) for g in (0.0, 50.0, 100.0)]
    assert vals[0] == pytest.approx(1.0)
    assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0], rel=1e-9)


def test_bifurcation_inadmissible_shift(s1d):
    with pytest.raises(ShiftNotAdmissible):
        s1d.problem(s1d.op.sigma1 * 1.01)


def test_dgamma_positive_and_matches_fd(s1d129, branch1d):
    P = s1d129.problem(0.0)
    reports = [dgamma_check(P, p.result) for p in branch1d.points[1:8]]
    assert all(r.positive for r in reports)
    assert all(r.fd_rel_error <= 1e-4 for r in reports)
    sup_w = [r.sup_w for r in reports]
    assert np.all(np.diff(sup_w) > 0)


def test_blowup_probe(s1d129):
    rep = blowup_probe(s1d129.problem(0.0))
    assert rep.termination in (BLOWUP_CAP, STEP_UNDERFLOW)
    assert len(rep.gammas) >= 4
    assert rep.core_min[-1] > 1e3
    assert rep.mass_frac_plus[-1] < 0.2 * rep.mass_frac_plus[0]
    assert rep.mass_frac_monotone
    assert rep.cosine[-1] > 0.9
    assert np.all(np.diff(rep.sup_u) > 0)
