import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopvar.errors import EmptyRegion, InvalidGrid, InvalidParameter
from coopvar.grid import (
    PLUS,
    ZERO,
    Grid,
    Nonlinearity,
    build_grid,
    build_weight,
    run_length_decode,
    run_length_encode,
    weight_to_json,
)
from coopvar.linops import ZERO_ONLY, ShiftedOperator

from conftest import ANNULUS_2D, INTERVAL_1D, grid_1d, grid_2d


def test_interval_tags_n9():
    g = grid_1d(9)
    assert g.region_tag.tolist() == [1, 1, 1, 0, 0, 0, 1, 1, 1]
    assert g.h == (0.1,)
    assert g.cell_volume == pytest.approx(0.1)


def test_nodes_on_interface_are_plus():
    # x = 0.3 and x = 0.7 are nodes for n=9 and must not be ZERO
    g = grid_1d(9)
    x = g.axes[0]
    assert g.region_tag[np.isclose(x, 0.3)][0] == PLUS
    assert g.region_tag[np.isclose(x, 0.7)][0] == PLUS


def test_complement_interval_swaps_tags():
    a = grid_1d(17)
    b = build_grid(1, [[0, 1]], [17], {"kind": "complement_interval", "bounds": [0.3, 0.7]})
    inside = (a.axes[0] > 0.3 + 1e-12) & (a.axes[0] < 0.7 - 1e-12)
    assert np.all(a.zero_mask == inside)
    assert np.all(b.zero_mask == ~inside)


def test_annulus_zero_set_has_two_components():
    g = grid_2d(24)
    op = ShiftedOperator(g, ZERO_ONLY)
    ncomp, _ = op.components()
    assert ncomp == 2
    r = np.linalg.norm(g.node_coords - 0.5, axis=1)
    assert np.all(g.plus_mask == ((r > 0.25) & (r < 0.4)))


def test_annulus_touching_boundary_rejected():
    with pytest.raises(InvalidGrid):
        build_grid(2, [[0, 1], [0, 1]], [16, 16], {**ANNULUS_2D, "r_outer": 0.5})


def test_empty_regions_raise():
    with pytest.raises(EmptyRegion):
        build_grid(1, [[0, 1]], [9], {"kind": "interval", "bounds": [0.31, 0.39]})
    with pytest.raises(EmptyRegion):
        build_grid(1, [[0, 1]], [9], {"kind": "interval", "bounds": [-1.0, 2.0]})


@pytest.mark.parametrize("bad", [
    dict(dimension=3, extent=[[0, 1]], n=[9]),
    dict(dimension=1, extent=[[1, 0]], n=[9]),
    dict(dimension=1, extent=[[0, 1]], n=[0]),
    dict(dimension=1, extent=[[0, 1]], n=[9, 9]),
])
def test_invalid_grids(bad):
    with pytest.raises(InvalidGrid):
        build_grid(omega0_spec=INTERVAL_1D, **bad)


def test_unknown_kind_rejected():
    with pytest.raises(InvalidGrid):
        build_grid(1, [[0, 1]], [9], {"kind": "annulus"})


def test_json_roundtrip():
    for g in (grid_1d(33), grid_2d(12)):
        doc = g.to_json()
        g2 = Grid.from_json(doc)
        assert np.array_equal(g.region_tag, g2.region_tag)
        assert g2.n == g.n and g2.extent == g.extent


def test_json_tag_mismatch_detected():
    doc = grid_1d(9).to_json()
    doc["tags_rle"] = [[1, 9]]
    with pytest.raises(InvalidGrid):
        Grid.from_json(doc)


@given(st.lists(st.sampled_from([ZERO, PLUS]), min_size=1, max_size=200))
def test_rle_roundtrip(tags):
    arr = np.array(tags, dtype=np.int8)
    rle = run_length_encode(arr)
    assert np.array_equal(run_length_decode(rle), arr)
    assert all(rle[i][0] != rle[i + 1][0] for i in range(len(rle) - 1))


@pytest.mark.parametrize("kind", ["indicator", "mollified_bump"])
def test_weight_vanishes_exactly_on_zero_set(kind):
    for g in (grid_1d(65), grid_2d(24)):
        w = build_weight(g, kind, amplitude=2.5)
        assert np.all(w.values[g.zero_mask] == 0.0)
        assert np.all(w.values[g.plus_mask] > 0.0)
        assert np.max(w.values) <= 2.5 + 1e-15


def test_indicator_weight_values():
    g = grid_1d(9)
    w = build_weight(g, "indicator")
    assert w.values.tolist() == [1, 1, 1, 0, 0, 0, 1, 1, 1]


def test_mollified_weight_reaches_amplitude_far_from_zero_set():
    g = grid_1d(129)
    w = build_weight(g, "mollified_bump", amplitude=3.0)
    far = g.distance_to_zero() > 4.0 * g.h[0] + 1e-12
    assert np.allclose(w.values[far], 3.0)
    # monotone in the distance to Omega_0
    order = np.argsort(g.distance_to_zero()[g.plus_mask])
    assert np.all(np.diff(w.values[g.plus_mask][order]) >= -1e-15)


def test_weight_rejects_bad_amplitude_and_kind():
    g = grid_1d(9)
    with pytest.raises(InvalidParameter):
        build_weight(g, "indicator", amplitude=0.0)
    with pytest.raises(InvalidParameter):
        build_weight(g, "gaussian")


def test_weight_json():
    g = grid_1d(9)
    doc = weight_to_json(build_weight(g, "indicator"))
    assert doc["profile_kind"] == "indicator"


def test_core_mask_is_interior_of_zero_set():
    g = grid_1d(65)
    core = g.core_mask()
    assert core.any()
    assert np.all(g.zero_mask[core])
    assert np.all(g.distance_to_plus()[core] > 2 * g.h[0])
    g2 = grid_2d(24)
    core2 = g2.core_mask()
    assert core2.any()
    assert np.all(g2.distance_to_boundary()[core2] > 2 * g2.h[0])


@settings(max_examples=50, deadline=None)
@given(p=st.floats(1.0, 4.0), u=st.floats(-50, 50))
def test_nonlinearity_primitive_derivative(p, u):
    nl = Nonlinearity(exponent=p)
    eps = 1e-6 * max(1.0, abs(u))
    fd = (nl.primitive(np.array(u + eps)) - nl.primitive(np.array(u - eps))) / (2 * eps)
    assert fd == pytest.approx(float(nl.reaction(np.array(u))), rel=1e-5, abs=1e-8)
    assert nl.primitive(np.array(u)) >= 0
    assert nl.primitive(np.array(-u)) == nl.primitive(np.array(u))


def test_nonlinearity_rejects_exponent_below_one():
    with pytest.raises(InvalidParameter):
        Nonlinearity(exponent=0.5)
