"""Uniform lattices on an interval or rectangle, tagged into the absorbing part
(PLUS, where the weight is positive) and the refuge (ZERO, where it vanishes).

Node ordering is C order over the per-axis interior indices, so a 2-D field of
length ``nx*ny`` reshapes to ``(nx, ny)`` with x as the first axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import ndimage

from .errors import EmptyRegion, InvalidGrid, InvalidParameter

ZERO = 0
PLUS = 1

PROFILE_KINDS = ("indicator", "mollified_bump")

# Tolerance (in units of h) used when comparing node coordinates with region
# boundaries, so that nodes lying on a boundary up to round-off count as outside
# the open set.
_EDGE_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    dimension: int
    extent: tuple[tuple[float, float], ...]
    n: tuple[int, ...]
    omega0_spec: Mapping[str, Any]
    region_tag: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (m + 1) for (a, b), m in zip(self.extent, self.n))

    @property
    def cell_volume(self) -> float:
        """Quadrature weight h^d of the discrete L2 pairing."""
        return float(np.prod(self.h))

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            a + hk * np.arange(1, m + 1) for (a, _), hk, m in zip(self.extent, self.h, self.n)
        )

    @property
    def node_coords(self) -> np.ndarray:
        """(size, dimension) array of interior node coordinates."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def plus_mask(self) -> np.ndarray:
        return self.region_tag == PLUS

    @property
    def zero_mask(self) -> np.ndarray:
        return self.region_tag == ZERO

    @property
    def zero_index(self) -> np.ndarray:
        return np.flatnonzero(self.region_tag == ZERO)

    @property
    def plus_index(self) -> np.ndarray:
        return np.flatnonzero(self.region_tag == PLUS)

    def distance_to_plus(self) -> np.ndarray:
        """Euclidean distance from every node to the nearest PLUS node (0 on PLUS)."""
        return ndimage.distance_transform_edt(
            self.zero_mask.reshape(self.n), sampling=self.h
        ).ravel()

    def distance_to_zero(self) -> np.ndarray:
        """Euclidean distance from every node to the nearest ZERO node (0 on ZERO)."""
        return ndimage.distance_transform_edt(
            self.plus_mask.reshape(self.n), sampling=self.h
        ).ravel()

    def distance_to_boundary(self) -> np.ndarray:
        x = self.node_coords
        lo = np.array([a for a, _ in self.extent])
        hi = np.array([b for _, b in self.extent])
        return np.minimum(x - lo, hi - x).min(axis=1)

    def core_mask(self, margin_cells: float = 2.0) -> np.ndarray:
        """ZERO nodes farther than ``margin_cells*h`` from both the PLUS set and the outer boundary."""
        hmax = max(self.h)
        far = margin_cells * hmax * (1.0 + _EDGE_TOL)
        return self.zero_mask & (self.distance_to_plus() > far) & (self.distance_to_boundary() > far)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "extent": [list(e) for e in self.extent],
            "n": list(self.n),
            "omega0_spec": dict(self.omega0_spec),
            "tags_rle": run_length_encode(self.region_tag),
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Grid":
        grid = build_grid(doc["dimension"], doc["extent"], doc["n"], doc["omega0_spec"])
        if "tags_rle" in doc:
            tags = run_length_decode(doc["tags_rle"])
            if not np.array_equal(tags, grid.region_tag):
                raise InvalidGrid("serialized tags disagree with the region description")
        return grid


def run_length_encode(tags: np.ndarray) -> list[list[int]]:
    out: list[list[int]] = []
    for t in np.asarray(tags).tolist():
        if out and out[-1][0] == t:
            out[-1][1] += 1
        else:
            out.append([int(t), 1])
    return out


def run_length_decode(rle) -> np.ndarray:
    return np.concatenate([np.full(int(c), int(t), dtype=np.int8) for t, c in rle])


def _normalize_extent(dimension: int, extent) -> tuple[tuple[float, float], ...]:
    ext = np.asarray(extent, dtype=float)
    if ext.shape == (2,):
        ext = np.tile(ext, (dimension, 1))
    if ext.shape != (dimension, 2):
        raise InvalidGrid(f"extent must give one (lo, hi) pair per axis, got {extent!r}")
    if np.any(ext[:, 1] <= ext[:, 0]):
        raise InvalidGrid("each extent interval needs lo < hi")
    return tuple((float(a), float(b)) for a, b in ext)


def _normalize_n(dimension: int, n) -> tuple[int, ...]:
    if np.isscalar(n):
        n = [n] * dimension
    n = list(n)
    if len(n) != dimension:
        raise InvalidGrid(f"need {dimension} node counts, got {n!r}")
    if any(int(k) != k or k < 1 for k in n):
        raise InvalidGrid(f"node counts must be positive integers, got {n!r}")
    return tuple(int(k) for k in n)


def _tag_nodes(dimension, extent, h, coords, spec) -> np.ndarray:
    kind = spec.get("kind")
    tol = _EDGE_TOL * min(h)
    x = coords
    if dimension == 1:
        if kind not in ("interval", "complement_interval"):
            raise InvalidGrid(f"unsupported 1-D omega0 kind {kind!r}")
        a, b = (float(t) for t in spec["bounds"])
        if not a < b:
            raise InvalidGrid("interval bounds need a < b")
        inside = (x[:, 0] > a + tol) & (x[:, 0] < b - tol)
        # 'interval': Omega_0 is the open interval; 'complement_interval': the
        # absorbing set is the open interval and Omega_0 is the rest.
        zero = inside if kind == "interval" else ~inside
    else:
        if kind == "annulus":
            c = np.asarray(spec["center"], dtype=float)
            r_in, r_out = float(spec["r_inner"]), float(spec["r_outer"])
            if not 0 <= r_in < r_out:
                raise InvalidGrid("annulus radii need 0 <= r_inner < r_outer")
            dist_edges = min(min(c[k] - extent[k][0], extent[k][1] - c[k]) for k in range(2))
            if r_out >= dist_edges:
                raise InvalidGrid(
                    "annulus touches the outer boundary: r_outer must be below the distance "
                    f"from the center to the boundary ({dist_edges:g})"
                )
            r = np.linalg.norm(x - c, axis=1)
            plus = (r > r_in + tol) & (r < r_out - tol)
            zero = ~plus
        elif kind == "disk":
            c = np.asarray(spec["center"], dtype=float)
            r = np.linalg.norm(x - c, axis=1)
            zero = r < float(spec["radius"]) - tol
        elif kind == "rectangle":
            lo = np.asarray(spec["lower"], dtype=float)
            hi = np.asarray(spec["upper"], dtype=float)
            zero = np.all((x > lo + tol) & (x < hi - tol), axis=1)
        else:
            raise InvalidGrid(f"unsupported 2-D omega0 kind {kind!r}")
    return np.where(zero, ZERO, PLUS).astype(np.int8)


def build_grid(dimension: int, extent, n, omega0_spec: Mapping[str, Any]) -> Grid:
    """Build a tagged uniform grid.

    ``omega0_spec`` describes the refuge Omega_0 (where the weight vanishes):

    * 1-D ``{"kind": "interval", "bounds": [a, b]}``: Omega_0 = (a, b);
      ``"complement_interval"`` puts the absorbing set in (a, b) instead.
    * 2-D ``{"kind": "annulus", "center": [cx, cy], "r_inner": r0, "r_outer": r1}``:
      the absorbing set is the open annulus r0 < |x-c| < r1, strictly inside the
      domain; Omega_0 is the inner disk together with the outer shell.
    * 2-D ``{"kind": "disk", ...}`` / ``{"kind": "rectangle", "lower": .., "upper": ..}``:
      Omega_0 is the open disk / rectangle and the absorbing set is the rest.
    """
    if dimension not in (1, 2):
        raise InvalidGrid(f"dimension must be 1 or 2, got {dimension!r}")
    ext = _normalize_extent(dimension, extent)
    nn = _normalize_n(dimension, n)
    h = tuple((b - a) / (m + 1) for (a, b), m in zip(ext, nn))
    axes = [a + hk * np.arange(1, m + 1) for (a, _), hk, m in zip(ext, h, nn)]
    coords = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    spec = dict(omega0_spec)
    tags = _tag_nodes(dimension, ext, h, coords, spec)
    if not np.any(tags == ZERO):
        raise EmptyRegion("empty region: no interior node lies in Omega_0")
    if not np.any(tags == PLUS):
        raise EmptyRegion("empty region: no interior node lies in Omega_+")
    return Grid(dimension, ext, nn, spec, _readonly(tags))


@dataclass(frozen=True, eq=False)
class WeightField:
    values: np.ndarray = field(repr=False)
    profile_kind: str
    amplitude: float


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def build_weight(
    grid: Grid,
    profile_kind: str = "mollified_bump",
    amplitude: float = 1.0,
    band_cells: float = 4.0,
) -> WeightField:
    """Degenerate weight a(x): zero on Omega_0, positive on the absorbing set.

    The mollified profile is ``amplitude * s(d / (band_cells*h))**2`` with ``s`` the
    cubic smoothstep and ``d`` the distance from a PLUS node to the nearest ZERO node.
    """
    if not amplitude > 0 or not math.isfinite(amplitude):
        raise InvalidParameter(f"weight amplitude must be positive, got {amplitude!r}")
    if profile_kind not in PROFILE_KINDS:
        raise InvalidParameter(f"profile_kind must be one of {PROFILE_KINDS}, got {profile_kind!r}")
    if profile_kind == "indicator":
        values = np.where(grid.plus_mask, amplitude, 0.0)
    else:
        if not band_cells > 0:
            raise InvalidParameter("band_cells must be positive")
        d = grid.distance_to_zero()
        s = smoothstep(d / (band_cells * min(grid.h)))
        values = np.where(grid.plus_mask, amplitude * s * s, 0.0)
    return WeightField(_readonly(values.astype(float)), profile_kind, float(amplitude))


def weight_to_json(weight: WeightField) -> dict:
    return {
        "profile_kind": weight.profile_kind,
        "amplitude": weight.amplitude,
        "values": weight.values.tolist(),
    }


@dataclass(frozen=True)
class Nonlinearity:
    """Power nonlinearity f(x, u) = |u|**p, extended evenly to signed u.

    ``F(u) = |u|**(p+2) / (p+2)`` is the primitive of ``f(u) u`` (times the weight).
    """

    exponent: float = 1.0
    kind: str = "power"

    def __post_init__(self):
        if self.kind != "power":
            raise InvalidParameter(f"only the power nonlinearity is supported, got {self.kind!r}")
        if not self.exponent >= 1:
            raise InvalidParameter(f"exponent p must be >= 1, got {self.exponent!r}")

    def f(self, u):
        return np.abs(u) ** self.exponent

    def primitive(self, u):
        p = self.exponent
        return np.abs(u) ** (p + 2) / (p + 2)

    def reaction(self, u):
        """f(u) u, the absorption term before weighting."""
        return np.abs(u) ** self.exponent * u

    def reaction_derivative(self, u):
        """d/du [f(u) u] = (p+1)|u|^p."""
        return (self.exponent + 1.0) * np.abs(u) ** self.exponent
