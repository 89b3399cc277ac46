"""Planar geometry of the reference domain and its pores.

All coordinates are millimetres.  A pore is a simple closed polyline strictly
inside the reference domain.  Its boundary is stored clockwise and every
derived normal points from the pore interior into the surrounding material,
so the pore-scaling design velocity ``V = X - Xc`` has a positive normal
component (equal to the apothem, i.e. the radius up to polygonisation, on a
circular pore).  Sensitivity formulas elsewhere in the package are written
against this orientation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon

from .errors import ConfigError, GeometryError

# Two-point Gauss rule on [-1, 1]; order >= 2 per boundary segment.
_GAUSS2_POS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GAUSS2_WGT = np.array([1.0, 1.0])

STANDOFF_FACTOR = 2.0  # warn when a pore sits closer than this many radii to the outer boundary


def _as_points(boundary) -> np.ndarray:
    pts = np.asarray(boundary, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise GeometryError("boundary must be an (n>=3, 2) array of vertices")
    if np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3:
        raise GeometryError("boundary degenerates to fewer than 3 distinct vertices")
    return pts


def signed_area(pts: np.ndarray) -> float:
    """Shoelace area; positive for counterclockwise polygons."""
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_centroid(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-14:
        raise GeometryError("degenerate polygon with zero area")
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


@dataclass(frozen=True)
class Pore:
    """A single pore: closed polyline, clockwise, strictly inside the domain.

    Parameters
    ----------
    id : int
        Stable identifier used in pairing and reports.
    boundary : (n, 2) array
        Vertices of the closed polyline (last vertex must not repeat the
        first).  Any orientation is accepted; stored clockwise.
    centroid : (2,) array, optional
        Declared centroid.  Recomputed from the polygon; a declared value
        that disagrees by more than 1e-9 relative is rejected.
    """

    id: int
    boundary: np.ndarray
    centroid: np.ndarray = field(default=None)  # type: ignore[assignment]
    area: float = field(init=False, default=0.0)
    equivalent_radius: float = field(init=False, default=0.0)

    def __post_init__(self):
        pts = _as_points(self.boundary)
        a = signed_area(pts)
        if abs(a) < 1e-12:
            raise GeometryError(f"pore {self.id}: boundary encloses zero area")
        if a > 0:  # stored clockwise
            pts = pts[::-1]
            a = -a
        poly = Polygon(pts)
        if not poly.is_valid:
            raise GeometryError(f"pore {self.id}: boundary is self-intersecting")
        c = polygon_centroid(pts)
        if self.centroid is not None:
            declared = np.asarray(self.centroid, dtype=float)
            scale = max(1.0, float(np.abs(c).max()))
            if np.abs(declared - c).max() > 1e-9 * scale:
                raise GeometryError(
                    f"pore {self.id}: declared centroid {declared.tolist()} does not match "
                    f"recomputed {c.tolist()}"
                )
        object.__setattr__(self, "boundary", pts)
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "area", -a)
        object.__setattr__(self, "equivalent_radius", float(np.sqrt(-a / np.pi)))

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.boundary)

    @property
    def equivalent_diameter(self) -> float:
        return 2.0 * self.equivalent_radius

    def scaled(self, eta: float) -> "Pore":
        """Pore scaled by ``eta`` about its centroid (shape parameter)."""
        if eta <= 0:
            raise GeometryError(f"pore {self.id}: scale factor must be positive")
        pts = self.centroid + eta * (self.boundary - self.centroid)
        return Pore(id=self.id, boundary=pts)

    def translated(self, offset) -> "Pore":
        return Pore(id=self.id, boundary=self.boundary + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class Cutout:
    """A through-cut of the reference domain itself (e.g. a fixture hole).

    Unlike a pore it is part of the reference geometry: both the reference
    and the porous mesh exclude it, and boundary conditions may be attached
    to its rim via ``tag``.
    """

    boundary: np.ndarray
    tag: str

    def __post_init__(self):
        pts = _as_points(self.boundary)
        if signed_area(pts) > 0:
            pts = pts[::-1]
        object.__setattr__(self, "boundary", pts)

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.boundary)


@dataclass(frozen=True)
class ReferenceDomain:
    """Pore-free outer geometry with tagged boundary segments.

    ``outer_boundary`` is a simple counterclockwise polyline; segment ``i``
    runs from vertex ``i`` to vertex ``i+1`` (cyclic) and carries
    ``boundary_tags[i]``.  Tags partition the boundary by construction.
    """

    outer_boundary: np.ndarray
    boundary_tags: tuple
    thickness: float = 1.0
    cutouts: tuple = ()

    def __post_init__(self):
        pts = _as_points(self.outer_boundary)
        if signed_area(pts) < 0:
            raise GeometryError("outer boundary must be counterclockwise")
        if not Polygon(pts).is_valid:
            raise GeometryError("outer boundary is self-intersecting")
        tags = tuple(self.boundary_tags)
        if len(tags) != len(pts):
            raise GeometryError(
                f"need one tag per boundary segment: {len(pts)} segments, {len(tags)} tags"
            )
        if self.thickness <= 0:
            raise GeometryError("thickness must be positive")
        object.__setattr__(self, "outer_boundary", pts)
        object.__setattr__(self, "boundary_tags", tags)
        object.__setattr__(self, "cutouts", tuple(self.cutouts))

    @property
    def polygon(self) -> Polygon:
        holes = [c.boundary for c in self.cutouts]
        return Polygon(self.outer_boundary, holes)

    def contains_pore(self, pore: Pore) -> bool:
        return self.polygon.contains(pore.polygon)

    def validate_pores(self, pores) -> None:
        """Check pore invariants against this domain.

        Raises ``GeometryError`` for overlap/containment/outside violations;
        emits a warning when the standoff assumption (distance to the outer
        boundary well above the pore size) is violated.
        """
        rim = LineString(np.vstack([self.outer_boundary, self.outer_boundary[:1]]))
        rims = [rim] + [
            LineString(np.vstack([c.boundary, c.boundary[:1]])) for c in self.cutouts
        ]
        for p in pores:
            if not self.contains_pore(p):
                raise GeometryError(f"pore {p.id} is not strictly inside the domain")
            d = min(r.distance(p.polygon.exterior) for r in rims)
            if d < STANDOFF_FACTOR * p.equivalent_radius:
                warnings.warn(
                    f"pore {p.id} is only {d:.3g} mm from the domain boundary "
                    f"(< {STANDOFF_FACTOR} equivalent radii); estimates may degrade",
                    stacklevel=2,
                )
        for i, a in enumerate(pores):
            for b in pores[i + 1 :]:
                pa, pb = a.polygon, b.polygon
                if pa.intersects(pb) or pa.contains(pb) or pb.contains(pa):
                    raise GeometryError(f"pores {a.id} and {b.id} overlap or nest")


def design_velocity(pore: Pore, point, snap_tol: float | None = None) -> np.ndarray:
    """Design velocity of a pore-scaling perturbation at ``point``.

    Returns ``X - Xc`` when the point lies on the pore boundary polyline
    (within ``snap_tol``), otherwise the zero vector.  Total function.
    """
    pt = np.asarray(point, dtype=float)
    if snap_tol is None:
        snap_tol = 1e-7 * max(pore.equivalent_radius, 1.0)
    ring = LineString(np.vstack([pore.boundary, pore.boundary[:1]]))
    if ring.distance(Point(pt)) <= snap_tol:
        return pt - pore.centroid
    return np.zeros(2)


def pore_surface_distance(a: Pore, b: Pore) -> float:
    """Minimum distance between two pore boundary polylines (symmetric)."""
    pa, pb = a.polygon, b.polygon
    if pa.intersects(pb):
        raise GeometryError(f"pores {a.id} and {b.id} overlap; surface distance undefined")
    pair = sorted((a, b), key=lambda p: p.id)
    ra = LineString(np.vstack([pair[0].boundary, pair[0].boundary[:1]]))
    rb = LineString(np.vstack([pair[1].boundary, pair[1].boundary[:1]]))
    return float(ra.distance(rb))


@dataclass(frozen=True)
class PorePair:
    """An unordered interaction pair, stored with i < j."""

    i: int
    j: int
    surface_distance: float

    def __post_init__(self):
        if self.i == self.j:
            raise GeometryError("a pore cannot pair with itself")
        if self.i > self.j:
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)
        if self.surface_distance < 0:
            raise GeometryError("surface distance cannot be negative")


@dataclass(frozen=True)
class PairPolicy:
    """Which pore pairs enter the interaction sums.

    ``nearest`` pairs every pore with its nearest neighbour; ``all`` keeps
    every pair.  Either way, pairs whose surface distance exceeds
    ``cutoff_factor`` times the mean of the two equivalent diameters are
    discarded.  ``cutoff_factor=None`` disables the cutoff.
    """

    mode: str = "nearest"
    cutoff_factor: float | None = 5.0

    def __post_init__(self):
        if self.mode not in ("nearest", "all"):
            raise ConfigError(f"unknown pair policy mode {self.mode!r}")


def select_interaction_pairs(pores, policy: PairPolicy = PairPolicy()) -> list:
    """Select the pore pairs whose interaction terms will be evaluated.

    Output is deduplicated, symmetric, sorted by (i, j), and invariant under
    permutation of the input list.  A single pore yields no pairs.
    """
    pores = sorted(pores, key=lambda p: p.id)
    n = len(pores)
    if n < 2:
        return []
    dist = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = pore_surface_distance(pores[i], pores[j])

    def d(i, j):
        return dist[(min(i, j), max(i, j))]

    if policy.mode == "all":
        chosen = set(dist.keys())
    else:
        chosen = set()
        for i in range(n):
            j = min((k for k in range(n) if k != i), key=lambda k: (d(i, k), pores[k].id))
            chosen.add((min(i, j), max(i, j)))

    pairs = []
    for i, j in sorted(chosen):
        sd = dist[(i, j)]
        if policy.cutoff_factor is not None:
            mean_diam = 0.5 * (pores[i].equivalent_diameter + pores[j].equivalent_diameter)
            if sd > policy.cutoff_factor * mean_diam:
                continue
        pairs.append(PorePair(i=pores[i].id, j=pores[j].id, surface_distance=sd))
    return pairs


@dataclass(frozen=True)
class PoreBoundaryMesh:
    """Line-element discretisation of one pore boundary.

    Segments follow the stored (clockwise) polyline order; ``normals`` are
    unit vectors pointing out of the pore into the material.  ``gauss_*``
    arrays hold a 2-point Gauss rule per segment, flattened in segment
    order.
    """

    pore: Pore
    points: np.ndarray      # (n, 2) segment endpoints, closed implicitly
    midpoints: np.ndarray   # (n, 2)
    tangents: np.ndarray    # (n, 2) unit, along traversal
    normals: np.ndarray     # (n, 2) unit, into the material
    lengths: np.ndarray     # (n,)
    gauss_points: np.ndarray   # (2n, 2)
    gauss_weights: np.ndarray  # (2n,) absolute arclength weights
    gauss_normals: np.ndarray  # (2n, 2)
    gauss_tangents: np.ndarray  # (2n, 2)

    @property
    def n_segments(self) -> int:
        return len(self.midpoints)

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def arclength(self) -> np.ndarray:
        """Arclength of each segment midpoint from the first vertex."""
        cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        return cum[:-1] + 0.5 * self.lengths

    def gauss_velocity(self) -> np.ndarray:
        """Design velocity X - Xc at the Gauss points."""
        return self.gauss_points - self.pore.centroid

    def gauss_vn(self) -> np.ndarray:
        """Normal design speed V.n at the Gauss points (positive outward)."""
        return np.einsum("ij,ij->i", self.gauss_velocity(), self.gauss_normals)


def build_pore_boundary_mesh(pore: Pore, target_segment_length: float) -> PoreBoundaryMesh:
    """Subdivide the pore polyline into segments of length <= target.

    Vertices of the polyline are always kept, so the discretisation follows
    the exact input geometry.
    """
    if target_segment_length <= 0:
        raise GeometryError("target segment length must be positive")
    verts = pore.boundary
    pts = []
    for k in range(len(verts)):
        a = verts[k]
        b = verts[(k + 1) % len(verts)]
        seg = b - a
        n_sub = max(1, int(np.ceil(np.hypot(*seg) / target_segment_length)))
        for s in range(n_sub):
            pts.append(a + seg * (s / n_sub))
    pts = np.asarray(pts)
    nxt = np.roll(pts, -1, axis=0)
    d = nxt - pts
    lengths = np.hypot(d[:, 0], d[:, 1])
    if np.any(lengths < 1e-12):
        raise GeometryError(f"pore {pore.id}: degenerate boundary segment")
    tangents = d / lengths[:, None]
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    # Clockwise storage makes the +90-degree rotation point into the material;
    # assert rather than assume.
    mid = 0.5 * (pts + nxt)
    probe = mid[0] + 1e-6 * max(pore.equivalent_radius, 1e-3) * normals[0]
    if pore.polygon.contains(Point(probe)):
        normals = -normals
    gp, gw, gn, gt = [], [], [], []
    for k in range(len(pts)):
        for xi, w in zip(_GAUSS2_POS, _GAUSS2_WGT):
            gp.append(mid[k] + 0.5 * xi * d[k])
            gw.append(0.5 * w * lengths[k])
            gn.append(normals[k])
            gt.append(tangents[k])
    return PoreBoundaryMesh(
        pore=pore,
        points=pts,
        midpoints=mid,
        tangents=tangents,
        normals=normals,
        lengths=lengths,
        gauss_points=np.asarray(gp),
        gauss_weights=np.asarray(gw),
        gauss_normals=np.asarray(gn),
        gauss_tangents=np.asarray(gt),
    )


def circle_polyline(center, radius: float, n: int = 256) -> np.ndarray:
    """Clockwise polygon inscribed in a circle."""
    th = -2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def ellipse_polyline(center, semi_x: float, semi_y: float, n: int = 256) -> np.ndarray:
    th = -2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + semi_x * np.cos(th), center[1] + semi_y * np.sin(th)])


def blob_polyline(center, radius: float, harmonics, n: int = 192) -> np.ndarray:
    """Irregular pore outline: circle with low-amplitude radial harmonics.

    ``harmonics`` is a list of (mode, amplitude_fraction, phase) triples.
    """
    th = -2.0 * np.pi * np.arange(n) / n
    r = np.full(n, radius)
    for mode, amp, phase in harmonics:
        r = r + radius * amp * np.cos(mode * th + phase)
    if np.any(r <= 0):
        raise GeometryError("blob harmonics produce a non-star-shaped outline")
    return np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])


def load_pore_set(path) -> list:
    """Read a pore set from JSON: ``[{id, centroid:[x,y], boundary:[[x,y],...]}]``.

    The trailing vertex must not duplicate the first (closure is implicit).
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"pore set file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"pore set file {path} is not valid JSON: {e}")
    if not isinstance(data, list):
        raise ConfigError(f"pore set file {path} must hold a JSON array")
    pores = []
    for entry in data:
        keys = set(entry)
        if not {"id", "boundary"} <= keys:
            raise ConfigError(f"pore entry missing 'id'/'boundary': {sorted(keys)}")
        extra = keys - {"id", "centroid", "boundary"}
        if extra:
            raise ConfigError(f"pore entry has unknown keys: {sorted(extra)}")
        bnd = np.asarray(entry["boundary"], dtype=float)
        if len(bnd) >= 2 and np.allclose(bnd[0], bnd[-1]):
            raise ConfigError(
                f"pore {entry['id']}: trailing vertex duplicates the first (closure is implicit)"
            )
        pores.append(Pore(id=int(entry["id"]), boundary=bnd, centroid=entry.get("centroid")))
    ids = [p.id for p in pores]
    if len(set(ids)) != len(ids):
        raise ConfigError("pore ids must be unique")
    return pores


def dump_pore_set(pores, path) -> None:
    data = [
        {
            "id": p.id,
            "centroid": [float(p.centroid[0]), float(p.centroid[1])],
            "boundary": [[float(x), float(y)] for x, y in p.boundary],
        }
        for p in pores
    ]
    with open(path, "w") as f:
        json.dump(data, f, indent=1)
