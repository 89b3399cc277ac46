"""Deterministic triangulation of the reference and porous domains.

Both meshes are built from the same layered point cloud (graded hexagonal
lattice plus boundary subdivisions), so away from the pores they share
identical nodes and identical Delaunay triangles.  Discretisation error then
cancels in differences like psi - psi0, which is what the verification path
measures.  The porous mesh additionally carries pore-rim points protected by
shield points whose empty diametral circles force every rim segment to be a
Delaunay edge; the reference mesh instead fills the pore interiors with a
slightly coarser lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay, cKDTree
from shapely.geometry import Polygon

from .errors import MeshingError
from .fem import VolumeMesh
from .geometry import ReferenceDomain, pore_surface_distance

_SQRT3_2 = np.sqrt(3.0) / 2.0


class _RingDistance:
    """Fast approximate distance to a closed polyline.

    A KD-tree over the polyline densified at ``resolution`` gives distances
    accurate to half the densification step, which is ample for mesh
    grading and exclusion zones (the same approximation is used for both
    meshes, so matching is unaffected).
    """

    def __init__(self, boundary: np.ndarray, resolution: float):
        pts = []
        n = len(boundary)
        for k in range(n):
            a, b = boundary[k], boundary[(k + 1) % n]
            m = max(1, int(np.ceil(np.hypot(*(b - a)) / resolution)))
            for s in range(m):
                pts.append(a + (b - a) * (s / m))
        self._tree = cKDTree(np.asarray(pts))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        d, _ = self._tree.query(np.atleast_2d(points), k=1)
        return d


def _contains(boundary: np.ndarray, points: np.ndarray) -> np.ndarray:
    return Path(np.vstack([boundary, boundary[:1]])).contains_points(np.atleast_2d(points))


@dataclass(frozen=True)
class MeshSizing:
    """Sizing controls (all lengths in mm unless suffixed ``_rel``).

    ``near_rel`` scales each pore's near-field spacing by its equivalent
    radius; narrow gaps between paired pores tighten it further via
    ``gap_frac``.  ``boundary_frac`` sets the porous-mesh rim segment
    length as a fraction of the near spacing.  ``near_override`` freezes
    per-pore near spacings (used by finite-difference re-meshing so both
    perturbed meshes share one sizing field).
    """

    ambient: float = 2.5
    near_rel: float = 0.15
    gap_frac: float = 0.45
    boundary_frac: float = 0.45
    grade: float = 0.8
    in_pore_factor: float = 1.6
    near_override: dict = field(default_factory=dict)

    def pore_near(self, pores) -> dict:
        near = {}
        for p in pores:
            if p.id in self.near_override:
                near[p.id] = self.near_override[p.id]
                continue
            h = min(self.near_rel * p.equivalent_radius, self.ambient)
            for q in pores:
                if q.id == p.id:
                    continue
                gap = pore_surface_distance(p, q)
                if gap > 0:
                    h = min(h, self.gap_frac * gap)
            near[p.id] = max(h, 1e-3)
        return near


def _subdivide_chain(a, b, spacing):
    """Points from a to b exclusive of b, spaced at most ``spacing``."""
    seg = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    length = float(np.hypot(*seg))
    n = max(1, int(np.ceil(length / spacing)))
    return [np.asarray(a, dtype=float) + seg * (k / n) for k in range(n)]


def _ring_points(boundary: np.ndarray, spacing: float):
    """Subdivide a closed polyline; returns points and outward unit normals.

    Normals point away from the enclosed region (computed per vertex as the
    normalised average of adjacent segment normals).
    """
    pts = []
    for k in range(len(boundary)):
        pts.extend(_subdivide_chain(boundary[k], boundary[(k + 1) % len(boundary)], spacing))
    pts = np.asarray(pts)
    nxt = np.roll(pts, -1, axis=0)
    prv = np.roll(pts, 1, axis=0)
    seg_n = []
    for d in (nxt - pts, pts - prv):
        ln = np.hypot(d[:, 0], d[:, 1])[:, None]
        seg_n.append(np.column_stack([d[:, 1], -d[:, 0]]) / ln)
    vn = seg_n[0] + seg_n[1]
    vn /= np.hypot(vn[:, 0], vn[:, 1])[:, None]
    # Orient away from the enclosed region.
    scale = float(np.abs(boundary).max()) + 1.0
    probe = pts[0] + 1e-6 * scale * vn[0]
    if _contains(boundary, probe[None, :])[0]:
        vn = -vn
    return pts, vn


class _SizingField:
    """h(x): ambient far away, graded toward each pore/cutout rim."""

    def __init__(self, domain, pores, sizing: MeshSizing):
        self.sizing = sizing
        self.features = []  # (distance fn, boundary, near, inside_factor)
        near = sizing.pore_near(pores)
        for p in pores:
            res = 0.5 * sizing.boundary_frac * near[p.id]
            self.features.append((_RingDistance(p.boundary, res), p.boundary, near[p.id], sizing.in_pore_factor))
        for c in domain.cutouts:
            r_eq = np.sqrt(max(Polygon(c.boundary).area, 1e-12) / np.pi)
            near_c = min(max(sizing.near_rel * r_eq, sizing.ambient / 8.0), sizing.ambient)
            self.features.append((_RingDistance(c.boundary, 0.5 * near_c), c.boundary, near_c, 1.0))

    def reach(self, h_target: float) -> float:
        """Distance from a feature rim beyond which h(x) exceeds ``h_target``."""
        worst = 0.0
        for _, _, near, _ in self.features:
            worst = max(worst, near + max(0.0, h_target - near) / self.sizing.grade)
        return worst

    def clip_to_features(self, points: np.ndarray, h_target: float) -> np.ndarray:
        """Keep only candidates near enough to a feature to have h < h_target."""
        if not self.features:
            return points[:0]
        keep = np.zeros(len(points), dtype=bool)
        for _, boundary, near, _ in self.features:
            margin = near + max(0.0, h_target - near) / self.sizing.grade + 2.0 * h_target
            lo = boundary.min(axis=0) - margin
            hi = boundary.max(axis=0) + margin
            keep |= np.all((points >= lo) & (points <= hi), axis=1)
        return points[keep]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        h = np.full(len(points), self.sizing.ambient)
        for dist, boundary, near, in_fac in self.features:
            d = dist(points)
            hi = near + self.sizing.grade * np.maximum(0.0, d - near)
            if in_fac != 1.0:
                hi = np.where(_contains(boundary, points), hi * in_fac, hi)
            h = np.minimum(h, hi)
        return h

    def min_near(self) -> float:
        if not self.features:
            return self.sizing.ambient
        return min(near for _, _, near, _ in self.features)


def _hex_layer(bbox, spacing: float) -> np.ndarray:
    x0, y0, x1, y1 = bbox
    dy = spacing * _SQRT3_2
    rows = int(np.ceil((y1 - y0) / dy)) + 2
    cols = int(np.ceil((x1 - x0) / spacing)) + 2
    j = np.arange(rows)
    i = np.arange(cols)
    ii, jj = np.meshgrid(i, j)
    x = x0 + (ii + 0.5 * (jj % 2)) * spacing - 0.5 * spacing
    y = y0 + jj * dy - 0.5 * dy
    return np.column_stack([x.ravel(), y.ravel()])


def _graded_lattice(domain, size_field, bbox):
    """Layered hex lattice: each halving layer covers its own h(x) band."""
    s0 = size_field.sizing.ambient
    levels = max(0, int(np.ceil(np.log2(s0 / max(size_field.min_near(), 1e-6)))))
    layers = []
    for j in range(levels + 1):
        s = s0 / 2**j
        cand = _hex_layer(bbox, s)
        if j > 0:
            # a layer survives only where h < 1.9 s; skip candidates that
            # cannot be near enough to any feature
            cand = size_field.clip_to_features(cand, 0.95 * (2 * s))
        if len(cand) == 0:
            continue
        h = size_field(cand)
        keep = 0.95 * s <= h
        if j > 0:
            keep &= 0.95 * (2 * s) > h
        cand = cand[keep]
        if len(cand):
            layers.append((s, cand))
    return layers


def _thin(layers, seeds, seed_spacing, curves):
    """Accept lattice points that keep clear of seeds, coarser layers and curves.

    ``seeds`` are boundary-family points with per-point protective spacing;
    ``curves`` is a list of (distance fn, spacing) exclusion zones.
    """
    accepted = [seeds] if len(seeds) else []
    radii = [seed_spacing] if len(seeds) else []
    out = []
    for s, cand in layers:
        for dist, spacing in curves:
            if len(cand) == 0:
                break
            cand = cand[dist(cand) >= 0.60 * max(spacing, s * 0.8)]
        if len(cand) == 0:
            continue
        if accepted:
            tree = cKDTree(np.vstack(accepted))
            d, nearest = tree.query(cand, k=1)
            prot = np.concatenate(radii)
            # conflict radius: local protective spacing of the nearest seed
            cand = cand[d >= 0.66 * np.maximum(s, prot[nearest])]
        if len(cand) == 0:
            continue
        accepted.append(cand)
        radii.append(np.full(len(cand), s))
        out.append(cand)
    return np.vstack(out) if out else np.empty((0, 2))


def _build_point_cloud(domain: ReferenceDomain, pores, sizing: MeshSizing):
    """Shared scaffolding for both meshes.

    Returns a dict with boundary chains, rim data and the filtered lattice.
    """
    size_field = _SizingField(domain, pores, sizing)
    outer = domain.outer_boundary
    # Outer boundary points, chain per tagged segment (two passes to honour h).
    coarse = []  # (k, p, q) sub-segments of the first pass
    for k in range(len(outer)):
        a, b = outer[k], outer[(k + 1) % len(outer)]
        pts = _subdivide_chain(a, b, sizing.ambient)
        for i, p in enumerate(pts):
            q = pts[i + 1] if i + 1 < len(pts) else b
            coarse.append((k, p, q))
    mids = np.asarray([0.5 * (p + q) for _, p, q in coarse])
    local_h = size_field(mids)
    chains = []  # (tag, [points]) in traversal order
    for k in range(len(outer)):
        refined = []
        for (kk, p, q), h in zip(coarse, local_h):
            if kk == k:
                refined.extend(_subdivide_chain(p, q, float(h)))
        chains.append((domain.boundary_tags[k], refined))

    near = sizing.pore_near(pores)
    rims = {}
    for p in pores:
        hb = sizing.boundary_frac * near[p.id]
        rim_pts, rim_nrm = _ring_points(p.boundary, hb)
        rims[p.id] = {
            "points": rim_pts,
            "normals": rim_nrm,
            "hb": hb,
            "near": near[p.id],
            "dist": _RingDistance(p.boundary, 0.5 * hb),
        }

    cut_rims = []
    for c in domain.cutouts:
        r_eq = np.sqrt(max(Polygon(c.boundary).area, 1e-12) / np.pi)
        near_c = min(max(sizing.near_rel * r_eq, sizing.ambient / 8.0), sizing.ambient)
        spacing = sizing.boundary_frac * near_c * 1.6
        pts, nrm = _ring_points(c.boundary, spacing)
        cut_rims.append({"cutout": c, "points": pts, "normals": nrm, "spacing": spacing})

    bbox_poly = Polygon(outer)
    bbox = bbox_poly.bounds
    layers = _graded_lattice(domain, size_field, bbox)
    outer_dist = _RingDistance(outer, 0.25 * sizing.ambient)

    # Seeds every lattice point must respect: outer chain points, cutout rims
    # and their shields.  Pore rims are handled per-mesh.
    seed_pts, seed_sp = [], []
    curves = []
    for k, (tag, pts) in enumerate(chains):
        arr = np.asarray(pts)
        first_of_next = np.asarray(chains[(k + 1) % len(chains)][1][0])
        nxt = np.vstack([arr[1:], first_of_next[None, :]])
        sp = np.hypot(*(nxt - arr).T)
        seed_pts.append(arr)
        seed_sp.append(sp)
    curves.append((outer_dist, sizing.ambient))
    for cr in cut_rims:
        shields = cr["points"] + 0.8 * cr["spacing"] * cr["normals"]
        seed_pts.extend([cr["points"], shields])
        seed_sp.extend([np.full(len(cr["points"]), cr["spacing"])] * 2)
        curves.append((_RingDistance(cr["cutout"].boundary, 0.5 * cr["spacing"]), cr["spacing"]))

    seeds = np.vstack(seed_pts) if seed_pts else np.empty((0, 2))
    spacings = np.concatenate(seed_sp) if seed_sp else np.empty(0)
    lattice = _thin(layers, seeds, spacings, curves)

    # Keep lattice strictly inside the domain, outside cutouts.
    if len(lattice):
        keep = _contains(outer, lattice)
        for c in domain.cutouts:
            keep &= ~_contains(c.boundary, lattice)
        lattice = lattice[keep]

    return {
        "chains": chains,
        "rims": rims,
        "cut_rims": cut_rims,
        "lattice": lattice,
        "size_field": size_field,
        "domain_poly": bbox_poly,
    }


def _assemble(domain, pores, cloud, porous: bool):
    chains = cloud["chains"]
    node_blocks = []
    chain_index = []
    offset = 0
    for tag, pts in chains:
        arr = np.asarray(pts)
        chain_index.append((tag, offset, len(arr)))
        node_blocks.append(arr)
        offset += len(arr)

    cut_edges = []
    for cr in cloud["cut_rims"]:
        n = len(cr["points"])
        idx = offset + np.arange(n)
        cut_edges.append((cr["cutout"].tag, idx))
        node_blocks.append(cr["points"])
        offset += n
        node_blocks.append(cr["points"] + 0.8 * cr["spacing"] * cr["normals"])
        offset += n

    pore_loops = {}
    required_edges = []
    if porous:
        for p in pores:
            rim = cloud["rims"][p.id]
            n = len(rim["points"])
            idx = offset + np.arange(n)
            pore_loops[p.id] = idx
            node_blocks.append(rim["points"])
            offset += n
            node_blocks.append(rim["points"] + 0.8 * rim["hb"] * rim["normals"])
            offset += n

    lattice = cloud["lattice"]
    if porous and pores and len(lattice):
        keep = np.ones(len(lattice), dtype=bool)
        for p in pores:
            rim = cloud["rims"][p.id]
            keep &= ~_contains(p.boundary, lattice)
            keep &= rim["dist"](lattice) >= max(1.35 * rim["hb"], 0.55 * rim["near"])
        lattice = lattice[keep]
    node_blocks.append(lattice)
    nodes = np.vstack([b for b in node_blocks if len(b)])

    tri = Delaunay(nodes)
    simplices = tri.simplices
    cent = nodes[simplices].mean(axis=1)
    keep = _contains(domain.outer_boundary, cent)
    for c in domain.cutouts:
        keep &= ~_contains(c.boundary, cent)
    if porous:
        for p in pores:
            keep &= ~_contains(p.boundary, cent)
    simplices = simplices[keep]

    # orient counterclockwise, drop degenerate slivers
    xy = nodes[simplices]
    area2 = (xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1]) - (
        xy[:, 2, 0] - xy[:, 0, 0]
    ) * (xy[:, 1, 1] - xy[:, 0, 1])
    flip = area2 < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    scale = float(np.sqrt(np.abs(area2).mean()))
    simplices = simplices[np.abs(area2) > 1e-10 * scale**2]

    edge_set = set()
    for t in simplices:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edge_set.add((min(a, b), max(a, b)))

    # conformity: outer chains, cutout rims, pore rims
    boundary_edges = {}
    boundary_nodes = {}
    total = sum(n for _, _, n in chain_index)
    for tag, start, n in chain_index:
        ids = np.arange(start, start + n)
        nxt = np.roll(np.arange(total), -1)
        edges = []
        for i in ids:
            j = (i + 1) % total
            edges.append((int(i), int(j)))
        boundary_edges.setdefault(tag, []).extend(edges)
        boundary_nodes.setdefault(tag, []).extend(int(i) for i in ids)
    for tag, idx in cut_edges:
        edges = [(int(idx[k]), int(idx[(k + 1) % len(idx)])) for k in range(len(idx))]
        boundary_edges.setdefault(tag, []).extend(edges)
        boundary_nodes.setdefault(tag, []).extend(int(i) for i in idx)
    required = [e for edges in boundary_edges.values() for e in edges]
    for pid, idx in pore_loops.items():
        required.extend((int(idx[k]), int(idx[(k + 1) % len(idx)])) for k in range(len(idx)))

    missing = [e for e in required if (min(e), max(e)) not in edge_set]
    if missing:
        raise MeshingError(
            f"{len(missing)} boundary segments are not Delaunay-conforming "
            f"(first: {missing[0]}); refine the mesh sizing (smaller ambient/near spacing)"
        )

    mesh = VolumeMesh(
        nodes=nodes,
        triangles=simplices,
        thickness=domain.thickness,
        boundary_edges=boundary_edges,
        boundary_nodes={t: sorted(set(v)) for t, v in boundary_nodes.items()},
        pore_loops={pid: idx.copy() for pid, idx in pore_loops.items()},
    )
    mesh.validate()
    return mesh


def generate_reference_mesh(domain: ReferenceDomain, pores, sizing: MeshSizing) -> VolumeMesh:
    """Mesh the pore-free domain, graded near (future) pore locations."""
    cloud = _build_point_cloud(domain, list(pores), sizing)
    return _assemble(domain, list(pores), cloud, porous=False)


def generate_porous_mesh(model, sizing: MeshSizing) -> VolumeMesh:
    """Mesh the domain minus its pores; rim segments become tagged edges."""
    cloud = _build_point_cloud(model.domain, list(model.pores), sizing)
    mesh = _assemble(model.domain, list(model.pores), cloud, porous=True)
    return model.apply_bcs(mesh)


def generate_matched_meshes(model, sizing: MeshSizing):
    """Reference and porous meshes from one shared point cloud."""
    cloud = _build_point_cloud(model.domain, list(model.pores), sizing)
    ref = _assemble(model.domain, list(model.pores), cloud, porous=False)
    por = _assemble(model.domain, list(model.pores), cloud, porous=True)
    return model.apply_bcs(ref), model.apply_bcs(por)
