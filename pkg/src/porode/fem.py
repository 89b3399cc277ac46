"""2D plane-stress linear-elastic FEM on 3-node triangles.

Units: node coordinates in mm, Young's modulus and tractions in N/m^2
(converted to N/mm^2 at assembly), point loads in N, displacements in mm,
internal stresses in N/mm^2.  The element is the constant-strain triangle;
pointwise stress/gradient queries go through a patch-recovery evaluator
(local linear least-squares over neighbouring element values), which is
exact for affine fields and O(h^2) on smooth ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from matplotlib.tri import Triangulation

from .errors import ConfigError, GeometryError, SolverError

PA_TO_MPA = 1e-6  # N/m^2 -> N/mm^2

RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class MaterialModel:
    """Isotropic plane-stress material.

    ``youngs_modulus`` is in N/m^2 as reported by material datasheets; the
    plane-stress tangent ``c_matrix`` is in N/mm^2 to match mm geometry.
    """

    youngs_modulus: float
    poissons_ratio: float

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ConfigError("Young's modulus must be positive")
        if not (-1.0 < self.poissons_ratio < 0.5):
            raise ConfigError("Poisson's ratio must lie in (-1, 0.5)")

    @property
    def e_mpa(self) -> float:
        return self.youngs_modulus * PA_TO_MPA

    @property
    def shear_modulus_mpa(self) -> float:
        return self.e_mpa / (2.0 * (1.0 + self.poissons_ratio))

    @property
    def c_matrix(self) -> np.ndarray:
        """Voigt plane-stress tangent [s_xx, s_yy, t_xy] = C [e_xx, e_yy, g_xy]."""
        e, nu = self.e_mpa, self.poissons_ratio
        return e / (1.0 - nu**2) * np.array(
            [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]
        )

    def stress_from_strain(self, eps: np.ndarray) -> np.ndarray:
        """Map strain tensors (..., 2, 2) to stress tensors (..., 2, 2)."""
        eps = np.asarray(eps)
        voigt = np.stack(
            [eps[..., 0, 0], eps[..., 1, 1], eps[..., 0, 1] + eps[..., 1, 0]], axis=-1
        )
        s = voigt @ self.c_matrix.T
        out = np.empty(eps.shape, dtype=s.dtype)
        out[..., 0, 0] = s[..., 0]
        out[..., 1, 1] = s[..., 1]
        out[..., 0, 1] = out[..., 1, 0] = s[..., 2]
        return out

    def strain_from_stress(self, sig: np.ndarray) -> np.ndarray:
        sig = np.asarray(sig)
        e, nu = self.e_mpa, self.poissons_ratio
        tr = sig[..., 0, 0] + sig[..., 1, 1]
        out = ((1.0 + nu) * sig - nu * tr[..., None, None] * np.eye(2)) / e
        return out


@dataclass
class VolumeMesh:
    """Triangle mesh with boundary conditions.

    ``dirichlet`` maps node index to (ux, uy) with ``None`` for a free
    component; ``neumann_edges`` is a list of (n1, n2, tx, ty) with traction
    in N/m^2 applied on the edge n1-n2; ``point_loads`` is a list of
    ((x, y), (fx, fy)) in N distributed by shape functions.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    dirichlet: dict = field(default_factory=dict)
    neumann_edges: list = field(default_factory=list)
    body_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    point_loads: list = field(default_factory=list)
    thickness: float = 1.0
    boundary_edges: dict = field(default_factory=dict)   # tag -> [(n1, n2), ...]
    boundary_nodes: dict = field(default_factory=dict)   # tag -> sorted node ids
    pore_loops: dict = field(default_factory=dict)       # pore id -> ordered node loop

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.body_force = np.asarray(self.body_force, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise GeometryError("nodes must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise GeometryError("triangles must be an (M, 3) array")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def element_geometry(self):
        """Per-element node coordinates, areas and shape gradients."""
        xy = self.nodes[self.triangles]  # (M, 3, 2)
        x, y = xy[..., 0], xy[..., 1]
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        area2 = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        return xy, 0.5 * area2, b, c

    def validate(self) -> None:
        _, areas, _, _ = self.element_geometry()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise GeometryError(
                f"element {bad} has non-positive Jacobian (area {areas[bad]:.3g})"
            )


def _mesh_triangulation(mesh: VolumeMesh) -> Triangulation:
    return Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)


@dataclass(frozen=True)
class Functional:
    """Weighted sum of pointwise displacement projections.

    Each term is (point, unit direction, weight); the value on a solution is
    ``sum(w * d . u(x))``.
    """

    terms: tuple

    def __post_init__(self):
        cleaned = []
        for point, direction, weight in self.terms:
            p = np.asarray(point, dtype=float)
            d = np.asarray(direction, dtype=float)
            norm = float(np.hypot(*d))
            if abs(norm - 1.0) > 1e-8:
                raise ConfigError(f"functional direction {d.tolist()} is not a unit vector")
            cleaned.append((p, d, float(weight)))
        object.__setattr__(self, "terms", tuple(cleaned))

    def __len__(self) -> int:
        return len(self.terms)


class FieldSolution:
    """A solved displacement field with pointwise evaluators.

    The gradient/strain/stress evaluators use patch recovery: a linear
    least-squares fit of surrounding element gradients, evaluated at the
    query point.  ``strain`` is the symmetric part of the recovered
    Jacobian and ``stress`` follows from the plane-stress tangent, so the
    kinematic and constitutive relations hold by construction.
    """

    def __init__(self, mesh: VolumeMesh, material: MaterialModel, displacements: np.ndarray):
        self.mesh = mesh
        self.material = material
        self.u = np.asarray(displacements, dtype=float)
        xy, areas, b, c = mesh.element_geometry()
        ue = self.u[mesh.triangles]  # (M, 3, 2)
        inv2a = 1.0 / (2.0 * areas)
        # Jacobian J[a, k] = du_a/dx_k, constant per element.
        dudx = np.einsum("mi,mia->ma", b, ue) * inv2a[:, None]
        dudy = np.einsum("mi,mia->ma", c, ue) * inv2a[:, None]
        self.element_jacobian = np.stack([dudx, dudy], axis=-1)  # (M, 2, 2)
        self._centroids = xy.mean(axis=1)
        self._areas = areas
        self._tri = _mesh_triangulation(mesh)
        self._finder = self._tri.get_trifinder()
        self._node_to_elems = None
        self._local_h = np.sqrt(areas)

    # -- point location ----------------------------------------------------

    def find_elements(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self._finder(pts[:, 0], pts[:, 1])
        if np.any(idx < 0):
            bad = pts[np.where(idx < 0)[0][0]]
            raise GeometryError(f"point {bad.tolist()} lies outside the mesh")
        return idx

    def _adjacency(self):
        if self._node_to_elems is None:
            n2e = [[] for _ in range(self.mesh.n_nodes)]
            for e, tri in enumerate(self.mesh.triangles):
                for n in tri:
                    n2e[n].append(e)
            self._node_to_elems = [np.array(v, dtype=np.int64) for v in n2e]
        return self._node_to_elems

    def _patch(self, elem: int, rings: int = 2) -> np.ndarray:
        n2e = self._adjacency()
        elems = {elem}
        frontier_nodes = set(self.mesh.triangles[elem])
        for _ in range(rings):
            new_elems = set()
            for n in frontier_nodes:
                new_elems.update(n2e[n].tolist())
            elems |= new_elems
            frontier_nodes = set(self.mesh.triangles[list(new_elems)].ravel().tolist())
        return np.fromiter(elems, dtype=np.int64)

    # -- evaluators ----------------------------------------------------------

    def displacement(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elems = self.find_elements(pts)
        xy = self.mesh.nodes[self.mesh.triangles[elems]]
        ue = self.u[self.mesh.triangles[elems]]
        lam = _barycentric(xy, pts)
        return np.einsum("ni,nia->na", lam, ue)

    def jacobian(self, points: np.ndarray, recovered: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        elems = self.find_elements(pts)
        if not recovered:
            return self.element_jacobian[elems]
        out = np.empty((len(pts), 2, 2))
        for i, (p, e) in enumerate(zip(pts, elems)):
            patch = self._patch(int(e))
            if len(patch) < 4:
                out[i] = self.element_jacobian[e]
                continue
            h = self._local_h[e]
            dx = (self._centroids[patch] - p) / h
            a_mat = np.column_stack([np.ones(len(patch)), dx[:, 0], dx[:, 1]])
            vals = self.element_jacobian[patch].reshape(len(patch), 4)
            coef, *_ = np.linalg.lstsq(a_mat, vals, rcond=None)
            out[i] = coef[0].reshape(2, 2)
        return out

    def strain(self, points: np.ndarray, recovered: bool = True) -> np.ndarray:
        j = self.jacobian(points, recovered=recovered)
        return 0.5 * (j + np.swapaxes(j, -1, -2))

    def stress(self, points: np.ndarray, recovered: bool = True) -> np.ndarray:
        return self.material.stress_from_strain(self.strain(points, recovered=recovered))


def _barycentric(xy: np.ndarray, pts: np.ndarray) -> np.ndarray:
    a = xy[:, 0]
    v0 = xy[:, 1] - a
    v1 = xy[:, 2] - a
    vp = pts - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (vp[:, 0] * v1[:, 1] - vp[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * vp[:, 1] - v0[:, 1] * vp[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


# -- assembly and solves -----------------------------------------------------


def assemble_stiffness(mesh: VolumeMesh, material: MaterialModel) -> sp.csr_matrix:
    xy, areas, b, c = mesh.element_geometry()
    if np.any(areas <= 0):
        mesh.validate()
    m = mesh.n_elements
    bmat = np.zeros((m, 3, 6))
    bmat[:, 0, 0::2] = b
    bmat[:, 1, 1::2] = c
    bmat[:, 2, 0::2] = c
    bmat[:, 2, 1::2] = b
    bmat /= (2.0 * areas)[:, None, None]
    cmat = material.c_matrix
    ke = np.einsum("mpi,pq,mqj,m->mij", bmat, cmat, bmat, areas) * mesh.thickness
    dof = np.empty((m, 6), dtype=np.int64)
    dof[:, 0::2] = 2 * mesh.triangles
    dof[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dof, 6, axis=1).ravel()
    cols = np.tile(dof, (1, 6)).ravel()
    k = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(2 * mesh.n_nodes, 2 * mesh.n_nodes))
    return k.tocsr()


def assemble_loads(mesh: VolumeMesh) -> np.ndarray:
    f = np.zeros(2 * mesh.n_nodes)
    t = mesh.thickness
    for n1, n2, tx, ty in mesh.neumann_edges:
        length = float(np.hypot(*(mesh.nodes[n2] - mesh.nodes[n1])))
        half = 0.5 * length * t * PA_TO_MPA
        f[2 * n1] += half * tx
        f[2 * n1 + 1] += half * ty
        f[2 * n2] += half * tx
        f[2 * n2 + 1] += half * ty
    if np.any(mesh.body_force != 0.0):
        _, areas, _, _ = mesh.element_geometry()
        share = areas * t / 3.0
        for k in range(3):
            nodes = mesh.triangles[:, k]
            np.add.at(f, 2 * nodes, share * mesh.body_force[0])
            np.add.at(f, 2 * nodes + 1, share * mesh.body_force[1])
    if mesh.point_loads:
        tri = _mesh_triangulation(mesh)
        finder = tri.get_trifinder()
        for point, force in mesh.point_loads:
            p = np.asarray(point, dtype=float)
            e = int(finder(p[0], p[1]))
            if e < 0:
                raise GeometryError(f"point load location {p.tolist()} lies outside the mesh")
            conn = mesh.triangles[e]
            lam = _barycentric(mesh.nodes[conn][None, :, :], p[None, :])[0]
            for n, w in zip(conn, lam):
                f[2 * n] += w * force[0]
                f[2 * n + 1] += w * force[1]
    return f


_RIGID_MODE_NAMES = ("translation-x", "translation-y", "rotation")


def _rigid_modes(nodes: np.ndarray) -> np.ndarray:
    n = len(nodes)
    modes = np.zeros((3, 2 * n))
    modes[0, 0::2] = 1.0
    modes[1, 1::2] = 1.0
    c = nodes.mean(axis=0)
    modes[2, 0::2] = -(nodes[:, 1] - c[1])
    modes[2, 1::2] = nodes[:, 0] - c[0]
    return modes


def _solve_constrained(k: sp.csr_matrix, f: np.ndarray, mesh: VolumeMesh) -> np.ndarray:
    n_dof = 2 * mesh.n_nodes
    u = np.zeros(n_dof)
    fixed = np.zeros(n_dof, dtype=bool)
    for node, (ux, uy) in mesh.dirichlet.items():
        if ux is not None:
            fixed[2 * node] = True
            u[2 * node] = ux
        if uy is not None:
            fixed[2 * node + 1] = True
            u[2 * node + 1] = uy
    free = ~fixed
    if not fixed.any():
        _raise_rigid(k, free, mesh)
    kff = k[free][:, free].tocsc()
    rhs = f[free] - k[free][:, fixed] @ u[fixed]
    try:
        lu = spla.splu(kff)
        uf = lu.solve(rhs)
    except RuntimeError as e:
        _raise_rigid(k, free, mesh, cause=str(e))
        raise
    if not np.all(np.isfinite(uf)):
        _raise_rigid(k, free, mesh, cause="factorisation produced non-finite values")
    res = np.linalg.norm(kff @ uf - rhs)
    ref = np.linalg.norm(rhs)
    if ref > 0 and res > RESIDUAL_RTOL * ref:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {RESIDUAL_RTOL:.0e} * ||f||")
    u[free] = uf
    return u


def _raise_rigid(k, free, mesh, cause="constrained stiffness is singular"):
    modes = _rigid_modes(mesh.nodes)
    knorm = max(abs(k).max(), 1.0)
    for name, mode in zip(_RIGID_MODE_NAMES, modes):
        m = mode.copy()
        m[~free] = 0.0
        norm = np.linalg.norm(m)
        if norm == 0:
            continue
        m /= norm
        if np.linalg.norm(k @ m) < 1e-9 * knorm:
            raise SolverError(f"{cause}: unconstrained rigid mode '{name}'")
    raise SolverError(cause)


def solve_primary(mesh: VolumeMesh, material: MaterialModel) -> FieldSolution:
    """Solve the displacement BVP on the mesh with its own loads."""
    mesh.validate()
    k = assemble_stiffness(mesh, material)
    f = assemble_loads(mesh)
    u = _solve_constrained(k, f, mesh)
    return FieldSolution(mesh, material, u.reshape(-1, 2))


def solve_adjoint(mesh: VolumeMesh, material: MaterialModel, functional: Functional) -> FieldSolution:
    """Solve the adjoint system: unit point loads at the functional points.

    Uses the positive-delta-load convention; the leading sign of the
    sensitivity formulas is pinned by the finite-difference gradient check
    in the verification suite.
    """
    mesh.validate()
    if len(functional) == 0:
        return FieldSolution(mesh, material, np.zeros((mesh.n_nodes, 2)))
    k = assemble_stiffness(mesh, material)
    adjoint_mesh = VolumeMesh(
        nodes=mesh.nodes,
        triangles=mesh.triangles,
        dirichlet=mesh.dirichlet,
        point_loads=[(p, w * d) for p, d, w in functional.terms],
        thickness=mesh.thickness,
    )
    f = assemble_loads(adjoint_mesh)
    u = _solve_constrained(k, f, mesh)
    return FieldSolution(mesh, material, u.reshape(-1, 2))


def evaluate_functional(solution: FieldSolution, functional: Functional) -> float:
    total = 0.0
    for p, d, w in functional.terms:
        u = solution.displacement(p[None, :])[0]
        total += w * float(d @ u)
    return total


def solve_porous(model, mesh_size=None, material: MaterialModel | None = None):
    """Ground-truth solve on the porous domain (pore boundaries traction free).

    Returns (FieldSolution, VolumeMesh).  Used only by the verification
    path; the estimator itself never meshes the porous domain.
    """
    from .meshing import MeshSizing, generate_porous_mesh

    sizing = mesh_size if isinstance(mesh_size, MeshSizing) else MeshSizing(ambient=mesh_size or 2.5)
    mesh = generate_porous_mesh(model, sizing)
    sol = solve_primary(mesh, material or model.material)
    return sol, mesh


# -- mesh2d v1 file format ----------------------------------------------------


def write_mesh_file(mesh: VolumeMesh, path) -> None:
    """Write the line-oriented ``mesh2d v1`` format (bit-exact round trip)."""
    lines = ["mesh2d v1"]
    lines.append(f"nodes {mesh.n_nodes}")
    for i, (x, y) in enumerate(mesh.nodes):
        lines.append(f"{i} {x!r} {y!r}")
    lines.append(f"tris {mesh.n_elements}")
    for i, (a, b, c) in enumerate(mesh.triangles):
        lines.append(f"{i} {a} {b} {c}")
    dirichlet = sorted(mesh.dirichlet.items())
    lines.append(f"dirichlet {len(dirichlet)}")
    for node, (ux, uy) in dirichlet:
        sx = "free" if ux is None else repr(float(ux))
        sy = "free" if uy is None else repr(float(uy))
        lines.append(f"{node} {sx} {sy}")
    lines.append(f"neumann {len(mesh.neumann_edges)}")
    for n1, n2, tx, ty in mesh.neumann_edges:
        lines.append(f"{n1} {n2} {float(tx)!r} {float(ty)!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_mesh_file(path) -> VolumeMesh:
    try:
        with open(path) as f:
            lines = [ln.strip() for ln in f if ln.strip()]
    except FileNotFoundError:
        raise ConfigError(f"mesh file not found: {path}")
    it = iter(lines)

    def expect(prefix):
        ln = next(it, None)
        if ln is None or not ln.startswith(prefix):
            raise ConfigError(f"mesh file {path}: expected '{prefix} N', got {ln!r}")
        return int(ln.split()[1])

    header = next(it, None)
    if header != "mesh2d v1":
        raise ConfigError(f"mesh file {path}: bad header {header!r}")
    n = expect("nodes")
    nodes = np.empty((n, 2))
    for _ in range(n):
        i, x, y = next(it).split()
        nodes[int(i)] = (float(x), float(y))
    m = expect("tris")
    tris = np.empty((m, 3), dtype=np.int64)
    for _ in range(m):
        i, a, b, c = next(it).split()
        tris[int(i)] = (int(a), int(b), int(c))
    k = expect("dirichlet")
    dirichlet = {}
    for _ in range(k):
        node, sx, sy = next(it).split()
        ux = None if sx == "free" else float(sx)
        uy = None if sy == "free" else float(sy)
        dirichlet[int(node)] = (ux, uy)
    l = expect("neumann")
    neumann = []
    for _ in range(l):
        n1, n2, tx, ty = next(it).split()
        neumann.append((int(n1), int(n2), float(tx), float(ty)))
    return VolumeMesh(nodes=nodes, triangles=tris, dirichlet=dirichlet, neumann_edges=neumann)
