"""Exterior Neumann elastostatics on a single pore boundary.

Direct collocation boundary elements with the plane-stress Kelvin
fundamental solution and constant (midpoint-collocated) elements.  The
exterior problem is the infinite medium around one traction-loaded pore
with decay at infinity; in 2D a decaying solution needs zero net traction
resultant, so prescribed data is equilibrated (a rigid-basis correction is
subtracted and its magnitude recorded) before the solve.

Tractions passed in and out of this module are taken with respect to the
pore mesh normals, which point from the pore into the material.  Stresses
are in N/mm^2, lengths in mm.

On-boundary stress and displacement gradients are reconstructed from exact
boundary data rather than near-singular quadrature: the traction gives the
normal/shear components, the tangential strain comes from differentiating
the boundary displacement along the arc, and the plane-stress constitutive
law closes the tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, SolverError
from .fem import FieldSolution, MaterialModel
from .geometry import Pore, PoreBoundaryMesh

_GAUSS4_POS = np.array(
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
)
_GAUSS4_WGT = np.array(
    [0.34785484513745385, 0.6521451548625461, 0.6521451548625461, 0.34785484513745385]
)

EQUILIBRATION_LIMIT = 0.05  # max rigid-basis correction relative to max|t|
MIN_SEGMENTS_FOR_DIFFERENCING = 8


# -- Kelvin kernels ------------------------------------------------------------


def _kelvin_constants(material: MaterialModel):
    mu = material.shear_modulus_mpa
    nu_eff = material.poissons_ratio / (1.0 + material.poissons_ratio)
    c1 = 1.0 / (8.0 * np.pi * mu * (1.0 - nu_eff))
    kappa = 3.0 - 4.0 * nu_eff
    return mu, nu_eff, c1, kappa


def kelvin_displacement(rvec: np.ndarray, material: MaterialModel) -> np.ndarray:
    """U[..., i, j]: displacement component i at offset r due to unit force e_j."""
    mu, nu_eff, c1, kappa = _kelvin_constants(material)
    r2 = rvec[..., 0] ** 2 + rvec[..., 1] ** 2
    r = np.sqrt(r2)
    rhat = rvec / r[..., None]
    eye = np.eye(2)
    logterm = -np.log(r)
    u = c1 * (kappa * logterm[..., None, None] * eye + rhat[..., :, None] * rhat[..., None, :])
    return u


def kelvin_displacement_gradient(rvec: np.ndarray, material: MaterialModel) -> np.ndarray:
    """D[..., i, k, j] = dU_ij/dr_k."""
    mu, nu_eff, c1, kappa = _kelvin_constants(material)
    r2 = rvec[..., 0] ** 2 + rvec[..., 1] ** 2
    r = np.sqrt(r2)
    rhat = rvec / r[..., None]
    eye = np.eye(2)
    d = (
        -kappa * np.einsum("ij,...k->...ikj", eye, rhat)
        + np.einsum("ik,...j->...ikj", eye, rhat)
        + np.einsum("kj,...i->...ikj", eye, rhat)
        - 2.0 * np.einsum("...i,...k,...j->...ikj", rhat, rhat, rhat)
    )
    return c1 * d / r[..., None, None, None]


def kelvin_stress(rvec: np.ndarray, material: MaterialModel) -> np.ndarray:
    """S[..., a, b, j]: stress component (a, b) at offset r for unit force e_j."""
    mu = material.shear_modulus_mpa
    eye = np.eye(2)
    d = kelvin_displacement_gradient(rvec, material)
    eps = 0.5 * (d + np.swapaxes(d, -3, -2))  # eps[..., a, b, j]
    tr = eps[..., 0, 0, :] + eps[..., 1, 1, :]
    lam_star = 2.0 * mu * material.poissons_ratio / (1.0 - material.poissons_ratio)
    s = 2.0 * mu * eps + lam_star * np.einsum("...j,ab->...abj", tr, eye)
    return s


def kelvin_traction(rvec: np.ndarray, normal: np.ndarray, material: MaterialModel) -> np.ndarray:
    """T[..., a, j]: traction component a (normal given at r) for unit force e_j."""
    s = kelvin_stress(rvec, material)
    return np.einsum("...abj,...b->...aj", s, normal)


# -- problem containers --------------------------------------------------------


@dataclass
class ExteriorProblem:
    """Traction data on one pore boundary, relative to the material normals."""

    boundary: PoreBoundaryMesh
    traction: np.ndarray  # (n_segments, 2), N/mm^2, sigma . n with n into material
    material: MaterialModel
    remove_moment: bool = True  # off for dipole-layer (multiplier) data with real torque

    def __post_init__(self):
        self.traction = np.asarray(self.traction, dtype=float)
        if self.traction.shape != (self.boundary.n_segments, 2):
            raise GeometryError(
                f"traction shape {self.traction.shape} does not match "
                f"{self.boundary.n_segments} boundary segments"
            )


@dataclass
class ExteriorSolution:
    """Solved exterior field with boundary and far-field evaluators."""

    boundary: PoreBoundaryMesh
    material: MaterialModel
    traction: np.ndarray                # equilibrated, per segment
    boundary_displacements: np.ndarray  # per collocation (midpoint)
    equilibration_correction: float     # max |subtracted traction| (N/mm^2)
    boundary_stress: np.ndarray = field(init=False)     # (n, 2, 2)
    boundary_jacobian: np.ndarray = field(init=False)   # (n, 2, 2)

    def __post_init__(self):
        self.boundary_stress, self.boundary_jacobian = _recover_boundary_fields(
            self.boundary, self.material, self.boundary_displacements, self.traction
        )

    # boundary-side evaluators (periodic linear interpolation in arclength)

    def _interp(self, values: np.ndarray, s_query: np.ndarray) -> np.ndarray:
        s_mid = self.boundary.arclength
        per = self.boundary.perimeter
        flat = values.reshape(len(s_mid), -1)
        s_ext = np.concatenate([s_mid - per, s_mid, s_mid + per])
        out = np.empty((len(s_query),) + values.shape[1:]).reshape(len(s_query), -1)
        for c in range(flat.shape[1]):
            v_ext = np.concatenate([flat[:, c]] * 3)
            out[:, c] = np.interp(s_query, s_ext, v_ext)
        return out.reshape((len(s_query),) + values.shape[1:])

    def stress_at_gauss(self) -> np.ndarray:
        return self._interp(self.boundary_stress, _gauss_arclength(self.boundary))

    def jacobian_at_gauss(self) -> np.ndarray:
        return self._interp(self.boundary_jacobian, _gauss_arclength(self.boundary))

    def displacement_at_gauss(self) -> np.ndarray:
        return self._interp(self.boundary_displacements, _gauss_arclength(self.boundary))

    def stress_at_midpoints(self) -> np.ndarray:
        return self.boundary_stress

    def jacobian_at_midpoints(self) -> np.ndarray:
        return self.boundary_jacobian

    # exterior-field evaluators

    def displacement(self, points: np.ndarray) -> np.ndarray:
        return _field_displacement(self, np.atleast_2d(points))

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """du_a/dx_b at exterior points via complex-step differentiation."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = 1e-100
        out = np.empty((len(pts), 2, 2))
        for k in range(2):
            step = np.zeros(2, dtype=complex)
            step[k] = 1j * h
            u = _field_displacement(self, pts.astype(complex) + step)
            out[:, :, k] = u.imag / h
        return out

    def strain(self, points: np.ndarray) -> np.ndarray:
        j = self.jacobian(points)
        return 0.5 * (j + np.swapaxes(j, -1, -2))

    def stress(self, points: np.ndarray) -> np.ndarray:
        return self.material.stress_from_strain(self.strain(points))

    def dump_boundary_csv(self, path) -> None:
        s = self.boundary.arclength
        mid = self.boundary.midpoints
        n = self.boundary.normals
        with open(path, "w") as f:
            f.write("s,x,y,nx,ny,tx,ty,ux,uy\n")
            for k in range(self.boundary.n_segments):
                f.write(
                    f"{s[k]!r},{mid[k,0]!r},{mid[k,1]!r},{n[k,0]!r},{n[k,1]!r},"
                    f"{self.traction[k,0]!r},{self.traction[k,1]!r},"
                    f"{self.boundary_displacements[k,0]!r},{self.boundary_displacements[k,1]!r}\n"
                )


def _gauss_arclength(boundary: PoreBoundaryMesh) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(boundary.lengths)])
    offs = 0.5 + 0.5 * np.array([-1.0, 1.0]) / np.sqrt(3.0)
    return (cum[:-1, None] + boundary.lengths[:, None] * offs[None, :]).ravel()


# -- equilibration --------------------------------------------------------------


def equilibrate_traction(boundary: PoreBoundaryMesh, traction: np.ndarray, remove_moment: bool = True):
    """Subtract the rigid-basis component of the prescribed traction.

    The net force must vanish for a decaying 2D exterior solution (the
    Kelvin log term); continuous pore data is force free up to recovery
    noise, which is removed here.  ``remove_moment`` additionally zeroes
    the net torque: appropriate for stress-derived data (divergence-free
    reference stress carries no torque), but it must stay off for the
    multiplier dipole data whose torque is genuine (a torque load decays
    like a rotlet and is admissible).

    Returns (corrected traction, max abs correction).  A correction beyond
    EQUILIBRATION_LIMIT of max|t| means the data is fundamentally
    unbalanced and the solve is refused.
    """
    t = np.asarray(traction, dtype=float)
    ell = boundary.lengths
    rel = boundary.midpoints - boundary.pore.centroid
    scale = max(boundary.pore.equivalent_radius, 1e-9)
    basis = [
        np.tile([1.0, 0.0], (len(ell), 1)),
        np.tile([0.0, 1.0], (len(ell), 1)),
    ]
    if remove_moment:
        basis.append(np.column_stack([-rel[:, 1], rel[:, 0]]) / scale)

    def wrench(v):
        force = (v * ell[:, None]).sum(axis=0)
        moment = np.sum((rel[:, 0] * v[:, 1] - rel[:, 1] * v[:, 0]) * ell)
        w = [force[0], force[1]]
        if remove_moment:
            w.append(moment)
        return np.array(w)

    m = np.column_stack([wrench(b) for b in basis])
    rhs = wrench(t)
    coef = np.linalg.solve(m, rhs)
    correction = sum(c * b for c, b in zip(coef, basis))
    t_eq = t - correction
    max_corr = float(np.abs(correction).max()) if len(t) else 0.0
    max_t = float(np.abs(t).max()) if np.abs(t).max() > 0 else 1.0
    if max_corr > EQUILIBRATION_LIMIT * max_t:
        raise SolverError(
            f"traction data is not self-equilibrated (rigid correction "
            f"{max_corr:.3e} exceeds {EQUILIBRATION_LIMIT:.0%} of max|t|={max_t:.3e}); "
            "a decaying 2D exterior solution does not exist for net loads"
        )
    return t_eq, max_corr


# -- assembly -------------------------------------------------------------------


_N_SUBDIVISIONS = 16


def _segment_distances(targets_re: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each target to each segment: (M, E)."""
    ab = b - a  # (E, 2)
    denom = np.einsum("ea,ea->e", ab, ab)
    ap = targets_re[:, None, :] - a[None, :, :]  # (M, E, 2)
    tt = np.clip(np.einsum("mea,ea->me", ap, ab) / denom[None, :], 0.0, 1.0)
    proj = a[None, :, :] + tt[..., None] * ab[None, :, :]
    d = targets_re[:, None, :] - proj
    return np.hypot(d[..., 0], d[..., 1])


def _batched_integrals(boundary: PoreBoundaryMesh, material: MaterialModel, targets, exterior_normals, self_index=None):
    """G[m, e, 2, 2] and H[m, e, 2, 2] for all targets against all elements.

    Far pairs use one 4-point Gauss rule per element; near pairs (within one
    element length) are re-integrated with a 16x subdivided rule.  Self
    elements get the closed-form ln integral for G and a vanishing principal
    value for H (flat elements).
    """
    targets = np.atleast_2d(targets)
    m = len(targets)
    n = boundary.n_segments
    a = boundary.points
    b = np.roll(boundary.points, -1, axis=0)
    lengths = boundary.lengths
    dtype = np.result_type(targets.dtype, float)

    # far tier: single rule over every (target, element) pair
    mids = 0.5 * (a + b)
    half = 0.5 * (b - a)
    gpts = mids[None, :, None, :] + _GAUSS4_POS[None, None, :, None] * half[None, :, None, :]
    w_far = 0.5 * _GAUSS4_WGT[None, None, :] * lengths[None, :, None]
    rvec = gpts.astype(dtype) - targets[:, None, None, :]
    u = kelvin_displacement(rvec, material)
    g = np.einsum("meq,meqij->meij", np.broadcast_to(w_far, rvec.shape[:3]), u)
    s = kelvin_stress(rvec, material)
    th = np.einsum("meqabj,eb->meqaj", s, exterior_normals)
    h = np.einsum("meq,meqaj->meja", np.broadcast_to(w_far, rvec.shape[:3]), th)

    # near tier: subdivided rule
    dist = _segment_distances(np.real(targets), a, b)
    near = dist < lengths[None, :]
    if self_index is not None:
        near[np.arange(m), self_index] = False
    mi, ei = np.nonzero(near)
    if len(mi):
        frac = (np.arange(_N_SUBDIVISIONS) + 0.5) / _N_SUBDIVISIONS
        sub_mid = (
            a[ei][:, None, :] + (b[ei] - a[ei])[:, None, :] * frac[None, :, None]
        )  # (P, S, 2)
        sub_half = 0.5 * (b[ei] - a[ei])[:, None, :] / _N_SUBDIVISIONS
        pts_sub = (
            sub_mid[:, :, None, :] + _GAUSS4_POS[None, None, :, None] * sub_half[:, :, None, :]
        ).reshape(len(mi), -1, 2)
        w_sub = np.broadcast_to(
            0.5 * _GAUSS4_WGT[None, None, :] * (lengths[ei] / _N_SUBDIVISIONS)[:, None, None],
            (len(mi), _N_SUBDIVISIONS, 4),
        ).reshape(len(mi), -1)
        rvec_n = pts_sub.astype(dtype) - targets[mi][:, None, :]
        u = kelvin_displacement(rvec_n, material)
        g[mi, ei] = np.einsum("pq,pqij->pij", w_sub, u)
        s = kelvin_stress(rvec_n, material)
        th = np.einsum("pqabj,pb->pqaj", s, exterior_normals[ei])
        h[mi, ei] = np.einsum("pq,pqaj->pja", w_sub, th)

    # self elements: analytic G, zero PV for H
    if self_index is not None:
        mu, nu_eff, c1, kappa = _kelvin_constants(material)
        es = self_index
        half_len = 0.5 * lengths[es]
        log_int = 2.0 * half_len * (1.0 - np.log(half_len))
        that = boundary.tangents[es]
        gs = c1 * (
            kappa * log_int[:, None, None] * np.eye(2)[None]
            + lengths[es, None, None] * np.einsum("ka,kb->kab", that, that)
        )
        g[np.arange(m), es] = gs
        h[np.arange(m), es] = 0.0
    return g, h


def solve_exterior(problem: ExteriorProblem, equilibrate: bool = True) -> ExteriorSolution:
    """Solve the exterior Neumann problem by direct collocation BEM."""
    boundary = problem.boundary
    n = boundary.n_segments
    if n < MIN_SEGMENTS_FOR_DIFFERENCING:
        raise GeometryError(
            f"pore {boundary.pore.id}: {n} boundary segments; need at least "
            f"{MIN_SEGMENTS_FOR_DIFFERENCING} for boundary recovery"
        )
    if equilibrate:
        traction, corr = equilibrate_traction(
            boundary, problem.traction, remove_moment=problem.remove_moment
        )
    else:
        traction, corr = np.asarray(problem.traction, dtype=float), 0.0
    if not np.any(traction):
        return ExteriorSolution(
            boundary=boundary,
            material=problem.material,
            traction=traction,
            boundary_displacements=np.zeros((n, 2)),
            equilibration_correction=corr,
        )
    # Exterior-domain outward normal points into the pore.
    nu_ext = -boundary.normals
    t_nu = -traction  # sigma . nu_ext = -(sigma . n_material)
    g, h = _batched_integrals(
        boundary, problem.material, boundary.midpoints, nu_ext, self_index=np.arange(n)
    )
    gmat = g.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)
    hmat = h.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)
    lhs = 0.5 * np.eye(2 * n) + hmat
    rhs = gmat @ t_nu.ravel()
    u = np.linalg.solve(lhs, rhs).reshape(n, 2)
    return ExteriorSolution(
        boundary=boundary,
        material=problem.material,
        traction=traction,
        boundary_displacements=u,
        equilibration_correction=corr,
    )


def _field_displacement(sol: ExteriorSolution, points: np.ndarray) -> np.ndarray:
    boundary = sol.boundary
    nu_ext = -boundary.normals
    t_nu = -sol.traction
    g, h = _batched_integrals(boundary, sol.material, points, nu_ext)
    return np.einsum("meij,ej->mi", g, t_nu) - np.einsum(
        "meij,ej->mi", h, sol.boundary_displacements
    )


def evaluate_exterior_fields(solutions, points: np.ndarray):
    """Displacement Jacobians of several solutions that share one boundary.

    The influence matrices depend only on geometry, so evaluating multiple
    fields (e.g. both Lagrangian multipliers) at the same points shares the
    kernel work.  Returns a list of (n_points, 2, 2) Jacobians, one per
    solution, computed by complex-step differentiation.
    """
    boundary = solutions[0].boundary
    material = solutions[0].material
    for s in solutions[1:]:
        if s.boundary is not boundary:
            raise GeometryError("evaluate_exterior_fields needs a shared boundary")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nu_ext = -boundary.normals
    h_step = 1e-100
    jacs = [np.empty((len(pts), 2, 2)) for _ in solutions]
    for k in range(2):
        step = np.zeros(2, dtype=complex)
        step[k] = 1j * h_step
        g, h = _batched_integrals(boundary, material, pts.astype(complex) + step, nu_ext)
        for jac, sol in zip(jacs, solutions):
            u = np.einsum("meij,ej->mi", g, -sol.traction) - np.einsum(
                "meij,ej->mi", h, sol.boundary_displacements
            )
            jac[:, :, k] = u.imag / h_step
    return jacs


# -- boundary recovery ----------------------------------------------------------


def _periodic_derivative(values: np.ndarray, s: np.ndarray, perimeter: float) -> np.ndarray:
    """d(values)/ds on a closed curve, second-order on nonuniform spacing."""
    vp = np.roll(values, -1, axis=0)
    vm = np.roll(values, 1, axis=0)
    sp = np.roll(s, -1) - s
    sp = np.where(sp < 0, sp + perimeter, sp)
    sm = s - np.roll(s, 1)
    sm = np.where(sm < 0, sm + perimeter, sm)
    shape = (-1,) + (1,) * (values.ndim - 1)
    hp, hm = sp.reshape(shape), sm.reshape(shape)
    return (hm**2 * vp - hp**2 * vm + (hp**2 - hm**2) * values) / (hp * hm * (hp + hm))


def _recover_boundary_fields(boundary, material, u_mid, traction):
    """On-boundary stress tensor and displacement Jacobian per element.

    Exact pointwise identities close the tensors: the prescribed traction
    supplies the normal/shear stress components, the tangential normal
    strain equals (du/ds).t, and the constitutive law supplies the rest.
    """
    that, nhat = boundary.tangents, boundary.normals
    s = boundary.arclength
    duds = _periodic_derivative(u_mid, s, boundary.perimeter)
    e, nu = material.e_mpa, material.poissons_ratio
    mu = material.shear_modulus_mpa
    eps_tt = np.einsum("ka,ka->k", duds, that)
    s_nn = np.einsum("ka,ka->k", traction, nhat)
    s_tn = np.einsum("ka,ka->k", traction, that)
    s_tt = e * eps_tt + nu * s_nn
    sig = (
        s_nn[:, None, None] * np.einsum("ka,kb->kab", nhat, nhat)
        + s_tt[:, None, None] * np.einsum("ka,kb->kab", that, that)
        + s_tn[:, None, None]
        * (np.einsum("ka,kb->kab", nhat, that) + np.einsum("ka,kb->kab", that, nhat))
    )
    eps_nn = (s_nn - nu * s_tt) / e
    dun_ds = np.einsum("ka,ka->k", duds, nhat)
    gamma_tn = s_tn / mu
    j_loc = np.empty((boundary.n_segments, 2, 2))
    j_loc[:, 0, 0] = eps_tt
    j_loc[:, 1, 0] = dun_ds
    j_loc[:, 1, 1] = eps_nn
    j_loc[:, 0, 1] = gamma_tn - dun_ds
    rot = np.stack([that, nhat], axis=-1)  # columns are local axes
    jac = np.einsum("kab,kbc,kdc->kad", rot, j_loc, rot)
    return sig, jac


# -- traction builders ----------------------------------------------------------


def exterior_traction_for_z(pore_mesh: PoreBoundaryMesh, reference_solution: FieldSolution) -> np.ndarray:
    """Neumann data -sigma(z0).n at the collocation midpoints."""
    sig0 = reference_solution.stress(pore_mesh.midpoints)
    return -np.einsum("kab,kb->ka", sig0, pore_mesh.normals)


def exterior_traction_for_multiplier(
    pore_mesh: PoreBoundaryMesh,
    jacobian_mid: np.ndarray,
    velocity_mid: np.ndarray,
    material: MaterialModel,
) -> np.ndarray:
    """Neumann data for a multiplier solve from a dipole-layer surface field.

    Builds A = n (x) (J v) per collocation point, contracts C : sym(A) and
    takes the negative arclength derivative of its tangential flux.  The
    arclength differencing is the module's dominant approximation; it is
    O(h^2) on smooth boundaries and yields data with zero net resultant on
    a closed loop.
    """
    n = pore_mesh.n_segments
    if n < MIN_SEGMENTS_FOR_DIFFERENCING:
        raise GeometryError(
            f"pore {pore_mesh.pore.id}: {n} segments are too few for tangential differencing"
        )
    conv = np.einsum("kab,kb->ka", jacobian_mid, velocity_mid)
    a_dip = np.einsum("ka,kb->kab", pore_mesh.normals, conv)
    s_dip = material.stress_from_strain(0.5 * (a_dip + np.swapaxes(a_dip, -1, -2)))
    flux = np.einsum("kab,kb->ka", s_dip, pore_mesh.tangents)
    return -_periodic_derivative(flux, pore_mesh.arclength, pore_mesh.perimeter)
