"""Topological, first-order and second-order boundary sensitivity terms.

All boundary integrals run over pore-boundary Gauss points with the
geometry module's orientation: normals point from the pore into the
material, so the normal design speed Vn of a growing pore is positive.
Written against that convention, a growing traction-free pore changes the
functional at the first-order rate

    dPsi/deta = + integral( sigma(z) : eps(lambda) Vn ) dGamma,

whose sign is pinned end to end by the finite-difference oracle in the
verification suite.  Every term is linear in the primary-load lineage
(z, Q) and linear in the adjoint lineage (lambda, P).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bem import (
    ExteriorProblem,
    ExteriorSolution,
    evaluate_exterior_fields,
    exterior_traction_for_multiplier,
    exterior_traction_for_z,
    solve_exterior,
)
from .errors import GeometryError
from .fem import FieldSolution, MaterialModel
from .geometry import Pore, PoreBoundaryMesh


@dataclass(frozen=True)
class TopoParams:
    """Controls for the topological term.

    ``xi_fraction`` is the dimensionless lower limit of the shape parameter:
    the vanishing hole measures ``xi_fraction * equivalent_radius``.  The
    ``formula_variant`` selects the plane-stress circular-hole derivative
    (the default for this 2D code) or the classical spherical-hole 3D
    expression, kept for formula-level tests.
    """

    xi_fraction: float = 0.01
    formula_variant: str = "2D-plane-stress"

    def __post_init__(self):
        if not (0.0 < self.xi_fraction < 1.0):
            raise GeometryError("xi_fraction must lie in (0, 1)")
        if self.formula_variant not in ("2D-plane-stress", "3D-spherical"):
            raise GeometryError(f"unknown formula variant {self.formula_variant!r}")


def topo_derivative(sig_z: np.ndarray, eps_l: np.ndarray, poissons_ratio: float,
                    variant: str = "2D-plane-stress") -> float:
    """Topological derivative per unit hole measure from local fields.

    2D plane stress (traction-free circular hole):
        T = 4/(1+nu) s(z):e(l) + (3nu-1)/(1-nu^2) tr s(z) tr e(l)
    3D (spherical hole):
        T = (3/4) (1-nu)/(7-5nu) [10 s(z):e(l) - (1-5nu)/(1-2nu) tr s tr e]
    """
    nu = poissons_ratio
    contraction = float(np.tensordot(sig_z, eps_l))
    traces = float(np.trace(sig_z) * np.trace(eps_l))
    if variant == "2D-plane-stress":
        return 4.0 / (1.0 + nu) * contraction + (3.0 * nu - 1.0) / (1.0 - nu**2) * traces
    if variant == "3D-spherical":
        return 0.75 * (1.0 - nu) / (7.0 - 5.0 * nu) * (
            10.0 * contraction - (1.0 - 5.0 * nu) / (1.0 - 2.0 * nu) * traces
        )
    raise GeometryError(f"unknown formula variant {variant!r}")


def topo_sensitivity(
    pore: Pore,
    z_solution: FieldSolution,
    adjoint_solution: FieldSolution,
    material: MaterialModel,
    params: TopoParams = TopoParams(),
) -> float:
    """Topological term of one pore: hole measure times the derivative.

    Evaluates the derivative at the pore centroid from the reference
    fields and multiplies by the area of a hole of radius
    ``xi_fraction * equivalent_radius``.
    """
    t_val = topo_derivative_at(pore, z_solution, adjoint_solution, material, params.formula_variant)
    xi_radius = params.xi_fraction * pore.equivalent_radius
    return float(np.pi * xi_radius**2) * t_val


def topo_derivative_at(pore, z_solution, adjoint_solution, material, variant="2D-plane-stress"):
    centroid = pore.centroid[None, :]
    sig_z = z_solution.stress(centroid)[0]
    eps_l = adjoint_solution.strain(centroid)[0]
    return topo_derivative(sig_z, eps_l, material.poissons_ratio, variant)


@dataclass
class BoundaryFieldBundle:
    """Superposed boundary fields of one pore at its quadrature points.

    ``sig_z``/``jac_z`` hold the z lineage (reference plus own exterior);
    ``sig_l``/``jac_l`` the adjoint lineage.  Midpoint (collocation) values
    feed the multiplier tractions; Gauss values feed the quadratures.
    """

    mesh: PoreBoundaryMesh
    material: MaterialModel
    z_exterior: ExteriorSolution
    lam_exterior: ExteriorSolution
    sig_z_mid: np.ndarray
    jac_z_mid: np.ndarray
    sig_l_mid: np.ndarray
    jac_l_mid: np.ndarray
    sig_z: np.ndarray
    jac_z: np.ndarray
    sig_l: np.ndarray
    jac_l: np.ndarray

    @property
    def pore(self) -> Pore:
        return self.mesh.pore


def build_bundle(
    mesh: PoreBoundaryMesh,
    material: MaterialModel,
    z_solution: FieldSolution,
    adjoint_solution: FieldSolution,
) -> BoundaryFieldBundle:
    """Solve both exterior problems for one pore and superpose the fields."""
    t_z = exterior_traction_for_z(mesh, z_solution)
    t_l = exterior_traction_for_z(mesh, adjoint_solution)
    z_ext = solve_exterior(ExteriorProblem(boundary=mesh, traction=t_z, material=material))
    l_ext = solve_exterior(ExteriorProblem(boundary=mesh, traction=t_l, material=material))
    sig_z_mid = z_solution.stress(mesh.midpoints) + z_ext.stress_at_midpoints()
    jac_z_mid = z_solution.jacobian(mesh.midpoints) + z_ext.jacobian_at_midpoints()
    sig_l_mid = adjoint_solution.stress(mesh.midpoints) + l_ext.stress_at_midpoints()
    jac_l_mid = adjoint_solution.jacobian(mesh.midpoints) + l_ext.jacobian_at_midpoints()
    sig_z = z_solution.stress(mesh.gauss_points) + z_ext.stress_at_gauss()
    jac_z = z_solution.jacobian(mesh.gauss_points) + z_ext.jacobian_at_gauss()
    sig_l = adjoint_solution.stress(mesh.gauss_points) + l_ext.stress_at_gauss()
    jac_l = adjoint_solution.jacobian(mesh.gauss_points) + l_ext.jacobian_at_gauss()
    return BoundaryFieldBundle(
        mesh=mesh,
        material=material,
        z_exterior=z_ext,
        lam_exterior=l_ext,
        sig_z_mid=sig_z_mid,
        jac_z_mid=jac_z_mid,
        sig_l_mid=sig_l_mid,
        jac_l_mid=jac_l_mid,
        sig_z=sig_z,
        jac_z=jac_z,
        sig_l=sig_l,
        jac_l=jac_l,
    )


def _sym(t: np.ndarray) -> np.ndarray:
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def first_order_term(bundle: BoundaryFieldBundle, xi: float) -> float:
    """Accumulated first-order shape contribution of one pore.

    Integrates the superposed stress/adjoint-strain product against the
    normal design speed; the (1 - xi^2)/2 factor is the exact eta-integral
    of the linearly scaled boundary measure.
    """
    eps_l = _sym(bundle.jac_l)
    contraction = np.einsum("kab,kab->k", bundle.sig_z, eps_l)
    vn = bundle.mesh.gauss_vn()
    return 0.5 * (1.0 - xi**2) * float(np.sum(bundle.mesh.gauss_weights * contraction * vn))


def first_order_rate(bundle: BoundaryFieldBundle) -> float:
    """Instantaneous dPsi/deta at full pore size (for gradient checks)."""
    eps_l = _sym(bundle.jac_l)
    contraction = np.einsum("kab,kab->k", bundle.sig_z, eps_l)
    vn = bundle.mesh.gauss_vn()
    return float(np.sum(bundle.mesh.gauss_weights * contraction * vn))


def solve_multipliers(bundle: BoundaryFieldBundle) -> tuple:
    """Exterior solves for both Lagrangian multipliers of one source pore.

    Q is driven by the z lineage and P by the adjoint lineage, each through
    the dipole-layer traction built from the pore's own design velocity and
    augmented boundary gradient.  Both solutions scale linearly with their
    driving field and are independent of the shape parameter.
    """
    mesh = bundle.mesh
    velocity = mesh.midpoints - mesh.pore.centroid
    t_q = exterior_traction_for_multiplier(mesh, bundle.jac_z_mid, velocity, bundle.material)
    t_p = exterior_traction_for_multiplier(mesh, bundle.jac_l_mid, velocity, bundle.material)
    q_ext = solve_exterior(
        ExteriorProblem(boundary=mesh, traction=t_q, material=bundle.material, remove_moment=False)
    )
    p_ext = solve_exterior(
        ExteriorProblem(boundary=mesh, traction=t_p, material=bundle.material, remove_moment=False)
    )
    return p_ext, q_ext


def _interp_periodic(mesh: PoreBoundaryMesh, values: np.ndarray, s_query: np.ndarray) -> np.ndarray:
    s_mid = mesh.arclength
    per = mesh.perimeter
    flat = values.reshape(len(s_mid), -1)
    s_ext = np.concatenate([s_mid - per, s_mid, s_mid + per])
    out = np.empty((len(s_query), flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(s_query, s_ext, np.concatenate([flat[:, c]] * 3))
    return out.reshape((len(s_query),) + values.shape[1:])


def multiplier_fields_on_target(
    p_ext: ExteriorSolution,
    q_ext: ExteriorSolution,
    target: BoundaryFieldBundle,
):
    """sigma and Jacobian of P and Q on a target pore's Gauss points.

    When the target is the source pore itself, the boundary recovery values
    are used; otherwise the multiplier fields are evaluated at the target
    midpoints through the representation integral and interpolated.
    """
    if target.mesh is p_ext.boundary:
        return (
            p_ext.stress_at_gauss(),
            p_ext.jacobian_at_gauss(),
            q_ext.stress_at_gauss(),
            q_ext.jacobian_at_gauss(),
        )
    jac_p_mid, jac_q_mid = evaluate_exterior_fields([p_ext, q_ext], target.mesh.midpoints)
    material = p_ext.material
    sig_p_mid = material.stress_from_strain(_sym(jac_p_mid))
    sig_q_mid = material.stress_from_strain(_sym(jac_q_mid))
    gauss_s = _gauss_arclength(target.mesh)
    return (
        _interp_periodic(target.mesh, sig_p_mid, gauss_s),
        _interp_periodic(target.mesh, jac_p_mid, gauss_s),
        _interp_periodic(target.mesh, sig_q_mid, gauss_s),
        _interp_periodic(target.mesh, jac_q_mid, gauss_s),
    )


def _gauss_arclength(mesh: PoreBoundaryMesh) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(mesh.lengths)])
    offs = 0.5 + 0.5 * np.array([-1.0, 1.0]) / np.sqrt(3.0)
    return (cum[:-1, None] + mesh.lengths[:, None] * offs[None, :]).ravel()


def second_order_term(
    target: BoundaryFieldBundle,
    sig_p: np.ndarray,
    jac_p: np.ndarray,
    sig_q: np.ndarray,
    jac_q: np.ndarray,
    xi: float,
    self_pair: bool,
) -> float:
    """One second-order contribution, integrated over the target boundary.

    The bracket pairs each lineage with the opposite multiplier:

        (sig_z : eps_P) I + (sig_l : eps_Q) I
        - sig_P jac_z - sig_z jac_P - sig_Q jac_l - sig_l jac_Q

    applied to the target's design speed W and projected on the normal,
    scaled by (1 - xi)^2.  The self term carries the 1/2 of the quadratic
    Taylor diagonal.
    """
    eps_p = _sym(jac_p)
    eps_q = _sym(jac_q)
    eye = np.eye(2)
    bracket = (
        np.einsum("kab,kab->k", target.sig_z, eps_p)[:, None, None] * eye
        + np.einsum("kab,kab->k", target.sig_l, eps_q)[:, None, None] * eye
        - np.einsum("kac,kcb->kab", sig_p, target.jac_z)
        - np.einsum("kac,kcb->kab", target.sig_z, jac_p)
        - np.einsum("kac,kcb->kab", sig_q, target.jac_l)
        - np.einsum("kac,kcb->kab", target.sig_l, jac_q)
    )
    w_vec = target.mesh.gauss_velocity()
    wn = np.einsum("kab,kb,ka->k", bracket, w_vec, target.mesh.gauss_normals)
    value = (1.0 - xi) ** 2 * float(np.sum(target.mesh.gauss_weights * wn))
    return 0.5 * value if self_pair else value
