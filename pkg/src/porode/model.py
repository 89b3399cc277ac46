"""The porous model: geometry, material, boundary conditions, pores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .fem import MaterialModel, VolumeMesh
from .geometry import Pore, ReferenceDomain


@dataclass(frozen=True)
class PorousModel:
    """Reference domain plus pore set plus loads and supports.

    ``dirichlet`` maps a boundary tag to an (ux, uy) pair with ``None``
    meaning free; ``tractions`` maps a tag to a traction vector in N/m^2;
    ``point_loads`` is a list of ((x, y), (fx, fy)) in N.
    """

    domain: ReferenceDomain
    pores: tuple
    material: MaterialModel
    dirichlet: dict = field(default_factory=dict)
    tractions: dict = field(default_factory=dict)
    point_loads: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pores", tuple(self.pores))
        object.__setattr__(self, "point_loads", tuple(self.point_loads))
        tags = set(self.domain.boundary_tags) | {c.tag for c in self.domain.cutouts}
        for t in list(self.dirichlet) + list(self.tractions):
            if t not in tags:
                raise GeometryError(f"boundary condition references unknown tag {t!r}")
        ids = [p.id for p in self.pores]
        if len(set(ids)) != len(ids):
            raise GeometryError("pore ids must be unique")

    @property
    def thickness(self) -> float:
        return self.domain.thickness

    def validate(self) -> None:
        self.domain.validate_pores(list(self.pores))

    def pore_by_id(self, pid: int) -> Pore:
        for p in self.pores:
            if p.id == pid:
                return p
        raise GeometryError(f"no pore with id {pid}")

    def with_pores(self, pores) -> "PorousModel":
        return PorousModel(
            domain=self.domain,
            pores=tuple(pores),
            material=self.material,
            dirichlet=dict(self.dirichlet),
            tractions=dict(self.tractions),
            point_loads=self.point_loads,
        )

    def scaled_pore(self, pore_id: int, eta: float) -> "PorousModel":
        return self.with_pores(
            [p.scaled(eta) if p.id == pore_id else p for p in self.pores]
        )

    def apply_bcs(self, mesh: VolumeMesh) -> VolumeMesh:
        """Attach this model's boundary conditions to a generated mesh."""
        for tag, (ux, uy) in self.dirichlet.items():
            for node in mesh.boundary_nodes.get(tag, ()):
                old = mesh.dirichlet.get(node, (None, None))
                mesh.dirichlet[node] = (
                    ux if ux is not None else old[0],
                    uy if uy is not None else old[1],
                )
        for tag, (tx, ty) in self.tractions.items():
            for n1, n2 in mesh.boundary_edges.get(tag, ()):
                mesh.neumann_edges.append((n1, n2, float(tx), float(ty)))
        mesh.point_loads.extend(
            (np.asarray(p, dtype=float), np.asarray(f, dtype=float)) for p, f in self.point_loads
        )
        return mesh
