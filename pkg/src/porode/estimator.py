"""Assembly of the TSE / FOE / SOE estimators and effectivity reporting.

The estimator never meshes or solves the porous domain: it runs the two
reference FEM solves, one pair of exterior solves per pore, one pair of
multiplier solves per pore, and boundary quadratures.  Ground truth, when
available, is attached afterwards to produce effectivity indices.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, SolverError
from .fem import Functional, evaluate_functional, solve_adjoint, solve_primary
from .geometry import PairPolicy, build_pore_boundary_mesh, select_interaction_pairs
from .meshing import MeshSizing, generate_reference_mesh
from .model import PorousModel
from .sensitivity import (
    TopoParams,
    build_bundle,
    first_order_term,
    multiplier_fields_on_target,
    second_order_term,
    solve_multipliers,
    topo_derivative_at,
)


@dataclass(frozen=True)
class EstimateOptions:
    """Knobs of one estimator run.

    ``interaction_sum`` chooses how the two ordered evaluations of a pair's
    mixed term enter the total: ``"unordered"`` averages them (one Taylor
    cross term per pair, the default), ``"ordered"`` adds both directions
    literally.
    """

    sizing: MeshSizing = field(default_factory=MeshSizing)
    bem_elements: int = 128
    xi_fraction: float = 0.01
    pair_policy: PairPolicy = field(default_factory=PairPolicy)
    interaction_sum: str = "unordered"
    include_second_order: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.interaction_sum not in ("unordered", "ordered"):
            raise GeometryError(f"unknown interaction_sum {self.interaction_sum!r}")
        if self.bem_elements < 8:
            raise GeometryError("bem_elements must be at least 8")


@dataclass
class PoreTerms:
    pore_id: int
    d_topo: float
    d1_shape: float
    d2_self: float
    tse_topo: float
    equilibration: dict


@dataclass
class PairTerm:
    source: int
    target: int
    d2_int: float


@dataclass
class SensitivityBreakdown:
    """Per-pore and per-ordered-pair terms plus their totals."""

    per_pore: list
    per_pair: list
    interaction_sum: str

    @property
    def d_topo(self) -> float:
        return sum(p.d_topo for p in self.per_pore)

    @property
    def d1_shape(self) -> float:
        return sum(p.d1_shape for p in self.per_pore)

    @property
    def d2_self(self) -> float:
        return sum(p.d2_self for p in self.per_pore)

    @property
    def d2_int(self) -> float:
        return self._pair_scale() * sum(p.d2_int for p in self.per_pair)

    def _pair_scale(self) -> float:
        return 0.5 if self.interaction_sum == "unordered" else 1.0

    @property
    def d_pore(self) -> float:
        return self.d_topo + self.d1_shape + self.d2_self + self.d2_int

    def pair_total(self, i: int, j: int) -> float:
        """Combined interaction of the unordered pair {i, j}."""
        vals = [p.d2_int for p in self.per_pair if {p.source, p.target} == {i, j}]
        return self._pair_scale() * sum(vals)

    def unordered_pairs(self) -> list:
        seen = []
        for p in self.per_pair:
            key = (min(p.source, p.target), max(p.source, p.target))
            if key not in seen:
                seen.append(key)
        return seen


def effectivity_index(estimate_value: float, psi: float, psi0: float) -> float:
    """(psi - psi0) / D : the tables' convention, ideal value 1.

    This is the inverse of the ratio sometimes printed next to its
    definition in the literature; the table arithmetic fixes the
    orientation used here.
    """
    if psi == psi0:
        raise SolverError("effectivity undefined: psi equals psi0")
    if estimate_value == 0.0:
        return float("inf") if (psi - psi0) > 0 else float("-inf")
    return (psi - psi0) / estimate_value


@dataclass
class EstimateReport:
    psi0: float
    tse: float
    foe: float
    soe: float
    breakdown: SensitivityBreakdown
    mesh_stats: dict
    timings: dict
    bem_stats: dict
    ground_truth: float | None = None
    effectivity: dict | None = None
    effectivity_inverse: dict | None = None

    @property
    def estimates(self) -> dict:
        return {"tse": self.tse, "foe": self.foe, "soe": self.soe}

    def with_ground_truth(self, psi: float, porous_stats: dict | None = None) -> "EstimateReport":
        stats = dict(self.mesh_stats)
        if porous_stats:
            stats.update(porous_stats)
            if stats.get("porous_elements"):
                stats["element_ratio"] = stats["reference_elements"] / stats["porous_elements"]
        eff = None
        eff_inv = None
        if psi != self.psi0:
            eff = {
                name: effectivity_index(val - self.psi0, psi, self.psi0)
                for name, val in self.estimates.items()
            }
            eff_inv = {k: (0.0 if np.isinf(v) else 1.0 / v if v != 0 else float("inf"))
                       for k, v in eff.items()}
        return replace(
            self,
            ground_truth=psi,
            effectivity=eff,
            effectivity_inverse=eff_inv,
            mesh_stats=stats,
        )

    def to_dict(self, include_timings: bool = False) -> dict:
        breakdown = {
            "per_pore": [
                {
                    "pore_id": p.pore_id,
                    "d_topo": p.d_topo,
                    "d1_shape": p.d1_shape,
                    "d2_self": p.d2_self,
                    "tse_topo": p.tse_topo,
                }
                for p in self.breakdown.per_pore
            ],
            "per_pair": [
                {"source": p.source, "target": p.target, "d2_int": p.d2_int}
                for p in self.breakdown.per_pair
            ],
            "totals": {
                "d_topo": self.breakdown.d_topo,
                "d1_shape": self.breakdown.d1_shape,
                "d2_self": self.breakdown.d2_self,
                "d2_int": self.breakdown.d2_int,
                "d_pore": self.breakdown.d_pore,
            },
            "interaction_sum": self.breakdown.interaction_sum,
        }
        out = {
            "psi0": self.psi0,
            "tse": self.tse,
            "foe": self.foe,
            "soe": self.soe,
            "breakdown": breakdown,
            "ground_truth": self.ground_truth,
            "effectivity": self.effectivity,
            "effectivity_inverse": self.effectivity_inverse,
            "mesh_stats": self.mesh_stats,
            "bem_stats": self.bem_stats,
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings=include_timings), indent=1, sort_keys=True)

    def to_csv_row(self) -> str:
        eff = self.effectivity or {}
        fields = [
            ("psi0", self.psi0),
            ("tse", self.tse),
            ("foe", self.foe),
            ("soe", self.soe),
            ("d_topo", self.breakdown.d_topo),
            ("d1_shape", self.breakdown.d1_shape),
            ("d2_self", self.breakdown.d2_self),
            ("d2_int", self.breakdown.d2_int),
            ("psi", self.ground_truth),
            ("i_tse", eff.get("tse")),
            ("i_foe", eff.get("foe")),
            ("i_soe", eff.get("soe")),
            ("reference_elements", self.mesh_stats.get("reference_elements")),
            ("porous_elements", self.mesh_stats.get("porous_elements")),
        ]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([k for k, _ in fields])
        writer.writerow(["" if v is None else repr(v) for _, v in fields])
        return buf.getvalue()


def _validate_functional_points(model: PorousModel, functional: Functional) -> None:
    from shapely.geometry import Point

    domain_poly = model.domain.polygon
    for p, _, _ in functional.terms:
        pt = Point(np.asarray(p, dtype=float))
        if domain_poly.distance(pt) > 1e-9:
            raise GeometryError(f"functional point {list(p)} lies outside the domain")
        for pore in model.pores:
            if pore.polygon.exterior.distance(pt) < 1e-9 or pore.polygon.contains(pt):
                raise GeometryError(
                    f"functional point {list(p)} lies on or inside pore {pore.id}"
                )


def _pore_stage(model, z_sol, lam_sol, options, pore):
    mesh = build_pore_boundary_mesh(
        pore, pore.polygon.exterior.length / options.bem_elements
    )
    bundle = build_bundle(mesh, model.material, z_sol, lam_sol)
    p_ext, q_ext = solve_multipliers(bundle)
    return mesh, bundle, p_ext, q_ext


def estimate(model: PorousModel, functional: Functional, options: EstimateOptions = EstimateOptions()) -> EstimateReport:
    """Run the full estimator pipeline on the reference domain only."""
    timings = {}
    t_start = time.perf_counter()
    model.validate()
    _validate_functional_points(model, functional)

    t0 = time.perf_counter()
    ref_mesh = model.apply_bcs(generate_reference_mesh(model.domain, model.pores, options.sizing))
    timings["meshing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    z_sol = solve_primary(ref_mesh, model.material)
    lam_sol = solve_adjoint(ref_mesh, model.material, functional)
    psi0 = evaluate_functional(z_sol, functional)
    timings["reference_solve"] = time.perf_counter() - t0

    thickness = model.thickness
    topo_params = TopoParams(xi_fraction=options.xi_fraction)
    pores = sorted(model.pores, key=lambda p: p.id)

    t0 = time.perf_counter()
    if options.threads > 1 and len(pores) > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            staged = list(pool.map(lambda p: _pore_stage(model, z_sol, lam_sol, options, p), pores))
    else:
        staged = [_pore_stage(model, z_sol, lam_sol, options, p) for p in pores]
    timings["exterior_solve"] = time.perf_counter() - t0

    bundles = {}
    multipliers = {}
    per_pore = []
    t0 = time.perf_counter()
    for pore, (mesh, bundle, p_ext, q_ext) in zip(pores, staged):
        bundles[pore.id] = bundle
        multipliers[pore.id] = (p_ext, q_ext)
        t_val = topo_derivative_at(pore, z_sol, lam_sol, model.material, topo_params.formula_variant)
        xi_radius = options.xi_fraction * pore.equivalent_radius
        d_topo = thickness * np.pi * xi_radius**2 * t_val
        tse_topo = thickness * np.pi * pore.equivalent_radius**2 * t_val
        d1 = thickness * first_order_term(bundle, options.xi_fraction)
        if options.include_second_order:
            sig_p, jac_p, sig_q, jac_q = multiplier_fields_on_target(p_ext, q_ext, bundle)
            d2_self = thickness * second_order_term(
                bundle, sig_p, jac_p, sig_q, jac_q, options.xi_fraction, self_pair=True
            )
        else:
            d2_self = 0.0
        per_pore.append(
            PoreTerms(
                pore_id=pore.id,
                d_topo=float(d_topo),
                d1_shape=float(d1),
                d2_self=float(d2_self),
                tse_topo=float(tse_topo),
                equilibration={
                    "z": bundle.z_exterior.equilibration_correction,
                    "lambda": bundle.lam_exterior.equilibration_correction,
                    "p": p_ext.equilibration_correction,
                    "q": q_ext.equilibration_correction,
                },
            )
        )

    pairs = select_interaction_pairs(list(pores), options.pair_policy)
    per_pair = []
    if options.include_second_order:
        ordered = [(pr.i, pr.j) for pr in pairs] + [(pr.j, pr.i) for pr in pairs]
        ordered.sort()

        def one_pair(src_tgt):
            src, tgt = src_tgt
            p_ext, q_ext = multipliers[src]
            target = bundles[tgt]
            sig_p, jac_p, sig_q, jac_q = multiplier_fields_on_target(p_ext, q_ext, target)
            val = thickness * second_order_term(
                target, sig_p, jac_p, sig_q, jac_q, options.xi_fraction, self_pair=False
            )
            return PairTerm(source=src, target=tgt, d2_int=float(val))

        if options.threads > 1 and len(ordered) > 1:
            with ThreadPoolExecutor(max_workers=options.threads) as pool:
                per_pair = list(pool.map(one_pair, ordered))
        else:
            per_pair = [one_pair(st) for st in ordered]
    timings["sensitivity"] = time.perf_counter() - t0

    breakdown = SensitivityBreakdown(
        per_pore=per_pore, per_pair=per_pair, interaction_sum=options.interaction_sum
    )
    tse = psi0 + sum(p.tse_topo for p in per_pore)
    foe = psi0 + breakdown.d_topo + breakdown.d1_shape
    soe = foe + breakdown.d2_self + breakdown.d2_int
    timings["total"] = time.perf_counter() - t_start
    return EstimateReport(
        psi0=float(psi0),
        tse=float(tse),
        foe=float(foe),
        soe=float(soe),
        breakdown=breakdown,
        mesh_stats={
            "reference_elements": ref_mesh.n_elements,
            "reference_nodes": ref_mesh.n_nodes,
        },
        timings=timings,
        bem_stats={
            "elements_per_pore": options.bem_elements,
            "equilibration": {str(p.pore_id): p.equilibration for p in per_pore},
        },
    )
