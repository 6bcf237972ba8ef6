"""Scenario harness: loss sweeps, fitted rates, cloaking verdicts and the
reflection/three-spheres diagnostics.

Each scenario couples a geometry, a coefficient layout, a reference problem
(what an outside observer should see in the zero-loss limit) and an
alternative hypothesis (what they would see if the device failed).  A sweep
solves the lossy problem along a geometric delta schedule, records the
observation-annulus discrepancies, the dissipated power and the boundary
reflection mismatches, estimates the discretization floor from a refined
mesh, and fits the log-log rate above the floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .geometry import (Circle, DiskSpec, GeometryConfig, RegionTag, SlabSpec,
                       TriMesh, build_mesh, kelvin_image_circle,
                       region_of_many, uniform_refine)
from .media import (Field, FieldRule, ConstScalar, ConstTensor, InDisk,
                    KelvinMap, Composition, MediumSpec, RadiusIn, ScalarField,
                    ScenarioKind, TagIn, TensorField, build_medium,
                    slab_reflection)
from .discretization import (BumpPair, DiscreteField, DtNOperator, RingSource,
                             SweepOperator, dtn_operator, evaluate,
                             evaluate_grad, norm, prolong, solve_system)


class ExperimentError(RuntimeError):
    pass


class FloorError(ExperimentError):
    """Requested fit window is drowned by the discretization floor."""


# ---------------------------------------------------------------------------
# scenario configuration


def _geometric_deltas(lo_exp=-1.0, hi_exp=-4.0, per_decade=2):
    n = int(round((lo_exp - hi_exp) * per_decade)) + 1
    return tuple(10.0 ** e for e in np.linspace(lo_exp, hi_exp, n))


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind
    geo: GeometryConfig
    contrast: float = 10.0
    sigma_contrast: float = 10.0
    source: object = None
    k: float = 0.0
    deltas: tuple = _geometric_deltas()
    h: float = 0.08
    grading: float = 3.0
    refine_levels: int = 0
    dtn_modes: int = 32
    cloak_tol: float = 0.05
    separation: float = 3.0

    def __post_init__(self):
        if any(d2 >= d1 for d1, d2 in zip(self.deltas, self.deltas[1:])):
            raise ExperimentError("delta schedule must be strictly decreasing")
        if self.kind in (ScenarioKind.SUPERLENS_FULL,):
            M = self.geo.r3 / self.geo.r1
            tau0 = self.geo.r2 / M
            if abs(M * tau0 - self.geo.r2) > 1e-12 * self.geo.r2:
                raise ExperimentError("lens invariant M tau0 = r2 broken")

    @property
    def lens_magnification(self):
        return self.geo.r3 / self.geo.r1

    @property
    def obs_window(self):
        return (self.geo.r3, self.geo.R_obs)


def make_scenario(kind: ScenarioKind, **overrides) -> ScenarioConfig:
    """Calibrated defaults for each scenario; overrides go to the dataclass
    (geometry overrides via geo=...)."""
    if kind in (ScenarioKind.QUASISTATIC_CLOAK, ScenarioKind.FREQ_CLOAK,
                ScenarioKind.SUPERLENS_NO_INNER_LAYER):
        inclusions = ("x1", "x2") if kind is not \
            ScenarioKind.SUPERLENS_NO_INNER_LAYER else ("x1",)
        g = GeometryConfig(r1=1.0, r2=2.0, r0=0.02, inclusions=inclusions,
                           ring_radius=5.0, R0=6.0, R_out=8.0, R_obs=6.0)
        base = dict(geo=g, contrast=10.0, sigma_contrast=10.0,
                    source=RingSource(5.0, ((1, 1.0), (2, 0.8), (3, 0.5))),
                    k=0.5 if kind is ScenarioKind.FREQ_CLOAK else 0.0,
                    h=0.06, grading=3.8)
        if kind is ScenarioKind.SUPERLENS_NO_INNER_LAYER:
            base["contrast"] = 100.0
            base["sigma_contrast"] = 100.0
    elif kind is ScenarioKind.SUPERLENS_FULL:
        obj = DiskSpec(0.15, 0.10, 0.22, RegionTag.INCLUSION_A)
        M = 4.0
        mag = Circle(M * obj.cx, M * obj.cy, M * obj.radius)
        g = GeometryConfig(r1=1.0, r2=2.0, ring_radius=5.0, R0=6.0,
                           R_out=8.0, R_obs=6.0, disks=(obj,),
                           extra_circles=(mag,))
        base = dict(geo=g, contrast=5.0, sigma_contrast=5.0,
                    source=RingSource(5.0, ((1, 1.0), (2, 0.8), (3, 0.5))),
                    k=0.0, h=0.06, grading=3.8)
    elif kind in (ScenarioKind.CM_CLOAK_MODIFIED,
                  ScenarioKind.CM_CLOAK_UNMODIFIED):
        r1, r2 = 0.8, 2.0
        k = 1.0 / r2
        if kind is ScenarioKind.CM_CLOAK_MODIFIED:
            obj = DiskSpec(0.0, 3.0, 0.5, RegionTag.INCLUSION_A)
            img = kelvin_image_circle(obj.circle, (0.0, 0.0), r2)
            g = GeometryConfig(r1=r1, r2=r2, ring_radius=5.8, R0=7.0,
                               R_out=11.0, R_obs=7.5, disks=(obj,),
                               extra_circles=(img,))
        else:
            g0 = GeometryConfig(r1=r1, r2=r2, r0=0.35, inclusions=("x3",),
                                ring_radius=5.8, R0=7.0, R_out=11.0, R_obs=7.5)
            img = kelvin_image_circle(Circle(g0.x3[0], g0.x3[1], 0.35),
                                      (0.0, 0.0), r2)
            g = replace(g0, extra_circles=(img,))
        base = dict(geo=g, contrast=10.0, sigma_contrast=10.0,
                    source=RingSource(5.8, ((1, 1.0), (2, 0.8), (3, 0.5))),
                    k=k, h=0.09, grading=3.0)
    elif kind is ScenarioKind.SLAB_DC:
        g = GeometryConfig(r1=0.5, r2=3.2, ring_radius=23.5, R0=26.0,
                           R_out=30.0, R_obs=21.8,
                           slab=SlabSpec(0.15, 1.0, 1.5),
                           disks=(DiskSpec(0.0, 1.25, 0.05,
                                           RegionTag.INCLUSION_A),))
        base = dict(geo=g, contrast=5.0, sigma_contrast=5.0,
                    source=RingSource(23.5, ((1, 1.0), (2, 0.7))),
                    k=1.0 / g.r2, h=0.5, grading=5.5,
                    deltas=_geometric_deltas(-1.0, -3.0))
    else:
        raise ExperimentError(f"unknown scenario {kind!r}")
    base.update(overrides)
    return ScenarioConfig(kind=kind, **base)


def build_scenario_mesh(sc: ScenarioConfig) -> TriMesh:
    mesh = build_mesh(sc.geo, sc.h, sc.grading)
    if sc.refine_levels:
        mesh = geo.refine_near(mesh, ["r1", "r2"], sc.refine_levels)
    return mesh


def scenario_medium(sc: ScenarioConfig, delta=None) -> MediumSpec:
    return build_medium(sc.kind, sc.geo, a_c=sc.contrast,
                        sigma_c=sc.sigma_contrast,
                        delta=sc.deltas[0] if delta is None else delta,
                        k=sc.k)


def reference_medium(sc: ScenarioConfig, which="primary") -> MediumSpec:
    """Positive-coefficient reference layouts.

    primary: the limit an observer should see (homogeneous for the cloaks,
    the magnified object for the full lens, the visible object for the
    unmodified CM scheme).  alt: the competing hypothesis used for the
    separation check.
    """
    homogeneous = MediumSpec(A=TensorField(()), Sigma=ScalarField(()),
                             negative_tags=frozenset(), delta=0.0, k=sc.k)
    obj_tags = TagIn(RegionTag.INCLUSION_A, RegionTag.INCLUSION_B)
    with_object = MediumSpec(
        A=TensorField((FieldRule(obj_tags, ConstTensor(sc.contrast)),)),
        Sigma=ScalarField((FieldRule(obj_tags,
                                     ConstScalar(sc.sigma_contrast)),)),
        negative_tags=frozenset(), delta=0.0, k=sc.k)
    kind = sc.kind
    if kind is ScenarioKind.SUPERLENS_FULL:
        M = sc.lens_magnification
        obj = sc.geo.disks[0]
        mag_pred = InDisk(M * obj.cx, M * obj.cy, M * obj.radius)
        magnified = MediumSpec(
            A=TensorField((FieldRule(mag_pred, ConstTensor(sc.contrast)),)),
            Sigma=ScalarField((FieldRule(mag_pred,
                                         ConstScalar(sc.sigma_contrast)),)),
            negative_tags=frozenset(), delta=0.0, k=sc.k)
        return magnified if which == "primary" else homogeneous
    if kind is ScenarioKind.CM_CLOAK_UNMODIFIED:
        return with_object if which == "primary" else homogeneous
    # cloaking scenarios: primary homogeneous, alt keeps the object visible
    return homogeneous if which == "primary" else with_object


def reference_solution(sc: ScenarioConfig, mesh: TriMesh, dtn: DtNOperator,
                       which="primary") -> DiscreteField:
    """Solve the positive reference problem with the same mesh, source,
    DtN operator and gauge as the lossy runs."""
    med = reference_medium(sc, which)
    op = SweepOperator(mesh, med, sc.source, dtn)
    return op.solve(0.0)


# ---------------------------------------------------------------------------
# sweep records


@dataclass
class SweepRecord:
    delta: float
    err_h1: float
    err_l2: float
    rel_l2: float
    power: float
    refl_r2: float
    refl_r3: float


@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    window: tuple

    def __repr__(self):
        return (f"RateFit(slope={self.slope:.3f}, residual="
                f"{self.residual:.2e}, window={self.window})")


@dataclass
class ConvergenceReport:
    scenario: str
    rows: list
    ref_norm_l2: float
    ref_norm_h1: float
    floor_h1: float
    floor_l2: float
    gamma: RateFit | None
    mesh_hash: str
    n_nodes: int
    k: float

    def deltas(self):
        return np.array([r.delta for r in self.rows])

    def errors_h1(self):
        return np.array([r.err_h1 for r in self.rows])

    def rel_l2(self):
        return np.array([r.rel_l2 for r in self.rows])

    def powers(self):
        return np.array([r.power for r in self.rows])


def power(u: DiscreteField, delta: float,
          negative_tags=(RegionTag.ANNULUS_R2_R1,)) -> float:
    """Dissipation metric delta * |grad u|^2 integrated over the
    sign-changing region."""
    return float(delta) * norm(u, regions=negative_tags, kind="H1_semi") ** 2


def fit_rate(deltas, errors, floor=0.0, min_points=3) -> RateFit:
    """Least-squares slope of log10 E against log10 delta over the
    above-floor window (points with E > 3*floor)."""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    sel = np.nonzero(errors > 3.0 * floor)[0]
    if len(sel) < min_points:
        raise FloorError(
            f"only {len(sel)} sweep points above 3x floor ({floor:.3e}); "
            f"refine the mesh or trim the delta schedule")
    x = np.log10(deltas[sel])
    y = np.log10(errors[sel])
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(res[0] / len(sel))) if len(res) else 0.0
    return RateFit(slope=float(coef[0]), intercept=float(coef[1]),
                   residual=resid, window=(int(sel[0]), int(sel[-1])))


# ---------------------------------------------------------------------------
# reflection diagnostics


@dataclass
class ReflectionRecord:
    delta: float
    flux_mismatch_r2: float
    flux_mismatch_r3: float
    trace_mismatch_r2: float
    trace_mismatch_r3: float


def _excluded(points, cfg: GeometryConfig, margin):
    """Mask of diagnostic circle points too close to inclusion/object
    circles (the 'partial data' arcs of the estimates)."""
    bad = np.zeros(len(points), dtype=bool)
    centers = []
    if cfg.r0 > 0:
        for name in cfg.inclusions:
            c = getattr(cfg, name)
            centers.append((c[0], c[1], cfg.r0))
    for d in cfg.disks:
        centers.append((d.cx, d.cy, d.radius))
    for c in cfg.extra_circles:
        centers.append((c.cx, c.cy, c.r))
    for cx, cy, r in centers:
        bad |= np.hypot(points[:, 0] - cx, points[:, 1] - cy) < r + margin
    return bad


def reflection_diagnostics(u: DiscreteField, delta, F=None, G=None,
                           n_samples=256) -> ReflectionRecord:
    """Boundary surrogate mismatches of the reflected fields u1 = u o F^{-1}
    on the r2 circle and u2 = u1 o G^{-1} on the r3 circle.

    The traces agree identically (the reflections fix the circles), so the
    surrogate is carried by the conormal flux jump, sampled one element away
    from each circle on the matching sides.
    """
    cfg = u.mesh.cfg
    if F is None:
        F = KelvinMap((0.0, 0.0), cfg.r2)
    if G is None:
        G = KelvinMap((0.0, 0.0), cfg.r3)
    GF = Composition(G, F)

    out = {}
    for circle, radius, maps in (("r2", cfg.r2, (None, F)),
                                 ("r3", cfg.r3, (F, GF))):
        h_loc = u.mesh.interface_h(circle)
        eps = 0.35 * h_loc / radius
        th = np.linspace(0.0, 2 * math.pi, n_samples, endpoint=False)
        p = radius * np.column_stack([np.cos(th), np.sin(th)])
        keep = ~_excluded(p, cfg, margin=3.0 * h_loc + 2.0 * cfg.r0)
        if keep.sum() < 8:
            raise ExperimentError("reflection arcs fully excluded")
        p = p[keep]
        nu = p / radius
        inner_map, outer_map = maps
        # side conventions: on r2 compare u from the shell side with
        # u o F^{-1} (annulus pre-image); on r3 compare u o F^{-1} and
        # u o (G o F)^{-1} both from inside r3, whose pre-images straddle
        # the core circle, so the flux jump carries the (1+i delta) factor
        # of the transmission relations.
        side = eps if circle == "r2" else -eps
        g_base = evaluate_grad(u, p * (1 + side), precompose=inner_map)
        g_refl = evaluate_grad(u, p * (1 + side), precompose=outer_map)
        v_base = evaluate(u, p, precompose=inner_map)
        v_refl = evaluate(u, p, precompose=outer_map)
        flux_base = (g_base * nu).sum(axis=1)
        flux_refl = (g_refl * nu).sum(axis=1)
        arc = 2 * math.pi * radius * keep.mean()
        w = arc / keep.sum()
        out[circle] = (
            math.sqrt(float((np.abs(flux_refl - flux_base) ** 2).sum() * w)),
            math.sqrt(float((np.abs(v_refl - v_base) ** 2).sum() * w)),
        )
    return ReflectionRecord(delta=delta,
                            flux_mismatch_r2=out["r2"][0],
                            flux_mismatch_r3=out["r3"][0],
                            trace_mismatch_r2=out["r2"][1],
                            trace_mismatch_r3=out["r3"][1])


# ---------------------------------------------------------------------------
# three spheres probe


@dataclass
class ThreeSphereReport:
    center: tuple
    radii: tuple
    norms: tuple
    q_fit: float
    alpha_fit: float
    C_fit: float
    q_grid: np.ndarray
    C_of_q: np.ndarray


def three_spheres_alpha(R1, R2, R3, q):
    return (R2 ** (-q) - R3 ** (-q)) / (R1 ** (-q) - R3 ** (-q))


def _surrogate_circle_norm(value_at, grad_at, z, R, n_samples=192):
    th = np.linspace(0.0, 2 * math.pi, n_samples, endpoint=False)
    p = np.column_stack([z[0] + R * np.cos(th), z[1] + R * np.sin(th)])
    nu = (p - z) / R
    tau = np.column_stack([-nu[:, 1], nu[:, 0]])
    v = value_at(p)
    g = grad_at(p)
    flux = (g * nu).sum(axis=1)
    tang = (g * tau).sum(axis=1)
    w = 2 * math.pi * R / n_samples
    return math.sqrt(float(((np.abs(v) ** 2 + np.abs(tang) ** 2
                             + np.abs(flux) ** 2) * w).sum()))


def three_sphere_check(u, z, R1, R2, R3, q_grid=None,
                       n_samples=192) -> ThreeSphereReport:
    """Evaluate the boundary surrogate norms on the three circles around z
    and report the smallest interpolation constant over the exponent grid.

    u: a DiscreteField, or an object with .value(pts) and .grad(pts).
    The circles must stay inside a single smooth-coefficient region when u
    is a DiscreteField (checked against the mesh tags).
    """
    if not (0 < R1 < R2 < R3):
        raise ExperimentError("radii must satisfy 0 < R1 < R2 < R3")
    z = np.asarray(z, dtype=float)
    if isinstance(u, DiscreteField):
        cfg = u.mesh.cfg
        probes = [z[None, :]]
        for R in (R1, 0.5 * (R1 + R2), R2, 0.5 * (R2 + R3), R3):
            th = np.linspace(0, 2 * math.pi, 64, endpoint=False)
            probes.append(z + R * np.column_stack([np.cos(th), np.sin(th)]))
        tags = region_of_many(np.vstack(probes), cfg)
        if len(set(tags.tolist())) > 1:
            raise ExperimentError("three-spheres circles cross an interface")
        value_at = lambda p: evaluate(u, p)
        grad_at = lambda p: evaluate_grad(u, p)
    else:
        value_at, grad_at = u.value, u.grad

    N = [_surrogate_circle_norm(value_at, grad_at, z, R, n_samples)
         for R in (R1, R2, R3)]
    if q_grid is None:
        q_grid = np.concatenate([np.linspace(0.02, 1.0, 25),
                                 np.linspace(1.1, 6.0, 25)])
    C = np.empty(len(q_grid))
    for i, q in enumerate(q_grid):
        a = three_spheres_alpha(R1, R2, R3, q)
        C[i] = N[1] / (N[0] ** a * N[2] ** (1 - a))
    j = int(np.argmin(C))
    return ThreeSphereReport(center=tuple(z), radii=(R1, R2, R3),
                             norms=tuple(N), q_fit=float(q_grid[j]),
                             alpha_fit=float(three_spheres_alpha(R1, R2, R3,
                                                                 q_grid[j])),
                             C_fit=float(C[j]), q_grid=np.asarray(q_grid),
                             C_of_q=C)


# ---------------------------------------------------------------------------
# sweeps and verdicts


def run_sweep(sc: ScenarioConfig, mesh: TriMesh | None = None,
              with_floor=True, with_reflection=True,
              log=None) -> ConvergenceReport:
    """Solve the scenario along its delta schedule against the primary
    reference; records E(delta), power and reflection mismatches, estimates
    the discretization floor from one uniform refinement at delta_min."""
    if mesh is None:
        mesh = build_scenario_mesh(sc)
    dtn = dtn_operator(sc.k, sc.geo.R_out, sc.dtn_modes)
    med = scenario_medium(sc)
    op = SweepOperator(mesh, med, sc.source, dtn)
    uref = reference_solution(sc, mesh, dtn, "primary")
    window = sc.obs_window
    ref_l2 = norm(uref, radial_window=window, kind="L2")
    ref_h1 = norm(uref, radial_window=window, kind="H1")

    rows = []
    u_min = None
    for d in sc.deltas:
        u = op.solve(d)
        diff = u - uref
        rec = SweepRecord(
            delta=d,
            err_h1=norm(diff, radial_window=window, kind="H1"),
            err_l2=norm(diff, radial_window=window, kind="L2"),
            rel_l2=norm(diff, radial_window=window, kind="L2") / ref_l2,
            power=power(u, d, med.negative_tags),
            refl_r2=float("nan"), refl_r3=float("nan"))
        if with_reflection:
            refl = reflection_diagnostics(u, d)
            rec.refl_r2 = refl.flux_mismatch_r2
            rec.refl_r3 = refl.flux_mismatch_r3
        rows.append(rec)
        u_min = u
        if log:
            log(f"delta={d:9.3e}  E_H1={rec.err_h1:.4e}  "
                f"relL2={rec.rel_l2:.4e}  P={rec.power:.4e}")

    floor_h1 = floor_l2 = 0.0
    if with_floor:
        # discretization floor of E(delta) at delta_min from one uniform
        # refinement; estimated on the difference field u - uref (the two
        # solves share most of their discretization error in the
        # observation annulus, so the raw field error would grossly
        # overstate the floor)
        fine = uniform_refine(mesh)
        dtn_f = dtn_operator(sc.k, sc.geo.R_out, sc.dtn_modes)
        op_f = SweepOperator(fine, scenario_medium(sc), sc.source, dtn_f)
        u_f = op_f.solve(sc.deltas[-1])
        uref_f = reference_solution(sc, fine, dtn_f, "primary")
        dfield = prolong(u_min - uref, fine) - (u_f - uref_f)
        floor_h1 = norm(dfield, radial_window=window, kind="H1")
        floor_l2 = norm(dfield, radial_window=window, kind="L2")
        if log:
            log(f"floor: H1={floor_h1:.4e}  L2={floor_l2:.4e}")

    gamma = None
    try:
        gamma = fit_rate([r.delta for r in rows], [r.err_h1 for r in rows],
                         floor=floor_h1)
    except FloorError:
        pass
    return ConvergenceReport(
        scenario=sc.kind.value, rows=rows, ref_norm_l2=ref_l2,
        ref_norm_h1=ref_h1, floor_h1=floor_h1, floor_l2=floor_l2,
        gamma=gamma, mesh_hash=mesh.hash(), n_nodes=mesh.n_nodes, k=sc.k)


@dataclass
class SuiteResult:
    scenario: str
    verdict: str                 # PASS / FAIL / INDETERMINATE / EXPERIMENTAL
    report: ConvergenceReport
    discrepancy: float           # relative L2 vs primary reference at d_min
    separation: float            # alt-hypothesis distance / discrepancy
    details: dict

    def exit_code(self):
        return {"PASS": 0, "EXPERIMENTAL": 0}.get(self.verdict, 1)


def run_scenario_suite(sc: ScenarioConfig, mesh=None, log=None) -> SuiteResult:
    """Full sweep plus the scenario's acceptance verdict.

    Cloak-type scenarios pass when the relative L2 discrepancy against the
    primary reference is below cloak_tol at delta_min AND the alternative
    hypothesis field sits at least `separation` times farther away.
    SLAB_DC is reported but marked EXPERIMENTAL (excluded from verdicts).
    """
    if mesh is None:
        mesh = build_scenario_mesh(sc)
    report = run_sweep(sc, mesh, log=log)
    dtn = dtn_operator(sc.k, sc.geo.R_out, sc.dtn_modes)
    med = scenario_medium(sc)
    op = SweepOperator(mesh, med, sc.source, dtn)
    u_min = op.solve(sc.deltas[-1])
    uref = reference_solution(sc, mesh, dtn, "primary")
    ualt = reference_solution(sc, mesh, dtn, "alt")
    window = sc.obs_window
    ref_l2 = norm(uref, radial_window=window, kind="L2")
    disc = norm(u_min - uref, radial_window=window, kind="L2") / ref_l2
    alt_dist = norm(u_min - ualt, radial_window=window, kind="L2") / ref_l2
    sep = alt_dist / max(disc, 1e-300)

    gamma = None if report.gamma is None else report.gamma.slope
    details = {"disc_rel_l2": disc, "alt_rel_l2": alt_dist,
               "floor_rel_l2": report.floor_l2 / ref_l2, "gamma": gamma}

    # per-scenario acceptance rules:
    #  - rate cloaks (quasistatic/frequency, small objects): discrepancy
    #    below tol AND fitted rate >= 0.3 (separation is reported only;
    #    r0 = 0.02 r1 objects sit below that metric's resolution)
    #  - lens-without-layer and the CM schemes (visible objects): discrepancy
    #    below tol AND the alternative reference >= `separation` farther
    #  - full lens: match the magnified reference below tol
    #  - slab: reported, excluded from verdicts
    kind = sc.kind
    if kind is ScenarioKind.SLAB_DC:
        verdict = "EXPERIMENTAL"
    elif kind in (ScenarioKind.QUASISTATIC_CLOAK, ScenarioKind.FREQ_CLOAK):
        if gamma is None:
            verdict = "INDETERMINATE"
        else:
            verdict = ("PASS" if disc <= sc.cloak_tol and gamma >= 0.3
                       else "FAIL")
    elif kind is ScenarioKind.SUPERLENS_FULL:
        verdict = "PASS" if disc <= sc.cloak_tol else "FAIL"
    else:
        verdict = ("PASS" if disc <= sc.cloak_tol and sep >= sc.separation
                   else "FAIL")
    if log:
        log(f"verdict {verdict}: disc={disc:.4f} sep={sep:.2f} "
            f"gamma={gamma}")
    return SuiteResult(scenario=sc.kind.value, verdict=verdict, report=report,
                       discrepancy=disc, separation=sep, details=details)
