"""Tagged triangulations of the truncated computational disk.

The scenarios all live on a disk B_Rout whose material structure is a stack of
concentric circles (core r1, sign-changing annulus r1..r2, shell r2..r3 with
r3 = r2^2/r1) decorated with small lens-shaped inclusions sitting on the
circles, optional object disks, and an optional vertical slab notch.  Every
material interface is resolved as a polyline of mesh edges: interface curves
are sampled with nodes placed exactly on them (crossing points between curves
become shared anchor nodes), a graded background cloud is cleared away from
the curves, and the Delaunay triangulation of the combined cloud recovers the
interface edges (consecutive curve samples are Gabriel edges once their
clearance band is empty).  A smoothing/repair loop keeps element quality up
without moving curve nodes.

Everything is deterministic: point construction order is fixed and the only
randomness (tiny background jitter that breaks co-circular Delaunay ties)
uses a hard-coded seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.spatial import Delaunay

_JITTER_SEED = 74512


class GeometryError(ValueError):
    """Invalid geometric configuration (violated invariant is named)."""


class MeshError(RuntimeError):
    """Mesh generation failed to satisfy a structural guarantee."""


class RegionTag(IntEnum):
    EXTERIOR = 0
    SHELL_R3_R2 = 1
    ANNULUS_R2_R1 = 2
    CORE_R1 = 3
    INCLUSION_A = 4
    INCLUSION_B = 5
    SLAB = 6
    SOURCE_SUPPORT = 7


# ---------------------------------------------------------------------------
# geometric primitives


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    def signed_dist(self, pts):
        """Distance to the circle line, negative inside the disk."""
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy) - self.r

    def dist(self, pts):
        return np.abs(self.signed_dist(pts))

    def project(self, pts):
        pts = np.atleast_2d(pts).astype(float)
        v = pts - self.center
        n = np.hypot(v[:, 0], v[:, 1])
        n = np.where(n == 0.0, 1.0, n)
        return self.center + self.r * v / n[:, None]

    def point(self, theta):
        return np.array([self.cx + self.r * math.cos(theta),
                         self.cy + self.r * math.sin(theta)])


@dataclass(frozen=True)
class Segment:
    ax: float
    ay: float
    bx: float
    by: float

    @property
    def a(self):
        return np.array([self.ax, self.ay])

    @property
    def b(self):
        return np.array([self.bx, self.by])

    @property
    def length(self):
        return math.hypot(self.bx - self.ax, self.by - self.ay)

    def dist(self, pts):
        pts = np.atleast_2d(pts)
        d = self.b - self.a
        t = np.clip(((pts - self.a) @ d) / (d @ d), 0.0, 1.0)
        proj = self.a + t[:, None] * d
        return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])

    def project(self, pts):
        pts = np.atleast_2d(pts)
        d = self.b - self.a
        t = np.clip(((pts - self.a) @ d) / (d @ d), 0.0, 1.0)
        return self.a + t[:, None] * d


@dataclass(frozen=True)
class DiskSpec:
    """A tagged disk region (object inclusions, bump-source supports)."""

    cx: float
    cy: float
    radius: float
    tag: RegionTag = RegionTag.INCLUSION_A

    @property
    def circle(self):
        return Circle(self.cx, self.cy, self.radius)


@dataclass(frozen=True)
class SlabSpec:
    """Vertical half-strip {|x| < half_width} x [y_bottom, +inf) hosting the
    slab-scenario object.  The region carved out of the sign-changing zone is
    the radial shadow of the strip (the cone through the bottom corners): the
    shipped reflection map needs a star-shaped complement, and the strip
    above y_bottom lies inside its shadow."""

    half_width: float
    y_bottom: float
    y_object_top: float

    def contains(self, pts, r3, eps=0.0):
        """Cone-notch membership (the carved region), clipped to B_r3."""
        pts = np.atleast_2d(pts)
        r = np.hypot(pts[:, 0], pts[:, 1])
        slope = self.half_width / self.y_bottom
        return ((pts[:, 1] >= self.y_bottom - eps)
                & (np.abs(pts[:, 0]) <= slope * pts[:, 1] + eps)
                & (r <= r3 + eps))


def circle_circle_intersections(c1: Circle, c2: Circle):
    """Transversal intersection points of two circles (0 or 2 points)."""
    dx, dy = c2.cx - c1.cx, c2.cy - c1.cy
    d = math.hypot(dx, dy)
    if d < 1e-14 or d >= c1.r + c2.r - 1e-12 or d <= abs(c1.r - c2.r) + 1e-12:
        return []
    a = (c1.r**2 - c2.r**2 + d**2) / (2 * d)
    h2 = c1.r**2 - a**2
    if h2 <= 0:
        return []
    h = math.sqrt(h2)
    mx, my = c1.cx + a * dx / d, c1.cy + a * dy / d
    ux, uy = -dy / d, dx / d
    return [np.array([mx + h * ux, my + h * uy]),
            np.array([mx - h * ux, my - h * uy])]


def circle_segment_intersections(c: Circle, s: Segment):
    d = s.b - s.a
    f = s.a - c.center
    qa = float(d @ d)
    qb = 2.0 * float(f @ d)
    qc = float(f @ f) - c.r**2
    disc = qb * qb - 4 * qa * qc
    if disc <= 1e-24:
        return []
    sq = math.sqrt(disc)
    pts = []
    for t in ((-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)):
        if 1e-10 < t < 1 - 1e-10:
            pts.append(s.a + t * d)
    return pts


def kelvin_image_circle(circle: Circle, center, R: float) -> Circle:
    """Image of a circle (not through `center`) under the inversion
    y = center + R^2 (x - center)/|x - center|^2.

    Inversions map circles to circles; the image is reconstructed from three
    mapped points.
    """
    cx, cy = float(center[0]), float(center[1])
    imgs = []
    for t in (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0):
        p = circle.point(t)
        v = p - np.array([cx, cy])
        n2 = float(v @ v)
        if n2 == 0.0:
            raise GeometryError("circle passes through the inversion center")
        imgs.append(np.array([cx, cy]) + R**2 * v / n2)
    (x1, y1), (x2, y2), (x3, y3) = imgs
    d = 2 * (x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2))
    if abs(d) < 1e-30:
        raise GeometryError("degenerate circle image")
    ux = ((x1**2 + y1**2) * (y2 - y3) + (x2**2 + y2**2) * (y3 - y1)
          + (x3**2 + y3**2) * (y1 - y2)) / d
    uy = ((x1**2 + y1**2) * (x3 - x2) + (x2**2 + y2**2) * (x1 - x3)
          + (x3**2 + y3**2) * (x2 - x1)) / d
    return Circle(ux, uy, math.hypot(x1 - ux, y1 - uy))


# ---------------------------------------------------------------------------
# configuration and region classification


@dataclass(frozen=True)
class GeometryConfig:
    """Radii, inclusion placement and auxiliary circles of one scenario.

    Invariants: 0 <= r0 < r1 < r2 < r3 = r2^2/r1 < R0 < R_out, inclusion
    centers sit exactly on their circles (placed by angle), and r0 is small
    enough that the lens inclusions neither overlap nor swallow a material
    band.
    """

    r1: float
    r2: float
    r0: float = 0.0
    inclusions: tuple = ()        # subset of ("x1", "x2", "x3")
    theta1: float = math.pi / 2
    theta2: float = math.pi / 2
    theta3: float = math.pi / 2
    R0: float = 0.0               # source-support outer radius; 0 -> 1.6*r3
    R_out: float = 0.0            # truncation radius; 0 -> 2.2*r3
    R_obs: float = 0.0            # observation annulus outer radius; 0 -> 1.5*r3
    ring_radius: float = 0.0      # source ring circle to resolve; 0 -> none
    disks: tuple = ()             # DiskSpec object regions
    slab: SlabSpec | None = None
    extra_circles: tuple = ()     # Circle, resolved in the mesh, no own tag

    def __post_init__(self):
        object.__setattr__(self, "R0", self.R0 or 1.6 * self.r3)
        object.__setattr__(self, "R_out", self.R_out or 2.2 * self.r3)
        object.__setattr__(self, "R_obs", self.R_obs or 1.5 * self.r3)
        self.validate()

    @property
    def r3(self):
        return self.r2**2 / self.r1

    @property
    def eps_geo(self):
        return 1e-12 * self.r2

    @property
    def x1(self):
        return self.r1 * np.array([math.cos(self.theta1), math.sin(self.theta1)])

    @property
    def x2(self):
        return self.r2 * np.array([math.cos(self.theta2), math.sin(self.theta2)])

    @property
    def x3(self):
        return self.r3 * np.array([math.cos(self.theta3), math.sin(self.theta3)])

    def validate(self):
        def req(cond, rule):
            if not cond:
                raise GeometryError(f"geometry invariant violated: {rule}")

        req(0 < self.r1, "0 < r1")
        req(self.r1 < self.r2, "r1 < r2")
        req(self.r0 >= 0, "r0 >= 0")
        req(self.r0 < self.r1, "0 < r0 < r1")
        req(self.r3 < self.R0, "r3 < R0")
        req(self.R0 < self.R_out, "R0 < R_out")
        req(self.r3 <= self.R_obs <= self.R_out, "r3 <= R_obs <= R_out")
        if self.inclusions:
            req(self.r0 > 0, "r0 > 0 when inclusions are present")
            req(self.r0 < min(self.r2 - self.r1, self.r1) / 2,
                "r0 < min(r2 - r1, r1)/2")
            req(self.r0 < (self.r3 - self.r2) / 2, "r0 < (r3 - r2)/2")
            for name in self.inclusions:
                req(name in ("x1", "x2", "x3"), f"unknown inclusion {name!r}")
            centers = [getattr(self, n) for n in self.inclusions]
            for i in range(len(centers)):
                for j in range(i + 1, len(centers)):
                    req(np.hypot(*(centers[i] - centers[j])) > 2 * self.r0,
                        "inclusions must not overlap")
        if self.ring_radius:
            req(self.r3 < self.ring_radius < self.R_out,
                "r3 < ring_radius < R_out")
        if self.slab is not None:
            req(self.slab.half_width > 0, "slab half_width > 0")
            req(self.slab.half_width < self.r1, "slab half_width < r1")
            req(self.slab.y_bottom >= 2 * self.r1 - 1e-12,
                "slab bottom at height >= 2*r1")
        for d in self.disks:
            req(d.radius > 0, "object disk radius > 0")

    def inclusion_circle(self, name: str) -> Circle:
        c = getattr(self, name)
        return Circle(c[0], c[1], self.r0)


def _in_lens(pts, cfg, name, eps):
    """Lens-inclusion membership with the inner-wins interface tie-break."""
    c = getattr(cfg, name)
    r = np.hypot(pts[:, 0], pts[:, 1])
    near = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) <= cfg.r0 + eps
    if name == "x1":
        return near & (r <= cfg.r1 + eps)
    if name == "x2":
        return near & (r > cfg.r2 + eps) & (r <= cfg.r3 + eps)
    return near & (r <= cfg.r3 + eps)  # x3


def region_of_many(pts, cfg: GeometryConfig):
    """Vectorized region tags; ties within eps_geo go to the inner region."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    eps = cfg.eps_geo
    r = np.hypot(pts[:, 0], pts[:, 1])
    tags = np.full(len(pts), int(RegionTag.EXTERIOR), dtype=np.int16)
    tags[r <= cfg.r3 + eps] = RegionTag.SHELL_R3_R2
    tags[r <= cfg.r2 + eps] = RegionTag.ANNULUS_R2_R1
    tags[r <= cfg.r1 + eps] = RegionTag.CORE_R1
    if cfg.slab is not None:
        tags[cfg.slab.contains(pts, cfg.r3, eps)] = RegionTag.SLAB
    if cfg.r0 > 0:
        for name in cfg.inclusions:
            tag = RegionTag.INCLUSION_A if name == "x1" else RegionTag.INCLUSION_B
            tags[_in_lens(pts, cfg, name, eps)] = tag
    for d in cfg.disks:
        inside = np.hypot(pts[:, 0] - d.cx, pts[:, 1] - d.cy) <= d.radius + eps
        tags[inside] = d.tag
    return tags


def region_of(p, cfg: GeometryConfig) -> RegionTag:
    return RegionTag(int(region_of_many(np.asarray(p, dtype=float)[None, :], cfg)[0]))


# ---------------------------------------------------------------------------
# interface curve collection and sampling


@dataclass
class _CurveSpec:
    cid: str
    geom: object            # Circle or Segment
    h: float


def _interface_curves(cfg: GeometryConfig, h: float, grading: float):
    """All curves the mesh must resolve, with their local target sizes."""
    hf = h / grading
    curves = [
        _CurveSpec("r1", Circle(0, 0, cfg.r1), hf),
        _CurveSpec("r2", Circle(0, 0, cfg.r2), hf),
        _CurveSpec("r3", Circle(0, 0, cfg.r3), min(h, 2 * hf)),
        _CurveSpec("outer", Circle(0, 0, cfg.R_out), 3.0 * h),
    ]
    if cfg.R_obs - cfg.r3 > 10 * cfg.eps_geo and cfg.R_obs < cfg.R_out:
        curves.append(_CurveSpec("robs", Circle(0, 0, cfg.R_obs), 2.0 * h))
    if cfg.ring_radius:
        curves.append(_CurveSpec("ring", Circle(0, 0, cfg.ring_radius), 1.5 * h))
    if cfg.r0 > 0:
        for name in cfg.inclusions:
            c = cfg.inclusion_circle(name)
            curves.append(_CurveSpec("inc_" + name, c,
                                     min(hf, 2 * math.pi * c.r / 16)))
    for i, d in enumerate(cfg.disks):
        curves.append(_CurveSpec(f"disk{i}", d.circle,
                                 min(h, 2 * math.pi * d.radius / 20)))
    for i, c in enumerate(cfg.extra_circles):
        curves.append(_CurveSpec(f"xcirc{i}", c,
                                 min(h, 2 * math.pi * c.r / 20)))
    if cfg.slab is not None:
        s = cfg.slab
        # the carved notch is the radial shadow of the strip: bottom segment
        # plus the two cone rays from the bottom corners out to the r2 circle
        slope = s.half_width / s.y_bottom
        scale2 = cfg.r2 / math.hypot(s.half_width, s.y_bottom)
        for side, sgn in (("l", -1.0), ("r", 1.0)):
            curves.append(_CurveSpec(
                f"slab_{side}",
                Segment(sgn * s.half_width, s.y_bottom,
                        sgn * s.half_width * scale2, s.y_bottom * scale2), hf))
        curves.append(_CurveSpec("slab_b",
                                 Segment(-s.half_width, s.y_bottom,
                                         s.half_width, s.y_bottom), hf))
    _check_band_separation(curves)
    return curves


def _check_band_separation(curves):
    """Concentric resolved circles must not sit inside each other's
    protection bands, otherwise edge recovery cannot be guaranteed."""
    conc = [(c.cid, c.geom.r, c.h) for c in curves
            if isinstance(c.geom, Circle) and c.geom.cx == 0 and c.geom.cy == 0]
    conc.sort(key=lambda t: t[1])
    for (cid_a, ra, ha), (cid_b, rb, hb) in zip(conc, conc[1:]):
        if rb - ra < 0.8 * (ha + hb):
            raise MeshError(
                f"interface circles {cid_a!r} (r={ra:g}) and {cid_b!r} "
                f"(r={rb:g}) are closer than their mesh bands; reduce h_target")


def _curve_crossings(curves):
    """Pairwise intersection points, each as (point, set of curve ids)."""
    found = []

    def register(p, ids):
        for q, qids in found:
            if np.hypot(*(p - q)) < 1e-11:
                qids.update(ids)
                return
        found.append((np.asarray(p, dtype=float), set(ids)))

    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            gi, gj = curves[i].geom, curves[j].geom
            if isinstance(gi, Circle) and isinstance(gj, Circle):
                pts = circle_circle_intersections(gi, gj)
            elif isinstance(gi, Circle) and isinstance(gj, Segment):
                pts = circle_segment_intersections(gi, gj)
            elif isinstance(gi, Segment) and isinstance(gj, Circle):
                pts = circle_segment_intersections(gj, gi)
            else:
                pts = []
            for p in pts:
                register(p, {curves[i].cid, curves[j].cid})
    for c in curves:
        if isinstance(c.geom, Segment):
            register(c.geom.a, {c.cid})
            register(c.geom.b, {c.cid})
    # an anchor sitting exactly on another curve (segment endpoints on a
    # circle, tangency points) belongs to that curve too
    for p, ids in found:
        for c in curves:
            if c.cid not in ids:
                if float(c.geom.dist(p[None, :])[0]) < 1e-9 * (1 + np.hypot(*p)):
                    ids.add(c.cid)
    return found


def _graded_positions(L, ha, hb, hmax, growth=0.5):
    """Interior positions on [0, L] with spacing growing from the endpoint
    sizes ha/hb up to hmax (equidistribution of the 1/h integral)."""
    hmin = min(ha, hb, hmax)
    if L <= 1.45 * hmin:
        return []
    m = int(min(20000, max(64, 10.0 * L / hmin)))
    s = np.linspace(0.0, L, m + 1)
    h = np.minimum(hmax, np.minimum(ha + growth * s, hb + growth * (L - s)))
    return _equidistribute(s, h)


def _equidistribute(s, h):
    """Interior positions equidistributing the integral of 1/h over the
    fine grid s (s[0], s[-1] are the interval ends, excluded)."""
    w = 1.0 / h
    ds = np.diff(s)
    W = np.concatenate([[0.0], np.cumsum((w[1:] + w[:-1]) * 0.5 * ds)])
    n = max(1, int(round(W[-1])))
    targets = W[-1] * np.arange(1, n) / n
    return np.interp(targets, W, s).tolist()


def _size_on_points(P, own, curves, growth=0.42):
    """Local size field at points P for curve `own`: the curve's h capped by
    the graded distance to every other curve (keeps two nearby interfaces
    sampled compatibly whether or not they cross)."""
    val = np.full(len(P), own.h)
    for c in curves:
        if c.cid == own.cid:
            continue
        val = np.minimum(val, c.h + growth * c.geom.dist(P))
    return val


def _sample_circle(circ, own, curves, anchors):
    """Sample a circle arc-by-arc between anchor points against the
    curve-aware size field."""
    angs = sorted(math.atan2(p[1] - circ.cy, p[0] - circ.cx) for p in anchors)
    if not angs:
        angs = [0.0]
        closed_single = True
    else:
        closed_single = False
    pts = []
    for i in range(len(angs)):
        a0 = angs[i]
        a1 = angs[(i + 1) % len(angs)] if i + 1 < len(angs) else angs[0] + 2 * math.pi
        if closed_single:
            a1 = a0 + 2 * math.pi
        L = (a1 - a0) * circ.r
        m = int(min(30000, max(64, 12.0 * L / own.h)))
        s = np.linspace(0.0, L, m + 1)
        th = a0 + s / circ.r
        P = np.column_stack([circ.cx + circ.r * np.cos(th),
                             circ.cy + circ.r * np.sin(th)])
        H = _size_on_points(P, own, curves)
        for sk in _equidistribute(s, H):
            pts.append(circ.point(a0 + sk / circ.r))
        if closed_single and not pts:
            n = max(8, int(math.ceil(L / own.h)))
            pts = [circ.point(a0 + L / circ.r * k / n) for k in range(1, n)]
    if closed_single:
        pts.insert(0, circ.point(angs[0]))
    return pts


def _sample_segment(seg, own, curves, anchors):
    """Sample a segment between anchors (endpoints are always anchors)."""
    d = seg.b - seg.a
    ts = sorted(float((p - seg.a) @ d) / float(d @ d) for p in anchors)
    pts = []
    for t0, t1 in zip(ts, ts[1:]):
        L = (t1 - t0) * seg.length
        if L <= 0:
            continue
        m = int(min(30000, max(64, 12.0 * L / own.h)))
        s = np.linspace(0.0, L, m + 1)
        P = seg.a + np.outer(t0 + (t1 - t0) * s / L, d)
        H = _size_on_points(P, own, curves)
        for sk in _equidistribute(s, H):
            pts.append(seg.a + d * (t0 + (t1 - t0) * sk / L))
    return pts


def _background_points(cfg, curves, h, rng, anchors=()):
    """Fine fill around curve crossings, patches around small circles, then
    staggered polar rings graded by a radial size profile.  Returns
    (points, thinning radii); fine candidates come first so they win the
    greedy thinning locally."""
    conc = sorted((c.geom.r, c.h) for c in curves
                  if isinstance(c.geom, Circle)
                  and c.geom.cx == 0 and c.geom.cy == 0)
    growth = 0.45

    def h_of(r):
        val = 3.0 * h if r > cfg.r3 * 1.05 else h
        for rc, hc in conc:
            val = min(val, hc + growth * abs(r - rc))
        return val

    pts, rad = [], []
    # wedge fill around curve crossings: small polar fans whose survivors
    # (after thinning against both curves' protection radii) populate the
    # sectors between the crossing curves
    for p, hx in anchors:
        for fac in (1.1, 2.0, 3.2):
            rr = fac * hx
            n = max(6, int(round(2 * math.pi * fac)))
            th = np.arange(n) * (2 * math.pi / n) + 3.0 * fac
            pts.append(np.column_stack([p[0] + rr * np.cos(th),
                                        p[1] + rr * np.sin(th)]))
            rad.extend([0.55 * hx * (1 + 0.45 * (fac - 1))] * n)

    for c in curves:
        g = c.geom
        if not (isinstance(g, Circle) and (g.cx != 0 or g.cy != 0)):
            continue
        ambient = h_of(math.hypot(g.cx, g.cy))
        if g.r >= 14 * c.h or c.h >= ambient:
            continue
        # rings inside the small circle, then outward with growing spacing
        # until the ambient background size is reached
        pts.append(np.array([[g.cx, g.cy]]))
        rad.append(0.5 * min(c.h, g.r))
        inner = [(0.5 * g.r, c.h)] if g.r > 2.5 * c.h else []
        rings = inner
        d = 0.55 * c.h
        while True:
            sp = min(ambient, c.h + growth * d)
            rings.append((g.r + d, sp))
            if sp >= 0.97 * ambient:
                break
            d += sp
        for rr, sp in rings:
            n = max(5, int(round(2 * math.pi * rr / sp)))
            th = np.arange(n) * (2 * math.pi / n) + 7.0 * rr
            pts.append(np.column_stack([g.cx + rr * np.cos(th),
                                        g.cy + rr * np.sin(th)]))
            rad.extend([0.55 * sp] * n)

    # boundary-layer rows along segment curves (slab walls/bottom)
    for c in curves:
        g = c.geom
        if not isinstance(g, Segment):
            continue
        L = g.length
        t = (g.b - g.a) / L
        nrm = np.array([-t[1], t[0]])
        probe = [g.a + t * (L * f) for f in np.linspace(0, 1, 9)]
        amb = max(h_of(math.hypot(*p)) for p in probe)
        if c.h >= 0.97 * amb:
            continue
        d = 0.9 * c.h
        while True:
            sp = min(amb, c.h + growth * d)
            m = max(2, int(math.ceil((L + 2 * d) / sp)))
            ss = np.linspace(-d, L + d, m + 1)
            for side in (1.0, -1.0):
                row = g.a + np.outer(ss, t) + side * d * nrm
                pts.append(row)
                rad.extend([0.55 * sp] * len(row))
            if sp >= 0.97 * amb:
                break
            d += sp

    # radial ladder: graded boundary layers off every concentric interface
    # circle, equidistributed between consecutive circles
    pts.append(np.zeros((1, 2)))
    rad.append(0.6 * h_of(0.0))
    ladder = []
    prev_r, prev_h = 0.0, None
    for rc, hc in conc:
        L = rc - prev_r
        hmax = h if rc <= cfg.r3 * 1.01 else 3.0 * h
        ha = hmax if prev_h is None else 0.92 * prev_h
        hb = 0.92 * hc
        pos = _graded_positions(L, ha, hb, hmax)
        for s0, s1, s2 in zip([0.0] + pos[:-1], pos, pos[1:] + [L]):
            ladder.append((prev_r + s1, 0.5 * (s2 - s0)))
        prev_r, prev_h = rc, hc
    for j, (r, sp) in enumerate(ladder):
        n = max(6, int(round(2 * math.pi * r / sp)))
        phase = (j % 2) * math.pi / n
        th = phase + np.arange(n) * (2 * math.pi / n)
        ring = np.column_stack([r * np.cos(th), r * np.sin(th)])
        ring += (rng.random(ring.shape) - 0.5) * (0.16 * sp)
        pts.append(ring)
        rad.extend([0.6 * sp] * n)
    return np.vstack(pts), np.asarray(rad)


class _HashGrid:
    """Spatial hash supporting greedy thinning with per-point radii."""

    def __init__(self, cell):
        self.cell = cell
        self.buckets = {}

    def _key(self, x, y):
        return (int(math.floor(x / self.cell)), int(math.floor(y / self.cell)))

    def insert(self, p):
        self.buckets.setdefault(self._key(p[0], p[1]), []).append((p[0], p[1]))

    def try_insert(self, p, radius):
        kx, ky = self._key(p[0], p[1])
        reach = max(1, int(math.ceil(radius / self.cell)))
        r2 = radius * radius
        for ix in range(kx - reach, kx + reach + 1):
            for iy in range(ky - reach, ky + reach + 1):
                for qx, qy in self.buckets.get((ix, iy), ()):
                    if (p[0] - qx)**2 + (p[1] - qy)**2 < r2:
                        return False
        self.buckets.setdefault((kx, ky), []).append((p[0], p[1]))
        return True


# ---------------------------------------------------------------------------
# the mesh object


def _orient_ccw(nodes, elements):
    p = nodes[elements]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = cross < 0
    elements = elements.copy()
    elements[flip, 1], elements[flip, 2] = elements[flip, 2], elements[flip, 1]
    return elements


def _canonical_elements(elements):
    """Roll each triangle so the smallest index leads; lexsort rows."""
    elements = np.asarray(elements, dtype=np.int32)
    k = np.argmin(elements, axis=1)
    rolled = np.empty_like(elements)
    for shift in range(3):
        m = k == shift
        rolled[m] = np.roll(elements[m], -shift, axis=1)
    order = np.lexsort((rolled[:, 2], rolled[:, 1], rolled[:, 0]))
    return rolled[order]


def _tri_angles(nodes, elements):
    p = nodes[elements]
    out = np.empty((len(elements), 3))
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        na = np.hypot(a[:, 0], a[:, 1])
        nb = np.hypot(b[:, 0], b[:, 1])
        cosv = np.clip((a * b).sum(1) / np.maximum(na * nb, 1e-300), -1, 1)
        out[:, i] = np.degrees(np.arccos(cosv))
    return out


class TriMesh:
    """Conforming triangulation with region tags and interface bookkeeping.

    Treat instances as immutable: refinement returns new meshes.  curve_edges
    maps each interface curve id to the set of mesh edges (frozen index
    pairs) lying on it; node_curves maps node index -> frozenset of curve ids.
    """

    def __init__(self, nodes, elements, cfg, curves, curve_edges, node_curves,
                 tags=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        elements = _canonical_elements(_orient_ccw(self.nodes, elements))
        self.elements = elements
        self.cfg = cfg
        self.curves = dict(curves)
        self.curve_edges = {k: set(v) for k, v in curve_edges.items()}
        self.node_curves = dict(node_curves)
        bary = self.nodes[self.elements].mean(axis=1)
        self.tags = (region_of_many(bary, cfg) if tags is None
                     else np.asarray(tags, dtype=np.int16))
        self.nodes.flags.writeable = False
        self.elements.flags.writeable = False
        self.tags.flags.writeable = False
        self._locator = None

    # -- basic quantities ---------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def areas(self):
        p = self.nodes[self.elements]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))

    def barycenters(self):
        return self.nodes[self.elements].mean(axis=1)

    def h_elem(self):
        p = self.nodes[self.elements]
        e0 = np.hypot(*(p[:, 1] - p[:, 0]).T)
        e1 = np.hypot(*(p[:, 2] - p[:, 1]).T)
        e2 = np.hypot(*(p[:, 0] - p[:, 2]).T)
        return np.maximum(np.maximum(e0, e1), e2)

    def min_angle(self):
        return float(_tri_angles(self.nodes, self.elements).min())

    def hat_gradients(self):
        """Per-element P1 shape gradients, shape (M, 3, 2)."""
        p = self.nodes[self.elements]
        area2 = 2.0 * self.areas()
        g = np.empty((len(self.elements), 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
        return g

    def curve_nodes(self, cid):
        """Node indices on the given curve."""
        return np.array(sorted(i for i, cs in self.node_curves.items()
                               if cid in cs), dtype=np.int64)

    def circle_loop(self, cid):
        """Nodes on an origin-centered circle curve, ordered by angle."""
        idx = self.curve_nodes(cid)
        th = np.arctan2(self.nodes[idx, 1], self.nodes[idx, 0])
        order = np.argsort(th)
        return idx[order], th[order]

    def interface_h(self, cid):
        """Longest mesh edge lying on the given interface curve."""
        edges = self.curve_edges.get(cid, ())
        if not edges:
            return 0.0
        e = np.array([tuple(fs) for fs in edges])
        d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def region_area(self, tag):
        return float(self.areas()[self.tags == int(tag)].sum())

    def hash(self) -> str:
        import hashlib
        hsh = hashlib.sha256()
        hsh.update(np.ascontiguousarray(self.nodes).tobytes())
        hsh.update(np.ascontiguousarray(self.elements).tobytes())
        hsh.update(np.ascontiguousarray(self.tags).tobytes())
        return hsh.hexdigest()[:16]

    # -- point location -----------------------------------------------------

    def _build_locator(self):
        bary = self.barycenters()
        h = self.h_elem()
        cell = max(float(np.median(h)) * 2.0, 1e-12)
        grid = {}
        p = self.nodes[self.elements]
        lo = p.min(axis=1)
        hi = p.max(axis=1)
        for e in range(len(self.elements)):
            i0, j0 = int(lo[e, 0] // cell), int(lo[e, 1] // cell)
            i1, j1 = int(hi[e, 0] // cell), int(hi[e, 1] // cell)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    grid.setdefault((i, j), []).append(e)
        self._locator = (cell, grid, bary)

    def locate(self, pts, tol=1e-10):
        """Element index containing each point (-1 outside); ties arbitrary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self._locator is None:
            self._build_locator()
        cell, grid, _ = self._locator
        p = self.nodes[self.elements]
        out = np.full(len(pts), -1, dtype=np.int64)
        scale_tol = tol * max(1.0, float(self.cfg.R_out))
        for ip, q in enumerate(pts):
            best, best_short = -1, -np.inf
            for cand in grid.get((int(q[0] // cell), int(q[1] // cell)), ()):
                l1, l2, l3 = _bary_coords(p[cand], q)
                short = min(l1, l2, l3)
                if short > best_short:
                    best, best_short = cand, short
                if short >= 0.0:
                    break
            if best >= 0 and best_short >= -scale_tol:
                out[ip] = best
        return out

    def locate_nearest(self, pts):
        """Like locate() but falls back to the best candidate in the 3x3
        cell neighborhood (for points a hair outside the polygon)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self._locator is None:
            self._build_locator()
        cell, grid, _ = self._locator
        p = self.nodes[self.elements]
        out = np.full(len(pts), -1, dtype=np.int64)
        for ip, q in enumerate(pts):
            ci, cj = int(q[0] // cell), int(q[1] // cell)
            best, best_short = -1, -np.inf
            for di in (0, -1, 1):
                for dj in (0, -1, 1):
                    for cand in grid.get((ci + di, cj + dj), ()):
                        short = min(_bary_coords(p[cand], q))
                        if short > best_short:
                            best, best_short = cand, short
            out[ip] = best
        return out


def _bary_coords(tri, q):
    d = ((tri[1, 1] - tri[2, 1]) * (tri[0, 0] - tri[2, 0])
         + (tri[2, 0] - tri[1, 0]) * (tri[0, 1] - tri[2, 1]))
    l1 = ((tri[1, 1] - tri[2, 1]) * (q[0] - tri[2, 0])
          + (tri[2, 0] - tri[1, 0]) * (q[1] - tri[2, 1])) / d
    l2 = ((tri[2, 1] - tri[0, 1]) * (q[0] - tri[2, 0])
          + (tri[0, 0] - tri[2, 0]) * (q[1] - tri[2, 1])) / d
    return l1, l2, 1.0 - l1 - l2


# ---------------------------------------------------------------------------
# triangulation driver


def _edge_set(simplices):
    e = np.vstack([simplices[:, [0, 1]], simplices[:, [1, 2]],
                   simplices[:, [2, 0]]])
    e.sort(axis=1)
    return set(map(tuple, e.tolist()))


def _required_edges(curves, crossings_idx, curve_sample_idx, points):
    """Consecutive-sample index pairs along each curve."""
    req = {}
    for c in curves:
        idx = list(curve_sample_idx[c.cid]) + crossings_idx.get(c.cid, [])
        if not idx:
            req[c.cid] = []
            continue
        idx = np.array(sorted(set(idx)), dtype=np.int64)
        if isinstance(c.geom, Circle):
            th = np.arctan2(points[idx, 1] - c.geom.cy,
                            points[idx, 0] - c.geom.cx)
            order = np.argsort(th)
            loop = idx[order]
            pairs = [(int(loop[i]), int(loop[(i + 1) % len(loop)]))
                     for i in range(len(loop))]
        else:
            d = c.geom.b - c.geom.a
            t = (points[idx] - c.geom.a) @ d
            order = np.argsort(t)
            chain = idx[order]
            pairs = [(int(chain[i]), int(chain[i + 1]))
                     for i in range(len(chain) - 1)]
        req[c.cid] = pairs
    return req


def build_mesh(cfg: GeometryConfig, h_target: float, grading: float = 1.0,
               smooth_iters: int = 6) -> TriMesh:
    """Conforming triangulation of B_Rout with all interfaces resolved.

    Parameters
    ----------
    cfg : GeometryConfig
    h_target : float
        Target element size in the material zone; the far field coarsens up
        to ~3x, the resonant interfaces r1/r2 refine by `grading`.
    grading : float
        Refinement factor (>= 1) toward the sign-changing interfaces.
    """
    if h_target <= 0:
        raise GeometryError("h_target must be positive")
    if grading < 1:
        raise GeometryError("grading must be >= 1")
    cfg.validate()
    if cfg.inclusions and cfg.r0 >= min(cfg.r2 - cfg.r1, cfg.r1) / 2:
        raise GeometryError("r0 too large to resolve inclusion geometry")

    curves = _interface_curves(cfg, h_target, grading)
    crossings = _curve_crossings(curves)

    points = []
    point_curves = {}
    crossings_idx = {}
    for p, ids in crossings:
        i = len(points)
        points.append(p)
        point_curves[i] = set(ids)
        for cid in ids:
            crossings_idx.setdefault(cid, []).append(i)

    h_by_cid = {c.cid: c.h for c in curves}
    curve_sample_idx = {}
    for c in curves:
        anchor_pts = [points[i] for i in crossings_idx.get(c.cid, [])]
        if isinstance(c.geom, Circle):
            samples = _sample_circle(c.geom, c, curves, anchor_pts)
        else:
            samples = _sample_segment(c.geom, c, curves, anchor_pts)
        idx = []
        for p in samples:
            i = len(points)
            points.append(np.asarray(p, dtype=float))
            point_curves[i] = {c.cid}
            idx.append(i)
        curve_sample_idx[c.cid] = idx

    n_protected = len(points)
    prot = np.array(points) if points else np.zeros((0, 2))

    req = _required_edges(curves, crossings_idx, curve_sample_idx, prot)

    # protection radius of each curve node: ~3/4 of its largest adjacent
    # interface edge, so the diametral neighborhood of every required edge
    # stays clear of free points
    prot_rad = np.zeros(n_protected)
    for pairs in req.values():
        for a, b in pairs:
            ln = float(np.hypot(*(prot[a] - prot[b])))
            prot_rad[a] = max(prot_rad[a], 0.75 * ln)
            prot_rad[b] = max(prot_rad[b], 0.75 * ln)

    rng = np.random.default_rng(_JITTER_SEED)
    anchor_fill = [(points[i], min(h_by_cid[cid] for cid in point_curves[i]))
                   for i in range(len(crossings))]
    bg, bg_rad = _background_points(cfg, curves, h_target, rng, anchor_fill)

    from scipy.spatial import cKDTree
    kd = cKDTree(prot)
    dist, idx = kd.query(bg, k=min(6, n_protected))
    near_prot = (dist < prot_rad[idx]).any(axis=1)
    bg, bg_rad = bg[~near_prot], bg_rad[~near_prot]

    grid = _HashGrid(cell=h_target)
    for p in prot:
        grid.insert(p)
    kept = [p for p, rr in zip(bg, bg_rad) if grid.try_insert(p, rr)]
    all_pts = np.vstack([prot, np.array(kept)]) if kept else prot

    mesh = _triangulate(all_pts, n_protected, prot_rad, point_curves, curves,
                        req, cfg, smooth_iters)
    return mesh


def _star_min_angle(p, nbr_pairs):
    """Min angle over the triangle fan (p, a, b) for rows (a, b)."""
    worst = 180.0
    for a, b in nbr_pairs:
        va = a - p
        vb = b - p
        vc = b - a
        la, lb, lc = (math.hypot(*va), math.hypot(*vb), math.hypot(*vc))
        if min(la, lb, lc) <= 0:
            return 0.0
        coss = (
            np.clip((va @ vb) / (la * lb), -1, 1),
            np.clip((vc @ (-va)) / (lc * la), -1, 1),
            np.clip(((-vc) @ (-vb)) / (lc * lb), -1, 1),
        )
        ang = math.degrees(math.acos(max(coss)))
        worst = min(worst, ang)
    return worst


def _polish_nodes(pts, simplices, targets, kd_prot, prot_rad, n_protected):
    """Move each target free node to the best of a candidate pattern,
    judged by the min angle of its triangle star.  Returns #moves."""
    tset = set(targets)
    inc = {t: [] for t in targets}
    for tri in simplices:
        for v in tri:
            if int(v) in tset:
                inc[int(v)].append(tri)
    moved = 0
    for v in sorted(inc):
        tris = inc[v]
        if not tris:
            continue
        pairs = []
        ring = []
        for tri in tris:
            others = [int(u) for u in tri if int(u) != v]
            pairs.append((pts[others[0]], pts[others[1]]))
            ring.extend(others)
        ring_pts = pts[sorted(set(ring))]
        scale = float(np.hypot(*(ring_pts - pts[v]).T).mean())
        best_p = pts[v].copy()
        best_q = _star_min_angle(best_p, pairs)
        centroid = ring_pts.mean(axis=0)
        cands = [centroid, 0.5 * (centroid + pts[v])]
        for k in range(8):
            d = np.array([math.cos(k * math.pi / 4), math.sin(k * math.pi / 4)])
            cands.append(pts[v] + 0.30 * scale * d)
            cands.append(pts[v] + 0.60 * scale * d)
        for cand in cands:
            q = _star_min_angle(cand, pairs)
            if q > best_q + 1e-9:
                dist, idx = kd_prot.query(cand, k=min(4, n_protected))
                if np.any(np.atleast_1d(dist) < 0.9 * prot_rad[np.atleast_1d(idx)]):
                    continue
                best_p, best_q = cand, q
        if not np.array_equal(best_p, pts[v]):
            pts[v] = best_p
            moved += 1
    return moved


def _triangulate(all_pts, n_protected, prot_rad, point_curves, curves,
                 required, cfg, smooth_iters):
    from scipy.spatial import cKDTree

    active = np.ones(len(all_pts), dtype=bool)
    pts = all_pts.copy()
    kd_prot = cKDTree(pts[:n_protected])

    def delaunay():
        idx = np.nonzero(active)[0]
        tri = Delaunay(pts[idx])
        return idx[tri.simplices]

    simplices = delaunay()

    # Laplacian smoothing of free points, reverting protection violations.
    for _ in range(smooth_iters):
        nbr_sum = np.zeros_like(pts)
        nbr_cnt = np.zeros(len(pts))
        e = np.vstack([simplices[:, [0, 1]], simplices[:, [1, 2]],
                       simplices[:, [2, 0]]])
        np.add.at(nbr_sum, e[:, 0], pts[e[:, 1]])
        np.add.at(nbr_sum, e[:, 1], pts[e[:, 0]])
        np.add.at(nbr_cnt, e[:, 0], 1)
        np.add.at(nbr_cnt, e[:, 1], 1)
        free = active.copy()
        free[:n_protected] = False
        move = free & (nbr_cnt > 0)
        new = pts.copy()
        new[move] = nbr_sum[move] / nbr_cnt[move, None]
        dist, idx = kd_prot.query(new[move], k=min(6, n_protected))
        bad_idx = np.nonzero(move)[0][(dist < 0.9 * prot_rad[idx]).any(axis=1)]
        new[bad_idx] = pts[bad_idx]
        pts = new
        simplices = delaunay()

    # Edge recovery: clear the diametral disk of any missing interface edge.
    for attempt in range(4):
        edges = _edge_set(simplices)
        missing = [(a, b) for pairs in required.values() for a, b in pairs
                   if (min(a, b), max(a, b)) not in edges]
        if not missing:
            break
        for a, b in missing:
            mid = 0.5 * (pts[a] + pts[b])
            rad = 0.75 * np.hypot(*(pts[a] - pts[b]))
            d = np.hypot(pts[:, 0] - mid[0], pts[:, 1] - mid[1])
            kill = (d < rad) & active
            kill[:n_protected] = False
            active &= ~kill
        simplices = delaunay()
    else:
        raise MeshError(f"failed to recover {len(missing)} interface edges")

    # Quality polish: pattern-search optimization of the free vertices of
    # sub-threshold triangles (Laplacian smoothing plateaus a few degrees
    # short at size-transition seams).  Keeps the best configuration seen.
    def score():
        a = _tri_angles(pts, simplices)
        amin = a.min(axis=1)
        return (float(amin.min()), int((amin < 20.0).sum()))

    best = (pts.copy(), active.copy(), simplices, score())
    for _ in range(14):
        angles = _tri_angles(pts, simplices)
        amin = angles.min(axis=1)
        bad_elems = np.nonzero(amin < 20.0)[0]
        if len(bad_elems) == 0:
            break
        # polish the bad vertices and their immediate neighborhood
        bad_nodes = set(int(v) for v in np.unique(simplices[bad_elems]))
        near = [tri for tri in simplices if any(int(v) in bad_nodes for v in tri)]
        targets = sorted({int(v) for tri in near for v in tri
                          if v >= n_protected and active[v]})
        if not targets:
            break
        moved = _polish_nodes(pts, simplices, targets, kd_prot, prot_rad,
                              n_protected)
        simplices = delaunay()
        sc = score()
        if sc > best[3]:
            best = (pts.copy(), active.copy(), simplices, sc)
        if moved == 0:
            # stuck: drop the free vertices of the single worst triangle
            worst = simplices[int(np.argmin(_tri_angles(pts, simplices).min(axis=1)))]
            drop = [int(v) for v in worst if v >= n_protected]
            if not drop:
                break
            active[drop] = False
            simplices = delaunay()
            sc = score()
            if sc > best[3]:
                best = (pts.copy(), active.copy(), simplices, sc)
    if score() < best[3]:
        pts, active, simplices = best[0], best[1], best[2]
    angles = _tri_angles(pts, simplices)
    if angles.min() < 20.0 - 1e-9:
        raise MeshError(f"mesh quality below bound: min angle "
                        f"{angles.min():.2f} deg")
    edges = _edge_set(simplices)
    missing = [(a, b) for pairs in required.values() for a, b in pairs
               if (min(a, b), max(a, b)) not in edges]
    if missing:
        raise MeshError("quality polish broke interface edge recovery")

    # compact the node numbering
    idx_map = -np.ones(len(pts), dtype=np.int64)
    used = np.unique(simplices)
    idx_map[used] = np.arange(len(used))
    nodes = pts[used]
    elements = idx_map[simplices]
    node_curves = {int(idx_map[i]): frozenset(cs)
                   for i, cs in point_curves.items() if idx_map[i] >= 0}
    curve_edges = {}
    for c in curves:
        curve_edges[c.cid] = {frozenset((int(idx_map[a]), int(idx_map[b])))
                              for a, b in required[c.cid]}
    geoms = {c.cid: c.geom for c in curves}
    return TriMesh(nodes, elements, cfg, geoms, curve_edges, node_curves)


# ---------------------------------------------------------------------------
# refinement


def _snap_curve_midpoint(mesh, a, b):
    """Midpoint of edge (a, b); projected onto its interface curve if the
    edge lies on one.  Returns (point, owning curve id or None)."""
    key = frozenset((a, b))
    shared = (mesh.node_curves.get(a, frozenset())
              & mesh.node_curves.get(b, frozenset()))
    mid = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
    for cid in shared:
        if key in mesh.curve_edges.get(cid, ()):
            return mesh.curves[cid].project(mid[None, :])[0], cid
    return mid, None


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Red refinement of every element; interface midpoints are snapped
    back onto their circles, so geometric resolution improves too."""
    elements = mesh.elements
    edges = np.vstack([elements[:, [0, 1]], elements[:, [1, 2]],
                       elements[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)

    new_nodes = list(mesh.nodes)
    node_curves = dict(mesh.node_curves)
    mid_idx = np.empty(len(uniq), dtype=np.int64)
    mid_curve = {}
    for i, (a, b) in enumerate(uniq):
        p, cid = _snap_curve_midpoint(mesh, int(a), int(b))
        mid_idx[i] = len(new_nodes)
        new_nodes.append(p)
        if cid is not None:
            node_curves[int(mid_idx[i])] = frozenset((cid,))
            mid_curve[(int(a), int(b))] = (int(mid_idx[i]), cid)

    m01 = mid_idx[inv[:len(elements)]]
    m12 = mid_idx[inv[len(elements):2 * len(elements)]]
    m20 = mid_idx[inv[2 * len(elements):]]
    e = elements
    children = np.vstack([
        np.column_stack([e[:, 0], m01, m20]),
        np.column_stack([e[:, 1], m12, m01]),
        np.column_stack([e[:, 2], m20, m12]),
        np.column_stack([m01, m12, m20]),
    ])

    curve_edges = {}
    for cid, eset in mesh.curve_edges.items():
        out = set()
        for fs in eset:
            a, b = tuple(fs)
            a, b = (a, b) if a < b else (b, a)
            m, _ = mid_curve[(a, b)]
            out.add(frozenset((a, m)))
            out.add(frozenset((m, b)))
        curve_edges[cid] = out

    return TriMesh(np.array(new_nodes), children, mesh.cfg, mesh.curves,
                   curve_edges, node_curves)


def refine_near(mesh: TriMesh, curve_ids, levels: int) -> TriMesh:
    """Rivara longest-edge bisection of all elements touching the named
    interface curves, `levels` times.  Conformity via recursive propagation;
    interface midpoints are snapped onto their curves."""
    if levels < 0:
        raise GeometryError("levels must be >= 0")
    if levels == 0:
        return mesh
    for cid in curve_ids:
        if cid not in mesh.curves:
            raise GeometryError(f"unknown interface curve {cid!r}")
        hmin_after = mesh.interface_h(cid) / 2**levels
        if 0 < hmin_after < 1e-6 * mesh.cfg.r1:
            raise GeometryError("refinement would produce degenerate h")

    out = mesh
    for _ in range(levels):
        out = _bisect_touching(out, curve_ids)
    return out


def _bisect_touching(mesh: TriMesh, curve_ids):
    nodes = list(mesh.nodes)
    node_curves = dict(mesh.node_curves)
    elems = [tuple(int(v) for v in row) for row in mesh.elements]
    alive = [True] * len(elems)
    curve_edges = {cid: set(es) for cid, es in mesh.curve_edges.items()}
    curves = mesh.curves

    edge_map = {}

    def reg(eid):
        a, b, c = elems[eid]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map.setdefault(frozenset((u, v)), set()).add(eid)

    def unreg(eid):
        a, b, c = elems[eid]
        for u, v in ((a, b), (b, c), (c, a)):
            s = edge_map.get(frozenset((u, v)))
            if s:
                s.discard(eid)

    for eid in range(len(elems)):
        reg(eid)

    def longest_edge(eid):
        a, b, c = elems[eid]
        best, best_len = None, -1.0
        for u, v in ((a, b), (b, c), (c, a)):
            d = nodes[u] - nodes[v]
            ln = float(d[0] * d[0] + d[1] * d[1])
            if ln > best_len + 1e-15 * (1 + best_len):
                best, best_len = (u, v), ln
        return frozenset(best)

    def split_edge_node(key):
        a, b = sorted(key)
        shared = (node_curves.get(a, frozenset())
                  & node_curves.get(b, frozenset()))
        mid = 0.5 * (nodes[a] + nodes[b])
        owner = None
        for cid in shared:
            if key in curve_edges.get(cid, ()):
                mid = curves[cid].project(mid[None, :])[0]
                owner = cid
                break
        nodes.append(mid)
        m = len(nodes) - 1
        if owner is not None:
            node_curves[m] = frozenset((owner,))
            curve_edges[owner].discard(key)
            curve_edges[owner].add(frozenset((a, m)))
            curve_edges[owner].add(frozenset((m, b)))
        return m

    def bisect(eid, depth=0):
        """Bisect element eid across its longest edge, recursively making
        the neighbor compatible first (Rivara LEPP)."""
        if depth > 2000:
            raise MeshError("runaway bisection recursion")
        while True:
            key = longest_edge(eid)
            others = [q for q in edge_map.get(key, ()) if q != eid and alive[q]]
            nb = others[0] if others else None
            if nb is not None and longest_edge(nb) != key:
                bisect(nb, depth + 1)
                continue
            m = split_edge_node(key)
            for q in ([eid] + ([nb] if nb is not None else [])):
                a, b, c = elems[q]
                u, v = tuple(key)
                w = ({a, b, c} - {u, v}).pop()
                unreg(q)
                alive[q] = False
                for child in ((w, u, m), (w, m, v)):
                    elems.append(child)
                    alive.append(True)
                    reg(len(elems) - 1)
            return m

    def force_split(key):
        """Bisect until the given edge itself is split (Rivara refinement
        of its adjacent elements walks down to it)."""
        for _ in range(200):
            holders = [q for q in edge_map.get(key, ()) if alive[q]]
            if not holders:
                return
            eid = holders[0]
            le = longest_edge(eid)
            bisect(eid)
            if le == key:
                return
        raise MeshError("edge force-split did not terminate")

    # split every interface edge of the named curves, then bisect any
    # element still touching the curves by a vertex
    for cid in curve_ids:
        for key in list(curve_edges[cid]):
            force_split(key)
    touch = set()
    for cid in curve_ids:
        for i, cs in node_curves.items():
            if cid in cs:
                touch.add(i)
    for eid in range(len(elems)):
        if alive[eid] and any(v in touch for v in elems[eid]):
            bisect(eid)

    final = np.array([elems[i] for i in range(len(elems)) if alive[i]],
                     dtype=np.int32)
    return TriMesh(np.array(nodes), final, mesh.cfg, curves, curve_edges,
                   node_curves)
