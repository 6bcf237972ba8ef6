"""P1 finite elements for the lossy sign-changing problems on the truncated
disk, closed by a modal Dirichlet-to-Neumann operator on the outer circle.

The weak form of  div(s_d A grad u) + k^2 s_0 Sigma u = f  reads

    int s_d A grad u . grad v - k^2 int s_0 Sigma u v - int_G T(u) v = -int f v

with T the exterior DtN map on the truncation circle G.  The matrix is
complex symmetric (never Hermitian: real basis, bilinear pairing).  The
assembly keeps the lossless pieces separate so a delta sweep only rescales
the annulus stiffness block:  M(delta) = K_pos + (-1-i delta) K_neg
- k^2 (M_pos - M_neg) + B_dtn.

Quasistatic runs (k = 0) carry zero-mean ring sources; the exterior solution
then tends to a constant which the DtN cannot see, so the constant is pinned
by one Lagrange multiplier enforcing zero mean of the trace on the outer
circle.  All reported fields use this gauge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .geometry import TriMesh, RegionTag
from .oracle import bessel, bessel_deriv


class DiscretizationError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class RingSource:
    """f = sum_m amp_m e^{i n_m theta} delta(|x| - radius): the conormal flux
    jumps by amp_m per mode across the ring.  Quasistatic problems must not
    contain the n = 0 mode (zero mean is structural)."""

    radius: float
    modes: tuple   # ((n, amplitude), ...)

    def __post_init__(self):
        if not self.modes:
            raise DiscretizationError("ring source needs at least one mode")

    def validate(self, k):
        if k == 0 and any(n == 0 for n, _ in self.modes):
            raise DiscretizationError(
                "quasistatic ring sources must omit the n = 0 mode")

    def l2_norm(self):
        """L2(ring) norm of the surface density (used for relative bounds)."""
        return math.sqrt(2 * math.pi * self.radius
                         * sum(abs(a) ** 2 for _, a in self.modes))


@dataclass(frozen=True)
class BumpPair:
    """f = amp * (bump at c_plus - bump at c_minus), smooth compactly
    supported bumps of the given radius; integral is structurally zero."""

    c_plus: tuple
    c_minus: tuple
    radius: float
    amp: float = 1.0

    def validate(self, k):
        pass

    def density(self, pts):
        out = np.zeros(len(pts))
        for c, sign in ((self.c_plus, 1.0), (self.c_minus, -1.0)):
            t2 = ((pts[:, 0] - c[0]) ** 2 + (pts[:, 1] - c[1]) ** 2) \
                / self.radius ** 2
            m = t2 < 1.0
            out[m] += sign * self.amp * np.exp(1.0 - 1.0 / (1.0 - t2[m]))
        return out

    def l2_norm(self):
        # radial quadrature of the bump profile
        t = np.linspace(0.0, 1.0 - 1e-9, 2000)
        prof = np.exp(1.0 - 1.0 / (1.0 - t**2)) ** 2 * t
        val = 2 * math.pi * self.radius**2 * np.trapezoid(prof, t)
        return abs(self.amp) * math.sqrt(2.0 * val)


# ---------------------------------------------------------------------------
# DtN operator


@dataclass(frozen=True)
class DtNOperator:
    """Modal impedances on the truncation circle.

    k = 0:  lambda_n = n / R_out (n >= 1; the constant mode is gauged).
    k > 0:  lambda_n = -k H1'_n(k R_out) / H1_n(k R_out), whose imaginary
    part carries the outgoing energy flux.
    """

    k: float
    R_out: float
    N: int
    lambdas: np.ndarray

    def lam(self, n):
        return self.lambdas[n]


def dtn_operator(k: float, R_out: float, N: int) -> DtNOperator:
    if N < 8:
        raise DiscretizationError("DtN needs N >= 8 modes")
    if k < 0 or R_out <= 0:
        raise DiscretizationError("k >= 0 and R_out > 0 required")
    lam = np.zeros(N + 1, dtype=complex)
    if k == 0:
        lam[1:] = np.arange(1, N + 1) / R_out
    else:
        x = k * R_out
        for n in range(N + 1):
            h = bessel("H1", n, x)
            if abs(h) < 1e-280:
                raise DiscretizationError(
                    f"Hankel function vanished at n={n}, kR={x}")
            lam[n] = -k * bessel_deriv("H1", n, x) / h
    return DtNOperator(k=k, R_out=R_out, N=N, lambdas=lam)


def _trace_trig_moments(theta, N):
    """Moments c_n[i] = int hat_i(t) cos(n t) dt and the sine analogue for
    the piecewise-linear trace on the circle nodes at angles theta (sorted).
    Returns (C, S) with shape (N+1, len(theta)); row 0 is the 0th moment."""
    nb = len(theta)
    th_ext = np.concatenate([theta, [theta[0] + 2 * math.pi]])
    gaps = np.diff(th_ext)                      # interval i -> i+1
    C = np.zeros((N + 1, nb))
    S = np.zeros((N + 1, nb))
    # 0th moment of a hat: half the two adjacent gaps
    gap_prev = np.roll(gaps, 1)
    C[0] = 0.5 * (gaps + gap_prev)
    for n in range(1, N + 1):
        # int over [t_i, t_{i+1}] of the rising hat ((t - t_i)/gap) e^{int}
        # and the falling hat ((t_{i+1} - t)/gap) e^{int}, exact formulas
        a = theta
        b = th_ext[1:]
        eib = np.exp(1j * n * b)
        eia = np.exp(1j * n * a)
        g = gaps
        rise = (eib / (1j * n) - (eib - eia) / (1j * n) ** 2 / g)
        fall = (-eia / (1j * n) + (eib - eia) / (1j * n) ** 2 / g)
        # node i collects the rising part on [t_i, t_{i+1}] (weight toward
        # t_{i+1} belongs to node i+1) -> careful: rising ramp peaks at b
        # so it belongs to node i+1; falling ramp belongs to node i.
        contrib = np.zeros(nb, dtype=complex)
        contrib += fall
        contrib += np.roll(rise, 1)
        C[n] = contrib.real
        S[n] = contrib.imag
    return C, S


# ---------------------------------------------------------------------------
# assembly


@dataclass
class LinearSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray
    mesh: TriMesh
    gauged: bool
    n_dofs: int

    def structural_symmetry_defect(self):
        d = self.matrix - self.matrix.T
        return abs(d).max() if d.nnz else 0.0


@dataclass(frozen=True)
class DiscreteField:
    """Complex nodal P1 field on a TriMesh."""

    values: np.ndarray
    mesh: TriMesh

    def __post_init__(self):
        if len(self.values) != self.mesh.n_nodes:
            raise DiscretizationError("nodal array does not match the mesh")

    def __sub__(self, other):
        if other.mesh is not self.mesh:
            raise DiscretizationError("fields live on different meshes")
        return DiscreteField(self.values - other.values, self.mesh)

    def __add__(self, other):
        return DiscreteField(self.values + other.values, self.mesh)

    def scaled(self, c):
        return DiscreteField(c * self.values, self.mesh)

    def shifted(self, c):
        return DiscreteField(self.values + c, self.mesh)


class SweepOperator:
    """Pre-assembled pieces of the variational problem so that solving at a
    new loss delta only rescales the sign-changing stiffness block."""

    def __init__(self, mesh: TriMesh, med, src, dtn: DtNOperator,
                 quad_subdiv=2):
        self.mesh = mesh
        self.med = med
        self.src = src
        self.dtn = dtn
        if dtn.R_out != mesh.cfg.R_out:
            raise DiscretizationError("DtN radius must match the mesh")
        src.validate(med.k)
        self._assemble_volume()
        self._assemble_boundary()
        self._assemble_rhs(quad_subdiv)

    # -- volume terms -------------------------------------------------------

    def _assemble_volume(self):
        mesh, med = self.mesh, self.med
        elems = mesh.elements
        tags = mesh.tags
        area = mesh.areas()
        grads = mesh.hat_gradients()          # (M, 3, 2)
        bary = mesh.barycenters()
        A = med.A.eval_tensor(bary, tags)     # (M, 2, 2), loss-free
        if np.abs(A.imag).max() > 0:
            raise DiscretizationError("material tensor must be real")
        neg = np.isin(tags, [int(t) for t in med.negative_tags])

        Ag = np.einsum("mij,mnj->mni", A.real, grads)       # (M, 3, 2)
        K_loc = np.einsum("mni,mki->mnk", Ag, grads) * area[:, None, None]

        rows = np.repeat(elems, 3, axis=1).reshape(-1)
        cols = np.tile(elems, (1, 3)).reshape(-1)

        def to_csr(local, mask):
            vals = np.where(mask[:, None, None], local, 0.0).reshape(-1)
            m = sps.coo_matrix((vals, (rows, cols)),
                               shape=(mesh.n_nodes, mesh.n_nodes))
            return m.tocsr()

        self.K_pos = to_csr(K_loc, ~neg)
        self.K_neg = to_csr(K_loc, neg)

        if med.k > 0:
            # 3-point edge-midpoint rule: exact for P1 x P1 mass
            p = mesh.nodes[elems]
            mids = 0.5 * (p + np.roll(p, -1, axis=1))   # midpoint of edge (q, q+1)
            phi = np.array([[0.5, 0.5, 0.0],
                            [0.0, 0.5, 0.5],
                            [0.5, 0.0, 0.5]])           # hat values at midpoint q
            sig = np.stack([med.Sigma.eval_scalar(mids[:, q, :], tags)
                            for q in range(3)], axis=1)      # (M, 3)
            if np.abs(sig.imag).max() > 0:
                raise DiscretizationError("Sigma must be real")
            M_loc = np.einsum("mq,qn,qk->mnk", sig.real, phi, phi) \
                * (area / 3.0)[:, None, None]
            self.M_pos = to_csr(M_loc, ~neg)
            self.M_neg = to_csr(M_loc, neg)
        else:
            self.M_pos = self.M_neg = None

    # -- DtN boundary block ---------------------------------------------

    def _assemble_boundary(self):
        mesh, dtn = self.mesh, self.dtn
        idx, theta = mesh.circle_loop("outer")
        if len(idx) < 2 * dtn.N + 4:
            raise DiscretizationError(
                "outer circle resolution too coarse for the DtN mode count")
        self.bnd_idx = idx
        self.bnd_theta = theta
        C, S = _trace_trig_moments(theta, dtn.N)
        R = dtn.R_out
        nb = len(idx)
        B = np.zeros((nb, nb), dtype=complex)
        for n in range(1, dtn.N + 1):
            B += dtn.lam(n) * (R / math.pi) * (np.outer(C[n], C[n])
                                               + np.outer(S[n], S[n]))
        if dtn.k > 0:
            B += dtn.lam(0) * (R / (2 * math.pi)) * np.outer(C[0], C[0])
        self.B_dense = B
        coo_r = np.repeat(idx, nb)
        coo_c = np.tile(idx, nb)
        self.B_sparse = sps.coo_matrix(
            (B.reshape(-1), (coo_r, coo_c)),
            shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
        # gauge vector: int_G hat_i ds
        self._gauge_vec = np.zeros(mesh.n_nodes)
        self._gauge_vec[idx] = C[0] * R

    # -- right-hand side ----------------------------------------------------

    def _assemble_rhs(self, quad_subdiv):
        mesh, med, src = self.mesh, self.med, self.src
        F = np.zeros(mesh.n_nodes, dtype=complex)
        if isinstance(src, RingSource):
            idx, theta = mesh.circle_loop("ring")
            if len(idx) == 0:
                raise DiscretizationError("mesh has no source ring circle")
            Nmax = max(abs(n) for n, _ in src.modes)
            C, S = _trace_trig_moments(theta, max(Nmax, 1))
            rho = src.radius
            for n, amp in src.modes:
                if n == 0:
                    F[idx] += amp * rho * C[0]
                else:
                    sgn = 1.0 if n > 0 else -1.0
                    F[idx] += amp * rho * (C[abs(n)] + 1j * sgn * S[abs(n)])
        else:
            # element quadrature of the smooth bump density; subdivide each
            # triangle to capture narrow bumps
            elems = mesh.elements
            p = mesh.nodes[elems]
            area = mesh.areas()
            pts, w, lam = _subdivided_quadrature(quad_subdiv)
            for q in range(len(w)):
                x = np.einsum("k,mkd->md", lam[q], p)
                dens = src.density(x)
                for i in range(3):
                    np.add.at(F, elems[:, i], w[q] * lam[q][i] * dens * area)
        self.F = F
        # int f conj(u) for the stability diagnostics: F . conj(u)

    # -- system assembly per delta -------------------------------------

    def system(self, delta: float) -> LinearSystem:
        med = self.med
        s_neg = -1.0 - 1j * float(delta)
        M = self.K_pos + s_neg * self.K_neg
        if med.k > 0:
            M = M - med.k**2 * (self.M_pos - self.M_neg)
        M = M + self.B_sparse
        rhs = -self.F
        gauged = med.k == 0
        if gauged:
            g = sps.csr_matrix(self._gauge_vec[:, None])
            M = sps.bmat([[M, g], [g.T, None]], format="csr")
            rhs = np.concatenate([rhs, [0.0]])
        return LinearSystem(matrix=M.tocsr(), rhs=rhs.astype(complex),
                            mesh=self.mesh, gauged=gauged,
                            n_dofs=self.mesh.n_nodes)

    def solve(self, delta: float) -> DiscreteField:
        return solve_system(self.system(delta))

    def source_pairing(self, u: DiscreteField) -> complex:
        """int f conj(u_h), exact for the P1 field (rhs vector pairing)."""
        return complex(self.F @ np.conj(u.values))


def _subdivided_quadrature(levels):
    """Barycentric 3-midpoint rule on a uniformly subdivided triangle."""
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for T in tris:
            m01, m12, m20 = 0.5 * (T[0] + T[1]), 0.5 * (T[1] + T[2]), \
                0.5 * (T[2] + T[0])
            nxt += [np.array([T[0], m01, m20]), np.array([T[1], m12, m01]),
                    np.array([T[2], m20, m12]), np.array([m01, m12, m20])]
        tris = nxt
    pts, w, lam = [], [], []
    for T in tris:
        for e in range(3):
            lam.append(0.5 * (T[e] + T[(e + 1) % 3]))
            w.append(1.0 / (3.0 * len(tris)))
    return pts, np.array(w), np.array(lam)


def assemble(mesh: TriMesh, med, src, dtn: DtNOperator) -> LinearSystem:
    """One-shot assembly at the medium's own delta."""
    return SweepOperator(mesh, med, src, dtn).system(med.delta)


def solve_system(sys: LinearSystem) -> DiscreteField:
    """Sparse LU (SuperLU, partial pivoting) with a residual check."""
    try:
        lu = spla.splu(sys.matrix.tocsc())
        x = lu.solve(sys.rhs)
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}") from exc
    resid = np.linalg.norm(sys.matrix @ x - sys.rhs) \
        / max(np.linalg.norm(sys.rhs), 1e-300)
    if not np.isfinite(x).all() or resid > 1e-10:
        raise SolverError(f"solver residual {resid:.2e} above 1e-10")
    return DiscreteField(x[:sys.n_dofs], sys.mesh)


# ---------------------------------------------------------------------------
# norms and evaluation


def _element_mask(mesh: TriMesh, regions=None, radial_window=None):
    m = np.ones(mesh.n_elements, dtype=bool)
    if regions is not None:
        m &= np.isin(mesh.tags, [int(t) for t in regions])
    if radial_window is not None:
        lo, hi = radial_window
        r = np.hypot(*mesh.barycenters().T)
        m &= (r >= lo) & (r <= hi)
    return m


def norm(u: DiscreteField, regions=None, kind="L2", radial_window=None):
    """Region-restricted L2 / H1 / H1_semi norm of a P1 field.

    regions: iterable of RegionTag (None = everything); radial_window
    additionally restricts by barycenter radius (both circle radii must be
    resolved in the mesh for the restriction to be exact).
    """
    mesh = u.mesh
    mask = _element_mask(mesh, regions, radial_window)
    if not mask.any():
        raise DiscretizationError("empty region in norm()")
    elems = mesh.elements[mask]
    area = mesh.areas()[mask]
    vals = u.values[elems]                      # (m, 3)
    if kind in ("L2", "H1"):
        mids = 0.5 * (vals + np.roll(vals, -1, axis=1))
        l2sq = float(((np.abs(mids) ** 2).sum(axis=1) * area / 3.0).sum())
    if kind in ("H1", "H1_semi"):
        grads = mesh.hat_gradients()[mask]
        gu = np.einsum("mk,mkd->md", vals, grads)
        h1sq = float(((np.abs(gu) ** 2).sum(axis=1) * area).sum())
    if kind == "L2":
        return math.sqrt(l2sq)
    if kind == "H1_semi":
        return math.sqrt(h1sq)
    if kind == "H1":
        return math.sqrt(l2sq + h1sq)
    raise DiscretizationError(f"unknown norm kind {kind!r}")


def evaluate(u: DiscreteField, pts, precompose=None):
    """P1 interpolation at the given points; with `precompose` T the values
    of u o T^{-1} are returned (i.e. u is evaluated at T^{-1}(p))."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if precompose is not None:
        pts = precompose.inverse(pts)
    mesh = u.mesh
    eid = mesh.locate(pts)
    if (eid < 0).any():
        eid2 = mesh.locate_nearest(pts[eid < 0])
        if (eid2 < 0).any():
            raise DiscretizationError("evaluation point outside the mesh")
        eid[eid < 0] = eid2
    tris = mesh.nodes[mesh.elements[eid]]
    out = np.empty(len(pts), dtype=complex)
    for i, (q, tri, e) in enumerate(zip(pts, tris, eid)):
        l1, l2, l3 = _bary(tri, q)
        v = u.values[mesh.elements[e]]
        out[i] = l1 * v[0] + l2 * v[1] + l3 * v[2]
    return out


def evaluate_grad(u: DiscreteField, pts, precompose=None, nudge=None):
    """Element-wise gradient at the points (optionally of u o T^{-1}, via
    the chain rule grad (u o T^{-1})(p) = J_{T^{-1}}(p)^t grad u(T^{-1} p)).

    nudge: optional (n, 2) offsets added to the query points before lookup,
    used to pick the element on a chosen side of an interface.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    query = pts if nudge is None else pts + nudge
    if precompose is not None:
        x = precompose.inverse(query)
    else:
        x = query
    mesh = u.mesh
    eid = mesh.locate(x)
    if (eid < 0).any():
        eid2 = mesh.locate_nearest(x[eid < 0])
        if (eid2 < 0).any():
            raise DiscretizationError("evaluation point outside the mesh")
        eid[eid < 0] = eid2
    grads = mesh.hat_gradients()[eid]
    vals = u.values[mesh.elements[eid]]
    gu = np.einsum("mk,mkd->md", vals, grads)      # grad u at pre-images
    if precompose is not None:
        Jinv = precompose.inverted().jacobian(query)   # J_{T^{-1}}(p)
        gu = np.einsum("nd,ndk->nk", gu, Jinv)          # J^t grad u
    return gu


def recover_gradient(u: DiscreteField, pts, patch_radius, side_circle=None,
                     side=1.0):
    """One-sided recovered gradient by local quadratic least squares.

    For each point, nodal values within `patch_radius` (and, when
    side_circle is given, strictly on the chosen side of that circle:
    side=+1 outside, -1 inside) are fitted with a quadratic polynomial whose
    gradient is evaluated at the point.  Much less noisy than raw P1
    element gradients; used by the boundary flux diagnostics.
    """
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    mesh = u.mesh
    kd = getattr(mesh, "_node_kd", None)
    if kd is None:
        kd = cKDTree(mesh.nodes)
        mesh._node_kd = kd
    out = np.empty((len(pts), 2), dtype=complex)
    for i, p in enumerate(pts):
        rad = patch_radius
        for attempt in range(4):
            idx = kd.query_ball_point(p, rad)
            idx = np.asarray(idx, dtype=np.int64)
            if side_circle is not None and len(idx):
                sd = side_circle.signed_dist(mesh.nodes[idx]) * side
                idx = idx[sd > 1e-12 * side_circle.r]
            if len(idx) >= 10:
                break
            rad *= 1.5
        if len(idx) < 6:
            raise DiscretizationError("gradient recovery patch too small")
        d = (mesh.nodes[idx] - p) / rad
        basis = np.column_stack([np.ones(len(idx)), d[:, 0], d[:, 1],
                                 d[:, 0]**2, d[:, 0] * d[:, 1], d[:, 1]**2])
        coef, *_ = np.linalg.lstsq(basis, u.values[idx], rcond=None)
        out[i] = coef[1:3] / rad
    return out


def _bary(tri, q):
    d = ((tri[1, 1] - tri[2, 1]) * (tri[0, 0] - tri[2, 0])
         + (tri[2, 0] - tri[1, 0]) * (tri[0, 1] - tri[2, 1]))
    l1 = ((tri[1, 1] - tri[2, 1]) * (q[0] - tri[2, 0])
          + (tri[2, 0] - tri[1, 0]) * (q[1] - tri[2, 1])) / d
    l2 = ((tri[2, 1] - tri[0, 1]) * (q[0] - tri[2, 0])
          + (tri[0, 0] - tri[2, 0]) * (q[1] - tri[2, 1])) / d
    return l1, l2, 1.0 - l1 - l2


def prolong(u: DiscreteField, fine_mesh: TriMesh) -> DiscreteField:
    """Interpolate a field onto a (finer) mesh of the same domain."""
    vals = evaluate(u, fine_mesh.nodes)
    return DiscreteField(vals, fine_mesh)
