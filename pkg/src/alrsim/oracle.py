"""Semi-analytic reference solutions for radially layered sign-changing media.

Separation of variables turns the layered problems (coefficients piecewise of
the form a*I with scalar sigma, constant or ~1/r^4, each layer carrying its
sign factor) into 2x2 interface matching per Fourier mode.  The per-mode
systems are solved as one global linear system with locally normalized bases
so that the resonant growth of the annulus amplitudes at small loss does not
overflow, and the exterior amplitude stays directly comparable with the
homogeneous reference.

Bessel functions J/Y/H1 for real arguments are computed here (power series
plus Miller's backward recurrence for J, series/asymptotics for Y0/Y1 and
forward recurrence upward); the lossy annulus at k > 0 needs complex
arguments, for which scipy.special supplies the values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as _sp

_EULER_GAMMA = 0.5772156649015328606


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Bessel functions, real arguments


def _bessel_j_series(n, x):
    """Ascending series, adequate for small |x|."""
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term
    for k in range(1, 60):
        term *= -(half * half) / (k * (k + n))
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-300):
            break
    return total


def _bessel_j_miller(n_max, x):
    """J_0..J_n_max by backward recurrence, normalized with
    J_0 + 2 sum J_2k = 1."""
    start = max(n_max, int(x)) + 26 + int(2.0 * math.sqrt(max(n_max, x)))
    if start % 2:
        start += 1
    jp, j = 0.0, 1e-290
    out = np.zeros(n_max + 1)
    acc = 0.0
    for m in range(start, 0, -1):
        jm = (2.0 * m / x) * j - jp
        jp, j = j, jm
        if m - 1 <= n_max:
            out[m - 1] = j
        if (m - 1) % 2 == 0 and m - 1 > 0:
            acc += 2.0 * j
        # rescale to avoid overflow of the unnormalized recurrence
        if abs(j) > 1e250:
            jp *= 1e-250
            j *= 1e-250
            out *= 1e-250
            acc *= 1e-250
    norm = j + acc
    return out / norm


def _bessel_y01(x):
    """Y_0(x), Y_1(x): ascending series with log term for x <= 12,
    Hankel asymptotic expansion beyond."""
    if x <= 12.0:
        j0 = _bessel_j_series(0, x)
        j1 = _bessel_j_series(1, x)
        half2 = 0.25 * x * x
        # Y0 = (2/pi)[(ln(x/2)+gamma) J0 + sum_{k>=1} (-1)^{k+1} H_k q^k/(k!)^2]
        term = 1.0
        hk = 0.0
        s0 = 0.0
        for k in range(1, 80):
            term *= half2 / (k * k)
            hk += 1.0 / k
            s0 += (-1) ** (k + 1) * hk * term
            if term < 1e-18:
                break
        y0 = (2.0 / math.pi) * ((math.log(0.5 * x) + _EULER_GAMMA) * j0 + s0)
        # Y1 from the Wronskian J1 Y0 - J0 Y1 = 2/(pi x) needs J0 != 0;
        # use the series form instead (valid everywhere)
        term = 1.0
        s1 = 0.0
        hk = 0.0
        hk1 = 1.0
        for k in range(0, 80):
            if k > 0:
                term *= half2 / (k * (k + 1))
                hk += 1.0 / k
                hk1 += 1.0 / (k + 1)
            contrib = (-1) ** k * (hk + hk1) * term
            s1 += contrib
            if abs(contrib) < 1e-18:
                break
        y1 = (2.0 / math.pi) * ((math.log(0.5 * x) + _EULER_GAMMA) * j1
                                - 1.0 / x - 0.25 * x * s1)
        return y0, y1
    # Hankel asymptotics: Y_n = sqrt(2/(pi x)) [P sin chi + Q cos chi]
    def asympt(n):
        mu = 4.0 * n * n
        p, q = 1.0, (mu - 1.0) / (8.0 * x)
        term_p, term_q = p, q
        for k in range(1, 12):
            term_p *= -(mu - (4 * k - 3) ** 2) * (mu - (4 * k - 1) ** 2) \
                / ((2 * k - 1) * 2 * k * 64.0 * x * x)
            p += term_p
            term_q *= -(mu - (4 * k - 1) ** 2) * (mu - (4 * k + 1) ** 2) \
                / (2 * k * (2 * k + 1) * 64.0 * x * x)
            q += term_q
        chi = x - (0.5 * n + 0.25) * math.pi
        amp = math.sqrt(2.0 / (math.pi * x))
        return amp * (p * math.sin(chi) + q * math.cos(chi))
    return asympt(0), asympt(1)


def bessel(kind: str, n: int, x: float) -> complex:
    """J_n, Y_n or H^(1)_n at real x (relative accuracy ~1e-12 for
    n <= 30, x in (0, 100]).  J accepts x = 0."""
    if n < 0:
        raise OracleError("order must be >= 0 (use symmetry upstream)")
    if kind == "J":
        if x < 0:
            raise OracleError("argument must be >= 0")
        if x == 0.0:
            return 1.0 if n == 0 else 0.0
        if x <= 8.0 or n > x:
            if n <= 40 and x <= 25.0:
                return _bessel_j_series(n, x)
            return _bessel_j_miller(n, x)[n]
        return _bessel_j_miller(n, x)[n]
    if x <= 0.0:
        raise OracleError("Y/H1 need x > 0")
    y0, y1 = _bessel_y01(x)
    if n == 0:
        y = y0
    elif n == 1:
        y = y1
    else:
        # forward recurrence is stable for Y (it grows with the order)
        ym, yc = y0, y1
        for m in range(1, n):
            ym, yc = yc, (2.0 * m / x) * yc - ym
        y = yc
    if kind == "Y":
        return y
    if kind == "H1":
        return bessel("J", n, x) + 1j * y
    raise OracleError(f"unknown kind {kind!r}")


def bessel_deriv(kind: str, n: int, x: float) -> complex:
    """d/dx of J_n, Y_n or H^(1)_n via the standard recurrence."""
    if n == 0:
        return -bessel(kind, 1, x)
    return 0.5 * (bessel(kind, n - 1, x) - bessel(kind, n + 1, x))


def _cyl(kind, n, z):
    """Cylinder function for possibly complex argument (scipy-backed)."""
    if kind == "J":
        return _sp.jv(n, z)
    if kind == "Y":
        return _sp.yv(n, z)
    return _sp.hankel1(n, z)


def _cyl_deriv(kind, n, z):
    if n == 0:
        return -_cyl(kind, 1, z)
    return 0.5 * (_cyl(kind, n - 1, z) - _cyl(kind, n + 1, z))


# ---------------------------------------------------------------------------
# radial layers and mode matching


@dataclass(frozen=True)
class RadialLayer:
    """One annular layer [r_in, r_out) with coefficient a*I, scalar sigma
    (constant, or sigma_ref * (r_ref^2/r^2)^2 for the transformed annulus)
    and sign factor s (1 or -1-1j*delta)."""

    r_in: float
    r_out: float
    a: float = 1.0
    sigma: float = 1.0
    s: complex = 1.0
    sigma_profile: str = "const"      # "const" | "inv4"
    sigma_ref_radius: float = 0.0     # for "inv4": sigma(r) = sigma*(ref^2/r^2)^2

    def __post_init__(self):
        if self.r_in < 0 or self.r_out <= self.r_in:
            raise OracleError("layer radii must satisfy 0 <= r_in < r_out")
        if self.sigma_profile not in ("const", "inv4"):
            raise OracleError("sigma_profile must be 'const' or 'inv4'")
        if self.sigma_profile == "inv4" and self.sigma_ref_radius <= 0:
            raise OracleError("inv4 profile needs sigma_ref_radius > 0")


class _Basis:
    """Two radial basis functions u(r), and r-derivatives, per region."""

    def __init__(self, n, k, layer: RadialLayer | None, r_lo, r_hi):
        self.n = n
        a = layer.a if layer else 1.0
        s = layer.s if layer else 1.0
        sigma = layer.sigma if layer else 1.0
        s0 = -1.0 if np.real(s) < 0 else 1.0
        self.kind = "power"
        if k > 0:
            if layer is not None and layer.sigma_profile == "inv4":
                self.kind = "inv4"
                xi2 = k * k * s0 * sigma / (s * a) * layer.sigma_ref_radius**4
                self.xi = np.sqrt(xi2 + 0j)
            else:
                self.kind = "helm"
                kappa2 = k * k * s0 * sigma / (s * a)
                self.kappa = np.sqrt(kappa2 + 0j)
        # normalization radii keep the power basis O(1) within the region
        self.r_hi = r_hi
        self.r_lo = max(r_lo, 1e-12 * r_hi)

    def value(self, which, r):
        n = self.n
        if self.kind == "power":
            if which == 0:
                return (r / self.r_hi) ** n
            return (r / self.r_lo) ** (-n) if n > 0 else np.log(r / self.r_lo)
        if self.kind == "helm":
            z = self.kappa * r
            return _cyl("J" if which == 0 else "Y", n, z)
        z = self.xi / r
        return _cyl("J" if which == 0 else "Y", n, z)

    def deriv(self, which, r):
        n = self.n
        if self.kind == "power":
            if which == 0:
                return n * (r / self.r_hi) ** n / r
            return (-n * (r / self.r_lo) ** (-n) / r if n > 0 else 1.0 / r)
        if self.kind == "helm":
            z = self.kappa * r
            return self.kappa * _cyl_deriv("J" if which == 0 else "Y", n, z)
        z = self.xi / r
        return (-self.xi / r**2) * _cyl_deriv("J" if which == 0 else "Y", n, z)


class _Exterior:
    """Outgoing (k > 0) or decaying (k = 0) exterior basis."""

    def __init__(self, n, k, r_ref):
        self.n, self.k, self.r_ref = n, k, r_ref

    def value(self, r):
        if self.k > 0:
            return _cyl("H1", self.n, self.k * r)
        return (r / self.r_ref) ** (-self.n)

    def deriv(self, r):
        if self.k > 0:
            return self.k * _cyl_deriv("H1", self.n, self.k * r)
        return -self.n * (r / self.r_ref) ** (-self.n) / r


class _Core:
    """Regular-at-origin basis of the innermost region."""

    def __init__(self, n, k, layer: RadialLayer | None, r_ref):
        self.n, self.k, self.r_ref = n, k, r_ref
        a = layer.a if layer else 1.0
        s = layer.s if layer else 1.0
        sigma = layer.sigma if layer else 1.0
        s0 = -1.0 if np.real(s) < 0 else 1.0
        self.kappa = np.sqrt(k * k * s0 * sigma / (s * a) + 0j) if k > 0 else None

    def value(self, r):
        if self.kappa is None:
            return (r / self.r_ref) ** self.n
        return _cyl("J", self.n, self.kappa * r)

    def deriv(self, r):
        if self.kappa is None:
            return self.n * (r / self.r_ref) ** self.n / r
        return self.kappa * _cyl_deriv("J", self.n, self.kappa * r)


@dataclass
class ModeSolution:
    """Solved amplitudes of one Fourier mode n for a layered medium driven
    by a ring source at rho_s."""

    n: int
    k: float
    layers: tuple
    rho_s: float
    amplitude: complex
    radii: np.ndarray            # interface radii, increasing (incl. rho_s)
    coeffs: np.ndarray           # stacked basis amplitudes
    condition_number: float
    _regions: list = None

    def exterior_amplitude(self):
        return self.coeffs[-1]

    def u_of_r(self, r):
        """Radial factor u_n(r); the field is u_n(r) e^{i n theta}."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros(len(r), dtype=complex)
        for (lo, hi, basis, c0, c1) in self._regions:
            m = (r >= lo) & (r < hi)
            if not m.any():
                continue
            if isinstance(basis, (_Exterior, _Core)):
                out[m] = c0 * basis.value(r[m])
            else:
                out[m] = c0 * basis.value(0, r[m]) + c1 * basis.value(1, r[m])
        return out

    def flux_of_r(self, r, s_a):
        """s*a*du/dr at radii r inside one region (diagnostics)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros(len(r), dtype=complex)
        for (lo, hi, basis, c0, c1) in self._regions:
            m = (r >= lo) & (r < hi)
            if not m.any():
                continue
            if isinstance(basis, (_Exterior, _Core)):
                out[m] = c0 * basis.deriv(r[m])
            else:
                out[m] = c0 * basis.deriv(0, r[m]) + c1 * basis.deriv(1, r[m])
        return s_a * out


def radial_layered_solve(layers, n, k, delta, source_ring) -> ModeSolution:
    """Mode-n solution of the layered problem with a ring source.

    layers : list of RadialLayer, radially increasing, innermost starting
             at 0 (an empty list is the homogeneous medium); the sign factor
             of a lossy layer should be -1-1j*delta (delta is recorded).
    source_ring : (rho_s, amplitude); the conormal flux jumps by `amplitude`
             across the ring |x| = rho_s, which must lie outside all layers.
    """
    rho_s, amp = float(source_ring[0]), complex(source_ring[1])
    layers = tuple(layers)
    for a, b in zip(layers, layers[1:]):
        if abs(a.r_out - b.r_in) > 1e-12 * b.r_in:
            raise OracleError("layers must be contiguous")
    if layers and layers[0].r_in != 0.0:
        raise OracleError("innermost layer must start at 0")
    t_outer = layers[-1].r_out if layers else 0.0
    if rho_s <= t_outer:
        raise OracleError("source ring must lie outside all layers")
    if k == 0 and n < 1:
        raise OracleError("quasistatic ring sources need mode n >= 1")
    if n < 0:
        raise OracleError("mode index must be >= 0")

    # regions: core, middle layers, free gap (t_outer, rho_s), exterior
    regions = []
    core_layer = layers[0] if layers else None
    core_hi = layers[0].r_out if layers else rho_s
    core = _Core(n, k, core_layer, core_hi)
    regions.append(("core", 0.0, core_hi, core, None))
    for lay in layers[1:]:
        regions.append(("mid", lay.r_in, lay.r_out,
                        _Basis(n, k, lay, lay.r_in, lay.r_out), lay))
    if layers:
        regions.append(("mid", t_outer, rho_s,
                        _Basis(n, k, None, t_outer, rho_s), None))
    ext = _Exterior(n, k, rho_s)
    regions.append(("ext", rho_s, np.inf, ext, None))

    # unknown layout: core 1, each mid 2, exterior 1
    idx = []
    pos = 0
    for kind, *_ in regions:
        width = 1 if kind in ("core", "ext") else 2
        idx.append((pos, width))
        pos += width
    nunk = pos
    rows = []
    rhs = []

    def val_and_flux(region_i, r):
        kind, lo, hi, basis, lay = regions[region_i]
        s_a = (lay.s * lay.a) if lay is not None else 1.0
        if kind == "core":
            s_a = (core_layer.s * core_layer.a) if core_layer else 1.0
            return ([basis.value(r)], [s_a * basis.deriv(r)])
        if kind == "ext":
            return ([basis.value(r)], [basis.deriv(r)])
        return ([basis.value(0, r), basis.value(1, r)],
                [s_a * basis.deriv(0, r), s_a * basis.deriv(1, r)])

    for i in range(len(regions) - 1):
        r_if = regions[i][2]
        v_l, f_l = val_and_flux(i, r_if)
        v_r, f_r = val_and_flux(i + 1, r_if)
        is_source = abs(r_if - rho_s) < 1e-12 * rho_s
        for comp, (left, right) in enumerate(((v_l, v_r), (f_l, f_r))):
            row = np.zeros(nunk, dtype=complex)
            p, w = idx[i]
            row[p:p + w] = left
            p, w = idx[i + 1]
            row[p:p + w] = [-x for x in right]
            rows.append(row)
            rhs.append(-amp if (is_source and comp == 1) else 0.0)

    M = np.array(rows)
    b = np.array(rhs, dtype=complex)
    cond = float(np.linalg.cond(M))
    try:
        c = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"singular interface system at mode {n}") from exc
    resid = float(np.abs(M @ c - b).max() / max(1.0, np.abs(b).max()))
    if not np.isfinite(c).all():
        raise OracleError(f"non-finite amplitudes at mode {n}")

    packed = []
    j = 0
    for (kind, lo, hi, basis, lay), (p, w) in zip(regions, idx):
        c0 = c[p]
        c1 = c[p + 1] if w == 2 else 0.0
        packed.append((lo, hi, basis, c0, c1))
        j += w
    sol = ModeSolution(n=n, k=k, layers=layers, rho_s=rho_s, amplitude=amp,
                       radii=np.array([r[2] for r in regions[:-1]]),
                       coeffs=c, condition_number=cond, _regions=packed)
    sol.residual = resid
    return sol


def interface_residual(sol: ModeSolution) -> float:
    """Re-substituted continuity mismatch of u and s*a*u' at every
    interface, relative."""
    worst = 0.0
    regs = sol._regions
    layers = list(sol.layers)
    s_a = []
    core_lay = layers[0] if layers else None
    s_a.append((core_lay.s * core_lay.a) if core_lay else 1.0)
    for lay in layers[1:]:
        s_a.append(lay.s * lay.a)
    if layers:
        s_a.append(1.0)
    s_a.append(1.0)
    for i in range(len(regs) - 1):
        r_if = regs[i][1]
        lo, hi, basis, c0, c1 = regs[i]
        u_l = sol.u_of_r([r_if * (1 - 1e-12)])[0]
        u_r = sol.u_of_r([r_if * (1 + 1e-12)])[0]
        worst = max(worst, abs(u_l - u_r) / max(1.0, abs(u_l)))
        f_l = sol.flux_of_r([r_if * (1 - 1e-12)], s_a[i])[0]
        f_r = sol.flux_of_r([r_if * (1 + 1e-12)], s_a[i + 1])[0]
        jump = sol.amplitude if abs(r_if - sol.rho_s) < 1e-9 * sol.rho_s else 0.0
        worst = max(worst, abs(f_r - f_l - jump) / max(1.0, abs(f_l)))
    return worst


def homogeneous_mode(n, k, source_ring):
    """Free-space single-mode ring solution (no layers)."""
    return radial_layered_solve((), n, k, 0.0, source_ring)


def thm_quasistatic_layers(r1, r2, delta, a_core=1.0):
    """Layer stack of the quasistatic cloak layout with r0 = 0: positive
    core, -1-1j*delta annulus, everything outside is free."""
    return (RadialLayer(0.0, r1, a=a_core, s=1.0),
            RadialLayer(r1, r2, a=1.0, s=-1.0 - 1j * delta))


def thm_frequency_layers(r1, r2, delta):
    """Layer stack of the finite-frequency cloak layout with r0 = 0:
    (I, r3^2/r1^2) core, (-I, -r2^4/|x|^4) annulus (times 1+i delta loss),
    free outside."""
    r3 = r2 * r2 / r1
    return (RadialLayer(0.0, r1, a=1.0, sigma=r3**2 / r1**2, s=1.0),
            RadialLayer(r1, r2, a=1.0, sigma=1.0, s=-1.0 - 1j * delta,
                        sigma_profile="inv4", sigma_ref_radius=r2))


def oracle_field(layers, modes, k, delta, mesh):
    """Superpose ModeSolutions on the mesh nodes -> complex nodal array.

    modes: iterable of (n, rho_s, amplitude).
    """
    vals = np.zeros(mesh.n_nodes, dtype=complex)
    r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    th = np.arctan2(mesh.nodes[:, 1], mesh.nodes[:, 0])
    solutions = []
    for n, rho_s, amp in modes:
        sol = radial_layered_solve(layers, n, k, delta, (rho_s, amp))
        solutions.append(sol)
        vals += sol.u_of_r(r) * np.exp(1j * n * th)
    return vals, solutions
