"""Rounding convex polygons into positively curved C^m bodies.

Each edge is handled in a canonical frame (endpoints at (-a, 0), (a, 0),
prescribed endpoint tangents pointing into the upper half plane) where the
rounded edge is the graph of a concave polynomial from
:func:`smoothconvex.bernstein.approx_segment`, affinely scaled back and
reparametrized by arclength.  Endpoint curvature is the same value ``r``
for every edge, so concatenation is C^m: tangents and second derivatives
match at the shared vertices and orders 3..m vanish there.

The assembled boundary is kept exact (no projection onto a truncated
basis): support values are obtained by solving the tangency condition on
the relevant edge, which keeps vertices and normals exact to rounding.
"""
from __future__ import annotations

import numpy as np

from .bernstein import BernsteinCurve, approx_segment, bezier_values
from .errors import ConstructionError, PreconditionError
from .geometry import (Polygon, PolygonNormalPair, SupportBody,
                       check_interpolable, unit_normal, unit_tangent)

__all__ = ["EdgeCurve", "edge_curve", "SmoothedPolygonBody", "smooth_polygon"]


def _adaptive_simpson(f, a, b, tol):
    """Plain adaptive Simpson quadrature."""
    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        fl = f(0.5 * (lo + mid))
        fr = f(0.5 * (mid + hi))
        left = simpson(lo, mid, flo, fl, fmid)
        right = simpson(mid, hi, fmid, fr, fhi)
        if depth > 48 or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, fl, fmid, left, tol / 2.0, depth + 1)
                + recurse(mid, hi, fmid, fr, fhi, right, tol / 2.0, depth + 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0)


class EdgeCurve:
    """A rounded edge: concave graph curve with unit-speed parametrization.

    Frame contract (the smoothing lemma): runs from A = (-a, 0) to
    B = (a, 0), endpoint tangents ``v_minus`` / ``v_plus``, endpoint
    curvature magnitude ``r``, negative det(gamma', gamma'') along the
    curve, derivative orders 3..m vanishing at the endpoints, and distance
    to the segment [A, B] at most ``epsilon``.
    """

    def __init__(self, a, r, epsilon, m, v_minus, v_plus, degree_cap=10000,
                 arclength_tol=1e-10):
        v_minus = np.asarray(v_minus, dtype=float)
        v_plus = np.asarray(v_plus, dtype=float)
        if not (v_minus[0] > 0 and v_minus[1] > 0):
            raise PreconditionError("v_minus must have strictly positive entries")
        if not (v_plus[0] > 0 and v_plus[1] < 0):
            raise PreconditionError("v_plus needs positive first, negative second entry")
        if a <= 0 or r <= 0 or epsilon <= 0:
            raise PreconditionError("a, r, epsilon must be positive")
        self.a, self.r, self.epsilon, self.m = float(a), float(r), float(epsilon), int(m)
        t_minus = v_minus[1] / v_minus[0]
        t_plus = v_plus[1] / v_plus[0]
        # graph-frame data: curvature of the graph at the ends must be
        # 2*a*r so that the affine scale-back by 2a yields curvature r
        r_minus = 2.0 * a * r * (1.0 + t_minus ** 2) ** 1.5
        r_plus = 2.0 * a * r * (1.0 + t_plus ** 2) ** 1.5
        self.poly = approx_segment(r_minus, r_plus, t_minus, t_plus,
                                   epsilon / (2.0 * a), m, degree_cap)
        self.t_minus, self.t_plus = t_minus, t_plus
        d = self.poly.degree
        self._c0 = self.poly.control_values
        self._c1 = d * np.diff(self._c0)
        self._c2 = (d - 1.0) * np.diff(self._c1)
        self._arclength_tol = arclength_tol
        self._cum = None

    # graph-frame helpers -------------------------------------------------
    def _p(self, u):
        return bezier_values(self._c0, u)

    def _p1(self, u):
        return bezier_values(self._c1, u)

    def _p2(self, u):
        return bezier_values(self._c2, u)

    def _speed(self, u):
        return 2.0 * self.a * np.sqrt(1.0 + self._p1(u) ** 2)

    _GL20 = np.polynomial.legendre.leggauss(20)

    def _panel_integrals(self, grid):
        """Vectorized GL-20 integrals of the speed over consecutive panels."""
        gx, gw = self._GL20
        lo, hi = grid[:-1], grid[1:]
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo)[:, None] + half[:, None] * gx[None, :]).ravel()
        vals = self._speed(nodes).reshape(len(lo), len(gx))
        return half * (vals @ gw)

    def _ensure_arclength(self):
        if self._cum is None:
            self._build_arclength(self._arclength_tol)
        return self

    @property
    def length(self):
        self._ensure_arclength()
        return self._length

    def _build_arclength(self, tol):
        # cumulative arclength on an adapted parameter grid; the tangent
        # turns fastest near the ends, refine there
        base = np.concatenate([
            np.geomspace(1e-9, 0.1, 170), np.linspace(0.1, 0.9, 300)[1:-1],
            1.0 - np.geomspace(1e-9, 0.1, 170)[::-1]])
        grid = np.unique(np.concatenate([[0.0], base, [1.0]]))
        panels = self._panel_integrals(grid)
        self._ugrid = grid
        self._cum = np.concatenate([[0.0], np.cumsum(panels)])
        self._length = float(self._cum[-1])
        # cross-check the quadrature table at the requested tolerance
        mid = _adaptive_simpson(lambda u: float(self._speed(u)), 0.0, 0.5, tol)
        table_mid = float(np.interp(0.5, self._ugrid, self._cum))
        if abs(mid - table_mid) > 200.0 * tol * max(1.0, self.length):
            raise ConstructionError("arclength quadrature self-check failed")

    def _u_of_s(self, s):
        """Invert the arclength map (monotone interp seed + Newton)."""
        self._ensure_arclength()
        shape = np.shape(s)
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, self.length)
        u = np.interp(s, self._cum, self._ugrid)
        gx, gw = self._GL20
        base = np.searchsorted(self._ugrid, u, side="right") - 1
        base = np.clip(base, 0, len(self._ugrid) - 2)
        u0 = self._ugrid[base]
        s0 = self._cum[base]
        for _ in range(3):
            half = 0.5 * (u - u0)
            nodes = (0.5 * (u + u0)[:, None] + half[:, None] * gx[None, :]).ravel()
            vals = self._speed(nodes).reshape(len(u), len(gx))
            s_cur = s0 + half * (vals @ gw)
            u = np.clip(u - (s_cur - s) / self._speed(u), 0.0, 1.0)
        return u.reshape(shape)

    # frame-curve evaluation ----------------------------------------------
    def point_u(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([2.0 * self.a * (u - 0.5), 2.0 * self.a * self._p(u)], axis=-1)

    def tangent_u(self, u):
        p1 = self._p1(u)
        t = np.stack([np.ones_like(p1), p1], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def curvature_u(self, u):
        """Unsigned curvature of the scaled curve."""
        p1, p2 = self._p1(u), self._p2(u)
        return np.abs(p2) / (2.0 * self.a * (1.0 + p1 ** 2) ** 1.5)

    def second_derivative_u(self, u):
        """d^2 gamma / d s^2 at parameter u (arclength second derivative)."""
        p1, p2 = self._p1(u), self._p2(u)
        direction = np.stack([-p1, np.ones_like(p1)], axis=-1)
        return p2[..., None] * direction / (2.0 * self.a * (1.0 + p1 ** 2) ** 2)

    def sample(self, n):
        """n arclength-uniform samples: (s, point, unit tangent, gamma'')."""
        s = np.linspace(0.0, self.length, n)
        u = self._u_of_s(s)
        return s, self.point_u(u), self.tangent_u(u), self.second_derivative_u(u)


def edge_curve(a, r, epsilon, m, v_minus, v_plus, **kw) -> EdgeCurve:
    """Rounded edge in the canonical frame (see :class:`EdgeCurve`)."""
    return EdgeCurve(a, r, epsilon, m, v_minus, v_plus, **kw)


def _rot_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class _PlacedEdge:
    """An EdgeCurve placed in the plane, traversed clockwise around the body.

    The outward normal angle nu(u) decreases along u from the angle of the
    start-vertex normal to the angle of the end-vertex normal.
    """

    def __init__(self, curve: EdgeCurve, rotation, center, nu_start, nu_end):
        self.curve = curve
        self.R = rotation
        self.center = np.asarray(center, dtype=float)
        self.nu_start = nu_start        # unwrapped, decreasing
        self.nu_end = nu_end

    def point(self, u):
        return self.curve.point_u(u) @ self.R.T + self.center

    def normal_angle(self, u):
        p1 = self.curve._p1(u)
        frame_angle = np.arctan2(self.R[1, 0], self.R[0, 0])
        return frame_angle + np.arctan2(1.0, -p1) + 0.0 * p1

    _SEED_GRID = np.unique(np.concatenate([
        np.geomspace(1e-12, 0.5, 400), 1.0 - np.geomspace(1e-12, 0.5, 400)[::-1],
        np.linspace(0.0, 1.0, 401)]))

    def _seed_table(self):
        # p' is strictly decreasing; tabulate once for monotone-interp seeds
        if not hasattr(self, "_p1_tab"):
            self._p1_tab = self.curve._p1(self._SEED_GRID)
        return self._p1_tab

    def solve_normal(self, nu):
        """u with outward normal angle nu (table seed + safeguarded Newton)."""
        nu = np.asarray(nu, dtype=float)
        frame_angle = np.arctan2(self.R[1, 0], self.R[0, 0])
        # normal in frame is (-p', 1)/|.|, at angle in (0, pi)
        ang = np.mod(nu - frame_angle, 2.0 * np.pi)
        sin_a = np.sin(ang)
        target = -np.cos(ang) / np.maximum(sin_a, 1e-300)   # p'(u) = -cot(ang)
        tab = self._seed_table()
        pos = np.searchsorted(-tab, -target)                # tab decreasing
        pos = np.clip(pos, 1, len(tab) - 1)
        lo = self._SEED_GRID[pos - 1]
        hi = self._SEED_GRID[pos]
        tlo, thi = tab[pos - 1], tab[pos]
        frac = np.where(tlo > thi, (tlo - target) / np.maximum(tlo - thi, 1e-300), 0.5)
        u = np.clip(lo + frac * (hi - lo), 0.0, 1.0)
        scale = max(abs(self.curve.t_minus), abs(self.curve.t_plus), 1.0)
        for _ in range(8):
            val = self.curve._p1(u)
            err = val - target
            if np.abs(err).max() <= 1e-14 * scale:
                break
            go_right = err > 0
            lo = np.where(go_right, np.maximum(lo, u), lo)
            hi = np.where(go_right, hi, np.minimum(hi, u))
            p2 = self.curve._p2(u)
            safe = np.abs(p2) > 1e-13
            step = np.where(safe, err / np.where(safe, p2, 1.0), 0.0)
            u_new = u - step
            bad = (~safe) | (u_new <= lo) | (u_new >= hi)
            u = np.where(bad, 0.5 * (lo + hi), u_new)
        return np.clip(u, 0.0, 1.0)


class SmoothedPolygonBody(SupportBody):
    """Exact support calculus for a polygon rounded edge-by-edge.

    Vertices of the polygon lie on the boundary with the prescribed
    normals; the boundary is C^m with strictly positive curvature;
    every boundary point is within ``epsilon`` of the polygon.
    """

    def __init__(self, pnp: PolygonNormalPair, epsilon, m=3, r=1.0,
                 degree_cap=10000, rho_cap=None):
        ok, diag = check_interpolable(pnp, full=True)
        if not ok:
            raise PreconditionError(f"pair not interpolable at vertices {diag}")
        self.pnp = pnp
        self.epsilon = float(epsilon)
        self.m = int(m)
        self.r = float(r)
        self.smoothness_order = int(m)
        verts = pnp.polygon.vertices
        nrm = pnp.normals
        n = len(verts)
        # clockwise traversal of the CCW-stored polygon
        order = np.arange(n)[::-1]
        edges = []
        nu_prev = None
        for k in range(n):
            i = order[k]
            j = order[(k + 1) % n]
            A, B = verts[i], verts[j]
            chord = B - A
            a = 0.5 * np.linalg.norm(chord)
            angle = np.arctan2(chord[1], chord[0])
            R = _rot_matrix(angle)
            center = 0.5 * (A + B)
            # tangent at a vertex is its normal rotated by -90 deg (travel
            # direction), expressed in the edge frame
            Rt = R.T
            v_minus = Rt @ np.array([nrm[i][1], -nrm[i][0]])
            v_plus = Rt @ np.array([nrm[j][1], -nrm[j][0]])
            curve = EdgeCurve(a, r, epsilon, m, v_minus, v_plus,
                              degree_cap=degree_cap)
            nu_s = float(np.arctan2(nrm[i][1], nrm[i][0]))
            nu_e = float(np.arctan2(nrm[j][1], nrm[j][0]))
            if nu_prev is not None:
                while nu_s > nu_prev + 1e-12:
                    nu_s -= 2.0 * np.pi
                while nu_s < nu_prev - 2.0 * np.pi:
                    nu_s += 2.0 * np.pi
            while nu_e >= nu_s - 1e-12:
                nu_e -= 2.0 * np.pi
            edges.append(_PlacedEdge(curve, R, center, nu_s, nu_e))
            nu_prev = nu_e
        total = edges[0].nu_start - edges[-1].nu_end
        if abs(total - 2.0 * np.pi) > 1e-9:
            raise ConstructionError(f"normal angles do not wind once ({total:.6f})")
        self._edges = edges
        self._nu_top = edges[0].nu_start
        self._rho_cap = rho_cap if rho_cap is not None else 1e13 * max(
            1.0, pnp.polygon.circumradius())
        self._vertex_order = order

    # ------------------------------------------------------------------
    def _locate(self, theta):
        """Map angles to (edge index, unwrapped angle in that edge's range)."""
        theta = np.asarray(theta, dtype=float)
        top = self._nu_top
        nu = top - np.mod(top - theta, 2.0 * np.pi)     # in (top - 2pi, top]
        starts = np.array([e.nu_start for e in self._edges])
        idx = np.clip(np.searchsorted(-starts, -nu, side="left") - 1, 0,
                      len(self._edges) - 1)
        return idx, nu

    def _solve(self, theta):
        idx, nu = self._locate(theta)
        u = np.empty_like(nu)
        point = np.empty(nu.shape + (2,))
        curvature = np.empty_like(nu)
        for e in np.unique(idx):
            mask = idx == e
            edge = self._edges[e]
            ue = edge.solve_normal(nu[mask])
            u[mask] = ue
            point[mask] = edge.point(ue)
            curvature[mask] = edge.curve.curvature_u(ue)
        return idx, u, point, curvature

    def h(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, pt, _ = self._solve(theta_a)
        val = np.einsum("...i,...i->...", pt, unit_normal(theta_a))
        return val if np.ndim(theta) else val[0]

    def h1(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, pt, _ = self._solve(theta_a)
        val = np.einsum("...i,...i->...", pt, unit_tangent(theta_a))
        return val if np.ndim(theta) else val[0]

    def rho(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, _, kappa = self._solve(theta_a)
        val = 1.0 / np.maximum(kappa, 1.0 / self._rho_cap)
        return val if np.ndim(theta) else val[0]

    def h2(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, pt, kappa = self._solve(theta_a)
        h = np.einsum("...i,...i->...", pt, unit_normal(theta_a))
        val = 1.0 / np.maximum(kappa, 1.0 / self._rho_cap) - h
        return val if np.ndim(theta) else val[0]

    def support_triple(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, pt, kappa = self._solve(theta_a)
        h = np.einsum("...i,...i->...", pt, unit_normal(theta_a))
        h1 = np.einsum("...i,...i->...", pt, unit_tangent(theta_a))
        rho = 1.0 / np.maximum(kappa, 1.0 / self._rho_cap)
        if np.ndim(theta):
            return h, h1, rho
        return h[0], h1[0], rho[0]

    def boundary(self, theta):
        theta_a = np.atleast_1d(np.asarray(theta, dtype=float))
        _, _, pt, _ = self._solve(theta_a)
        return pt if np.ndim(theta) else pt[0]

    def feature_angles(self):
        centers, widths = [], []
        for e in self._edges:
            mid = e.normal_angle(np.array([0.12, 0.5, 0.88]))
            centers.append(mid[1] % (2.0 * np.pi))
            widths.append(max(abs(mid[0] - mid[2]) * 2.0, 1e-7))
        return np.asarray(centers), np.asarray(widths)

    def vertex_data(self):
        """(vertices, prescribed normal angles) in construction order."""
        v = self.pnp.polygon.vertices
        ang = self.pnp.normal_angles()
        return v, ang


def smooth_polygon(pnp: PolygonNormalPair, epsilon, m=3, r=1.0,
                   degree_cap=10000) -> SmoothedPolygonBody:
    """C^m positively curved body interpolating a polygon-normal pair.

    Contract: the polygon is contained in the body, every vertex lies on
    the boundary with outward normal along its prescribed direction, and
    the body stays within Hausdorff distance ``epsilon`` of the polygon.
    """
    if m < 3:
        # the edge construction needs one spare order for the curvature jet
        raise PreconditionError("smooth_polygon requires m >= 3")
    body = SmoothedPolygonBody(pnp, epsilon, m=m, r=r, degree_cap=degree_cap)
    return body
