"""Planar convex bodies with positively curved boundary, via support functions.

A body is represented by its support function ``h(theta)`` together with two
derivatives.  Positive curvature means the curvature radius ``rho = h + h''``
is strictly positive, which makes the boundary parametrizable by its normal
angle: the inverse Gauss map is

    c(theta) = h(theta) n(theta) + h'(theta) tau(theta),

with n = (cos, sin) and tau = (-sin, cos).  Minkowski combination acts
linearly on support functions, which is what the interpolation engine
exploits.

Two concrete representations are provided here: truncated Fourier series
(the default, serializable form) and exact scaled/rotated/translated views.
The polygon-smoothing module contributes a third, curve-backed one.
"""
from __future__ import annotations

import numpy as np

from .config import DEFAULTS
from .errors import ConstructionError, PreconditionError

__all__ = [
    "unit_normal", "unit_tangent",
    "SupportBody", "FourierBody", "TransformedBody", "MinkowskiBody", "disk",
    "support_value", "support_d1", "support_d2", "gauss_inverse",
    "minkowski_combine", "hausdorff_distance", "strictly_nested",
    "Polygon", "PolygonNormalPair", "check_interpolable", "bisector_normals",
    "fit_support_from_curve",
]


def unit_normal(theta):
    """n(theta) = (cos theta, sin theta), shape (..., 2)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def unit_tangent(theta):
    """tau(theta) = (-sin theta, cos theta), shape (..., 2)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)


class SupportBody:
    """Base class: a compact convex body with evaluable support calculus.

    Subclasses implement ``h``, ``h1``, ``h2`` accepting numpy arrays of
    angles.  All other operations are derived.
    """

    smoothness_order: int = 2

    def h(self, theta):
        raise NotImplementedError

    def h1(self, theta):
        raise NotImplementedError

    def h2(self, theta):
        raise NotImplementedError

    # ------------------------------------------------------------------
    def rho(self, theta):
        """Curvature radius h + h'' of the boundary point with normal angle theta."""
        return self.h(theta) + self.h2(theta)

    def support_triple(self, theta):
        """(h, h', rho) in one call; subclasses override to share work."""
        return self.h(theta), self.h1(theta), self.rho(theta)

    def boundary(self, theta):
        """Inverse Gauss map c(theta), shape (..., 2)."""
        theta = np.asarray(theta, dtype=float)
        return (self.h(theta)[..., None] * unit_normal(theta)
                + self.h1(theta)[..., None] * unit_tangent(theta))

    def feature_angles(self):
        """(centers, half-widths) of angular windows with concentrated curvature.

        Used by grid checks to refine where the support function has sharp
        features; bodies without such structure return empty arrays.
        """
        return np.empty(0), np.empty(0)

    def check_grid(self, n=None):
        """Angles for invariant checks: uniform grid plus feature refinement."""
        n = n or DEFAULTS.invariant_grid
        grid = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        centers, widths = self.feature_angles()
        if len(centers):
            local = centers[:, None] + np.linspace(-1.0, 1.0, 33)[None, :] * widths[:, None]
            grid = np.concatenate([grid, local.ravel() % (2.0 * np.pi)])
        return np.sort(grid)

    def validate(self, margin=None, n=None):
        """Assert positive support and positive curvature radius on the grid."""
        margin = DEFAULTS.curvature_margin if margin is None else margin
        grid = self.check_grid(n)
        hv = self.h(grid)
        if hv.min() <= 0:
            raise ConstructionError("support function not positive: origin not interior")
        rv = self.rho(grid)
        if rv.min() <= margin:
            raise ConstructionError(
                f"curvature radius h + h'' not positive (min {rv.min():.3e})")
        return self

    # convenience algebra ------------------------------------------------
    def scaled(self, factor):
        if factor <= 0:
            raise PreconditionError("scale factor must be positive")
        return TransformedBody(self, scale=factor)

    def rotated(self, angle):
        return TransformedBody(self, angle=angle)

    def translated(self, v):
        return TransformedBody(self, shift=np.asarray(v, dtype=float))

    def mirrored_x(self):
        """Reflection across the first axis."""
        return MirroredBody(self)


class TransformedBody(SupportBody):
    """scale * R(angle) body + shift, realized on the support function.

    h_new(theta) = scale * h(theta - angle) + <shift, n(theta)>.
    """

    def __init__(self, base: SupportBody, scale=1.0, angle=0.0, shift=None):
        if isinstance(base, TransformedBody):
            # collapse chains
            shift = np.zeros(2) if shift is None else np.asarray(shift, dtype=float)
            inner_shift = _rot(base.shift * scale, angle)
            self.base = base.base
            self.scale = base.scale * scale
            self.angle = base.angle + angle
            self.shift = shift + inner_shift
        else:
            self.base = base
            self.scale = float(scale)
            self.angle = float(angle)
            self.shift = np.zeros(2) if shift is None else np.asarray(shift, dtype=float)
        self.smoothness_order = self.base.smoothness_order

    def h(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.scale * self.base.h(theta - self.angle)
                + unit_normal(theta) @ self.shift)

    def h1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.scale * self.base.h1(theta - self.angle)
                + unit_tangent(theta) @ self.shift)

    def h2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.scale * self.base.h2(theta - self.angle)
                - unit_normal(theta) @ self.shift)

    def support_triple(self, theta):
        theta = np.asarray(theta, dtype=float)
        h, h1, rho = self.base.support_triple(theta - self.angle)
        n = unit_normal(theta)
        t = unit_tangent(theta)
        return (self.scale * h + n @ self.shift,
                self.scale * h1 + t @ self.shift,
                self.scale * rho)

    def feature_angles(self):
        c, w = self.base.feature_angles()
        return (c + self.angle) % (2.0 * np.pi), w


class MirroredBody(SupportBody):
    """Reflection across the x-axis: h_new(theta) = h(-theta)."""

    def __init__(self, base: SupportBody):
        self.base = base
        self.smoothness_order = base.smoothness_order

    def h(self, theta):
        return self.base.h(-np.asarray(theta, dtype=float))

    def h1(self, theta):
        return -self.base.h1(-np.asarray(theta, dtype=float))

    def h2(self, theta):
        return self.base.h2(-np.asarray(theta, dtype=float))

    def support_triple(self, theta):
        h, h1, rho = self.base.support_triple(-np.asarray(theta, dtype=float))
        return h, -h1, rho

    def feature_angles(self):
        c, w = self.base.feature_angles()
        return (-c) % (2.0 * np.pi), w


class MinkowskiBody(SupportBody):
    """a * body_minus + b * body_plus (Minkowski), on support functions."""

    def __init__(self, a, body_minus: SupportBody, b, body_plus: SupportBody):
        if a < 0 or b < 0 or a + b <= 0:
            raise PreconditionError("require a, b >= 0 with a + b > 0")
        self.a, self.b = float(a), float(b)
        self.minus, self.plus = body_minus, body_plus
        self.smoothness_order = min(body_minus.smoothness_order, body_plus.smoothness_order)

    def h(self, theta):
        return self.a * self.minus.h(theta) + self.b * self.plus.h(theta)

    def h1(self, theta):
        return self.a * self.minus.h1(theta) + self.b * self.plus.h1(theta)

    def h2(self, theta):
        return self.a * self.minus.h2(theta) + self.b * self.plus.h2(theta)

    def support_triple(self, theta):
        hm, hm1, rm = self.minus.support_triple(theta)
        hp, hp1, rp = self.plus.support_triple(theta)
        return (self.a * hm + self.b * hp, self.a * hm1 + self.b * hp1,
                self.a * rm + self.b * rp)

    def feature_angles(self):
        c1, w1 = self.minus.feature_angles()
        c2, w2 = self.plus.feature_angles()
        return np.concatenate([c1, c2]), np.concatenate([w1, w2])


class FourierBody(SupportBody):
    """Support function as a truncated Fourier series.

    h(theta) = a0 + sum_k (cos_k cos(k theta) + sin_k sin(k theta)).
    """

    def __init__(self, a0, cos_coef=(), sin_coef=(), smoothness_order=2):
        self.a0 = float(a0)
        self.cos_coef = np.asarray(cos_coef, dtype=float)
        self.sin_coef = np.asarray(sin_coef, dtype=float)
        if self.cos_coef.shape != self.sin_coef.shape:
            raise PreconditionError("cos/sin coefficient arrays must have equal length")
        self.smoothness_order = smoothness_order

    @property
    def order(self):
        return len(self.cos_coef)

    def _trig(self, theta, deriv):
        theta = np.asarray(theta, dtype=float)
        if self.order == 0:
            base = self.a0 if deriv == 0 else 0.0
            return np.full(theta.shape, base)
        k = np.arange(1, self.order + 1)
        kt = np.multiply.outer(theta, k)
        factor = k ** deriv
        if deriv == 0:
            return self.a0 + np.cos(kt) @ self.cos_coef + np.sin(kt) @ self.sin_coef
        if deriv == 1:
            return -np.sin(kt) @ (factor * self.cos_coef) + np.cos(kt) @ (factor * self.sin_coef)
        if deriv == 2:
            return -np.cos(kt) @ (factor * self.cos_coef) - np.sin(kt) @ (factor * self.sin_coef)
        raise PreconditionError("derivative order must be 0, 1, or 2")

    def h(self, theta):
        return self._trig(theta, 0)

    def h1(self, theta):
        return self._trig(theta, 1)

    def h2(self, theta):
        return self._trig(theta, 2)

    @staticmethod
    def from_samples(theta, values, order, smoothness_order=2):
        """Least-squares Fourier fit of support samples (theta_j, h_j)."""
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(values, dtype=float)
        k = np.arange(1, order + 1)
        kt = np.multiply.outer(theta, k)
        design = np.concatenate([np.ones((len(theta), 1)), np.cos(kt), np.sin(kt)], axis=1)
        coef, *_ = np.linalg.lstsq(design, values, rcond=None)
        return FourierBody(coef[0], coef[1:order + 1], coef[order + 1:], smoothness_order)

    @staticmethod
    def from_function(fn, order, grid_factor=4, smoothness_order=2):
        """Exact-FFT projection of a callable h(theta) onto ``order`` harmonics."""
        n = max(grid_factor * order, 64)
        theta = np.arange(n) * (2.0 * np.pi / n)
        vals = fn(theta)
        spec = np.fft.rfft(vals) / n
        a0 = spec[0].real
        cos_coef = 2.0 * spec[1:order + 1].real
        sin_coef = -2.0 * spec[1:order + 1].imag
        return FourierBody(a0, cos_coef, sin_coef, smoothness_order)


def disk(radius=1.0, center=(0.0, 0.0)):
    """Euclidean disk as a FourierBody (exact: one harmonic for the center)."""
    cx, cy = center
    return FourierBody(radius, [cx], [cy], smoothness_order=99)


# ---------------------------------------------------------------------------
# free-function wrappers (module operation surface)
# ---------------------------------------------------------------------------

def support_value(body: SupportBody, theta):
    return body.h(theta)


def support_d1(body: SupportBody, theta):
    return body.h1(theta)


def support_d2(body: SupportBody, theta):
    return body.h2(theta)


def gauss_inverse(body: SupportBody, theta):
    return body.boundary(theta)


def minkowski_combine(a, body_minus, b, body_plus) -> MinkowskiBody:
    return MinkowskiBody(a, body_minus, b, body_plus)


def _support_on(body_or_polygon, grid):
    if isinstance(body_or_polygon, Polygon):
        return body_or_polygon.support(grid)
    return body_or_polygon.h(grid)


def _union_grid(a, b, n):
    grid = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    parts = [grid]
    for obj in (a, b):
        if isinstance(obj, SupportBody):
            c, w = obj.feature_angles()
            if len(c):
                parts.append((c[:, None]
                              + np.linspace(-1, 1, 17)[None, :] * w[:, None]).ravel()
                             % (2.0 * np.pi))
        else:
            parts.append(obj.normal_angles())
    return np.sort(np.concatenate(parts))


def hausdorff_distance(a, b, n=None):
    """Hausdorff distance between convex bodies / polygons.

    For convex sets this equals the sup-norm gap of support functions; it
    is evaluated on a dense angular grid (plus any feature windows), so the
    result carries a grid-resolution error of order (2 pi / n)^2 times the
    curvature scale.
    """
    n = n or max(DEFAULTS.invariant_grid, DEFAULTS.distance_grid)
    grid = _union_grid(a, b, n)
    return float(np.abs(_support_on(a, grid) - _support_on(b, grid)).max())


def strictly_nested(inner, outer, n=None, margin=0.0):
    """True iff min over the grid of (sigma_outer - sigma_inner) > margin."""
    n = n or DEFAULTS.invariant_grid
    grid = _union_grid(inner, outer, n)
    gap = _support_on(outer, grid) - _support_on(inner, grid)
    return bool(gap.min() > margin)


def support_gap_range(inner, outer, n=None):
    """(min, max) of sigma_outer - sigma_inner over the grid."""
    n = n or DEFAULTS.invariant_grid
    grid = _union_grid(inner, outer, n)
    gap = _support_on(outer, grid) - _support_on(inner, grid)
    return float(gap.min()), float(gap.max())


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------

def _rot(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    v = np.asarray(v, dtype=float)
    return np.stack([c * v[..., 0] - s * v[..., 1],
                     s * v[..., 0] + c * v[..., 1]], axis=-1)


class Polygon:
    """Strictly convex polygon; vertices stored counterclockwise.

    Clockwise input (the convention of several constructions here) is
    reversed on ingestion, so downstream code sees one orientation.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise PreconditionError("polygon needs >= 3 planar vertices")
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area2 < 0:
            v = v[::-1].copy()
        cross = self._turn_products(v)
        if np.any(cross <= 0):
            raise PreconditionError("vertices are not in strictly convex position")
        self.vertices = v

    @staticmethod
    def _turn_products(v):
        e = np.roll(v, -1, axis=0) - v
        e_prev = np.roll(e, 1, axis=0)
        return e_prev[:, 0] * e[:, 1] - e_prev[:, 1] * e[:, 0]

    def __len__(self):
        return len(self.vertices)

    def edges(self):
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def edge_normal_angles(self):
        """Outward normal angle of each edge (CCW orientation: rotate edge by -pi/2)."""
        e = self.edges()
        return np.arctan2(-e[:, 0], e[:, 1]) % (2.0 * np.pi)

    def normal_angles(self):
        return self.edge_normal_angles()

    def support(self, theta):
        nvec = unit_normal(theta)
        return (nvec @ self.vertices.T).max(axis=-1)

    def contains(self, points, tol=0.0):
        """Vertex-halfplane membership test."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices
        e = self.edges()
        rel = points[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return np.all(cross >= -tol, axis=1)

    def scaled(self, factor):
        return Polygon(self.vertices * factor)

    def rotated(self, angle):
        return Polygon(_rot(self.vertices, angle))

    def mirrored_x(self):
        return Polygon(self.vertices * np.array([1.0, -1.0]))

    def circumradius(self):
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def inradius(self):
        """Distance from the origin to the nearest edge line (origin assumed interior)."""
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        e = w - v
        le = np.linalg.norm(e, axis=1)
        return float(np.abs(e[:, 0] * v[:, 1] - e[:, 1] * v[:, 0]).__truediv__(le).min())


class PolygonNormalPair:
    """A convex polygon with one prescribed outward unit normal per vertex."""

    def __init__(self, polygon: Polygon, normals, require_interpolable=True):
        self.polygon = polygon
        normals = np.asarray(normals, dtype=float)
        if normals.shape != polygon.vertices.shape:
            raise PreconditionError("one normal per vertex required")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms <= 0):
            raise PreconditionError("normals must be nonzero")
        self.normals = normals / norms[:, None]
        if require_interpolable:
            ok, diag = check_interpolable(self, full=True)
            if not ok:
                raise PreconditionError(f"polygon-normal pair not interpolable: {diag}")

    def normal_angles(self):
        return np.arctan2(self.normals[:, 1], self.normals[:, 0]) % (2.0 * np.pi)


def check_interpolable(pnp: PolygonNormalPair, full=False):
    """Angle condition: each normal makes an angle in (pi/2, pi) with both
    neighboring faces (equivalently lies strictly inside the normal cone).

    Returns a bool, or (bool, diagnostics) when ``full`` is set; diagnostics
    list the offending vertices with the two face angles.
    """
    v = pnp.polygon.vertices
    nrm = pnp.normals
    e_next = np.roll(v, -1, axis=0) - v      # face leaving vertex i
    e_prev = v - np.roll(v, 1, axis=0)       # face arriving at vertex i
    bad = []
    for i in range(len(v)):
        angles = []
        for face in (e_next[i], -e_prev[i]):   # both faces pointing away from the vertex
            cosang = np.dot(face, nrm[i]) / np.linalg.norm(face)
            angles.append(float(np.arccos(np.clip(cosang, -1.0, 1.0))))
        if not all(np.pi / 2 < a < np.pi for a in angles):
            bad.append((i, angles))
    ok = not bad
    return (ok, bad) if full else ok


def bisector_normals(polygon: Polygon) -> PolygonNormalPair:
    """Normals along the external angle bisector at each vertex."""
    v = polygon.vertices
    e_next = np.roll(v, -1, axis=0) - v
    e_prev = v - np.roll(v, 1, axis=0)
    u_next = e_next / np.linalg.norm(e_next, axis=1)[:, None]
    u_prev = e_prev / np.linalg.norm(e_prev, axis=1)[:, None]
    bis = -(u_next - u_prev)
    bis /= np.linalg.norm(bis, axis=1)[:, None]
    return PolygonNormalPair(polygon, bis)


# ---------------------------------------------------------------------------
# support recovery from boundary samples
# ---------------------------------------------------------------------------

def fit_support_from_curve(points, tangents, order=None, tol=None,
                           smoothness_order=2, max_order=4096):
    """Recover a FourierBody from samples of a closed strictly convex curve.

    Parameters
    ----------
    points, tangents : (N, 2) arrays
        Ordered samples tracing the boundary once, positively oriented
        (counterclockwise), with the curve tangent at each sample.
    order : int, optional
        Fourier order; when omitted, doubled from 64 until the round-trip
        error of the sample points through the inverse Gauss map drops
        below ``tol`` (default ``config.fit_tol``), up to ``max_order``.

    The normal angle at each sample is the angle of the outward normal
    (tangent rotated by -pi/2); monotonicity of those angles is a
    convexity requirement and is validated.
    """
    tol = DEFAULTS.fit_tol if tol is None else tol
    points = np.asarray(points, dtype=float)
    tangents = np.asarray(tangents, dtype=float)
    theta = np.arctan2(-tangents[:, 0], tangents[:, 1])
    theta = np.unwrap(theta)
    dth = np.diff(theta)
    if np.any(dth <= 0) or not (5.0 < theta[-1] - theta[0] <= 2.0 * np.pi + 1e-9):
        raise ConstructionError("samples do not trace a convex positively oriented curve")
    hvals = np.einsum("ij,ij->i", points, unit_normal(theta))

    def build(p):
        return FourierBody.from_samples(theta, hvals, p, smoothness_order)

    if order is not None:
        body = build(order)
    else:
        p = 64
        while True:
            body = build(p)
            err = np.abs(body.boundary(theta) - points).max()
            if err <= tol or p >= max_order:
                break
            p *= 2
    err = np.abs(body.boundary(theta) - points).max()
    if err > tol:
        raise ConstructionError(
            f"support fit error {err:.2e} exceeds tolerance {tol:.2e}")
    return body.validate()
