"""Generators for the nested-set geometries behind each pathology.

Every generator returns the polygon-normal pairs (or bodies) of a strictly
decreasing family, emitted outermost-first / innermost-last, plus the
ground-truth metadata used to verify the designed behavior (stop points,
anchor points, triangles).  ``build_model`` turns a generator name into an
evaluable interpolant: it smooths each level, reverses the order, appends
outer padding disks, and runs the interpolation pipeline in truncated
doubly-infinite mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULTS
from .errors import ConstructionError, PreconditionError
from .geometry import (FourierBody, Polygon, PolygonNormalPair, disk,
                       strictly_nested, support_gap_range, unit_normal)
from .interpolant import Interpolant, assign_values, glue, precondition
from .smoothing import smooth_polygon

__all__ = [
    "altmin_sequence", "newton_sequence", "tikhonov_sequence", "thom_sequence",
    "build_model", "GENERATOR_NAMES", "SequenceData", "ThomData",
]


def _rot(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    v = np.asarray(v, dtype=float)
    return np.stack([c * v[..., 0] - s * v[..., 1],
                     s * v[..., 0] + c * v[..., 1]], axis=-1)


def _pair(vertices, normals):
    """PolygonNormalPair with normals permuted along with CCW normalization."""
    vertices = np.asarray(vertices, dtype=float)
    normals = np.asarray(normals, dtype=float)
    area2 = np.sum(vertices[:, 0] * np.roll(vertices[:, 1], -1)
                   - np.roll(vertices[:, 0], -1) * vertices[:, 1])
    if area2 < 0:
        vertices = vertices[::-1]
        normals = normals[::-1]
    return PolygonNormalPair(Polygon(vertices), normals)


@dataclass
class SequenceData:
    """A decreasing polygon family plus its designed stop-point metadata."""

    pairs: list                       # outermost first
    stop_points: np.ndarray           # designed distinguished vertex images
    stop_normals: np.ndarray          # unit gradient directions there
    levels: np.ndarray                # generator index n of each pair
    x0: np.ndarray | None = None      # designed initialization
    anchor: np.ndarray | None = None  # Tikhonov anchor point
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# pentagon family (alternating minimization / line search / Newton flow)
# ---------------------------------------------------------------------------

def _corner_bisectors(verts):
    """External-bisector normal of each corner of a vertex loop."""
    v = np.asarray(verts, dtype=float)
    u_next = np.roll(v, -1, axis=0) - v
    u_prev = np.roll(v, 1, axis=0) - v
    u_next /= np.linalg.norm(u_next, axis=1)[:, None]
    u_prev /= np.linalg.norm(u_prev, axis=1)[:, None]
    bis = -(u_next + u_prev)
    return bis / np.linalg.norm(bis, axis=1)[:, None]


def _pentagon(n):
    """Vertices A, B, C, D, E and their normals (bisectors, horizontal at B)."""
    q = 0.25 + 1.0 / n
    A = (q, q)
    B = (0.25 + 0.5 / (n - 1) + 0.5 / n, 0.25 + 0.5 / n + 0.5 / (n + 1))
    C = (q, -q)
    D = (-q, -q)
    E = (-q, q)
    verts = np.array([A, B, C, D, E])
    normals = _corner_bisectors(verts)
    normals[1] = (1.0, 0.0)          # horizontal at the distinguished vertex
    return verts, normals


def altmin_sequence(n_max: int, rotation_step=np.pi / 2.0) -> SequenceData:
    """Quarter-turn spiral of pentagons (block-coordinate descent geometry).

    Pentagon n (n = 2..n_max) is rotated by (n-2) * pi/2, which chains the
    distinguished B-vertices: consecutive images share alternately the
    second and first coordinate, so each exact partial minimization step
    lands on the next one.  The first pentagon is unrotated and B_2 =
    (1, 2/3) is the designed initialization.
    """
    if n_max < 3:
        raise PreconditionError("n_max must be >= 3")
    pairs, stops, stop_normals, levels = [], [], [], []
    for n in range(2, n_max + 1):
        verts, normals = _pentagon(n)
        ang = (n - 2) * rotation_step
        pairs.append(_pair(_rot(verts, ang), _rot(normals, ang)))
        stops.append(_rot(verts[1], ang))
        stop_normals.append(_rot(normals[1], ang))
        levels.append(n)
    # nesting: pentagon(n) inside the square A C D E of pentagon(n-1)
    for outer, inner in zip(pairs[:-1], pairs[1:]):
        if not outer.polygon.contains(inner.polygon.vertices).all():
            raise ConstructionError("pentagon nesting violated")
    return SequenceData(pairs, np.array(stops), np.array(stop_normals),
                        np.array(levels), x0=np.array([1.0, 2.0 / 3.0]))


def newton_sequence(n_max: int) -> SequenceData:
    """Mirror variant of the pentagon family (continuous Newton geometry).

    Instead of quarter rotations, pentagon n is reflected across the first
    axis for odd n; all B-vertex normals stay +e_x, so the whole designed
    stop chain shares one gradient direction, the invariant of the Newton
    flow.
    """
    if n_max < 3:
        raise PreconditionError("n_max must be >= 3")
    pairs, stops, stop_normals, levels = [], [], [], []
    for n in range(2, n_max + 1):
        verts, normals = _pentagon(n)
        if n % 2 == 1:
            verts = verts * np.array([1.0, -1.0])
            normals = normals * np.array([1.0, -1.0])
        pairs.append(_pair(verts, normals))
        stops.append(verts[1])
        stop_normals.append(normals[1])
        levels.append(n)
    return SequenceData(pairs, np.array(stops), np.array(stop_normals),
                        np.array(levels), x0=np.array([1.0, 2.0 / 3.0]))


# ---------------------------------------------------------------------------
# Tikhonov pentagon family
# ---------------------------------------------------------------------------

def tikhonov_sequence(n_max: int, anchor=(7.0, 0.0)) -> SequenceData:
    """Pentagons with an off-axis vertex B_n = (2/n + 1/n^2, -1/n).

    The normal at B_n points at the anchor P = (7, 0), which lies in the
    interior of the normal cone at B_n for every n; mirroring even levels
    across the x-axis makes the designed regularization-path stops
    alternate, with second coordinate (-1)^n / n.
    """
    if n_max < 2:
        raise PreconditionError("n_max must be >= 2")
    P = np.asarray(anchor, dtype=float)
    pairs, stops, stop_normals, levels = [], [], [], []
    for n in range(1, n_max + 1):
        q = 2.0 / n
        A = (q, q)
        B = (q + 1.0 / n ** 2, -1.0 / n)
        C = (q, -q)
        D = (-q, -q)
        E = (-q, q)
        verts = np.array([A, B, C, D, E])
        nB = P - np.asarray(B)
        normals = _corner_bisectors(verts)
        normals[1] = nB / np.linalg.norm(nB)
        if n % 2 == 0:
            verts = verts * np.array([1.0, -1.0])
            normals = normals * np.array([1.0, -1.0])
        pairs.append(_pair(verts, normals))
        stops.append(verts[1])
        stop_normals.append(normals[1])
        levels.append(n)
    return SequenceData(pairs, np.array(stops), np.array(stop_normals),
                        np.array(levels), anchor=P)


# ---------------------------------------------------------------------------
# Thom hexagon family (secants of gradient curves)
# ---------------------------------------------------------------------------

@dataclass
class ThomData:
    """Smoothed hexagon family with the rotated-triangle metadata."""

    bodies: list                       # decreasing, outermost first
    alpha_angle: float                 # angle B-O-C
    m: int                             # rotations per full sweep
    scale_homothety: float             # OC'/OC
    scale_rotation: float              # shrink applied with each rotation
    B: np.ndarray
    C: np.ndarray
    C_prime: np.ndarray
    w: np.ndarray                      # prescribed normal direction at B
    v: np.ndarray                      # unit vector orthogonal to [BC]
    triangles: list = field(default_factory=list)  # per rotation: dict(B, C, Cp, scale)
    hexagon: PolygonNormalPair | None = None
    epsilon: float = 0.0


def _thom_hexagon():
    A = np.array([-5.0, 0.0])
    B = np.array([-5.0 / 3.0 - 25.0 / 16.0, 10.0 / 3.0 + 5.0 / 4.0])
    C = np.array([-5.0 / 2.0, 5.0])
    D = np.array([0.0, 5.0])
    E = np.array([5.0, 0.0])
    F = np.array([0.0, -5.0])
    verts = np.array([A, B, C, D, E, F])
    # bisector normals everywhere except at B, where the normal w is
    # parallel to the line (DE)
    poly = Polygon(verts)
    from .geometry import bisector_normals
    bis = bisector_normals(poly)
    order = {tuple(np.round(v, 9)): i for i, v in enumerate(bis.polygon.vertices)}
    normals = np.empty_like(verts)
    for i, v in enumerate(verts):
        normals[i] = bis.normals[order[tuple(np.round(v, 9))]]
    de = (E - D) / np.linalg.norm(E - D)           # direction (1, -1)/sqrt2
    w = np.array([-de[0], -de[1]])                 # outward at B: up-left
    if w[1] < 0:
        w = -w
    normals[1] = w
    return verts, normals, w


def thom_sequence(cycles: int, epsilon_factor=0.1) -> ThomData:
    """Rotated, shrinking copies of the smoothed hexagon.

    ``cycles`` counts full 2 pi sweeps; each sweep consists of m rotation
    steps by 2 pi / m, m = ceil(2 pi / alpha) + 1 with alpha the angle
    B-O-C, so consecutive triangles overlap.  Each rotation contributes the
    homothetic pair (S, alpha_h S) whose interpolation has exactly
    homothetic level sets, the setting of the triangle-exit lemma.
    """
    if cycles < 1:
        raise PreconditionError("cycles must be >= 1")
    verts, normals, w = _thom_hexagon()
    B, C = verts[1], verts[2]
    # C' = line(B, w) intersected with segment [O, C]
    M = np.column_stack([w, -C])
    t, s = np.linalg.solve(M, -B)
    if not (0.0 < s < 1.0):
        raise ConstructionError("C' not on segment [O, C]")
    C_prime = s * C
    alpha_h = float(s)                              # OC'/OC
    alpha_angle = float(np.arccos(np.dot(B, C) / (np.linalg.norm(B) * np.linalg.norm(C))))
    m = int(np.ceil(2.0 * np.pi / alpha_angle)) + 1
    pnp = _pair(verts, normals)
    gap = (1.0 - alpha_h) * pnp.polygon.inradius()
    eps = epsilon_factor * gap
    body = smooth_polygon(pnp, eps, m=3)
    # densify to a Fourier representation (large smoothing scale, low order)
    dense = FourierBody.from_function(lambda th: body.h(th), order=256,
                                      smoothness_order=3)
    grid = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    err = max(np.abs(dense.h(grid) - body.h(grid)).max(),
              np.abs(dense.h2(grid) - body.h2(grid)).max())
    base = dense if err < 1e-9 * pnp.polygon.circumradius() else body
    step = 2.0 * np.pi / m
    ratio = float((base.h(grid) / base.h(grid - step)).min())
    beta = alpha_h * ratio * 0.98
    v = (C - B) / np.linalg.norm(C - B)
    v = np.array([-v[1], v[0]])
    if np.dot(v, B) < 0:
        v = -v
    bodies, triangles = [], []
    n_rot = cycles * m
    for k in range(n_rot):
        scale = beta ** k
        ang = k * step
        bodies.append(base.scaled(scale).rotated(ang) if (scale != 1.0 or ang != 0.0)
                      else base)
        bodies.append(base.scaled(scale * alpha_h).rotated(ang))
        triangles.append(dict(B=_rot(B, ang) * scale, C=_rot(C, ang) * scale,
                              Cp=_rot(C_prime, ang) * scale, scale=scale,
                              angle=ang))
    return ThomData(bodies, alpha_angle, m, alpha_h, beta, B, C, C_prime, w, v,
                    triangles, pnp, eps)


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

GENERATOR_NAMES = ("altmin", "exact-line-search", "tikhonov", "thom", "newton",
                   "bregman", "central-path", "hessian-riemannian")


@dataclass
class Model:
    """An interpolant together with its generator metadata."""

    interp: Interpolant
    kind: str
    data: object
    smoothing_eps: np.ndarray | None = None   # per level (outermost first)
    bodies: list | None = None                # smoothed levels, outermost first


def _smooth_levels(pairs, k, eps_factor=0.1, degree_cap=None):
    """Smooth each polygon level; tolerance is a fraction of the gap to the
    enclosing level so nesting survives the outward bulge."""
    gaps = []
    for outer, inner in zip(pairs[:-1], pairs[1:]):
        lo, _ = support_gap_range(inner.polygon, outer.polygon, n=2048)
        if lo <= 0:
            raise ConstructionError("polygon levels are not strictly nested")
        gaps.append(lo)
    eps = np.array([gaps[0]] + gaps) * eps_factor      # outermost reuses first gap
    bodies = []
    for pnp, e in zip(pairs, eps):
        cap = degree_cap
        if cap is None:
            edge = np.linalg.norm(pnp.polygon.edges(), axis=1).max()
            cap = int(max(20000, 40 * edge / e * (pnp.polygon.circumradius() + 1)))
        m = max(3, k)
        bodies.append(smooth_polygon(pnp, e, m=m, degree_cap=cap))
    return bodies, eps


def build_model(kind: str, n_max=40, k=2, cycles=6, post_compose_g=False,
                eps_factor=0.1) -> Model:
    """Build the interpolant for a named generator.

    The legendre-backed generators (bregman / central-path /
    hessian-riemannian) are built by :mod:`smoothconvex.legendre`; this
    driver handles the polygon families, reversing the decreasing sequence
    and padding it with two outer disks before interpolating in truncated
    mode.
    """
    if kind in ("bregman", "central-path", "hessian-riemannian"):
        from .legendre import oscillating_legendre
        model = oscillating_legendre(theta=np.pi / 8, k=k, l=3, j_max=n_max)
        return Model(model.interp, kind, model)
    if kind == "exact-line-search":
        kind_actual = "altmin"
    else:
        kind_actual = kind
    if kind_actual == "altmin":
        data = altmin_sequence(n_max)
    elif kind_actual == "newton":
        data = newton_sequence(n_max)
    elif kind_actual == "tikhonov":
        data = tikhonov_sequence(n_max)
    elif kind_actual == "thom":
        data = thom_sequence(cycles)
    else:
        raise PreconditionError(f"unknown generator '{kind}' "
                                f"(expected one of {GENERATOR_NAMES})")
    if kind_actual == "thom":
        bodies_desc = data.bodies
        eps = np.full(len(bodies_desc), data.epsilon)
    else:
        bodies_desc, eps = _smooth_levels(data.pairs, k, eps_factor)
    increasing = list(reversed(bodies_desc))
    grid = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    outer_r = float(increasing[-1].h(grid).max())
    padding = [disk(1.35 * outer_r), disk(1.9 * outer_r)]
    seq = precondition(increasing + padding, index_mode="Z")
    schedule = assign_values(seq)
    interp = glue(seq, schedule, k=k, post_compose_g=post_compose_g)
    return Model(interp, kind, data, eps, bodies_desc)
