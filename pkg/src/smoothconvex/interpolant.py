"""Smooth convex interpolation of a strictly nested family of convex bodies.

Given bodies T_0 subset int T_1 subset ..., the construction proceeds in
four steps:

1. *Preconditioning*: choose eps_i in (0,1) and insert the scaled copies
   (1+eps_i) T_i and (1-eps_{i+1}) T_{i+1} between consecutive bodies,
   giving the tripled sequence S_{3i} = T_i, S_{3i+1}, S_{3i+2}.
2. *Value assignation*: lambda_0 = 1, lambda_1 = 2, and
   lambda_{i+1} = lambda_i + K_i (lambda_i - lambda_{i-1}) where K_i is the
   worst-direction ratio of consecutive support gaps.  This makes the
   per-direction slopes (sigma_{i+1} - sigma_i)/(lambda_{i+1} - lambda_i)
   nonincreasing, the key to convexity, and K_{3i} = 1 exactly, the key to
   smooth gluing.
3. *Ring maps*: on [lambda_{3i}, lambda_{3i+3}] the map
   G(lambda, theta) = a(lambda) c_-(theta) + b(lambda) c_+(theta)
   interpolates the ring between T_i and T_{i+1}; (a, b) are the Bernstein
   smoothing of the piecewise-affine coefficient path, so G matches values
   and first derivatives across rings while derivatives 2..k vanish there.
4. *Inversion*: f(x) is the lambda-coordinate of G^{-1}(x); gradient and
   Hessian come from the closed-form inverse-Jacobian expressions, whose
   denominators are positive by the monotonicity condition.

For index mode "N" the innermost body is a disk (auto-prepended) and the
function is extended inside it via a concave radial profile, making f
proportional to |x|^2 near the minimizer.  For mode "Z" (a truncated
doubly-infinite family) evaluation inside the innermost body is refused.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BPoly

from .bernstein import BernsteinCurve, PiecewiseAffineSpec, bezier_values, smooth_piecewise
from .config import DEFAULTS
from .errors import ConstructionError, DomainError, NumericError, PreconditionError
from .geometry import SupportBody, disk, unit_normal, unit_tangent

__all__ = [
    "PreconditionedSequence", "precondition", "ValueSchedule", "assign_values",
    "Ring", "Interpolant", "EvalResult", "InnerExtension", "build_inner_extension",
    "glue", "build_interpolant", "verify_convexity", "ConvexityReport",
]


# ---------------------------------------------------------------------------
# preconditioning
# ---------------------------------------------------------------------------

@dataclass
class PreconditionedSequence:
    """Tripled sequence S_j with its eps_i and index mode ("N" or "Z")."""

    tbodies: list                 # the original bodies T_i (innermost first)
    eps: np.ndarray               # eps_i, one per T_i
    index_mode: str = "Z"
    prepended: int = 0            # number of auto-prepended inner disks

    def __post_init__(self):
        if self.index_mode not in ("N", "Z"):
            raise PreconditionError("index_mode must be 'N' or 'Z'")
        if len(self.eps) != len(self.tbodies):
            raise PreconditionError("need one eps per body")

    def n_rings(self):
        return len(self.tbodies) - 1

    def sbody(self, j):
        """S_j of the tripled sequence, j = 0 .. 3*(len-1)."""
        i, r = divmod(j, 3)
        if r == 0:
            return self.tbodies[i]
        if r == 1:
            return self.tbodies[i].scaled(1.0 + self.eps[i])
        return self.tbodies[i + 1].scaled(1.0 - self.eps[i + 1])

    def n_sbodies(self):
        return 3 * self.n_rings() + 1


def _margin_ratio(inner: SupportBody, outer: SupportBody, grid):
    hi = inner.h(grid)
    ho = outer.h(grid)
    if np.any(hi <= 0):
        raise PreconditionError("origin must be interior to every body")
    gap = ho - hi
    if gap.min() <= 0:
        raise PreconditionError("bodies are not strictly nested")
    return float((gap / (ho + hi)).min())


def _pair_grid(a: SupportBody, b: SupportBody, n):
    grid = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    parts = [grid]
    for body in (a, b):
        c, w = body.feature_angles()
        if len(c):
            parts.append((c[:, None] + np.linspace(-1, 1, 25)[None, :] * w[:, None]).ravel()
                         % (2.0 * np.pi))
    return np.sort(np.concatenate(parts))


def precondition(bodies, index_mode="Z", eps_max=None, safety=None,
                 grid_n=None) -> PreconditionedSequence:
    """Choose the eps_i of the tripled sequence.

    alpha_i is the largest margin with (1+alpha) T_i inside
    (1-alpha) int T_{i+1}, shrunk by a safety factor and capped at
    ``eps_max``; then eps_{i+1} = min(alpha_i, alpha_{i+1}) and
    eps_0 = alpha_0.

    In mode "N" two disks are prepended so that the innermost ring starts
    from a disk with eps_0 = 2/3 exactly (the inner radial extension is
    glued against that ring).
    """
    eps_max = DEFAULTS.eps_max if eps_max is None else eps_max
    safety = DEFAULTS.eps_safety if safety is None else safety
    grid_n = grid_n or DEFAULTS.invariant_grid
    bodies = list(bodies)
    if len(bodies) < 2:
        raise PreconditionError("need at least two bodies")
    prepended = 0
    if index_mode == "N":
        grid = bodies[0].check_grid(grid_n)
        inr = float(bodies[0].h(grid).min())
        if inr <= 0:
            raise PreconditionError("origin must be interior to the innermost body")
        r = inr / 9.0
        bodies = [disk(r), disk(5.5 * r)] + bodies
        prepended = 2
    # one shared feature-aware grid; every body evaluated exactly once
    parts = [np.linspace(0.0, 2.0 * np.pi, grid_n, endpoint=False)]
    for body in bodies:
        c, w = body.feature_angles()
        if len(c):
            parts.append((c[:, None] + np.linspace(-1, 1, 25)[None, :] * w[:, None]).ravel()
                         % (2.0 * np.pi))
    grid = np.sort(np.concatenate(parts)) if len(parts) > 1 else parts[0]
    hvals = [body.h(grid) for body in bodies]
    alphas = []
    for hi_, ho_ in zip(hvals[:-1], hvals[1:]):
        if hi_.min() <= 0:
            raise PreconditionError("origin must be interior to every body")
        gap = ho_ - hi_
        if gap.min() <= 0:
            raise PreconditionError("bodies are not strictly nested")
        alphas.append(min(eps_max, safety * float((gap / (ho_ + hi_)).min())))
    if index_mode == "N":
        # the prepended disk pair (radii r, 5.5r) admits the exact margin 2/3
        # required by the inner radial extension; no safety shrink there
        alphas[0] = 2.0 / 3.0
    eps = np.empty(len(bodies))
    eps[0] = alphas[0]
    for i in range(1, len(bodies)):
        eps[i] = min(alphas[i - 1], alphas[min(i, len(alphas) - 1)])
    return PreconditionedSequence(bodies, eps, index_mode, prepended)


# ---------------------------------------------------------------------------
# value assignation
# ---------------------------------------------------------------------------

@dataclass
class ValueSchedule:
    lambdas: np.ndarray          # lambda_j over the tripled index
    K: np.ndarray                # K_j for j = 1 .. len - 2 (K[0] unused)

    def __post_init__(self):
        if np.any(np.diff(self.lambdas) <= 0):
            raise ConstructionError("lambda values must be strictly increasing")

    @property
    def lambda_min(self):
        return float(self.lambdas[0])

    @property
    def lambda_max(self):
        return float(self.lambdas[-1])


def _golden_max(f, lo, hi, iters=40):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return max(fc, fd)


class SupportCache:
    """Support values of the tripled sequence on one shared angular grid.

    Pure scalings are resolved through their base body, and rotations whose
    angle is a multiple of the (uniform) grid step become index rolls, so a
    long family of scaled/rotated copies costs one base evaluation.
    """

    def __init__(self, seq: PreconditionedSequence, grid):
        self.seq = seq
        self.grid = np.asarray(grid, dtype=float)
        n = len(self.grid)
        step = 2.0 * np.pi / n
        self.uniform = bool(np.allclose(np.diff(self.grid), step, rtol=0, atol=1e-12))
        # keyed by id(); values keep the body alive so ids stay unique
        self._by_id = {}
        self._by_index = {}

    def _eval(self, body):
        key = id(body)
        if key in self._by_id:
            return self._by_id[key][1]
        from .geometry import TransformedBody
        if isinstance(body, TransformedBody) and not body.shift.any():
            if body.angle == 0.0:
                val = body.scale * self._eval(body.base)
            elif self.uniform:
                k = body.angle / (2.0 * np.pi / len(self.grid))
                if abs(k - round(k)) < 1e-9:
                    val = body.scale * np.roll(self._eval(body.base), round(k) % len(self.grid))
                else:
                    val = body.h(self.grid)
            else:
                val = body.h(self.grid)
        else:
            val = body.h(self.grid)
        self._by_id[key] = (body, val)
        return val

    def s_support(self, j):
        if j not in self._by_index:
            self._by_index[j] = self._eval(self.seq.sbody(j))
        return self._by_index[j]


def _schedule_grid(seq: PreconditionedSequence, grid_n):
    """Uniform grid plus every body's feature windows (union, sorted)."""
    parts = [np.linspace(0.0, 2.0 * np.pi, grid_n, endpoint=False)]
    uniform = True
    for body in seq.tbodies:
        c, w = body.feature_angles()
        if len(c):
            uniform = False
            parts.append((c[:, None] + np.linspace(-1, 1, 25)[None, :] * w[:, None]).ravel()
                         % (2.0 * np.pi))
    if uniform:
        return parts[0]
    return np.sort(np.concatenate(parts))


def assign_values(seq: PreconditionedSequence, grid_n=None, golden=True,
                  anchor=None) -> ValueSchedule:
    """Two anchored values, then the gap-ratio recursion both ways.

    K_j is the maximum over directions of the ratio of consecutive support
    gaps; by the homothety structure of the tripled sequence K_{3j} = 1
    exactly, and the other two per ring are computed on the shared angular
    grid with golden-section polish at the argmax.  A one-ulp-scale
    inflation keeps the slope monotonicity certificate safe against grid
    misses.

    ``anchor`` is the tripled index j0 with lambda_{j0} = 1 and
    lambda_{j0+1} = 2.  Mode "N" anchors at the innermost pair (the inner
    radial extension needs the unit gap there).  For a truncated
    doubly-infinite family the anchor belongs at the outer, artificially
    added end: going inward the gaps contract by the reciprocal ratios and
    the values stay bounded, mirroring the bounded-below tail of the
    untruncated construction.  Anchoring such a family at the innermost
    pair instead would blow lambda up geometrically outward.
    """
    grid_n = grid_n or DEFAULTS.invariant_grid
    n_s = seq.n_sbodies()
    grid = _schedule_grid(seq, grid_n)
    cache = SupportCache(seq, grid)
    K = np.ones(max(n_s - 1, 1))
    for j in range(1, n_s - 1):
        if j % 3 == 0:
            K[j] = 1.0
            continue
        h0 = cache.s_support(j - 1)
        h1 = cache.s_support(j)
        h2 = cache.s_support(j + 1)
        num = h2 - h1
        den = h1 - h0
        if den.min() <= 0 or num.min() <= 0:
            raise ConstructionError(f"support gaps not positive at tripled index {j}")
        ratios = num / den
        kmax = float(ratios.max())
        i0 = int(np.argmax(ratios))
        lo = grid[max(i0 - 1, 0)]
        hi = grid[min(i0 + 1, len(grid) - 1)]
        if golden and hi > lo:
            b_prev, b_mid, b_next = (seq.sbody(j - 1), seq.sbody(j), seq.sbody(j + 1))

            def ratio_at(t):
                th = np.array([t])
                return float((b_next.h(th) - b_mid.h(th)) / (b_mid.h(th) - b_prev.h(th)))

            kmax = max(kmax, _golden_max(ratio_at, lo, hi, iters=24))
        K[j] = kmax * (1.0 + 1e-12)
    if anchor is None:
        anchor = 0 if seq.index_mode == "N" else max(n_s - 4, 0)
    anchor = int(min(max(anchor, 0), n_s - 2))
    lambdas = np.empty(n_s)
    lambdas[anchor] = 1.0
    lambdas[anchor + 1] = 2.0
    for j in range(anchor + 1, n_s - 1):
        lambdas[j + 1] = lambdas[j] + K[j] * (lambdas[j] - lambdas[j - 1])
    for j in range(anchor, 0, -1):
        lambdas[j - 1] = lambdas[j] - (lambdas[j + 1] - lambdas[j]) / K[j]
    return ValueSchedule(lambdas, K)


# ---------------------------------------------------------------------------
# rings
# ---------------------------------------------------------------------------

class Ring:
    """One glued piece: G(lambda, theta) on [lam0, lam3] between two bodies."""

    def __init__(self, body_minus: SupportBody, body_plus: SupportBody,
                 knots, e0, e1, k):
        self.inner = body_minus
        self.outer = body_plus
        self.knots = tuple(float(v) for v in knots)
        self.e0, self.e1 = float(e0), float(e1)
        self.k = int(k)
        lam0, lam1, lam2, lam3 = self.knots
        spec = PiecewiseAffineSpec(
            q0=[1.0, 0.0], q1=[0.0, 1.0],
            lambda_minus=lam0, lambda_0=lam1, lambda_1=lam2, lambda_plus=lam3,
            e0=e0, e1=e1, smoothness_order=k)
        curve = smooth_piecewise(spec)
        self.coeff = curve
        d = curve.degree
        self.width = lam3 - lam0
        self._ctrl0 = curve.control_values                      # (d+1, 2)
        self._ctrl1 = d * np.diff(self._ctrl0, axis=0) / self.width
        self._ctrl2 = (d - 1.0) * np.diff(self._ctrl1, axis=0) / self.width
        self.degree = d

    # -- coefficient evaluation (vectorized over lambda) -------------------
    def _s(self, lam):
        return (np.asarray(lam, dtype=float) - self.knots[0]) / self.width

    def ab(self, lam):
        return bezier_values(self._ctrl0, self._s(lam))

    def ab1(self, lam):
        return bezier_values(self._ctrl1, self._s(lam))

    def ab2(self, lam):
        return bezier_values(self._ctrl2, self._s(lam))

    def frame_data(self, lam, theta):
        """Support-frame quantities at (lambda, theta), vectorized.

        Returns dict with G components in the (n, tau) frame plus the
        partial-derivative scalars used by the inverse formulas:
        hn = <G, n>, ht = <G, tau>, alpha = <dG/dlam, n>,
        gamma = <dG/dlam, tau>, beta = <dG/dtheta, tau>,
        alpha2 = <d2G/dlam2, n>.
        """
        ab = self.ab(lam)
        ab1 = self.ab1(lam)
        a, b = ab[..., 0], ab[..., 1]
        a1, b1 = ab1[..., 0], ab1[..., 1]
        hm, hm1, rm = self.inner.support_triple(theta)
        hp, hp1, rp = self.outer.support_triple(theta)
        return dict(
            a=a, b=b, a1=a1, b1=b1,
            hn=a * hm + b * hp, ht=a * hm1 + b * hp1,
            alpha=a1 * hm + b1 * hp, gamma=a1 * hm1 + b1 * hp1,
            beta=a * rm + b * rp,
            hm=hm, hp=hp)

    def map(self, lam, theta):
        ab = self.ab(lam)
        cm = self.inner.boundary(theta)
        cp = self.outer.boundary(theta)
        return ab[..., :1] * cm + ab[..., 1:] * cp

    def map_dlambda(self, lam, theta):
        ab1 = self.ab1(lam)
        return ab1[..., :1] * self.inner.boundary(theta) + ab1[..., 1:] * self.outer.boundary(theta)

    def map_dlambda2(self, lam, theta):
        ab2 = self.ab2(lam)
        return ab2[..., :1] * self.inner.boundary(theta) + ab2[..., 1:] * self.outer.boundary(theta)

    def map_dtheta(self, lam, theta):
        ab = self.ab(lam)
        beta = ab[..., 0] * self.inner.rho(theta) + ab[..., 1] * self.outer.rho(theta)
        return beta[..., None] * unit_tangent(theta)

    def alpha2(self, lam, theta):
        ab2 = self.ab2(lam)
        return ab2[..., 0] * self.inner.h(theta) + ab2[..., 1] * self.outer.h(theta)

    # -- certificates -------------------------------------------------------
    def slope_controls(self, theta):
        """Control values of d<G,n>/dlambda as Bernstein data (per theta)."""
        hm, hp = self.inner.h(theta), self.outer.h(theta)
        return (self._ctrl1[:, 0][:, None] * hm[None, :]
                + self._ctrl1[:, 1][:, None] * hp[None, :])

    def monotonicity_margin(self, grid_n=None):
        """Exact lower bound for condition (M): min over control slopes.

        The lambda-derivative of <G, n> is a Bernstein form of these control
        values, so their minimum bounds the derivative from below.
        """
        grid_n = grid_n or DEFAULTS.invariant_grid
        grid = _pair_grid(self.inner, self.outer, grid_n)
        return float(self.slope_controls(grid).min())


# ---------------------------------------------------------------------------
# inner radial extension
# ---------------------------------------------------------------------------

def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


_GLX48, _GLW48 = leggauss(48)


def _gl(f, lo, hi, pieces=8):
    edges = np.linspace(lo, hi, pieces + 1)
    tot = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * _GLX48 + 0.5 * (a + b)
        tot += 0.5 * (b - a) * np.dot(_GLW48, f(x))
    return tot


_I_BUMP = _gl(_bump, -1.0, 1.0)
_STEP_CACHE = {}


def _smoothstep(x):
    """C-infinity monotone step 0 -> 1 on [0, 1] (cached cumulative bump)."""
    if "tbl" not in _STEP_CACHE:
        grid = np.linspace(0.0, 1.0, 257)
        vals = np.array([_gl(_bump, -1.0, 2.0 * g - 1.0, pieces=4) for g in grid]) / _I_BUMP
        dervs = 2.0 * _bump(2.0 * grid - 1.0) / _I_BUMP
        _STEP_CACHE["tbl"] = BPoly.from_derivatives(grid, np.stack([vals, dervs], axis=1))
    x = np.asarray(x, dtype=float)
    return _STEP_CACHE["tbl"](np.clip(x, 0.0, 1.0))


class InnerExtension:
    """Radial profile gluing the interpolant inside the innermost disk.

    ``phi1`` is convex increasing on [0, 1] with phi1(s) = 1.5 s^2 for
    s <= 1/3, phi1(1) = 1, phi1'(1) = 3/2 and all higher derivatives
    vanishing at 1; ``phi`` is its inverse (concave, phi(t) = sqrt(2t/3)
    for t <= 1/6, phi(1) = 1, phi'(1) = 2/3).  The interpolant inside the
    disk of radius R is f(x) = phi1(|x| / R); the value 2/3 of phi'(1)
    matches the first ring built with eps_0 = 2/3 and unit lambda gap.

    The second derivative profile zeta = phi1'' on [1/3, 1] is a smooth
    step down from 3 plus two bumps whose amplitudes solve the two moment
    conditions  int zeta = 1/2  and  int (1-s) zeta = 1/6  (these encode
    phi1'(1) = 3/2 and phi1(1) = 1).
    """

    _DELTA, _C1, _R1, _C2, _R2 = 0.05, 0.60, 0.05, 0.90, 0.05
    _PROFILE = {}

    def __init__(self, disk_radius=1.0):
        self.disk_radius = float(disk_radius)
        if not InnerExtension._PROFILE:
            InnerExtension._build_profile()
        prof = InnerExtension._PROFILE
        self._amp = prof["amp"]
        self._phi1_tbl = prof["phi1"]
        self._psi_tbl = prof["psi"]
        self._inv_grid_t = prof["inv_t"]
        self._inv_grid_s = prof["inv_s"]

    @classmethod
    def _zeta_of(cls, amp, s):
        s = np.asarray(s, dtype=float)
        a = 1.0 / 3.0
        val = 3.0 * (1.0 - _smoothstep((s - a) / cls._DELTA))
        val = np.where(s < a, 3.0, val)
        val = val + amp[0] * _bump((s - cls._C1) / cls._R1)
        val = val + amp[1] * _bump((s - cls._C2) / cls._R2)
        return val

    @classmethod
    def _build_profile(cls):
        a = 1.0 / 3.0
        d, c1, r1, c2, r2 = cls._DELTA, cls._C1, cls._R1, cls._C2, cls._R2
        m_down = 3.0 * d * _gl(lambda x: 1.0 - _smoothstep(x), 0.0, 1.0)
        mom_down = 3.0 * d * _gl(
            lambda x: (1.0 - a - d * x) * (1.0 - _smoothstep(x)), 0.0, 1.0)
        q1, q2 = r1 * _I_BUMP, r2 * _I_BUMP
        rhs = np.array([0.5 - m_down, 1.0 / 6.0 - mom_down])
        mat = np.array([[q1, q2], [q1 * (1.0 - c1), q2 * (1.0 - c2)]])
        amp = np.linalg.solve(mat, rhs)
        if amp.min() <= 0:
            raise ConstructionError("inner profile moment solve produced negative mass")

        def zeta(s):
            return cls._zeta_of(amp, s)

        brk = [a, a + d, c1 - r1, c1 + r1, c2 - r2, c2 + r2, 1.0]
        nodes = np.unique(np.concatenate(
            [np.linspace(lo, hi, 60) for lo, hi in zip(brk[:-1], brk[1:])]))
        psi = np.empty_like(nodes)
        val = np.empty_like(nodes)
        psi[0], val[0] = 1.0, 1.0 / 6.0
        for i in range(1, len(nodes)):
            lo, hi = nodes[i - 1], nodes[i]
            psi[i] = psi[i - 1] + _gl(zeta, lo, hi, pieces=2)
            # second cumulative via int (hi - y) zeta(y) dy
            val[i] = (val[i - 1] + psi[i - 1] * (hi - lo)
                      + _gl(lambda y: (hi - y) * zeta(y), lo, hi, pieces=2))
        if abs(val[-1] - 1.0) > 1e-10 or abs(psi[-1] - 1.5) > 1e-10:
            raise ConstructionError(
                f"inner profile normalization failed: phi1(1)={val[-1]!r}, "
                f"phi1'(1)={psi[-1]!r}")
        cls._PROFILE = dict(
            amp=amp,
            phi1=BPoly.from_derivatives(nodes, np.stack([val, psi, zeta(nodes)], axis=1)),
            psi=BPoly.from_derivatives(nodes, np.stack([psi, zeta(nodes)], axis=1)),
            inv_t=np.concatenate([[1.0 / 6.0], val]),
            inv_s=np.concatenate([[1.0 / 3.0], nodes]))

    def _zeta(self, s):
        return self._zeta_of(self._amp, s)

    # -- profile values -----------------------------------------------------
    def phi1(self, s):
        """Convex radial value profile on [0, 1]."""
        s = np.asarray(s, dtype=float)
        quad = 1.5 * s * s
        out = np.where(s <= 1.0 / 3.0, quad, 0.0)
        if np.any(s > 1.0 / 3.0):
            out = np.where(s > 1.0 / 3.0,
                           self._phi1_tbl(np.clip(s, 1.0 / 3.0, 1.0)), out)
        return out

    def phi1_d1(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(s <= 1.0 / 3.0, 3.0 * s, 0.0)
        if np.any(s > 1.0 / 3.0):
            out = np.where(s > 1.0 / 3.0,
                           self._psi_tbl(np.clip(s, 1.0 / 3.0, 1.0)), out)
        return out

    def phi1_d2(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1.0 / 3.0, 3.0, self._zeta(np.clip(s, 1.0 / 3.0, 1.0)))

    def phi(self, t):
        """Concave increasing inverse of phi1 on [0, 1]."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(np.clip(t, 0.0, 1.0))
        out = np.sqrt(2.0 * t / 3.0)
        m = t > 1.0 / 6.0
        if np.any(m):
            s = np.clip(np.interp(t[m], self._inv_grid_t, self._inv_grid_s), 1/3, 1.0)
            for _ in range(60):
                err = self.phi1(s) - t[m]
                s = np.clip(s - err / np.maximum(self.phi1_d1(s), 1e-12), 1/3, 1.0)
                if np.abs(err).max() < 1e-13:
                    break
            out[m] = s
        return out[0] if scalar else out

    def phi_d1(self, t):
        return 1.0 / self.phi1_d1(self.phi(t))

    # -- interpolant values inside the disk ----------------------------------
    def value(self, x):
        return float(self.phi1(np.linalg.norm(x) / self.disk_radius))

    def eval(self, x):
        """(f, grad, hess) of the radial extension at point x."""
        x = np.asarray(x, dtype=float)
        R = self.disk_radius
        rho = np.linalg.norm(x)
        s = rho / R
        f = float(self.phi1(s))
        if rho < 1e-14 * R:
            hess = np.eye(2) * 3.0 / R ** 2
            return f, np.zeros(2), hess
        xhat = x / rho
        v1 = self.phi1_d1(s) / R
        v2 = self.phi1_d2(s) / R ** 2
        grad = v1 * xhat
        P = np.outer(xhat, xhat)
        hess = v2 * P + (v1 / rho) * (np.eye(2) - P)
        return f, grad, hess

    def inner_map(self, s, theta):
        """(s, theta) -> phi(s) * R * n(theta): level parametrization inside."""
        return (self.disk_radius * np.asarray(self.phi(s))[..., None]
                * unit_normal(theta))


def build_inner_extension(disk_radius=1.0) -> InnerExtension:
    return InnerExtension(disk_radius)


# ---------------------------------------------------------------------------
# the interpolant
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    theta: float
    ring_index: int
    newton_iters: int
    level: float                 # raw lambda (equals value unless post-composed)


def _g_post(t):
    return np.sqrt(t * t + 1.0) + t


def _g_post_d1(t):
    return t / np.sqrt(t * t + 1.0) + 1.0


def _g_post_d2(t):
    return (t * t + 1.0) ** -1.5


class Interpolant:
    """Evaluable C^k convex interpolant of a nested body family."""

    def __init__(self, rings, schedule: ValueSchedule, seq: PreconditionedSequence,
                 inner: InnerExtension | None = None, post_compose_g=False,
                 k=2):
        self.rings = rings
        self.schedule = schedule
        self.seq = seq
        self.inner = inner
        self.post_compose_g = bool(post_compose_g)
        self.k = int(k)
        self.index_mode = seq.index_mode
        self._ring_lams = np.array([r.knots[0] for r in rings] + [rings[-1].knots[3]])

    # -- domain helpers ------------------------------------------------------
    @property
    def lambda_min(self):
        return 0.0 if self.inner is not None else self.schedule.lambda_min

    @property
    def lambda_max(self):
        return self.schedule.lambda_max

    def ring_of_level(self, lam):
        """Index of the ring whose lambda-window contains lam."""
        lam = float(lam)
        if lam < self._ring_lams[0] - 1e-12 or lam > self._ring_lams[-1] + 1e-12:
            raise DomainError(f"level {lam} outside [{self._ring_lams[0]}, {self._ring_lams[-1]}]")
        i = int(np.searchsorted(self._ring_lams, lam, side="right") - 1)
        return min(max(i, 0), len(self.rings) - 1)

    def level_points(self, lam, theta):
        """Points of the lambda level set at the given angles."""
        if self.inner is not None and lam < self.schedule.lambda_min:
            if lam < 0:
                raise DomainError("negative level")
            return self.inner.inner_map(lam, theta)
        ring = self.rings[self.ring_of_level(lam)]
        return ring.map(np.asarray(lam, dtype=float), theta)

    def level_support(self, lam, direction):
        """Support value of the lambda sublevel set in a direction."""
        direction = np.asarray(direction, dtype=float)
        nrm = np.linalg.norm(direction)
        th = np.arctan2(direction[1], direction[0])
        if self.inner is not None and lam < self.schedule.lambda_min:
            return nrm * self.inner.disk_radius * float(self.inner.phi(lam))
        ring = self.rings[self.ring_of_level(lam)]
        ab = ring.ab(float(lam))
        return nrm * float(ab[0] * ring.inner.h(th) + ab[1] * ring.outer.h(th))

    # -- inversion -----------------------------------------------------------
    def _seed(self, x):
        theta = float(np.arctan2(x[1], x[0]) % (2.0 * np.pi))
        proj = float(np.hypot(x[0], x[1]))
        # bracket the ring by the support profile along theta
        lo, hi = 0, len(self.rings) - 1
        h_in = float(self.rings[0].inner.h(theta))
        h_out = float(self.rings[-1].outer.h(theta))
        if proj <= h_in:
            return -1, self.schedule.lambda_min, theta
        if proj > h_out:
            return len(self.rings), self.lambda_max, theta
        while lo < hi:
            mid = (lo + hi) // 2
            if proj <= float(self.rings[mid].outer.h(theta)):
                hi = mid
            else:
                lo = mid + 1
        ring = self.rings[lo]
        # monotone 1D seed on the scalar profile a h_- + b h_+ = proj
        hm, hp = float(ring.inner.h(theta)), float(ring.outer.h(theta))
        lam_lo, lam_hi = ring.knots[0], ring.knots[3]
        for _ in range(40):
            lam_mid = 0.5 * (lam_lo + lam_hi)
            ab = ring.ab(lam_mid)
            if ab[0] * hm + ab[1] * hp < proj:
                lam_lo = lam_mid
            else:
                lam_hi = lam_mid
        return lo, 0.5 * (lam_lo + lam_hi), theta

    def invert(self, x, rtol=None, max_iter=60):
        """Solve G(lambda, theta) = x; returns (lambda, theta, ring_index, iters)."""
        rtol = DEFAULTS.invert_rtol if rtol is None else rtol
        x = np.asarray(x, dtype=float)
        scale = 1.0 + float(np.hypot(x[0], x[1]))
        idx, lam, theta = self._seed(x)
        if idx < 0:
            if self.inner is not None:
                # innermost body is a disk: the radial test is exact
                r = float(np.hypot(x[0], x[1]))
                if r > self.inner.disk_radius * (1.0 + 1e-12):
                    idx = 0
                    lam = self.schedule.lambda_min
                else:
                    lam = float(self.inner.phi1(r / self.inner.disk_radius))
                    return lam, float(np.arctan2(x[1], x[0]) % (2 * np.pi)), -1, 0
            else:
                # support test along the ray is only necessary; settle with
                # the exact margin at the inner window boundary
                m0, th0 = self._margin_at(self._ring_lams[0], x)
                if m0 < -1e-9 * scale:
                    raise DomainError("point inside the truncated inner window")
                if m0 <= rtol * scale:
                    # on the innermost boundary
                    return float(self._ring_lams[0]), float(th0 % (2 * np.pi)), 0, 1
                idx, lam, theta = 0, self._ring_lams[0], th0
        if idx >= len(self.rings):
            # allow a one-ulp-scale overshoot of the outermost boundary
            theta_b = float(np.arctan2(x[1], x[0]) % (2 * np.pi))
            if float(np.hypot(*x)) > float(self.rings[-1].outer.h(theta_b)) * (1 + 1e-10):
                raise DomainError("point outside the outermost body")
            idx = len(self.rings) - 1
            lam = self.lambda_max
        ring = self.rings[idx]
        iters = 0

        def residual(idx_, lam_, th_):
            fd = self.rings[idx_].frame_data(lam_, th_)
            nvec = unit_normal(th_)
            tvec = unit_tangent(th_)
            fn = fd["hn"] - (x[0] * nvec[0] + x[1] * nvec[1])
            ft = fd["ht"] - (x[0] * tvec[0] + x[1] * tvec[1])
            return fn, ft, fd

        prev_res = np.inf
        for _ in range(max_iter):
            iters += 1
            fn, ft, fd = residual(idx, lam, theta)
            res = np.hypot(fn, ft)
            if res <= rtol * scale:
                return float(lam), float(theta % (2 * np.pi)), idx, iters
            if res > 0.9 * prev_res and iters > 12:
                break                      # stagnation: hand over to bisection
            prev_res = res
            dlam = -fn / fd["alpha"]
            dth = (-ft - fd["gamma"] * dlam) / fd["beta"]
            # damped step: accept the first halving that reduces the residual
            step = 1.0
            for _ in range(8):
                lam_try = lam + step * dlam
                th_try = theta + step * dth
                idx_try = idx
                guard = 0
                while (lam_try > self.rings[idx_try].knots[3] + 1e-14
                       and idx_try + 1 < len(self.rings) and guard < 16):
                    idx_try += 1
                    guard += 1
                while (lam_try < self.rings[idx_try].knots[0] - 1e-14
                       and idx_try > 0 and guard < 16):
                    idx_try -= 1
                    guard += 1
                lam_try = float(np.clip(lam_try, self._ring_lams[0], self._ring_lams[-1]))
                fn2, ft2, _ = residual(idx_try, lam_try, th_try)
                if np.hypot(fn2, ft2) < res:
                    lam, theta, idx = lam_try, float(th_try), idx_try
                    ring = self.rings[idx]
                    break
                step *= 0.5
            else:
                break                      # no decrease: bisection fallback
        # bisection fallback on the level profile with 1D theta polish
        lam, theta, idx = self._invert_bisect(x, rtol)
        return lam, theta, idx, iters + 40

    def _margin_at(self, lam, x, theta=None):
        """max_theta <x - G(lam, .), n(.)>: positive iff x outside level lam.

        The stationarity equation g(theta) = <x - G, tau(theta)> = 0 is
        solved by bracketed bisection: g is decreasing through the
        maximizer, and bisection is immune to the huge curvature-radius
        spikes of near-polygonal levels (where a Newton step stalls).
        """
        lam = float(min(max(lam, self._ring_lams[0]), self._ring_lams[-1]))
        idx = self.ring_of_level(lam)
        ring = self.rings[idx]
        th0 = float(np.arctan2(x[1], x[0]) % (2 * np.pi)) if theta is None else theta

        def g(th):
            fd = ring.frame_data(lam, th)
            tv = unit_tangent(th)
            return fd["ht"] - (x[0] * tv[0] + x[1] * tv[1])

        # g = <G - x, tau> increases through the maximizer of <x - G, n>,
        # so bracket with g(lo) <= 0 <= g(hi)
        w = 0.25
        lo, hi = th0 - w, th0 + w
        guard = 0
        while not (g(lo) <= 0.0 <= g(hi)) and guard < 5:
            w *= 2.2
            lo, hi = th0 - w, th0 + w
            guard += 1
        for _ in range(55):
            mid = 0.5 * (lo + hi)
            if g(mid) <= 0.0:
                lo = mid
            else:
                hi = mid
        th = 0.5 * (lo + hi)
        fd = ring.frame_data(lam, th)
        nv = unit_normal(th)
        return float((x[0] * nv[0] + x[1] * nv[1]) - fd["hn"]), float(th)

    def _invert_bisect(self, x, rtol):
        theta = float(np.arctan2(x[1], x[0]) % (2 * np.pi))
        lam_lo, lam_hi = self._ring_lams[0], self._ring_lams[-1]
        scale = 1.0 + float(np.hypot(x[0], x[1]))
        m_lo, th_lo = self._margin_at(lam_lo, x)
        if m_lo < -1e-9 * scale:
            if self.inner is not None:
                r = float(np.hypot(x[0], x[1]))
                return (float(self.inner.phi1(r / self.inner.disk_radius)),
                        theta, -1)
            raise DomainError("point inside the truncated inner window")
        if m_lo <= rtol * scale:
            return float(lam_lo), float(th_lo % (2 * np.pi)), 0
        m_hi, th_hi = self._margin_at(lam_hi, x)
        if m_hi > 1e-9 * scale:
            raise DomainError("point outside the outermost body")
        if m_hi >= -rtol * scale:
            return float(lam_hi), float(th_hi % (2 * np.pi)), len(self.rings) - 1
        for _ in range(90):
            lam_mid = 0.5 * (lam_lo + lam_hi)
            m, th = self._margin_at(lam_mid, x)
            if m > 0:
                lam_lo = lam_mid
            else:
                lam_hi = lam_mid
            if lam_hi - lam_lo < 1e-15 * max(1.0, lam_hi):
                break
        lam = 0.5 * (lam_lo + lam_hi)
        m, th = self._margin_at(lam, x)
        return float(lam), float(th % (2 * np.pi)), self.ring_of_level(lam)

    # -- evaluation ------------------------------------------------------------
    def eval(self, x) -> EvalResult:
        x = np.asarray(x, dtype=float)
        lam, theta, idx, iters = self.invert(x)
        if idx == -1:
            f, grad, hess = self.inner.eval(x)
            lam = f
        else:
            ring = self.rings[idx]
            fd = ring.frame_data(lam, theta)
            nvec = unit_normal(theta)
            tvec = unit_tangent(theta)
            alpha, beta, gamma = fd["alpha"], fd["beta"], fd["gamma"]
            grad = nvec / alpha
            grad_theta = tvec / beta - (gamma / (alpha * beta)) * nvec
            alpha2 = ring.alpha2(lam, theta)
            hess = ((beta / alpha) * np.outer(grad_theta, grad_theta)
                    - (alpha2 / alpha) * np.outer(grad, grad))
            f = lam
        if self.post_compose_g:
            g1, g2 = _g_post_d1(f), _g_post_d2(f)
            hess = g1 * hess + g2 * np.outer(grad, grad)
            grad = g1 * grad
            value = float(_g_post(f))
        else:
            value = float(f)
        return EvalResult(value, grad, hess, theta, idx, iters, float(lam))

    def value(self, x):
        return self.eval(x).value

    def gradient(self, x):
        return self.eval(x).gradient

    def eval_many(self, xs):
        return [self.eval(x) for x in np.asarray(xs, dtype=float)]

    # -- sampling ----------------------------------------------------------
    def sample_points(self, n, rng=None, lam_range=None):
        """Random points G(lambda, theta) with lambda, theta uniform."""
        rng = np.random.default_rng(rng)
        lo = self.schedule.lambda_min if lam_range is None else lam_range[0]
        hi = self.lambda_max if lam_range is None else lam_range[1]
        lams = rng.uniform(lo, hi, n)
        thetas = rng.uniform(0.0, 2.0 * np.pi, n)
        pts = np.array([self.level_points(l, np.array([t]))[0]
                        for l, t in zip(lams, thetas)])
        return pts, lams, thetas


def glue(seq: PreconditionedSequence, schedule: ValueSchedule, k=2,
         post_compose_g=False, junction_tol=1e-8, check=True,
         grid_n=None) -> Interpolant:
    """Assemble the rings and verify the junction/monotonicity certificates.

    Junction continuity is certified exactly on the coefficient side: both
    rings share the same boundary body, the endpoint coefficient is 1 on
    that body and 0 on the other, and the endpoint coefficient slopes are
    eps/(lambda gap) on either side, equal precisely because K = 1 at the
    shared index.  Condition (M) is certified through the minimum of the
    slope control values (a Bernstein form is bounded below by its control
    values) over the shared angular grid.
    """
    rings = []
    n_r = seq.n_rings()
    for i in range(n_r):
        knots = schedule.lambdas[3 * i: 3 * i + 4]
        ring = Ring(seq.sbody(3 * i), seq.sbody(3 * i + 3), knots,
                    seq.eps[i], seq.eps[i + 1], k)
        rings.append(ring)
    monotone_margin = None
    if check:
        grid = _schedule_grid(seq, grid_n or DEFAULTS.invariant_grid)
        cache = SupportCache(seq, grid)
        monotone_margin = np.inf
        for i in range(n_r):
            hm = cache.s_support(3 * i)
            hp = cache.s_support(3 * i + 3)
            ctrl = rings[i]._ctrl1                      # (d, 2) slope coefficients
            slopes = ctrl[:, 0][:, None] * hm[None, :] + ctrl[:, 1][:, None] * hp[None, :]
            margin = float(slopes.min())
            monotone_margin = min(monotone_margin, margin)
            if margin <= 0:
                raise ConstructionError(
                    f"monotonicity condition fails on ring {i} (margin {margin:.3e})")
        for i in range(n_r - 1):
            a, b = rings[i], rings[i + 1]
            end_val = a._ctrl0[-1]
            start_val = b._ctrl0[0]
            if abs(end_val[0]) > 1e-14 or abs(end_val[1] - 1) > 1e-14 \
                    or abs(start_val[0] - 1) > 1e-14 or abs(start_val[1]) > 1e-14:
                raise ConstructionError(f"junction value mismatch at ring {i}")
            s_end = a._ctrl1[-1]                        # (., coefficient on outer)
            s_start = b._ctrl1[0]                       # (coefficient on inner, .)
            gap = abs(s_end[1] - s_start[0]) + abs(s_end[0]) + abs(s_start[1])
            if gap > junction_tol * max(1.0, abs(s_end[1])):
                raise ConstructionError(
                    f"junction slope mismatch at ring {i}: {gap:.2e} "
                    "(schedule bug: K at the shared index is not 1)")
    inner = None
    if seq.index_mode == "N":
        radius = float(rings[0].inner.h(np.zeros(1))[0])
        inner = InnerExtension(radius)
    interp = Interpolant(rings, schedule, seq, inner=inner,
                         post_compose_g=post_compose_g, k=k)
    interp.monotone_margin = monotone_margin
    return interp


def build_interpolant(bodies, index_mode="Z", k=2, post_compose_g=False,
                      **kw) -> Interpolant:
    """Convenience pipeline: precondition -> assign_values -> glue."""
    seq = precondition(bodies, index_mode=index_mode,
                       **{kk: kw[kk] for kk in ("eps_max", "safety") if kk in kw})
    schedule = assign_values(seq)
    return glue(seq, schedule, k=k, post_compose_g=post_compose_g)


# ---------------------------------------------------------------------------
# convexity verification
# ---------------------------------------------------------------------------

@dataclass
class ConvexityReport:
    min_hessian_eig: float
    worst_directional_curvature: float
    n_samples: int
    n_directions: int
    passed: bool


def verify_convexity(interp: Interpolant, sample_budget=500, n_directions=64,
                     rng=0, eig_floor=-1e-8, concavity_tol=1e-9) -> ConvexityReport:
    """Two independent convexity checks.

    (a) minimum Hessian eigenvalue over random sample points;
    (b) the de Finetti-Fenchel-Crouzeix criterion: for a fan of directions
        the support of the sublevel sets as a function of the level must be
        concave (checked through second divided differences on a dense
        level grid, including ring junctions).
    """
    rng = np.random.default_rng(rng)
    pts, _, _ = interp.sample_points(sample_budget, rng)
    min_eig = np.inf
    for p in pts:
        try:
            res = interp.eval(p)
        except DomainError:
            continue
        w = np.linalg.eigvalsh(0.5 * (res.hessian + res.hessian.T))
        min_eig = min(min_eig, float(w[0]))
    worst = -np.inf
    lam_grid = []
    lo = interp.lambda_min if interp.inner is not None else interp.schedule.lambda_min
    for ring in interp.rings:
        lam_grid.append(np.linspace(ring.knots[0], ring.knots[3], 24, endpoint=False))
    lam_grid = np.sort(np.concatenate(
        ([np.linspace(lo + 1e-9, interp.schedule.lambda_min, 8, endpoint=False)]
         if interp.inner is not None else [])
        + [np.concatenate(lam_grid), [interp.lambda_max]]))
    for j in range(n_directions):
        ang = 2.0 * np.pi * j / n_directions + rng.uniform(0, 2 * np.pi / n_directions)
        u = np.array([np.cos(ang), np.sin(ang)])
        F = np.array([interp.level_support(l, u) for l in lam_grid])
        slopes = np.diff(F) / np.diff(lam_grid)
        d2 = np.diff(slopes) / (lam_grid[2:] - lam_grid[:-2])
        scale = max(1.0, np.abs(F).max())
        worst = max(worst, float(d2.max()) / scale)
    passed = (min_eig >= eig_floor) and (worst <= concavity_tol)
    return ConvexityReport(float(min_eig), float(worst), sample_budget,
                           n_directions, bool(passed))
