"""Bernstein polynomials, derivative formulas, and shape-preserving smoothing.

Everything downstream reduces to two primitives:

* evaluation of a Bernstein form from its control values ``f(k/d)``,
  stable up to very large degree (log-binomial weights, windowed sums);
* the smoothing of a three-segment piecewise-affine curve whose endpoint
  derivatives are prescribed exactly by finite differences of the control
  values, with all higher derivatives (up to a requested order) vanishing
  at the endpoints.

The second primitive is what turns nested convex sets into smoothly glued
ring parametrizations, and also yields the concave "edge bump" polynomial
used to round polygon edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ConstructionError, DomainError, PreconditionError

__all__ = [
    "BernsteinCurve",
    "PiecewiseAffineSpec",
    "bernstein_eval",
    "bernstein_derivative",
    "smooth_piecewise",
    "approx_segment",
    "segment_degree",
]

_FULL_MATRIX_DEGREE = 600    # below this, evaluate with a dense weight matrix
_WINDOW_SIGMAS = 10.5        # binomial window half-width, in standard deviations
_WINDOW_PAD = 26             # tail mass beyond the window is < 1e-22


def _weights_log(d, k, s):
    """log of C(d,k) s^k (1-s)^(d-k) for arrays k, s broadcast together."""
    return (gammaln(d + 1) - gammaln(k + 1) - gammaln(d - k + 1)
            + k * np.log(s) + (d - k) * np.log1p(-s))


def bezier_values(control, s):
    """Evaluate the Bernstein form with control values ``f(k/d)`` at ``s``.

    Parameters
    ----------
    control : (d+1,) or (d+1, p) array
        Values at the nodes k/d.
    s : scalar or (N,) array in [0, 1]

    Returns
    -------
    array of shape ``s.shape + control.shape[1:]``
    """
    control = np.asarray(control, dtype=float)
    d = control.shape[0] - 1
    scalar_in = np.ndim(s) == 0
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if d == 0:
        out = np.broadcast_to(control[0], s_arr.shape + control.shape[1:]).copy()
        return out[0] if scalar_in else out

    if d <= _FULL_MATRIX_DEGREE:
        k = np.arange(d + 1)
        inner = np.clip(s_arr, 1e-300, 1 - 1e-16)
        lw = _weights_log(d, k[None, :], inner[:, None])
        m = lw.max(axis=1, keepdims=True)
        w = np.exp(lw - m)
        w /= w.sum(axis=1, keepdims=True)
        out = w @ control
        # exact endpoints
        out[s_arr <= 0.0] = control[0]
        out[s_arr >= 1.0] = control[d]
    else:
        out = np.empty(s_arr.shape + control.shape[1:])
        order = np.argsort(s_arr, kind="stable")
        chunk = 64 if len(s_arr) < 1024 else 256
        for c0 in range(0, len(order), chunk):
            idx = order[c0:c0 + chunk]
            sv = s_arr[idx]
            interior = (sv > 0.0) & (sv < 1.0)
            out[idx[sv <= 0.0]] = control[0]
            out[idx[sv >= 1.0]] = control[d]
            if not np.any(interior):
                continue
            ii = idx[interior]
            sv = s_arr[ii]
            mu_lo, mu_hi = d * sv.min(), d * sv.max()
            half = _WINDOW_SIGMAS * np.sqrt(d * max(sv.max() * (1 - sv.min()), 1e-12)) + _WINDOW_PAD
            k0 = max(0, int(mu_lo - half))
            k1 = min(d, int(mu_hi + half) + 1)
            k = np.arange(k0, k1 + 1)
            lw = _weights_log(d, k[None, :], sv[:, None])
            m = lw.max(axis=1, keepdims=True)
            w = np.exp(lw - m)
            w /= w.sum(axis=1, keepdims=True)
            out[ii] = w @ control[k0:k1 + 1]
    return out[0] if scalar_in else out


@dataclass(frozen=True)
class BernsteinCurve:
    """A Bernstein form of degree ``d`` reparametrized to ``interval``.

    ``control_values[k]`` is the value at node k/d of the unit-interval
    form; ``interval`` supplies the affine change of variables.
    """

    control_values: np.ndarray
    interval: tuple = (0.0, 1.0)
    degree: int = field(init=False)
    dimension: int = field(init=False)

    def __post_init__(self):
        cv = np.asarray(self.control_values, dtype=float)
        object.__setattr__(self, "control_values", cv)
        if cv.shape[0] < 2:
            raise PreconditionError("degree must be >= 1")
        object.__setattr__(self, "degree", cv.shape[0] - 1)
        object.__setattr__(self, "dimension", 1 if cv.ndim == 1 else cv.shape[1])
        lo, hi = self.interval
        if not hi > lo:
            raise PreconditionError("interval must be nondegenerate")

    def _to_unit(self, x, tol_scale=64.0):
        lo, hi = self.interval
        width = hi - lo
        s = (np.asarray(x, dtype=float) - lo) / width
        tol = tol_scale * np.finfo(float).eps * max(1.0, abs(lo) / width, abs(hi) / width)
        if np.any(s < -tol) or np.any(s > 1 + tol):
            raise DomainError(f"argument outside interval [{lo}, {hi}]")
        return np.clip(s, 0.0, 1.0)


def bernstein_eval(curve: BernsteinCurve, x):
    """Evaluate ``curve`` at ``x`` (scalar or array) inside its interval."""
    return bezier_values(curve.control_values, curve._to_unit(x))


def bernstein_derivative(curve: BernsteinCurve, m: int, x):
    """m-th derivative of ``curve`` at ``x``.

    Uses the exact finite-difference control values: the m-th derivative of
    the unit-interval form is d(d-1)...(d-m+1) times the Bernstein form of
    the m-th forward differences, and the interval reparametrization
    contributes a factor (hi-lo)^(-m).
    """
    if m < 0 or int(m) != m:
        raise PreconditionError("derivative order must be a nonnegative integer")
    d = curve.degree
    if m > d:
        raise PreconditionError(f"derivative order {m} exceeds degree {d}")
    if m == 0:
        return bernstein_eval(curve, x)
    s = curve._to_unit(x)
    diff = np.diff(curve.control_values, m, axis=0)
    fac = float(np.prod(np.arange(d, d - m, -1, dtype=float)))
    lo, hi = curve.interval
    return fac * (hi - lo) ** (-m) * bezier_values(diff, s)


@dataclass(frozen=True)
class PiecewiseAffineSpec:
    """Data of a three-segment affine curve through q0, (1+e0)q0, (1-e1)q1, q1.

    The four points sit at parameter values lambda_minus < lambda_0 <
    lambda_1 < lambda_plus; e0, e1 in (0, 1) control the endpoint slopes.
    """

    q0: np.ndarray
    q1: np.ndarray
    lambda_minus: float
    lambda_0: float
    lambda_1: float
    lambda_plus: float
    e0: float
    e1: float
    smoothness_order: int = 2

    def __post_init__(self):
        object.__setattr__(self, "q0", np.atleast_1d(np.asarray(self.q0, dtype=float)))
        object.__setattr__(self, "q1", np.atleast_1d(np.asarray(self.q1, dtype=float)))
        if self.q0.shape != self.q1.shape:
            raise PreconditionError("q0 and q1 must have the same dimension")
        if not (self.lambda_minus < self.lambda_0 < self.lambda_1 < self.lambda_plus):
            raise PreconditionError("require lambda_minus < lambda_0 < lambda_1 < lambda_plus")
        if not (0.0 < self.e0 < 1.0 and 0.0 < self.e1 < 1.0):
            raise PreconditionError("e0, e1 must lie in (0, 1)")
        if self.smoothness_order < 2:
            raise PreconditionError("smoothness order must be >= 2")

    @property
    def breaks(self):
        """Node positions of the two interior breakpoints in [0, 1]."""
        width = self.lambda_plus - self.lambda_minus
        return ((self.lambda_0 - self.lambda_minus) / width,
                (self.lambda_1 - self.lambda_minus) / width)

    def affine_path(self, t):
        """The piecewise-affine interpolant gamma_Theta at t in [0, 1]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t0, t1 = self.breaks
        p0, p1 = self.q0, (1.0 + self.e0) * self.q0
        p2, p3 = (1.0 - self.e1) * self.q1, self.q1
        out = np.empty(t.shape + self.q0.shape)
        seg0 = t <= t0
        seg2 = t >= t1
        seg1 = ~(seg0 | seg2)
        with np.errstate(invalid="ignore"):
            out[seg0] = p0 + np.multiply.outer(t[seg0] / t0, p1 - p0)
            out[seg1] = p1 + np.multiply.outer((t[seg1] - t0) / (t1 - t0), p2 - p1)
            out[seg2] = p2 + np.multiply.outer((t[seg2] - t1) / (1.0 - t1), p3 - p2)
        return out


def smoothing_degree(spec: PiecewiseAffineSpec) -> int:
    """Smallest degree d with m/d <= min(t0, 1 - t1) (the degree rule)."""
    t0, t1 = spec.breaks
    bound = min(t0, 1.0 - t1)
    return int(np.ceil(spec.smoothness_order / bound - 1e-12))


def smooth_piecewise(spec: PiecewiseAffineSpec) -> BernsteinCurve:
    """Bernstein smoothing of the piecewise-affine curve of ``spec``.

    Returns the curve gamma~ on [lambda_minus, lambda_plus] with

    * gamma~(lambda_-) = q0, gamma~(lambda_+) = q1,
    * gamma~'(lambda_-) = e0 q0 / (lambda_0 - lambda_-),
      gamma~'(lambda_+) = e1 q1 / (lambda_+ - lambda_1),
    * vanishing derivatives of orders 2..m at both endpoints,

    where m is ``spec.smoothness_order``.  Monotonicity and concavity of
    the coordinates of the affine path are preserved.  The degree is the
    minimal one allowed by the degree rule.
    """
    d = smoothing_degree(spec)
    nodes = np.arange(d + 1) / d
    control = spec.affine_path(nodes)
    if spec.q0.shape == (1,):
        control = control[:, 0]
    return BernsteinCurve(control, interval=(spec.lambda_minus, spec.lambda_plus))


# ---------------------------------------------------------------------------
# Concave segment polynomial (edge rounding primitive)
# ---------------------------------------------------------------------------

def _parabola_params(d, t_minus, t_plus, r_minus, r_plus):
    am = -d * r_minus / (2.0 * (d - 1.0))
    bm = (1.0 + 2.0 * t_minus * (d - 1.0) / r_minus) / (2.0 * d)
    ap = -d * r_plus / (2.0 * (d - 1.0))
    bp = 1.0 + (-1.0 + 2.0 * t_plus * (d - 1.0) / r_plus) / (2.0 * d)
    return am, bm, ap, bp


def _fd_gd(s, d, t_minus, t_plus, r_minus, r_plus):
    """The two clipped parabolas whose lower envelope is smoothed."""
    am, bm, ap, bp = _parabola_params(d, t_minus, t_plus, r_minus, r_plus)
    s = np.asarray(s, dtype=float)
    fd = np.where(s <= bm, am * ((s - bm) ** 2 - bm ** 2), -am * bm ** 2)
    gd = np.where(s >= bp, ap * ((s - bp) ** 2 - (1.0 - bp) ** 2), -ap * (1.0 - bp) ** 2)
    return fd, gd


def segment_degree(t_minus, t_plus, r_minus, r_plus, epsilon, m, degree_cap=10000):
    """Smallest admissible degree for :func:`approx_segment`.

    d must satisfy the two crossing conditions (the rising parabola stays
    below min(eps, falling parabola) at m/d, and symmetrically at 1 - m/d)
    and keep both parabolic caps wide enough that the endpoint finite
    differences see pure parabola values.
    """
    for d in range(2 * m + 1, degree_cap + 1):
        am, bm, ap, bp = _parabola_params(d, t_minus, t_plus, r_minus, r_plus)
        fm, gm = _fd_gd(m / d, d, t_minus, t_plus, r_minus, r_plus)
        f1, g1 = _fd_gd(1.0 - m / d, d, t_minus, t_plus, r_minus, r_plus)
        if (fm <= min(epsilon, gm) and g1 <= min(epsilon, f1)
                and bm >= m / d and 1.0 - bp >= m / d):
            return d
    raise ConstructionError(
        "segment degree search exceeded cap "
        f"(cap={degree_cap}, t-={t_minus:.3g}, t+={t_plus:.3g}, "
        f"r-={r_minus:.3g}, r+={r_plus:.3g}, eps={epsilon:.3g}, m={m})")


def approx_segment(r_minus, r_plus, t_minus, t_plus, epsilon, m,
                   degree_cap=10000) -> BernsteinCurve:
    """Concave polynomial p : [0,1] -> [0, eps] with prescribed endpoint jets.

    Contract: p(0) = p(1) = 0, p'(0) = t_minus > 0, p'(1) = t_plus < 0,
    p''(0) = -r_minus, p''(1) = -r_plus, p^(q)(0) = p^(q)(1) = 0 for
    3 <= q <= m, p concave with 0 <= p <= eps.

    Built as the Bernstein form (at the smallest admissible degree) of the
    lower envelope of two clipped parabolas and the constant eps.
    """
    if not (r_minus > 0 and r_plus > 0 and t_minus > 0 and t_plus < 0 and epsilon > 0):
        raise PreconditionError("require r_-, r_+, t_-, eps > 0 and t_+ < 0")
    if m < 3:
        raise PreconditionError("smoothness order m must be >= 3")
    d = segment_degree(t_minus, t_plus, r_minus, r_plus, epsilon, m, degree_cap)
    s = np.arange(d + 1) / d
    fd, gd = _fd_gd(s, d, t_minus, t_plus, r_minus, r_plus)
    control = np.minimum(np.minimum(fd, gd), epsilon)
    return BernsteinCurve(control, interval=(0.0, 1.0))
