"""Algorithm and ODE runners exercising the interpolants' pathologies.

All "argmin" substeps are solved to first-order-optimality tolerances (the
pathologies live in point space; value tolerances would blur the
accumulation structure).  Finite runs cannot certify non-convergence, so
the analyzer reports the strongest falsifiable surrogate: the number of
well-separated clusters in the tail of the trajectory together with
oscillation statistics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, NumericError, PreconditionError
from .interpolant import Interpolant

__all__ = [
    "Trajectory", "AccumulationReport", "alternating_minimization",
    "exact_line_search", "tikhonov_path", "gradient_flow", "newton_flow",
    "bregman_iteration", "central_path", "hessian_riemannian_flow", "analyze",
]


@dataclass
class Trajectory:
    """Time- or iteration-stamped points with per-point diagnostics."""

    times: np.ndarray                   # iteration index or ODE time
    points: np.ndarray                  # (N, 2)
    values: np.ndarray                  # f values
    gradients: np.ndarray               # (N, 2)
    kind: str                           # "discrete" | "continuous"
    termination: str = "completed"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise NumericError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.times)


@dataclass
class AccumulationReport:
    cluster_centers: np.ndarray
    cluster_sizes: np.ndarray
    min_center_distance: float
    polar_angle_range: float
    sign_alternations: int
    angle_total_variation: float
    path_length: float

    @property
    def n_clusters(self):
        return len(self.cluster_sizes)


# ---------------------------------------------------------------------------
# 1D exact minimization along a line
# ---------------------------------------------------------------------------

def _line_minimize(interp: Interpolant, x0, direction, grad_tol=1e-11,
                   t_init=1e-3, t_cap=1e6):
    """argmin_t f(x0 + t d) by expanding bracket + Brent on the derivative.

    Returns (t*, point, "ok") or (None, last_in_domain, reason) when the
    line minimum escapes the evaluation window.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    x0 = np.asarray(x0, dtype=float)

    def slope(t):
        return float(np.dot(interp.eval(x0 + t * d).gradient, d))

    s0 = slope(0.0)
    if abs(s0) <= grad_tol:
        return 0.0, x0.copy(), "ok"
    sgn = -np.sign(s0)              # downhill direction along the line
    t_prev, s_prev = 0.0, s0
    t = sgn * t_init
    for _ in range(200):
        try:
            s = slope(t)
        except DomainError:
            return None, x0 + t_prev * d, "line minimum escapes domain window"
        if s == 0.0:
            return t, x0 + t * d, "ok"
        if np.sign(s) != np.sign(s_prev):
            lo, hi = (t_prev, t) if t_prev < t else (t, t_prev)
            t_star = brentq(slope, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
            # polish to the gradient tolerance
            if abs(slope(t_star)) > grad_tol:
                t_star = brentq(slope, lo, hi, xtol=1e-16, rtol=8.9e-16, maxiter=300)
            return t_star, x0 + t_star * d, "ok"
        t_prev, s_prev = t, s
        t *= 2.0
        if abs(t) > t_cap:
            raise NumericError("line-search bracket expansion failed")
    raise NumericError("line-search bracketing did not terminate")


def _eval_many(interp, pts):
    vals, grads = [], []
    for p in pts:
        r = interp.eval(p)
        vals.append(r.value)
        grads.append(r.gradient)
    return np.array(vals), np.array(grads)


def alternating_minimization(interp: Interpolant, x0, iters=200,
                             grad_tol=1e-11) -> Trajectory:
    """Exact coordinate minimization (u then v), stopping each half-step at
    a vanishing partial derivative."""
    x = np.asarray(x0, dtype=float).copy()
    pts = [x.copy()]
    term = "completed"
    axes = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    for it in range(iters):
        moved = False
        for ax in axes:
            t, xn, status = _line_minimize(interp, x, ax, grad_tol)
            if status != "ok":
                term = status
                break
            if t is not None and abs(t) > 0:
                moved = True
            x = xn
            pts.append(x.copy())
        if term != "completed":
            break
        if not moved:
            term = "stationary"
            break
    pts = np.array(pts)
    vals, grads = _eval_many(interp, pts)
    return Trajectory(np.arange(len(pts), dtype=float), pts, vals, grads,
                      "discrete", term)


def exact_line_search(interp: Interpolant, x0, iters=200,
                      grad_tol=1e-11) -> Trajectory:
    """Steepest descent with exact line search along -grad f."""
    x = np.asarray(x0, dtype=float).copy()
    pts = [x.copy()]
    term = "completed"
    for it in range(iters):
        g = interp.eval(x).gradient
        ng = np.linalg.norm(g)
        if ng <= grad_tol:
            term = "stationary"
            break
        t, xn, status = _line_minimize(interp, x, -g / ng, grad_tol)
        if status != "ok":
            term = status
            break
        x = xn
        pts.append(x.copy())
    pts = np.array(pts)
    vals, grads = _eval_many(interp, pts)
    return Trajectory(np.arange(len(pts), dtype=float), pts, vals, grads,
                      "discrete", term)


# ---------------------------------------------------------------------------
# Tikhonov regularization path
# ---------------------------------------------------------------------------

def tikhonov_path(interp: Interpolant, anchor, r_schedule, x_start=None,
                  tol=1e-10, max_newton=80) -> Trajectory:
    """x(r) = argmin f + r |x - anchor|^2 along a decreasing r schedule.

    Damped Newton on grad f + 2 r (x - anchor) = 0, warm-started from the
    previous solution; failed steps bisect the r gap (a bounded number of
    times) before giving up.
    """
    anchor = np.asarray(anchor, dtype=float)
    r_schedule = np.asarray(r_schedule, dtype=float)
    if np.any(np.diff(r_schedule) >= 0) or np.any(r_schedule <= 0):
        raise PreconditionError("r schedule must be positive and decreasing")

    def solve_one(r, x_init):
        x = x_init.copy()
        for _ in range(max_newton):
            res = interp.eval(x)
            F = res.gradient + 2.0 * r * (x - anchor)
            nF = np.linalg.norm(F)
            if nF <= tol * (1.0 + 2.0 * r):
                return x, res
            J = res.hessian + 2.0 * r * np.eye(2)
            step = np.linalg.solve(J, -F)
            damp = 1.0
            for _ in range(30):
                try:
                    res2 = interp.eval(x + damp * step)
                except DomainError:
                    damp *= 0.5
                    continue
                F2 = res2.gradient + 2.0 * r * (x + damp * step - anchor)
                if np.linalg.norm(F2) < nF:
                    break
                damp *= 0.5
            else:
                return None, None
            x = x + damp * step
        return None, None

    xs, rs, vals, grads = [], [], [], []
    x = np.asarray(x_start, dtype=float) if x_start is not None else anchor * 0.0
    # seed from the first r by a few extra damped iterations from anywhere
    pending = list(r_schedule)
    r_prev = None
    while pending:
        r = pending.pop(0)
        sol, res = solve_one(r, x)
        splits = 0
        while sol is None and r_prev is not None and splits < 12:
            mid = np.sqrt(r_prev * r)
            sol_mid, _ = solve_one(mid, x)
            if sol_mid is None:
                splits += 1
                r_prev_try = np.sqrt(r_prev * mid)
                x_try, _ = solve_one(r_prev_try, x)
                if x_try is None:
                    break
                x = x_try
                continue
            x = sol_mid
            sol, res = solve_one(r, x)
            splits += 1
        if sol is None:
            raise NumericError(f"Tikhonov solve failed at r = {r}")
        x = sol
        xs.append(x.copy())
        rs.append(r)
        vals.append(res.value)
        grads.append(res.gradient)
        r_prev = r
    xs = np.array(xs)
    traj = Trajectory(np.cumsum(np.ones(len(xs))), xs, np.array(vals),
                      np.array(grads), "discrete", "completed",
                      diagnostics=dict(r_values=np.array(rs),
                                       path_length=float(np.sum(
                                           np.linalg.norm(np.diff(xs, axis=0), axis=1)))))
    return traj


# ---------------------------------------------------------------------------
# continuous-time flows
# ---------------------------------------------------------------------------

def _integrate(rhs, x0, t_end, rtol, lam_out, interp, max_step=np.inf):
    """solve_ivp wrapper terminating cleanly at the inner window boundary."""
    lam_min_event_level = lam_out

    def stop_event(t, y):
        try:
            return interp.eval(y).level - lam_min_event_level
        except DomainError:
            return 0.0
    stop_event.terminal = True
    stop_event.direction = -1
    sol = solve_ivp(rhs, (0.0, t_end), np.asarray(x0, dtype=float),
                    method="RK45", rtol=rtol, atol=rtol * 1e-2,
                    dense_output=True, events=[stop_event], max_step=max_step)
    if not sol.success:
        raise NumericError(f"ODE integration failed: {sol.message}")
    return sol


def gradient_flow(interp: Interpolant, x0, t_end, rtol=1e-9, n_samples=800,
                  ring_events=True) -> Trajectory:
    """x' = -grad f(x), adaptive RK45 with dense output.

    Ring crossings (the level hitting a ring boundary) are located from the
    dense solution and reported in the diagnostics.
    """
    lam_floor = interp.schedule.lambda_min + 1e-9 if interp.inner is None else 1e-9

    def rhs(t, y):
        return -interp.eval(y).gradient

    sol = _integrate(rhs, x0, t_end, rtol, lam_floor, interp)
    t_hi = sol.t[-1]
    ts = np.linspace(0.0, t_hi, n_samples)
    pts = sol.sol(ts).T
    vals, grads = _eval_many(interp, pts)
    term = "completed" if t_hi >= t_end else "reached inner window"
    diagnostics = {}
    if ring_events:
        bounds = interp._ring_lams
        crossings = []
        lam_seq = vals if not interp.post_compose_g else np.array(
            [interp.eval(p).level for p in pts])
        for b in bounds:
            inside = lam_seq < b
            flips = np.nonzero(np.diff(inside.astype(int)))[0]
            for i in flips:
                crossings.append((float(np.interp(b, lam_seq[[i + 1, i]],
                                                  ts[[i + 1, i]])), float(b)))
        diagnostics["ring_crossings"] = sorted(crossings)
    diagnostics["dense"] = sol.sol
    return Trajectory(ts, pts, vals, grads, "continuous", term, diagnostics)


def newton_flow(interp: Interpolant, x0, t_end, rtol=1e-9, n_samples=400,
                grid_dt=None) -> Trajectory:
    """Continuous Newton dynamics x' = -[Hess f]^{-1} grad f.

    Two integrators are run and cross-checked: (a) the direct ODE and
    (b) continuation on the first integral grad f(x(t)) = e^{-t} grad
    f(x0), solved pointwise by warm-started Newton.  The continuation is
    authoritative; the discrepancy is reported in the diagnostics.
    """
    x0 = np.asarray(x0, dtype=float)
    g0 = interp.eval(x0).gradient

    def rhs(t, y):
        res = interp.eval(y)
        return -np.linalg.solve(res.hessian, res.gradient)

    lam_floor = interp.schedule.lambda_min + 1e-9 if interp.inner is None else 1e-9
    sol = _integrate(rhs, x0, t_end, rtol, lam_floor, interp)
    t_hi = sol.t[-1]
    ts = np.linspace(0.0, t_hi, n_samples)
    pts_ode = sol.sol(ts).T

    # continuation on grad f(x) = e^{-t} g0
    pts = np.empty_like(pts_ode)
    x = x0.copy()
    for i, t in enumerate(ts):
        target = np.exp(-t) * g0
        for _ in range(80):
            res = interp.eval(x)
            F = res.gradient - target
            if np.linalg.norm(F) <= 1e-12 * (1.0 + np.linalg.norm(target)):
                break
            step = np.linalg.solve(res.hessian, -F)
            ns = np.linalg.norm(step)
            damp = 1.0 if ns < 0.25 else 0.25 / ns
            x = x + damp * step
        pts[i] = x
    vals, grads = _eval_many(interp, pts)
    disc = float(np.max(np.linalg.norm(pts - pts_ode, axis=1)))
    first_integral = float(np.max(
        np.linalg.norm(grads - np.exp(-ts)[:, None] * g0, axis=1)))
    term = "completed" if t_hi >= t_end else "reached inner window"
    return Trajectory(ts, pts, vals, grads, "continuous", term,
                      diagnostics=dict(ode_discrepancy=disc,
                                       first_integral_residual=first_integral,
                                       g0=g0))


# ---------------------------------------------------------------------------
# Legendre-type dynamics (closed dual-ray forms)
# ---------------------------------------------------------------------------

def bregman_iteration(model, c, x0, iters=30, check_tol=1e-7) -> Trajectory:
    """x_{i+1} = grad h*(grad h(x_i) - c) via the closed dual translation.

    ``model`` is a LegendreModel exposing the conjugate pair; the closed
    form x_i = grad h*(grad h(x0) - i c) is evaluated directly and checked
    against the literal recursion.
    """
    c = np.asarray(c, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    z0 = model.grad_h(x0)
    pts = [x0.copy()]
    for i in range(1, iters + 1):
        pts.append(model.grad_h_star(z0 - i * c))
    pts = np.array(pts)
    # literal recursion cross-check
    x = x0.copy()
    worst = 0.0
    for i in range(1, iters + 1):
        x = model.grad_h_star(model.grad_h(x) - c)
        worst = max(worst, float(np.linalg.norm(x - pts[i])))
    if worst > check_tol * (1.0 + np.abs(pts).max()):
        raise NumericError(f"closed-form vs literal Bregman mismatch: {worst:.2e}")
    vals = np.array([model.h_value(p) for p in pts])
    grads = np.array([model.grad_h(p) for p in pts])
    return Trajectory(np.arange(len(pts), dtype=float), pts, vals, grads,
                      "discrete", "completed",
                      diagnostics=dict(recursion_mismatch=worst))


def central_path(model, c, r_schedule) -> Trajectory:
    """x(r) = argmin <c, x> + r h(x) evaluated by the closed form.

    The optimality condition is c + r grad h(x) = 0, i.e.
    x(r) = grad h*(-c / r); the residual of that condition is recorded per
    point (the sign convention actually satisfied is part of the report).
    """
    c = np.asarray(c, dtype=float)
    r_schedule = np.asarray(r_schedule, dtype=float)
    pts, resid = [], []
    for r in r_schedule:
        x = model.grad_h_star(-c / r)
        pts.append(x)
        resid.append(float(np.linalg.norm(c + r * model.grad_h(x))))
    pts = np.array(pts)
    vals = np.array([model.h_value(p) for p in pts])
    grads = np.array([model.grad_h(p) for p in pts])
    return Trajectory(np.cumsum(np.ones(len(pts))), pts, vals, grads,
                      "discrete", "completed",
                      diagnostics=dict(r_values=r_schedule,
                                       optimality_residuals=np.array(resid),
                                       convention="grad h(x(r)) = -c/r"))


def hessian_riemannian_flow(model, c, x0, t_end, n_samples=60,
                            cross_check=True, rtol=1e-6) -> Trajectory:
    """x' = -[Hess h]^{-1} c: the dual ray grad h(x(t)) = grad h(x0) - t c.

    Closed-form dual-ray evaluation, optionally cross-checked against a
    coarse direct integration of the ODE.
    """
    c = np.asarray(c, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    z0 = model.grad_h(x0)
    ts = np.linspace(0.0, t_end, n_samples)
    pts = np.array([model.grad_h_star(z0 - t * c) for t in ts])
    disc = None
    if cross_check:
        def rhs(t, y):
            H = model.hess_h(y)
            return -np.linalg.solve(H, c)
        sol = solve_ivp(rhs, (0.0, t_end), x0, method="RK45", rtol=rtol,
                        atol=rtol * 1e-2, dense_output=True)
        if not sol.success:
            raise NumericError(f"Hessian-Riemannian ODE failed: {sol.message}")
        disc = float(np.max(np.linalg.norm(sol.sol(ts).T - pts, axis=1)))
    vals = np.array([model.h_value(p) for p in pts])
    grads = np.array([model.grad_h(p) for p in pts])
    return Trajectory(ts, pts, vals, grads, "continuous", "completed",
                      diagnostics=dict(ode_discrepancy=disc, dual_start=z0))


# ---------------------------------------------------------------------------
# accumulation analysis
# ---------------------------------------------------------------------------

def analyze(trajectory: Trajectory, cluster_radius, tail_fraction=0.5,
            center=None) -> AccumulationReport:
    """Single-linkage clustering of the tail + oscillation statistics."""
    pts = trajectory.points
    n0 = int(len(pts) * (1.0 - tail_fraction))
    tail = pts[n0:]
    # single-linkage components of the radius graph
    dmat = np.linalg.norm(tail[:, None, :] - tail[None, :, :], axis=-1)
    adj = dmat <= cluster_radius
    unassigned = set(range(len(tail)))
    clusters = []
    while unassigned:
        seed = unassigned.pop()
        comp = {seed}
        frontier = [seed]
        while frontier:
            i = frontier.pop()
            new = {j for j in unassigned if adj[i, j]}
            unassigned -= new
            comp |= new
            frontier.extend(new)
        clusters.append(sorted(comp))
    centers = np.array([tail[cl].mean(axis=0) for cl in clusters])
    sizes = np.array([len(cl) for cl in clusters])
    if len(centers) > 1:
        d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        min_d = float(d[np.triu_indices(len(centers), 1)].min())
    else:
        min_d = 0.0
    ref = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    rel = pts - ref
    ang = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    tv = float(np.abs(np.diff(ang)).sum())
    rng = float(ang.max() - ang.min())
    signs = np.sign(rel[:, 1])
    nz = signs[signs != 0]
    alternations = int(np.sum(nz[1:] != nz[:-1]))
    length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    return AccumulationReport(centers, sizes, min_d, rng, alternations, tv, length)
