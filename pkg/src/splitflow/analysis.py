"""Lyapunov certificates and convergence-rate verification.

The tools here operate on sampled trajectories and on problem data: they
evaluate the Lyapunov functions used to certify the accelerated dynamics,
fit sublinear/exponential rates from traces, verify the envelope
upper/lower inequalities for strongly convex problems, and check the
scalar parameter conditions (including the rate-condition curve h(w))
that certify exponential decay for non-quadratic smooth parts.
"""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .envelopes import (DR, FB, check_mu_domain, fb_envelope_value,
                        generalized_gradient)
from .exceptions import (NeedsReferenceError, ParameterDomainError,
                         WindowTooLateError)

__all__ = [
    "CertificateReport",
    "LyapunovSpec",
    "make_lyapunov_spec",
    "lyapunov_value",
    "lyapunov_series",
    "check_lyapunov_decay",
    "certify_sublinear",
    "certify_exponential",
    "check_envelope_inequalities",
    "check_conditions",
    "h_curve",
    "decay_form_timevarying",
    "decay_form_constant",
    "solve_reference",
    "ReferenceSolution",
    "fb_weight_matrix",
    "dr_weight_matrix",
]

_DECAY_EPS = 1e-4          # numerical slack for the V' + theta V check
_GAP_FLOOR = 100.0 * np.finfo(float).eps


@dataclass
class CertificateReport:
    """Outcome of one certification run."""

    kind: str
    passed: bool
    fitted: float | None = None
    theoretical: float | None = None
    worst_slack: float = 0.0
    n_samples: int = 0
    details: dict = field(default_factory=dict)

    def to_json_dict(self, details_path=None):
        return {
            "kind": self.kind,
            "pass": bool(self.passed),
            "fitted": self.fitted,
            "theoretical": self.theoretical,
            "worst_slack": self.worst_slack,
            "n_samples": self.n_samples,
            "details_path": details_path,
        }

    def write(self, path, details_path=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(self.to_json_dict(details_path)), fh, indent=2)
        if details_path is not None:
            with open(details_path, "w", encoding="utf-8") as fh:
                json.dump(_jsonable(self.details), fh)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# reference minimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSolution:
    x: np.ndarray
    value: float
    grad_map_norm: float
    iterations: int


_reference_cache = weakref.WeakKeyDictionary()


def _polish_quadratic_l1(problem, x):
    f, g = problem.f, problem.g
    support = np.flatnonzero(x)
    if support.size == 0:
        return None
    Qss = f.Q[np.ix_(support, support)]
    rhs = -(f.q[support] + g.weight * np.sign(x[support]))
    try:
        xs = np.linalg.solve(Qss, rhs)
    except np.linalg.LinAlgError:
        return None
    out = np.zeros_like(x)
    out[support] = xs
    return out


def _polish_quadratic_box(problem, x):
    f, g = problem.f, problem.g
    tol = 1e-9 * (1.0 + np.abs(g.upper) + np.abs(g.lower))
    at_lo = x <= g.lower + tol
    at_hi = x >= g.upper - tol
    free = ~(at_lo | at_hi)
    out = np.where(at_hi, g.upper, np.where(at_lo, g.lower, x))
    idx = np.flatnonzero(free)
    if idx.size:
        Qff = f.Q[np.ix_(idx, idx)]
        rhs = -(f.q[idx] + f.Q[np.ix_(idx, np.flatnonzero(~free))]
                @ out[~free])
        try:
            out[idx] = np.linalg.solve(Qff, rhs)
        except np.linalg.LinAlgError:
            return None
    return np.clip(out, g.lower, g.upper)


def _polish_smooth_l1(problem, x, steps=8):
    # damped Newton on the support with fixed sign pattern
    f, g = problem.f, problem.g
    support = np.flatnonzero(x)
    if support.size == 0:
        return None
    signs = np.sign(x[support])
    out = x.copy()
    for _ in range(steps):
        grad = f.gradient(out)[support] + g.weight * signs
        H = f.hessian(out)[np.ix_(support, support)]
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            return None
        out[support] = out[support] + step
        if np.any(np.sign(out[support]) * signs < 0):
            return None
        if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(out)):
            break
    return out


def _polish(problem, x):
    f, g = problem.f, problem.g
    if g.kind == "l1":
        if f.kind == "quadratic":
            return _polish_quadratic_l1(problem, x)
        try:
            return _polish_smooth_l1(problem, x)
        except Exception:
            return None
    if g.kind == "box" and f.kind == "quadratic":
        return _polish_quadratic_box(problem, x)
    return None


def solve_reference(problem, mu, tol=1e-12, max_iter=200000, cache=True):
    """High-accuracy minimizer of F, certified via the gradient map.

    Runs the accelerated proximal iteration with objective restarts, with
    periodic structure-aware polish (active-set / support Newton solves),
    until ||G_mu(x)|| <= tol. The result is cached per problem instance.
    """
    mu = check_mu_domain(mu, problem.f.L)
    key = (round(float(mu), 15), float(tol))
    if cache:
        bucket = _reference_cache.setdefault(problem, {})
        hit = bucket.get(key)
        if hit is not None:
            return hit

    f, g = problem.f, problem.g
    n = problem.dim
    x = np.zeros(n)
    y = x.copy()
    t_mom = 1.0
    best = None
    obj_prev = np.inf
    iterations = 0

    def grad_map_norm(z):
        return float(np.linalg.norm(generalized_gradient(problem, z, mu)))

    def consider(z):
        nonlocal best
        gn = grad_map_norm(z)
        if best is None or gn < best[1]:
            best = (z.copy(), gn)
        return gn

    for k in range(1, max_iter + 1):
        iterations = k
        x_new = g.prox(y - mu * f.gradient(y), mu)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = x_new + ((t_mom - 1.0) / t_new) * (x_new - x)
        x, t_mom = x_new, t_new
        if k % 25 == 0 or k == max_iter:
            obj = f.value(x) + g.value(x)
            if obj > obj_prev:          # objective restart
                y = x.copy()
                t_mom = 1.0
            obj_prev = obj
            if consider(x) <= tol:
                break
            if k % 200 == 0:
                polished = _polish(problem, x)
                if polished is not None and np.all(np.isfinite(polished)):
                    # one prox-gradient sweep re-projects onto the model
                    swept = g.prox(polished - mu * f.gradient(polished), mu)
                    if consider(swept) <= tol:
                        x = swept
                        break
                    if grad_map_norm(swept) < grad_map_norm(x):
                        x = swept
                        y = x.copy()
                        t_mom = 1.0

    x_best, gn = best if best is not None else (x, grad_map_norm(x))
    if gn > tol:
        raise RuntimeError(
            f"reference solve stalled at ||G_mu|| = {gn:.3e} > tol = {tol:.1e}")
    sol = ReferenceSolution(x=x_best, value=problem.objective(x_best),
                            grad_map_norm=gn, iterations=iterations)
    if cache:
        bucket[key] = sol
    return sol


# ---------------------------------------------------------------------------
# Lyapunov machinery
# ---------------------------------------------------------------------------

def fb_weight_matrix(problem, mu):
    """Envelope metric for the FB case: H = I - mu Q."""
    Q = problem.f.hessian(np.zeros(problem.dim))
    return np.eye(problem.dim) - mu * Q


def dr_weight_matrix(problem, mu):
    """Envelope metric for the DR case: H = (I - mu Q)(I + mu Q)^{-1}."""
    Q = problem.f.hessian(np.zeros(problem.dim))
    n = problem.dim
    H = (np.eye(n) - mu * Q) @ np.linalg.inv(np.eye(n) + mu * Q)
    return 0.5 * (H + H.T)


QUAD_CONVEX = "quadratic_convex"
QUAD_STRONG = "quadratic_strongly_convex"
GENERAL_STRONG = "general_strongly_convex"


@dataclass(frozen=True)
class LyapunovSpec:
    """Lyapunov function selection for one accelerated dynamics run.

    The envelope term is shifted by the optimal value and the quadratic
    term is centered at the equilibrium state (the minimizer with zero
    velocity), so the function vanishes exactly at the optimum.
    """

    case: str
    problem: object
    envelope_kind: str
    alpha: float
    mu: float
    theta: object                 # scalar or callable t -> theta(t)
    psi1_star: np.ndarray
    e_star: float
    H: np.ndarray | None = None   # quadratic cases
    beta: float | None = None     # general case evaluation point weight

    def theta_at(self, t):
        return self.theta(t) if callable(self.theta) else float(self.theta)


def make_lyapunov_spec(problem, mu, alpha, case, theta, envelope_kind=FB,
                       beta=None, x_star=None, f_star=None):
    """Build a LyapunovSpec; requires the reference minimizer and value."""
    if x_star is None or f_star is None:
        raise NeedsReferenceError(
            "Lyapunov evaluation is defined relative to the minimizer; "
            "pass x_star and f_star (e.g. from solve_reference)")
    mu = check_mu_domain(mu, problem.f.L)
    x_star = np.asarray(x_star, dtype=float)
    if case == GENERAL_STRONG:
        if beta is None:
            raise ValueError("general case needs the extrapolation weight beta")
        if envelope_kind != FB:
            raise ValueError("general case is defined for the FB envelope")
        return LyapunovSpec(case=case, problem=problem, envelope_kind=FB,
                            alpha=alpha, mu=mu, theta=theta,
                            psi1_star=x_star, e_star=float(f_star),
                            H=None, beta=float(beta))
    if case not in (QUAD_CONVEX, QUAD_STRONG):
        raise ValueError(f"unknown Lyapunov case {case!r}")
    if problem.f.kind != "quadratic":
        raise ValueError(
            "the weighted Lyapunov cases require a quadratic smooth part; "
            "use the general strongly convex case otherwise")
    if envelope_kind == FB:
        H = fb_weight_matrix(problem, mu)
        psi1_star = x_star
    elif envelope_kind == DR:
        H = dr_weight_matrix(problem, mu)
        psi1_star = x_star + mu * problem.f.gradient(x_star)
    else:
        raise ValueError(f"unknown envelope kind {envelope_kind!r}")
    return LyapunovSpec(case=case, problem=problem,
                        envelope_kind=envelope_kind, alpha=alpha, mu=mu,
                        theta=theta, psi1_star=psi1_star,
                        e_star=float(f_star), H=H, beta=beta)


def _envelope_at(spec, psi1):
    problem, mu = spec.problem, spec.mu
    if spec.envelope_kind == DR:
        psi1 = problem.f.prox(psi1, mu)
    return fb_envelope_value(problem, psi1, mu)


def lyapunov_value(spec, t, psi):
    """Evaluate the Lyapunov function at time t and stacked state psi."""
    psi = np.asarray(psi, dtype=float)
    n = spec.problem.dim
    psi1, psi2 = psi[:n], psi[n:]
    th = spec.theta_at(t)
    d1 = psi1 - spec.psi1_star
    if spec.case == GENERAL_STRONG:
        y = psi1 + spec.beta * psi2
        env = fb_envelope_value(spec.problem, y, spec.mu) - spec.e_star
        r = th * d1 + psi2
        return spec.alpha * env + 0.5 * float(r @ r)
    env = _envelope_at(spec, psi1) - spec.e_star
    r = th * d1 + psi2
    return spec.alpha * env + 0.5 * float(r @ (spec.H @ r))


def lyapunov_series(traj, spec):
    """Lyapunov values at every trajectory sample."""
    states = traj.states
    return np.array([lyapunov_value(spec, t, states[i])
                     for i, t in enumerate(traj.times)])


def check_lyapunov_decay(traj, spec, theta_of_t=None):
    """Verify V' + theta V <= eps (1 + V) at every interior sample.

    The derivative is approximated by central differences on the sample
    grid; the first and last samples are excluded.
    """
    if traj.times.shape[0] < 3:
        raise ValueError("need at least 3 samples for the decay check")
    V = lyapunov_series(traj, spec)
    t = traj.times
    theta_fn = theta_of_t if theta_of_t is not None else spec.theta_at
    th = np.array([theta_fn(ti) for ti in t])
    Vdot = (V[2:] - V[:-2]) / (t[2:] - t[:-2])
    resid = Vdot + th[1:-1] * V[1:-1]
    norm = 1.0 + V[1:-1]
    rel = resid / norm
    worst = float(rel.max())
    passed = bool(worst <= _DECAY_EPS)
    i_worst = int(np.argmax(rel)) + 1
    return CertificateReport(
        kind="lyapunov_decay", passed=passed, fitted=worst,
        theoretical=_DECAY_EPS, worst_slack=worst - _DECAY_EPS,
        n_samples=V.shape[0] - 2,
        details={"values": V, "worst_time": float(t[i_worst])})


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------

def _window_series(traj, key, t_window):
    series = traj.observables.get(key)
    if series is None:
        raise NeedsReferenceError(
            f"trajectory carries no {key!r} observable; integrate with a "
            "reference minimizer")
    a, b = t_window
    mask = (traj.times >= a) & (traj.times <= b)
    if mask.sum() < 2:
        raise ValueError("fit window contains fewer than 2 samples")
    t = traj.times[mask]
    vals = series[mask]
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{key} contains non-finite samples in the window")
    floor = _GAP_FLOOR * (1.0 + abs(traj.meta.get("f_star", 0.0)))
    if np.any(vals <= floor):
        raise WindowTooLateError(
            f"{key} drops to {vals.min():.3e} inside the window; "
            "fit would be dominated by rounding noise")
    return t, vals


def certify_sublinear(traj, t_window, slope_tol=0.2):
    """Fit log(gap) against log(t + 3); certified when slope <= -2 + tol."""
    t, gap = _window_series(traj, "objective_gap", t_window)
    slope, intercept = np.polyfit(np.log(t + 3.0), np.log(gap), 1)
    threshold = -2.0 + slope_tol
    passed = bool(slope <= threshold)
    return CertificateReport(
        kind="sublinear_fit", passed=passed, fitted=float(slope),
        theoretical=-2.0, worst_slack=float(slope - threshold),
        n_samples=t.shape[0],
        details={"c1": float(np.exp(intercept)), "window": list(t_window)})


def certify_exponential(traj, rho_theory, t_window, fraction=0.9):
    """Fit log ||x - x*||^2 against t; certified when the decay rate is at
    least ``fraction`` of the theoretical rate."""
    t, dist = _window_series(traj, "dist_sq", t_window)
    slope, intercept = np.polyfit(t, np.log(dist), 1)
    rate = -float(slope)
    threshold = fraction * float(rho_theory)
    passed = bool(rate >= threshold)
    return CertificateReport(
        kind="exponential_fit", passed=passed, fitted=rate,
        theoretical=float(rho_theory), worst_slack=float(threshold - rate),
        n_samples=t.shape[0],
        details={"c": float(np.exp(intercept)), "window": list(t_window)})


# ---------------------------------------------------------------------------
# envelope inequalities for strongly convex problems
# ---------------------------------------------------------------------------

def check_envelope_inequalities(problem, mu, n_pairs=1000, seed=0,
                                reference=None, radius=2.0):
    """Verify the envelope-objective bounds on random point pairs.

    For strongly convex f (m > 0) and mu in (0, 1/L), the FB envelope
    satisfies, for all x, xh:

      upper:  Fmu(x) - F(xh) <=  <G(x), x - xh> - (m/2)||x - xh||^2
                                 - (mu/2)||G(x)||^2
      lower:  Fmu(x) - F(x*) >=  (m^2 (1 - mu L) / (2L)) ||x - x*||^2

    with slack 1e-8 (1 + |Fmu(x)|) on both sides.
    """
    f = problem.f
    if f.m <= 0:
        raise ParameterDomainError(
            "envelope inequalities require a strongly convex smooth part")
    mu = check_mu_domain(mu, f.L)
    if reference is None:
        reference = solve_reference(problem, mu, tol=1e-10)
    x_star, f_star = reference.x, reference.value
    rng = np.random.default_rng(seed)
    n = problem.dim
    m, L = f.m, f.L
    lower_coef = m * m * (1.0 - mu * L) / (2.0 * L)
    worst_upper = np.inf
    worst_lower = np.inf
    for _ in range(n_pairs):
        x = radius * rng.standard_normal(n)
        xh = radius * rng.standard_normal(n)
        gf = f.gradient(x)
        p = problem.g.prox(x - mu * gf, mu)
        G = (x - p) / mu
        fmu = (f.value(x) + problem.g.value(p) - mu * float(gf @ G)
               + 0.5 * mu * float(G @ G))
        slack = 1e-8 * (1.0 + abs(fmu))
        d = x - xh
        upper_rhs = (float(G @ d) - 0.5 * m * float(d @ d)
                     - 0.5 * mu * float(G @ G))
        margin_u = (upper_rhs + slack) - (fmu - problem.objective(xh))
        ds = x - x_star
        margin_l = (fmu - f_star + slack) - lower_coef * float(ds @ ds)
        worst_upper = min(worst_upper, margin_u)
        worst_lower = min(worst_lower, margin_l)
    worst = min(worst_upper, worst_lower)
    return CertificateReport(
        kind="envelope_inequalities", passed=bool(worst >= 0.0),
        fitted=None, theoretical=None, worst_slack=float(-worst),
        n_samples=n_pairs,
        details={"worst_upper_margin": float(worst_upper),
                 "worst_lower_margin": float(worst_lower),
                 "grad_map_norm_at_ref": reference.grad_map_norm})


# ---------------------------------------------------------------------------
# scalar conditions for the non-quadratic exponential certificate
# ---------------------------------------------------------------------------

def check_conditions(w, mu_L, beta, gamma, theta):
    """Check the three scalar decay conditions; returns (i, ii, iii_residual).

    (i)  (1 - theta beta) >= (1 - mu sigma)(1 - gamma beta) for all
         sigma in [m, L]; the bound is affine in sigma, so the endpoints
         suffice. Only mu L is available here, and the sigma -> 0 endpoint
         dominates sigma = m for every m >= 0, so {0, L} is checked.
    (ii) theta^2 <= alpha m = w^2
    (iii) residual of the quadratic-over-linear bound; nonpositive means
         the condition holds. At beta = 0 the quotient is 0/0 when mu L = 0
         and its limit is 3 theta - 2 gamma (negative here, so the boundary
         verdict is a pass); for fixed mu L > 0 the quotient diverges.
    """
    if not (0.0 <= w <= 1.0):
        raise ParameterDomainError(f"w must lie in [0, 1], got {w}")
    tol = 1e-12
    lhs = 1.0 - theta * beta
    cond_i = bool(lhs >= (1.0 - mu_L) * (1.0 - gamma * beta) - tol
                  and lhs >= (1.0 - gamma * beta) - tol)
    cond_ii = bool(theta * theta <= w * w + tol)
    if beta <= 0.0:
        limit = 3.0 * theta - 2.0 * gamma if mu_L == 0.0 else np.inf
        return cond_i, cond_ii, float(limit)
    num = lhs - (1.0 - mu_L) * (1.0 - gamma * beta)
    iii_lhs = num * num / (2.0 * beta * (1.0 - mu_L))
    iii_rhs = w * w * theta * beta * beta + 2.0 * gamma - 3.0 * theta
    return cond_i, cond_ii, float(iii_lhs - iii_rhs)


def _schedule_point(w):
    gamma = 2.0 * w / (w + 1.0)
    beta = 1.0 - gamma
    theta = w - 0.5 * w * w
    return gamma, beta, theta


def h_curve(w_grid, mu_L_rule="half_sqrt_gamma_beta"):
    """Rate-condition curve h(w) = iii_residual(w) / w over a grid.

    mu_L_rule is either 'half_sqrt_gamma_beta' (mu L = sqrt(gamma beta)/2)
    or a fixed float. The certificate passes when h <= 0 on the whole
    grid and w h(w) increases with mu L at every grid point (sampled at
    half and full mu L).
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if w_grid.size == 0:
        raise ValueError("empty grid")
    if np.any(w_grid <= 0) or np.any(w_grid > 1):
        raise ParameterDomainError("grid must lie in (0, 1]")
    h = np.empty(w_grid.size)
    mono_margin = np.empty(w_grid.size)
    cond_i_all = True
    cond_ii_all = True
    for j, w in enumerate(w_grid):
        gamma, beta, theta = _schedule_point(w)
        if mu_L_rule == "half_sqrt_gamma_beta":
            mu_L = 0.5 * math.sqrt(gamma * beta)
        else:
            mu_L = float(mu_L_rule)
        ci, cii, resid = check_conditions(w, mu_L, beta, gamma, theta)
        cond_i_all &= ci
        cond_ii_all &= cii
        h[j] = resid / w
        _, _, resid_half = check_conditions(w, 0.5 * mu_L, beta, gamma, theta)
        mono_margin[j] = resid - resid_half
    h_ok = bool(np.max(h) <= 0.0)
    mono_ok = bool(np.min(mono_margin) >= 0.0)
    return CertificateReport(
        kind="h_curve", passed=h_ok and mono_ok and cond_i_all and cond_ii_all,
        fitted=float(np.max(h)), theoretical=0.0,
        worst_slack=float(np.max(h)), n_samples=w_grid.size,
        details={"w": w_grid, "h": h, "monotone_margin": mono_margin,
                 "cond_i": cond_i_all, "cond_ii": cond_ii_all})


def write_h_curve_csv(report, path):
    """Two-column CSV (w, h) suitable for external plotting."""
    w = report.details["w"]
    h = report.details["h"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("w,h\n")
        for wi, hi in zip(w, h):
            fh.write(f"{wi:.17e},{hi:.17e}\n")


# ---------------------------------------------------------------------------
# certificate-matrix assembly
# ---------------------------------------------------------------------------

def decay_form_timevarying(t, H):
    """Quadratic-form block of the decay bound under the time-varying
    schedule; identically zero for gamma = 3/(t+3), theta = 2/(t+3)."""
    theta = 2.0 / (t + 3.0)
    gamma = 3.0 / (t + 3.0)
    theta_dot = -2.0 / (t + 3.0) ** 2
    coeff = np.array([
        [2.0 * theta_dot * theta + theta ** 3,
         theta_dot + 2.0 * theta ** 2 - theta * gamma],
        [theta_dot + 2.0 * theta ** 2 - theta * gamma,
         3.0 * theta - 2.0 * gamma],
    ])
    return np.kron(coeff, H)


def decay_form_constant(alpha, m_tilde, gamma, beta, theta, H):
    """Quadratic-form block of the decay bound under a constant schedule;
    negative semidefinite for the certified parameter choices."""
    am = alpha * m_tilde
    coeff = np.array([
        [theta * (theta ** 2 - am),
         theta * (2.0 * theta - gamma - am * beta)],
        [theta * (2.0 * theta - gamma - am * beta),
         3.0 * theta - 2.0 * gamma - 2.0 * am * beta],
    ])
    return np.kron(coeff, H)
