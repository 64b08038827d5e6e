"""Splitting flows, their accelerated second-order variants, and baselines.

Four vector fields are available:

  fb_flow : x' = -alpha G_mu(x)
  dr_flow : z' = -alpha G_mu(prox_{mu f}(z))
  acc_fb  : x'' + gamma(t) x' + alpha G_mu(x + beta(t) x') = 0
  acc_dr  : z'' + gamma(t) z' + alpha G_mu(prox_{mu f}(z + beta(t) z')) = 0,
            with output map x = prox_{mu f}(z)

Integration uses an embedded Dormand-Prince 5(4) stepper with dense output
sampled on a uniform grid; a fixed-step classical RK4 path is provided for
deterministic regression runs.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .envelopes import check_mu_domain, generalized_gradient
from .exceptions import (IntegrationFailure, ParameterDomainError,
                         UnsupportedOperationError)

__all__ = [
    "FB_FLOW", "DR_FLOW", "ACC_FB", "ACC_DR",
    "ConvexSchedule", "ConstantSchedule",
    "schedule_convex", "schedule_strongly_convex",
    "DynamicsSpec", "vector_field",
    "Trajectory", "integrate",
    "discrete_fb_step", "discrete_dr_step", "run_discrete",
    "export_trajectory_csv", "read_trace_csv",
]

FB_FLOW = "fb_flow"
DR_FLOW = "dr_flow"
ACC_FB = "acc_fb"
ACC_DR = "acc_dr"

_FLOW_KINDS = (FB_FLOW, DR_FLOW)
_ACC_KINDS = (ACC_FB, ACC_DR)
_DR_KINDS = (DR_FLOW, ACC_DR)

# damping offset r in theta(t) = 2/(t+r); r = 3 keeps beta(t) >= 0 for t >= 0
_TIME_OFFSET = 3.0


def schedule_convex(t):
    """Time-varying parameters for the convex case: (gamma, beta, theta).

    gamma(t) = 3/(t+3), beta = 1 - gamma (exactly), theta(t) = 2/(t+3).
    """
    if t < 0:
        raise ParameterDomainError(f"schedule time must be nonnegative, got {t}")
    gamma = 3.0 / (t + _TIME_OFFSET)
    return gamma, 1.0 - gamma, 2.0 / (t + _TIME_OFFSET)


class ConvexSchedule:
    """Decaying damping schedule driving sublinear convergence."""

    mode = "convex_time_varying"

    def __init__(self, alpha):
        if alpha <= 0:
            raise ParameterDomainError("alpha must be positive")
        self.alpha = float(alpha)

    def gamma(self, t):
        return 3.0 / (t + _TIME_OFFSET)

    def beta(self, t):
        return 1.0 - self.gamma(t)

    def theta(self, t):
        return 2.0 / (t + _TIME_OFFSET)

    def __repr__(self):
        return f"ConvexSchedule(alpha={self.alpha:.6g})"


class ConstantSchedule:
    """Constant damping schedule for strongly convex problems."""

    mode = "strongly_convex_constant"

    def __init__(self, alpha, gamma, beta, theta, rate):
        self.alpha = float(alpha)
        self._gamma = float(gamma)
        self._beta = float(beta)
        self._theta = float(theta)
        self.rate = float(rate)

    def gamma(self, t=0.0):
        return self._gamma

    def beta(self, t=0.0):
        return self._beta

    def theta(self, t=0.0):
        return self._theta

    def __repr__(self):
        return (f"ConstantSchedule(alpha={self.alpha:.6g}, gamma={self._gamma:.6g}, "
                f"beta={self._beta:.6g}, theta={self._theta:.6g}, rate={self.rate:.6g})")


def schedule_strongly_convex(alpha, m_eff):
    """Constant schedule from the effective strong convexity constant.

    gamma = 2 sqrt(alpha m_eff) / (sqrt(alpha m_eff) + 1), beta = 1 - gamma,
    theta = (gamma + alpha m_eff beta)/2, and the certified decay rate is
    rate = sqrt(alpha m_eff) - alpha m_eff / 2 (identical to theta).
    """
    x = float(alpha) * float(m_eff)
    if not (0.0 < x <= 1.0):
        raise ParameterDomainError(
            f"alpha * m_eff must lie in (0, 1], got {x}")
    w = math.sqrt(x)
    gamma = 2.0 * w / (w + 1.0)
    beta = 1.0 - gamma
    theta = 0.5 * (gamma + x * beta)
    rate = w - 0.5 * x
    assert abs(theta - rate) <= 1e-12 * (1.0 + rate)
    return ConstantSchedule(alpha=alpha, gamma=gamma, beta=beta, theta=theta,
                            rate=rate)


@dataclass(frozen=True)
class DynamicsSpec:
    """Selection of one vector field over one problem."""

    kind: str
    problem: object
    mu: float
    schedule: object

    def __post_init__(self):
        if self.kind not in _FLOW_KINDS + _ACC_KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        check_mu_domain(self.mu, self.problem.f.L)
        if self.kind in _DR_KINDS and not self.problem.f.supports_prox():
            raise UnsupportedOperationError(
                f"{self.kind} requires prox of the smooth part")
        # for non-quadratic strongly convex f with a constant schedule, the
        # accelerated FB flow is certified only for mu <= sqrt(gamma beta)/(2L)
        if (self.kind == ACC_FB
                and isinstance(self.schedule, ConstantSchedule)
                and self.problem.f.kind != "quadratic"):
            bound = math.sqrt(self.schedule.gamma() * self.schedule.beta()) \
                / (2.0 * self.problem.f.L)
            if self.mu > bound * (1.0 + 1e-12):
                raise ParameterDomainError(
                    f"mu={self.mu} exceeds the certified bound "
                    f"sqrt(gamma beta)/(2L)={bound} for non-quadratic f")

    @property
    def state_dim(self):
        n = self.problem.dim
        return 2 * n if self.kind in _ACC_KINDS else n

    @property
    def second_order(self):
        return self.kind in _ACC_KINDS


def vector_field(spec, t, psi):
    """Right-hand side of the selected dynamics at time t and state psi."""
    problem, mu, sched = spec.problem, spec.mu, spec.schedule
    alpha = sched.alpha
    n = problem.dim
    psi = np.asarray(psi, dtype=float)
    if spec.kind in _FLOW_KINDS:
        x = problem.f.prox(psi, mu) if spec.kind == DR_FLOW else psi
        return -alpha * generalized_gradient(problem, x, mu)
    pos, vel = psi[:n], psi[n:]
    y = pos + sched.beta(t) * vel
    if spec.kind == ACC_DR:
        y = problem.f.prox(y, mu)
    acc = -sched.gamma(t) * vel - alpha * generalized_gradient(problem, y, mu)
    return np.concatenate([vel, acc])


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of one dynamics run.

    ``position`` holds the raw first state block (x, or z for DR kinds);
    ``primal`` holds the x-samples used by all observables (equal to
    ``position`` for FB kinds, prox of it for DR kinds). Arrays are not to
    be mutated after construction.
    """

    kind: str
    mu: float
    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    primal: np.ndarray
    observables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def states(self):
        """Full ODE state samples, (S, state_dim)."""
        if self.velocity.shape[1] == 0:
            return self.position
        return np.hstack([self.position, self.velocity])

    def with_observable(self, name, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.times.shape[0]:
            raise ValueError("observable length disagrees with sample count")
        obs = dict(self.observables)
        obs[name] = values
        return dataclasses.replace(self, observables=obs)


def _sample_grid(t_end, sample_dt):
    n = int(math.ceil(t_end / sample_dt - 1e-9))
    grid = np.arange(1, n + 1) * sample_dt
    if grid.size == 0 or grid[-1] < t_end - 1e-12 * max(1.0, t_end):
        grid = np.append(grid, t_end)
    grid[-1] = t_end
    return grid


def _compute_observables(problem, mu, primal, x_star=None, f_star=None):
    f, g = problem.f, problem.g
    S = primal.shape[0]
    obj_prox = np.empty(S)
    env = np.empty(S)
    for i in range(S):
        x = primal[i]
        gf = f.gradient(x)
        p = g.prox(x - mu * gf, mu)
        G = (x - p) / mu
        obj_prox[i] = f.value(p) + g.value(p)
        env[i] = (f.value(x) + g.value(p) - mu * float(gf @ G)
                  + 0.5 * mu * float(G @ G))
    obs = {"objective_of_prox": obj_prox, "envelope": env}
    if f_star is not None:
        obs["objective_gap"] = obj_prox - float(f_star)
    if x_star is not None:
        diff = primal - np.asarray(x_star, dtype=float)[None, :]
        obs["dist_sq"] = np.einsum("ij,ij->i", diff, diff)
    return obs


def _build_trajectory(spec, times, states, x_star, f_star, meta,
                      compute_observables=True):
    n = spec.problem.dim
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    position = states[:, :n]
    velocity = states[:, n:] if spec.second_order else states[:, :0]
    if spec.kind in _DR_KINDS:
        primal = np.empty_like(position)
        for i in range(position.shape[0]):
            primal[i] = spec.problem.f.prox(position[i], spec.mu)
    else:
        primal = position
    obs = (_compute_observables(spec.problem, spec.mu, primal, x_star, f_star)
           if compute_observables else {})
    meta = dict(meta)
    meta.setdefault("kind", spec.kind)
    meta.setdefault("mu", spec.mu)
    meta.setdefault("alpha", spec.schedule.alpha)
    if f_star is not None:
        meta.setdefault("f_star", float(f_star))
    return Trajectory(kind=spec.kind, mu=spec.mu, times=times,
                      position=position, velocity=velocity, primal=primal,
                      observables=obs, meta=meta)


def _field_norm(spec, t, psi):
    return float(np.linalg.norm(vector_field(spec, t, psi)))


def integrate(spec, psi0=None, t_end=10.0, tol=1e-9, sample_dt=None,
              x_star=None, f_star=None, method="dopri5", early_stop=True,
              compute_observables=True):
    """Integrate the selected dynamics and sample on a uniform grid.

    Parameters
    ----------
    spec : DynamicsSpec
    psi0 : initial state; defaults to the zero state.
    t_end : final time, > 0.
    tol : relative and absolute tolerance of the adaptive stepper,
        restricted to [1e-12, 1e-3].
    sample_dt : spacing of the dense-output samples; defaults to t_end/2000.
    x_star, f_star : optional reference minimizer / optimal value; when
        supplied, squared-distance and objective-gap observables are
        attached to every sample.
    method : 'dopri5' (adaptive, default) or 'rk4' (fixed step, one step
        per sample, deterministic).
    early_stop : stop once the field norm stays below
        1e-12 (1 + ||psi||) for 5 consecutive samples.
    """
    if not (1e-12 <= tol <= 1e-3):
        raise ParameterDomainError(f"tolerance {tol} outside [1e-12, 1e-3]")
    if t_end <= 0:
        raise ParameterDomainError("t_end must be positive")
    if psi0 is None:
        psi0 = np.zeros(spec.state_dim)
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape != (spec.state_dim,):
        raise ValueError(
            f"initial state has shape {psi0.shape}, expected ({spec.state_dim},)")
    if sample_dt is None:
        sample_dt = t_end / 2000.0
    grid = _sample_grid(t_end, sample_dt)

    def fun(t, y):
        dy = vector_field(spec, t, y)
        if not np.all(np.isfinite(dy)):
            raise FloatingPointError("vector field evaluated to non-finite values")
        return dy

    times = [0.0]
    states = [psi0.copy()]
    meta = {"tol": tol, "sample_dt": float(sample_dt), "method": method,
            "stopped_early": False, "error_estimate": 0.0, "n_steps": 0}

    def _fail(message):
        partial = _build_trajectory(spec, np.array(times), np.array(states),
                                    x_star, f_star, meta,
                                    compute_observables=False)
        raise IntegrationFailure(message, partial=partial)

    def quiet_at(t, y):
        fn = _field_norm(spec, t, y)
        return fn <= 1e-12 * (1.0 + float(np.linalg.norm(y)))

    if method == "rk4":
        _integrate_rk4(fun, psi0, grid, times, states, meta,
                       quiet_at if early_stop else None)
    elif method == "dopri5":
        solver = RK45(fun, 0.0, psi0, t_bound=float(t_end), rtol=tol, atol=tol)
        idx = 0
        quiet = 0
        err_est = 0.0
        while solver.status == "running":
            try:
                solver.step()
            except FloatingPointError as exc:
                _fail(str(exc))
            if solver.status == "failed":
                _fail("adaptive step-size underflow")
            meta["n_steps"] += 1
            err_est += tol * (1.0 + float(np.linalg.norm(solver.y)))
            dense = solver.dense_output()
            while idx < grid.size and grid[idx] <= solver.t + 1e-12:
                y = dense(grid[idx])
                if not np.all(np.isfinite(y)):
                    _fail("non-finite state sample")
                times.append(float(grid[idx]))
                states.append(y)
                if early_stop:
                    quiet = quiet + 1 if quiet_at(grid[idx], y) else 0
                idx += 1
            if early_stop and quiet >= 5:
                meta["stopped_early"] = True
                break
        meta["error_estimate"] = err_est
    else:
        raise ValueError(f"unknown integrator {method!r}")

    return _build_trajectory(spec, np.array(times), np.array(states),
                             x_star, f_star, meta,
                             compute_observables=compute_observables)


def _integrate_rk4(fun, psi0, grid, times, states, meta, quiet_at=None):
    """Classical fixed-step RK4: one step per sample point."""
    y = psi0.copy()
    t_prev = 0.0
    quiet = 0
    for t_next in grid:
        h = t_next - t_prev
        k1 = fun(t_prev, y)
        k2 = fun(t_prev + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t_prev + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t_prev + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        meta["n_steps"] += 1
        times.append(float(t_next))
        states.append(y.copy())
        t_prev = t_next
        if quiet_at is not None:
            quiet = quiet + 1 if quiet_at(t_next, y) else 0
            if quiet >= 5:
                meta["stopped_early"] = True
                break


# ---------------------------------------------------------------------------
# discrete baselines
# ---------------------------------------------------------------------------

def discrete_fb_step(problem, x, alpha_bar, mu):
    """One forward-backward step x - alpha_bar G_mu(x).

    With alpha_bar = mu this is the proximal gradient (ISTA) update.
    """
    mu = check_mu_domain(mu, problem.f.L)
    return x - alpha_bar * generalized_gradient(problem, x, mu)


def discrete_dr_step(problem, z, mu):
    """One Douglas-Rachford step z - prox_f(z) + prox_g(2 prox_f(z) - z)."""
    mu = float(mu)
    if mu <= 0:
        raise ParameterDomainError("mu must be positive")
    if not problem.f.supports_prox():
        raise UnsupportedOperationError("DR step requires prox of the smooth part")
    xh = problem.f.prox(z, mu)
    return z - xh + problem.g.prox(2.0 * xh - z, mu)


def run_discrete(problem, kind, mu, n_steps, z0=None, alpha_bar=None,
                 dt=1.0, x_star=None, f_star=None):
    """Iterate a discrete splitting and package iterates as a Trajectory.

    Iterate k is placed at time k*dt so discrete baselines can be compared
    against continuous trajectories on a shared axis.
    """
    n = problem.dim
    z = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).copy()
    iterates = [z.copy()]
    if kind == "fb_discrete":
        step_mu = check_mu_domain(mu, problem.f.L)
        ab = step_mu if alpha_bar is None else float(alpha_bar)
        for _ in range(n_steps):
            z = discrete_fb_step(problem, z, ab, step_mu)
            iterates.append(z.copy())
        positions = np.asarray(iterates)
        primal = positions
    elif kind == "dr_discrete":
        for _ in range(n_steps):
            z = discrete_dr_step(problem, z, mu)
            iterates.append(z.copy())
        positions = np.asarray(iterates)
        primal = np.empty_like(positions)
        for i in range(positions.shape[0]):
            primal[i] = problem.f.prox(positions[i], mu)
    else:
        raise ValueError(f"unknown discrete kind {kind!r}")
    times = dt * np.arange(positions.shape[0], dtype=float)
    obs = _compute_observables(problem, mu, primal, x_star, f_star)
    meta = {"kind": kind, "mu": mu, "dt": dt, "n_steps": n_steps}
    if f_star is not None:
        meta["f_star"] = float(f_star)
    return Trajectory(kind=kind, mu=mu, times=times, position=positions,
                      velocity=positions[:, :0], primal=primal,
                      observables=obs, meta=meta)


# ---------------------------------------------------------------------------
# CSV export / import
# ---------------------------------------------------------------------------

def export_trajectory_csv(traj, path):
    """Write a trajectory trace.

    Columns: t, x_1..x_n, then z_1..z_n for DR kinds, then v_1..v_n for
    second-order kinds, then objective_gap, dist_sq, lyapunov. Missing
    observables are written as nan. Full-precision scientific notation.
    """
    n = traj.primal.shape[1]
    has_z = traj.kind in (DR_FLOW, ACC_DR, "dr_discrete")
    nv = traj.velocity.shape[1]
    header = ["t"] + [f"x_{i+1}" for i in range(n)]
    if has_z:
        header += [f"z_{i+1}" for i in range(n)]
    header += [f"v_{i+1}" for i in range(nv)]
    header += ["objective_gap", "dist_sq", "lyapunov"]
    gap = traj.observables.get("objective_gap")
    dist = traj.observables.get("dist_sq")
    lyap = traj.observables.get("lyapunov")
    S = traj.times.shape[0]

    def fmt(v):
        return f"{v:.17e}"

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(S):
            row = [fmt(traj.times[i])]
            row += [fmt(v) for v in traj.primal[i]]
            if has_z:
                row += [fmt(v) for v in traj.position[i]]
            row += [fmt(v) for v in traj.velocity[i]]
            row.append(fmt(gap[i]) if gap is not None else "nan")
            row.append(fmt(dist[i]) if dist is not None else "nan")
            row.append(fmt(lyap[i]) if lyap is not None else "nan")
            writer.writerow(row)


def read_trace_csv(path):
    """Read a trace written by export_trajectory_csv into arrays."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=float)
    cols = {name: data[:, j] for j, name in enumerate(header)}
    x_cols = [name for name in header if name.startswith("x_")]
    z_cols = [name for name in header if name.startswith("z_")]
    v_cols = [name for name in header if name.startswith("v_")]
    out = {
        "t": cols["t"],
        "x": np.stack([cols[c] for c in x_cols], axis=1) if x_cols else None,
        "z": np.stack([cols[c] for c in z_cols], axis=1) if z_cols else None,
        "v": np.stack([cols[c] for c in v_cols], axis=1) if v_cols else None,
        "objective_gap": cols["objective_gap"],
        "dist_sq": cols["dist_sq"],
        "lyapunov": cols["lyapunov"],
    }
    return out
