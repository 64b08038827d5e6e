"""Benchmark problem generators and the experiment runner.

Three seeded problem families are provided: l1-regularized least squares,
box-constrained QP with a planted spectrum, and l1-regularized ridge
logistic regression. ``run_benchmark`` generates a problem, solves for a
high-accuracy reference, integrates the requested dynamics and discrete
baselines, attaches rate certificates, and writes traces and a JSON
report.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import analysis, dynamics, envelopes
from .problems import (BoxIndicator, CompositeProblem, L1, LogisticRidge,
                       Quadratic)

__all__ = [
    "LambdaRule",
    "BenchmarkConfig",
    "BenchmarkReport",
    "gen_lasso",
    "gen_boxqp",
    "gen_logistic",
    "run_benchmark",
]

SCHEMA_VERSION = 1

LASSO = "lasso_l1"
BOX_QP = "box_qp"
LOGISTIC = "logistic_l1"

_ALL_DYNAMICS = ("fb_flow", "dr_flow", "acc_fb", "acc_dr",
                 "fb_discrete", "dr_discrete")


@dataclass(frozen=True)
class LambdaRule:
    """l1 weight selection: a fraction of the zero-point dual norm, or fixed."""

    kind: str = "fraction_of_max"
    value: float = 0.1

    def resolve(self, lam_max):
        if self.kind == "fraction_of_max":
            return self.value * lam_max
        if self.kind == "fixed":
            return self.value
        raise ValueError(f"unknown lambda rule {self.kind!r}")

    def to_dict(self):
        key = "fraction" if self.kind == "fraction_of_max" else "value"
        return {"type": self.kind, key: self.value}

    @staticmethod
    def from_dict(d):
        kind = d["type"]
        value = d.get("fraction", d.get("value"))
        return LambdaRule(kind=kind, value=float(value))


def _rng(seed):
    return np.random.default_rng(seed)


def _random_orthogonal(n, rng):
    # QR with sign fix for a deterministic, Haar-ish orthogonal factor
    M = rng.standard_normal((n, n))
    Qf, R = np.linalg.qr(M)
    return Qf * np.sign(np.diag(R))


def gen_lasso(s, n, lambda_rule=LambdaRule(), seed=0, support_fraction=0.1,
              noise_std=0.01):
    """l1-regularized least squares with Gaussian data.

    E has i.i.d. standard normal entries scaled by 1/sqrt(s); the target is
    E x_true + noise with a sparse planted x_true. The smooth part is the
    quadratic (1/2)||E x - q||^2 (up to an additive constant) and the
    strong convexity constant is pinned to zero in the rank-deficient
    regime s < n.
    """
    rng = _rng(seed)
    E = rng.standard_normal((s, n)) / math.sqrt(s)
    k = max(1, int(round(support_fraction * n)))
    support = rng.choice(n, size=k, replace=False)
    x_true = np.zeros(n)
    x_true[support] = rng.standard_normal(k)
    q_data = E @ x_true + noise_std * rng.standard_normal(s)
    Q = E.T @ E
    q_lin = -E.T @ q_data
    lam = lambda_rule.resolve(float(np.abs(E.T @ q_data).max()))
    f = Quadratic(Q, q_lin, m=0.0 if s < n else None)
    return CompositeProblem(f, L1(lam))


def gen_boxqp(n, kappa, seed=0, q_scale=3.0):
    """Box-constrained QP with a planted log-uniform spectrum on [1, kappa].

    The extreme eigenvalues are planted exactly, so m = 1 and L = kappa by
    construction; the box is [-1, 1] componentwise.
    """
    if n < 2 or kappa < 1:
        raise ValueError("need n >= 2 and kappa >= 1")
    rng = _rng(seed)
    U = _random_orthogonal(n, rng)
    d = np.empty(n)
    d[0], d[-1] = 1.0, float(kappa)
    if n > 2:
        d[1:-1] = np.exp(rng.uniform(0.0, math.log(kappa), n - 2))
    Q = U.T @ (d[:, None] * U)
    Q = 0.5 * (Q + Q.T)
    q = q_scale * rng.standard_normal(n)
    f = Quadratic(Q, q, m=1.0, L=float(kappa))
    return CompositeProblem(f, BoxIndicator(-np.ones(n), np.ones(n)))


def gen_logistic(s, n, ridge=0.1, lambda_rule=LambdaRule(), seed=0,
                 support_fraction=0.1, feature_mean=1.0):
    """l1-regularized ridge logistic regression with planted sparse logits.

    Features are Gaussian around ``feature_mean`` (uncentered, as raw data
    would be), which drives the top curvature of A'A to about s*n and
    hence condition numbers L/m in the 1e5 range at 200x1000, ridge 0.1.
    Labels are Bernoulli draws from a planted sparse logit model.
    """
    rng = _rng(seed)
    A = feature_mean + rng.standard_normal((s, n))
    k = max(1, int(round(support_fraction * n)))
    support = rng.choice(n, size=k, replace=False)
    x_plant = np.zeros(n)
    x_plant[support] = rng.standard_normal(k)
    logits = A @ x_plant
    spread = float(np.std(logits))
    if spread > 0:
        logits *= 2.0 / spread
    y = (rng.uniform(size=s) < expit(logits)).astype(float)
    f = LogisticRidge(A, y, ridge)
    lam = lambda_rule.resolve(float(np.abs(A.T @ (0.5 - y)).max()))
    return CompositeProblem(f, L1(lam))


# ---------------------------------------------------------------------------
# configuration / report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    example: str = LASSO
    dims: tuple = (20, 100)          # (rows s, cols n); box QP uses cols only
    kappa: float = 1e3               # box QP condition number
    ridge: float = 0.1               # logistic ridge weight
    lambda_rule: LambdaRule = field(default_factory=LambdaRule)
    seed: int = 0
    dynamics: tuple = ("acc_fb", "acc_dr", "fb_flow")
    t_end: float = 200.0
    tol: float = 1e-9
    sample_dt: float = 0.1
    window: tuple | None = None      # rate-fit window; example default if None

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "example": self.example,
            "dims": list(self.dims),
            "kappa": self.kappa,
            "ridge": self.ridge,
            "lambda_rule": self.lambda_rule.to_dict(),
            "seed": self.seed,
            "dynamics": list(self.dynamics),
            "t_end": self.t_end,
            "tol": self.tol,
            "sample_dt": self.sample_dt,
            "window": list(self.window) if self.window else None,
        }

    @staticmethod
    def from_dict(d):
        schema = d.get("schema")
        if schema != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")
        unknown = [k for k in d["dynamics"] if k not in _ALL_DYNAMICS]
        if unknown:
            raise ValueError(f"unknown dynamics {unknown}")
        return BenchmarkConfig(
            example=d["example"],
            dims=tuple(d.get("dims", (20, 100))),
            kappa=float(d.get("kappa", 1e3)),
            ridge=float(d.get("ridge", 0.1)),
            lambda_rule=LambdaRule.from_dict(
                d.get("lambda_rule", {"type": "fraction_of_max", "fraction": 0.1})),
            seed=int(d.get("seed", 0)),
            dynamics=tuple(d["dynamics"]),
            t_end=float(d.get("t_end", 200.0)),
            tol=float(d.get("tol", 1e-9)),
            sample_dt=float(d.get("sample_dt", 0.1)),
            window=tuple(d["window"]) if d.get("window") else None,
        )

    @staticmethod
    def load(path):
        with open(path, "r", encoding="utf-8") as fh:
            return BenchmarkConfig.from_dict(json.load(fh))


@dataclass
class BenchmarkReport:
    problem_meta: dict
    dynamics: dict
    wall_clock: float

    def all_passed(self):
        flags = [rec.get("pass") for rec in self.dynamics.values()
                 if "pass" in rec]
        return all(flags) if flags else False

    def to_dict(self):
        return {
            "problem": self.problem_meta,
            "dynamics": self.dynamics,
            "wall_clock": self.wall_clock,
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def generate_problem(config):
    if config.example == LASSO:
        return gen_lasso(config.dims[0], config.dims[1],
                         lambda_rule=config.lambda_rule, seed=config.seed)
    if config.example == BOX_QP:
        return gen_boxqp(config.dims[1], config.kappa, seed=config.seed)
    if config.example == LOGISTIC:
        return gen_logistic(config.dims[0], config.dims[1],
                            ridge=config.ridge,
                            lambda_rule=config.lambda_rule, seed=config.seed)
    raise ValueError(f"unknown example {config.example!r}")


def _example_setup(config, problem):
    """Per-example penalty, flow time scale, and certification plan."""
    m, L = problem.f.m, problem.f.L
    alpha_flow = 1.0 / L
    if config.example == LASSO:
        mu = 1.0 / (2.0 * L)
        window = config.window or (10.0, min(200.0, config.t_end))
        return {"mu": mu, "alpha_flow": alpha_flow, "mode": "sublinear",
                "window": window}
    if config.example == BOX_QP:
        mu = 1.0 / (2.0 * L)
        window = config.window or (0.1 * config.t_end, 0.9 * config.t_end)
        return {"mu": mu, "alpha_flow": alpha_flow, "mode": "exponential",
                "window": window}
    if config.example == LOGISTIC:
        alpha = 1.0 / L
        sched = dynamics.schedule_strongly_convex(alpha, m)
        kappa = L / m
        mu = min(math.sqrt(sched.gamma() * sched.beta()) / (2.0 * L),
                 1.0 / (L * kappa ** 0.25))
        window = config.window or (0.1 * config.t_end, 0.9 * config.t_end)
        return {"mu": mu, "alpha_flow": alpha, "mode": "exponential",
                "window": window}
    raise ValueError(f"unknown example {config.example!r}")


def _make_spec(config, problem, kind, setup):
    """Dynamics spec plus the theoretical rate for certification."""
    m, L = problem.f.m, problem.f.L
    mu, alpha_flow = setup["mu"], setup["alpha_flow"]
    if kind in ("fb_flow", "dr_flow"):
        sched = dynamics.ConvexSchedule(alpha=alpha_flow)
        rho = alpha_flow * m if m > 0 else None
        return dynamics.DynamicsSpec(kind, problem, mu, sched), rho
    if config.example == LASSO:
        sched = dynamics.ConvexSchedule(alpha=alpha_flow)
        return dynamics.DynamicsSpec(kind, problem, mu, sched), None
    if config.example == BOX_QP:
        env_kind = envelopes.FB if kind == "acc_fb" else envelopes.DR
        consts = envelopes.envelope_constants(m, L, mu, env_kind)
        alpha = 1.0 / consts.L_tilde
        sched = dynamics.schedule_strongly_convex(alpha, consts.m_tilde)
        return dynamics.DynamicsSpec(kind, problem, mu, sched), sched.rate
    # logistic: accelerated FB certified via the smooth-part constants
    sched = dynamics.schedule_strongly_convex(alpha_flow, m)
    return dynamics.DynamicsSpec(kind, problem, mu, sched), sched.rate


def _run_one(config, problem, kind, setup, reference, out_dir):
    mu = setup["mu"]
    x_star, f_star = reference.x, reference.value
    t0 = time.perf_counter()
    if kind in ("fb_discrete", "dr_discrete"):
        h = 1.0 / problem.f.L
        dt = h / setup["alpha_flow"]
        n_steps = int(math.ceil(config.t_end / dt))
        traj = dynamics.run_discrete(problem, kind, mu, n_steps, dt=dt,
                                     x_star=x_star, f_star=f_star)
        rho = setup["alpha_flow"] * problem.f.m if problem.f.m > 0 else None
    else:
        spec, rho = _make_spec(config, problem, kind, setup)
        traj = dynamics.integrate(spec, t_end=config.t_end, tol=config.tol,
                                  sample_dt=config.sample_dt,
                                  x_star=x_star, f_star=f_star)
    if setup["mode"] == "sublinear":
        cert = analysis.certify_sublinear(traj, setup["window"])
    else:
        if rho is None:
            raise ValueError(f"no theoretical rate available for {kind}")
        cert = analysis.certify_exponential(traj, rho, setup["window"])
    elapsed = time.perf_counter() - t0
    if out_dir is not None:
        dynamics.export_trajectory_csv(
            traj, os.path.join(out_dir, f"trace_{kind}.csv"))
    gap = traj.observables["objective_gap"]
    dist = traj.observables["dist_sq"]
    return {
        "pass": bool(cert.passed),
        "fitted": cert.fitted,
        "theoretical": cert.theoretical,
        "certificate": cert.to_json_dict(),
        "final_gap": float(gap[-1]),
        "final_dist_sq": float(dist[-1]),
        "wall_clock": elapsed,
    }


def run_benchmark(config, out_dir=None):
    """Generate, solve, integrate, certify; failures are recorded per
    dynamics without aborting the batch."""
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    t_start = time.perf_counter()
    problem = generate_problem(config)
    setup = _example_setup(config, problem)
    reference = analysis.solve_reference(problem, setup["mu"], tol=1e-12)
    meta = {
        "example": config.example,
        "dims": list(config.dims),
        "seed": config.seed,
        "n": problem.dim,
        "m": problem.f.m,
        "L": problem.f.L,
        "mu": setup["mu"],
        "alpha_flow": setup["alpha_flow"],
        "mode": setup["mode"],
        "window": list(setup["window"]),
        "f_star": reference.value,
        "reference_grad_map_norm": reference.grad_map_norm,
    }
    if problem.g.kind == "l1":
        meta["lambda"] = problem.g.weight
    records = {}
    for kind in config.dynamics:
        try:
            records[kind] = _run_one(config, problem, kind, setup,
                                     reference, out_dir)
        except Exception as exc:                        # noqa: BLE001
            records[kind] = {"error": f"{type(exc).__name__}: {exc}"}
    report = BenchmarkReport(problem_meta=meta, dynamics=records,
                             wall_clock=time.perf_counter() - t_start)
    if out_dir is not None:
        report.write(os.path.join(out_dir, "report.json"))
        with open(os.path.join(out_dir, "config.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(config.to_dict(), fh, indent=2)
    return report
