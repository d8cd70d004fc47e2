"""Empirical verification harness: variance bound, perturbation bound,
Lipschitz estimation, residual-network equivalence, finite-difference
gradient checking.

Monte-Carlo runs here drive the model's drift closure with batched numpy
states (no tape), which the drift supports natively; a unit test pins the
batched path against the tape path to 1e-12.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, no_grad
from .sde import BrownianPath, integrate


@dataclass
class LipschitzEstimates:
    L_f: float
    L_g: float
    L_h: float


@dataclass
class PerturbationSpec:
    epsilon: float = 1e-2
    trials: int = 50
    grid_points: int = 8
    seed: int = 0
    direction: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.direction is not None:
            nrm = np.linalg.norm(self.direction)
            if abs(nrm - 1.0) > 1e-12:
                raise ValueError("direction must have unit Frobenius norm")


def spectral_norm(mat, tol=1e-10, max_iter=10000):
    """Largest singular value by power iteration on mat^T mat."""
    mat = np.asarray(mat, dtype=np.float64)
    v = np.ones(mat.shape[1]) / np.sqrt(mat.shape[1])
    prev = 0.0
    for _ in range(max_iter):
        w = mat.T @ (mat @ v)
        s = np.linalg.norm(w)
        if s == 0.0:
            return 0.0
        v = w / s
        val = np.sqrt(s)
        if abs(val - prev) <= tol * max(1.0, val):
            return float(val)
        prev = val
    return float(prev)


def _eval_h0(model, graph):
    with no_grad():
        return model.encode(graph, training=False).data


def _jacobian_norm(drift, h, t, fd_eps=1e-6):
    """Operator norm of the local drift Jacobian by finite differences.

    The Jacobian is assembled column by column; verification states are
    small (tens of coordinates), so the dense assembly is cheap.
    """
    dim = h.size
    base = drift(h, t)
    jac = np.empty((dim, dim))
    flat = h.reshape(-1)
    for i in range(dim):
        pert = flat.copy()
        pert[i] += fd_eps
        jac[:, i] = (drift(pert.reshape(h.shape), t) - base).reshape(-1) / fd_eps
    return spectral_norm(jac)


def estimate_lipschitz(model, graph, samples=200, seed=0, time_points=5,
                       scale=1.0):
    """Empirical Lipschitz constants of drift, diffusion and decoder.

    L_f combines random-pair secant ratios with local Jacobian-norm power
    iterations around sampled states, maximized over a time grid. L_g is 0
    (constant diffusion) and L_h is the decoder's exact spectral norm.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    drift = model.posterior_drift_fn(graph)
    cfg = model.sde_config
    times = np.linspace(cfg.t0, cfg.t1, time_points)
    h0 = _eval_h0(model, graph)
    sigma = scale * max(1.0, np.abs(h0).max())
    best = 0.0
    used = 0
    for _ in range(samples):
        h1 = h0 + sigma * rng.standard_normal(h0.shape)
        h2 = h0 + sigma * rng.standard_normal(h0.shape)
        denom = np.linalg.norm(h1 - h2)
        if denom == 0.0:
            continue
        used += 1
        for t in times:
            ratio = np.linalg.norm(drift(h1, t) - drift(h2, t)) / denom
            best = max(best, ratio)
    if used == 0:
        raise ValueError("all sampled pairs degenerate")
    # local curvature can exceed any secant ratio; probe Jacobians too
    # (dense FD assembly, so only for desk-scale states)
    if h0.size <= 600:
        for _ in range(max(8, samples // 25)):
            h = h0 + sigma * rng.standard_normal(h0.shape)
            for t in times:
                best = max(best, _jacobian_norm(drift, h, t))
    return LipschitzEstimates(L_f=best, L_g=0.0,
                              L_h=spectral_norm(model.W_dec.data))


# ---------------------------------------------------------------- lemma 1

def _batched_simulate(model, graph, n_paths, seed, record_idx):
    """EM-integrate `n_paths` coupled-shape states; returns {step: states}."""
    cfg = model.sde_config
    drift = model.posterior_drift_fn(graph)
    rng = np.random.Generator(np.random.PCG64(seed))
    h0 = _eval_h0(model, graph)
    h = np.broadcast_to(h0, (n_paths,) + h0.shape).copy()
    dt = cfg.dt
    out = {}
    if 0 in record_idx:
        out[0] = h.copy()
    for j in range(cfg.steps):
        t = cfg.t0 + j * dt
        dw = rng.standard_normal(h.shape) * np.sqrt(dt)
        h = h + drift(h, t) * dt + cfg.g * dw
        if j + 1 in record_idx:
            out[j + 1] = h.copy()
    return out


def _sum_variance(states_3d):
    """Sum of per-coordinate variances across the path axis (trace form)."""
    return float(states_3d.var(axis=0, ddof=1).sum())


def lemma1_check(model, graph, mc=10_000, grid_points=8, seed=0,
                 zero_drift=False):
    """Variance-bound check: Var(y(t)) <= L_h^2 Var(H(t)) on an MC ensemble.

    Also reports the bounded-diffusion growth bound g^2 t n h, which is an
    equality for zero drift and informational for a trained drift.
    """
    if mc < 1000:
        raise ValueError("need at least 1e3 paths")
    cfg = model.sde_config
    if zero_drift:
        saved = [(p, p.data.copy()) for p in (model.W1, model.b1, model.W2, model.b2)]
        for p, _ in saved:
            p.data = np.zeros_like(p.data)
    try:
        idx = np.unique(np.linspace(1, cfg.steps, grid_points).round().astype(int))
        states = _batched_simulate(model, graph, mc, seed, set(idx.tolist()))
    finally:
        if zero_drift:
            for p, data in saved:
                p.data = data
    l_h = spectral_norm(model.W_dec.data)
    slack = 3.0 / np.sqrt(mc)
    w, b = model.W_dec.data, model.b_dec.data
    rows = []
    for j in idx:
        t = cfg.t0 + j * cfg.dt
        h = states[j]
        var_h = _sum_variance(h)
        var_y = _sum_variance(h @ w + b)
        diff_bound = cfg.g ** 2 * (t - cfg.t0) * graph.n * model.hidden
        rows.append({
            "t": float(t),
            "var_h": var_h,
            "var_y": var_y,
            "output_bound": l_h ** 2 * var_h * (1.0 + slack),
            "output_pass": bool(var_y <= l_h ** 2 * var_h * (1.0 + slack)),
            "diffusion_bound": diff_bound * (1.0 + slack),
            "diffusion_pass": bool(var_h <= diff_bound * (1.0 + slack)),
        })
    return {"L_h": l_h, "mc": mc, "slack": slack, "zero_drift": zero_drift,
            "grid": rows, "pass": all(r["output_pass"] for r in rows)}


# ---------------------------------------------------------------- lemma 2

def lemma2_check(model, graph, spec, lips=None, seed_offset=1000):
    """Coupled-path perturbation bound E||H - H~||_F <= eps * e^{L_f t}.

    Both runs share each trial's Brownian increments, so with a constant
    diffusion the noise cancels exactly and the deviation is drift-driven.
    L_f is the max of the sampled estimate and the Lipschitz ratios realized
    along the coupled trajectories (the bound is conditional on L_f being a
    true upper bound; the report carries both numbers).
    """
    cfg = model.sde_config
    drift = model.posterior_drift_fn(graph)
    h0 = _eval_h0(model, graph)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if lips is None:
        lips = estimate_lipschitz(model, graph, samples=100, seed=spec.seed)
    dirs = np.empty((spec.trials,) + h0.shape)
    for k in range(spec.trials):
        if spec.direction is not None:
            dirs[k] = spec.direction
        else:
            d = rng.standard_normal(h0.shape)
            dirs[k] = d / np.linalg.norm(d)
    h = np.broadcast_to(h0, (spec.trials,) + h0.shape).copy()
    ht = h + spec.epsilon * dirs
    dt = cfg.dt
    idx = np.unique(np.linspace(1, cfg.steps, spec.grid_points).round().astype(int))
    measured = {}
    realized_lf = 0.0
    for j in range(cfg.steps):
        t = cfg.t0 + j * dt
        f1 = drift(h, t)
        f2 = drift(ht, t)
        dev = np.linalg.norm((ht - h).reshape(spec.trials, -1), axis=1)
        fdiff = np.linalg.norm((f2 - f1).reshape(spec.trials, -1), axis=1)
        ok = dev > 0
        if ok.any():
            realized_lf = max(realized_lf, float((fdiff[ok] / dev[ok]).max()))
        dw = rng.standard_normal(h.shape) * np.sqrt(dt)
        h = h + f1 * dt + cfg.g * dw
        ht = ht + f2 * dt + cfg.g * dw
        if j + 1 in idx:
            measured[j + 1] = float(
                np.linalg.norm((ht - h).reshape(spec.trials, -1), axis=1).mean())
    l_f = max(lips.L_f, realized_lf)
    rows = []
    for j in idx:
        t = cfg.t0 + j * dt
        bound = spec.epsilon * np.exp((l_f + 0.5 * lips.L_g ** 2) * (t - cfg.t0))
        rows.append({"t": float(t), "measured": measured[j], "bound": float(bound),
                     "pass": bool(measured[j] <= bound * (1.0 + 1e-6))})
    return {"epsilon": spec.epsilon, "trials": spec.trials,
            "L_f_sampled": lips.L_f, "L_f_realized": realized_lf, "L_f": l_f,
            "L_g": lips.L_g, "grid": rows,
            "pass": all(r["pass"] for r in rows)}


# ---------------------------------------------------- ResNet equivalence

def resnet_equivalence(model, graph, path, steps):
    """Compare the unrolled EM solve against an explicit residual network.

    Layer j computes H + F(H, t_j) dt + g dW_j with shared drift weights;
    the two computations should agree to floating-point identity.
    """
    cfg = model.sde_config
    if cfg.scheme != "em":
        raise ValueError("ResNet equivalence is defined for the EM scheme")
    if cfg.steps != steps or path.steps != steps:
        raise ValueError("config, path and requested depth disagree")
    drift = model.posterior_drift_fn(graph)
    dt = cfg.dt

    def make_layer(j):
        t_j = cfg.t0 + j * dt
        dw = path.increments[j]

        def layer(h):
            return h + drift(h, t_j) * dt + cfg.g * dw

        return layer

    with no_grad():
        h0 = model.encode(graph, training=False)
        h = h0
        for layer in (make_layer(j) for j in range(steps)):
            h = layer(h)
        record = integrate(h0, drift, model.prior_drift_fn(), cfg, path)
    return float(np.abs(h.data - record.states[-1].data).max())


# ------------------------------------------------------- gradient checks

def elbo_gradient_check(model, graph, path, fd_eps=1e-5, denom_floor=1e-4):
    """Max relative error of analytic ELBO gradients vs central differences.

    The Brownian path is frozen, dropout is off, so the ELBO is a smooth
    deterministic function of the parameters. Relative error uses
    |a - f| / max(|a|, |f|, denom_floor) so near-zero gradients are judged
    on an absolute scale.
    """
    params = model.parameters()
    for p in params:
        p.grad = None
    loss = model.elbo(graph, path, training=False)
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    def eval_elbo():
        with no_grad():
            return float(model.elbo(graph, path, training=False).data)

    worst = {}
    for p, name, ga in zip(params, model._param_names, analytic):
        flat = p.data.reshape(-1)
        gfd = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + fd_eps
            up = eval_elbo()
            flat[i] = orig - fd_eps
            dn = eval_elbo()
            flat[i] = orig
            gfd[i] = (up - dn) / (2.0 * fd_eps)
        gfd = gfd.reshape(p.data.shape)
        rel = np.abs(ga - gfd) / np.maximum(np.maximum(np.abs(ga), np.abs(gfd)),
                                            denom_floor)
        worst[name] = float(rel.max())
    worst["max"] = max(worst.values())
    for p in params:
        p.grad = None
    return worst


# --------------------------------------------------------------- reports

def write_report(report, json_path, csv_path=None):
    """Verification report as JSON, with a CSV twin of the grid rows."""
    with open(json_path, "w") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")
    if csv_path is not None and "grid" in report:
        rows = report["grid"]
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            cols = sorted(rows[0].keys())
            w.writerow(cols)
            for r in rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c]
                            for c in cols])
