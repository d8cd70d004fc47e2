"""Brownian-path generation and latent-SDE integration with pathwise KL.

The solver is unrolled (discretize-then-optimize): every step is recorded
on the autodiff tape, so gradients of the accumulated KL and of any
function of the final state flow back into the drift parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, tensor_sum


class DivergedError(RuntimeError):
    """Raised when the state turns non-finite during integration."""

    def __init__(self, step):
        super().__init__(f"integration diverged at step {step}")
        self.step = step


@dataclass
class SDEConfig:
    t0: float = 0.0
    t1: float = 1.0
    steps: int = 16
    g: float = 1.0
    scheme: str = "srk"   # "em" or "srk"

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError("t1 must exceed t0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.g <= 0:
            raise ValueError("diffusion constant g must be > 0")
        if self.scheme not in ("em", "srk"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def dt(self):
        return (self.t1 - self.t0) / self.steps


class BrownianPath:
    """Seeded Wiener increments: `steps` arrays of shape (n, d) ~ N(0, dt)."""

    def __init__(self, seed, steps, n, d, t0=0.0, t1=1.0):
        self.seed = int(seed)
        self.steps = int(steps)
        self.n = int(n)
        self.d = int(d)
        self.t0 = float(t0)
        self.t1 = float(t1)
        dt = (t1 - t0) / steps
        rng = np.random.Generator(np.random.PCG64(self.seed))
        self.increments = [rng.standard_normal((n, d)) * np.sqrt(dt)
                           for _ in range(steps)]


@dataclass
class TrajectoryRecord:
    states: list            # H(t_j) for j = 0..L, Tensors
    kl: Tensor              # scalar, on the tape
    times: np.ndarray = field(default=None)


def em_step(h, f, g, dw, dt):
    """Euler-Maruyama: H + F dt + g dW. Works on Tensors or ndarrays."""
    return h + f * dt + g * dw


def srk_step(h, drift_fn, g, dw, dt, t, k1=None):
    """Heun-type step for additive noise.

    K1 = F(H, t); K2 = F(H + K1 dt + g dW, t + dt);
    H' = H + (K1 + K2) dt / 2 + g dW. The noise term is exact for a
    constant diffusion, so only the drift is corrected to second order.
    """
    if k1 is None:
        k1 = drift_fn(h, t)
    k2 = drift_fn(h + k1 * dt + g * dw, t + dt)
    return h + (k1 + k2) * (dt / 2.0) + g * dw


def integrate(h0, posterior_drift, prior_drift, config, path):
    """Advance h0 with the posterior drift, accumulating the pathwise KL.

    KL uses left-endpoint quadrature of 0.5 * ||(F_post - F_prior) / g||_F^2,
    on the same grid as the solver, and stays differentiable w.r.t. the
    posterior drift parameters.
    """
    if path.steps != config.steps:
        raise ValueError(f"path has {path.steps} steps, config wants {config.steps}")
    n, d = h0.data.shape if isinstance(h0, Tensor) else np.asarray(h0).shape
    if (path.n, path.d) != (n, d):
        raise ValueError(f"path shape ({path.n},{path.d}) != state shape ({n},{d})")
    dt = config.dt
    g = config.g
    tensor_mode = isinstance(h0, Tensor)
    h = h0
    kl = Tensor(0.0) if tensor_mode else 0.0
    states = [h]
    times = config.t0 + dt * np.arange(config.steps + 1)
    for j in range(config.steps):
        t = times[j]
        dw = path.increments[j]
        f_post = posterior_drift(h, t)
        f_prior = prior_drift(h, t)
        v = (f_post - f_prior) * (1.0 / g)
        if tensor_mode:
            kl = kl + tensor_sum(v * v) * (0.5 * dt)
        else:
            kl = kl + 0.5 * dt * float(np.sum(v * v))
        if config.scheme == "em":
            h = em_step(h, f_post, g, dw, dt)
        else:
            h = srk_step(h, posterior_drift, g, dw, dt, t, k1=f_post)
        data = h.data if isinstance(h, Tensor) else h
        if not np.all(np.isfinite(data)):
            raise DivergedError(j)
        states.append(h)
    if not tensor_mode:
        kl = Tensor(kl)
    return TrajectoryRecord(states=states, kl=kl, times=times)
