import numpy as np
import pytest

import lgnsde.autodiff as ad
from lgnsde.autodiff import Tensor, backward
from lgnsde.sde import (BrownianPath, DivergedError, SDEConfig,
                        em_step, integrate, srk_step)


def const_drift(value):
    return lambda h, t: np.full(h.shape, value) if not isinstance(h, Tensor) \
        else Tensor(np.full(h.data.shape, value))


class TestBrownianPath:
    def test_deterministic(self):
        a = BrownianPath(5, 4, 3, 2)
        b = BrownianPath(5, 4, 3, 2)
        for x, y in zip(a.increments, b.increments):
            assert np.array_equal(x, y)

    def test_increment_variance(self):
        # pooled per-entry variance over many paths approaches dt
        L, n, d = 4, 5, 3
        samples = np.concatenate([np.concatenate(
            [w.reshape(-1) for w in BrownianPath(s, L, n, d).increments])
            for s in range(200)])
        dt = 1.0 / L
        se = dt * np.sqrt(2.0 / samples.size)
        assert abs(samples.var() - dt) < 3 * se


class TestEMStep:
    def test_direct_substitution(self):
        # 1 + 2*0.1 + 0.5*0.3 = 1.35
        out = em_step(np.array(1.0), np.array(2.0), 0.5, np.array(0.3), 0.1)
        assert out == pytest.approx(1.35, abs=1e-15)

    def test_no_drift_no_noise(self):
        h = np.array([2.0, -1.0])
        assert np.array_equal(em_step(h, np.zeros(2), 0.0, np.ones(2), 0.1), h)

    def test_telescoping_with_zero_drift(self):
        path = BrownianPath(3, 10, 4, 2)
        h = np.zeros((4, 2))
        for dw in path.increments:
            h = em_step(h, np.zeros((4, 2)), 0.7, dw, 0.1)
        assert np.abs(h - 0.7 * sum(path.increments)).max() < 1e-14


class TestSRKStep:
    def test_constant_drift_equals_em(self):
        h = np.array([[1.0, 2.0]])
        dw = np.array([[0.3, -0.2]])
        em = em_step(h, np.full((1, 2), 1.5), 0.5, dw, 0.25)
        srk = srk_step(h, const_drift(1.5), 0.5, dw, 0.25, 0.0)
        assert np.abs(em - srk).max() < 1e-15

    def test_linear_drift_third_order_local_error(self):
        # g=0, F = -H: one step should match exp(-dt) H to O(dt^3)
        errs = []
        for dt in (0.1, 0.05):
            h = np.array(1.0)
            out = srk_step(h, lambda x, t: -x, 0.0, np.array(0.0), dt, 0.0)
            errs.append(abs(float(out) - np.exp(-dt)))
        assert errs[0] / errs[1] == pytest.approx(8.0, rel=0.25)

    def test_ou_variance_and_beats_em(self):
        # dH = -H dt + dW: Var(H(1)) = (1 - e^-2)/2
        theta, g, L, n_paths = 1.0, 1.0, 20, 10_000
        drift = lambda h, t: -theta * h
        analytic_var = g * g * (1 - np.exp(-2 * theta)) / (2 * theta)

        def run(scheme, L, seed):
            rng = np.random.Generator(np.random.PCG64(seed))
            dt = 1.0 / L
            h = np.ones(n_paths)
            for j in range(L):
                dw = rng.standard_normal(n_paths) * np.sqrt(dt)
                if scheme == "em":
                    h = em_step(h, drift(h, 0), g, dw, dt)
                else:
                    h = srk_step(h, drift, g, dw, dt, j * dt)
            return h

        h = run("srk", 100, 0)
        se = analytic_var * np.sqrt(2.0 / (n_paths - 1))
        assert abs(h.var(ddof=1) - analytic_var) < 3 * se
        m_true = np.exp(-1.0)
        em_err = abs(run("em", 20, 1).mean() - m_true) + \
            abs(run("em", 20, 1).var(ddof=1) - analytic_var)
        srk_err = abs(run("srk", 20, 1).mean() - m_true) + \
            abs(run("srk", 20, 1).var(ddof=1) - analytic_var)
        assert srk_err <= em_err

    def test_em_weak_convergence_halves(self):
        # mean error on the OU problem roughly halves when L doubles
        theta, n_paths = 1.0, 400_000
        errs = []
        for L in (10, 20):
            rng = np.random.Generator(np.random.PCG64(2))
            dt = 1.0 / L
            h = np.ones(n_paths)
            for j in range(L):
                dw = rng.standard_normal(n_paths) * np.sqrt(dt)
                h = em_step(h, -theta * h, 1.0, dw, dt)
            errs.append(abs(h.mean() - np.exp(-1.0)))
        assert 0.35 <= errs[1] / errs[0] <= 0.65


class TestIntegrate:
    def _setup(self, g=1.0, steps=8, scheme="em", seed=0, n=3, d=2):
        cfg = SDEConfig(steps=steps, g=g, scheme=scheme)
        path = BrownianPath(seed, steps, n, d)
        h0 = Tensor(np.arange(float(n * d)).reshape(n, d))
        return cfg, path, h0

    def test_identical_drifts_zero_kl(self):
        cfg, path, h0 = self._setup()
        drift = const_drift(0.3)
        rec = integrate(h0, drift, drift, cfg, path)
        assert float(rec.kl.data) == 0.0

    def test_constant_offset_closed_form(self):
        # kl = 0.5 * n * d * (delta/g)^2 * (t1-t0), exact for constant drifts
        delta, g = 0.7, 1.3
        cfg, path, h0 = self._setup(g=g, steps=64)
        rec = integrate(h0, const_drift(delta), const_drift(0.0), cfg, path)
        expect = 0.5 * 3 * 2 * (delta / g) ** 2
        assert float(rec.kl.data) == pytest.approx(expect, rel=1e-12)

    def test_kl_decreases_monotonically_in_g(self):
        kls = []
        for g in (0.5, 1.0, 2.0, 4.0):
            cfg, path, h0 = self._setup(g=g)
            rec = integrate(h0, const_drift(1.0), const_drift(0.0), cfg, path)
            kls.append(float(rec.kl.data))
        assert all(a > b for a, b in zip(kls, kls[1:]))

    def test_initial_state_preserved(self):
        cfg, path, h0 = self._setup()
        rec = integrate(h0, const_drift(0.1), const_drift(0.0), cfg, path)
        assert rec.states[0] is h0
        assert len(rec.states) == cfg.steps + 1

    def test_coupled_paths_drift_only_deviation(self):
        # same path, g=0 limit, identical drift: the gap evolves as an ODE
        cfg = SDEConfig(steps=16, g=1e-12, scheme="em")
        path = BrownianPath(4, 16, 2, 2)
        drift = lambda h, t: h * (-0.5) if isinstance(h, Tensor) else -0.5 * h
        a = integrate(Tensor(np.ones((2, 2))), drift, drift, cfg, path)
        b = integrate(Tensor(np.ones((2, 2)) + 0.1), drift, drift, cfg, path)
        gap = b.states[-1].data - a.states[-1].data
        expect = 0.1 * (1 - 0.5 / 16) ** 16
        assert np.abs(gap - expect).max() < 1e-12

    def test_kl_quadrature_converges(self):
        # state-dependent smooth drift, noiseless dynamics: |kl(L)-kl(2L)| -> 0
        drift_a = lambda h, t: np.tanh(h) if not isinstance(h, Tensor) else ad.tanh(h)
        drift_b = const_drift(0.0)
        kls = {}
        for L in (8, 16, 32, 64):
            cfg = SDEConfig(steps=L, g=1e-9, scheme="em")
            path = BrownianPath(0, L, 3, 2)
            h0 = Tensor(np.linspace(-1, 1, 6).reshape(3, 2))
            kls[L] = float(integrate(h0, drift_a, drift_b, cfg, path).kl.data)
        gaps = [abs(kls[8] - kls[16]), abs(kls[16] - kls[32]),
                abs(kls[32] - kls[64])]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[1] / gaps[0] < 0.6 and gaps[2] / gaps[1] < 0.6

    def test_kl_gradient_matches_finite_differences(self):
        # posterior drift is tanh(H W): KL grad w.r.t. W against central FD
        cfg, path, h0 = self._setup(steps=6)
        rng = np.random.Generator(np.random.PCG64(7))
        w = Tensor(rng.standard_normal((2, 2)) * 0.4, requires_grad=True)

        def drift(h, t):
            if isinstance(h, Tensor):
                return ad.tanh(ad.matmul(h, w))
            return np.tanh(h @ w.data)

        rec = integrate(h0, drift, const_drift(0.0), cfg, path)
        backward(rec.kl)
        eps = 1e-6
        fd = np.zeros_like(w.data)
        for idx in np.ndindex(*w.data.shape):
            orig = w.data[idx]
            vals = []
            for delta in (eps, -eps):
                w.data[idx] = orig + delta
                with ad.no_grad():
                    vals.append(float(integrate(
                        h0, drift, const_drift(0.0), cfg, path).kl.data))
            w.data[idx] = orig
            fd[idx] = (vals[0] - vals[1]) / (2 * eps)
        denom = np.maximum(np.abs(fd), 1e-4)
        assert (np.abs(w.grad - fd) / denom).max() < 1e-4

    def test_diverged_names_step(self):
        cfg = SDEConfig(steps=4, g=1.0, scheme="em")
        path = BrownianPath(0, 4, 1, 1)

        def blowup(h, t):
            data = h.data if isinstance(h, Tensor) else h
            return Tensor(np.full(data.shape, np.inf))

        with pytest.raises(DivergedError, match="step 0"):
            integrate(Tensor(np.ones((1, 1))), blowup, const_drift(0.0), cfg, path)

    def test_path_config_mismatch(self):
        cfg = SDEConfig(steps=4)
        path = BrownianPath(0, 8, 1, 1)
        with pytest.raises(ValueError, match="steps"):
            integrate(Tensor(np.ones((1, 1))), const_drift(0.0),
                      const_drift(0.0), cfg, path)


class TestSDEConfig:
    @pytest.mark.parametrize("kwargs", [dict(t1=0.0), dict(steps=0),
                                        dict(g=0.0), dict(scheme="milstein")])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SDEConfig(**kwargs)
