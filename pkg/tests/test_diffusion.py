import numpy as np
import pytest
import torch

from relight.diffusion import (
    NoisePredictor,
    NoiseSchedule,
    default_schedule,
    enhance,
    make_schedule,
    p_sample_step,
    q_sample,
    respace_schedule,
    sample_illumination,
)
from relight.illumination import IlluminationNet


def _rand(shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(shape, generator=g, dtype=torch.float64)


class TestSchedule:
    def test_single_step_product(self):
        s = make_schedule(1, 0.1, 0.1)
        np.testing.assert_allclose(s.alpha_bar, [0.9])

    def test_alpha_bar_strictly_decreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            lo = float(rng.uniform(1e-5, 0.1))
            hi = float(rng.uniform(lo, 0.5))
            t = int(rng.integers(2, 300))
            s = make_schedule(t, lo, hi)
            assert np.all(np.diff(s.alpha_bar) < 0)

    def test_classic_1000_step_terminal_alpha_bar(self):
        s = make_schedule(1000, 1e-4, 0.02)
        # oracle: explicit cumulative product
        prod = 1.0
        for b in np.linspace(1e-4, 0.02, 1000):
            prod *= 1.0 - b
        assert abs(s.alpha_bar[-1] - prod) < 1e-12
        assert s.alpha_bar[-1] < 0.05

    def test_default_schedule_terminal(self):
        s = default_schedule()
        assert s.T == 200
        assert s.alpha_bar[-1] < 0.05

    def test_invalid_ranges(self):
        with pytest.raises(ValueError):
            make_schedule(0, 0.1, 0.2)
        with pytest.raises(ValueError):
            make_schedule(10, 0.0, 0.2)
        with pytest.raises(ValueError):
            make_schedule(10, 0.3, 0.2)
        with pytest.raises(ValueError):
            make_schedule(10, 0.5, 1.0)

    def test_respace_preserves_terminal_alpha_bar(self):
        s = default_schedule()
        r = respace_schedule(s, 20)
        assert r.T == 20
        assert abs(r.alpha_bar[-1] - s.alpha_bar[-1]) < 1e-12
        assert r.model_timestep(20) == 200
        assert np.all((r.beta > 0) & (r.beta < 1))

    def test_respace_identity(self):
        s = make_schedule(16, 1e-3, 0.1)
        r = respace_schedule(s, 16)
        np.testing.assert_allclose(r.beta, s.beta, atol=1e-12)
        assert [r.model_timestep(t) for t in range(1, 17)] == list(range(1, 17))


class TestQSample:
    def test_noiseless_schedule_limit(self):
        # beta tiny at t=1: alpha_bar ~ 1, x_t ~ x0
        s = make_schedule(5, 1e-12, 1e-3)
        x0 = _rand((2, 3, 4, 4), seed=1)
        out = q_sample(x0, 1, torch.zeros_like(x0), s)
        assert (out - x0).abs().max() < 1e-9

    def test_zero_noise_branch(self):
        s = make_schedule(10, 0.05, 0.3)
        x0 = _rand((2, 3, 4, 4), seed=2)
        out = q_sample(x0, 7, torch.zeros_like(x0), s)
        expected = float(np.sqrt(s.alpha_bar[6])) * x0
        assert (out - expected).abs().max() < 1e-12

    def test_monte_carlo_variance(self):
        s = make_schedule(10, 0.05, 0.3)
        g = torch.Generator().manual_seed(3)
        eps = torch.randn((100_000,), generator=g, dtype=torch.float64)
        xt = q_sample(torch.zeros(100_000, dtype=torch.float64), 6, eps, s)
        want = 1.0 - s.alpha_bar[5]
        assert abs(float(xt.var()) - want) / want < 0.05

    def test_marginal_matches_two_composed_steps(self):
        # composing two single-step corruptions must match the closed form
        s = make_schedule(2, 0.1, 0.3)
        g = torch.Generator().manual_seed(4)
        n = 100_000
        x0 = 0.7 * torch.ones(n, dtype=torch.float64)
        e1 = torch.randn(n, generator=g, dtype=torch.float64)
        e2 = torch.randn(n, generator=g, dtype=torch.float64)
        x1 = np.sqrt(1 - 0.1) * x0 + np.sqrt(0.1) * e1
        x2 = np.sqrt(1 - 0.3) * x1 + np.sqrt(0.3) * e2
        want_mean = float(np.sqrt(s.alpha_bar[1])) * 0.7
        want_var = 1.0 - s.alpha_bar[1]
        assert abs(float(x2.mean()) - want_mean) / abs(want_mean) < 0.05
        assert abs(float(x2.var()) - want_var) / want_var < 0.05

    def test_per_sample_timesteps(self):
        s = make_schedule(10, 0.05, 0.3)
        x0 = torch.ones((3, 1, 2, 2), dtype=torch.float64)
        out = q_sample(x0, np.array([1, 5, 10]), torch.zeros_like(x0), s)
        for i, t in enumerate((1, 5, 10)):
            assert abs(float(out[i, 0, 0, 0]) - float(np.sqrt(s.alpha_bar[t - 1]))) < 1e-12

    def test_t_out_of_range(self):
        s = make_schedule(10, 0.05, 0.3)
        x0 = _rand((1, 1, 2, 2))
        with pytest.raises(IndexError):
            q_sample(x0, 0, torch.zeros_like(x0), s)
        with pytest.raises(IndexError):
            q_sample(x0, 11, torch.zeros_like(x0), s)


class TestPSampleStep:
    def test_perfect_eps_inverts_at_t1(self):
        s = make_schedule(10, 0.05, 0.3)
        x0 = _rand((2, 3, 4, 4), seed=5)
        g = torch.Generator().manual_seed(6)
        eps = torch.randn(x0.shape, generator=g, dtype=torch.float64)
        x1 = q_sample(x0, 1, eps, s)
        cond = (torch.zeros_like(x0), torch.zeros_like(x0))
        out = p_sample_step(x1, 1, cond, lambda z, t: eps, s, None)
        assert (out - x0).abs().max() <= 1e-6

    def test_deterministic_with_zero_noise(self):
        s = make_schedule(10, 0.05, 0.3)
        net = NoisePredictor(base_width=8, seed=0)
        x = _rand((1, 3, 8, 8), seed=7)
        cond = (_rand((1, 3, 8, 8), seed=8), _rand((1, 3, 8, 8), seed=9))
        with torch.no_grad():
            a = p_sample_step(x, 5, cond, net, s, None)
            b = p_sample_step(x, 5, cond, net, s, None)
        assert torch.equal(a, b)
        assert a.shape == x.shape

    def test_sigma_applied_above_t1(self):
        s = make_schedule(10, 0.05, 0.3)
        x = _rand((1, 1, 2, 2), seed=10)
        cond = (torch.zeros_like(x), torch.zeros_like(x))
        model = lambda z, t: torch.zeros_like(x)
        noise = torch.ones_like(x)
        base = p_sample_step(x, 5, cond, model, s, None)
        noisy = p_sample_step(x, 5, cond, model, s, noise)
        assert torch.allclose(noisy - base, float(s.sigma[4]) * noise, atol=1e-12)
        # t=1 forces sigma to zero even with noise supplied
        assert torch.equal(
            p_sample_step(x, 1, cond, model, s, noise),
            p_sample_step(x, 1, cond, model, s, None),
        )

    def test_shape_mismatch(self):
        s = make_schedule(4, 0.1, 0.2)
        x = _rand((1, 3, 4, 4))
        with pytest.raises(ValueError, match="shape"):
            p_sample_step(x, 2, (_rand((1, 3, 2, 2)), x), lambda z, t: x, s, None)


class TestSampleIllumination:
    def _setup(self, seed=0):
        low = _rand((1, 3, 8, 8), seed=seed) * 0.4
        net = IlluminationNet(seed=seed)
        with torch.no_grad():
            illum = net(low)
        structural = torch.clamp(low / torch.clamp(illum, min=1e-4), 0, 1)
        return low, illum, structural

    def test_seeded_determinism(self):
        low, illum, structural = self._setup()
        model = NoisePredictor(base_width=8, seed=1)
        sched = make_schedule(6, 0.05, 0.3)
        with torch.no_grad():
            a = sample_illumination(structural, low, illum, model, sched, seed=42)
            b = sample_illumination(structural, low, illum, model, sched, seed=42)
            c = sample_illumination(structural, low, illum, model, sched, seed=43)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_output_clamped_between_low_and_one(self):
        low, illum, structural = self._setup(seed=3)
        model = NoisePredictor(base_width=8, seed=2)
        sched = make_schedule(6, 0.05, 0.3)
        with torch.no_grad():
            out = sample_illumination(structural, low, illum, model, sched, seed=1)
        assert float((out - low).min()) >= 0.0
        assert float(out.max()) <= 1.0
        assert out.shape == low.shape

    def test_chain_length_equals_schedule_T(self):
        low, illum, structural = self._setup(seed=4)
        model = NoisePredictor(base_width=8, seed=3)
        calls = []
        model.register_forward_hook(lambda m, inp, out: calls.append(1))
        for steps in (1, 4, 6):
            calls.clear()
            sched = make_schedule(6, 0.05, 0.3)
            sub = respace_schedule(sched, steps)
            with torch.no_grad():
                sample_illumination(structural, low, illum, model, sub, seed=0)
            assert len(calls) == steps


class TestEnhance:
    def test_identity_illumination(self):
        low = _rand((1, 3, 4, 4), seed=11)
        assert torch.allclose(enhance(low, torch.ones_like(low)), low, atol=1e-12)

    def test_full_brightening_bound(self):
        low = _rand((1, 3, 4, 4), seed=12) * 0.5 + 0.25  # > epsilon_div
        out = enhance(low, low)
        assert torch.allclose(out, torch.ones_like(out), atol=1e-12)

    def test_constant_arithmetic(self):
        low = torch.full((1, 3, 4, 4), 0.3, dtype=torch.float64)
        illum = torch.full_like(low, 0.6)
        assert torch.allclose(enhance(low, illum), torch.full_like(low, 0.5), atol=1e-12)

    def test_monotone_in_illumination(self):
        low = _rand((1, 3, 6, 6), seed=13)
        g = torch.Generator().manual_seed(14)
        a = torch.rand(low.shape, generator=g, dtype=torch.float64) * 0.8 + 0.1
        b = torch.clamp(a - torch.rand(low.shape, generator=g, dtype=torch.float64) * 0.05, min=1e-3)
        assert bool((enhance(low, b) >= enhance(low, a) - 1e-12).all())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            enhance(torch.zeros((1, 3, 4, 4)), torch.ones((1, 3, 4, 2)))


def test_predictor_output_shape_and_determinism():
    net = NoisePredictor(base_width=8, seed=5)
    z = _rand((2, 9, 8, 8), seed=15)
    t = torch.tensor([3, 7])
    with torch.no_grad():
        a, b = net(z, t), net(z, t)
    assert a.shape == (2, 3, 8, 8)
    assert torch.equal(a, b)


def test_schedule_invariant_checks():
    # beta in (0,1) enforced; strict alpha_bar decrease follows from it
    with pytest.raises(ValueError, match="beta"):
        NoiseSchedule(beta=np.array([0.5, 0.0]))
    with pytest.raises(ValueError, match="beta"):
        NoiseSchedule(beta=np.array([0.5, 1.0]))
    s = NoiseSchedule(beta=np.array([0.5, 1e-12]))
    assert np.all(np.diff(s.alpha_bar) < 0)
