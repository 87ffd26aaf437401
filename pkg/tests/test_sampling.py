import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bonesup.denoise import Condition, OracleDenoiser
from bonesup.sampling import (CondSpec, NoiseStream, SamplerConfig,
                              clean_estimate, dual_path_sample, forward_noise,
                              leg_mix, reverse_step, sample)

ALPHA_BAR_50 = 0.763763285673763


class ZeroRng:
    def standard_normal(self, shape):
        return np.zeros(shape)


def test_forward_noise_zero_eps(sched):
    z0 = np.full((1, 4, 4), 0.3)
    out = forward_noise(z0, 50, np.zeros_like(z0), sched)
    assert np.allclose(out, math.sqrt(sched.alpha_bar_at(50)) * 0.3)


def test_forward_noise_zero_signal(sched):
    eps = np.full((1, 4, 4), 2.0)
    out = forward_noise(np.zeros_like(eps), 13, eps, sched)
    assert np.allclose(out, math.sqrt(1 - sched.alpha_bar_at(13)) * 2.0)


def test_forward_noise_scalar_golden(sched):
    z0 = np.ones((1, 1, 1))
    out = forward_noise(z0, 50, z0, sched)
    expected = math.sqrt(ALPHA_BAR_50) + math.sqrt(1.0 - ALPHA_BAR_50)
    assert abs(out[0, 0, 0] - expected) <= 1e-12


def test_forward_noise_shape_mismatch(sched):
    with pytest.raises(ValueError):
        forward_noise(np.zeros((1, 2, 2)), 5, np.zeros((1, 3, 3)), sched)


def test_clean_estimate_direct_inverts_forward(sched):
    rng = np.random.default_rng(0)
    z0 = rng.uniform(-0.5, 0.5, (1, 5, 5))
    eps = rng.standard_normal(z0.shape)
    z_t = forward_noise(z0, 30, eps, sched)
    assert np.max(np.abs(clean_estimate(z_t, 30, eps, sched) - z0)) <= 1e-12


def test_clean_estimate_posterior_form(sched):
    z = np.full((1, 1, 1), 0.8)
    eps = np.full((1, 1, 1), 0.4)
    t = 7
    a, ab = sched.alpha_at(t), sched.alpha_bar_at(t)
    expected = (0.8 - (1 - a) / math.sqrt(1 - ab) * 0.4) / math.sqrt(a)
    out = clean_estimate(z, t, eps, sched, form="posterior")
    assert abs(out[0, 0, 0] - expected) <= 1e-15


def test_reverse_step_final_mix_identity(sched):
    # with eps_hat chosen so the clean estimate equals z itself, the
    # blended final step returns (c_out(1) + c_skip(1)) * z
    z = np.full((1, 3, 3), 0.25)
    ab = sched.alpha_bar_at(1)
    eps_hat = (z - math.sqrt(ab) * z) / math.sqrt(1 - ab)
    out = reverse_step(z, 1, eps_hat, sched, final_form="mix")
    expected = (sched.c_out(1) + sched.c_skip(1)) * 0.25
    assert np.max(np.abs(out - expected)) <= 1e-12


def test_reverse_step_final_clean_returns_estimate(sched):
    rng = np.random.default_rng(1)
    z = rng.standard_normal((1, 4, 4))
    eps_hat = rng.standard_normal(z.shape)
    out = reverse_step(z, 1, eps_hat, sched)
    assert np.array_equal(out, clean_estimate(z, 1, eps_hat, sched))


def test_reverse_step_t2_closed_form_default(sched):
    z = np.full((1, 1, 1), 0.9)
    eps_hat = np.full((1, 1, 1), 0.2)
    out = reverse_step(z, 2, eps_hat, sched, ZeroRng())
    ab2 = sched.alpha_bar_at(2)
    m = (0.9 - math.sqrt(1 - ab2) * 0.2) / math.sqrt(ab2)
    expected = math.sqrt(sched.alpha_at(1)) * m  # zero noise forced
    assert abs(out[0, 0, 0] - expected) <= 1e-14


def test_reverse_step_t2_closed_form_all_variants(sched):
    z = np.full((1, 1, 1), 0.9)
    eps_hat = np.full((1, 1, 1), 0.2)
    a1, ab1 = sched.alpha_at(1), sched.alpha_bar_at(1)
    a2, ab2 = sched.alpha_at(2), sched.alpha_bar_at(2)

    m_direct = (0.9 - math.sqrt(1 - ab2) * 0.2) / math.sqrt(ab2)
    m_post = (0.9 - (1 - a2) / math.sqrt(1 - ab2) * 0.2) / math.sqrt(a2)
    blend = sched.c_out(2) * m_direct + sched.c_skip(2) * 0.9

    cases = [
        (dict(), math.sqrt(a1) * m_direct),
        (dict(renoise_form="cumulative"), math.sqrt(ab1) * m_direct),
        (dict(clean_form="posterior"), math.sqrt(a1) * m_post),
        (dict(consistency_mix=True), math.sqrt(a1) * blend),
        (dict(consistency_mix=True, renoise_form="cumulative"),
         math.sqrt(ab1) * blend),
    ]
    for kwargs, expected in cases:
        out = reverse_step(z, 2, eps_hat, sched, ZeroRng(), **kwargs)
        assert abs(out[0, 0, 0] - expected) <= 1e-14, kwargs


def test_reverse_step_noise_coefficient(sched):
    # forced unit noise isolates the injection coefficient
    class OneRng:
        def standard_normal(self, shape):
            return np.ones(shape)

    z = np.zeros((1, 1, 1))
    eps_hat = np.zeros((1, 1, 1))
    t = 10
    a_prev, ab_prev = sched.alpha_at(t - 1), sched.alpha_bar_at(t - 1)
    out = reverse_step(z, t, eps_hat, sched, OneRng())
    assert abs(out[0, 0, 0] - (1 - a_prev) / math.sqrt(1 - ab_prev)) <= 1e-15
    out = reverse_step(z, t, eps_hat, sched, OneRng(), renoise_form="cumulative")
    assert abs(out[0, 0, 0] - math.sqrt(1 - ab_prev)) <= 1e-15


def test_reverse_step_range_check(sched):
    z = np.zeros((1, 2, 2))
    with pytest.raises(ValueError):
        reverse_step(z, 0, z, sched, ZeroRng())
    with pytest.raises(ValueError):
        reverse_step(z, 51, z, sched, ZeroRng())


def test_leg_mix_endpoints_bitwise():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((2, 3, 3))
    b = rng.standard_normal((2, 3, 3))
    assert np.array_equal(leg_mix(a, b, 1.0), a)
    assert np.array_equal(leg_mix(a, b, 0.0), b)


def test_leg_mix_weight_three_scalar():
    one = np.ones((1, 1, 1))
    zero = np.zeros((1, 1, 1))
    assert leg_mix(one, zero, 3.0)[0, 0, 0] == 3.0


def test_leg_mix_shape_mismatch():
    with pytest.raises(ValueError):
        leg_mix(np.zeros((1, 2, 2)), np.zeros((1, 3, 3)), 2.0)


@given(w=st.floats(-5, 5, allow_nan=False))
@settings(max_examples=30)
def test_leg_mix_affine_identity(w):
    a = np.linspace(-1, 1, 12).reshape(1, 3, 4)
    assert np.max(np.abs(leg_mix(a, a, w) - a)) <= 1e-12


def run_oracle(sched, seed, path="global", **cfg_kwargs):
    rng = np.random.default_rng(seed)
    z0 = rng.uniform(-0.5, 0.5, (1, 16, 16))
    oracle = OracleDenoiser(z0, sched)
    spec = CondSpec(
        global_cond=Condition(np.zeros_like(z0), "global"),
        local_cond=Condition(np.zeros_like(z0), "local"),
    )
    cfg = SamplerConfig(timesteps=sched.timesteps, seed=seed, path=path,
                        **cfg_kwargs)
    return z0, sample(oracle, spec, sched, cfg)


def test_oracle_round_trip_global(sched):
    for seed in range(3):
        z0, out = run_oracle(sched, seed)
        assert np.max(np.abs(out - z0)) <= 1e-6


def test_oracle_round_trip_local_path(sched):
    z0, out = run_oracle(sched, 9, path="local", alpha_local=3.0)
    assert np.max(np.abs(out - z0)) <= 1e-6


def test_oracle_round_trip_with_consistency_mix(sched):
    # the blended steps change the trajectory but the boundary step is exact
    z0, out = run_oracle(sched, 4, consistency_mix=True)
    assert np.max(np.abs(out - z0)) <= 1e-6


def test_sample_deterministic(sched):
    _, out1 = run_oracle(sched, 11)
    _, out2 = run_oracle(sched, 11)
    assert np.array_equal(out1, out2)


def test_sample_shape_preserved(sched):
    _, out = run_oracle(sched, 1)
    assert out.shape == (1, 16, 16)


def test_noise_stream_counter_independence():
    stream = NoiseStream(5)
    direct = stream.step_rng(7).standard_normal((4,))
    # drawing other steps first must not change step 7's draw
    stream.step_rng(3).standard_normal((100,))
    again = stream.step_rng(7).standard_normal((4,))
    assert np.array_equal(direct, again)
    assert not np.array_equal(direct, stream.step_rng(8).standard_normal((4,)))
    assert not np.array_equal(
        NoiseStream(5).initial((4,)), NoiseStream(6).initial((4,))
    )


class CondSensitiveDenoiser:
    """Prediction depends on the condition, to expose guidance mixing."""

    def __init__(self, sched):
        self.sched = sched

    def predict(self, z_t, t, cond):
        return 0.1 * z_t + 0.3 * cond.latent + cond.flag * 0.05


def test_alpha_one_equals_vanilla_local(sched):
    rng = np.random.default_rng(3)
    cond_g = Condition(rng.uniform(-0.5, 0.5, (1, 8, 8)), "global")
    cond_l = Condition(rng.uniform(-0.5, 0.5, (1, 8, 8)), "local")
    model = CondSensitiveDenoiser(sched)
    leg = sample(model, CondSpec(cond_g, cond_l), sched,
                 SamplerConfig(path="local", alpha_local=1.0, seed=21))
    vanilla = sample(model, CondSpec(cond_l), sched,
                     SamplerConfig(path="global", seed=21))
    assert np.array_equal(leg, vanilla)


def test_alpha_zero_equals_global(sched):
    rng = np.random.default_rng(4)
    cond_g = Condition(rng.uniform(-0.5, 0.5, (1, 8, 8)), "global")
    cond_l = Condition(rng.uniform(-0.5, 0.5, (1, 8, 8)), "local")
    model = CondSensitiveDenoiser(sched)
    leg = sample(model, CondSpec(cond_g, cond_l), sched,
                 SamplerConfig(path="local", alpha_local=0.0, seed=33))
    globl = sample(model, CondSpec(cond_g), sched,
                   SamplerConfig(path="global", seed=33))
    assert np.array_equal(leg, globl)


def test_dual_degenerate_conditions_shared_noise(sched):
    # identical conditions + one noise stream: paths agree to float noise
    rng = np.random.default_rng(6)
    latent = rng.uniform(-0.5, 0.5, (1, 8, 8))
    cond_g = Condition(latent, "global")
    cond_l = Condition(latent.copy(), "global")
    model = CondSensitiveDenoiser(sched)
    cfg = SamplerConfig(path="dual", seed=2, share_noise=True, alpha_local=3.0)
    result = dual_path_sample(model, cond_g, cond_l, sched, cfg)
    assert np.max(np.abs(result.global_latent - result.local_latent)) <= 1e-10


def test_dual_independent_streams_differ(sched):
    rng = np.random.default_rng(7)
    latent = rng.uniform(-0.5, 0.5, (1, 8, 8))
    model = CondSensitiveDenoiser(sched)
    cfg = SamplerConfig(path="dual", seed=2, alpha_local=1.0)
    result = dual_path_sample(model, Condition(latent, "global"),
                              Condition(latent.copy(), "local"), sched, cfg)
    assert not np.array_equal(result.global_latent, result.local_latent)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(path="both").validate()
    with pytest.raises(ValueError):
        SamplerConfig(clean_form="x").validate()
    with pytest.raises(ValueError):
        SamplerConfig(renoise_form="x").validate()
    with pytest.raises(ValueError):
        SamplerConfig(final_form="x").validate()
    with pytest.raises(ValueError):
        SamplerConfig(alpha_local=float("nan")).validate()


def test_sample_rejects_dual_and_mismatched_steps(sched):
    cond = Condition(np.zeros((1, 4, 4)), "global")
    oracle = OracleDenoiser(np.zeros((1, 4, 4)), sched)
    with pytest.raises(ValueError):
        sample(oracle, CondSpec(cond), sched, SamplerConfig(path="dual"))
    with pytest.raises(ValueError):
        sample(oracle, CondSpec(cond), sched,
               SamplerConfig(path="global", timesteps=10))
    with pytest.raises(ValueError):
        sample(oracle, CondSpec(cond), sched, SamplerConfig(path="local"))
