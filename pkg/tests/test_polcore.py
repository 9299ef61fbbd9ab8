import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarsfp.errors import DegenerateFit, DimensionMismatch
from polarsfp.polcore import (
    CANONICAL_ANGLES,
    Mask,
    PolarizedStack,
    PolarizerAngle,
    SinusoidParams,
    eval_sinusoid,
    fit_sinusoid,
    fit_stack,
)


def sinusoid_oracle(i_mean, amplitude, phase, angle):
    """Independent scalar evaluation of the polarizer sinusoid."""
    return i_mean + amplitude * math.cos(2.0 * (angle - phase))


def canonical():
    return [PolarizerAngle(a) for a in CANONICAL_ANGLES]


class TestEvalSinusoid:
    def test_unpolarized_is_constant(self):
        p = SinusoidParams(i_mean=0.7, amplitude=0.0, phase=1.0)
        for a in (0.0, 0.3, 2.0):
            assert eval_sinusoid(p, PolarizerAngle(a)) == pytest.approx(0.7, abs=1e-15)

    def test_peak_at_phase(self):
        p = SinusoidParams(i_mean=1.0, amplitude=0.5, phase=0.9)
        assert eval_sinusoid(p, PolarizerAngle(0.9)) == pytest.approx(1.5, abs=1e-15)

    def test_matches_scalar_oracle(self):
        phase = math.radians(30.0)
        p = SinusoidParams(i_mean=1.0, amplitude=0.4, phase=phase)
        expected = sinusoid_oracle(1.0, 0.4, phase, 0.0)
        assert expected == pytest.approx(1.0 + 0.4 * math.cos(math.radians(-60.0)))
        assert eval_sinusoid(p, PolarizerAngle(0.0)) == pytest.approx(expected, abs=1e-15)

    @given(
        i_mean=st.floats(0.1, 10.0),
        frac=st.floats(0.0, 1.0),
        phase=st.floats(0.0, math.pi - 1e-9),
        angle=st.floats(-10.0, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_period_pi(self, i_mean, frac, phase, angle):
        p = SinusoidParams(i_mean=i_mean, amplitude=frac * i_mean, phase=phase)
        a = eval_sinusoid(p, PolarizerAngle(angle))
        b = eval_sinusoid(p, PolarizerAngle(angle + math.pi))
        assert a == pytest.approx(b, abs=1e-9)
        assert p.i_min - 1e-12 <= a <= p.i_max + 1e-12


class TestFitSinusoid:
    def test_round_trip_canonical(self):
        p = SinusoidParams(1.0, 0.4, math.radians(30.0))
        samples = [(a, eval_sinusoid(p, a)) for a in canonical()]
        fit = fit_sinusoid(samples, method="closed_form_quad")
        assert fit.phase_valid
        assert fit.params.i_mean == pytest.approx(1.0, abs=1e-12)
        assert fit.params.amplitude == pytest.approx(0.4, abs=1e-12)
        assert fit.params.phase == pytest.approx(math.radians(30.0), abs=1e-12)

    def test_constant_samples_have_no_phase(self):
        samples = [(a, 0.55) for a in canonical()]
        fit = fit_sinusoid(samples, method="closed_form_quad")
        assert fit.params.i_mean == pytest.approx(0.55, abs=1e-14)
        assert fit.params.amplitude == pytest.approx(0.0, abs=1e-14)
        assert not fit.phase_valid

    def test_least_squares_seven_angles(self):
        p = SinusoidParams(2.0, 0.3, math.radians(100.0))
        angles = [PolarizerAngle(a) for a in (0.1, 0.5, 0.9, 1.4, 1.9, 2.3, 2.9)]
        samples = [(a, eval_sinusoid(p, a)) for a in angles]
        fit = fit_sinusoid(samples, method="least_squares")
        assert fit.params.i_mean == pytest.approx(2.0, abs=1e-10)
        assert fit.params.amplitude == pytest.approx(0.3, abs=1e-10)
        assert fit.params.phase == pytest.approx(math.radians(100.0), abs=1e-10)

    def test_methods_agree_on_canonical_set(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            i_mean = rng.uniform(0.1, 2.0)
            amp = rng.uniform(0.0, 1.0) * i_mean
            phase = rng.uniform(0.0, math.pi)
            p = SinusoidParams(i_mean, amp, phase)
            samples = [(a, eval_sinusoid(p, a)) for a in canonical()]
            a = fit_sinusoid(samples, method="closed_form_quad").params
            b = fit_sinusoid(samples, method="least_squares").params
            assert a.i_mean == pytest.approx(b.i_mean, abs=1e-10)
            assert a.amplitude == pytest.approx(b.amplitude, abs=1e-10)
            if a.amplitude > 1e-6:
                assert a.phase == pytest.approx(b.phase, abs=1e-10)

    @given(
        i_mean=st.floats(0.1, 5.0),
        frac=st.floats(0.01, 1.0),
        phase=st.floats(0.0, math.pi - 1e-9),
    )
    @settings(max_examples=200, deadline=None)
    def test_fit_idempotence(self, i_mean, frac, phase):
        p = SinusoidParams(i_mean, frac * i_mean, phase)
        samples = [(a, eval_sinusoid(p, a)) for a in canonical()]
        fit = fit_sinusoid(samples, method="closed_form_quad").params
        assert fit.i_mean == pytest.approx(p.i_mean, rel=1e-10)
        assert fit.amplitude == pytest.approx(p.amplitude, rel=1e-9, abs=1e-12)
        dphi = abs(fit.phase - p.phase) % math.pi
        assert min(dphi, math.pi - dphi) < 1e-10

    def test_collinear_angles_rejected(self):
        samples = [(PolarizerAngle(0.2), 1.0)] * 3
        with pytest.raises((DegenerateFit, ValueError)):
            fit_sinusoid(samples, method="least_squares")

    def test_unknown_method(self):
        samples = [(a, 1.0) for a in canonical()]
        with pytest.raises(ValueError):
            fit_sinusoid(samples, method="nope")


def _stack_from_params(i_mean, amp, phase):
    """Render an H x W stack from per-pixel sinusoid parameter arrays."""
    angles = np.array(CANONICAL_ANGLES)
    intens = i_mean[:, :, None] + amp[:, :, None] * np.cos(
        2.0 * (angles[None, None, :] - phase[:, :, None]))
    return PolarizedStack([PolarizerAngle(a) for a in CANONICAL_ANGLES], intens)


class TestFitStack:
    def test_fully_polarized_pixel(self):
        # I_max = 1, I_min = 0 -> rho = 1
        i_mean = np.full((1, 1), 0.5)
        amp = np.full((1, 1), 0.5)
        phase = np.full((1, 1), 0.3)
        pmap = fit_stack(_stack_from_params(i_mean, amp, phase))
        assert pmap.valid[0, 0]
        assert pmap.rho[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_unpolarized_pixel(self):
        pmap = fit_stack(_stack_from_params(
            np.full((1, 1), 0.4), np.zeros((1, 1)), np.zeros((1, 1))))
        assert pmap.rho[0, 0] == pytest.approx(0.0, abs=1e-14)
        assert pmap.intensity[0, 0] == pytest.approx(0.8, abs=1e-14)

    def test_round_trip_4x4(self):
        rng = np.random.default_rng(3)
        i_mean = rng.uniform(0.2, 1.0, size=(4, 4))
        rho = rng.uniform(0.05, 0.9, size=(4, 4))
        phase = rng.uniform(0.0, math.pi, size=(4, 4))
        pmap = fit_stack(_stack_from_params(i_mean, rho * i_mean, phase))
        assert pmap.valid.all()
        np.testing.assert_allclose(pmap.rho, rho, atol=1e-10)
        np.testing.assert_allclose(pmap.intensity, 2 * i_mean, atol=1e-10)
        dphi = np.abs(pmap.phi - phase) % math.pi
        assert np.minimum(dphi, math.pi - dphi).max() < 1e-10

    def test_rho_bounds_on_valid_pixels(self):
        rng = np.random.default_rng(11)
        intens = rng.uniform(0.0, 1.0, size=(8, 8, 4))
        stack = PolarizedStack([PolarizerAngle(a) for a in CANONICAL_ANGLES], intens)
        pmap = fit_stack(stack)
        assert np.all(pmap.rho[pmap.valid] >= 0.0)
        assert np.all(pmap.rho[pmap.valid] <= 1.0)
        assert np.all(pmap.phi[pmap.valid] >= 0.0)
        assert np.all(pmap.phi[pmap.valid] < math.pi)

    def test_dark_pixels_invalid(self):
        intens = np.zeros((2, 2, 4))
        intens[0, 0] = 0.5
        stack = PolarizedStack([PolarizerAngle(a) for a in CANONICAL_ANGLES], intens)
        pmap = fit_stack(stack)
        assert pmap.valid[0, 0]
        assert not pmap.valid[1, 1]

    def test_background_pixels_invalid(self):
        intens = np.full((2, 2, 4), 0.5)
        stack = PolarizedStack([PolarizerAngle(a) for a in CANONICAL_ANGLES], intens)
        mask = Mask(np.array([[True, False], [False, True]]))
        pmap = fit_stack(stack, mask)
        assert pmap.valid[0, 0] and pmap.valid[1, 1]
        assert not pmap.valid[0, 1] and not pmap.valid[1, 0]

    def test_dimension_mismatch(self):
        intens = np.full((2, 2, 4), 0.5)
        stack = PolarizedStack([PolarizerAngle(a) for a in CANONICAL_ANGLES], intens)
        with pytest.raises(DimensionMismatch):
            fit_stack(stack, Mask(np.ones((3, 3), dtype=bool)))

    def test_least_squares_path_matches(self):
        rng = np.random.default_rng(5)
        i_mean = rng.uniform(0.2, 1.0, size=(3, 3))
        rho = rng.uniform(0.1, 0.9, size=(3, 3))
        phase = rng.uniform(0.0, math.pi, size=(3, 3))
        stack = _stack_from_params(i_mean, rho * i_mean, phase)
        a = fit_stack(stack, method="closed_form_quad")
        b = fit_stack(stack, method="least_squares")
        np.testing.assert_allclose(a.rho, b.rho, atol=1e-10)
        dphi = np.abs(a.phi - b.phi) % math.pi
        assert np.minimum(dphi, math.pi - dphi).max() < 1e-10


def test_phase_noise_robustness():
    # sigma = 0.01 on intensities in [0, 1]: median phase error below 2 degrees
    rng = np.random.default_rng(42)
    n = 1000
    i_mean = rng.uniform(0.3, 0.5, size=n)
    rho = rng.uniform(0.2, 0.9, size=n)
    phase = rng.uniform(0.0, math.pi, size=n)
    angles = np.array(CANONICAL_ANGLES)
    intens = i_mean[:, None] * (1 + rho[:, None] * np.cos(2 * (angles[None, :] - phase[:, None])))
    intens = np.clip(intens + rng.normal(0, 0.01, size=intens.shape), 0, None)
    stack = PolarizedStack(
        [PolarizerAngle(a) for a in CANONICAL_ANGLES], intens.reshape(n, 1, 4))
    pmap = fit_stack(stack)
    dphi = np.abs(pmap.phi[:, 0] - phase) % math.pi
    err = np.degrees(np.minimum(dphi, math.pi - dphi))
    assert np.median(err) < 2.0
