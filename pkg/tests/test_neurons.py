"""Single-step neuron updates: ReLU, adaptive LIF and Izhikevich."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nema.neurons import (
    V_CLAMP,
    AlifParams,
    IzhikevichParams,
    NeuronModelKind,
    NeuronState,
    NumericError,
    alif_step,
    artificial_step,
    default_params,
    izhikevich_step,
    reset_state,
    step,
)


def alif_state(v, adp=0.0):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return NeuronState(v, np.full_like(v, adp), np.zeros(v.shape, np.int8), np.zeros_like(v))


def izh_state(v, u):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return NeuronState(v, np.atleast_1d(np.asarray(u, dtype=float)), np.zeros(v.shape, np.int8), np.zeros_like(v))


def alif_spike_times(p: AlifParams, current: float, steps: int) -> list[int]:
    state, times = reset_state(NeuronModelKind.ALIF, 1, p), []
    for t in range(steps):
        state, s = alif_step(state, p, np.array([current]))
        if s[0]:
            times.append(t)
    return times


class TestArtificial:
    def test_relu(self):
        np.testing.assert_array_equal(artificial_step(np.array([-3.0, 0.0, 2.5])), [0.0, 0.0, 2.5])

    def test_zero(self):
        np.testing.assert_array_equal(artificial_step(np.zeros(4)), np.zeros(4))

    @given(st.floats(min_value=1e-300, max_value=1e300))
    def test_identity_on_positives(self, x):
        assert artificial_step(np.array([x]))[0] == x

    def test_non_finite(self):
        with pytest.raises(NumericError):
            artificial_step(np.array([1.0, np.nan]))


class TestAlif:
    p = AlifParams()

    def test_defaults(self):
        assert self.p.gamma == math.exp(-1 / 20) and self.p.gamma_s == math.exp(-1 / 10)
        assert (self.p.beta, self.p.v_th) == (0.5, 1.0)

    def test_leak_without_spike(self):
        state, s = alif_step(alif_state(1.0), self.p, np.zeros(1))
        assert s[0] == 0
        assert state.v[0] == pytest.approx(0.951229424500714, abs=1e-15)

    def test_spike_and_reset(self):
        state, s = alif_step(alif_state(0.0), self.p, np.array([1.2]))
        assert s[0] == 1 and state.v[0] == 0.0 and state.v_adp[0] == self.p.beta

    def test_threshold_uses_adaptation(self):
        # 1.2 clears v_th alone but not v_th + 0.5
        state, s = alif_step(alif_state(0.0, adp=0.5), self.p, np.array([1.2]))
        assert s[0] == 0 and state.v[0] == 1.2
        assert state.v_adp[0] == pytest.approx(0.5 * self.p.gamma_s)

    def test_zero_fixed_point(self):
        state = reset_state(NeuronModelKind.ALIF, 3, self.p)
        for _ in range(100):
            state, s = alif_step(state, self.p, np.zeros(3))
        assert not state.v.any() and not state.u.any() and not s.any()

    def test_geometric_leak(self):
        state = alif_state([0.9, -2.0, 0.3])
        v0 = state.v.copy()
        for k in range(1, 30):
            state, _ = alif_step(state, self.p, np.zeros(3))
            expected = v0 * self.p.gamma**k
            np.testing.assert_allclose(np.abs(state.v), np.abs(expected), rtol=1e-12)

    def test_adaptation_lengthens_intervals(self):
        times = alif_spike_times(self.p, 0.3, 200)
        isi = np.diff(times)
        assert len(isi) >= 3
        assert np.all(np.diff(isi) >= 0) and np.any(np.diff(isi) > 0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=60))
    def test_adaptation_stays_non_negative(self, inputs):
        state = reset_state(NeuronModelKind.ALIF, 1, self.p)
        for x in inputs:
            state, _ = alif_step(state, self.p, np.array([x]))
            assert state.v_adp[0] >= 0

    def test_pure(self):
        state = alif_state([0.5, 0.99])
        before = state.v.copy()
        a, _ = alif_step(state, self.p, np.array([0.1, 0.2]))
        b, _ = alif_step(state, self.p, np.array([0.1, 0.2]))
        np.testing.assert_array_equal(state.v, before)
        np.testing.assert_array_equal(a.v, b.v)
        np.testing.assert_array_equal(a.u, b.u)

    def test_clamp(self):
        state, _ = alif_step(alif_state(-1e300), self.p, np.array([-1e300]))
        assert state.v[0] == -V_CLAMP

    def test_non_finite_state(self):
        with pytest.raises(NumericError):
            alif_step(alif_state(np.inf), self.p, np.zeros(1))

    @pytest.mark.parametrize("kw", [{"gamma": 1.0}, {"gamma": 0.0}, {"gamma_s": 1.5}, {"beta": -0.1}, {"v_th": 0}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            AlifParams(**kw)


class TestIzhikevich:
    p = IzhikevichParams()

    def test_hand_oracle(self):
        p = IzhikevichParams(a=0.02, b=0.25, dt_scale=1.0)
        state, s = izhikevich_step(izh_state(-65.0, -16.25), p, np.zeros(1))
        assert s[0] == 0
        assert abs(state.v[0] - -64.75) < 1e-9 and abs(state.u[0] - -16.25) < 1e-9

    def test_default_scaling(self):
        # intrinsic increment 0.25 scaled by 0.2, input 0.1 scaled by 20
        state, _ = izhikevich_step(izh_state(-65.0, -16.25), self.p, np.array([0.1]))
        assert state.v[0] == pytest.approx(-65.0 + 0.2 * 0.25 + 20 * 0.1, abs=1e-12)

    def test_reset(self):
        state, s = izhikevich_step(izh_state(35.0, -3.0), self.p, np.array([5.0]))
        assert s[0] == 1 and state.v[0] == -58.0 and state.u[0] == -3.0

    def test_reset_adds_d(self):
        p = IzhikevichParams(d=2.0)
        state, s = izhikevich_step(izh_state([30.0, 29.0], [1.0, 1.0]), p, np.zeros(2))
        assert s.tolist() == [1, 0]
        assert state.v[0] == p.c and state.u[0] == 3.0

    def test_resting_network_stays_subthreshold(self):
        state = reset_state(NeuronModelKind.IZHIKEVICH, 8, self.p)
        for _ in range(1000):
            state, s = izhikevich_step(state, self.p, np.zeros(8))
            assert not s.any()
            assert np.all(state.v < self.p.v_peak)

    def test_drive_produces_spikes(self):
        state, n = reset_state(NeuronModelKind.IZHIKEVICH, 1, self.p), 0
        for _ in range(200):
            state, s = izhikevich_step(state, self.p, np.array([0.5]))
            n += int(s[0])
        assert n > 0

    def test_non_finite(self):
        with pytest.raises(NumericError):
            izhikevich_step(izh_state(-65.0, np.nan), self.p, np.zeros(1))

    def test_clamped_blowup_stays_finite(self):
        state = izh_state(-1e5, 0.0)
        for _ in range(5):
            state, _ = izhikevich_step(state, self.p, np.array([-1e6]), check=False)
        assert np.all(np.isfinite(state.v)) and abs(state.v[0]) <= V_CLAMP


class TestReset:
    def test_alif(self):
        s = reset_state(NeuronModelKind.ALIF, 3)
        assert s.v.tolist() == [0, 0, 0] and s.v_adp.tolist() == [0, 0, 0]

    def test_izhikevich(self):
        s = reset_state(NeuronModelKind.IZHIKEVICH, 1, IzhikevichParams(c=-58, b=0.25))
        assert s.v.tolist() == [-58.0] and s.u.tolist() == [-14.5]

    def test_artificial(self):
        assert reset_state(NeuronModelKind.ARTIFICIAL, 5).act.tolist() == [0.0] * 5

    def test_batched_shape(self):
        assert reset_state(NeuronModelKind.ALIF, (4, 7)).v.shape == (4, 7)

    def test_empty(self):
        with pytest.raises(ValueError):
            reset_state(NeuronModelKind.ALIF, 0)


@pytest.mark.parametrize("kind", list(NeuronModelKind))
def test_dispatch_matches_direct_call(kind):
    p = default_params(kind)
    state = reset_state(kind, 6, p)
    x = np.linspace(-1, 2, 6)
    out = step(kind, state, p, x)
    if kind is NeuronModelKind.ARTIFICIAL:
        np.testing.assert_array_equal(out.act, artificial_step(x))
    elif kind is NeuronModelKind.ALIF:
        np.testing.assert_array_equal(out.v, alif_step(state, p, x)[0].v)
    else:
        np.testing.assert_array_equal(out.v, izhikevich_step(state, p, x)[0].v)
