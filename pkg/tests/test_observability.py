import numpy as np
import pytest

from hingetrack import observability as obs
from hingetrack.quatmath import quat_to_matrix
from hingetrack.simulator import generate, reference_chain_config


@pytest.fixture(scope="module")
def cfg():
    return reference_chain_config()


class TestVerdict:
    def test_no_m_is_never_observable(self, cfg):
        samples = generate("no-M", duration=2.0, ts=0.01, seed=0, cfg=cfg)
        verdicts = [obs.observability_verdict(s, cfg) for s in samples]
        assert not any(v.observable for v in verdicts)
        assert all(v.omega_perp_mag < v.threshold for v in verdicts)

    def test_mo_m_is_observable_throughout(self, cfg):
        samples = generate("mo-M", duration=2.0, ts=0.01, seed=0, cfg=cfg)
        verdicts = [obs.observability_verdict(s, cfg) for s in samples]
        assert all(v.observable for v in verdicts)

    def test_rd_m_is_mostly_observable(self, cfg):
        samples = generate("rd-M", duration=10.0, ts=0.01, seed=21, cfg=cfg)
        verdicts = [obs.observability_verdict(s, cfg) for s in samples]
        frac = np.mean([v.observable for v in verdicts])
        assert frac >= 0.95

    def test_decompose_is_orthogonal(self, cfg):
        rng = np.random.default_rng(0)
        w = rng.normal(size=3)
        w_perp, w_rest = obs.decompose_omega_j(w, cfg)
        assert np.allclose(w_perp + w_rest, w)
        assert abs(w_perp @ w_rest) < 1e-12


class TestTriadSolve:
    def test_recovers_known_rotation(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = rng.normal(size=4)
            r = quat_to_matrix(q / np.linalg.norm(q))
            v_g, w_g = rng.normal(size=3), rng.normal(size=3)
            rec = obs.triad_solve(r @ v_g, r @ w_g, v_g, w_g)
            assert np.allclose(rec, r, atol=1e-9)

    def test_parallel_vectors_raise(self):
        v = np.array([1.0, 0.0, 0.0])
        with pytest.raises(obs.DegenerateRotationError):
            obs.triad_solve(v, 2.0 * v, v, 2.0 * v)

    def test_zero_vector_raises(self):
        v = np.array([1.0, 0.0, 0.0])
        with pytest.raises(obs.DegenerateRotationError):
            obs.triad_solve(v, np.zeros(3), v, np.zeros(3))

    def test_inconsistent_norms_raise(self):
        v = np.array([1.0, 0.0, 0.0])
        w = np.array([0.0, 1.0, 0.0])
        with pytest.raises(obs.InconsistentPairError):
            obs.triad_solve(v, w, 2.0 * v, w)

    def test_inconsistent_angle_raises(self):
        v = np.array([1.0, 0.0, 0.0])
        w = np.array([0.0, 1.0, 0.0])
        w2 = np.array([np.sin(0.3), np.cos(0.3), 0.0])
        with pytest.raises(obs.InconsistentPairError):
            obs.triad_solve(v, w, v, w2)


class TestRelativeOrientationFromRates:
    @pytest.mark.parametrize("movement", ["mo-M", "rd-M"])
    def test_matches_truth_when_observable(self, cfg, movement):
        samples = generate(movement, duration=2.0, ts=0.01, seed=21, cfg=cfg)
        checked = 0
        for s in samples[::17]:
            if not obs.observability_verdict(s, cfg).observable:
                continue
            r = quat_to_matrix(obs.relative_orientation_from_rates(s, cfg))
            r_true = quat_to_matrix(s.truth.q_i).T @ quat_to_matrix(s.truth.q_k)
            assert np.allclose(r, r_true, atol=1e-6)
            checked += 1
        assert checked > 0

    def test_raises_on_unobservable_sample(self, cfg):
        samples = generate("no-M", duration=1.0, ts=0.01, seed=0, cfg=cfg)
        with pytest.raises(obs.DegenerateRotationError):
            obs.relative_orientation_from_rates(samples[50], cfg)


class TestOutputMap:
    def test_y3_zero_along_truth(self, cfg):
        samples = generate("rd-M", duration=1.0, ts=0.01, seed=2, cfg=cfg)
        for s in samples[::10]:
            r_i = quat_to_matrix(s.truth.q_i)
            r_k = quat_to_matrix(s.truth.q_k)
            val = obs.y3_value(r_i, r_k, s.w_i_bi, s.w_k_bk, cfg)
            assert abs(val) < 1e-12

    def test_rate_derivatives_fourth_order(self, cfg):
        # An analytic polynomial rate of degree <= 4 must differentiate
        # exactly on interior points with the 4th-order stencil.
        ts = 0.01
        t = np.arange(120) * ts

        class _Fake:
            pass

        samples = []
        for tk in t:
            f = _Fake()
            f.t = tk
            f.w_i_bi = np.array([tk**4, tk**3, tk**2])
            f.w_k_bk = np.array([tk, 2.0 * tk**2, 3.0 * tk**3])
            samples.append(f)
        d_i, d_k = obs.rate_derivatives(samples)
        exp_i = np.stack([4 * t**3, 3 * t**2, 2 * t], axis=1)
        exp_k = np.stack([np.ones_like(t), 4 * t, 9 * t**2], axis=1)
        assert np.allclose(d_i[2:-2], exp_i[2:-2], atol=1e-9)
        assert np.allclose(d_k[2:-2], exp_k[2:-2], atol=1e-9)


@pytest.mark.slow
class TestBruteForceOracle:
    def test_observable_sample_has_unique_solution(self, cfg):
        samples = generate("mo-M", duration=1.0, ts=0.01, seed=21, cfg=cfg)
        d_i, d_k = obs.rate_derivatives(samples)
        idx = 50
        assert obs.observability_verdict(samples[idx], cfg).observable
        count = obs.brute_force_uniqueness(
            samples[idx], cfg, ydot_i=d_i[idx], ydot_k=d_k[idx]
        )
        assert count == 1

    def test_unobservable_sample_has_continuum(self, cfg):
        samples = generate("no-M", duration=1.0, ts=0.01, seed=21, cfg=cfg)
        d_i, d_k = obs.rate_derivatives(samples)
        idx = 50
        assert not obs.observability_verdict(samples[idx], cfg).observable
        count = obs.brute_force_uniqueness(
            samples[idx], cfg, ydot_i=d_i[idx], ydot_k=d_k[idx]
        )
        assert count > 1
