import numpy as np
import pytest

from hingetrack.chain import ChainState
from hingetrack.mhe import (
    MheConfig,
    MheWindow,
    _WindowProblem,
    evaluate_errors,
    run_estimator,
    solve_window,
)
from hingetrack.quatmath import IDENTITY, quat_from_axis_angle, quat_multiply
from hingetrack.simulator import (
    build_chain_pose,
    generate,
    measure,
    reference_chain_config,
    reference_noise_spec,
)


@pytest.fixture(scope="module")
def cfg():
    return reference_chain_config()


def _window_inputs(cfg, movement="rd-M", seed=11, start=0, T=20, noisy=False):
    samples = generate(movement, duration=(start + T) * 0.01 + 0.01, ts=0.01,
                       seed=seed, cfg=cfg)[start:start + T]
    if noisy:
        records = measure(samples, reference_noise_spec(seed=seed + 1))
        y_i = np.array([r.y_i_bi for r in records])
        y_k = np.array([r.y_k_bk for r in records])
    else:
        y_i = np.array([s.w_i_bi for s in samples])
        y_k = np.array([s.w_k_bk for s in samples])
    return samples, y_i, y_k


class TestConfig:
    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            MheConfig(horizon=1)

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            MheConfig(w_c3=-1.0)

    def test_defaults(self):
        mc = MheConfig()
        assert mc.horizon == 75
        assert mc.ts == pytest.approx(0.01)
        assert mc.w_c3 == pytest.approx(5.0 * mc.w_c1)


class TestGradient:
    @pytest.mark.parametrize("anchored", [False, True])
    @pytest.mark.parametrize("rates_free", [False, True])
    @pytest.mark.parametrize("arrival", [False, True])
    def test_analytic_gradient_matches_fd(self, cfg, anchored, rates_free, arrival):
        # Cost gradient J^T r from the analytic Jacobian against central
        # finite differences of the cost at randomly perturbed iterates.
        rng = np.random.default_rng(4)
        samples, y_i, y_k = _window_inputs(cfg, T=8, noisy=True)
        mc = MheConfig(horizon=8, rates_free=rates_free)
        init = samples[0].truth
        window = MheWindow(
            y_i_meas=y_i,
            y_k_meas=y_k,
            init_state=init,
            anchor_q_i=(np.array([s.truth.q_i for s in samples]) if anchored
                        else None),
            x_pre=(samples[0].truth if arrival else None),
        )
        prob = _WindowProblem(window, cfg, mc)
        # Move off the warm start so no residual term sits at a stationary
        # point by construction.
        prob.apply_step(rng.normal(scale=0.05, size=prob.n_par))
        res, geom = prob.residual()
        jac = prob.jacobian(geom)
        grad = 2.0 * (jac.T @ res)  # gradient of cost = res @ res
        snap = prob.snapshot()
        eps = 1e-6
        for idx in rng.choice(prob.n_par, size=min(20, prob.n_par),
                              replace=False):
            d = np.zeros(prob.n_par)
            d[idx] = eps
            prob.restore(snap)
            prob.apply_step(d)
            r_hi, _ = prob.residual()
            prob.restore(snap)
            prob.apply_step(-d)
            r_lo, _ = prob.residual()
            fd = (float(r_hi @ r_hi) - float(r_lo @ r_lo)) / (2.0 * eps)
            scale = max(1.0, abs(fd), abs(grad[idx]))
            assert abs(fd - grad[idx]) / scale < 1e-5


class TestSolveWindow:
    def test_noise_free_window_recovers_truth(self, cfg):
        samples, y_i, y_k = _window_inputs(cfg, movement="mo-M", seed=11, T=30)
        truth0 = samples[0].truth
        twist = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.deg2rad(10.0))
        init = ChainState(truth0.q_i, quat_multiply(twist, truth0.q_j),
                          quat_multiply(twist, truth0.q_k))
        window = MheWindow(y_i_meas=y_i, y_k_meas=y_k, init_state=init)
        sol = solve_window(window, cfg, MheConfig(horizon=30))
        assert sol.converged
        assert sol.cost < 1e-8
        # Without an anchor the cost is invariant under a global rotation of
        # the whole chain, so only the relative orientations are determined.
        phi_ji, phi_ki = evaluate_errors(sol.states, samples)
        assert max(phi_ji.max(), phi_ki.max()) < 1e-3

    def test_cost_history_strictly_decreases(self, cfg):
        samples, y_i, y_k = _window_inputs(cfg, movement="mo-M", seed=35, T=30)
        truth0 = samples[0].truth
        twist = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.deg2rad(30.0))
        init = ChainState(truth0.q_i, quat_multiply(twist, truth0.q_j),
                          quat_multiply(twist, truth0.q_k))
        window = MheWindow(y_i_meas=y_i, y_k_meas=y_k, init_state=init)
        sol = solve_window(window, cfg, MheConfig(horizon=30))
        assert sol.converged
        assert np.all(np.diff(sol.cost_history) < 0.0)

    def test_rejects_too_short_window(self, cfg):
        with pytest.raises(ValueError):
            solve_window(
                MheWindow(y_i_meas=np.zeros((1, 3)), y_k_meas=np.zeros((1, 3)),
                          init_state=ChainState(IDENTITY, IDENTITY, IDENTITY)),
                cfg, MheConfig(),
            )


@pytest.mark.slow
class TestRunEstimator:
    def test_short_noisy_run_converges(self, cfg):
        samples = generate("mo-M", duration=2.0, ts=0.01, seed=21, cfg=cfg)
        records = measure(samples, reference_noise_spec(seed=22))
        init = build_chain_pose(cfg, IDENTITY, 0.0, 0.0)
        result = run_estimator(records, "m2", None, cfg, MheConfig(), init)
        assert len(result.states) == len(records)
        assert result.converged.mean() > 0.95
        phi_ji, phi_ki = evaluate_errors(result.states, samples)
        # Allow the cold start to settle; check the final quarter only.
        tail = slice(3 * len(samples) // 4, None)
        assert np.rad2deg(max(phi_ji[tail].max(), phi_ki[tail].max())) < 4.0

    def test_m1_requires_anchor(self, cfg):
        samples = generate("mo-M", duration=1.0, ts=0.01, seed=0, cfg=cfg)
        records = measure(samples, reference_noise_spec(seed=1))
        init = build_chain_pose(cfg, IDENTITY, 0.0, 0.0)
        with pytest.raises(ValueError):
            run_estimator(records, "m1", None, cfg, MheConfig(), init)

    def test_unknown_mode_rejected(self, cfg):
        samples = generate("mo-M", duration=1.0, ts=0.01, seed=0, cfg=cfg)
        records = measure(samples, reference_noise_spec(seed=1))
        init = build_chain_pose(cfg, IDENTITY, 0.0, 0.0)
        with pytest.raises(ValueError):
            run_estimator(records, "m3", None, cfg, MheConfig(), init)
