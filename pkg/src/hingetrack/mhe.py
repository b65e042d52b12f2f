"""Moving-horizon estimation of the chain orientations from two gyroscopes.

At every sampling instant a constrained nonlinear least-squares problem is
solved over a sliding window: decision variables are the three orientations
at the window start plus the angular-rate inputs over the window (the
unmeasured middle rate always; corrections to the measured outer rates when
rates_free is set). States inside the window are reconstructed by one-step
quaternion integration (single shooting), which keeps every iterate feasible
with respect to the dynamics and the unit-norm constraints by construction.

The solver is a damped Gauss-Newton (Levenberg-Marquardt) iteration with
analytic Jacobians. Orientation variables are updated through left
(reference-frame) tangent increments, so perturbations of the window-start
orientations commute through the body-frame dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from scipy.linalg import cho_factor, cho_solve

from .chain import ChainConfig, ChainState
from .quatmath import (
    cross_matrix,
    quat_from_rotvec,
    quat_to_matrix,
    so3_right_jacobian,
)


@dataclass
class SolverConfig:
    max_iterations: int = 50
    step_tolerance: float = 1e-8
    relative_decrease_tolerance: float = 1e-4
    damping_init: float = 1e-3


@dataclass
class MheConfig:
    """Sample time, horizon, cost weights and solver settings.

    Weights are scalar multiples of identity matrices; defaults are the tuned
    values of the reference study. The measured-rate weights apply to rad/s
    deviations.
    """

    ts: float = 0.01
    horizon: int = 75
    w_c1: float = 2.5e3
    w_c2: float = 2.5e3
    w_c3: float = 1.25e4
    w_a: float = 2.0e3
    w_y_i: float = 360.0 / (2.0 * np.pi)
    w_y_k: float = 360.0 / (2.0 * np.pi)
    rates_free: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.ts <= 0.0:
            raise ValueError("ts must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2 samples")
        for name in ("w_c1", "w_c2", "w_c3", "w_a", "w_y_i", "w_y_k"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class MheWindow:
    """One estimation window: measurements, optional anchor, warm start.

    anchor_q_i, when given (mode m1), fixes the first segment's orientation
    trajectory over the window; x_pre, when given, anchors the window-start
    state through the arrival cost. init_* provide the warm start.
    """

    y_i_meas: np.ndarray  # (T, 3) measured rates of segment i
    y_k_meas: np.ndarray  # (T, 3) measured rates of segment k
    init_state: ChainState  # window-start orientation guess
    init_w_j: np.ndarray | None = None  # (T-1, 3) middle-rate guess
    init_y_i: np.ndarray | None = None  # (T, 3) outer-rate warm start
    init_y_k: np.ndarray | None = None
    anchor_q_i: np.ndarray | None = None  # (T, 4) known q_i trajectory
    x_pre: ChainState | None = None  # previous estimate at window start


@dataclass
class WindowSolution:
    states: list  # ChainState per window sample
    w_j: np.ndarray  # (T-1, 3) estimated middle rates
    y_i: np.ndarray  # (T, 3) estimated outer rates
    y_k: np.ndarray
    cost: float
    iterations: int
    converged: bool
    cost_history: np.ndarray


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    out = np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])
    return out / np.sqrt(out @ out)


def _quat_right_mat(q):
    """Matrix M(q) with p ⊗ q == M(q) @ p."""
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, z, -y],
        [y, -z, w, x],
        [z, y, -x, w],
    ])


def _state_stack(state: ChainState) -> np.ndarray:
    return np.concatenate([state.q_i, state.q_j, state.q_k])


def _sign_align(q, ref):
    return q if float(np.dot(q, ref)) >= 0.0 else -q


def stage_cost(state: ChainState, u, y_i_meas, y_k_meas,
               chain_cfg: ChainConfig, mhe_cfg: MheConfig) -> float:
    """Weighted squared constraint residuals plus measured-rate deviations.

    u = (y_i, y_j, y_k) is the rate input hypothesis; the middle rate y_j
    carries no cost term (it is the unknown input).
    """
    from .chain import hinge_residual_ij, hinge_residual_jk, velocity_residual

    y_i, _, y_k = u
    c1 = hinge_residual_ij(state, chain_cfg)
    c2 = hinge_residual_jk(state, chain_cfg)
    c3 = velocity_residual(state, chain_cfg, y_i, y_k)
    d_i = np.asarray(y_i, dtype=float) - np.asarray(y_i_meas, dtype=float)
    d_k = np.asarray(y_k, dtype=float) - np.asarray(y_k_meas, dtype=float)
    return float(
        mhe_cfg.w_c1 * c1 @ c1
        + mhe_cfg.w_c2 * c2 @ c2
        + mhe_cfg.w_c3 * c3 * c3
        + mhe_cfg.w_y_i * d_i @ d_i
        + mhe_cfg.w_y_k * d_k @ d_k
    )


def arrival_cost(x: ChainState, x_pre: ChainState, w_a) -> float:
    """Quadratic penalty on the raw quaternion-component difference.

    Each quaternion is flipped to the hemisphere of its x_pre counterpart
    first, so the cost is invariant under the double cover. w_a may be a
    scalar or a 12x12 weight matrix.
    """
    diff = np.concatenate([
        _sign_align(x.q_i, x_pre.q_i) - x_pre.q_i,
        _sign_align(x.q_j, x_pre.q_j) - x_pre.q_j,
        _sign_align(x.q_k, x_pre.q_k) - x_pre.q_k,
    ])
    w_a = np.asarray(w_a, dtype=float)
    if w_a.ndim == 0:
        return float(w_a * diff @ diff)
    return float(diff @ w_a @ diff)


class _WindowProblem:
    """Single-shooting residual/Jacobian machinery for one window."""

    def __init__(self, window: MheWindow, chain_cfg: ChainConfig, mhe_cfg: MheConfig):
        self.cfg = chain_cfg
        self.mc = mhe_cfg
        self.ts = mhe_cfg.ts
        self.y_i_meas = np.asarray(window.y_i_meas, dtype=float)
        self.y_k_meas = np.asarray(window.y_k_meas, dtype=float)
        self.T = self.y_i_meas.shape[0]
        if self.T < 2:
            raise ValueError("window must contain at least two samples")
        self.anchored = window.anchor_q_i is not None
        self.anchor = None if window.anchor_q_i is None else np.asarray(window.anchor_q_i, dtype=float)
        self.x_pre = window.x_pre
        self.rates_free = mhe_cfg.rates_free

        # Current iterate.
        self.q_start = np.array([
            window.init_state.q_i, window.init_state.q_j, window.init_state.q_k
        ])
        if self.anchored:
            self.q_start[0] = self.anchor[0]
        self.w_j = (np.zeros((self.T - 1, 3)) if window.init_w_j is None
                    else np.asarray(window.init_w_j, dtype=float).copy())
        self.y_i = (self.y_i_meas.copy() if window.init_y_i is None
                    else np.asarray(window.init_y_i, dtype=float).copy())
        self.y_k = (self.y_k_meas.copy() if window.init_y_k is None
                    else np.asarray(window.init_y_k, dtype=float).copy())
        if not self.rates_free:
            self.y_i = self.y_i_meas.copy()
            self.y_k = self.y_k_meas.copy()

        # Parameter layout: [eta_i?, eta_j, eta_k, w_j, d_i?, d_k?].
        self.n_eta = 6 if self.anchored else 9
        self.n_wj = 3 * (self.T - 1)
        self.n_d = 6 * self.T if self.rates_free else 0
        self.n_par = self.n_eta + self.n_wj + self.n_d

        sq = np.sqrt
        self.s_c1 = sq(mhe_cfg.w_c1)
        self.s_c2 = sq(mhe_cfg.w_c2)
        self.s_c3 = sq(mhe_cfg.w_c3)
        self.s_a = sq(mhe_cfg.w_a)
        self.s_yi = sq(mhe_cfg.w_y_i)
        self.s_yk = sq(mhe_cfg.w_y_k)

        self.n_res = 7 * self.T + (6 * self.T if self.rates_free else 0)
        self.has_arrival = self.x_pre is not None
        if self.has_arrival:
            self.n_res += 12
            self.pre_stack = np.array([self.x_pre.q_i, self.x_pre.q_j, self.x_pre.q_k])

    # -- reconstruction -----------------------------------------------------

    def _integrate(self, q0, rates):
        """Dead-reckon a quaternion trajectory from T-1 rate samples."""
        out = np.empty((self.T, 4))
        out[0] = q0
        for t in range(self.T - 1):
            out[t + 1] = _quat_mul(out[t], quat_from_rotvec(rates[t] * self.ts))
        return out

    def reconstruct(self):
        q_j = self._integrate(self.q_start[1], self.w_j)
        if self.anchored:
            q_i = self.anchor
        else:
            q_i = self._integrate(self.q_start[0], self.y_i[:-1])
        q_k = self._integrate(self.q_start[2], self.y_k[:-1])
        return q_i, q_j, q_k

    def residual(self, recon=None):
        if recon is None:
            recon = self.reconstruct()
        q_i, q_j, q_k = recon
        r_i = np.array([quat_to_matrix(q) for q in q_i])
        r_j = np.array([quat_to_matrix(q) for q in q_j])
        r_k = np.array([quat_to_matrix(q) for q in q_k])

        cfg = self.cfg
        a_i = r_i @ cfg.l_i_in_bi
        a_j = r_j @ cfg.l_i_in_bj
        b_j = r_j @ cfg.l_k_in_bj
        b_k = r_k @ cfg.l_k_in_bk
        u_i = np.einsum("tab,tb->ta", r_i, self.y_i)
        u_k = np.einsum("tab,tb->ta", r_k, self.y_k)
        m = np.cross(a_i, b_k)
        du = u_i - u_k

        res = np.empty(self.n_res)
        n = self.T
        res[0:3 * n] = (self.s_c1 * (a_i - a_j)).ravel()
        res[3 * n:6 * n] = (self.s_c2 * (b_j - b_k)).ravel()
        res[6 * n:7 * n] = self.s_c3 * np.sum(du * m, axis=-1)
        pos = 7 * n
        if self.rates_free:
            res[pos:pos + 3 * n] = (self.s_yi * (self.y_i - self.y_i_meas)).ravel()
            pos += 3 * n
            res[pos:pos + 3 * n] = (self.s_yk * (self.y_k - self.y_k_meas)).ravel()
            pos += 3 * n
        if self.has_arrival:
            for s in range(3):
                q = q_i[0] if s == 0 else (q_j[0] if s == 1 else q_k[0])
                q = _sign_align(q, self.pre_stack[s])
                res[pos:pos + 4] = self.s_a * (q - self.pre_stack[s])
                pos += 4

        geom = {"r_i": r_i, "r_j": r_j, "r_k": r_k, "a_i": a_i, "a_j": a_j,
                "b_j": b_j, "b_k": b_k, "u_i": u_i, "u_k": u_k, "m": m, "du": du,
                "q_i": q_i, "q_j": q_j, "q_k": q_k}
        return res, geom

    # -- Jacobian -----------------------------------------------------------

    def _rate_chain(self, r, rates):
        """G(tau) = R(tau+1) Jr(rate*ts) * ts: maps a rate perturbation at
        step tau to the r-frame tangent perturbation of all later states."""
        g = np.empty((self.T - 1, 3, 3))
        for tau in range(self.T - 1):
            g[tau] = r[tau + 1] @ so3_right_jacobian(rates[tau] * self.ts) * self.ts
        return g

    def jacobian(self, geom):
        n = self.T
        cfg = self.cfg
        a_i, a_j, b_j, b_k = geom["a_i"], geom["a_j"], geom["b_j"], geom["b_k"]
        u_i, u_k, m, du = geom["u_i"], geom["u_k"], geom["m"], geom["du"]
        r_i, r_j, r_k = geom["r_i"], geom["r_j"], geom["r_k"]

        s_ai = _skew_batch(a_i)
        s_aj = _skew_batch(a_j)
        s_bj = _skew_batch(b_j)
        s_bk = _skew_batch(b_k)
        # c3 sensitivities to r-frame tangent perturbations of q_i / q_k.
        g_i3 = np.cross(u_i, m) + np.cross(a_i, np.cross(b_k, du))
        g_k3 = -np.cross(u_k, m) + np.cross(b_k, np.cross(du, a_i))

        g_j = self._rate_chain(r_j, self.w_j)
        g_ich = None if self.anchored else self._rate_chain(r_i, self.y_i[:-1])
        g_kch = self._rate_chain(r_k, self.y_k[:-1])

        # mask[t, tau] = rate at tau influences state at t.
        mask = (np.arange(n)[:, None] > np.arange(n - 1)[None, :]).astype(float)

        jac = np.zeros((self.n_res, self.n_par))
        # Column offsets.
        c_eta_i = None if self.anchored else 0
        c_eta_j = 0 if self.anchored else 3
        c_eta_k = c_eta_j + 3
        c_wj = self.n_eta
        c_di = c_wj + self.n_wj
        c_dk = c_di + 3 * n

        def put_eta(row0, blocks, col):
            # blocks: (T, rdim, 3) per-sample Jacobian w.r.t. one eta.
            rdim = blocks.shape[1]
            jac[row0:row0 + rdim * n, col:col + 3] = blocks.reshape(rdim * n, 3)

        def put_chain(row0, sens, g, col):
            # sens: (T, rdim, 3) sensitivity to r-frame tangent of the state;
            # g: (T-1, 3, 3) rate chain. Fills (T*rdim, 3*(T-1)).
            rdim = sens.shape[1]
            block = np.einsum("trb,ubc->turc", sens, g) * mask[:, :, None, None]
            jac[row0:row0 + rdim * n, col:col + 3 * (n - 1)] = (
                block.transpose(0, 2, 1, 3).reshape(rdim * n, 3 * (n - 1))
            )

        # c1 rows.
        row = 0
        if not self.anchored:
            put_eta(row, -self.s_c1 * s_ai, c_eta_i)
            if self.rates_free:
                put_chain(row, -self.s_c1 * s_ai, g_ich, c_di)
        put_eta(row, self.s_c1 * s_aj, c_eta_j)
        put_chain(row, self.s_c1 * s_aj, g_j, c_wj)

        # c2 rows.
        row = 3 * n
        put_eta(row, -self.s_c2 * s_bj, c_eta_j)
        put_eta(row, self.s_c2 * s_bk, c_eta_k)
        put_chain(row, -self.s_c2 * s_bj, g_j, c_wj)
        if self.rates_free:
            put_chain(row, self.s_c2 * s_bk, g_kch, c_dk)

        # c3 rows (no dependence on the middle rate).
        row = 6 * n
        gi = (self.s_c3 * g_i3)[:, None, :]
        gk = (self.s_c3 * g_k3)[:, None, :]
        if not self.anchored:
            put_eta(row, gi, c_eta_i)
        put_eta(row, gk, c_eta_k)
        if self.rates_free:
            if not self.anchored:
                put_chain(row, gi, g_ich, c_di)
            put_chain(row, gk, g_kch, c_dk)
            # Direct dependence of c3(t) on the rate hypothesis at t.
            d_di = self.s_c3 * np.einsum("ta,tab->tb", m, r_i)
            d_dk = -self.s_c3 * np.einsum("ta,tab->tb", m, r_k)
            for t in range(n):
                jac[row + t, c_di + 3 * t:c_di + 3 * t + 3] += d_di[t]
                jac[row + t, c_dk + 3 * t:c_dk + 3 * t + 3] += d_dk[t]

        pos = 7 * n
        if self.rates_free:
            idx = np.arange(3 * n)
            jac[pos + idx, c_di + idx] = self.s_yi
            pos += 3 * n
            jac[pos + idx, c_dk + idx] = self.s_yk
            pos += 3 * n

        if self.has_arrival:
            quats = (geom["q_i"][0], geom["q_j"][0], geom["q_k"][0])
            cols = (c_eta_i, c_eta_j, c_eta_k)
            for s in range(3):
                q = quats[s]
                sign = 1.0 if float(np.dot(q, self.pre_stack[s])) >= 0.0 else -1.0
                if cols[s] is not None:
                    jac[pos:pos + 4, cols[s]:cols[s] + 3] = (
                        0.5 * sign * self.s_a * _quat_right_mat(q)[:, 1:]
                    )
                pos += 4

        return jac

    # -- parameter update ---------------------------------------------------

    def snapshot(self):
        return (self.q_start.copy(), self.w_j.copy(), self.y_i.copy(), self.y_k.copy())

    def restore(self, snap):
        self.q_start, self.w_j, self.y_i, self.y_k = (a.copy() for a in snap)

    def apply_step(self, delta):
        pos = 0
        if not self.anchored:
            self.q_start[0] = _quat_mul(quat_from_rotvec(delta[0:3]), self.q_start[0])
            pos = 3
        self.q_start[1] = _quat_mul(quat_from_rotvec(delta[pos:pos + 3]), self.q_start[1])
        self.q_start[2] = _quat_mul(quat_from_rotvec(delta[pos + 3:pos + 6]), self.q_start[2])
        pos += 6
        self.w_j += delta[pos:pos + self.n_wj].reshape(-1, 3)
        pos += self.n_wj
        if self.rates_free:
            self.y_i += delta[pos:pos + 3 * self.T].reshape(-1, 3)
            pos += 3 * self.T
            self.y_k += delta[pos:pos + 3 * self.T].reshape(-1, 3)


def _skew_batch(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def solve_window(window: MheWindow, chain_cfg: ChainConfig, mhe_cfg: MheConfig) -> WindowSolution:
    """Levenberg-Marquardt solve of one window; accepted steps strictly
    decrease the cost. Returns the best iterate with convergence flags."""
    prob = _WindowProblem(window, chain_cfg, mhe_cfg)
    sc = mhe_cfg.solver

    res, geom = prob.residual()
    cost = float(res @ res)
    history = [cost]
    lam = sc.damping_init
    converged = False
    iterations = 0

    for iterations in range(1, sc.max_iterations + 1):
        jac = prob.jacobian(geom)
        hess = jac.T @ jac
        grad = jac.T @ res
        diag = np.diag(hess).copy()
        floor = max(1e-12, 1e-8 * float(diag.max(initial=0.0)))
        diag = np.maximum(diag, floor)

        accepted = False
        for _ in range(12):
            try:
                damped = hess + lam * np.diag(diag)
                delta = -cho_solve(cho_factor(damped, lower=True, check_finite=False),
                                   grad, check_finite=False)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            snap = prob.snapshot()
            prob.apply_step(delta)
            new_res, new_geom = prob.residual()
            new_cost = float(new_res @ new_res)
            if new_cost < cost:
                accepted = True
                lam = max(lam / 3.0, 1e-12)
                break
            prob.restore(snap)
            lam *= 10.0
        if not accepted:
            break

        drop = cost - new_cost
        res, geom, cost = new_res, new_geom, new_cost
        history.append(cost)
        if (np.linalg.norm(delta) < sc.step_tolerance
                or drop < sc.relative_decrease_tolerance * max(cost, 1e-30)):
            converged = True
            break

    q_i, q_j, q_k = geom["q_i"], geom["q_j"], geom["q_k"]
    states = [ChainState(q_i[t], q_j[t], q_k[t]) for t in range(prob.T)]
    return WindowSolution(
        states=states,
        w_j=prob.w_j.copy(),
        y_i=prob.y_i.copy(),
        y_k=prob.y_k.copy(),
        cost=cost,
        iterations=iterations,
        converged=converged,
        cost_history=np.array(history),
    )


@dataclass
class EstimationResult:
    states: list  # ChainState per input record
    converged: np.ndarray  # bool per record
    costs: np.ndarray  # final window cost per record


def run_estimator(records, mode: str, anchor, chain_cfg: ChainConfig,
                  mhe_cfg: MheConfig, init: ChainState) -> EstimationResult:
    """Slide the estimation window over the record stream.

    mode "m1" fixes the first segment's orientation to the given anchor
    trajectory (array-like of quaternions, one per record); mode "m2" uses no
    prior orientation knowledge. The window grows from 2 samples to the full
    horizon before sliding; each window is warm-started from the previous
    solution shifted by one step, with the newest state predicted from the
    measured rates (middle rate by persistence).
    """
    if mode not in ("m1", "m2"):
        raise ValueError(f"unknown estimation mode: {mode!r}")
    if mode == "m1":
        if anchor is None:
            raise ValueError("mode m1 requires an anchor q_i trajectory")
        anchor = np.asarray(anchor, dtype=float)
        if anchor.shape != (len(records), 4):
            raise ValueError("anchor must provide one quaternion per record")

    n = len(records)
    horizon = mhe_cfg.horizon
    y_i = np.array([r.y_i_bi for r in records])
    y_k = np.array([r.y_k_bk for r in records])

    states_out = [init.copy()]
    converged = np.ones(n, dtype=bool)
    costs = np.zeros(n)

    prev: WindowSolution | None = None
    for step in range(1, n):
        lo = max(0, step - horizon)
        t_len = step - lo + 1
        sliding = prev is not None and lo > max(0, (step - 1) - horizon)

        if prev is None:
            init_state = init
            init_wj = np.zeros((t_len - 1, 3))
            init_yi = init_yk = None
            x_pre = init
        elif not sliding:
            init_state = prev.states[0]
            init_wj = np.vstack([prev.w_j, prev.w_j[-1:]]) if prev.w_j.size else np.zeros((t_len - 1, 3))
            init_yi = np.vstack([prev.y_i, y_i[step]])
            init_yk = np.vstack([prev.y_k, y_k[step]])
            x_pre = init
        else:
            init_state = prev.states[1]
            init_wj = np.vstack([prev.w_j[1:], prev.w_j[-1:]])
            init_yi = np.vstack([prev.y_i[1:], y_i[step]])
            init_yk = np.vstack([prev.y_k[1:], y_k[step]])
            x_pre = prev.states[1]

        window = MheWindow(
            y_i_meas=y_i[lo:step + 1],
            y_k_meas=y_k[lo:step + 1],
            init_state=init_state,
            init_w_j=init_wj,
            init_y_i=init_yi,
            init_y_k=init_yk,
            anchor_q_i=anchor[lo:step + 1] if mode == "m1" else None,
            x_pre=x_pre,
        )
        sol = solve_window(window, chain_cfg, mhe_cfg)
        prev = sol
        states_out.append(sol.states[-1])
        converged[step] = sol.converged
        costs[step] = sol.cost

    return EstimationResult(states=states_out, converged=converged, costs=costs)


def evaluate_errors(estimates, truth):
    """Relative-orientation angular errors (rad) between estimate and truth.

    estimates: ChainState per instant; truth: TrajectorySample (or ChainState)
    per instant. Returns (phi_err_ji, phi_err_ki), invariant under a common
    rotation of all estimated orientations.
    """
    from .quatmath import angular_distance, relative_quat

    n = len(estimates)
    if len(truth) != n:
        raise ValueError("estimate and truth lengths differ")
    phi_ji = np.empty(n)
    phi_ki = np.empty(n)
    for idx in range(n):
        est = estimates[idx]
        tru = truth[idx].truth if hasattr(truth[idx], "truth") else truth[idx]
        phi_ji[idx] = angular_distance(
            relative_quat(est.q_i, est.q_j), relative_quat(tru.q_i, tru.q_j)
        )
        phi_ki[idx] = angular_distance(
            relative_quat(est.q_i, est.q_k), relative_quat(tru.q_i, tru.q_k)
        )
    return phi_ji, phi_ki
