"""Ground-truth motion generation and gyroscope measurement synthesis.

Three canned movements drive the middle segment:

    no-M  -- middle segment rotates only about the first joint axis; the
             rate component along l_perp is identically zero (unobservable).
    mo-M  -- middle segment spins at constant rate about an axis that is
             non-parallel to both joint axes and to l_perp; joint angles
             are frozen (minimally observable).
    rd-M  -- middle segment tumbles along a smooth random orientation path
             (observable at almost every instant).

Outer-segment motion is parameterized by joint angles about the hinge axes,
so every sample satisfies both hinge constraints by construction. Body-frame
angular rates are derived analytically from the same parameterization, never
by numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainConfig, ChainState, l_perp_bj
from .quatmath import (
    quat_between,
    quat_from_axis_angle,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
)

MOVEMENTS = ("no-M", "mo-M", "rd-M")

#: Constant middle-segment rate magnitude for mo-M (rad/s). The body-frame
#: spin axis is non-parallel to both joint axes and to l_perp.
MO_M_RATE = np.deg2rad(45.0)
MO_M_AXIS = np.array([0.0, 0.5, np.sqrt(3.0) / 2.0])

#: Target peak angular rate of the smooth random profiles (rad/s).
PROFILE_PEAK_RATE = np.deg2rad(90.0)


@dataclass
class TrajectorySample:
    """Ground truth at one instant: orientations plus true body rates."""

    t: float
    truth: ChainState
    w_i_bi: np.ndarray
    w_j_bj: np.ndarray
    w_k_bk: np.ndarray


@dataclass
class GyroRecord:
    """Biased, noisy gyroscope readings of the two instrumented segments."""

    t: float
    y_i_bi: np.ndarray
    y_k_bk: np.ndarray


@dataclass
class NoiseSpec:
    """Constant per-axis biases plus white Gaussian noise, seeded."""

    bias_i: np.ndarray
    bias_k: np.ndarray
    noise_std: float
    seed: int = 0

    def __post_init__(self):
        self.bias_i = np.asarray(self.bias_i, dtype=float)
        self.bias_k = np.asarray(self.bias_k, dtype=float)
        if self.noise_std < 0.0:
            raise ValueError("noise_std must be nonnegative")


def reference_noise_spec(seed: int = 0) -> NoiseSpec:
    """Noise/bias values of the reference simulation study (1 deg/s, 0.2 deg/s)."""
    return NoiseSpec(
        bias_i=np.deg2rad([0.2, -0.2, 0.2]),
        bias_k=np.deg2rad([0.2, 0.2, -0.2]),
        noise_std=np.deg2rad(1.0),
        seed=seed,
    )


class SmoothProfile:
    """Seeded sum of three sinusoids with analytic value and derivative.

    Frequencies in [0.2, 1.5] Hz, phases in [0, 2pi); amplitudes are scaled
    so the peak of the derivative is peak_rate.
    """

    def __init__(self, rng: np.random.Generator, peak_rate: float = PROFILE_PEAK_RATE):
        self.freq = rng.uniform(0.2, 1.5, size=3)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
        self.amp = rng.uniform(0.5, 1.0, size=3)
        # Scale on a dense grid covering the slowest period.
        t = np.linspace(0.0, 5.0, 4001)
        peak = np.max(np.abs(self._raw_derivative(t)))
        self.amp *= peak_rate / peak

    def _raw_derivative(self, t):
        t = np.atleast_1d(t)
        w = 2.0 * np.pi * self.freq
        return np.sum(
            self.amp[:, None] * w[:, None] * np.cos(np.outer(w, t) + self.phase[:, None]),
            axis=0,
        )

    def value(self, t: float) -> float:
        w = 2.0 * np.pi * self.freq
        return float(np.sum(self.amp * np.sin(w * t + self.phase)))

    def derivative(self, t: float) -> float:
        w = 2.0 * np.pi * self.freq
        return float(np.sum(self.amp * w * np.cos(w * t + self.phase)))


def _alignment_quats(cfg: ChainConfig):
    """Fixed rotations mapping the outer-segment axis coordinates onto the
    middle segment's coordinates of the same physical axis."""
    a_i = quat_between(cfg.l_i_in_bi, cfg.l_i_in_bj)
    a_k = quat_between(cfg.l_k_in_bk, cfg.l_k_in_bj)
    return a_i, a_k


def build_chain_pose(cfg: ChainConfig, q_j, theta_i: float, theta_k: float) -> ChainState:
    """Constraint-consistent chain pose from middle orientation and joint angles.

    The outer orientations are the middle orientation composed with the fixed
    axis-alignment rotations and then twisted by the joint angles about their
    own hinge axes; both hinge residuals vanish by construction.
    """
    a_i, a_k = _alignment_quats(cfg)
    # q_i = q_j ⊗ align ⊗ hinge twist, so R_i l_i_bi = R_j l_i_bj exactly.
    q_i = quat_multiply(
        quat_multiply(q_j, a_i), quat_from_axis_angle(cfg.l_i_in_bi, theta_i)
    )
    q_k = quat_multiply(
        quat_multiply(q_j, a_k), quat_from_axis_angle(cfg.l_k_in_bk, theta_k)
    )
    return ChainState(q_i, q_j, q_k)


class _MiddlePath:
    """Analytic middle-segment orientation path with body-frame rate."""

    def __init__(self, movement: str, rng: np.random.Generator, cfg: ChainConfig):
        self.movement = movement
        if movement == "no-M":
            self.axis = cfg.l_i_in_bj
            self.profile = SmoothProfile(rng)
        elif movement == "mo-M":
            self.axis = MO_M_AXIS
            self.rate = MO_M_RATE
        elif movement == "rd-M":
            self.profiles = [SmoothProfile(rng) for _ in range(3)]
            self.axes = np.eye(3)
        else:
            raise ValueError(f"unknown movement tag: {movement!r}")

    def orientation(self, t: float) -> np.ndarray:
        if self.movement == "no-M":
            return quat_from_axis_angle(self.axis, self.profile.value(t))
        if self.movement == "mo-M":
            return quat_from_axis_angle(self.axis, self.rate * t)
        q = quat_from_axis_angle(self.axes[0], self.profiles[0].value(t))
        q = quat_multiply(q, quat_from_axis_angle(self.axes[1], self.profiles[1].value(t)))
        return quat_multiply(q, quat_from_axis_angle(self.axes[2], self.profiles[2].value(t)))

    def body_rate(self, t: float) -> np.ndarray:
        if self.movement == "no-M":
            return self.profile.derivative(t) * self.axis
        if self.movement == "mo-M":
            return self.rate * self.axis
        # q = Rx(p0) Ry(p1) Rz(p2): chain rule on the elementary factors.
        p1, p2 = self.profiles[1].value(t), self.profiles[2].value(t)
        d0, d1, d2 = (p.derivative(t) for p in self.profiles)
        r_b = quat_to_matrix(quat_from_axis_angle(self.axes[1], p1))
        r_c = quat_to_matrix(quat_from_axis_angle(self.axes[2], p2))
        return r_c.T @ (r_b.T @ (self.axes[0] * d0) + self.axes[1] * d1) + self.axes[2] * d2


class _JointAngle:
    """Joint-angle path: smooth random or frozen constant."""

    def __init__(self, movement: str, rng: np.random.Generator):
        if movement == "mo-M":
            self.const = rng.uniform(-np.pi / 3.0, np.pi / 3.0)
            self.profile = None
        else:
            self.const = 0.0
            self.profile = SmoothProfile(rng)

    def value(self, t: float) -> float:
        if self.profile is None:
            return self.const
        return self.profile.value(t)

    def derivative(self, t: float) -> float:
        if self.profile is None:
            return 0.0
        return self.profile.derivative(t)


def generate(movement: str, duration: float, ts: float, seed: int, cfg: ChainConfig):
    """Generate a kinematically consistent ground-truth trajectory.

    Returns duration/ts + 1 samples at t = 0, ts, 2*ts, ... Every sample
    satisfies both hinge constraints to machine precision and carries
    analytically derived body rates.
    """
    if movement not in MOVEMENTS:
        raise ValueError(f"unknown movement tag: {movement!r} (expected one of {MOVEMENTS})")
    if duration <= 0.0 or ts <= 0.0:
        raise ValueError("duration and ts must be positive")

    rng = np.random.default_rng(seed)
    middle = _MiddlePath(movement, rng, cfg)
    joint_i = _JointAngle(movement, rng)
    joint_k = _JointAngle(movement, rng)
    a_i, a_k = _alignment_quats(cfg)

    n = int(round(duration / ts))
    samples = []
    for step in range(n + 1):
        t = step * ts
        q_j = middle.orientation(t)
        w_j = middle.body_rate(t)
        th_i, th_k = joint_i.value(t), joint_k.value(t)
        state = build_chain_pose(cfg, q_j, th_i, th_k)
        # omega_outer = R_bj^bouter * omega_j + joint rate about the own axis.
        r_ji = quat_to_matrix(
            quat_multiply(a_i, quat_from_axis_angle(cfg.l_i_in_bi, th_i))
        ).T
        r_jk = quat_to_matrix(
            quat_multiply(a_k, quat_from_axis_angle(cfg.l_k_in_bk, th_k))
        ).T
        w_i = r_ji @ w_j + joint_i.derivative(t) * cfg.l_i_in_bi
        w_k = r_jk @ w_j + joint_k.derivative(t) * cfg.l_k_in_bk
        samples.append(TrajectorySample(t, state, w_i, w_j, w_k))
    return samples


def measure(samples, noise: NoiseSpec):
    """Corrupt the true outer-segment rates with constant bias and white noise."""
    rng = np.random.default_rng(noise.seed)
    records = []
    for s in samples:
        e_i = rng.normal(0.0, noise.noise_std, size=3) if noise.noise_std > 0 else np.zeros(3)
        e_k = rng.normal(0.0, noise.noise_std, size=3) if noise.noise_std > 0 else np.zeros(3)
        records.append(
            GyroRecord(s.t, s.w_i_bi + noise.bias_i + e_i, s.w_k_bk + noise.bias_k + e_k)
        )
    return records


def project_rates(samples, cfg: ChainConfig):
    """Scalar rate projections onto the characteristic axes, per sample.

    Returns arrays (w_perp, w_nonperp, w_li, w_lk):
        w_perp    -- middle-segment rate component along l_perp (signed),
        w_nonperp -- norm of the remaining middle-segment rate,
        w_li/w_lk -- joint rates of the outer segments about their hinge axes.
    """
    lp = l_perp_bj(cfg)
    n = len(samples)
    w_perp = np.empty(n)
    w_nonperp = np.empty(n)
    w_li = np.empty(n)
    w_lk = np.empty(n)
    for idx, s in enumerate(samples):
        w_perp[idx] = float(np.dot(s.w_j_bj, lp))
        w_nonperp[idx] = float(np.linalg.norm(s.w_j_bj - w_perp[idx] * lp))
        # Relative rate of the outer segment w.r.t. the middle, about its axis.
        r_i = quat_to_matrix(s.truth.q_i)
        r_j = quat_to_matrix(s.truth.q_j)
        r_k = quat_to_matrix(s.truth.q_k)
        w_li[idx] = float(np.dot(s.w_i_bi - r_i.T @ (r_j @ s.w_j_bj), cfg.l_i_in_bi))
        w_lk[idx] = float(np.dot(s.w_k_bk - r_k.T @ (r_j @ s.w_j_bj), cfg.l_k_in_bk))
    return w_perp, w_nonperp, w_li, w_lk


def reference_chain_config() -> ChainConfig:
    """Joint-axis coordinates of the reference simulation study."""
    s = 1.0 / np.sqrt(2.0)
    return ChainConfig(
        l_i_in_bi=np.array([1.0, 0.0, 0.0]),
        l_i_in_bj=np.array([1.0, 0.0, 0.0]),
        l_k_in_bj=np.array([s, s, 0.0]),
        l_k_in_bk=np.array([1.0, 0.0, 0.0]),
    )
