"""Double-hinge kinematic chain: configuration, constraint residuals, propagation.

Three segments i, j, k are connected in series by two hinge joints. The joint
axes have fixed, known coordinates in the body frames of their adjacent
segments; the axes expressed in the middle segment's frame must not be
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quatmath import (
    quat_from_angvel,
    quat_multiply,
    quat_normalize,
    quat_rotate,
)


@dataclass(frozen=True)
class ChainConfig:
    """Body-frame joint-axis coordinates of the double-hinge chain.

    l_i connects segments i and j, l_k connects segments j and k. All four
    axis vectors must be unit norm; the two axes expressed in the middle
    segment's frame must differ by at least parallel_tol radians.
    """

    l_i_in_bi: np.ndarray
    l_i_in_bj: np.ndarray
    l_k_in_bj: np.ndarray
    l_k_in_bk: np.ndarray
    parallel_tol: float = 1e-3

    def __post_init__(self):
        for name in ("l_i_in_bi", "l_i_in_bj", "l_k_in_bj", "l_k_in_bk"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector")
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be unit norm")
            object.__setattr__(self, name, v)
        cosang = np.clip(float(np.dot(self.l_i_in_bj, self.l_k_in_bj)), -1.0, 1.0)
        if np.arccos(abs(cosang)) < self.parallel_tol:
            raise ValueError(
                "joint axes are parallel in the middle segment's frame; "
                "the method is undefined for parallel axes"
            )


@dataclass
class ChainState:
    """Orientations of the three segments (body frame to reference frame)."""

    q_i: np.ndarray
    q_j: np.ndarray
    q_k: np.ndarray

    def __post_init__(self):
        self.q_i = quat_normalize(self.q_i)
        self.q_j = quat_normalize(self.q_j)
        self.q_k = quat_normalize(self.q_k)

    def copy(self):
        return ChainState(self.q_i.copy(), self.q_j.copy(), self.q_k.copy())


def l_perp_bj(cfg: ChainConfig) -> np.ndarray:
    """Unit vector perpendicular to both joint axes in the middle frame."""
    c = np.cross(cfg.l_i_in_bj, cfg.l_k_in_bj)
    n = np.linalg.norm(c)
    if n < np.sin(cfg.parallel_tol):
        raise ValueError("joint axes are (near-)parallel; l_perp is undefined")
    return c / n


def hinge_residual_ij(state: ChainState, cfg: ChainConfig) -> np.ndarray:
    """First hinge constraint: both expressions of axis l_i in the r-frame."""
    return quat_rotate(state.q_i, cfg.l_i_in_bi) - quat_rotate(state.q_j, cfg.l_i_in_bj)


def hinge_residual_jk(state: ChainState, cfg: ChainConfig) -> np.ndarray:
    """Second hinge constraint: both expressions of axis l_k in the r-frame."""
    return quat_rotate(state.q_j, cfg.l_k_in_bj) - quat_rotate(state.q_k, cfg.l_k_in_bk)


def velocity_residual(state: ChainState, cfg: ChainConfig, y_i, y_k) -> float:
    """2D-joint velocity constraint.

    Projects the r-frame angular-velocity difference of the outer segments
    onto the (unnormalized) cross product of the r-frame joint axes.
    """
    w_i_r = quat_rotate(state.q_i, np.asarray(y_i, dtype=float))
    w_k_r = quat_rotate(state.q_k, np.asarray(y_k, dtype=float))
    axis_i_r = quat_rotate(state.q_i, cfg.l_i_in_bi)
    axis_k_r = quat_rotate(state.q_k, cfg.l_k_in_bk)
    return float(np.dot(w_i_r - w_k_r, np.cross(axis_i_r, axis_k_r)))


def propagate(state: ChainState, w_i, w_j, w_k, ts: float) -> ChainState:
    """One Euler step: right-multiply each orientation by its rate increment."""
    return ChainState(
        quat_multiply(state.q_i, quat_from_angvel(w_i, ts)),
        quat_multiply(state.q_j, quat_from_angvel(w_j, ts)),
        quat_multiply(state.q_k, quat_from_angvel(w_k, ts)),
    )
