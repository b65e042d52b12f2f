"""Scenario files: one YAML document describing a complete experiment.

A scenario bundles the chain geometry, the movement to simulate, timing,
noise, estimator settings and the estimation mode. Every default is written
out explicitly when saving, so a stored scenario is self-contained and
round-trips losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .chain import ChainConfig
from .mhe import MheConfig, SolverConfig
from .simulator import MOVEMENTS, NoiseSpec, reference_chain_config, reference_noise_spec

MODES = ("m1", "m2")

#: Documentation-only physical dimensions (meters): the rigid-segment lengths
#: and the sensor mounting offsets. The estimator is rate-only and never
#: reads them; they are carried so a stored scenario fully describes the
#: simulated device.
DEFAULT_METADATA = {
    "segment_length_m": 0.04,
    "imu_offset_m": 0.02,
}


class ScenarioError(ValueError):
    """Raised when a scenario file is missing, malformed, or inconsistent."""


@dataclass
class Scenario:
    """Full description of one simulation + estimation experiment."""

    movement: str = "mo-M"
    duration: float = 10.0
    ts: float = 0.01
    seed: int = 0
    mode: str = "m2"
    chain: ChainConfig = field(default_factory=reference_chain_config)
    noise: NoiseSpec = field(default_factory=reference_noise_spec)
    mhe: MheConfig = field(default_factory=MheConfig)
    metadata: dict = field(default_factory=lambda: dict(DEFAULT_METADATA))

    def __post_init__(self):
        if self.movement not in MOVEMENTS:
            raise ScenarioError(
                f"field 'movement': unknown tag {self.movement!r}, "
                f"expected one of {', '.join(MOVEMENTS)}"
            )
        if self.mode not in MODES:
            raise ScenarioError(
                f"field 'mode': unknown tag {self.mode!r}, expected m1 or m2"
            )
        if self.duration <= 0.0:
            raise ScenarioError("field 'duration': must be positive")
        if self.ts <= 0.0:
            raise ScenarioError("field 'ts': must be positive")
        if self.mhe.ts != self.ts:
            self.mhe.ts = self.ts


def _vec(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ScenarioError(f"field {name!r}: expected 3 numbers, got {value!r}")
    return arr


def scenario_to_dict(sc: Scenario) -> dict:
    c, n, m, s = sc.chain, sc.noise, sc.mhe, sc.mhe.solver
    return {
        "movement": sc.movement,
        "duration": float(sc.duration),
        "ts": float(sc.ts),
        "seed": int(sc.seed),
        "mode": sc.mode,
        "chain": {
            "l_i_in_bi": [float(x) for x in c.l_i_in_bi],
            "l_i_in_bj": [float(x) for x in c.l_i_in_bj],
            "l_k_in_bj": [float(x) for x in c.l_k_in_bj],
            "l_k_in_bk": [float(x) for x in c.l_k_in_bk],
            "parallel_tol": float(c.parallel_tol),
        },
        "noise": {
            "bias_i_deg_per_s": [float(x) for x in np.rad2deg(n.bias_i)],
            "bias_k_deg_per_s": [float(x) for x in np.rad2deg(n.bias_k)],
            "noise_std_deg_per_s": float(np.rad2deg(n.noise_std)),
            "seed": int(n.seed),
        },
        "mhe": {
            "horizon": int(m.horizon),
            "w_c1": float(m.w_c1),
            "w_c2": float(m.w_c2),
            "w_c3": float(m.w_c3),
            "w_a": float(m.w_a),
            "w_y_i": float(m.w_y_i),
            "w_y_k": float(m.w_y_k),
            "rates_free": bool(m.rates_free),
            "solver": {
                "max_iterations": int(s.max_iterations),
                "step_tolerance": float(s.step_tolerance),
                "relative_decrease_tolerance": float(s.relative_decrease_tolerance),
                "damping_init": float(s.damping_init),
            },
        },
        "metadata": dict(sc.metadata),
    }


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    base = Scenario()
    known = {"movement", "duration", "ts", "seed", "mode",
             "chain", "noise", "mhe", "metadata"}
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")

    chain = base.chain
    if "chain" in data:
        cd = dict(data["chain"])
        chain = ChainConfig(
            l_i_in_bi=_vec(cd.pop("l_i_in_bi", chain.l_i_in_bi), "chain.l_i_in_bi"),
            l_i_in_bj=_vec(cd.pop("l_i_in_bj", chain.l_i_in_bj), "chain.l_i_in_bj"),
            l_k_in_bj=_vec(cd.pop("l_k_in_bj", chain.l_k_in_bj), "chain.l_k_in_bj"),
            l_k_in_bk=_vec(cd.pop("l_k_in_bk", chain.l_k_in_bk), "chain.l_k_in_bk"),
            parallel_tol=float(cd.pop("parallel_tol", chain.parallel_tol)),
        )
        if cd:
            raise ScenarioError(f"unknown chain field(s): {', '.join(sorted(cd))}")

    noise = base.noise
    if "noise" in data:
        nd = dict(data["noise"])
        noise = NoiseSpec(
            bias_i=np.deg2rad(_vec(nd.pop("bias_i_deg_per_s", np.rad2deg(noise.bias_i)),
                                   "noise.bias_i_deg_per_s")),
            bias_k=np.deg2rad(_vec(nd.pop("bias_k_deg_per_s", np.rad2deg(noise.bias_k)),
                                   "noise.bias_k_deg_per_s")),
            noise_std=float(np.deg2rad(nd.pop("noise_std_deg_per_s",
                                              np.rad2deg(noise.noise_std)))),
            seed=int(nd.pop("seed", noise.seed)),
        )
        if nd:
            raise ScenarioError(f"unknown noise field(s): {', '.join(sorted(nd))}")

    mhe = base.mhe
    if "mhe" in data:
        md = dict(data["mhe"])
        sd = dict(md.pop("solver", {}))
        solver = SolverConfig(
            max_iterations=int(sd.pop("max_iterations", mhe.solver.max_iterations)),
            step_tolerance=float(sd.pop("step_tolerance", mhe.solver.step_tolerance)),
            relative_decrease_tolerance=float(
                sd.pop("relative_decrease_tolerance",
                       mhe.solver.relative_decrease_tolerance)),
            damping_init=float(sd.pop("damping_init", mhe.solver.damping_init)),
        )
        if sd:
            raise ScenarioError(f"unknown solver field(s): {', '.join(sorted(sd))}")
        mhe = MheConfig(
            ts=float(data.get("ts", base.ts)),
            horizon=int(md.pop("horizon", mhe.horizon)),
            w_c1=float(md.pop("w_c1", mhe.w_c1)),
            w_c2=float(md.pop("w_c2", mhe.w_c2)),
            w_c3=float(md.pop("w_c3", mhe.w_c3)),
            w_a=float(md.pop("w_a", mhe.w_a)),
            w_y_i=float(md.pop("w_y_i", mhe.w_y_i)),
            w_y_k=float(md.pop("w_y_k", mhe.w_y_k)),
            rates_free=bool(md.pop("rates_free", mhe.rates_free)),
            solver=solver,
        )
        if md:
            raise ScenarioError(f"unknown mhe field(s): {', '.join(sorted(md))}")

    return Scenario(
        movement=data.get("movement", base.movement),
        duration=float(data.get("duration", base.duration)),
        ts=float(data.get("ts", base.ts)),
        seed=int(data.get("seed", base.seed)),
        mode=data.get("mode", base.mode),
        chain=chain,
        noise=noise,
        mhe=mhe,
        metadata=dict(data.get("metadata", DEFAULT_METADATA)),
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario file {path}: {exc}") from exc
    if data is None:
        data = {}
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# hingetrack scenario\n")
            yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False,
                           default_flow_style=None)
    except OSError as exc:
        raise ScenarioError(f"cannot write scenario file {path}: {exc}") from exc
