"""Random network realizations: placement, path loss, shadowing and fading.

Every draw category owns an independent PCG64 stream derived from the seed
with a fixed spawn key, so adding categories never perturbs existing ones.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import ChannelState, ConfigError, SystemConfig, complex_from_json, complex_to_json

# spawn keys per draw category; never renumber
STREAMS = {
    "placement": 0,
    "shadowing": 1,
    "fading": 2,
    "common_sets": 3,
    "init": 4,
}


def rng_for(seed: int, category: str) -> np.random.Generator:
    """Generator for one draw category of one seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[category],))
    return np.random.Generator(np.random.PCG64(ss))


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


@dataclass(frozen=True)
class ScenarioSpec:
    radius_m: float = 100.0
    pathloss_a_db: float = 128.1
    pathloss_b: float = 37.6
    shadowing_std_db: float = 8.0
    bandwidth_hz: float = 1e7
    noise_psd_dbm_hz: float = -169.0
    min_distance_m: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ConfigError("bandwidth_hz must be positive")
        if not self.radius_m > self.min_distance_m >= 0:
            raise ConfigError("need radius_m > min_distance_m >= 0")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing_std_db must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "seed" in known:
            known["seed"] = int(known["seed"])
        return cls(**known)


@dataclass(frozen=True)
class Placement:
    rrh_xy: np.ndarray  # (N_R, 2) meters
    ue_xy: np.ndarray  # (N_U, 2) meters

    def distances_m(self) -> np.ndarray:
        """UE-to-RRH distances, shape (N_U, N_R)."""
        diff = self.ue_xy[:, None, :] - self.rrh_xy[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def to_dict(self) -> dict:
        return {"rrh_xy": np.asarray(self.rrh_xy).tolist(), "ue_xy": np.asarray(self.ue_xy).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(np.asarray(d["rrh_xy"], dtype=float).reshape(-1, 2),
                   np.asarray(d["ue_xy"], dtype=float).reshape(-1, 2))


def path_loss_db(d_km, spec: ScenarioSpec = ScenarioSpec()):
    """``a + b log10(d)`` with ``d`` in km."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss_db: distance must be positive")
    out = spec.pathloss_a_db + spec.pathloss_b * np.log10(d)
    return float(out) if out.ndim == 0 else out


def noise_variance_w(spec: ScenarioSpec = ScenarioSpec()) -> float:
    dbm = spec.noise_psd_dbm_hz + 10.0 * math.log10(spec.bandwidth_hz)
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def generate(spec: ScenarioSpec, cfg: SystemConfig, *, fading: bool = True):
    """Draw a placement and channel matrix for ``cfg`` under ``spec.seed``.

    Shadowing is drawn per (UE, RRH) link. ``fading=False`` replaces the
    Rayleigh vector by ones (test hook).
    """
    rng = rng_for(spec.seed, "placement")
    rrh_xy = _uniform_disk(rng, cfg.num_rrhs, spec.radius_m)
    ue_xy = _uniform_disk(rng, cfg.num_ues, spec.radius_m)
    placement = Placement(rrh_xy, ue_xy)

    dist = np.maximum(placement.distances_m(), spec.min_distance_m)
    shadow = rng_for(spec.seed, "shadowing").normal(0.0, 1.0, size=dist.shape) * spec.shadowing_std_db
    gain_db = -path_loss_db(dist / 1000.0, spec) + shadow
    amp = 10.0 ** (gain_db / 20.0)

    n_r = cfg.total_antennas
    if fading:
        g_rng = rng_for(spec.seed, "fading")
        g = (g_rng.standard_normal((cfg.num_ues, n_r)) + 1j * g_rng.standard_normal((cfg.num_ues, n_r))) / np.sqrt(2.0)
    else:
        g = np.ones((cfg.num_ues, n_r), dtype=complex)
    rrh_of_antenna = np.repeat(np.arange(cfg.num_rrhs), cfg.antennas)
    h = amp[:, rrh_of_antenna] * g
    return placement, ChannelState(h)


def normalize_noise(chan: ChannelState, cfg: SystemConfig):
    """Scale row k of the channel by 1/sigma_k so every noise variance is 1.

    SINRs, rates, fronthaul and power functionals are unchanged.
    """
    sigma = np.sqrt(np.asarray(cfg.noise_variance))
    h = chan.h / sigma[:, None]
    cfg_n = SystemConfig(
        cfg.num_rrhs, cfg.num_ues, cfg.antennas, cfg.fronthaul_capacity, cfg.power_limit,
        [1.0] * cfg.num_ues,
    )
    return ChannelState(h), cfg_n


def make_config(num_rrhs: int, num_ues: int, antennas, fronthaul: float, power_dbm: float,
                spec: ScenarioSpec = ScenarioSpec()) -> SystemConfig:
    """Homogeneous configuration: same capacity and power at every RRH."""
    if np.isscalar(antennas):
        antennas = [int(antennas)] * num_rrhs
    return SystemConfig(
        num_rrhs=num_rrhs,
        num_ues=num_ues,
        antennas=antennas,
        fronthaul_capacity=[float(fronthaul)] * num_rrhs,
        power_limit=[dbm_to_w(power_dbm)] * num_rrhs,
        noise_variance=[noise_variance_w(spec)] * num_ues,
    )


def scenario_to_dict(spec: ScenarioSpec, cfg: SystemConfig, placement: Placement, chan: ChannelState) -> dict:
    return {
        "spec": spec.to_dict(),
        "config": cfg.to_dict(),
        "placement": placement.to_dict(),
        "channel": {"h": complex_to_json(chan.h)},
    }


def scenario_from_dict(d: dict):
    spec = ScenarioSpec.from_dict(d["spec"])
    cfg = SystemConfig.from_dict(d["config"])
    placement = Placement.from_dict(d["placement"])
    h = complex_from_json(d["channel"]["h"]).reshape(cfg.num_ues, cfg.total_antennas)
    return spec, cfg, placement, ChannelState(h)
