"""Domain types for the C-RAN rate-splitting downlink.

All UE, RRH and set indices are 0-based. Complex arrays serialize to JSON as
nested ``[re, im]`` pairs so files round-trip bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a domain object violates a dimension or value invariant."""


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def complex_to_json(a) -> list:
    """Nested list with every complex entry replaced by ``[re, im]``."""
    arr = np.asarray(a, dtype=complex)
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def complex_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape == (0,):
        return np.zeros(0, dtype=complex)
    if arr.shape[-1] != 2:
        raise ConfigError("complex arrays must be encoded as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------------------
# SystemConfig
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """Constants of the max-min problem.

    ``fronthaul_capacity`` is in bits/symbol, ``power_limit`` and
    ``noise_variance`` in watts. Construction does not validate; call
    :func:`validate_config` (the optimizer does).
    """

    num_rrhs: int
    num_ues: int
    antennas: tuple
    fronthaul_capacity: tuple
    power_limit: tuple
    noise_variance: tuple

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(int(a) for a in self.antennas))
        for name in ("fronthaul_capacity", "power_limit", "noise_variance"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))

    @property
    def total_antennas(self) -> int:
        return int(sum(self.antennas))

    @property
    def antenna_offsets(self) -> tuple:
        """Per-RRH ``range`` of rows in the stacked antenna vector (the E_i selection)."""
        out, start = [], 0
        for n in self.antennas:
            out.append(range(start, start + n))
            start += n
        return tuple(out)

    def rrh_slice(self, i: int) -> slice:
        r = self.antenna_offsets[i]
        return slice(r.start, r.stop)

    def to_dict(self) -> dict:
        return {
            "num_rrhs": self.num_rrhs,
            "num_ues": self.num_ues,
            "antennas": list(self.antennas),
            "fronthaul_capacity": list(self.fronthaul_capacity),
            "power_limit": list(self.power_limit),
            "noise_variance": list(self.noise_variance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        return cls(
            num_rrhs=int(d["num_rrhs"]),
            num_ues=int(d["num_ues"]),
            antennas=d["antennas"],
            fronthaul_capacity=d["fronthaul_capacity"],
            power_limit=d["power_limit"],
            noise_variance=d["noise_variance"],
        )


def validate_config(cfg: SystemConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending field."""
    if cfg.num_rrhs < 1:
        raise ConfigError("num_rrhs must be a positive integer")
    if cfg.num_ues < 1:
        raise ConfigError("num_ues must be a positive integer")
    for name, expected in (
        ("antennas", cfg.num_rrhs),
        ("fronthaul_capacity", cfg.num_rrhs),
        ("power_limit", cfg.num_rrhs),
        ("noise_variance", cfg.num_ues),
    ):
        got = len(getattr(cfg, name))
        if got != expected:
            raise ConfigError(f"{name}: expected length {expected}, got {got}")
    if any(n < 1 for n in cfg.antennas):
        raise ConfigError("antennas: every RRH needs at least one antenna")
    if any(not np.isfinite(c) or c < 0 for c in cfg.fronthaul_capacity):
        raise ConfigError("fronthaul_capacity: entries must be finite and non-negative")
    if any(not np.isfinite(p) or p <= 0 for p in cfg.power_limit):
        raise ConfigError("power_limit: entries must be finite and positive")
    if any(not np.isfinite(s) or s <= 0 for s in cfg.noise_variance):
        raise ConfigError("noise_variance: entries must be finite and positive")
    offsets = cfg.antenna_offsets
    covered = [a for r in offsets for a in r]
    if covered != list(range(cfg.total_antennas)):
        raise ConfigError("antenna_offsets: ranges must be contiguous and cover all antennas")


# ---------------------------------------------------------------------------
# ChannelState
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelState:
    """Channel matrix ``h`` of shape (N_U, n_R); row k is the stacked h_k."""

    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h, dtype=complex))
        if self.h.ndim != 2:
            raise ConfigError("channel: h must be a 2-D matrix")
        if not np.all(np.isfinite(self.h)):
            raise ConfigError("channel: entries must be finite")

    def check(self, cfg: SystemConfig) -> None:
        if self.h.shape != (cfg.num_ues, cfg.total_antennas):
            raise ConfigError(
                f"channel: shape {self.h.shape} does not match "
                f"({cfg.num_ues}, {cfg.total_antennas})"
            )

    def to_dict(self) -> dict:
        return {"h": complex_to_json(self.h)}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelState":
        return cls(h=complex_from_json(d["h"]))


# ---------------------------------------------------------------------------
# CommonStructure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommonStructure:
    """Common-signal sets, per-UE membership and SIC decoding orders.

    ``pairs`` lists every (set, UE) with UE in the set, sorted by set then UE;
    per-pair arrays elsewhere (common rates, filters, weights) follow it.
    """

    num_ues: int
    sets: tuple
    membership: tuple
    orders: tuple

    @property
    def num_sets(self) -> int:
        return len(self.sets)

    @property
    def pairs(self) -> tuple:
        return tuple((l, k) for l, s in enumerate(self.sets) for k in sorted(s))

    def pair_index(self) -> dict:
        return {p: n for n, p in enumerate(self.pairs)}

    def to_dict(self) -> dict:
        return {
            "num_ues": self.num_ues,
            "sets": [sorted(s) for s in self.sets],
            "orders": [list(o) for o in self.orders],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommonStructure":
        struct = build_orders([set(s) for s in d["sets"]], int(d["num_ues"]))
        if "orders" in d and [list(o) for o in struct.orders] != [list(o) for o in d["orders"]]:
            raise ConfigError("orders: stored decoding orders disagree with the tie-break rule")
        return struct


def build_orders(sets: Sequence[Iterable[int]], num_ues: int) -> CommonStructure:
    """Membership lists and decoding orders for the given common sets.

    Each UE decodes its sets largest first; equal cardinalities go in
    ascending set index.
    """
    frozen = []
    for l, s in enumerate(sets):
        fs = frozenset(int(k) for k in s)
        if len(fs) < 2:
            raise ConfigError(f"sets[{l}]: common sets need at least two UEs")
        if any(k < 0 or k >= num_ues for k in fs):
            raise ConfigError(f"sets[{l}]: UE index out of range 0..{num_ues - 1}")
        if fs in frozen:
            raise ConfigError(f"sets[{l}]: duplicate of sets[{frozen.index(fs)}]")
        frozen.append(fs)
    membership = tuple(
        tuple(l for l, s in enumerate(frozen) if k in s) for k in range(num_ues)
    )
    orders = tuple(
        tuple(sorted(mem, key=lambda l: (-len(frozen[l]), l))) for mem in membership
    )
    return CommonStructure(num_ues=num_ues, sets=tuple(frozen), membership=membership, orders=orders)


# ---------------------------------------------------------------------------
# RateAllocation / DesignVariables / WmmseAuxiliaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateAllocation:
    """Private rates (N_U,) and common rates aligned with ``struct.pairs``."""

    private: np.ndarray
    common: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "private", _frozen(self.private, dtype=float).reshape(-1))
        object.__setattr__(self, "common", _frozen(self.common, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, struct: CommonStructure) -> "RateAllocation":
        return cls(np.zeros(struct.num_ues), np.zeros(len(struct.pairs)))

    def per_ue(self, struct: CommonStructure) -> np.ndarray:
        total = np.array(self.private, dtype=float)
        for (l, k), r in zip(struct.pairs, self.common):
            total[k] += r
        return total

    def check(self, struct: CommonStructure) -> None:
        if self.private.shape != (struct.num_ues,):
            raise ConfigError("rates.private: length must equal num_ues")
        if self.common.shape != (len(struct.pairs),):
            raise ConfigError("rates.common: one entry per (set, UE) membership pair")

    def to_dict(self, struct: CommonStructure) -> dict:
        return {
            "private": self.private.tolist(),
            "common": [
                {"set": l, "ue": k, "rate": float(r)} for (l, k), r in zip(struct.pairs, self.common)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, struct: CommonStructure) -> "RateAllocation":
        lookup = {(int(e["set"]), int(e["ue"])): float(e["rate"]) for e in d["common"]}
        if set(lookup) != set(struct.pairs):
            raise ConfigError("rates.common: entries must exist exactly for members of each set")
        return cls(d["private"], [lookup[p] for p in struct.pairs])


@dataclass(frozen=True)
class DesignVariables:
    """Precoders, quantization covariances and the rate split."""

    v_private: np.ndarray  # (N_U, n_R)
    v_common: np.ndarray  # (L, n_R)
    omega: tuple  # N_R Hermitian PSD blocks
    rates: RateAllocation

    def __post_init__(self):
        vp = np.array(self.v_private, dtype=complex)
        vc = np.array(self.v_common, dtype=complex)
        if vc.size == 0:
            vc = vc.reshape(0, vp.shape[1])
        object.__setattr__(self, "v_private", _frozen(vp))
        object.__setattr__(self, "v_common", _frozen(vc))
        object.__setattr__(
            self, "omega", tuple(_frozen(np.atleast_2d(o), dtype=complex) for o in self.omega)
        )

    @property
    def streams(self) -> np.ndarray:
        """All precoders stacked: privates first, then commons."""
        return np.vstack([self.v_private, self.v_common])

    def omega_bar(self) -> np.ndarray:
        n = sum(o.shape[0] for o in self.omega)
        out = np.zeros((n, n), dtype=complex)
        start = 0
        for o in self.omega:
            m = o.shape[0]
            out[start:start + m, start:start + m] = o
            start += m
        return out

    def check(self, cfg: SystemConfig, struct: CommonStructure) -> None:
        n_r = cfg.total_antennas
        if self.v_private.shape != (cfg.num_ues, n_r):
            raise ConfigError("v_private: shape must be (num_ues, total_antennas)")
        if self.v_common.shape != (struct.num_sets, n_r):
            raise ConfigError("v_common: shape must be (num_sets, total_antennas)")
        if len(self.omega) != cfg.num_rrhs:
            raise ConfigError("omega: one block per RRH")
        for i, (o, n) in enumerate(zip(self.omega, cfg.antennas)):
            if o.shape != (n, n):
                raise ConfigError(f"omega[{i}]: shape must be ({n}, {n})")
            if not np.allclose(o, o.conj().T, atol=1e-12):
                raise ConfigError(f"omega[{i}]: not Hermitian")
            if np.linalg.eigvalsh(o).min() < -1e-10:
                raise ConfigError(f"omega[{i}]: not positive semidefinite")
        self.rates.check(struct)

    def to_dict(self, struct: CommonStructure) -> dict:
        return {
            "v_private": complex_to_json(self.v_private),
            "v_common": complex_to_json(self.v_common),
            "omega": [complex_to_json(o) for o in self.omega],
            "rates": self.rates.to_dict(struct),
        }

    @classmethod
    def from_dict(cls, d: dict, struct: CommonStructure, cfg: SystemConfig) -> "DesignVariables":
        n_r = cfg.total_antennas
        vp = complex_from_json(d["v_private"]).reshape(cfg.num_ues, n_r)
        vc = complex_from_json(d["v_common"]).reshape(struct.num_sets, n_r)
        omega = [complex_from_json(o).reshape(n, n) for o, n in zip(d["omega"], cfg.antennas)]
        return cls(vp, vc, tuple(omega), RateAllocation.from_dict(d["rates"], struct))


@dataclass(frozen=True)
class WmmseAuxiliaries:
    """Receive filters, MSE weights and fronthaul surrogate matrices.

    Common entries are aligned with ``struct.pairs``.
    """

    u_private: np.ndarray
    u_common: np.ndarray
    w_private: np.ndarray
    w_common: np.ndarray
    sigma: tuple

    def __post_init__(self):
        object.__setattr__(self, "u_private", _frozen(self.u_private, dtype=complex).reshape(-1))
        object.__setattr__(self, "u_common", _frozen(self.u_common, dtype=complex).reshape(-1))
        object.__setattr__(self, "w_private", _frozen(self.w_private, dtype=float).reshape(-1))
        object.__setattr__(self, "w_common", _frozen(self.w_common, dtype=float).reshape(-1))
        object.__setattr__(
            self, "sigma", tuple(_frozen(np.atleast_2d(s), dtype=complex) for s in self.sigma)
        )

    def check(self) -> None:
        if np.any(self.w_private <= 0) or np.any(self.w_common <= 0):
            raise ConfigError("weights must be strictly positive")
        for i, s in enumerate(self.sigma):
            if np.linalg.eigvalsh(s).min() <= 0:
                raise ConfigError(f"sigma[{i}]: not positive definite")

    def to_dict(self) -> dict:
        return {
            "u_private": complex_to_json(self.u_private),
            "u_common": complex_to_json(self.u_common),
            "w_private": self.w_private.tolist(),
            "w_common": self.w_common.tolist(),
            "sigma": [complex_to_json(s) for s in self.sigma],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WmmseAuxiliaries":
        sig = []
        for s in d["sigma"]:
            a = complex_from_json(s)
            sig.append(a.reshape(len(s), -1))
        return cls(
            complex_from_json(d["u_private"]),
            complex_from_json(d["u_common"]),
            d["w_private"],
            d["w_common"],
            tuple(sig),
        )


def stream_index(struct: CommonStructure, *, private: int | None = None, common: int | None = None) -> int:
    """Row of a precoder in ``DesignVariables.streams``."""
    if private is not None:
        return private
    return struct.num_ues + common


def zero_design(cfg: SystemConfig, struct: CommonStructure) -> DesignVariables:
    n_r = cfg.total_antennas
    return DesignVariables(
        np.zeros((cfg.num_ues, n_r), dtype=complex),
        np.zeros((struct.num_sets, n_r), dtype=complex),
        tuple(np.zeros((n, n), dtype=complex) for n in cfg.antennas),
        RateAllocation.zeros(struct),
    )
