"""Exact evaluation of the rate, fronthaul and power functionals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import (
    ChannelState,
    CommonStructure,
    DesignVariables,
    RateAllocation,
    SystemConfig,
)

LN2 = math.log(2.0)
NU_FLOOR = 1e-12  # relative to the noise variance
FEAS_TOL = 1e-6


class SingularMatrixError(ValueError):
    pass


def phi(A, B, tol: float = 1e-12) -> float:
    """``log2 det(A + B) - log2 det(B)`` for PSD ``A`` and PD ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    if B.shape == (1, 1):
        b = B[0, 0].real
        if b <= tol:
            raise SingularMatrixError(f"phi: B is not positive definite (B={b:g})")
        return math.log1p(A[0, 0].real / b) / LN2
    lam_b = np.linalg.eigvalsh(B)
    if lam_b[0] <= tol * max(1.0, lam_b[-1]):
        raise SingularMatrixError(f"phi: B is not positive definite (min eig {lam_b[0]:g})")
    L = np.linalg.cholesky(B)
    Linv = np.linalg.inv(L)
    M = Linv @ A @ Linv.conj().T
    lam = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return float(np.sum(np.log1p(np.maximum(lam, 0.0))) / LN2)


# ---------------------------------------------------------------------------
# decoding layout: which streams interfere with which decoded stream
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecodeLayout:
    """Row r describes one decoded stream: private k (rows 0..N_U-1), then
    the common pairs of ``struct.pairs``.

    ``interf[r, j]`` is True when stream j contributes to the residual
    interference of row r (the desired stream itself excluded).
    """

    ue: np.ndarray
    desired: np.ndarray
    interf: np.ndarray

    @property
    def num_rows(self) -> int:
        return len(self.ue)


def decode_layout(struct: CommonStructure) -> DecodeLayout:
    n_u, n_l = struct.num_ues, struct.num_sets
    n_s = n_u + n_l
    rows_ue, rows_d, rows_mask = [], [], []
    for k in range(n_u):
        mask = np.zeros(n_s, dtype=bool)
        mask[:n_u] = True
        mask[k] = False
        for l in range(n_l):
            if l not in struct.membership[k]:
                mask[n_u + l] = True
        rows_ue.append(k)
        rows_d.append(k)
        rows_mask.append(mask)
    for l, k in struct.pairs:
        mask = np.zeros(n_s, dtype=bool)
        mask[:n_u] = True
        order = struct.orders[k]
        for m in order[order.index(l) + 1:]:
            mask[n_u + m] = True
        for m in range(n_l):
            if m not in struct.membership[k]:
                mask[n_u + m] = True
        rows_ue.append(k)
        rows_d.append(n_u + l)
        rows_mask.append(mask)
    interf = np.array(rows_mask, dtype=bool).reshape(len(rows_ue), n_s)
    return DecodeLayout(np.array(rows_ue, dtype=int), np.array(rows_d, dtype=int), interf)


def received_gains(chan: ChannelState, V: np.ndarray) -> np.ndarray:
    """``z[k, j] = h_k^H v_j``."""
    return chan.h.conj() @ V.T


def quantization_power(chan: ChannelState, omega_bar: np.ndarray) -> np.ndarray:
    """``h_k^H Omega_bar h_k`` for every UE."""
    return np.real(np.einsum("ka,ab,kb->k", chan.h.conj(), omega_bar, chan.h))


def signal_and_nu(vars: DesignVariables, chan: ChannelState, cfg: SystemConfig, layout: DecodeLayout):
    """Desired-signal power and interference-plus-noise for every decode row."""
    z = received_gains(chan, vars.streams)
    G = np.abs(z) ** 2
    q = quantization_power(chan, vars.omega_bar())
    noise = np.asarray(cfg.noise_variance)
    sig = G[layout.ue, layout.desired]
    nu = (G[layout.ue] * layout.interf).sum(axis=1) + q[layout.ue] + noise[layout.ue]
    return sig, np.maximum(nu, NU_FLOOR * noise[layout.ue]), z


# ---------------------------------------------------------------------------
# per-stream functionals
# ---------------------------------------------------------------------------

def _hv(chan, k, v):
    return np.vdot(chan.h[k], v)


def _q(chan, k, vars):
    h = chan.h[k]
    return float(np.real(h.conj() @ vars.omega_bar() @ h))


def nu_private(k: int, vars: DesignVariables, chan: ChannelState, struct: CommonStructure,
               cfg: SystemConfig) -> float:
    total = 0.0
    for l in range(struct.num_sets):
        if l not in struct.membership[k]:
            total += abs(_hv(chan, k, vars.v_common[l])) ** 2
    for m in range(struct.num_ues):
        if m != k:
            total += abs(_hv(chan, k, vars.v_private[m])) ** 2
    total += _q(chan, k, vars) + cfg.noise_variance[k]
    return max(total, NU_FLOOR * cfg.noise_variance[k])


def nu_common(l: int, k: int, vars: DesignVariables, chan: ChannelState, struct: CommonStructure,
              cfg: SystemConfig) -> float:
    """Interference seen when UE k decodes common signal l.

    Signals later in UE k's decoding order and common signals UE k never
    decodes interfere; earlier ones are already cancelled.
    """
    if l not in struct.membership[k]:
        raise ValueError(f"nu_common: UE {k} is not a member of set {l}")
    order = struct.orders[k]
    total = 0.0
    for m in order[order.index(l) + 1:]:
        total += abs(_hv(chan, k, vars.v_common[m])) ** 2
    for m in range(struct.num_sets):
        if m not in struct.membership[k]:
            total += abs(_hv(chan, k, vars.v_common[m])) ** 2
    for m in range(struct.num_ues):
        total += abs(_hv(chan, k, vars.v_private[m])) ** 2
    total += _q(chan, k, vars) + cfg.noise_variance[k]
    return max(total, NU_FLOOR * cfg.noise_variance[k])


def private_rate(k, vars, chan, struct, cfg) -> float:
    sig = abs(_hv(chan, k, vars.v_private[k])) ** 2
    return phi(sig, nu_private(k, vars, chan, struct, cfg))


def common_rate(l, k, vars, chan, struct, cfg) -> float:
    sig = abs(_hv(chan, k, vars.v_common[l])) ** 2
    return phi(sig, nu_common(l, k, vars, chan, struct, cfg))


def rrh_signal_covariance(i: int, vars: DesignVariables, cfg: SystemConfig) -> np.ndarray:
    """``E_i^H (sum v v^H) E_i`` without the quantization noise."""
    Vi = vars.streams[:, cfg.rrh_slice(i)]
    return Vi.T @ Vi.conj()


def fronthaul_usage(i: int, vars: DesignVariables, cfg: SystemConfig) -> float:
    """Bits/symbol needed on fronthaul link i.

    An RRH that carries no signal uses no fronthaul whatever its Omega_i.
    """
    A = rrh_signal_covariance(i, vars, cfg)
    if not np.any(A):
        return 0.0
    return phi(A, vars.omega[i])


def transmit_power(i: int, vars: DesignVariables, cfg: SystemConfig) -> float:
    A = rrh_signal_covariance(i, vars, cfg)
    return float(np.real(np.trace(A) + np.trace(vars.omega[i])))


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateReport:
    f_private: np.ndarray
    f_common: np.ndarray  # aligned with struct.pairs
    g_fronthaul: np.ndarray
    p_power: np.ndarray
    per_ue_rate: np.ndarray
    r_min: float
    violations: tuple = field(default_factory=tuple)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self, struct: CommonStructure) -> dict:
        return {
            "f_private": self.f_private.tolist(),
            "f_common": [
                {"set": l, "ue": k, "rate": float(r)} for (l, k), r in zip(struct.pairs, self.f_common)
            ],
            "g_fronthaul": self.g_fronthaul.tolist(),
            "p_power": self.p_power.tolist(),
            "per_ue_rate": self.per_ue_rate.tolist(),
            "r_min": float(self.r_min),
            "violations": list(self.violations),
        }


def stream_rates(vars, chan, struct, cfg, layout: DecodeLayout | None = None):
    """True achievable rates (private, common-per-pair) in bits/symbol."""
    layout = layout or decode_layout(struct)
    sig, nu, _ = signal_and_nu(vars, chan, cfg, layout)
    f = np.log1p(sig / nu) / LN2
    return f[: struct.num_ues], f[struct.num_ues:]


def _exceeds(lhs, rhs, tol):
    return lhs - rhs > tol * max(1.0, abs(rhs))


def evaluate(vars: DesignVariables, chan: ChannelState, struct: CommonStructure, cfg: SystemConfig,
             tol: float = FEAS_TOL) -> RateReport:
    """Every functional of the problem plus a list of violated constraints."""
    f_p, f_c = stream_rates(vars, chan, struct, cfg)
    g = np.array([fronthaul_usage(i, vars, cfg) for i in range(cfg.num_rrhs)])
    p = np.array([transmit_power(i, vars, cfg) for i in range(cfg.num_rrhs)])
    R = vars.rates
    per_ue = R.per_ue(struct)

    violations = []
    if np.any(R.private < -tol) or np.any(R.common < -tol):
        violations.append("rates: negative rate")
    for k in range(cfg.num_ues):
        if _exceeds(R.private[k], f_p[k], tol):
            violations.append(f"private rate UE {k}: {R.private[k]:.9g} > {f_p[k]:.9g}")
    pidx = struct.pair_index()
    for l, s in enumerate(struct.sets):
        total = sum(R.common[pidx[(l, k)]] for k in s)
        for k in sorted(s):
            fc = f_c[pidx[(l, k)]]
            if _exceeds(total, fc, tol):
                violations.append(f"common rate set {l} at UE {k}: {total:.9g} > {fc:.9g}")
    for i in range(cfg.num_rrhs):
        if _exceeds(g[i], cfg.fronthaul_capacity[i], tol):
            violations.append(f"fronthaul RRH {i}: {g[i]:.9g} > {cfg.fronthaul_capacity[i]:.9g}")
        if _exceeds(p[i], cfg.power_limit[i], tol):
            violations.append(f"power RRH {i}: {p[i]:.9g} > {cfg.power_limit[i]:.9g}")
    return RateReport(f_p, f_c, g, p, per_ue, float(per_ue.min()), tuple(violations))


def optimal_rate_split(f_private, f_common, struct: CommonStructure) -> RateAllocation:
    """Max-min rate split for fixed achievable rates (a small LP).

    Common budgets are the minimum over each set's members. The returned
    allocation never exceeds the given rates.
    """
    n_u = struct.num_ues
    pairs = struct.pairs
    n_c = len(pairs)
    f_private = np.maximum(np.asarray(f_private, dtype=float), 0.0)
    f_common = np.maximum(np.asarray(f_common, dtype=float), 0.0)
    pidx = struct.pair_index()
    budgets = np.array([min(f_common[pidx[(l, k)]] for k in s) for l, s in enumerate(struct.sets)])
    if n_c == 0:
        return RateAllocation(f_private, np.zeros(0))

    # x = [R_c (n_c), t]; private rates sit at their upper bounds
    n_x = n_c + 1
    c = np.zeros(n_x)
    c[-1] = -1.0
    A, b = [], []
    for k in range(n_u):
        row = np.zeros(n_x)
        row[-1] = 1.0
        for n, (l, kk) in enumerate(pairs):
            if kk == k:
                row[n] = -1.0
        A.append(row)
        b.append(f_private[k])
    for l in range(struct.num_sets):
        row = np.zeros(n_x)
        for n, (ll, _) in enumerate(pairs):
            if ll == l:
                row[n] = 1.0
        A.append(row)
        b.append(budgets[l])
    bounds = [(0.0, None)] * n_c + [(None, None)]
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"rate split LP failed: {res.message}")
    common = np.maximum(res.x[:n_c], 0.0)
    # trim any solver slack so the sums stay within the budgets
    for l in range(struct.num_sets):
        idx = [n for n, (ll, _) in enumerate(pairs) if ll == l]
        total = common[idx].sum()
        if total > budgets[l]:
            common[idx] *= budgets[l] / total if total > 0 else 0.0
    return RateAllocation(f_private, common)
