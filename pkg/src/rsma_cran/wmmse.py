"""WMMSE surrogates and the outer majorize-minimize loop.

Rates are lower-bounded through MSE weights and receive filters, the
fronthaul functional is upper-bounded through a covariance ``Sigma_i``; both
bounds are tight at the closed-form auxiliary updates below.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import subsolver
from .model import (
    ChannelState,
    CommonStructure,
    ConfigError,
    DesignVariables,
    RateAllocation,
    SystemConfig,
    WmmseAuxiliaries,
    validate_config,
)
from .rates import (
    LN2,
    RateReport,
    decode_layout,
    evaluate,
    nu_common,
    nu_private,
    optimal_rate_split,
    phi,
    rrh_signal_covariance,
    signal_and_nu,
    stream_rates,
)
from .scenario import normalize_noise, rng_for

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# error variances and closed-form auxiliaries
# ---------------------------------------------------------------------------

def _mse(u, a, nu) -> float:
    return abs(np.conj(u) * a - 1.0) ** 2 + abs(u) ** 2 * nu


def error_private(k, vars: DesignVariables, chan: ChannelState, struct: CommonStructure,
                  cfg: SystemConfig, u: complex) -> float:
    """``E|u^* y_k - s_{p,k}|^2`` for the private stream of UE k."""
    a = np.vdot(chan.h[k], vars.v_private[k])
    return _mse(u, a, nu_private(k, vars, chan, struct, cfg))


def error_common(l, k, vars: DesignVariables, chan: ChannelState, struct: CommonStructure,
                 cfg: SystemConfig, u: complex) -> float:
    a = np.vdot(chan.h[k], vars.v_common[l])
    return _mse(u, a, nu_common(l, k, vars, chan, struct, cfg))


def mmse_filter(a, nu):
    """Minimizer of ``|u^* a - 1|^2 + |u|^2 nu`` over complex u."""
    return a / (nu + np.abs(a) ** 2)


def update_filters(vars, chan, struct, cfg):
    """MMSE receive filters ``(u_private, u_common)``; common aligned with ``struct.pairs``."""
    layout = decode_layout(struct)
    _, nu, z = signal_and_nu(vars, chan, cfg, layout)
    a = z[layout.ue, layout.desired]
    u = mmse_filter(a, nu)
    return u[: struct.num_ues], u[struct.num_ues:]


def update_weights(vars, chan, struct, cfg, filters):
    """Weights ``1/e`` at the given filters."""
    layout = decode_layout(struct)
    _, nu, z = signal_and_nu(vars, chan, cfg, layout)
    a = z[layout.ue, layout.desired]
    u = np.concatenate([np.asarray(filters[0]), np.asarray(filters[1])])
    e = np.abs(np.conj(u) * a - 1.0) ** 2 + np.abs(u) ** 2 * nu
    if np.any(e <= 0):
        raise ValueError("update_weights: zero error variance (noiseless perfect inversion)")
    w = 1.0 / e
    return w[: struct.num_ues], w[struct.num_ues:]


def rrh_covariance(i: int, vars: DesignVariables, cfg: SystemConfig) -> np.ndarray:
    """``cov_{x_i}``: signal covariance at RRH i plus its quantization noise."""
    return rrh_signal_covariance(i, vars, cfg) + vars.omega[i]


def update_sigma(vars: DesignVariables, cfg: SystemConfig) -> tuple:
    return tuple(rrh_covariance(i, vars, cfg) for i in range(cfg.num_rrhs))


def update_auxiliaries(vars, chan, struct, cfg) -> WmmseAuxiliaries:
    u = update_filters(vars, chan, struct, cfg)
    w = update_weights(vars, chan, struct, cfg, u)
    return WmmseAuxiliaries(u[0], u[1], w[0], w[1], update_sigma(vars, cfg))


def _surrogate(w, e):
    return math.log2(w) + (1.0 - w * e) / LN2


def lower_bound_private(k, vars, u, w, chan, struct, cfg) -> float:
    return _surrogate(w, error_private(k, vars, chan, struct, cfg, u))


def lower_bound_common(l, k, vars, u, w, chan, struct, cfg) -> float:
    return _surrogate(w, error_common(l, k, vars, chan, struct, cfg, u))


def _logdet2(M) -> float:
    sign, ld = np.linalg.slogdet(np.atleast_2d(M))
    if sign.real <= 0:
        raise ValueError("matrix is not positive definite")
    return ld / LN2


def upper_bound_fronthaul(i: int, vars: DesignVariables, sigma_i, cfg: SystemConfig) -> float:
    """Upper bound on the fronthaul rate, convex in (v, Omega) for fixed ``sigma_i``."""
    sigma_i = np.atleast_2d(sigma_i)
    n = cfg.antennas[i]
    cov = rrh_covariance(i, vars, cfg)
    tr = np.real(np.trace(np.linalg.solve(sigma_i, cov)))
    return _logdet2(sigma_i) + (tr - n) / LN2 - _logdet2(vars.omega[i])


def surrogate_report(vars, aux: WmmseAuxiliaries, chan, struct, cfg):
    """Surrogate rates (private, per pair) and fronthaul bounds, stream by stream."""
    ft_p = np.array([
        lower_bound_private(k, vars, aux.u_private[k], aux.w_private[k], chan, struct, cfg)
        for k in range(struct.num_ues)
    ])
    ft_c = np.array([
        lower_bound_common(l, k, vars, aux.u_common[n], aux.w_common[n], chan, struct, cfg)
        for n, (l, k) in enumerate(struct.pairs)
    ])
    gt = np.array([
        upper_bound_fronthaul(i, vars, aux.sigma[i], cfg) if _rrh_active(cfg, i) else 0.0
        for i in range(cfg.num_rrhs)
    ])
    return ft_p, ft_c, gt


def _rrh_active(cfg: SystemConfig, i: int) -> bool:
    return cfg.fronthaul_capacity[i] > 0 and cfg.power_limit[i] > 0


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlgorithmOptions:
    epsilon: float = 1e-4
    max_iters: int = 200
    init_seed: int = 0
    normalize: bool = True
    subsolver_tol: float = 1e-6
    record_timing: bool = False
    monotone_slack: float = 1e-6


@dataclass
class IterationTrace:
    r_min: list = field(default_factory=list)
    status: list = field(default_factory=list)
    newton_steps: list = field(default_factory=list)
    wall_s: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.r_min)

    def to_dict(self) -> dict:
        return {
            "r_min": [float(r) for r in self.r_min],
            "status": list(self.status),
            "newton_steps": [int(n) for n in self.newton_steps],
            "wall_s": [float(w) for w in self.wall_s],
            "converged": bool(self.converged),
            "iterations": self.iterations,
        }


class AlgorithmError(RuntimeError):
    """Subsolver failure inside the outer loop; carries the last feasible iterate."""

    def __init__(self, message, last_iterate: DesignVariables, trace: IterationTrace):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


def initialize(chan: ChannelState, struct: CommonStructure, cfg: SystemConfig, init_seed: int = 0,
               margin: float = 1e-3) -> DesignVariables:
    """Strictly feasible random starting point.

    Gaussian precoders carry half the power of each RRH and the quantization
    noise a quarter; precoders at an RRH are halved until its fronthaul load
    is strictly below capacity. RRHs with zero capacity or power stay silent.
    """
    rng = rng_for(init_seed, "init")
    n_s = struct.num_ues + struct.num_sets
    n_r = cfg.total_antennas
    V = (rng.standard_normal((n_s, n_r)) + 1j * rng.standard_normal((n_s, n_r))) / np.sqrt(2.0)
    omega = []
    for i in range(cfg.num_rrhs):
        sl = cfg.rrh_slice(i)
        n = cfg.antennas[i]
        if not _rrh_active(cfg, i):
            V[:, sl] = 0.0
            omega.append(np.zeros((n, n), dtype=complex))
            continue
        P = cfg.power_limit[i]
        V[:, sl] *= np.sqrt(0.5 * P / np.sum(np.abs(V[:, sl]) ** 2))
        om = np.eye(n, dtype=complex) * (0.25 * P / n)
        omega.append(om)
        C = cfg.fronthaul_capacity[i]
        for _ in range(200):
            cov = V[:, sl].T @ V[:, sl].conj()
            if phi(cov, om) < C * (1.0 - margin):
                break
            V[:, sl] *= 0.5
    zero_rates = RateAllocation.zeros(struct)
    return DesignVariables(V[: struct.num_ues], V[struct.num_ues:], tuple(omega), zero_rates)


def _with_best_rates(vars, chan, struct, cfg, layout):
    f_p, f_c = stream_rates(vars, chan, struct, cfg, layout)
    rates = optimal_rate_split(f_p, f_c, struct)
    vars = replace(vars, rates=rates)
    return vars, float(rates.per_ue(struct).min())


def run_algorithm1(chan: ChannelState, struct: CommonStructure, cfg: SystemConfig,
                   opts: AlgorithmOptions = AlgorithmOptions()):
    """Alternate closed-form auxiliary updates with the convex subproblem.

    After each subproblem the rate split is re-optimized against the exact
    rates, so the recorded minimum rate is the true max-min value of the
    current precoders. Returns ``(vars, report, trace)``; ``vars`` are in the
    caller's (unnormalized) units.
    """
    validate_config(cfg)
    chan.check(cfg)
    if struct.num_ues != cfg.num_ues:
        raise ConfigError("structure: num_ues does not match the configuration")
    if opts.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    chan_n, cfg_n = normalize_noise(chan, cfg) if opts.normalize else (chan, cfg)
    layout = decode_layout(struct)

    clock = time.perf_counter
    t0 = clock()
    vars = initialize(chan_n, struct, cfg_n, opts.init_seed)
    vars, r_min = _with_best_rates(vars, chan_n, struct, cfg_n, layout)
    trace = IterationTrace()
    trace.r_min.append(r_min)
    trace.status.append("init")
    trace.newton_steps.append(0)
    trace.wall_s.append(clock() - t0 if opts.record_timing else 0.0)

    for _ in range(2, opts.max_iters + 1):
        t0 = clock()
        aux = update_auxiliaries(vars, chan_n, struct, cfg_n)
        data = subsolver.SubproblemData(chan_n, struct, cfg_n, aux, vars)
        try:
            sol = subsolver.solve(data, tol=opts.subsolver_tol)
        except subsolver.SubsolverError as exc:
            raise AlgorithmError(str(exc), vars, trace) from exc
        new_vars, new_r = _with_best_rates(sol.vars, chan_n, struct, cfg_n, layout)
        elapsed = clock() - t0 if opts.record_timing else 0.0
        if new_r < r_min - opts.monotone_slack:
            # keep the previous iterate; a worse point means the subproblem stalled
            log.warning("rejected iterate: r_min %.9g -> %.9g", r_min, new_r)
            trace.status.append("rejected")
            trace.r_min.append(r_min)
            trace.newton_steps.append(sol.iterations)
            trace.wall_s.append(elapsed)
            trace.converged = True
            break
        delta = new_r - r_min
        vars, r_min = new_vars, new_r
        trace.r_min.append(r_min)
        trace.status.append("ok" if sol.converged else "not_converged")
        trace.newton_steps.append(sol.iterations)
        trace.wall_s.append(elapsed)
        if abs(delta) <= opts.epsilon:
            trace.converged = True
            break

    # normalization scales the channel only; precoders and Omega keep their units
    return vars, evaluate(vars, chan, struct, cfg), trace
