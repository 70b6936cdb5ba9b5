"""Convex WMMSE subproblem for fixed filters, weights and Sigma.

Epigraph form, variables ``x = [v, theta, R_p, R_c, t]``::

    maximize t
    s.t.  t <= R_p,k + sum_l R_c,k,l                      (per UE)
          R_p,k <= ft_p,k(v, Omega)                        (per UE)
          sum_{k' in S_l} R_c,k',l <= ft_c,l,k(v, Omega)   (per set member)
          gt_i(v, Omega) <= C_i,  p_i(v, Omega) <= P_i     (per RRH)
          R_c >= 0

``v`` is stored as real/imaginary parts per stream, ``Omega_i = L_i L_i^H``
with ``L_i`` lower triangular with positive real diagonal (``theta`` holds
its real parameters). All constraints are concave in ``x``. The solver is
a primal log-barrier method with damped Newton centering.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .model import (
    ChannelState,
    CommonStructure,
    DesignVariables,
    RateAllocation,
    SystemConfig,
    WmmseAuxiliaries,
    zero_design,
)
from .rates import LN2, decode_layout, transmit_power

log = logging.getLogger(__name__)

DEAD_RATE = 1e-9


class SubsolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubproblemData:
    chan: ChannelState
    struct: CommonStructure
    cfg: SystemConfig
    aux: WmmseAuxiliaries
    warm: DesignVariables


@dataclass(frozen=True)
class SubproblemSolution:
    vars: DesignVariables
    t: float
    warm_t: float
    converged: bool
    iterations: int
    mu: float
    max_violation: float
    stationarity: float
    status: str
    duals: dict


# ---------------------------------------------------------------------------
# quantization-noise parameterizations
# ---------------------------------------------------------------------------

def _cholesky_basis(n: int):
    """Real basis of lower-triangular complex matrices with real diagonal."""
    basis, diag = [], []
    for a in range(n):
        B = np.zeros((n, n), dtype=complex)
        B[a, a] = 1.0
        diag.append(len(basis))
        basis.append(B)
    for a in range(n):
        for b in range(a):
            B = np.zeros((n, n), dtype=complex)
            B[a, b] = 1.0
            basis.append(B)
            B = np.zeros((n, n), dtype=complex)
            B[a, b] = 1j
            basis.append(B)
    return np.array(basis), diag


def _quad_form_matrix(basis, M):
    """``Q[a, b] = Re tr(B_a^H M B_b)`` so that ``tr(L^H M L) = theta^T Q theta``."""
    MB = np.einsum("ij,bjk->bik", M, basis)
    return np.real(np.einsum("aji,bjk->abik", basis.conj(), MB).trace(axis1=2, axis2=3))


class GeneralOmega:
    """Cholesky-factor parameterization for RRHs with any antenna count."""

    def __init__(self, h_blocks, sigma_inv_blocks, sizes):
        self.sizes = list(sizes)
        self.bases, self.slices, diag_idx, owner = [], [], [], []
        start = 0
        for i, n in enumerate(self.sizes):
            B, d = _cholesky_basis(n)
            self.bases.append(B)
            self.slices.append(slice(start, start + len(B)))
            diag_idx.extend(start + j for j in d)
            owner.extend([i] * n)
            start += len(B)
        self.ntheta = start
        self.diag_idx = np.array(diag_idx, dtype=int)
        self.diag_owner = np.array(owner, dtype=int)
        n_u = h_blocks[0].shape[0] if h_blocks else 0
        self.Qh = np.zeros((n_u, start, start))
        self.Qs = np.zeros((len(self.sizes), start, start))
        for i, (B, sl) in enumerate(zip(self.bases, self.slices)):
            hb = h_blocks[i]
            for k in range(n_u):
                self.Qh[k, sl, sl] = _quad_form_matrix(B, np.outer(hb[k], hb[k].conj()))
            self.Qs[i, sl, sl] = _quad_form_matrix(B, sigma_inv_blocks[i])
        self.owner_mask = np.zeros((len(self.sizes), start))
        for i, sl in enumerate(self.slices):
            self.owner_mask[i, sl] = 1.0

    def quant_power(self, th):
        return np.einsum("kab,a,b->k", self.Qh, th, th)

    def quant_power_grad(self, th):
        return 2.0 * self.Qh @ th

    def quant_power_hess(self, gamma):
        return 2.0 * np.tensordot(gamma, self.Qh, axes=1)

    def fh_quad(self, th):
        return np.einsum("iab,a,b->i", self.Qs, th, th)

    def fh_quad_grad(self, th):
        return 2.0 * self.Qs @ th

    def fh_quad_hess(self, weights):
        return 2.0 * np.tensordot(weights, self.Qs, axes=1)

    def log_diag(self, th):
        out = np.zeros(len(self.sizes))
        np.add.at(out, self.diag_owner, np.log(th[self.diag_idx]))
        return out

    def log_diag_grad(self, th):
        g = np.zeros((len(self.sizes), self.ntheta))
        g[self.diag_owner, self.diag_idx] = 1.0 / th[self.diag_idx]
        return g

    def log_diag_hess(self, weights, th):
        """``sum_i weights_i * (-grad^2 log_diag_i)``."""
        H = np.zeros((self.ntheta, self.ntheta))
        H[self.diag_idx, self.diag_idx] = weights[self.diag_owner] / th[self.diag_idx] ** 2
        return H

    def norm2(self, th):
        return self.owner_mask @ (th * th)

    def norm2_grad(self, th):
        return 2.0 * self.owner_mask * th[None, :]

    def norm2_hess(self, weights):
        return np.diag(2.0 * (weights @ self.owner_mask))

    def in_domain(self, th):
        return bool(np.all(th[self.diag_idx] > 0))

    def to_omega(self, th):
        out = []
        for B, sl in zip(self.bases, self.slices):
            L = np.tensordot(th[sl], B, axes=1)
            out.append(L @ L.conj().T)
        return out

    def from_omega(self, omegas):
        th = np.zeros(self.ntheta)
        for B, sl, om in zip(self.bases, self.slices, omegas):
            L = np.linalg.cholesky(om)
            th[sl] = np.real(np.einsum("bij,ij->b", B.conj(), L))
        return th


class ScalarOmega:
    """Single-antenna RRHs: ``omega_i = theta_i**2``."""

    def __init__(self, h_blocks, sigma_inv_blocks, sizes):
        assert all(n == 1 for n in sizes)
        self.sizes = list(sizes)
        self.ntheta = len(self.sizes)
        self.habs2 = np.column_stack([np.abs(hb[:, 0]) ** 2 for hb in h_blocks]) if h_blocks else None
        self.sinv = np.array([np.real(s[0, 0]) for s in sigma_inv_blocks])
        self.diag_idx = np.arange(self.ntheta)

    def quant_power(self, th):
        return self.habs2 @ (th * th)

    def quant_power_grad(self, th):
        return 2.0 * self.habs2 * th[None, :]

    def quant_power_hess(self, gamma):
        return np.diag(2.0 * (gamma @ self.habs2))

    def fh_quad(self, th):
        return self.sinv * th * th

    def fh_quad_grad(self, th):
        return np.diag(2.0 * self.sinv * th)

    def fh_quad_hess(self, weights):
        return np.diag(2.0 * weights * self.sinv)

    def log_diag(self, th):
        return np.log(th)

    def log_diag_grad(self, th):
        return np.diag(1.0 / th)

    def log_diag_hess(self, weights, th):
        return np.diag(weights / th ** 2)

    def norm2(self, th):
        return th * th

    def norm2_grad(self, th):
        return np.diag(2.0 * th)

    def norm2_hess(self, weights):
        return np.diag(2.0 * weights)

    def in_domain(self, th):
        return bool(np.all(th > 0))

    def to_omega(self, th):
        return [np.array([[t * t]], dtype=complex) for t in th]

    def from_omega(self, omegas):
        return np.array([math.sqrt(np.real(om[0, 0])) for om in omegas])


# ---------------------------------------------------------------------------
# assembled problem
# ---------------------------------------------------------------------------

class Problem:
    """Standard form of one subproblem; see the module docstring for layout."""

    def __init__(self, data: SubproblemData, alive_sets=None, scalar_omega=None):
        cfg, struct, aux, chan = data.cfg, data.struct, data.aux, data.chan
        self.data = data
        n_u, n_l = struct.num_ues, struct.num_sets
        self.n_u, self.n_s = n_u, n_u + n_l
        self.active = [i for i in range(cfg.num_rrhs)
                       if cfg.fronthaul_capacity[i] > 0 and cfg.power_limit[i] > 0]
        ant = [a for i in self.active for a in cfg.antenna_offsets[i]]
        self.ant = np.array(ant, dtype=int)
        self.n_a = len(ant)
        self.h_a = chan.h[:, self.ant]
        n_act = len(self.active)
        self.ant_owner = np.zeros((n_act, self.n_a))
        pos = 0
        for r, i in enumerate(self.active):
            n = cfg.antennas[i]
            self.ant_owner[r, pos:pos + n] = 1.0
            pos += n
        sizes = [cfg.antennas[i] for i in self.active]
        sig_inv = [np.linalg.inv(aux.sigma[i]) for i in self.active]
        self.S = scipy.linalg.block_diag(*sig_inv) if sig_inv else np.zeros((0, 0))
        h_blocks = [chan.h[:, cfg.rrh_slice(i)] for i in self.active]
        if scalar_omega is None:
            scalar_omega = all(n == 1 for n in sizes)
        omega_cls = ScalarOmega if scalar_omega and all(n == 1 for n in sizes) else GeneralOmega
        self.om = omega_cls(h_blocks, sig_inv, sizes)

        # decode rows: private streams, then pairs of live sets
        layout = decode_layout(struct)
        if alive_sets is None:
            alive_sets = np.ones(n_l, dtype=bool)
        self.alive_sets = np.asarray(alive_sets, dtype=bool)
        pairs = struct.pairs
        self.alive_pairs = [n for n, (l, _) in enumerate(pairs) if self.alive_sets[l]]
        rows = list(range(n_u)) + [n_u + n for n in self.alive_pairs]
        self.rows = np.array(rows, dtype=int)
        self.ue = layout.ue[self.rows]
        self.des = layout.desired[self.rows]
        T = layout.interf[self.rows].copy()
        T[np.arange(len(rows)), self.des] = True
        self.T = T.astype(float)
        self.onehot = np.zeros_like(self.T)
        self.onehot[np.arange(len(rows)), self.des] = 1.0
        u_all = np.concatenate([aux.u_private, aux.u_common])
        w_all = np.concatenate([aux.w_private, aux.w_common])
        self.u = u_all[self.rows]
        self.w = w_all[self.rows]
        self.alpha = np.abs(self.u) ** 2
        self.noise = np.asarray(cfg.noise_variance)[self.ue]
        self.log2w = np.log2(self.w)

        # rate variables: R_p (n_u) then alive R_c
        self.n_rp = n_u
        self.n_rc = len(self.alive_pairs)
        n_R = n_u + self.n_rc
        rc_col = {n: n_u + c for c, n in enumerate(self.alive_pairs)}
        self.A_rate = np.zeros((len(rows), n_R))
        self.A_rate[np.arange(n_u), np.arange(n_u)] = 1.0
        for r, n in enumerate(self.alive_pairs, start=n_u):
            l = pairs[n][0]
            for kk in struct.sets[l]:
                self.A_rate[r, rc_col[(pairs.index((l, kk)))]] = 1.0
        self.M_t = np.zeros((n_u, n_R))
        self.M_t[np.arange(n_u), np.arange(n_u)] = 1.0
        for n in self.alive_pairs:
            self.M_t[pairs[n][1], rc_col[n]] = 1.0

        # RRH constants
        self.fh_const = np.array([
            cfg.fronthaul_capacity[i] - np.linalg.slogdet(aux.sigma[i])[1] / LN2 + cfg.antennas[i] / LN2
            for i in self.active
        ])
        self.P = np.array([cfg.power_limit[i] for i in self.active])

        # variable layout
        self.n_v = self.n_s * 2 * self.n_a
        self.i_th = self.n_v
        self.i_R = self.i_th + self.om.ntheta
        self.i_t = self.i_R + n_R
        self.n = self.i_t + 1
        self.n_rows = len(rows)
        self.m = self.n_rows + 2 * n_act + n_u + self.n_rc
        self.e_t = np.zeros(self.n)
        self.e_t[self.i_t] = 1.0
        b = np.cumsum([0, self.n_rows, n_act, n_act, self.n_u, self.n_rc])
        names = ("rate", "fronthaul", "power", "epigraph", "nonneg")
        self._fam = {nm: slice(b[j], b[j + 1]) for j, nm in enumerate(names)}
        # scatter indices of the per-stream precoder Hessian blocks
        na2 = 2 * self.n_a
        base = np.arange(self.n_s)[:, None, None] * na2
        self._blk_r = (base + np.arange(na2)[None, :, None]) + 0 * np.arange(na2)[None, None, :]
        self._blk_c = (base + np.arange(na2)[None, None, :]) + 0 * np.arange(na2)[None, :, None]
        self._memo_x = None

    # -- packing ------------------------------------------------------------

    def unpack(self, x):
        Vr = x[: self.n_v].reshape(self.n_s, 2, self.n_a)
        V = Vr[:, 0, :] + 1j * Vr[:, 1, :]
        th = x[self.i_th:self.i_R]
        R = x[self.i_R:self.i_t]
        return V, th, R, x[self.i_t]

    def pack(self, V, th, R, t):
        Vr = np.stack([V.real, V.imag], axis=1).reshape(-1)
        return np.concatenate([Vr, th, R, [t]])

    def split_rates(self, R):
        """Full-length (private, per-pair common) rates; dead pairs get zero."""
        n_pairs = len(self.data.struct.pairs)
        common = np.zeros(n_pairs)
        common[self.alive_pairs] = R[self.n_rp:]
        return R[: self.n_rp], common

    def to_design(self, x, clip_private=True) -> DesignVariables:
        cfg, struct = self.data.cfg, self.data.struct
        V, th, R, _ = self.unpack(x)
        full = np.zeros((self.n_s, cfg.total_antennas), dtype=complex)
        full[:, self.ant] = V
        omegas = [np.zeros((n, n), dtype=complex) for n in cfg.antennas]
        for i, om in zip(self.active, self.om.to_omega(th)):
            omegas[i] = om
        rp, rc = self.split_rates(R)
        if clip_private:
            rp = np.maximum(rp, 0.0)
        rc = np.maximum(rc, 0.0)
        return DesignVariables(full[: self.n_u], full[self.n_u:], tuple(omegas), RateAllocation(rp, rc))

    # -- function values ----------------------------------------------------

    def _core(self, V, th):
        z = self.h_a.conj() @ V.T
        G = z.real ** 2 + z.imag ** 2
        O = self.om.quant_power(th)
        zr = z[self.ue, self.des]
        e = (self.alpha * ((self.T * G[self.ue]).sum(axis=1) + O[self.ue] + self.noise)
             - 2.0 * np.real(np.conj(self.u) * zr) + 1.0)
        ft = self.log2w + (1.0 - self.w * e) / LN2
        SV = V @ self.S.T
        vq = self.ant_owner @ np.real(np.conj(V) * SV).sum(axis=0)
        pv = self.ant_owner @ (np.abs(V) ** 2).sum(axis=0)
        return z, ft, SV, vq, pv

    def surrogate_rates(self, x):
        V, th, _, _ = self.unpack(x)
        return self._core(V, th)[1]

    def values(self, x):
        """Constraint slacks, or None outside the domain of the log terms."""
        V, th, R, t = self.unpack(x)
        if not self.om.in_domain(th):
            return None
        _, ft, _, vq, pv = self._core_at(x)
        c_rate = ft - self.A_rate @ R
        c_fh = self.fh_const - (vq + self.om.fh_quad(th)) / LN2 + (2.0 / LN2) * self.om.log_diag(th)
        c_pw = self.P - pv - self.om.norm2(th)
        c_t = self.M_t @ R - t
        c_rc = R[self.n_rp:]
        return np.concatenate([c_rate, c_fh, c_pw, c_t, c_rc])

    def families(self):
        """Named slices of the constraint vector."""
        return self._fam

    def _core_at(self, x):
        if self._memo_x is None or not np.array_equal(self._memo_x, x):
            V, th, _, _ = self.unpack(x)
            self._memo_x = x.copy()
            self._memo = self._core(V, th)
        return self._memo

    # -- derivatives --------------------------------------------------------

    def _complex_rows(self, grad):
        """(rows, n_s, n_a) complex gradients -> (rows, n_v) real Jacobian block."""
        return np.stack([grad.real, grad.imag], axis=2).reshape(grad.shape[0], -1)

    def jacobian(self, x):
        V, th, R, t = self.unpack(x)
        z, _, SV, _, _ = self._core_at(x)
        m, n = self.m, self.n
        J = np.zeros((m, n))
        fam = self.families()
        nr = self.n_rows
        coef = -(self.w / LN2)[:, None] * (
            2.0 * self.alpha[:, None] * self.T * z[self.ue] - 2.0 * self.onehot * self.u[:, None]
        )
        grad = coef[:, :, None] * self.h_a[self.ue][:, None, :]
        J[:nr, : self.n_v] = self._complex_rows(grad)
        J[:nr, self.i_th:self.i_R] = -(self.w * self.alpha / LN2)[:, None] * self.om.quant_power_grad(th)[self.ue]
        J[:nr, self.i_R:self.i_t] = -self.A_rate

        sf, sp = fam["fronthaul"], fam["power"]
        if len(self.active):
            gfh = -(2.0 / LN2) * SV[None, :, :] * self.ant_owner[:, None, :]
            J[sf, : self.n_v] = self._complex_rows(gfh)
            J[sf, self.i_th:self.i_R] = (-(1.0 / LN2) * self.om.fh_quad_grad(th)
                                          + (2.0 / LN2) * self.om.log_diag_grad(th))
            gpw = -2.0 * V[None, :, :] * self.ant_owner[:, None, :]
            J[sp, : self.n_v] = self._complex_rows(gpw)
            J[sp, self.i_th:self.i_R] = -self.om.norm2_grad(th)

        st = fam["epigraph"]
        J[st, self.i_R:self.i_t] = self.M_t
        J[st, self.i_t] = -1.0
        sn = fam["nonneg"]
        J[sn, self.i_R + self.n_rp:self.i_t] = np.eye(self.n_rc)
        return J

    def curvature(self, x, inv_c):
        """``sum_j inv_c[j] * (-grad^2 c_j)`` (positive semidefinite)."""
        V, th, _, _ = self.unpack(x)
        fam = self.families()
        H = np.zeros((self.n, self.n))
        rho = (self.w * self.alpha / LN2) * inv_c[: self.n_rows]
        beta = np.zeros((self.n_u, self.n_s))
        np.add.at(beta, self.ue, rho[:, None] * self.T)
        K = np.einsum("kj,ka,kb->jab", beta, self.h_a, self.h_a.conj())
        w_fh = inv_c[fam["fronthaul"]]
        w_pw = inv_c[fam["power"]]
        if len(self.active):
            s_fh = (w_fh / LN2) @ self.ant_owner
            s_pw = w_pw @ self.ant_owner
            D = s_fh[:, None] * self.S + np.diag(s_pw)
            K = K + D[None, :, :]
        na = self.n_a
        blk = np.empty((self.n_s, 2 * na, 2 * na))
        blk[:, :na, :na] = blk[:, na:, na:] = 2.0 * K.real
        blk[:, :na, na:] = -2.0 * K.imag
        blk[:, na:, :na] = 2.0 * K.imag
        H[self._blk_r, self._blk_c] = blk
        gamma = np.zeros(self.n_u)
        np.add.at(gamma, self.ue, rho)
        Ht = self.om.quant_power_hess(gamma)
        if len(self.active):
            Ht = (Ht + self.om.fh_quad_hess(w_fh / LN2)
                  + self.om.log_diag_hess((2.0 / LN2) * w_fh, th)
                  + self.om.norm2_hess(w_pw))
        H[self.i_th:self.i_R, self.i_th:self.i_R] = Ht
        return H

    def barrier(self, x, mu):
        """``-t - mu * sum log c`` or +inf outside the strict interior."""
        c = self.values(x)
        if c is None or np.any(c <= 0) or not np.all(np.isfinite(c)):
            return math.inf, c
        return -x[self.i_t] - mu * np.sum(np.log(c)), c


def assemble(data: SubproblemData, alive_sets=None, scalar_omega=None) -> Problem:
    if data.struct.num_ues != data.cfg.num_ues:
        raise ValueError("assemble: structure and configuration disagree on num_ues")
    data.chan.check(data.cfg)
    data.warm.check(data.cfg, data.struct)
    return Problem(data, alive_sets=alive_sets, scalar_omega=scalar_omega)


# ---------------------------------------------------------------------------
# warm start
# ---------------------------------------------------------------------------

def _warm_point(data: SubproblemData, scalar_omega, shrink=1e-3):
    cfg, struct = data.cfg, data.struct
    prob = Problem(data, scalar_omega=scalar_omega)
    warm = data.warm
    V = warm.streams[:, prob.ant].copy() * (1.0 - shrink)
    omegas = []
    for i in prob.active:
        om = np.array(warm.omega[i])
        n = cfg.antennas[i]
        lam = np.linalg.eigvalsh(om)
        floor = 1e-9 * cfg.power_limit[i] / n
        if lam[0] <= floor:
            om = om + (floor - min(lam[0], 0.0)) * np.eye(n)
        omegas.append(om)
    th = prob.om.from_omega(omegas) if prob.active else np.zeros(0)

    # pull (v, theta) strictly inside the fronthaul and power constraints
    fam = prob.families()
    n_R = prob.n_rp + prob.n_rc
    for _ in range(100):
        c = prob.values(prob.pack(V, th, np.zeros(n_R), -1.0))
        if c is None:
            raise SubsolverError("warm start: quantization covariance not positive definite")
        bad_fh = c[fam["fronthaul"]] <= 0
        bad_pw = c[fam["power"]] <= 0
        if not (bad_fh.any() or bad_pw.any()):
            break
        for r in range(len(prob.active)):
            ants = prob.ant_owner[r] > 0
            if bad_fh[r]:
                V[:, ants] *= 0.5
            if bad_pw[r]:
                V[:, ants] *= 1.0 - shrink
                th_sl = _theta_slice(prob, r)
                th[th_sl] *= 1.0 - shrink
    else:
        raise SubsolverError("warm start: cannot reach the interior of the RRH constraints")

    ft = prob.surrogate_rates(prob.pack(V, th, np.zeros(n_R), 0.0))
    n_u = struct.num_ues
    ft_c = np.full(len(struct.pairs), -np.inf)
    ft_c[prob.alive_pairs] = ft[n_u:]
    u_c = data.aux.u_common
    alive = np.ones(struct.num_sets, dtype=bool)
    for l, s in enumerate(struct.sets):
        idx = [n for n, (ll, _) in enumerate(struct.pairs) if ll == l]
        if np.min(ft_c[idx]) <= DEAD_RATE or np.any(u_c[idx] == 0):
            alive[l] = False
    prob = Problem(data, alive_sets=alive, scalar_omega=scalar_omega)
    ft = prob.surrogate_rates(prob.pack(V, th, np.zeros(prob.n_rp + prob.n_rc), 0.0))

    eta = shrink
    rp = ft[:n_u] - eta * (1.0 + np.abs(ft[:n_u]))
    rc_full = np.zeros(len(struct.pairs))
    warm_c = np.maximum(warm.rates.common, 0.0)
    for l, s in enumerate(struct.sets):
        if not alive[l]:
            continue
        idx = [n for n, (ll, _) in enumerate(struct.pairs) if ll == l]
        rows = [n_u + prob.alive_pairs.index(n) for n in idx]
        budget = float(np.min(ft[rows]))
        r = warm_c[idx]
        total = r.sum()
        scale = min(1.0, budget / total) if total > 0 else 0.0
        rc_full[idx] = r * scale * (1.0 - 2.0 * eta) + eta * budget / len(idx)
    rc = rc_full[prob.alive_pairs]
    R = np.concatenate([rp, rc])
    per_ue = prob.M_t @ R
    t0 = float(per_ue.min())
    t = t0 - eta * (1.0 + abs(t0))
    x = prob.pack(V, th, R, t)
    c = prob.values(x)
    if c is None or np.any(c <= 0):
        raise SubsolverError("warm start is not strictly feasible")
    return prob, x


def _theta_slice(prob: Problem, r: int) -> slice:
    om = prob.om
    if isinstance(om, ScalarOmega):
        return slice(r, r + 1)
    return om.slices[r]


# ---------------------------------------------------------------------------
# barrier method
# ---------------------------------------------------------------------------

def _newton_direction(H, g):
    """Solve ``H dx = -g`` with Jacobi scaling; jitter if Cholesky fails."""
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / np.outer(d, d)
    gs = g / d
    jitter = 0.0
    for _ in range(8):
        M = Hs + jitter * np.eye(len(g)) if jitter else Hs
        c, info = lapack.dpotrf(M, lower=1, clean=0)
        if info == 0:
            y, info = lapack.dpotrs(c, gs, lower=1)
            if info == 0:
                return -y / d
        jitter = 1e-14 if jitter == 0.0 else jitter * 100.0
    return -np.linalg.lstsq(Hs, gs, rcond=None)[0] / d


def solve(data: SubproblemData, tol: float = 1e-6, *, mu0: float = 1.0, mu_factor: float = 10.0,
          mu_min: float = 1e-8, max_newton: int = 80, scalar_omega=None,
          alpha: float = 0.01, beta: float = 0.5,
          center_tol: float = 1e-10, predictor: bool = True) -> SubproblemSolution:
    """Barrier method from a strictly feasible pull of ``data.warm``.

    Centering uses damped Newton steps with backtracking line search;
    ``mu`` drops by ``mu_factor`` per stage; the stage at ``mu_min`` is the
    last one, leaving a duality gap of about ``m * mu_min``. With
    ``predictor`` each stage starts with a step along the central-path
    tangent, kept only if it lowers the new barrier function.
    """
    cfg = data.cfg
    if not any(c > 0 and p > 0 for c, p in zip(cfg.fronthaul_capacity, cfg.power_limit)):
        # no RRH can carry signal, silence is the only feasible point
        return SubproblemSolution(zero_design(cfg, data.struct), 0.0, 0.0, True, 0, 0.0, 0.0, 0.0, "ok", {})
    prob, x = _warm_point(data, scalar_omega)
    warm_t = float(x[prob.i_t])
    mu = mu0
    total_newton = 0
    status = "ok"
    dec2 = 0.0
    while True:
        psi, c = prob.barrier(x, mu)
        centered = False
        for _ in range(max_newton):
            inv_c = 1.0 / c
            J = prob.jacobian(x)
            grad = -prob.e_t - mu * (J.T @ inv_c)
            Js = J * inv_c[:, None]
            H = mu * (Js.T @ Js + prob.curvature(x, inv_c))
            dx = _newton_direction(H, grad)
            dec2 = float(-grad @ dx) / mu
            total_newton += 1
            if not np.isfinite(dec2):
                raise SubsolverError("non-finite Newton decrement")
            if dec2 / 2.0 <= center_tol:
                centered = True
                break
            s = 1.0
            slope = float(grad @ dx)
            full_step = dec2 < 0.05
            accepted = False
            for _ls in range(60):
                xn = x + s * dx
                psi_n, cn = prob.barrier(xn, mu)
                if np.isfinite(psi_n) and (full_step or psi_n <= psi + alpha * s * slope):
                    accepted = True
                    break
                s *= beta
            if not accepted:
                if dec2 / 2.0 > 1e-6:
                    status = "line_search_stall"
                centered = True
                break
            x, psi, c = xn, psi_n, cn
        else:
            status = "newton_cap"
        if mu <= mu_min * (1.0 + 1e-9):
            break
        mu_next = mu / mu_factor
        if predictor and centered:
            # tangent of the central path: H dx/dmu = J^T (1/c)
            dpred = _newton_direction(H, (mu - mu_next) * (J.T @ inv_c))
            psi_ref, _ = prob.barrier(x, mu_next)
            s = 1.0
            for _ls in range(30):
                psi_p, _ = prob.barrier(x + s * dpred, mu_next)
                if psi_p < psi_ref:
                    x = x + s * dpred
                    break
                s *= beta
        mu = mu_next

    c = prob.values(x)
    inv_c = 1.0 / c
    lam = mu * inv_c
    J = prob.jacobian(x)
    # stationarity of max t s.t. c >= 0:  e_t + J^T lam = 0
    # scaled by the size of the dual-weighted gradients
    stationarity = float(np.max(np.abs(prob.e_t + J.T @ lam))
                         / (1.0 + np.max(np.abs(J).T @ lam)))
    converged = status == "ok" and stationarity <= tol
    vars_out = prob.to_design(x)
    t_out = float(vars_out.rates.per_ue(data.struct).min())
    duals = _keyed_duals(prob, lam)
    return SubproblemSolution(
        vars=vars_out,
        t=t_out,
        warm_t=warm_t,
        converged=converged,
        iterations=total_newton,
        mu=mu,
        max_violation=float(max(0.0, -np.min(c))) if len(c) else 0.0,
        stationarity=stationarity,
        status=status,
        duals=duals,
    )


def _keyed_duals(prob: Problem, lam) -> dict:
    """Multipliers keyed by constraint identity rather than solver row."""
    fam = prob.families()
    n_u = prob.n_u
    rate = lam[fam["rate"]]
    return {
        "private": {k: float(rate[k]) for k in range(n_u)},
        "common": {n: float(v) for n, v in zip(prob.alive_pairs, rate[n_u:])},
        "fronthaul": {i: float(v) for i, v in zip(prob.active, lam[fam["fronthaul"]])},
        "power": {i: float(v) for i, v in zip(prob.active, lam[fam["power"]])},
        "epigraph": {k: float(v) for k, v in enumerate(lam[fam["epigraph"]])},
        "nonneg": {n: float(v) for n, v in zip(prob.alive_pairs, lam[fam["nonneg"]])},
    }


@dataclass(frozen=True)
class KktReport:
    max_violation: float
    violations: dict  # family -> largest violation
    complementarity: float
    t: float


def check_kkt(data: SubproblemData, solution: SubproblemSolution) -> KktReport:
    """Re-evaluate every subproblem constraint through the surrogate and rate code.

    Solver internals are not used, only ``solution.vars``, ``solution.t``
    and the keyed multipliers.
    """
    from .wmmse import lower_bound_common, lower_bound_private, upper_bound_fronthaul

    chan, struct, cfg, aux = data.chan, data.struct, data.cfg, data.aux
    vars = solution.vars
    R = vars.rates
    slack = {"private": {}, "common": {}, "fronthaul": {}, "power": {}, "epigraph": {}, "nonneg": {}}
    for k in range(struct.num_ues):
        ft = lower_bound_private(k, vars, aux.u_private[k], aux.w_private[k], chan, struct, cfg)
        slack["private"][k] = ft - R.private[k]
    pidx = struct.pair_index()
    for n, (l, k) in enumerate(struct.pairs):
        total = sum(R.common[pidx[(l, kk)]] for kk in struct.sets[l])
        slack["nonneg"][n] = R.common[n]
        if total == 0.0:
            # a set carrying no message needs no decoding
            continue
        ft = lower_bound_common(l, k, vars, aux.u_common[n], aux.w_common[n], chan, struct, cfg)
        slack["common"][n] = ft - total
    for i in range(cfg.num_rrhs):
        sl = cfg.rrh_slice(i)
        carries = np.any(vars.streams[:, sl] != 0)
        if np.linalg.eigvalsh(vars.omega[i]).min() > 0:
            g = upper_bound_fronthaul(i, vars, aux.sigma[i], cfg)
        else:
            g = math.inf if carries else 0.0
        slack["fronthaul"][i] = cfg.fronthaul_capacity[i] - g
        slack["power"][i] = cfg.power_limit[i] - transmit_power(i, vars, cfg)
    per_ue = R.per_ue(struct)
    for k in range(struct.num_ues):
        slack["epigraph"][k] = per_ue[k] - solution.t
    violations = {fam: max([0.0] + [-v for v in vals.values()]) for fam, vals in slack.items()}
    comp = 0.0
    for fam, vals in solution.duals.items():
        for key, lam in vals.items():
            key = int(key)
            if key in slack[fam] and math.isfinite(slack[fam][key]):
                comp = max(comp, abs(lam * slack[fam][key]))
    return KktReport(float(max(violations.values())), violations, float(comp), float(solution.t))
