"""Random instances and independent reference computations for the tests."""
import itertools
import math

import numpy as np

from rsma_cran.model import DesignVariables, RateAllocation, SystemConfig, WmmseAuxiliaries, build_orders


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_pd(rng, n, scale=1.0):
    A = crandn(rng, n, n)
    return scale * (A @ A.conj().T / n + 0.1 * np.eye(n))


def random_laminar_sets(rng, num_ues):
    """Random nested family: shrink the full set one UE at a time."""
    sets, cur = [], list(range(num_ues))
    while len(cur) >= 2:
        sets.append(frozenset(cur))
        cur = list(rng.permutation(cur))[: len(cur) - 1]
        if rng.random() < 0.3:
            break
    return sets


def random_sets(rng, num_ues, max_sets=4):
    """Distinct random subsets of size >= 2 (not necessarily nested)."""
    candidates = [frozenset(c) for r in range(2, num_ues + 1) for c in itertools.combinations(range(num_ues), r)]
    if not candidates:
        return []
    n = int(rng.integers(0, min(max_sets, len(candidates)) + 1))
    idx = rng.choice(len(candidates), size=n, replace=False)
    return [candidates[i] for i in idx]


def random_instance(rng, num_rrhs=None, num_ues=None, antennas=None, sets=None, noise=1.0):
    """Config, channel, structure and design variables with unit-scale numbers."""
    from rsma_cran.model import ChannelState

    num_rrhs = num_rrhs or int(rng.integers(1, 5))
    num_ues = num_ues or int(rng.integers(1, 7))
    if antennas is None:
        antennas = [int(a) for a in rng.integers(1, 3, size=num_rrhs)]
    cfg = SystemConfig(
        num_rrhs, num_ues, antennas,
        fronthaul_capacity=list(rng.uniform(2.0, 10.0, num_rrhs)),
        power_limit=list(rng.uniform(1.0, 5.0, num_rrhs)),
        noise_variance=[noise] * num_ues,
    )
    if sets is None:
        sets = random_sets(rng, num_ues)
    struct = build_orders(sets, num_ues)
    n_r = cfg.total_antennas
    chan = ChannelState(crandn(rng, num_ues, n_r) * 2.0)
    vars = DesignVariables(
        crandn(rng, num_ues, n_r) * 0.5,
        crandn(rng, struct.num_sets, n_r) * 0.5,
        tuple(random_pd(rng, n, 0.2) for n in antennas),
        RateAllocation(rng.uniform(0, 0.1, num_ues), rng.uniform(0, 0.05, len(struct.pairs))),
    )
    return cfg, chan, struct, vars


def random_auxiliaries(rng, cfg, struct):
    n_c = len(struct.pairs)
    return WmmseAuxiliaries(
        crandn(rng, cfg.num_ues), crandn(rng, n_c),
        np.exp(rng.normal(0, 1, cfg.num_ues)), np.exp(rng.normal(0, 1, n_c)),
        tuple(random_pd(rng, n, rng.uniform(0.2, 3.0)) for n in cfg.antennas),
    )


# ---------------------------------------------------------------------------
# reference computations written without the package's rate code
# ---------------------------------------------------------------------------

def ref_decode_order(sets, k):
    """Sets containing k, largest first, ties by ascending index."""
    mine = [l for l, s in enumerate(sets) if k in s]
    return sorted(mine, key=lambda l: (-len(sets[l]), l))


def ref_received_powers(vars, h_k):
    """Received power of every private and common precoder at one UE."""
    p = [abs(np.sum(np.conj(h_k) * v)) ** 2 for v in vars.v_private]
    c = [abs(np.sum(np.conj(h_k) * v)) ** 2 for v in vars.v_common]
    return p, c


def ref_quant(vars, h_k):
    blocks = vars.omega
    n = sum(b.shape[0] for b in blocks)
    full = np.zeros((n, n), dtype=complex)
    s = 0
    for b in blocks:
        full[s:s + b.shape[0], s:s + b.shape[0]] = b
        s += b.shape[0]
    return float(np.real(np.conj(h_k) @ full @ h_k))


def ref_nu_private(vars, h_k, sets, k, noise):
    p, c = ref_received_powers(vars, h_k)
    total = sum(pw for m, pw in enumerate(p) if m != k)
    total += sum(pw for l, pw in enumerate(c) if k not in sets[l])
    return total + ref_quant(vars, h_k) + noise


def ref_nu_common(vars, h_k, sets, l, k, noise):
    p, c = ref_received_powers(vars, h_k)
    order = ref_decode_order(sets, k)
    later = order[order.index(l) + 1:]
    total = sum(p) + sum(c[m] for m in later)
    total += sum(pw for m, pw in enumerate(c) if k not in sets[m])
    return total + ref_quant(vars, h_k) + noise


def ref_phi_det(A, B):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    return float(np.log2(np.real(np.linalg.det(A + B))) - np.log2(np.real(np.linalg.det(B))))


# ---------------------------------------------------------------------------
# brute-force single-link oracles (one RRH, one antenna, one UE)
# ---------------------------------------------------------------------------

def _refine_grid(objective, lo, hi, n=801, rounds=8, keep=0.125):
    """Maximize ``objective(X, Y)`` over a box by repeated zoomed grids."""
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    best = (-np.inf, None)
    for _ in range(rounds):
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        F = objective(X, Y)
        i, j = np.unravel_index(np.argmax(F), F.shape)
        if F[i, j] > best[0]:
            best = (float(F[i, j]), (X[i, j], Y[i, j]))
        half = 0.5 * keep * (hi - lo)
        centre = np.array(best[1])
        lo, hi = np.maximum(lo, centre - half), np.minimum(hi, centre + half)
    return best


def ref_single_link_rate(gain, power, capacity, noise=1.0):
    """Best exact rate over a grid of (precoder power, quantization noise).

    Rate ``log2(1 + gain p / (gain w + noise))`` subject to ``p + w <= P``
    and ``log2(1 + p / w) <= C``.
    """
    def objective(p, w):
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (p + w <= power * (1 + 1e-12)) & (w > 0) & (np.log2(1 + p / w) <= capacity + 1e-12)
            r = np.log2(1 + gain * p / (gain * w + noise))
        return np.where(ok, r, -np.inf)

    return _refine_grid(objective, (0.0, 1e-12 * power), (power, power))[0]


def ref_single_link_surrogate(gain, u, w, sigma, power, capacity, noise=1.0):
    """Best surrogate objective of one subproblem over a grid of (|v|^2, omega).

    The precoder phase is aligned with the filter, which is optimal because
    the error variance only depends on ``u^* h^* v`` through its real part.
    """
    au, ah = abs(u), math.sqrt(gain)

    def objective(p, om):
        with np.errstate(divide="ignore", invalid="ignore"):
            e = (au * ah * np.sqrt(p) - 1.0) ** 2 + au ** 2 * (gain * om + noise)
            f = math.log2(w) + (1.0 - w * e) / math.log(2.0)
            g = math.log2(sigma) + ((p + om) / sigma - 1.0) / math.log(2.0) - np.log2(om)
            ok = (p + om <= power * (1 + 1e-12)) & (om > 0) & (g <= capacity + 1e-12)
        return np.where(ok, f, -np.inf)

    return _refine_grid(objective, (0.0, 1e-9 * power), (power, power))[0]


def ref_max_violation(vars, chan, struct, cfg):
    """Largest relative violation of the rate, fronthaul, power and sign constraints.

    Recomputed from the reference interference sums and determinants only.
    """
    sets = struct.sets
    worst = 0.0

    def push(lhs, rhs):
        nonlocal worst
        worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))

    R = vars.rates
    for k in range(cfg.num_ues):
        h = chan.h[k]
        p, _ = ref_received_powers(vars, h)
        push(R.private[k], math.log2(1 + p[k] / ref_nu_private(vars, h, sets, k, cfg.noise_variance[k])))
        push(-R.private[k], 0.0)
    for l, s in enumerate(sets):
        total = sum(R.common[n] for n, (ll, _) in enumerate(struct.pairs) if ll == l)
        budget = min(
            math.log2(1 + ref_received_powers(vars, chan.h[k])[1][l]
                      / ref_nu_common(vars, chan.h[k], sets, l, k, cfg.noise_variance[k]))
            for k in s)
        push(total, budget)
    for r in R.common:
        push(-r, 0.0)
    start = 0
    for i, n in enumerate(cfg.antennas):
        V = vars.streams[:, start:start + n]
        start += n
        cov = sum(np.outer(v, v.conj()) for v in V)
        fh = 0.0 if not np.any(V) else ref_phi_det(cov, vars.omega[i])
        push(fh, cfg.fronthaul_capacity[i])
        push(float(np.real(np.trace(cov) + np.trace(vars.omega[i]))), cfg.power_limit[i])
    return worst
