"""Common-signal set designs.

The proposed design groups UEs by channel direction with complete-linkage
agglomerative clustering and uses every merged cluster as a common set.
Baselines: one set with every UE (``rsma-sc``), random nested sizes
(``rsma-rc``) and no common signals (``sdma``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelState, CommonStructure, build_orders
from .scenario import rng_for

SCHEMES = ("sdma", "rsma-sc", "rsma-rc", "rsma-hc")


def dissimilarity(h_k, h_m) -> float:
    """``1 - |h_k^H h_m| / (||h_k|| ||h_m||)``, in [0, 1]."""
    h_k = np.asarray(h_k, dtype=complex).ravel()
    h_m = np.asarray(h_m, dtype=complex).ravel()
    nk, nm = np.linalg.norm(h_k), np.linalg.norm(h_m)
    if nk == 0 or nm == 0:
        raise ValueError("dissimilarity: zero channel vector")
    cos = abs(np.vdot(h_k, h_m)) / (nk * nm)
    return float(min(1.0, max(0.0, 1.0 - cos)))


def dissimilarity_matrix(h) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    D = np.zeros((n, n))
    for k in range(n):
        for m in range(k + 1, n):
            D[k, m] = D[m, k] = dissimilarity(h[k], h[m])
    return D


@dataclass(frozen=True)
class Merge:
    left: frozenset
    right: frozenset
    merged: frozenset
    distance: float

    def to_dict(self) -> dict:
        return {
            "left": sorted(self.left),
            "right": sorted(self.right),
            "merged": sorted(self.merged),
            "distance": self.distance,
        }


@dataclass(frozen=True)
class Dendrogram:
    num_ues: int
    merges: tuple

    @property
    def clusters(self) -> list:
        return [m.merged for m in self.merges]

    def to_dict(self) -> dict:
        return {"num_ues": self.num_ues, "merges": [m.to_dict() for m in self.merges]}


def agglomerate_distances(D, num_ues: int | None = None) -> Dendrogram:
    """Complete-linkage agglomeration of a precomputed dissimilarity matrix.

    Among pairs at the minimum linkage distance the pair with the
    lexicographically smallest (min UE of one cluster, min UE of the other)
    is merged first.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0] if num_ues is None else num_ues
    if D.shape != (n, n):
        raise ValueError("dissimilarity matrix shape does not match num_ues")
    if n < 2:
        raise ValueError("agglomerate needs at least two UEs")
    clusters = [frozenset([k]) for k in range(n)]
    merges = []
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                A, B = clusters[a], clusters[b]
                d = max(D[i, j] for i in A for j in B)
                key = (d, *sorted((min(A), min(B))))
                if best is None or key < best[0]:
                    best = (key, a, b)
        (d, _, _), a, b = best
        A, B = clusters[a], clusters[b]
        if min(B) < min(A):
            A, B = B, A
        merged = A | B
        merges.append(Merge(A, B, merged, float(d)))
        clusters = [c for j, c in enumerate(clusters) if j not in (a, b)] + [merged]
        clusters.sort(key=min)
    return Dendrogram(n, tuple(merges))


def agglomerate(chan: ChannelState, num_ues: int | None = None) -> Dendrogram:
    h = chan.h if num_ues is None else chan.h[:num_ues]
    return agglomerate_distances(dissimilarity_matrix(h))


def design_sets_hc(chan: ChannelState, num_ues: int | None = None) -> CommonStructure:
    """Every merged cluster of the dendrogram becomes a common set (``N_U - 1`` sets)."""
    dendro = agglomerate(chan, num_ues)
    return build_orders(dendro.clusters, dendro.num_ues)


def design_sets_sc(num_ues: int) -> CommonStructure:
    if num_ues < 2:
        raise ValueError("rsma-sc needs at least two UEs")
    return build_orders([frozenset(range(num_ues))], num_ues)


def design_sets_sdma(num_ues: int) -> CommonStructure:
    return build_orders([], num_ues)


def design_sets_rc(num_ues: int, seed: int) -> CommonStructure:
    """Set ``l`` (0-based) holds ``l + 2`` UEs drawn uniformly without replacement."""
    if num_ues < 2:
        raise ValueError("rsma-rc needs at least two UEs")
    rng = rng_for(seed, "common_sets")
    sets = [frozenset(int(k) for k in rng.choice(num_ues, size=l + 2, replace=False))
            for l in range(num_ues - 1)]
    return build_orders(sets, num_ues)


def design_sets(scheme: str, chan: ChannelState, num_ues: int, seed: int = 0) -> CommonStructure:
    if scheme == "sdma":
        return design_sets_sdma(num_ues)
    if scheme == "rsma-sc":
        return design_sets_sc(num_ues)
    if scheme == "rsma-rc":
        return design_sets_rc(num_ues, seed)
    if scheme == "rsma-hc":
        return design_sets_hc(chan, num_ues)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
