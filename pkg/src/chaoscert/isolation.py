"""Combinatorial isolating-block and isolating-neighborhood verification.

For a representable multivalued map F and a candidate neighborhood N (a
cube set), the block test computes the one-step core

    T = F*^{-1}(N)  intersect  N  intersect  F(N)

and certifies that the closed diam-neighborhood of T stays in the
interior of N, by comparing the lattice separation margin of T from the
complement of int N against an upper bound on the value diameters.  The
neighborhood test replaces T by the cube support of all bi-infinite
orbits, obtained by pruning the transition graph.

A negative verdict is a result, not an error; it carries per-cube
witnesses for the refinement loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from chaoscert.grid import (
    DomainGap,
    RepresentableMvMap,
    RepresentableSet,
    diam_over,
)
from chaoscert.intervals import round_down


# ---------------------------------------------------------------------------
# Images and preimages
# ---------------------------------------------------------------------------

def image(F: RepresentableMvMap, A: RepresentableSet) -> RepresentableSet:
    """F(A): union of values over A.

    Cubes recorded as failed contribute nothing (any certificate over a
    set containing them is negative regardless); a cube that is neither
    valued nor failed is a structural domain gap.
    """
    if A.grid != F.src_grid:
        raise DomainGap("A not on the source grid")
    pieces = []
    for cid in A.ids:
        cid = int(cid)
        if cid in F.failed:
            continue
        pieces.append(F.value_ids(cid))
    if not pieces:
        return RepresentableSet(F.dst_grid, [])
    return RepresentableSet(F.dst_grid, np.unique(np.concatenate(pieces)))


def weak_preimage(F: RepresentableMvMap, B: RepresentableSet) -> RepresentableSet:
    """F*^{-1}(B): domain cubes whose value meets B."""
    if B.grid != F.dst_grid:
        raise DomainGap("B not on the target grid")
    hits = [cid for cid in F.values
            if len(np.intersect1d(F.value_ids(cid), B.ids))]
    return RepresentableSet(F.src_grid, hits)


def strong_preimage(F: RepresentableMvMap, B: RepresentableSet) -> RepresentableSet:
    """F^{-1}(B): domain cubes whose entire value lies in B."""
    if B.grid != F.dst_grid:
        raise DomainGap("B not on the target grid")
    hits = [cid for cid in F.values
            if len(np.setdiff1d(F.value_ids(cid), B.ids)) == 0]
    return RepresentableSet(F.src_grid, hits)


# ---------------------------------------------------------------------------
# Transition graph and invariant part
# ---------------------------------------------------------------------------

class TransitionGraph:
    """Directed cube graph of F restricted to N: c -> c' iff c' in F(c) ∩ N."""

    def __init__(self, F: RepresentableMvMap, N: RepresentableSet):
        if N.grid != F.src_grid or N.grid != F.dst_grid:
            raise DomainGap("transition graph needs matching src/dst grids")
        self.nodes = N.ids
        succ: dict[int, np.ndarray] = {}
        for cid in N.ids:
            cid = int(cid)
            if cid in F.failed:
                succ[cid] = np.asarray([], dtype=np.int64)
                continue
            succ[cid] = np.intersect1d(F.value_ids(cid), N.ids)
        self.succ = succ
        pred: dict[int, list[int]] = {int(c): [] for c in N.ids}
        for cid, vs in succ.items():
            for v in vs:
                pred[int(v)].append(cid)
        self.pred = {k: np.asarray(v, dtype=np.int64) for k, v in pred.items()}

    def prune_bi_infinite(self) -> np.ndarray:
        """Vertices surviving repeated removal of sources and sinks.

        The survivors support every bi-infinite orbit in N; on a finite
        graph they are exactly the vertices with a path from a cycle and
        a path to a cycle.  The worklist is order-independent
        (confluence), which the tests assert under shuffled schedules.
        """
        alive = {int(c) for c in self.nodes}
        outdeg = {c: sum(1 for v in self.succ[c] if int(v) in alive)
                  for c in alive}
        indeg = {c: sum(1 for v in self.pred[c] if int(v) in alive)
                 for c in alive}
        work = [c for c in alive if outdeg[c] == 0 or indeg[c] == 0]
        while work:
            c = work.pop()
            if c not in alive:
                continue
            alive.remove(c)
            for v in self.succ[c]:
                v = int(v)
                if v in alive:
                    indeg[v] -= 1
                    if indeg[v] == 0:
                        work.append(v)
            for v in self.pred[c]:
                v = int(v)
                if v in alive:
                    outdeg[v] -= 1
                    if outdeg[v] == 0:
                        work.append(v)
        return np.asarray(sorted(alive), dtype=np.int64)


def invariant_part(F: RepresentableMvMap, N: RepresentableSet) -> RepresentableSet:
    """Cube support of all bi-infinite orbits of F inside N.

    Over-approximates the point-set invariant part, which is the sound
    direction for the isolation test.
    """
    g = TransitionGraph(F, N)
    return RepresentableSet(N.grid, g.prune_bi_infinite())


# ---------------------------------------------------------------------------
# Separation margin
# ---------------------------------------------------------------------------

def separation_margin(T: RepresentableSet, N: RepresentableSet) -> tuple[float, list[int]]:
    """Lower bound on sup-dist from |T| to the complement of int |N|.

    Computed on the lattice: a cube whose Chebyshev distance to the
    nearest non-N cell (grid boundary included) is k sits at point
    distance (k-1) * 2*eta from the complement.  Returns the margin and
    the T-cubes realizing it (failure witnesses).
    """
    g = T.grid
    if N.grid != g:
        raise DomainGap("T and N on different grids")
    if len(T.ids) == 0:
        return float("inf"), []
    coords_N = g.decode_many(N.ids)
    lo = coords_N.min(axis=0)
    hi = coords_N.max(axis=0)
    shape = tuple(int(h - l + 3) for l, h in zip(lo, hi))  # pad = off-N ring
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((coords_N - lo + 1).T)] = True
    # the False padding ring stands for both missing cubes and the region
    # boundary, so cells beyond the grid count as complement as well
    dist = ndimage.distance_transform_cdt(mask, metric="chessboard")
    coords_T = g.decode_many(T.ids) - lo + 1
    dT = dist[tuple(coords_T.T)]
    k = int(dT.min())
    margin = round_down((k - 1) * 2.0 * g.eta) if k > 1 else 0.0
    worst = np.nonzero(dT == k)[0][:100]
    witnesses = [int(T.ids[i]) for i in worst]
    return margin, witnesses


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass
class BlockCertificate:
    kind: str                      # "block" or "neighborhood"
    n_cubes: int
    core_cubes: int
    diam_bound: float
    margin: float
    verdict: bool
    witnesses: list[int] = field(default_factory=list)
    failed_cubes: dict[int, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_cubes": self.n_cubes,
            "core_cubes": self.core_cubes,
            "diam_bound": self.diam_bound,
            "diam_bound_hex": float.hex(self.diam_bound),
            "margin": self.margin,
            "margin_hex": float.hex(self.margin),
            "verdict": self.verdict,
            "witnesses": self.witnesses,
            "failed_cubes": {str(k): v for k, v in self.failed_cubes.items()},
        }


def _core_and_certify(F, N, core: RepresentableSet, kind: str) -> BlockCertificate:
    failed = {c: r for c, r in F.failed.items() if c in N}
    valued = RepresentableSet(N.grid, [int(c) for c in N.ids
                                       if int(c) not in failed])
    diam = diam_over(F, valued)
    margin, witnesses = separation_margin(core, N)
    verdict = (not failed) and margin > diam  # strict: ties fail
    if verdict:
        witnesses = []
    return BlockCertificate(kind=kind, n_cubes=len(N), core_cubes=len(core),
                            diam_bound=diam, margin=margin, verdict=verdict,
                            witnesses=witnesses, failed_cubes=failed)


def check_isolating_block(F: RepresentableMvMap,
                          N: RepresentableSet) -> BlockCertificate:
    """One-forward-one-backward isolation test on the core T."""
    T = weak_preimage(F, N).intersect(N).intersect(image(F, N))
    return _core_and_certify(F, N, T, "block")


def check_isolating_neighborhood(F: RepresentableMvMap,
                                 N: RepresentableSet) -> BlockCertificate:
    """Isolation test with the bi-infinite-orbit support in place of T."""
    inv = invariant_part(F, N)
    return _core_and_certify(F, N, inv, "neighborhood")
