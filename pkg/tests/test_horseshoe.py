"""Horseshoe benchmark map: analytic oracles for the full machinery.

Ground truth comes from two independent sources: a brute-force
chain-complex oracle (sympy matrix ranks over Q on the raw boundary
matrices of the pair) and a crossing-degree oracle that reads the
transition matrix directly off the affine branch data by interval
arithmetic on exact rationals.  The pipeline under test never sees
either oracle.
"""

import random
from fractions import Fraction

import pytest

from chaoscert.conley import (
    build_index_pair,
    index_map,
    invariant_factors_of_char_matrix,
    leray_reduction,
    relative_cohomology,
    verify_theorem2,
)
from chaoscert.homology import cube_coords_of_set
from chaoscert.horseshoe import (
    N0_BOX,
    N1_BOX,
    HorseshoeEvaluator,
    build_fixture_enclosure,
    default_map,
    make_grid,
    region_set,
)
from chaoscert.isolation import check_isolating_block

from chaoscert.homology import boundary_cell, cell_dim, cells_of_cubeset


def sparse_rank_betti(n_cubes, l_cubes):
    """Betti numbers of the pair over Q by brute-force rank of the raw
    boundary matrices (sparse exact Gaussian elimination, no reduction
    tricks, independent of the package implementation)."""
    basis = sorted(cells_of_cubeset(n_cubes) - cells_of_cubeset(l_cubes))
    by_dim = {}
    for c in basis:
        by_dim.setdefault(cell_dim(c), []).append(c)
    maxd = max(by_dim) if by_dim else 0
    ranks = {}
    for d in range(1, maxd + 1):
        rows = set(by_dim.get(d - 1, []))
        cols = []
        for c in by_dim.get(d, []):
            col = {f: Fraction(v) for f, v in boundary_cell(c).items()
                   if f in rows}
            if col:
                cols.append(col)
        pivots = {}
        rank = 0
        for col in cols:
            while col:
                r = min(col)
                if r not in pivots:
                    pivots[r] = col
                    rank += 1
                    break
                other = pivots[r]
                scale = col[r] / other[r]
                for f, v in other.items():
                    col[f] = col.get(f, Fraction(0)) - scale * v
                    if col[f] == 0:
                        del col[f]
        ranks[d] = rank
    betti = {}
    for d in range(maxd + 1):
        n_d = len(by_dim.get(d, []))
        betti[d] = n_d - ranks.get(d, 0) - ranks.get(d + 1, 0)
    return {d: b for d, b in betti.items() if b}


# ---------------------------------------------------------------------------
# Crossing-degree oracle
# ---------------------------------------------------------------------------

def _y_range(box):
    return (Fraction(box[1][0]), Fraction(box[1][1]))


def crossing_degree(hs_map, src_box, dst_box, overshoot=Fraction(1, 4)):
    """Signed crossing count of g(src rectangle) over dst rectangle.

    For a branch whose slab contains the source y-range entirely, the
    image y-interval is computed exactly; a contribution of sign(a_y)
    is counted when it covers the destination range with a margin of at
    least ``overshoot`` on both sides (so the crossing survives any
    enclosure of radius below the overshoot).  Exact rationals
    throughout; no chain machinery involved.
    """
    s_lo, s_hi = _y_range(src_box)
    d_lo, d_hi = _y_range(dst_box)
    deg = 0
    for b in hs_map.branches:
        if not (b.y_lo <= s_lo and s_hi <= b.y_hi):
            continue
        img = sorted([b.ay * s_lo + b.by, b.ay * s_hi + b.by])
        if img[0] <= d_lo - overshoot and d_hi + overshoot <= img[1]:
            deg += 1 if b.ay > 0 else -1
    return deg


def refined_symbol_matrix(hs_map):
    """Transition matrix on one-step-refined symbols.

    Symbol ``(k, l)`` stands for the set of points of region l whose
    image lies in region k; its image crosses symbol ``(k2, l2)`` once
    with positive degree exactly when ``l2 == k`` and region l2 maps
    across region k2.  Basis ordered (0,0), (1,0), (0,1), (1,1).
    """
    boxes = [N0_BOX, N1_BOX]
    symbols = [(0, 0), (1, 0), (0, 1), (1, 1)]
    m = [[Fraction(0)] * 4 for _ in range(4)]
    for j, (k, l) in enumerate(symbols):
        assert crossing_degree(hs_map, boxes[l], boxes[k]) == 1
        for i, (k2, l2) in enumerate(symbols):
            if l2 == k:
                m[i][j] = Fraction(crossing_degree(hs_map, boxes[l2],
                                                   boxes[k2]))
    return m


# ---------------------------------------------------------------------------
# Map and evaluator
# ---------------------------------------------------------------------------

class TestEvaluator:
    def test_branch_formulas(self):
        hs = default_map()
        assert hs.apply_exact(Fraction(1), Fraction(1)) == \
            (Fraction(1, 3) + Fraction(19, 64), Fraction(9, 4))
        assert hs.apply_exact(Fraction(1), Fraction(3)) == \
            (Fraction(1, 3) + Fraction(67, 64), Fraction(3, 4))

    def test_delta_at_rounding_level(self):
        ev = HorseshoeEvaluator()
        g = make_grid(1 / 32)
        rng = random.Random(7)
        for _ in range(100):
            cid = rng.randrange(g.ncubes)
            res = ev(g.cube_center(cid), g.eta)
            assert 0 <= res.delta < 1e-15
            assert res.lipschitz == 3.0

    def test_point_containment_oracle(self):
        # exact rational images of random points land in the assigned
        # enclosure values: zero violations over 300 samples
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        hs = default_map()
        ids = sorted(int(c) for c in n0.union(n1).ids)
        rng = random.Random(11)
        for _ in range(300):
            cid = rng.choice(ids)
            box = g.cube_box(cid)
            p = [Fraction(iv.lo) + Fraction(rng.randrange(0, 1025), 1024)
                 * (Fraction(iv.hi) - Fraction(iv.lo)) for iv in box]
            img = hs.apply_exact(*p)
            val = F.value_rect(cid).point_box(g)
            for q, iv in zip(img, val):
                assert Fraction(iv.lo) <= q <= Fraction(iv.hi)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

class TestGeometry:
    def test_regions_disjoint_and_sized(self):
        g = make_grid(1 / 32)
        n0 = region_set(N0_BOX, g)
        n1 = region_set(N1_BOX, g)
        assert len(n0) == len(n1) == 32 * 32
        assert len(n0.intersect(n1)) == 0

    def test_no_failed_cubes(self):
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        assert not F.failed
        assert len(F.domain()) == len(n0) + len(n1)

    def test_isolating_block_at_fine_eta(self):
        # margin beats diameter only once the enclosure is tight enough
        g = make_grid(1 / 64)
        F, n0, n1 = build_fixture_enclosure(g)
        for region in (n0.union(n1), n0, n1):
            cert = check_isolating_block(F, region)
            assert cert.verdict
            assert cert.margin > cert.diam_bound


# ---------------------------------------------------------------------------
# Index computations against the oracles
# ---------------------------------------------------------------------------

def _factors(m):
    return invariant_factors_of_char_matrix(m)


class TestIndexOracles:
    def test_component_indices(self):
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        for region in (n0, n1):
            pair = build_index_pair(F, region)
            idx = leray_reduction(index_map(F, pair))
            assert idx.ranks == {0: 0, 1: 1, 2: 0}
            assert idx.chi[1] == [[Fraction(1)]]

    def test_union_ranks_against_chain_complex_oracle(self):
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        pair = build_index_pair(F, n0.union(n1))
        coh = relative_cohomology(pair)
        oracle = sparse_rank_betti(cube_coords_of_set(pair.N),
                                   cube_coords_of_set(pair.L))
        assert {k: v for k, v in coh.ranks.items() if v} == oracle
        assert oracle == {1: 4}

    def test_union_matrix_against_crossing_oracle(self):
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        pair = build_index_pair(F, n0.union(n1))
        m = index_map(F, pair)
        oracle = refined_symbol_matrix(default_map())
        assert len(m[1]) == 4
        assert _factors(m[1]) == _factors(oracle)
        idx = leray_reduction(m)
        assert idx.ranks[1] == 1
        assert idx.chi[1] == [[Fraction(2)]]
        # the single surviving invariant factor is t - 2
        assert idx.invariant_factors[1] == [(Fraction(-2), Fraction(1))]

    def test_theorem_verdict(self):
        g = make_grid(1 / 32)
        F, n0, n1 = build_fixture_enclosure(g)
        N = n0.union(n1)
        indices = {}
        for name, region in (("S0", n0), ("S1", n1), ("union", N)):
            pair = build_index_pair(F, region)
            indices[name] = leray_reduction(index_map(F, pair))
        v = verify_theorem2(indices["S0"], indices["S1"], indices["union"])
        assert v.component_ok == {"S0": True, "S1": True}
        assert v.not_conjugate
        assert v.conclusion
