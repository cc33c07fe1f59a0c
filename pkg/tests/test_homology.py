"""Cubical pair homology: algebraic identities and rank oracles.

The reduction is checked against an independent matrix-rank oracle
(sympy over Q) on random cubical pairs, and the chain equivalences and
the box contraction are checked by their defining identities on random
chains.
"""

import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
import sympy

from chaoscert.grid import (
    EvalResult,
    Grid,
    LatticeRect,
    RepresentableMvMap,
    RepresentableSet,
    build_enclosure,
)
from chaoscert.homology import (
    BoxContraction,
    CellBox,
    ChainMapNotRelative,
    ChainSelector,
    EmptyCarrier,
    PairComplex,
    ReducedComplex,
    add_chain,
    boundary_cell,
    cell_dim,
    cells_of_cubeset,
    induced_map_on_pair,
    mat_inverse,
    mat_mul,
    mat_rank,
    relative_homology,
    solve_boundary_in_box,
)


def grid2(n=16, eta=0.0625):
    side = n * 2 * eta
    return Grid([0.0, 0.0], [side, side], eta)


def rand_cubes(rng, lo=0, hi=6, k=8, dim=2):
    out = set()
    for _ in range(k):
        out.add(tuple(rng.randint(lo, hi) for _ in range(dim)))
    return out


def rank_oracle_betti(n_cubes, l_cubes):
    """Betti numbers of the pair over Q via sympy matrix ranks."""
    basis = sorted(cells_of_cubeset(n_cubes) - cells_of_cubeset(l_cubes))
    by_dim = {}
    for c in basis:
        by_dim.setdefault(cell_dim(c), []).append(c)
    maxd = max(by_dim) if by_dim else 0
    idx = {d: {c: i for i, c in enumerate(by_dim.get(d, []))}
           for d in range(maxd + 2)}
    ranks = {}
    for d in range(1, maxd + 1):
        rows, cols = by_dim.get(d - 1, []), by_dim.get(d, [])
        m = sympy.zeros(max(len(rows), 1), max(len(cols), 1))
        for j, c in enumerate(cols):
            for f, v in boundary_cell(c).items():
                i = idx[d - 1].get(f)
                if i is not None:
                    m[i, j] = v
        ranks[d] = m.rank() if rows and cols else 0
    betti = {}
    for d in range(maxd + 1):
        n_d = len(by_dim.get(d, []))
        betti[d] = n_d - ranks.get(d, 0) - ranks.get(d + 1, 0)
    return {d: b for d, b in betti.items() if b}


def square_cubes(lo, hi):
    return {(i, j) for i in range(lo, hi + 1) for j in range(lo, hi + 1)}


class TestBoundaryOperator:
    def test_square_of_boundary_vanishes(self):
        rng = random.Random(1)
        for _ in range(100):
            dim = rng.choice([1, 2, 3])
            cell = tuple((rng.randint(-3, 3), rng.randint(0, 1))
                         for _ in range(dim))
            dd = {}
            for f, v in boundary_cell(cell).items():
                add_chain(dd, boundary_cell(f), v)
            assert dd == {}

    def test_edge_boundary(self):
        e = ((2, 1), (5, 0))
        assert boundary_cell(e) == {((3, 0), (5, 0)): 1, ((2, 0), (5, 0)): -1}

    def test_cells_of_single_cube(self):
        cells = cells_of_cubeset({(0, 0)})
        dims = sorted(cell_dim(c) for c in cells)
        assert dims == [0, 0, 0, 0, 1, 1, 1, 1, 2]


class TestReductionOracles:
    def test_solid_square(self):
        red = ReducedComplex(PairComplex(square_cubes(0, 3), set()))
        assert red.betti() == {0: 1}

    def test_annulus(self):
        ring = square_cubes(0, 4) - square_cubes(1, 3)
        red = ReducedComplex(PairComplex(ring, set()))
        assert red.betti() == {0: 1, 1: 1}

    def test_square_mod_boundary(self):
        n = square_cubes(0, 4)
        l = n - square_cubes(1, 3)
        red = ReducedComplex(PairComplex(n, l))
        assert red.betti() == {2: 1}

    def test_interval_mod_endpoints(self):
        n = {(i,) for i in range(5)}
        l = {(0,), (4,)}
        red = ReducedComplex(PairComplex(n, l))
        assert red.betti() == {1: 1}

    def test_two_components(self):
        red = ReducedComplex(PairComplex(square_cubes(0, 1)
                                         | square_cubes(4, 5), set()))
        assert red.betti() == {0: 2}

    def test_50_random_pairs_match_rank_oracle(self):
        rng = random.Random(2024)
        for _ in range(50):
            n = rand_cubes(rng, k=rng.randint(3, 12))
            l_pool = list(n)
            l = set(rng.sample(l_pool, rng.randint(0, len(l_pool) // 2)))
            red = ReducedComplex(PairComplex(n, l))
            assert red.betti() == rank_oracle_betti(n, l)

    def test_random_pairs_3d(self):
        rng = random.Random(7)
        for _ in range(10):
            n = rand_cubes(rng, hi=3, k=6, dim=3)
            l = set(rng.sample(list(n), rng.randint(0, len(n) // 2)))
            red = ReducedComplex(PairComplex(n, l))
            assert red.betti() == rank_oracle_betti(n, l)


class TestChainEquivalences:
    def _random_chain(self, rng, basis, dim):
        cells = [c for c in basis if cell_dim(c) == dim]
        take = rng.sample(cells, min(len(cells), rng.randint(1, 5)))
        return {c: Fraction(rng.randint(-3, 3)) for c in take}

    def test_identities_on_random_complexes(self):
        rng = random.Random(11)
        for _ in range(30):
            n = rand_cubes(rng, k=rng.randint(3, 10))
            l = set(rng.sample(list(n), rng.randint(0, len(n) // 2)))
            pc = PairComplex(n, l)
            red = ReducedComplex(pc)
            # iota of every surviving cell is a relative cycle
            for c in red.cells:
                rep = red.include_chain({c: Fraction(1)})
                assert pc.boundary_chain(rep) == {}
            # pi iota = id on the reduced basis
            for c in red.cells:
                back = red.project_chain(red.include_chain({c: Fraction(1)}))
                assert back == {c: Fraction(1)}
            # pi kills boundaries (pi is a chain map into the zero complex)
            for d in (1, 2):
                cells_d = [c for c in pc.basis if cell_dim(c) == d]
                if not cells_d:
                    continue
                z = self._random_chain(rng, cells_d, d)
                bz = pc.boundary_chain(z)
                assert red.project_chain(bz) == {}

    def test_projected_class_is_homologous_to_original(self):
        # the fundamental class of the annulus loop projects to a
        # generator, and including it back gives a homologous cycle
        ring = square_cubes(0, 2) - {(1, 1)}
        pc = PairComplex(ring, set())
        red = ReducedComplex(pc)
        gens1 = red.basis_of_dim(1)
        assert len(gens1) == 1
        rep = red.include_chain({gens1[0]: Fraction(1)})
        assert pc.boundary_chain(rep) == {}
        assert red.project_chain(rep) == {gens1[0]: Fraction(1)}


class TestBoxContraction:
    def test_homotopy_identity_random(self):
        rng = random.Random(3)
        for _ in range(60):
            dim = rng.choice([1, 2, 3])
            lo = tuple(rng.randint(-2, 0) for _ in range(dim))
            hi = tuple(l + rng.randint(0, 3) for l in lo)
            box = CellBox(lo, tuple(b + 1 for b in hi))
            cubes = set(itertools.product(*[range(a, b + 1)
                                            for a, b in zip(lo, hi)]))
            cells = sorted(cells_of_cubeset(cubes))
            chain = {c: Fraction(rng.randint(-2, 2))
                     for c in rng.sample(cells, min(len(cells), 6))}
            chain = {c: v for c, v in chain.items() if v}
            con = BoxContraction(box)
            lhs = {}
            for c, v in con.apply(chain).items():
                add_chain(lhs, boundary_cell(c), v)
            bz = {}
            for c, v in chain.items():
                add_chain(bz, boundary_cell(c), v)
            add_chain(lhs, con.apply(bz))
            want = dict(chain)
            add_chain(want, con.base_projection(chain), -1)
            want = {c: v for c, v in want.items() if v}
            assert lhs == want

    def test_degenerate_box_contraction(self):
        # a shared face: 1D vertical segment as a degenerate 2D box
        box = CellBox((3, 0), (3, 4))
        z = {((3, 0), (4, 0)): Fraction(1), ((3, 0), (0, 0)): Fraction(-1)}
        b = solve_boundary_in_box(box, z)
        db = {}
        for c, v in b.items():
            add_chain(db, boundary_cell(c), v)
        assert db == z
        assert all(box.contains_cell(c) for c in b)

    def test_solve_boundary_for_cycles(self):
        rng = random.Random(9)
        rect = CellBox((0, 0), (4, 4))
        # a 1-cycle: boundary of a random 2-chain
        cubes = set(itertools.product(range(4), range(4)))
        two_cells = [c for c in cells_of_cubeset(cubes) if cell_dim(c) == 2]
        for _ in range(20):
            w = {c: Fraction(rng.randint(-2, 2))
                 for c in rng.sample(two_cells, 5)}
            z = {}
            for c, v in w.items():
                add_chain(z, boundary_cell(c), v)
            if not z:
                continue
            b = solve_boundary_in_box(rect, z)
            db = {}
            for c, v in b.items():
                add_chain(db, boundary_cell(c), v)
            assert db == z


def small_map_grid():
    return Grid([0.0, 0.0], [4.0, 4.0], 0.125)


def identity_map_on(g, rect):
    F = RepresentableMvMap(g, g)
    for cid in rect.to_set(g):
        coords = g.decode(int(cid))
        F.set_rect(int(cid), LatticeRect(coords, coords))
    return F


class TestChainSelector:
    def test_commutes_with_boundary_absolute(self):
        g = small_map_grid()
        rng = random.Random(5)
        rect = LatticeRect((1, 1), (6, 6))
        F = RepresentableMvMap(g, g)
        for cid in rect.to_set(g):
            c = g.decode(int(cid))
            # widths >= 3 with unit shifts keep neighbor values overlapping
            lo = (max(c[0] - 1, 0), max(c[1] - 1, 0))
            hi = (min(c[0] + 1 + rng.randint(0, 1), 9),
                  min(c[1] + 1 + rng.randint(0, 1), 9))
            F.set_rect(int(cid), LatticeRect(lo, hi))
        sel = ChainSelector(F)
        cubes = {g.decode(int(cid)) for cid in rect.to_set(g)}
        for cell in sorted(cells_of_cubeset(cubes)):
            lhs = {}
            for c, v in sel.phi(cell).items():
                add_chain(lhs, boundary_cell(c), v)
            rhs = sel.phi_chain(boundary_cell(cell))
            assert lhs == rhs

    def test_selector_supported_in_carrier(self):
        # identity values: carriers of shared faces degenerate to the
        # image of the face itself, still nonempty
        g = small_map_grid()
        rect = LatticeRect((2, 2), (5, 5))
        F = identity_map_on(g, rect)
        sel = ChainSelector(F)
        cubes = {g.decode(int(cid)) for cid in rect.to_set(g)}
        for cell in cells_of_cubeset(cubes):
            carrier = sel.carrier(cell)
            for c2 in sel.phi(cell):
                assert carrier.contains_cell(c2)

    def test_gapped_values_raise_empty_carrier(self):
        # neighbor values separated by a full cube gap cannot carry a
        # continuous selector
        g = small_map_grid()
        F = RepresentableMvMap(g, g)
        for cid in LatticeRect((1, 1), (4, 4)).to_set(g):
            c = g.decode(int(cid))
            F.set_rect(int(cid), LatticeRect((3 * c[0], c[1]),
                                             (3 * c[0] + 1, c[1])))
        sel = ChainSelector(F)
        with pytest.raises(EmptyCarrier):
            for cell in sorted(cells_of_cubeset(
                    {g.decode(int(cid))
                     for cid in LatticeRect((1, 1), (4, 4)).to_set(g)})):
                sel.carrier(cell)


def wide_grid():
    # 64 x 32 cube lattice
    return Grid([0.0, 0.0], [16.0, 8.0], 0.125)


def tripling_map(g):
    """x -> 3x - 64 at cube level, y squeezed onto row 16.

    The exit set for this map on the block below is the pair of side
    bands; the interior (columns 30..34, whose values stay inside N)
    maps across itself with degree one.
    """
    F = RepresentableMvMap(g, g)
    for cid in LatticeRect((24, 14), (40, 18)).to_set(g):
        c = g.decode(int(cid))
        F.set_rect(int(cid),
                   LatticeRect((3 * c[0] - 64, 16), (3 * c[0] - 62, 16)))
    return F


def tripling_pair(g):
    N = LatticeRect((24, 14), (40, 18)).to_set(g)
    L = N.difference(LatticeRect((30, 14), (34, 18)).to_set(g))
    return N, L


class TestInducedMap:
    def test_contraction_identity_on_h0(self):
        # everything falls onto a center block: empty exit set, and the
        # induced map on H_0 of (N, empty) is the identity
        g = wide_grid()
        N = LatticeRect((24, 14), (40, 18)).to_set(g)
        L = RepresentableSet(g, [])
        F = RepresentableMvMap(g, g)
        for cid in N:
            F.set_rect(int(cid), LatticeRect((31, 16), (32, 16)))
        data = induced_map_on_pair(F, N, L, max_degree=1)
        assert data.betti == {0: 1}
        assert data.matrices[0] == [[Fraction(1)]]
        assert data.matrices[1] == []

    def test_tripling_degree_one(self):
        g = wide_grid()
        N, L = tripling_pair(g)
        F = tripling_map(g)
        data = induced_map_on_pair(F, N, L, max_degree=2,
                                   verify_cells=True)
        assert data.betti == {1: 1}
        assert data.matrices[1] in ([[Fraction(1)]], [[Fraction(-1)]])

    def test_selector_independence(self):
        g = wide_grid()
        N, L = tripling_pair(g)
        F = tripling_map(g)
        a = induced_map_on_pair(F, N, L, max_degree=1)
        b = induced_map_on_pair(F, N, L, max_degree=1,
                                vertex_perturbation=1)
        assert a.matrices == b.matrices

    def test_leak_raises_with_offenders(self):
        # exit-set cubes mapping straight into the pair interior: the
        # selector leaks and the pair is rejected with witnesses
        g = wide_grid()
        N, L = tripling_pair(g)
        F = RepresentableMvMap(g, g)
        for cid in LatticeRect((24, 14), (40, 18)).to_set(g):
            F.set_rect(int(cid), LatticeRect((31, 16), (32, 16)))
        with pytest.raises(ChainMapNotRelative) as exc:
            induced_map_on_pair(F, N, L, max_degree=1)
        assert exc.value.offending_cubes

    def test_cohomology_matrix_is_transpose(self):
        g = wide_grid()
        N, L = tripling_pair(g)
        F = tripling_map(g)
        data = induced_map_on_pair(F, N, L, max_degree=1)
        assert data.cohomology_matrix(1) == data.matrices[1]


class TestRationalLinearAlgebra:
    def test_inverse_against_sympy(self):
        rng = random.Random(13)
        for _ in range(50):
            n = rng.randint(1, 5)
            a = [[Fraction(rng.randint(-4, 4)) for _ in range(n)]
                 for _ in range(n)]
            m = sympy.Matrix(a)
            inv = mat_inverse(a)
            if m.det() == 0:
                assert inv is None
            else:
                want = m.inv()
                assert all(want[i, j] == inv[i][j]
                           for i in range(n) for j in range(n))

    def test_rank_against_sympy(self):
        rng = random.Random(17)
        for _ in range(50):
            n, m = rng.randint(1, 5), rng.randint(1, 5)
            a = [[Fraction(rng.randint(-3, 3)) for _ in range(m)]
                 for _ in range(n)]
            assert mat_rank(a) == sympy.Matrix(a).rank()

    def test_mat_mul(self):
        a = [[Fraction(1), Fraction(2)], [Fraction(0), Fraction(1)]]
        b = [[Fraction(3)], [Fraction(-1)]]
        assert mat_mul(a, b) == [[Fraction(1)], [Fraction(-1)]]


class TestRelativeHomologyAPI:
    def test_from_representable_sets(self):
        g = grid2()
        N = LatticeRect((2, 2), (6, 6)).to_set(g)
        L = N.difference(LatticeRect((3, 3), (5, 5)).to_set(g))
        assert relative_homology(N, L) == {2: 1}
