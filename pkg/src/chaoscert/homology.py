"""Relative cubical homology over Q and induced maps of cube-level
multivalued dynamics.

Cells are elementary cubes, encoded per axis as ``(a, da)`` with
``da = 1`` for the unit interval ``[a, a+1]`` and ``da = 0`` for the
vertex ``{a}`` (lattice coordinates of the grid's cube corners).  A
relative pair complex keeps the cells of N not contained in L, with the
boundary operator projected accordingly.

Homology is computed by elementary algebraic reductions over Q: a pair
``(alpha, beta)`` with an invertible incidence is removed and the
remaining boundaries adjusted.  Over a field this can be iterated until
every boundary map vanishes, so the surviving cells are a homology
basis.  Each reduction records enough data to evaluate the chain
equivalences ``project`` (chains to reduced coordinates) and ``include``
(reduced basis to representative cycles), which is what turns the
cube-level graph of a multivalued map into a matrix on homology.

The induced map itself comes from an acyclic-carrier chain selector:
the carrier of a cell is the intersection of the (rectangle) values of
all top cubes containing it, a possibly degenerate box, hence acyclic.
This is monotone under the face relation, so a chain selector exists
and is built degree by degree using an explicit contraction of box
complexes onto their minimal vertex.  The intersection rule is what
lets the cube-level exit conditions F(L) n N c L transfer to the chain
level: a cell of the exit set lies in some exit cube Q, its carrier
sits inside the value of Q, and that value never meets the pair
interior.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from chaoscert.grid import (
    Grid,
    LatticeRect,
    RepresentableMvMap,
    RepresentableSet,
)

Cell = tuple[tuple[int, int], ...]
Chain = dict[Cell, Fraction]


class HomologyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Elementary-cube combinatorics
# ---------------------------------------------------------------------------

def cell_dim(cell: Cell) -> int:
    return sum(da for _, da in cell)


def boundary_cell(cell: Cell) -> Chain:
    """Cubical boundary with the tensor-product sign convention."""
    out: Chain = {}
    k = 0  # nondegenerate axes seen so far
    for i, (a, da) in enumerate(cell):
        if da == 0:
            continue
        sign = 1 if k % 2 == 0 else -1
        upper = cell[:i] + (((a + 1), 0),) + cell[i + 1:]
        lower = cell[:i] + ((a, 0),) + cell[i + 1:]
        out[upper] = out.get(upper, 0) + sign
        out[lower] = out.get(lower, 0) - sign
        k += 1
    return {c: v for c, v in out.items() if v}


def faces_of_cube(coords: Sequence[int]) -> Iterable[Cell]:
    """All elementary cells contained in the closed unit cube at coords."""
    per_axis = []
    for a in coords:
        per_axis.append(((a, 1), (a, 0), (a + 1, 0)))
    return (tuple(choice) for choice in itertools.product(*per_axis))


def cells_of_cubeset(coords: Iterable[Sequence[int]]) -> set[Cell]:
    cells: set[Cell] = set()
    for c in coords:
        cells.update(faces_of_cube(tuple(int(x) for x in c)))
    return cells


def cube_coords_of_set(s: RepresentableSet) -> set[tuple[int, ...]]:
    return {tuple(int(x) for x in row) for row in s.grid.decode_many(s.ids)}


def cell_vertices(cell: Cell) -> Iterable[tuple[int, ...]]:
    per_axis = [((a,) if da == 0 else (a, a + 1)) for a, da in cell]
    return itertools.product(*per_axis)


def add_chain(dst: Chain, src: Mapping[Cell, Fraction], scale=1) -> None:
    for c, v in src.items():
        nv = dst.get(c, 0) + scale * v
        if nv:
            dst[c] = nv
        else:
            dst.pop(c, None)


# ---------------------------------------------------------------------------
# Relative pair complex
# ---------------------------------------------------------------------------

class PairComplex:
    """Chain complex of a cubical pair (N, L) over Q."""

    def __init__(self, n_cubes: set[tuple[int, ...]],
                 l_cubes: set[tuple[int, ...]]):
        if not l_cubes <= n_cubes:
            raise HomologyError("L must be a subset of N at cube level")
        n_cells = cells_of_cubeset(n_cubes)
        l_cells = cells_of_cubeset(l_cubes)
        self.basis: set[Cell] = n_cells - l_cells
        self.n_cubes = n_cubes
        self.l_cubes = l_cubes

    def project(self, chain: Mapping[Cell, Fraction]) -> Chain:
        return {c: v for c, v in chain.items() if c in self.basis and v}

    def boundary(self, cell: Cell) -> Chain:
        return self.project(boundary_cell(cell))

    def boundary_chain(self, chain: Mapping[Cell, Fraction]) -> Chain:
        out: Chain = {}
        for c, v in chain.items():
            add_chain(out, self.boundary(c), v)
        return out

    @staticmethod
    def from_sets(N: RepresentableSet, L: RepresentableSet) -> "PairComplex":
        return PairComplex(cube_coords_of_set(N), cube_coords_of_set(L))


# ---------------------------------------------------------------------------
# Reduction with chain equivalences
# ---------------------------------------------------------------------------

class ReducedComplex:
    """Fully reduced complex: zero boundary, surviving cells = homology basis.

    ``trace`` holds one record per elementary reduction, enough to apply
    the chain equivalences to arbitrary chains afterwards.
    """

    def __init__(self, complex_: PairComplex):
        self.pair = complex_
        # mutable boundary / coboundary tables
        bnd: dict[Cell, Chain] = {}
        cob: dict[Cell, dict[Cell, Fraction]] = {}
        for cell in sorted(complex_.basis, key=_cell_key):
            b = complex_.boundary(cell)
            bnd[cell] = b
            for f, coef in b.items():
                cob.setdefault(f, {})[cell] = coef
        for cell in complex_.basis:
            cob.setdefault(cell, cob.get(cell, {}))
        self._reduce(bnd, cob)

    def _reduce(self, bnd, cob):
        trace = []
        alive = set(bnd.keys())
        maxdim = max((cell_dim(c) for c in alive), default=0)
        for q in range(maxdim, 0, -1):
            while True:
                self._collapse_free(q, trace, bnd, cob, alive)
                best = self._find_pivot(q, bnd, cob, alive)
                if best is None:
                    break
                alpha, beta, lam = best
                self._do_reduction(trace, bnd, cob, alive, alpha, beta, lam)
        self.trace = trace
        self.cells = sorted(alive, key=_cell_key)
        self.index = {c: i for i, c in enumerate(self.cells)}

    def _collapse_free(self, q, trace, bnd, cob, alive):
        """Reduce every free pair at dim q (unique unit coface): no fill-in."""
        work = [f for f in bnd if f in alive and cell_dim(f) == q - 1]
        seen = set(work)
        while work:
            f = work.pop()
            seen.discard(f)
            if f not in alive:
                continue
            cofaces = cob.get(f, {})
            if len(cofaces) != 1:
                continue
            (c, coef), = cofaces.items()
            if abs(coef) != 1 or cell_dim(c) != q:
                continue
            dalpha_faces = [g for g in bnd[c] if g != f]
            self._do_reduction(trace, bnd, cob, alive, c, f, coef)
            for g in dalpha_faces:
                if g in alive and g not in seen:
                    work.append(g)
                    seen.add(g)

    @staticmethod
    def _find_pivot(q, bnd, cob, alive):
        best = None
        for c in bnd:
            if c not in alive or cell_dim(c) != q or not bnd[c]:
                continue
            for f, coef in bnd[c].items():
                cost = (len(cob[f]) - 1) * (len(bnd[c]) - 1)
                unit = abs(coef) == 1
                key = (not unit, cost, _cell_key(c), _cell_key(f))
                if best is None or key < best[0]:
                    best = (key, c, f, coef)
            if best is not None and best[0][0] is False and best[0][1] == 0:
                break
        if best is None:
            return None
        return best[1], best[2], best[3]

    @staticmethod
    def _do_reduction(trace, bnd, cob, alive, alpha, beta, lam):
        dalpha = dict(bnd[alpha])
        beta_row = {c: coef for c, coef in cob[beta].items() if c != alpha}
        trace.append((alpha, beta, lam, dalpha, beta_row))
        inv = Fraction(1, 1) / lam
        # update boundaries of the other cofaces of beta
        for c, coef in list(cob[beta].items()):
            if c == alpha:
                continue
            scale = -coef * inv
            b = bnd[c]
            for f, v in dalpha.items():
                nv = b.get(f, 0) + scale * v
                if nv:
                    b[f] = nv
                    cob[f][c] = nv
                else:
                    b.pop(f, None)
                    cob[f].pop(c, None)
        # alpha no longer appears: remove its incidences
        for f in dalpha:
            cob[f].pop(alpha, None)
        # remove alpha from boundaries of higher cells (basis change makes
        # the alpha-coordinate vanish identically)
        for e in list(cob.get(alpha, {}).keys()):
            bnd[e].pop(alpha, None)
        # beta leaves the complex too: drop its incidences on lower cells
        for f in bnd.get(beta, {}):
            cob[f].pop(beta, None)
        cob.pop(alpha, None)
        cob.pop(beta, None)
        bnd.pop(alpha, None)
        bnd.pop(beta, None)
        alive.discard(alpha)
        alive.discard(beta)

    # -- chain equivalences ------------------------------------------------

    def project_chain(self, chain: Mapping[Cell, Fraction]) -> Chain:
        """pi: coordinates of a chain in the reduced basis.

        For a cycle this is exactly its homology class in the surviving
        basis (the reduced boundary vanishes).
        """
        z: Chain = {c: Fraction(v) for c, v in chain.items() if v}
        for alpha, beta, lam, dalpha, _beta_row in self.trace:
            za = z.pop(alpha, None)
            zb = z.pop(beta, None)
            if zb:
                scale = -zb / lam
                for gamma, v in dalpha.items():
                    if gamma == beta:
                        continue
                    nv = z.get(gamma, 0) + scale * v
                    if nv:
                        z[gamma] = nv
                    else:
                        z.pop(gamma, None)
            del za
        return z

    def include_chain(self, chain: Mapping[Cell, Fraction]) -> Chain:
        """iota: a reduced-basis chain as a chain in the original complex."""
        z: Chain = {c: Fraction(v) for c, v in chain.items() if v}
        for alpha, beta, lam, _dalpha, beta_row in reversed(self.trace):
            acc = 0
            for c, coef in beta_row.items():
                v = z.get(c)
                if v:
                    acc += v * coef
            if acc:
                nv = z.get(alpha, 0) - acc / lam
                if nv:
                    z[alpha] = nv
                else:
                    z.pop(alpha, None)
        return z

    # -- ranks -------------------------------------------------------------

    def betti(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.cells:
            out[cell_dim(c)] = out.get(cell_dim(c), 0) + 1
        return out

    def basis_of_dim(self, k: int) -> list[Cell]:
        return [c for c in self.cells if cell_dim(c) == k]


def _cell_key(cell: Cell):
    return (cell_dim(cell), cell)


# ---------------------------------------------------------------------------
# Cell boxes and the box contraction: solving d b = z inside a box
# ---------------------------------------------------------------------------

class CellBox:
    """Inclusive box in vertex coordinates, possibly degenerate per axis.

    A cube rectangle [lo, hi] (cube lattice) becomes the vertex box
    [lo, hi + 1]; intersections of such boxes can be degenerate (a
    shared face), which is still a nonempty acyclic subcomplex.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo: Sequence[int], hi: Sequence[int]):
        if any(a > b for a, b in zip(lo, hi)):
            raise HomologyError("inverted cell box")
        self.lo = tuple(int(a) for a in lo)
        self.hi = tuple(int(b) for b in hi)

    @staticmethod
    def from_cube_rect(rect: LatticeRect) -> "CellBox":
        return CellBox(rect.lo, tuple(b + 1 for b in rect.hi))

    def intersect(self, other: "CellBox") -> "CellBox | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return CellBox(lo, hi)

    def contains_cell(self, cell: Cell) -> bool:
        return all(lo <= a and a + da <= hi
                   for (a, da), lo, hi in zip(cell, self.lo, self.hi))

    def __eq__(self, other):
        return (isinstance(other, CellBox)
                and self.lo == other.lo and self.hi == other.hi)

    def __repr__(self):
        return f"CellBox({self.lo}, {self.hi})"


class BoxContraction:
    """Explicit contraction of the full complex of a cell box onto its
    minimal vertex: H with dH + Hd = id - E."""

    def __init__(self, box: CellBox):
        self.box = box
        self.base = tuple(box.lo)

    def _h_axis(self, axis: int, a: int) -> list[tuple[int, int]]:
        """1D homotopy on a vertex {a}: the edge path from base to a."""
        m = self.base[axis]
        if a >= m:
            return [(j, 1) for j in range(m, a)]
        return [(j, 1) for j in range(a, m)]

    def apply(self, chain: Mapping[Cell, Fraction]) -> Chain:
        out: Chain = {}
        for cell, coef in chain.items():
            add_chain(out, self._apply_cell(cell), coef)
        return out

    def _apply_cell(self, cell: Cell) -> Chain:
        # H = sum_i eps_1 x ... x eps_{i-1} x h_i x id x ... x id
        # term i dies as soon as an earlier axis is an edge (eps kills it),
        # and h itself vanishes on edges, so scan stops at the first edge
        out: Chain = {}
        for i, (a_i, da_i) in enumerate(cell):
            if da_i == 1:
                break
            path = self._h_axis(i, a_i)
            if not path:
                continue
            prefix = tuple((self.base[j], 0) for j in range(i))
            suffix = cell[i + 1:]
            sign = 1 if a_i >= self.base[i] else -1
            for seg in path:
                new_cell = prefix + (seg,) + suffix
                out[new_cell] = out.get(new_cell, 0) + sign
        return {c: v for c, v in out.items() if v}

    def base_projection(self, chain: Mapping[Cell, Fraction]) -> Chain:
        """E: augmentation-style projection onto the base vertex."""
        out: Chain = {}
        base_cell = tuple((b, 0) for b in self.base)
        total = 0
        for cell, coef in chain.items():
            if cell_dim(cell) == 0:
                total += coef
        if total:
            out[base_cell] = total
        return out


def solve_boundary_in_box(box: CellBox,
                          z: Mapping[Cell, Fraction]) -> Chain:
    """A chain b supported in the box with d b = z.

    Valid for cycles z (of any positive degree, or degree 0 with
    vanishing coefficient sum) supported in the box.
    """
    contraction = BoxContraction(box)
    return contraction.apply(z)


# ---------------------------------------------------------------------------
# Acyclic-carrier chain selector for a rectangle-valued multivalued map
# ---------------------------------------------------------------------------

class EmptyCarrier(HomologyError):
    """Adjacent cube values fail to overlap; the enclosure is too tight
    to represent a continuous selector and must be recomputed or the
    grid refined."""

    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


class ChainSelector:
    """Chain map carried by the values of a multivalued cube map.

    The carrier of a cell is the intersection of the rectangle values
    of all domain top cubes containing it (for a top cube, its own
    value).  Intersections of boxes are boxes, possibly degenerate:
    acyclic.  The rule is monotone under the face relation, so a chain
    selector exists, and its induced map on homology is independent of
    the choices made here (asserted by the selector-independence test).
    For genuine enclosures of a continuous map the intersections are
    nonempty because adjacent values share the image of the common
    face; an empty intersection raises EmptyCarrier.
    """

    def __init__(self, F: RepresentableMvMap, vertex_perturbation: int = 0):
        self.F = F
        self.grid = F.src_grid
        self._values: dict[tuple[int, ...], CellBox] = {}
        self._value_rects: dict[tuple[int, ...], LatticeRect] = {}
        for cid in F.values:
            # rectangle hull of the value: acyclic whether or not the
            # stored value is itself a rectangle
            rect = F.value_rect(cid)
            coords = self.grid.decode(cid)
            self._value_rects[coords] = rect
            self._values[coords] = CellBox.from_cube_rect(rect)
        self._phi: dict[Cell, Chain] = {}
        self._carriers: dict[Cell, CellBox] = {}
        # vertex_perturbation switches the canonical vertex choice, used to
        # assert selector independence
        self._perturb = vertex_perturbation

    # -- carriers ----------------------------------------------------------

    def carrier(self, cell: Cell) -> CellBox:
        got = self._carriers.get(cell)
        if got is not None:
            return got
        box = None
        found = False
        for cube in _cubes_containing_cell(cell):
            val = self._values.get(cube)
            if val is None:
                continue
            found = True
            box = val if box is None else box.intersect(val)
            if box is None:
                raise EmptyCarrier(
                    f"carrier of cell {cell} is empty", cell=cell)
        if not found:
            raise HomologyError(f"cell {cell} has no carrier (outside domain)")
        self._carriers[cell] = box
        return box

    # -- the selector ------------------------------------------------------

    def phi(self, cell: Cell) -> Chain:
        got = self._phi.get(cell)
        if got is not None:
            return got
        box = self.carrier(cell)
        if cell_dim(cell) == 0:
            vtx = tuple(box.hi) if self._perturb else tuple(box.lo)
            out: Chain = {tuple((x, 0) for x in vtx): Fraction(1)}
        else:
            z: Chain = {}
            for face, coef in boundary_cell(cell).items():
                add_chain(z, self.phi(face), coef)
            out = solve_boundary_in_box(box, z)
        self._phi[cell] = out
        return out

    def phi_chain(self, chain: Mapping[Cell, Fraction]) -> Chain:
        out: Chain = {}
        for cell, coef in chain.items():
            add_chain(out, self.phi(cell), coef)
        return out


def _cubes_containing_cell(cell: Cell) -> Iterable[tuple[int, ...]]:
    """Top cubes whose closed cube contains the cell."""
    per_axis = [((a,) if da == 1 else (a - 1, a)) for a, da in cell]
    return itertools.product(*per_axis)


def _cubes_with_vertex(v: tuple[int, ...]) -> Iterable[tuple[int, ...]]:
    return itertools.product(*[(a - 1, a) for a in v])


# ---------------------------------------------------------------------------
# Induced map on relative homology
# ---------------------------------------------------------------------------

class ChainMapNotRelative(HomologyError):
    """The selector does not respect the pair; carries offending cubes."""

    def __init__(self, msg, offending_cubes):
        super().__init__(msg)
        self.offending_cubes = offending_cubes


class IndexMapData:
    """Homology of a pair together with the matrices of the induced maps."""

    def __init__(self, betti: dict[int, int],
                 matrices: dict[int, list[list[Fraction]]]):
        self.betti = betti
        self.matrices = matrices

    def cohomology_matrix(self, k: int) -> list[list[Fraction]]:
        """Matrix on H^k: the transpose of the homology matrix."""
        m = self.matrices.get(k)
        if m is None:
            return []
        return [list(row) for row in zip(*m)] if m else []


def relative_homology(N: RepresentableSet, L: RepresentableSet) -> dict[int, int]:
    """Betti numbers of the pair over Q (equal to cohomology ranks)."""
    red = ReducedComplex(PairComplex.from_sets(N, L))
    return red.betti()


def induced_map_on_pair(F: RepresentableMvMap,
                        N: RepresentableSet,
                        L: RepresentableSet,
                        max_degree: int = 2,
                        vertex_perturbation: int = 0,
                        verify_cells: bool = False) -> IndexMapData:
    """Matrices of the index map on H_*(N, L).

    Builds the selector on the cells of N, pushes the pair into the
    enlarged pair (Nbar, Lbar) that absorbs the image overflow, checks
    exactness of the excision inclusion, and composes phi with its
    inverse.  Raises ChainMapNotRelative when the exit condition
    F(L) n N c L fails at cube level (the caller then enlarges L and
    retries); with intersection carriers that cube-level condition
    already forces the chain selector to respect the pair, since every
    exit cell's carrier sits inside the value of an exit cube.  Passing
    verify_cells additionally re-checks the leak and the chain-map
    identity cell by cell, which is quadratic-ish and meant for tests.
    """
    n_cubes = cube_coords_of_set(N)
    l_cubes = cube_coords_of_set(L)
    selector = ChainSelector(F, vertex_perturbation)

    src = PairComplex(n_cubes, l_cubes)
    interior = n_cubes - l_cubes

    # cube-level exit condition: values of L-cubes avoid the interior
    offending: set[tuple[int, ...]] = set()
    for coords in l_cubes:
        rect = selector._value_rects.get(coords)
        if rect is None:
            continue
        for cube in itertools.product(
                *[range(a, b + 1) for a, b in zip(rect.lo, rect.hi)]):
            if cube in interior:
                offending.add(cube)
    if offending:
        raise ChainMapNotRelative(
            "values of the exit set meet the pair interior",
            offending_cubes=sorted(offending))

    # the enlarged pair absorbs the image overflow: N u F(N)-cubes, with
    # everything outside the pair interior declared exit.  For a valid
    # pair only F(L) adds cubes, attached along L, which is what makes
    # the inclusion an isomorphism (checked below).
    image_cubes: set[tuple[int, ...]] = set()
    for coords in n_cubes:
        rect = selector._value_rects.get(coords)
        if rect is None:
            continue
        image_cubes.update(itertools.product(
            *[range(a, b + 1) for a, b in zip(rect.lo, rect.hi)]))
    nbar = n_cubes | image_cubes
    lbar = nbar - interior
    tgt = PairComplex(nbar, lbar)

    # relative chain maps on the source basis
    def phi_rel(cell: Cell) -> Chain:
        return tgt.project(selector.phi(cell))

    def incl_rel(cell: Cell) -> Chain:
        return tgt.project({cell: Fraction(1)})

    if verify_cells:
        all_n_cells = sorted(cells_of_cubeset(n_cubes), key=_cell_key)
        l_cells = cells_of_cubeset(l_cubes)
        for cell in all_n_cells:
            if cell in l_cells and tgt.project(selector.phi(cell)):
                raise ChainMapNotRelative(
                    f"selector image of exit cell {cell} meets the interior",
                    offending_cubes=[])
        for cell in sorted(src.basis, key=_cell_key):
            lhs = tgt.boundary_chain(phi_rel(cell))
            rhs: Chain = {}
            for face, coef in src.boundary(cell).items():
                add_chain(rhs, phi_rel(face), coef)
            if lhs != rhs:
                raise ChainMapNotRelative(
                    f"selector fails to commute with the boundary at {cell}",
                    offending_cubes=[])

    red_src = ReducedComplex(src)
    red_tgt = ReducedComplex(tgt)

    betti = red_src.betti()
    matrices: dict[int, list[list[Fraction]]] = {}
    for k in range(max_degree + 1):
        basis = red_src.basis_of_dim(k)
        tbasis = red_tgt.basis_of_dim(k)
        if not basis:
            matrices[k] = []
            continue
        if len(tbasis) != len(basis):
            raise HomologyError(
                f"excision rank mismatch in degree {k}: "
                f"{len(basis)} vs {len(tbasis)}")
        cols_phi = []
        cols_incl = []
        for cell in basis:
            rep = red_src.include_chain({cell: Fraction(1)})
            img_phi: Chain = {}
            img_incl: Chain = {}
            for c, v in rep.items():
                add_chain(img_phi, phi_rel(c), v)
                add_chain(img_incl, incl_rel(c), v)
            cols_phi.append(_coords(red_tgt, img_phi, tbasis))
            cols_incl.append(_coords(red_tgt, img_incl, tbasis))
        m_phi = [[cols_phi[j][i] for j in range(len(basis))]
                 for i in range(len(tbasis))]
        m_incl = [[cols_incl[j][i] for j in range(len(basis))]
                  for i in range(len(tbasis))]
        inv = mat_inverse(m_incl)
        if inv is None:
            raise HomologyError(
                f"excision inclusion not invertible in degree {k}")
        matrices[k] = mat_mul(inv, m_phi)
    return IndexMapData(betti, matrices)


def _coords(red: ReducedComplex, chain: Chain, basis: list[Cell]):
    z = red.project_chain(chain)
    leftover = {c for c in z if c not in red.index}
    if leftover:
        raise HomologyError("projection left the reduced basis")
    return [Fraction(z.get(c, 0)) for c in basis]


# ---------------------------------------------------------------------------
# Exact rational dense linear algebra (small matrices)
# ---------------------------------------------------------------------------

def mat_mul(a, b):
    n, k = len(a), len(b)
    m = len(b[0]) if b else 0
    out = [[Fraction(0)] * m for _ in range(n)]
    for i in range(n):
        for l in range(k):
            ail = a[i][l]
            if not ail:
                continue
            for j in range(m):
                out[i][j] += ail * b[l][j]
    return out


def mat_inverse(a):
    """Inverse over Q, or None when singular."""
    n = len(a)
    aug = [[Fraction(a[i][j]) for j in range(n)]
           + [Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def mat_rank(a):
    if not a or not a[0]:
        return 0
    rows = [[Fraction(x) for x in row] for row in a]
    rank = 0
    ncols = len(rows[0])
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c]), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        r += 1
        rank += 1
    return rank
