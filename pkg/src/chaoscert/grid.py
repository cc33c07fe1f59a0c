"""Cube grids, representable sets, and finite multivalued maps.

A grid covers a rectangular working region M with closed cubes of radius
eta in the sup norm; a representable set is a union of such cubes, coded
by natural-number identifiers (row-major lattice packing).  A
representable multivalued map assigns to each source cube a representable
set on the target grid; built from a validated point evaluator it is an
outer enclosure of the underlying continuous map.

Lattice arithmetic (cover, dilation, hulls) is done over exact rationals:
grid corners and cube radii are representable binary64 numbers, so index
computations have no rounding ambiguity.  Closed cubes overlap on faces;
every containment decision is conservative by construction.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from chaoscert.intervals import Interval, IntervalVector, round_up


class GridError(ValueError):
    pass


class OutOfGrid(GridError):
    pass


class EmptySet(GridError):
    pass


class EmptyIntersection(GridError):
    pass


class DomainGap(GridError):
    def __init__(self, msg, stage=None, cube=None):
        super().__init__(msg)
        self.stage = stage
        self.cube = cube


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

class Grid:
    """Uniform cube grid over a box region.

    Cube ``(c_0, .., c_{n-1})`` occupies ``[low_i + c_i*2*eta,
    low_i + (c_i+1)*2*eta]`` per axis; its identifier packs the lattice
    coordinates row-major (axis 0 fastest).
    """

    __slots__ = ("dim", "lows", "counts", "eta", "_flows", "_fsize", "_strides")

    def __init__(self, lows: Sequence[float], highs: Sequence[float], eta: float):
        if eta <= 0:
            raise GridError("eta must be positive")
        self.dim = len(lows)
        if len(highs) != self.dim:
            raise GridError("lows/highs length mismatch")
        self.eta = float(eta)
        self._fsize = 2 * Fraction(self.eta)
        self.lows = tuple(float(x) for x in lows)
        self._flows = tuple(Fraction(x) for x in self.lows)
        counts = []
        for lo, hi in zip(self.lows, highs):
            if hi <= lo:
                raise GridError("degenerate region")
            n = (Fraction(float(hi)) - Fraction(lo)) / self._fsize
            counts.append(int(-(-n.numerator // n.denominator)))  # ceil
        self.counts = tuple(counts)
        strides = [1]
        for c in self.counts[:-1]:
            strides.append(strides[-1] * c)
        self._strides = tuple(strides)

    # -- coding -----------------------------------------------------------

    @property
    def ncubes(self) -> int:
        n = 1
        for c in self.counts:
            n *= c
        return n

    def encode(self, coords: Sequence[int]) -> int:
        cid = 0
        for c, n, s in zip(coords, self.counts, self._strides):
            if not 0 <= c < n:
                raise OutOfGrid(f"lattice coordinate {coords} outside grid")
            cid += c * s
        return cid

    def decode(self, cid: int) -> tuple[int, ...]:
        if not 0 <= cid < self.ncubes:
            raise OutOfGrid(f"identifier {cid} invalid")
        coords = []
        for n in self.counts:
            coords.append(cid % n)
            cid //= n
        return tuple(coords)

    def decode_many(self, ids: np.ndarray) -> np.ndarray:
        """Vectorized decode: (len(ids), dim) int64 lattice coordinates."""
        out = np.empty((len(ids), self.dim), dtype=np.int64)
        rem = np.asarray(ids, dtype=np.int64).copy()
        for i, n in enumerate(self.counts):
            out[:, i] = rem % n
            rem //= n
        return out

    def encode_many(self, coords: np.ndarray) -> np.ndarray:
        cid = np.zeros(len(coords), dtype=np.int64)
        for i, s in enumerate(self._strides):
            cid += coords[:, i] * s
        return cid

    # -- geometry ---------------------------------------------------------

    def cube_center(self, cid: int) -> tuple[float, ...]:
        coords = self.decode(cid)
        return tuple(float(flo + (2 * c + 1) * Fraction(self.eta))
                     for flo, c in zip(self._flows, coords))

    def cube_box(self, cid: int) -> IntervalVector:
        coords = self.decode(cid)
        return IntervalVector([
            Interval(float(flo + c * self._fsize), float(flo + (c + 1) * self._fsize))
            for flo, c in zip(self._flows, coords)])

    def region(self) -> IntervalVector:
        return IntervalVector([
            Interval(float(flo), float(flo + n * self._fsize))
            for flo, n in zip(self._flows, self.counts)])

    def index_range(self, axis: int, lo: float, hi: float) -> tuple[int, int]:
        """Inclusive lattice range of cubes needed to cover [lo, hi] on axis.

        Endpoints landing exactly on a cube boundary do not pull in the
        neighboring cube (closed cubes already contain their faces).
        """
        flo = self._flows[axis]
        qlo = (Fraction(float(lo)) - flo) / self._fsize
        qhi = (Fraction(float(hi)) - flo) / self._fsize
        ilo = qlo.numerator // qlo.denominator  # floor
        ihi = -(-qhi.numerator // qhi.denominator) - 1  # ceil - 1
        if ilo == self.counts[axis] and qlo == ilo:
            ilo -= 1  # degenerate range on the top face of the region
        ihi = max(ihi, ilo)
        if ilo < 0 or ihi >= self.counts[axis]:
            raise OutOfGrid(
                f"range [{lo}, {hi}] on axis {axis} exits the working region")
        return ilo, ihi

    def mirror_coord(self, axis: int, c: int) -> int:
        """Lattice reflection about coordinate 0 on an axis (symmetry use).

        Requires the grid to be symmetric about 0 on that axis; the cube
        [a, b] maps to [-b, -a].
        """
        flo = self._flows[axis]
        m = (-flo - (c + 1) * self._fsize - flo) / self._fsize
        if m.denominator != 1 or not 0 <= m <= self.counts[axis] - 1:
            raise GridError(f"grid not mirror-symmetric on axis {axis}")
        return int(m)

    # -- identity / serialization -----------------------------------------

    def spec(self) -> dict:
        return {"lows": list(self.lows),
                "highs": [float(flo + n * self._fsize)
                          for flo, n in zip(self._flows, self.counts)],
                "eta": self.eta}

    @staticmethod
    def from_spec(d: dict) -> "Grid":
        return Grid(d["lows"], d["highs"], d["eta"])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Grid) and self.lows == other.lows
                and self.counts == other.counts and self.eta == other.eta)

    def __hash__(self):
        return hash((self.lows, self.counts, self.eta))

    def __repr__(self):
        return f"Grid(lows={self.lows}, counts={self.counts}, eta={self.eta})"


# ---------------------------------------------------------------------------
# Representable sets
# ---------------------------------------------------------------------------

class RepresentableSet:
    """Finite union of closed grid cubes, stored as sorted identifiers."""

    __slots__ = ("grid", "ids")

    def __init__(self, grid: Grid, ids: Iterable[int]):
        self.grid = grid
        arr = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray)
                                   else ids, dtype=np.int64))
        if len(arr) and (arr[0] < 0 or arr[-1] >= grid.ncubes):
            raise OutOfGrid("identifier outside grid")
        self.ids = arr

    def __len__(self):
        return len(self.ids)

    def __contains__(self, cid: int) -> bool:
        i = np.searchsorted(self.ids, cid)
        return i < len(self.ids) and self.ids[i] == cid

    def __iter__(self):
        return iter(int(i) for i in self.ids)

    def __eq__(self, other):
        return (isinstance(other, RepresentableSet) and self.grid == other.grid
                and np.array_equal(self.ids, other.ids))

    def __repr__(self):
        return f"RepresentableSet({len(self.ids)} cubes)"

    def _same_grid(self, other: "RepresentableSet"):
        if self.grid != other.grid:
            raise GridError("mixed grids")

    def union(self, other: "RepresentableSet") -> "RepresentableSet":
        self._same_grid(other)
        return RepresentableSet(self.grid, np.union1d(self.ids, other.ids))

    def intersect(self, other: "RepresentableSet") -> "RepresentableSet":
        self._same_grid(other)
        return RepresentableSet(self.grid, np.intersect1d(self.ids, other.ids))

    def difference(self, other: "RepresentableSet") -> "RepresentableSet":
        self._same_grid(other)
        return RepresentableSet(self.grid, np.setdiff1d(self.ids, other.ids))

    def issubset(self, other: "RepresentableSet") -> bool:
        self._same_grid(other)
        return len(np.setdiff1d(self.ids, other.ids)) == 0

    def bounding_rect(self) -> "LatticeRect":
        if not len(self.ids):
            raise EmptySet("empty representable set has no hull")
        coords = self.grid.decode_many(self.ids)
        return LatticeRect(tuple(coords.min(axis=0)), tuple(coords.max(axis=0)))

    def point_box(self) -> IntervalVector:
        """Box hull of the underlying point set."""
        r = self.bounding_rect()
        return r.point_box(self.grid)

    def contains_point(self, p: Sequence[float]) -> bool:
        """Conservative membership: is p in some cube of the set?

        Points on shared faces belong to every incident cube, so all
        incident cubes are checked.
        """
        ranges = []
        for ax, x in enumerate(p):
            try:
                ranges.append(self.grid.index_range(ax, x, x))
            except OutOfGrid:
                return False
        # a point on a boundary is in up to 2 cubes per axis
        fs = self.grid._fsize
        cands_per_axis = []
        for ax, (ilo, ihi) in enumerate(ranges):
            cs = set(range(ilo, ihi + 1))
            q = (Fraction(float(p[ax])) - self.grid._flows[ax]) / fs
            if q.denominator == 1:  # exactly on a boundary
                if q > 0:
                    cs.add(int(q) - 1)
                if q < self.grid.counts[ax]:
                    cs.add(int(q))
            cands_per_axis.append(sorted(c for c in cs
                                         if 0 <= c < self.grid.counts[ax]))
        def rec(ax, coords):
            if ax == self.grid.dim:
                return self.grid.encode(coords) in self
            return any(rec(ax + 1, coords + [c]) for c in cands_per_axis[ax])
        return rec(0, [])


@dataclass(frozen=True)
class LatticeRect:
    """Axis-aligned rectangle of cubes, inclusive lattice bounds."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise GridError("inverted lattice rectangle")

    @property
    def dim(self):
        return len(self.lo)

    def ncubes(self) -> int:
        n = 1
        for a, b in zip(self.lo, self.hi):
            n *= b - a + 1
        return n

    def ids(self, grid: Grid) -> np.ndarray:
        for a, b, n in zip(self.lo, self.hi, grid.counts):
            if a < 0 or b >= n:
                raise OutOfGrid(f"rectangle {self.lo}..{self.hi} escapes grid")
        axes = [np.arange(a, b + 1, dtype=np.int64)
                for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        return np.sort(grid.encode_many(coords))

    def to_set(self, grid: Grid) -> RepresentableSet:
        return RepresentableSet(grid, self.ids(grid))

    def point_box(self, grid: Grid) -> IntervalVector:
        fs = grid._fsize
        return IntervalVector([
            Interval(float(flo + a * fs), float(flo + (b + 1) * fs))
            for flo, a, b in zip(grid._flows, self.lo, self.hi)])

    def extent_cubes(self) -> int:
        return max(b - a + 1 for a, b in zip(self.lo, self.hi))

    def contains_coords(self, coords: Sequence[int]) -> bool:
        return all(a <= c <= b for a, c, b in zip(self.lo, coords, self.hi))


# ---------------------------------------------------------------------------
# Set-level operations
# ---------------------------------------------------------------------------

def cover(region: IntervalVector, grid: Grid) -> RepresentableSet:
    """Minimal set of cubes whose union contains the box region."""
    if region.dim != grid.dim:
        raise GridError("dimension mismatch")
    rect = cover_rect(region, grid)
    return rect.to_set(grid)


def cover_rect(region: IntervalVector, grid: Grid) -> LatticeRect:
    los, his = [], []
    for ax, c in enumerate(region.components):
        ilo, ihi = grid.index_range(ax, c.lo, c.hi)
        los.append(ilo)
        his.append(ihi)
    return LatticeRect(tuple(los), tuple(his))


def convex_hull_representable(s: RepresentableSet) -> RepresentableSet:
    """Smallest lattice rectangle of cubes containing the set."""
    return s.bounding_rect().to_set(s.grid)


def dilate(s: RepresentableSet, r: float) -> RepresentableSet:
    """Representable superset of the closed sup-norm r-neighborhood of |s|.

    Includes every cube whose closed cube meets the closed neighborhood:
    lattice offset k = floor(r / (2 eta) + 1) rings (r > 0); r = 0 returns
    s unchanged.
    """
    if r < 0:
        raise GridError("negative dilation radius")
    if r == 0 or not len(s.ids):
        return RepresentableSet(s.grid, s.ids)
    g = s.grid
    q = Fraction(float(r)) / g._fsize + 1
    k = q.numerator // q.denominator
    coords = g.decode_many(s.ids)
    offsets = np.arange(-k, k + 1, dtype=np.int64)
    mesh = np.meshgrid(*([offsets] * g.dim), indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    allc = (coords[:, None, :] + offs[None, :, :]).reshape(-1, g.dim)
    for ax in range(g.dim):
        bad = (allc[:, ax] < 0) | (allc[:, ax] >= g.counts[ax])
        if bad.any():
            raise OutOfGrid("dilation escapes the working region")
    return RepresentableSet(g, np.unique(g.encode_many(allc)))


# ---------------------------------------------------------------------------
# Representable multivalued maps
# ---------------------------------------------------------------------------

class RepresentableMvMap:
    """Finite table cube-id -> representable set on the target grid.

    Values are lattice rectangles when built by the enclosure
    constructor (the convexity/admissibility hook) and plain id arrays
    after composition.  ``failed`` records source cubes whose validated
    image could not be computed (escape, suspected tangency); any
    neighborhood containing such a cube fails verification.
    """

    def __init__(self, src_grid: Grid, dst_grid: Grid):
        self.src_grid = src_grid
        self.dst_grid = dst_grid
        self.values: dict[int, LatticeRect | np.ndarray] = {}
        self.failed: dict[int, str] = {}
        self.meta: dict = {}

    # -- population -------------------------------------------------------

    def set_rect(self, cid: int, rect: LatticeRect):
        self.values[cid] = rect

    def set_ids(self, cid: int, ids: np.ndarray):
        if len(ids) == 0:
            raise GridError("multivalued map values must be nonempty")
        self.values[cid] = np.unique(np.asarray(ids, dtype=np.int64))

    def mark_failed(self, cid: int, reason: str):
        self.failed[cid] = reason

    # -- queries ----------------------------------------------------------

    def domain(self) -> RepresentableSet:
        return RepresentableSet(self.src_grid, np.fromiter(
            self.values.keys(), dtype=np.int64, count=len(self.values)))

    def value_ids(self, cid: int) -> np.ndarray:
        v = self.values.get(cid)
        if v is None:
            raise DomainGap(f"cube {cid} outside computed domain", cube=cid)
        if isinstance(v, LatticeRect):
            return v.ids(self.dst_grid)
        return v

    def value_set(self, cid: int) -> RepresentableSet:
        return RepresentableSet(self.dst_grid, self.value_ids(cid))

    def value_rect(self, cid: int) -> LatticeRect:
        v = self.values.get(cid)
        if v is None:
            raise DomainGap(f"cube {cid} outside computed domain", cube=cid)
        if isinstance(v, LatticeRect):
            return v
        coords = self.dst_grid.decode_many(v)
        return LatticeRect(tuple(coords.min(axis=0)), tuple(coords.max(axis=0)))

    def is_rect_valued(self, cid: int) -> bool:
        return isinstance(self.values.get(cid), LatticeRect)

    def value_diameter(self, cid: int) -> float:
        """Upper bound on the sup-norm diameter of the value's point set."""
        rect = self.value_rect(cid)
        ext = rect.extent_cubes()
        return round_up(ext * float(self.dst_grid._fsize))

    def convexify(self) -> "RepresentableMvMap":
        """Replace every value by its lattice-rectangle hull."""
        out = RepresentableMvMap(self.src_grid, self.dst_grid)
        out.failed = dict(self.failed)
        out.meta = dict(self.meta)
        for cid in self.values:
            out.set_rect(cid, self.value_rect(cid))
        return out

    def __eq__(self, other):
        if not (isinstance(other, RepresentableMvMap)
                and self.src_grid == other.src_grid
                and self.dst_grid == other.dst_grid
                and set(self.values) == set(other.values)
                and self.failed == other.failed):
            return False
        return all(np.array_equal(self.value_ids(c), other.value_ids(c))
                   for c in self.values)

    def __repr__(self):
        return (f"RepresentableMvMap({len(self.values)} cubes, "
                f"{len(self.failed)} failed)")


# ---------------------------------------------------------------------------
# Enclosure construction (the B(f0(d), delta + L eta) recipe)
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    """Validated image of one cube center.

    ``point`` is the computed image f0(d), ``delta`` a rigorous bound on
    the distance to the exact image of the center, and ``lipschitz`` a
    rigorous Lipschitz bound for the underlying map over the source cube
    (falls back to the constructor-wide bound when None).
    """

    point: tuple[float, ...]
    delta: float
    lipschitz: float | None = None
    stats: dict = field(default_factory=dict)


class EvaluatorFailure(Exception):
    """Raised by evaluators for cubes whose image cannot be validated."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def enclosure_value(point: Sequence[float], radius: float,
                    dst_grid: Grid) -> LatticeRect:
    """Smallest convex representable set containing B(point, radius)."""
    box = IntervalVector([Interval.point(x).inflate(radius) for x in point])
    return cover_rect(box, dst_grid)


def build_enclosure(evaluator: Callable[[tuple[float, ...], float], EvalResult],
                    lipschitz_bound: float | None,
                    src: RepresentableSet,
                    src_grid: Grid,
                    dst_grid: Grid,
                    workers: int = 1) -> RepresentableMvMap:
    """Outer enclosure of a validated point map as a representable mv-map.

    For each source cube with center d the value is the smallest lattice
    rectangle covering ``B(f0(d), delta(d) + L*eta)``; by the Lipschitz
    extension argument the exact image of every point of the cube lies in
    the assigned value.
    """
    if src.grid != src_grid:
        raise GridError("source set not on source grid")
    out = RepresentableMvMap(src_grid, dst_grid)
    eta = src_grid.eta
    ids = [int(i) for i in src.ids]
    if workers > 1:
        rows = _parallel_eval(evaluator, ids, src_grid, workers)
    else:
        rows = [(cid, _eval_one(evaluator, src_grid, cid)) for cid in ids]
    for cid, res in rows:
        if isinstance(res, str):
            out.mark_failed(cid, res)
            continue
        L = res.lipschitz if res.lipschitz is not None else lipschitz_bound
        if L is None:
            raise GridError("no Lipschitz bound available for enclosure")
        rad = (Interval.point(res.delta) + Interval.point(L) * eta).hi
        try:
            rect = enclosure_value(res.point, rad, dst_grid)
        except OutOfGrid:
            out.mark_failed(cid, "ESCAPED:image-left-working-region")
            continue
        out.set_rect(cid, rect)
    return out


def _eval_one(evaluator, grid, cid):
    try:
        return evaluator(grid.cube_center(cid), grid.eta)
    except EvaluatorFailure as e:
        return e.reason


def _parallel_eval(evaluator, ids, grid, workers):
    from concurrent.futures import ProcessPoolExecutor
    chunks = [ids[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_eval_chunk, evaluator, grid, ch) for ch in chunks]
        rows = [row for f in futs for row in f.result()]
    rows.sort(key=lambda r: r[0])  # deterministic regardless of scheduling
    return rows


def _eval_chunk(evaluator, grid, ids):
    return [(cid, _eval_one(evaluator, grid, cid)) for cid in ids]


# ---------------------------------------------------------------------------
# Upper / lower extensions, composition, diameter
# ---------------------------------------------------------------------------

def _neighbor_ids(grid: Grid, cid: int) -> list[int]:
    coords = grid.decode(cid)
    out = []
    def rec(ax, cur):
        if ax == grid.dim:
            out.append(grid.encode(tuple(cur)))
            return
        for d in (-1, 0, 1):
            c = coords[ax] + d
            if 0 <= c < grid.counts[ax]:
                rec(ax + 1, cur + [c])
    rec(0, [])
    return out


def upper_map(F: RepresentableMvMap) -> RepresentableMvMap:
    """Per-cube union over the cube and its lattice neighbors (F^u)."""
    out = RepresentableMvMap(F.src_grid, F.dst_grid)
    out.failed = dict(F.failed)
    for cid in F.values:
        pieces = [F.value_ids(n) for n in _neighbor_ids(F.src_grid, cid)
                  if n in F.values]
        out.set_ids(cid, np.concatenate(pieces))
    return out


def lower_map(F: RepresentableMvMap) -> RepresentableMvMap:
    """Per-cube intersection over the cube and its neighbors (F^l).

    The result is re-hulled to a lattice rectangle (the lower extension
    is convex valued); raises EmptyIntersection when neighbor values are
    disjoint, signalling that the grid is too coarse.
    """
    out = RepresentableMvMap(F.src_grid, F.dst_grid)
    out.failed = dict(F.failed)
    for cid in F.values:
        acc = None
        for n in _neighbor_ids(F.src_grid, cid):
            if n not in F.values:
                continue  # the intersection ranges over domain points only
            ids = F.value_ids(n)
            acc = ids if acc is None else np.intersect1d(acc, ids)
        if acc is None or len(acc) == 0:
            raise EmptyIntersection(
                f"neighbor values of cube {cid} have empty intersection")
        coords = F.dst_grid.decode_many(acc)
        out.set_rect(cid, LatticeRect(tuple(coords.min(axis=0)),
                                      tuple(coords.max(axis=0))))
    return out


def compose(maps: Sequence[RepresentableMvMap]) -> RepresentableMvMap:
    """Set-valued composition; the union is kept exact as an id list."""
    if not maps:
        raise GridError("empty composition")
    for i in range(len(maps) - 1):
        if maps[i].dst_grid != maps[i + 1].src_grid:
            raise GridError(f"grid mismatch between stages {i} and {i+1}")
    out = RepresentableMvMap(maps[0].src_grid, maps[-1].dst_grid)
    for m in maps:
        for cid, reason in m.failed.items():
            out.meta.setdefault("stage_failures", []).append((cid, reason))
    for cid in maps[0].values:
        cur = maps[0].value_ids(cid)
        hit_failure = None
        for stage in range(1, len(maps)):
            m = maps[stage]
            pieces = []
            for mid in cur:
                imid = int(mid)
                if imid in m.failed:
                    hit_failure = f"stage {stage}: {m.failed[imid]}"
                    break
                if imid not in m.values:
                    raise DomainGap(
                        f"stage {stage} lacks value for cube {imid} "
                        f"(reached from source cube {cid})",
                        stage=stage, cube=imid)
                pieces.append(m.value_ids(imid))
            if hit_failure:
                break
            cur = np.unique(np.concatenate(pieces))
        if hit_failure:
            out.mark_failed(cid, hit_failure)
        else:
            out.set_ids(cid, cur)
    out.failed.update(maps[0].failed)
    return out


def diam_over(F: RepresentableMvMap, N: RepresentableSet) -> float:
    """Upper bound on sup-norm value diameters over N."""
    if N.grid != F.src_grid:
        raise GridError("N not on the source grid")
    worst = 0.0
    for cid in N.ids:
        worst = max(worst, F.value_diameter(int(cid)))
    return worst


# ---------------------------------------------------------------------------
# Persistence: binary map files and a JSON mirror
# ---------------------------------------------------------------------------

_MAGIC = b"CCMVMAP1"


def save_map(F: RepresentableMvMap, path: str) -> None:
    """Little-endian binary dump with a trailing sha256 whole-file checksum."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    for g in (F.src_grid, F.dst_grid):
        buf.write(struct.pack("<i", g.dim))
        buf.write(struct.pack(f"<{g.dim}d", *g.lows))
        buf.write(struct.pack(f"<{g.dim}q", *g.counts))
        buf.write(struct.pack("<d", g.eta))
    buf.write(struct.pack("<q", len(F.values)))
    for cid in sorted(F.values):
        v = F.values[cid]
        if isinstance(v, LatticeRect):
            buf.write(struct.pack("<qB", cid, 0))
            buf.write(struct.pack(f"<{2*len(v.lo)}q", *(v.lo + v.hi)))
        else:
            buf.write(struct.pack("<qB", cid, 1))
            buf.write(struct.pack("<q", len(v)))
            buf.write(v.astype("<i8").tobytes())
    buf.write(struct.pack("<q", len(F.failed)))
    for cid in sorted(F.failed):
        reason = F.failed[cid].encode()
        buf.write(struct.pack("<qH", cid, len(reason)))
        buf.write(reason)
    body = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def load_map(path: str) -> RepresentableMvMap:
    with open(path, "rb") as fh:
        data = fh.read()
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise GridError(f"checksum mismatch in {path}")
    buf = io.BytesIO(body)
    if buf.read(8) != _MAGIC:
        raise GridError(f"{path} is not a map file")
    grids = []
    for _ in range(2):
        (dim,) = struct.unpack("<i", buf.read(4))
        lows = struct.unpack(f"<{dim}d", buf.read(8 * dim))
        counts = struct.unpack(f"<{dim}q", buf.read(8 * dim))
        (eta,) = struct.unpack("<d", buf.read(8))
        fs = 2 * Fraction(eta)
        highs = [float(Fraction(lo) + n * fs) for lo, n in zip(lows, counts)]
        grids.append(Grid(lows, highs, eta))
    F = RepresentableMvMap(grids[0], grids[1])
    (n,) = struct.unpack("<q", buf.read(8))
    dim = grids[1].dim
    for _ in range(n):
        cid, kind = struct.unpack("<qB", buf.read(9))
        if kind == 0:
            vals = struct.unpack(f"<{2*dim}q", buf.read(16 * dim))
            F.set_rect(cid, LatticeRect(tuple(vals[:dim]), tuple(vals[dim:])))
        else:
            (m,) = struct.unpack("<q", buf.read(8))
            F.set_ids(cid, np.frombuffer(buf.read(8 * m), dtype="<i8"))
    (nf,) = struct.unpack("<q", buf.read(8))
    for _ in range(nf):
        cid, ln = struct.unpack("<qH", buf.read(10))
        F.failed[cid] = buf.read(ln).decode()
    return F


def map_to_json(F: RepresentableMvMap) -> dict:
    """Text mirror for small maps and for the certificate."""
    vals = {}
    for cid in sorted(F.values):
        v = F.values[cid]
        if isinstance(v, LatticeRect):
            vals[str(cid)] = {"rect": [list(v.lo), list(v.hi)]}
        else:
            vals[str(cid)] = {"ids": [int(x) for x in v]}
    return {"src_grid": F.src_grid.spec(), "dst_grid": F.dst_grid.spec(),
            "values": vals, "failed": {str(k): v for k, v in F.failed.items()}}


def map_from_json(d: dict) -> RepresentableMvMap:
    F = RepresentableMvMap(Grid.from_spec(d["src_grid"]),
                           Grid.from_spec(d["dst_grid"]))
    for k, v in d["values"].items():
        if "rect" in v:
            F.set_rect(int(k), LatticeRect(tuple(v["rect"][0]),
                                           tuple(v["rect"][1])))
        else:
            F.set_ids(int(k), np.asarray(v["ids"], dtype=np.int64))
    for k, v in d.get("failed", {}).items():
        F.failed[int(k)] = v
    return F
