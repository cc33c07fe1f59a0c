"""Piecewise-affine horseshoe benchmark map.

A two-branch Smale horseshoe on the plane, used as the analytically
tractable end-to-end benchmark for the certification machinery.  The
map g acts on the strip M = [-1/2, 5/2] x [-3/2, 6] and is affine on
each of two horizontal slabs::

    g(x, y) = (x/3 + 19/64, 3y - 3/4)     for y <  9/4,
    g(x, y) = (x/3 + 67/64, 3y - 33/4)    for y >= 9/4.

Both branches expand vertically by 3, contract horizontally by 1/3, and
preserve orientation.  The two reference rectangles

    N0 = [0, 2] x [0, 2],       N1 = [0, 2] x [5/2, 9/2]

are each stretched by either branch across the full vertical extent of
both rectangles (the image of either y-range is [-3/4, 21/4], which
overshoots [0, 9/2] on both sides), while the horizontal images
[19/64, 19/64 + 2/3] and [67/64, 67/64 + 2/3] land strictly inside
[0, 2].  The intersection Inv(N0 u N1) is therefore a full geometric
horseshoe: each symbol region carries an index of rank one in degree
one with identity automorphism, and the degree-one automorphism of the
union is conjugate to [[1, 1], [1, 1]] (every transition is realized
with positive crossing degree), whose Leray reduction is the rank-one
multiplication by 2.

All coefficients are dyadic rationals, so cube centers map to exactly
representable points up to one final rounding; the evaluator computes
images in exact rational arithmetic and reports the outward-rounded
rounding gap as its delta.  The sup-norm Lipschitz constant is 3 on
either slab.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import nextafter, inf

from .grid import (
    EvalResult,
    EvaluatorFailure,
    Grid,
    LatticeRect,
    RepresentableMvMap,
    RepresentableSet,
    build_enclosure,
    cover_rect,
)
from .intervals import Interval, IntervalVector

__all__ = [
    "AffineBranch",
    "HorseshoeMap",
    "HorseshoeEvaluator",
    "WORKING_REGION",
    "N0_BOX",
    "N1_BOX",
    "default_map",
    "make_grid",
    "region_set",
    "build_fixture_enclosure",
]


@dataclass(frozen=True)
class AffineBranch:
    """One affine slab of the horseshoe: (x, y) -> (ax*x + bx, ay*y + by)
    for y in [y_lo, y_hi]."""

    y_lo: Fraction
    y_hi: Fraction
    ax: Fraction
    bx: Fraction
    ay: Fraction
    by: Fraction

    def apply(self, x: Fraction, y: Fraction) -> tuple[Fraction, Fraction]:
        return (self.ax * x + self.bx, self.ay * y + self.by)

    def lipschitz(self) -> Fraction:
        return max(abs(self.ax), abs(self.ay))


@dataclass(frozen=True)
class HorseshoeMap:
    """Piecewise-affine map given by a list of disjoint y-slabs."""

    branches: tuple[AffineBranch, ...]

    def branch_at(self, y: Fraction) -> AffineBranch:
        for b in self.branches:
            if b.y_lo <= y <= b.y_hi:
                return b
        raise EvaluatorFailure(f"DOMAIN:no branch contains y={y}")

    def apply_exact(self, x: Fraction, y: Fraction) -> tuple[Fraction, Fraction]:
        return self.branch_at(y).apply(x, y)

    def lipschitz(self) -> float:
        return float(max(b.lipschitz() for b in self.branches))


def default_map() -> HorseshoeMap:
    """The standard two-branch fixture described in the module docstring."""
    return HorseshoeMap(branches=(
        AffineBranch(y_lo=Fraction(-3, 2), y_hi=Fraction(9, 4),
                     ax=Fraction(1, 3), bx=Fraction(19, 64),
                     ay=Fraction(3), by=Fraction(-3, 4)),
        AffineBranch(y_lo=Fraction(9, 4), y_hi=Fraction(6),
                     ax=Fraction(1, 3), bx=Fraction(67, 64),
                     ay=Fraction(3), by=Fraction(-33, 4)),
    ))


class HorseshoeEvaluator:
    """Validated point evaluator for :func:`build_enclosure`.

    Images are computed in exact rational arithmetic and rounded to
    binary64; ``delta`` is an outward-rounded bound on the sup-norm
    rounding gap, so the enclosure radius delta + L*eta is rigorous.
    The object is picklable for multi-process evaluation.
    """

    def __init__(self, hs_map: HorseshoeMap | None = None):
        self.map = hs_map if hs_map is not None else default_map()

    def __call__(self, center: tuple[float, ...], eta: float) -> EvalResult:
        x, y = (Fraction(c) for c in center)
        px, py = self.map.apply_exact(x, y)
        fx, fy = float(px), float(py)
        gap = max(abs(Fraction(fx) - px), abs(Fraction(fy) - py))
        delta = float(gap)
        if Fraction(delta) < gap:
            delta = nextafter(delta, inf)
        return EvalResult(point=(fx, fy), delta=delta,
                          lipschitz=self.map.lipschitz())


# Reference geometry: the working strip and the two symbol rectangles.
WORKING_REGION = ((-0.5, 2.5), (-1.5, 6.0))
N0_BOX = ((0.0, 2.0), (0.0, 2.0))
N1_BOX = ((0.0, 2.0), (2.5, 4.5))


def make_grid(eta: float = 1.0 / 64) -> Grid:
    """Cube grid on the working strip; all region corners must land on
    lattice lines, which holds for eta any power of two down to 1/4."""
    lows = [lo for lo, _ in WORKING_REGION]
    highs = [hi for _, hi in WORKING_REGION]
    return Grid(lows, highs, eta)


def region_rect(box, grid: Grid) -> LatticeRect:
    return cover_rect(IntervalVector([Interval(lo, hi) for lo, hi in box]),
                      grid)


def region_set(box, grid: Grid) -> RepresentableSet:
    """Cubes of one reference rectangle (exact cover; corners on lattice
    lines, so no spill into neighboring cubes)."""
    return region_rect(box, grid).to_set(grid)


def build_fixture_enclosure(grid: Grid,
                            hs_map: HorseshoeMap | None = None,
                            workers: int = 1,
                            ) -> tuple[RepresentableMvMap,
                                       RepresentableSet,
                                       RepresentableSet]:
    """Enclosure of the horseshoe over N0 u N1 on ``grid``.

    Returns ``(F, N0, N1)`` where F is the representable enclosure with
    radius delta + 3*eta around each exactly-evaluated cube center.
    """
    ev = HorseshoeEvaluator(hs_map)
    n0 = region_set(N0_BOX, grid)
    n1 = region_set(N1_BOX, grid)
    src = n0.union(n1)
    F = build_enclosure(ev, ev.map.lipschitz(), src, grid, grid,
                        workers=workers)
    return F, n0, n1
