"""Directed-rounding interval scalars and boxes in sup-norm geometry.

Every rigorous claim made by the higher layers (validated integration,
enclosure construction, isolation margins) reduces to the soundness of the
operations in this module: the interval result of an operation always
contains the exact real result applied to any members of the operands.

Outward rounding is realized by a swappable policy.  The portable default
widens each round-to-nearest result by one ulp on each side (a nearest
result is within half an ulp of the exact value, so a single ``nextafter``
step in each direction is sound).  When the compiled kernel extension is
available, a hardware policy using ``fesetround`` is offered as well; the
two are tested against each other.

Intervals are immutable; degenerate (point) intervals are the canonical
embedding of representable numbers.
"""

from __future__ import annotations

import math
import struct
from typing import Iterable, Sequence

_INF = math.inf


class IntervalError(ValueError):
    pass


class DivisionByZeroInterval(IntervalError):
    pass


class DimensionMismatch(IntervalError):
    pass


# ---------------------------------------------------------------------------
# Rounding policies
# ---------------------------------------------------------------------------

class UlpWideningPolicy:
    """Post-hoc outward widening by one ulp per endpoint.

    Portable and auditable: no floating-point environment state is touched.
    """

    name = "ulp"

    @staticmethod
    def down(x: float) -> float:
        return math.nextafter(x, -_INF)

    @staticmethod
    def up(x: float) -> float:
        return math.nextafter(x, _INF)


class HardwarePolicy:
    """Directed rounding via the C99 floating-point environment.

    Only available when the compiled kernel extension was built; arithmetic
    is delegated to it so that the rounding mode changes stay inside native
    code (each call sets and restores the mode).
    """

    name = "hardware"

    def __init__(self, core):
        self._core = core

    def down(self, x: float) -> float:  # identity: exact endpoints stay exact
        return x

    def up(self, x: float) -> float:
        return x

    def add(self, alo, ahi, blo, bhi):
        return self._core.iadd(alo, ahi, blo, bhi)

    def sub(self, alo, ahi, blo, bhi):
        return self._core.isub(alo, ahi, blo, bhi)

    def mul(self, alo, ahi, blo, bhi):
        return self._core.imul(alo, ahi, blo, bhi)

    def div(self, alo, ahi, blo, bhi):
        return self._core.idiv(alo, ahi, blo, bhi)


_ULP = UlpWideningPolicy()
_policy = _ULP


def set_rounding_policy(name: str) -> None:
    """Select the outward-rounding realization: ``"ulp"`` or ``"hardware"``."""
    global _policy
    if name == "ulp":
        _policy = _ULP
        return
    if name == "hardware":
        from chaoscert._kernels import compiled_core
        core = compiled_core()
        if core is None:
            raise IntervalError("hardware rounding requires the compiled kernel")
        _policy = HardwarePolicy(core)
        return
    raise IntervalError(f"unknown rounding policy {name!r}")


def rounding_policy_name() -> str:
    return _policy.name


def round_down(x: float) -> float:
    """One ulp below x (conservative lower bound after a nearest rounding)."""
    return math.nextafter(x, -_INF)


def round_up(x: float) -> float:
    return math.nextafter(x, _INF)


# ---------------------------------------------------------------------------
# Interval scalars
# ---------------------------------------------------------------------------

class Interval:
    """A closed interval [lo, hi] of binary64 numbers; lo <= hi, no NaN."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: float, hi: float | None = None):
        if hi is None:
            hi = lo
        lo = float(lo)
        hi = float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise IntervalError("NaN endpoint")
        if lo > hi:
            raise IntervalError(f"inverted interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point(x: float) -> "Interval":
        return Interval(x, x)

    @staticmethod
    def around(mid: float, rad: float) -> "Interval":
        if rad < 0:
            raise IntervalError("negative radius")
        p = _policy
        return Interval(p.down(mid - rad), p.up(mid + rad))

    # -- predicates --------------------------------------------------------

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def is_point(self) -> bool:
        return self.lo == self.hi

    # -- geometry ----------------------------------------------------------

    @property
    def width(self) -> float:
        return _policy.up(self.hi - self.lo)

    @property
    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return min(max(m, self.lo), self.hi)

    @property
    def rad(self) -> float:
        """Upper bound on the radius about :attr:`mid`."""
        m = self.mid
        return max(_policy.up(m - self.lo), _policy.up(self.hi - m))

    @property
    def mag(self) -> float:
        """sup |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    @property
    def mig(self) -> float:
        """inf |x| over the interval (0 if it contains 0)."""
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    # -- arithmetic --------------------------------------------------------

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other) -> "Interval":
        other = _coerce(other)
        p = _policy
        if isinstance(p, HardwarePolicy):
            return Interval(*p.add(self.lo, self.hi, other.lo, other.hi))
        return Interval(p.down(self.lo + other.lo), p.up(self.hi + other.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        other = _coerce(other)
        p = _policy
        if isinstance(p, HardwarePolicy):
            return Interval(*p.sub(self.lo, self.hi, other.lo, other.hi))
        return Interval(p.down(self.lo - other.hi), p.up(self.hi - other.lo))

    def __rsub__(self, other) -> "Interval":
        return _coerce(other) - self

    def __mul__(self, other) -> "Interval":
        other = _coerce(other)
        p = _policy
        if isinstance(p, HardwarePolicy):
            return Interval(*p.mul(self.lo, self.hi, other.lo, other.hi))
        cands = (self.lo * other.lo, self.lo * other.hi,
                 self.hi * other.lo, self.hi * other.hi)
        return Interval(p.down(min(cands)), p.up(max(cands)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        other = _coerce(other)
        if other.lo <= 0.0 <= other.hi:
            raise DivisionByZeroInterval(f"divisor {other} contains 0")
        p = _policy
        if isinstance(p, HardwarePolicy):
            return Interval(*p.div(self.lo, self.hi, other.lo, other.hi))
        cands = (self.lo / other.lo, self.lo / other.hi,
                 self.hi / other.lo, self.hi / other.hi)
        return Interval(p.down(min(cands)), p.up(max(cands)))

    def __rtruediv__(self, other) -> "Interval":
        return _coerce(other) / self

    def sqr(self) -> "Interval":
        p = _policy
        if self.lo >= 0:
            return Interval(p.down(self.lo * self.lo), p.up(self.hi * self.hi))
        if self.hi <= 0:
            return Interval(p.down(self.hi * self.hi), p.up(self.lo * self.lo))
        m = max(-self.lo, self.hi)
        return Interval(0.0, p.up(m * m))

    # -- set operations ----------------------------------------------------

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def intersect(self, other: "Interval") -> "Interval":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise IntervalError("empty intersection")
        return Interval(lo, hi)

    def inflate(self, r: float) -> "Interval":
        if r < 0:
            raise IntervalError("negative inflation")
        p = _policy
        return Interval(p.down(self.lo - r), p.up(self.hi + r))

    # -- misc --------------------------------------------------------------

    def __eq__(self, other) -> bool:
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self) -> int:
        return hash((self.lo, self.hi))

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"

    def to_hex(self) -> list[str]:
        """Exact binary64 endpoints in hex-float text form (certificate use)."""
        return [float.hex(self.lo), float.hex(self.hi)]

    @staticmethod
    def from_hex(pair: Sequence[str]) -> "Interval":
        return Interval(float.fromhex(pair[0]), float.fromhex(pair[1]))


def _coerce(x) -> Interval:
    if isinstance(x, Interval):
        return x
    if isinstance(x, (int, float)):
        return Interval(float(x), float(x))
    raise TypeError(f"cannot interpret {x!r} as an interval")


# ---------------------------------------------------------------------------
# Rigorous exponential
# ---------------------------------------------------------------------------

# ln 2 to 1 ulp either side (0x1.62e42fefa39efp-1 is the nearest double).
_LN2 = Interval(math.nextafter(0.6931471805599453, 0.0),
                math.nextafter(0.6931471805599453, 1.0))
_EXP_TERMS = 16


def _exp_point_enclosure(t: float) -> Interval:
    """Enclosure of e^t via argument reduction t = k ln2 + r, |r| <= ~0.35."""
    if t > 700.0:
        raise IntervalError("exp argument too large for binary64")
    if t < -700.0:
        # e^t is in (0, 1e-300); a crude but sound enclosure suffices.
        return Interval(0.0, 1e-300)
    k = int(round(t / 0.6931471805599453))
    r = Interval.point(t) - _LN2 * k
    # Taylor with remainder: e^r = sum_{i<=N} r^i/i! + R, |R| <= |r|^{N+1}/(N+1)! * e^{|r|}
    acc = Interval(1.0, 1.0)
    term = Interval(1.0, 1.0)
    for i in range(1, _EXP_TERMS + 1):
        term = term * r / i
        acc = acc + term
    rm = r.mag
    rem = (rm ** (_EXP_TERMS + 1)) / math.factorial(_EXP_TERMS + 1) * 2.0
    rem = round_up(round_up(rem) * 2.0)  # sloppy but sound remainder slack
    acc = acc + Interval(-rem, rem)
    lo = math.ldexp(acc.lo, k)
    hi = math.ldexp(acc.hi, k)
    if hi == 0.0:
        hi = 5e-324
    return Interval(max(lo, 0.0), hi)


def exp_interval(x: Interval) -> Interval:
    """Rigorous enclosure of {e^t : t in x}; monotone, so endpoints suffice."""
    return Interval(_exp_point_enclosure(x.lo).lo, _exp_point_enclosure(x.hi).hi)


def exp_upper(t: float) -> float:
    """Rigorous upper bound on e^t (Gronwall factors)."""
    return _exp_point_enclosure(t).hi


# ---------------------------------------------------------------------------
# Interval vectors (sup-norm boxes)
# ---------------------------------------------------------------------------

class IntervalVector:
    """Axis-aligned box: an ordered tuple of intervals of fixed dimension."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Interval]):
        comps = tuple(c if isinstance(c, Interval) else _coerce(c)
                      for c in components)
        if not comps:
            raise IntervalError("empty vector")
        self.components = comps

    @staticmethod
    def from_point(coords: Sequence[float]) -> "IntervalVector":
        return IntervalVector([Interval.point(c) for c in coords])

    @staticmethod
    def box(bounds: Sequence[Sequence[float]]) -> "IntervalVector":
        return IntervalVector([Interval(lo, hi) for lo, hi in bounds])

    @property
    def dim(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> Interval:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __eq__(self, other) -> bool:
        return (isinstance(other, IntervalVector)
                and self.components == other.components)

    def __hash__(self) -> int:
        return hash(self.components)

    def __repr__(self) -> str:
        inner = ", ".join(f"[{c.lo}, {c.hi}]" for c in self.components)
        return f"IntervalVector({inner})"

    def _check_dim(self, other: "IntervalVector") -> None:
        if self.dim != other.dim:
            raise DimensionMismatch(f"dim {self.dim} vs {other.dim}")

    # -- geometry ----------------------------------------------------------

    def midpoint(self) -> tuple[float, ...]:
        return tuple(c.mid for c in self.components)

    def sup_radius(self) -> float:
        return max(c.rad for c in self.components)

    def sup_width(self) -> float:
        return max(c.width for c in self.components)

    def contains_point(self, p: Sequence[float]) -> bool:
        return all(c.contains(x) for c, x in zip(self.components, p))

    def contains_box(self, other: "IntervalVector") -> bool:
        self._check_dim(other)
        return all(a.contains_interval(b)
                   for a, b in zip(self.components, other.components))

    def intersects(self, other: "IntervalVector") -> bool:
        self._check_dim(other)
        return all(a.intersects(b)
                   for a, b in zip(self.components, other.components))

    def inflate(self, r: float) -> "IntervalVector":
        return IntervalVector([c.inflate(r) for c in self.components])

    def hull(self, other: "IntervalVector") -> "IntervalVector":
        self._check_dim(other)
        return IntervalVector([a.hull(b)
                               for a, b in zip(self.components, other.components)])

    def project(self, axes: Sequence[int]) -> "IntervalVector":
        return IntervalVector([self.components[i] for i in axes])

    def to_hex(self) -> list[list[str]]:
        return [c.to_hex() for c in self.components]

    @staticmethod
    def from_hex(data: Sequence[Sequence[str]]) -> "IntervalVector":
        return IntervalVector([Interval.from_hex(p) for p in data])


def sup_dist(a: IntervalVector, b: IntervalVector) -> float:
    """Lower bound on the sup-norm distance between two boxes.

    Zero when the boxes intersect.  A lower bound is what separation
    certificates need, so the per-axis gaps are rounded down.
    """
    a._check_dim(b)
    best = 0.0
    for ca, cb in zip(a.components, b.components):
        gap = max(cb.lo - ca.hi, ca.lo - cb.hi, 0.0)
        if gap > 0.0:
            gap = round_down(gap)
        best = max(best, gap)
    return best


def hull(a: IntervalVector, b: IntervalVector) -> IntervalVector:
    """Smallest box containing both inputs."""
    return a.hull(b)
