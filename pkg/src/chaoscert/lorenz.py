"""Validated integration of the Lorenz equations to a Poincare section.

The flow is x' = s(y - x), y' = Rx - y - xz, z' = xy - qz.  A run
integrates the center of a section cube with the classical fourth-order
Runge-Kutta scheme in binary64 and carries a rigorous sup-norm radius
r_i such that every true solution starting within r_0 of the center
stays within r_i of the numeric point after i steps.  The update is

    r_{i+1} = r_i * exp(mu * h) + locerr,

where mu is an upper bound for the sup-norm logarithmic norm of the
Jacobian over an a-priori enclosure B of the step (so exp(mu*h) bounds
the flow's Lipschitz constant on B, by the standard differential
inequality for log norms), and locerr bounds the defect of one RK4 step
against the time-h flow from any point of B, plus binary64 rounding.

The defect bound is exact algebra: for the polynomial Lorenz field both
the RK4 update and the degree-4 Taylor polynomial of the flow are
polynomials in h, and their coefficients agree through h^4 (verified
symbolically at table-generation time).  Hence

    |flow_h - RK4_h| <= h^5/120 * max_B |F_5|  +  sum_{j>=5} |c_j(B)| h^j,

with F_5 the fifth time-derivative of the solution (iterated Lie
derivative of the field) and c_j the tail coefficients of the RK4
polynomial.  Both are evaluated as magnitude bounds of explicit
monomial tables generated once per parameter set with sympy.

The a-priori enclosure is the first-order interval Picard test: if
X_0 + [0, tau] f(B) is contained in B then every solution from X_0
stays in B on [0, tau].  It is validated once per segment of k steps
over the tube of numeric points, so per-step work stays in the numeric
kernel.

Section crossings are located by sign change of the oriented distance
to the section plane; the crossing time is enclosed by the first-order
mean-value form t in (level - a_0) / a', with the velocity component a'
bounded over a crossing enclosure and required to be sign-definite
(otherwise the crossing is refused as a suspected tangency), and the
crossing point by a degree-2 Taylor evaluation with Lagrange remainder
over the same enclosure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._kernels import backend
from .intervals import Interval, IntervalVector, exp_upper
from .grid import EvalResult, EvaluatorFailure

__all__ = [
    "FlowParams",
    "REDUCED_SCALE",
    "CLASSIC",
    "FlowError",
    "EnclosureFailure",
    "TangencySuspected",
    "OverflowEscape",
    "BudgetExhausted",
    "SectionSpec",
    "vector_field",
    "vector_field_point",
    "jacobian",
    "logarithmic_norm",
    "rk4_step",
    "step_error_tables",
    "local_error_bound",
    "propagate_radius",
    "a_priori_enclosure",
    "CrossingResult",
    "integrate_to_section",
    "LorenzSectionEvaluator",
]

_EPS = 2.0 ** -52
_UP = math.inf


def _up(x: float) -> float:
    return math.nextafter(x, _UP)


# ---------------------------------------------------------------------------
# Parameters and field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowParams:
    s: float
    R: float
    q: float

    def as_fractions(self) -> tuple[Fraction, Fraction, Fraction]:
        return (Fraction(self.s), Fraction(self.R), Fraction(self.q))


REDUCED_SCALE = FlowParams(45.0, 54.0, 10.0)
CLASSIC = FlowParams(10.0, 28.0, 8.0 / 3.0)


class FlowError(Exception):
    """Base class for validated-integration failures."""


class EnclosureFailure(FlowError):
    """No a-priori enclosure could be validated for a step segment."""


class TangencySuspected(FlowError):
    """Velocity transverse to the section not sign-definite at crossing."""


class OverflowEscape(FlowError):
    """Numeric orbit left the finite working range."""


class BudgetExhausted(FlowError):
    """Step budget spent without reaching the target section."""


def vector_field_point(p: FlowParams, v) -> tuple[float, float, float]:
    x, y, z = v
    return (p.s * (y - x), p.R * x - y - x * z, x * y - p.q * z)


def vector_field(p: FlowParams, box: IntervalVector) -> IntervalVector:
    x, y, z = box[0], box[1], box[2]
    return IntervalVector([
        (y - x) * p.s,
        x * p.R - y - x * z,
        x * y - z * p.q,
    ])


def jacobian(p: FlowParams, box: IntervalVector) -> list[list[Interval]]:
    x, y, z = box[0], box[1], box[2]
    pt = Interval.point
    return [
        [pt(-p.s), pt(p.s), pt(0.0)],
        [pt(p.R) - z, pt(-1.0), -x],
        [y, x, pt(-p.q)],
    ]


def logarithmic_norm(p: FlowParams, box: IntervalVector) -> float:
    """Upper bound for the sup-norm logarithmic norm of the Jacobian.

    mu_inf(A) = max_i ( sup a_ii + sum_{j != i} |a_ij| ), evaluated in
    outward-rounded interval arithmetic over the box.
    """
    rows = jacobian(p, box)
    best = -math.inf
    for i, row in enumerate(rows):
        acc = Interval.point(row[i].hi)
        for j, a in enumerate(row):
            if j != i:
                acc = acc + a.mag
        best = max(best, acc.hi)
    return best


def rk4_step(p: FlowParams, v, h: float) -> tuple[float, float, float]:
    """One numeric RK4 step in binary64 (no rounding control; the
    validated radius accounts for the rounding separately)."""
    k1 = vector_field_point(p, v)
    a2 = tuple(v[i] + 0.5 * h * k1[i] for i in range(3))
    k2 = vector_field_point(p, a2)
    a3 = tuple(v[i] + 0.5 * h * k2[i] for i in range(3))
    k3 = vector_field_point(p, a3)
    a4 = tuple(v[i] + h * k3[i] for i in range(3))
    k4 = vector_field_point(p, a4)
    return tuple(v[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i]
                                     + k4[i]) for i in range(3))


# ---------------------------------------------------------------------------
# Symbolic step-defect tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepErrorTables:
    """Monomial magnitude tables for the one-step defect.

    ``tail_coefs[m]`` and ``tail_exps[m]`` encode sum_j |c_j| h^j as
    monomials |c| * h^j * x^a y^b z^c over all components and j >= 5;
    ``taylor5_*`` encode F_5 / 120 * h^5 the same way.  The h powers
    are folded into the coefficients, so the tables are specific to one
    (params, h) pair.
    """

    h: float
    tail_coefs: np.ndarray
    tail_exps: np.ndarray
    taylor5_coefs: np.ndarray
    taylor5_exps: np.ndarray


@lru_cache(maxsize=8)
def _symbolic_defect(sf: Fraction, Rf: Fraction, qf: Fraction):
    """Exact monomial tables of the RK4 tail and the Taylor-5 term.

    Returns ``(tail, taylor5)`` where tail maps h-degree j >= 5 to a
    list of (coef, (a, b, c)) monomials (over all three components,
    magnitudes to be combined by sup-norm bound) and taylor5 is the
    corresponding list for F_5 / 120.  Asserts symbolically that the
    RK4 polynomial matches the flow's Taylor expansion through h^4.
    """
    import sympy

    x, y, z, h = sympy.symbols("x y z h")
    s, R, q = (sympy.Rational(f.numerator, f.denominator)
               for f in (sf, Rf, qf))
    v = sympy.Matrix([x, y, z])
    f = sympy.Matrix([s * (y - x), R * x - y - x * z, x * y - q * z])

    def fat(w):
        return f.subs(dict(zip((x, y, z), w)), simultaneous=True)

    k1 = f
    k2 = sympy.expand(fat(v + h / 2 * k1))
    k3 = sympy.expand(fat(v + h / 2 * k2))
    k4 = sympy.expand(fat(v + h * k3))
    rk = sympy.expand(v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))

    # Taylor coefficients of the flow: F_1 = f, F_{j+1} = DF_j f
    F = [f]
    for _ in range(4):
        prev = F[-1]
        F.append(sympy.expand(prev.jacobian(v) * f))
    taylor4 = sympy.expand(
        v + sum((h ** (j + 1) / sympy.factorial(j + 1) * F[j]
                 for j in range(4)), sympy.zeros(3, 1)))

    def monomials(expr):
        poly = sympy.Poly(expr, x, y, z)
        return [(Fraction(int(c.p), int(c.q)), tuple(int(e) for e in mono))
                for mono, c in zip(poly.monoms(), poly.coeffs())]

    tail: dict[int, list] = {}
    for comp in range(3):
        diff = sympy.Poly(sympy.expand(rk[comp] - taylor4[comp]), h)
        by_deg = dict(zip((m[0] for m in diff.monoms()), diff.coeffs()))
        for j in range(5):
            assert by_deg.get(j, 0) == 0, \
                f"RK4 order defect at h^{j}, component {comp}"
        for j, cj in by_deg.items():
            if j >= 5:
                tail.setdefault(j, []).extend(monomials(cj))
    taylor5 = []
    for comp in range(3):
        taylor5.extend(monomials(F[4][comp] / 120))
    return tail, taylor5


def step_error_tables(p: FlowParams, h: float) -> StepErrorTables:
    """Numeric magnitude tables for one (params, h) pair.

    Coefficients are |c| * h^j rounded up, so evaluating the tables at
    componentwise magnitude bounds of a box gives an upper bound for
    each of the two defect contributions.
    """
    tail, taylor5 = _symbolic_defect(*p.as_fractions())
    hf = Fraction(h)

    def pack(entries):
        coefs, exps = [], []
        for coef, mono in entries:
            c = float(abs(coef))
            if Fraction(c) < abs(coef):
                c = _up(c)
            coefs.append(c)
            exps.append(mono)
        return (np.asarray(coefs, dtype=np.float64),
                np.asarray(exps, dtype=np.float64))

    tail_entries = []
    for j, monos in sorted(tail.items()):
        hj = hf ** j
        tail_entries.extend((abs(c) * hj, m) for c, m in monos)
    t5_entries = [(abs(c) * hf ** 5, m) for c, m in taylor5]
    tc, te = pack(tail_entries)
    fc, fe = pack(t5_entries)
    return StepErrorTables(h=h, tail_coefs=tc, tail_exps=te,
                           taylor5_coefs=fc, taylor5_exps=fe)


def _poly_mag_upper(coefs: np.ndarray, exps: np.ndarray,
                    mags: np.ndarray) -> float:
    """Upper bound of sum |c| * X^a Y^b Z^c at magnitudes (X, Y, Z).

    The float evaluation has bounded relative error (every operand is
    nonnegative, so no cancellation; fewer than 2^6 roundings depth per
    term and log2(m) for the sum), which the (1 + 2^-40) factor covers
    with orders of magnitude to spare.
    """
    if len(coefs) == 0:
        return 0.0
    terms = coefs * np.prod(mags[None, :] ** exps, axis=1)
    return float(np.sum(terms)) * (1.0 + 2.0 ** -40) + 5e-324


def local_error_bound(p: FlowParams, B: IntervalVector,
                      tables: StepErrorTables) -> float:
    """Sup-norm bound for |flow_h - numeric RK4_h| from any point of B.

    Truncation: the Taylor-5 Lagrange term plus the RK4 tail, both as
    monomial magnitude bounds over B.  Rounding: each component of the
    binary64 step is produced by fewer than 64 operations whose
    intermediates are bounded by A (stage points stay within B inflated
    by h|f|, checked a priori by the segment enclosure; every product
    appearing in the scheme is bounded by (1+s+R+q)(1+A)^2), giving an
    absolute rounding contribution below 64 * eps * (1+s+R+q)(1+A)^2.
    """
    mags = np.asarray([B[i].mag for i in range(3)], dtype=np.float64)
    trunc = _up(_poly_mag_upper(tables.tail_coefs, tables.tail_exps, mags)
                + _poly_mag_upper(tables.taylor5_coefs, tables.taylor5_exps,
                                  mags))
    amax = float(np.max(mags)) + abs(tables.h) * float(
        max(vector_field(p, B)[i].mag for i in range(3)))
    rounding = 64.0 * _EPS * (1.0 + p.s + p.R + p.q) * (1.0 + amax) ** 2
    return _up(trunc + rounding)


def propagate_radius(r: float, mu: float, h: float, locerr: float) -> float:
    """One application of r -> r * exp(mu h) + locerr, rounded up."""
    growth = exp_upper(_up(mu * h))
    return _up(_up(r * growth) + locerr)


# ---------------------------------------------------------------------------
# A-priori enclosures
# ---------------------------------------------------------------------------

def a_priori_enclosure(p: FlowParams, hullbox: IntervalVector, tau: float,
                       max_inflate: int = 12) -> IntervalVector:
    """Box B validating hullbox + [0, tau] f(B) inside B.

    Every solution starting in hullbox then remains in B on [0, tau].
    The candidate starts from the hull inflated proportionally to
    tau |f| and is grown toward the Picard image until contained.
    """
    f0 = vector_field(p, hullbox)
    scale = max(f0[i].mag for i in range(3))
    B = hullbox.inflate(2.0 * tau * scale + 1e-14)
    for _ in range(max_inflate):
        fB = vector_field(p, B)
        reach = IntervalVector([
            hullbox[i] + Interval(0.0, tau) * fB[i] for i in range(3)])
        if B.contains_box(reach):
            return B
        B = B.hull(reach).inflate(_up(0.1 * B.sup_radius()))
    raise EnclosureFailure(
        f"no a-priori enclosure after {max_inflate} inflations "
        f"(tau={tau}, hull={hullbox})")


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionSpec:
    """Coordinate plane section {x_axis = level} with a crossing
    direction: orientation +1 accepts crossings with positive velocity
    along the axis, -1 with negative."""

    axis: int
    level: float
    orientation: int

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        if self.orientation not in (-1, 1):
            raise ValueError("orientation must be +1 or -1")

    def in_plane_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.axis)

    def embed(self, p2) -> tuple[float, float, float]:
        out = [0.0, 0.0, 0.0]
        for a, c in zip(self.in_plane_axes(), p2):
            out[a] = float(c)
        out[self.axis] = self.level
        return tuple(out)

    def side(self, v) -> float:
        """Oriented distance: negative before the crossing."""
        return self.orientation * (v[self.axis] - self.level)

    def to_json(self) -> dict:
        return {"axis": self.axis, "level": self.level,
                "orientation": self.orientation}

    @staticmethod
    def from_json(d: dict) -> "SectionSpec":
        return SectionSpec(axis=int(d["axis"]), level=float(d["level"]),
                           orientation=int(d["orientation"]))


@dataclass
class CrossingResult:
    """Validated first crossing of the target section.

    ``box`` encloses the crossing point of every solution from the
    initial ball (its section-axis component is the thin level);
    ``point``/``radius`` are the in-plane center and sup-norm radius,
    ``time`` encloses the flight time, ``steps`` counts RK4 steps,
    ``max_radius`` the largest tube radius along the way.
    """

    box: IntervalVector
    point: tuple[float, float]
    radius: float
    time: Interval
    steps: int
    max_radius: float


# ---------------------------------------------------------------------------
# Validated integration
# ---------------------------------------------------------------------------

_OVERFLOW_LIMIT = 1e6


def _segment_hull(pts: np.ndarray, r: float) -> IntervalVector:
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return IntervalVector([Interval(float(lo[i]), float(hi[i]))
                           for i in range(3)]).inflate(r)


def _ball(x, r: float) -> IntervalVector:
    return IntervalVector([Interval.around(float(c), r) for c in x])


def _deriv2_bound(p: FlowParams, B: IntervalVector) -> IntervalVector:
    """Interval enclosure of x'' = Df(x) f(x) over B."""
    J = jacobian(p, B)
    fB = vector_field(p, B)
    return IntervalVector([
        J[i][0] * fB[0] + J[i][1] * fB[1] + J[i][2] * fB[2]
        for i in range(3)])


def _locate_crossing(p: FlowParams, X: IntervalVector, h: float,
                     section: SectionSpec) -> tuple[IntervalVector, Interval]:
    """Crossing enclosure from the step ball X known to cross within
    roughly one step.

    Returns (crossing box, crossing time interval).  The time comes
    from the mean-value form over a Picard enclosure valid past the
    crossing window; the point from the degree-2 Taylor form.
    """
    tau = 2.0 * h
    for _ in range(10):
        B = a_priori_enclosure(p, X, tau)
        w = vector_field(p, B)[section.axis]
        if w.lo <= 0.0 <= w.hi or (w.hi < 0) != (section.orientation < 0):
            raise TangencySuspected(
                f"transverse velocity {w} not sign-definite toward the "
                f"section at level {section.level}")
        t = (Interval.point(section.level) - X[section.axis]) / w
        if t.lo < 0.0:
            # X is strictly on the negative side by construction, so a
            # nonpositive lower crossing time contradicts transversality
            raise TangencySuspected(
                "crossing window inconsistent with transversality")
        if t.hi > tau:
            tau *= 2.0  # enclosure not yet valid past the crossing
            continue
        fX = vector_field(p, X)
        acc = _deriv2_bound(p, B)
        box = IntervalVector([
            X[i] + t * fX[i] + t.sqr() * acc[i] * 0.5
            for i in range(3)])
        comps = list(box)
        comps[section.axis] = comps[section.axis].intersect(
            Interval.point(section.level))
        return IntervalVector(comps), t
    raise EnclosureFailure("crossing window failed to stabilize")


def integrate_to_section(p: FlowParams,
                         x0,
                         r0: float,
                         h: float,
                         section: SectionSpec,
                         max_steps: int,
                         k_seg: int = 16,
                         tables: StepErrorTables | None = None,
                         max_radius_cap: float = 1.0,
                         record: list | None = None) -> CrossingResult:
    """Validated flow from ball(x0, r0) to its first oriented crossing
    of the section.

    The numeric orbit advances in segments of ``k_seg`` RK4 steps; each
    segment validates one Picard tube B over its span, takes mu and the
    local error bound over B, and rolls the radius recurrence.

    Crossing detection is sound against within-step events: the axis
    velocity over the tube is bounded by wmag, so no true point of
    ball(x_i, r_i) can reach the section during step i while the
    oriented distance at the step start is below -(2 r_i + locerr +
    h*wmag) (the extra r_i keeps the trigger ball strictly below the
    section).  The first step where that margin is violated (after the
    orbit has first been strictly on the negative side, with hysteresis
    so a start on the section itself must leave before returning)
    triggers validated crossing location from the step-start ball.
    ``record`` may be a list; it receives (step, x_i, r_i) tuples for
    every completed step.  Raises the FlowError subclasses on enclosure
    failure, suspected tangency, numeric overflow, or budget
    exhaustion.
    """
    if tables is None:
        tables = step_error_tables(p, h)
    kern = backend()
    x = np.asarray(x0, dtype=np.float64)
    r = float(r0)
    steps = 0
    max_radius = r
    armed = False

    while steps < max_steps:
        k = min(k_seg, max_steps - steps)
        pts = kern.rk4_orbit(x, h, k, p.s, p.R, p.q)
        if not np.all(np.isfinite(pts)) or np.max(np.abs(pts)) > _OVERFLOW_LIMIT:
            raise OverflowEscape(
                f"orbit left |coord| <= {_OVERFLOW_LIMIT} after "
                f"{steps} steps")
        hullbox = _segment_hull(pts, r)
        B = a_priori_enclosure(p, hullbox, k * h)
        mu = logarithmic_norm(p, B)
        locerr = local_error_bound(p, B, tables)
        wmag = vector_field(p, B)[section.axis].mag
        for i in range(k):
            xi = pts[i]
            ri = r
            side_i = section.side(xi)
            margin = 2.0 * ri + locerr + h * wmag
            if armed and side_i > -margin:
                X = _ball(xi, ri)
                box, t = _locate_crossing(p, X, h, section)
                axes = section.in_plane_axes()
                point = tuple(box[a].mid for a in axes)
                radius = max(
                    max(_up(box[a].hi - point[j]), _up(point[j] - box[a].lo))
                    for j, a in enumerate(axes))
                flight = Interval(steps, steps) * h + t
                return CrossingResult(box=box, point=point, radius=radius,
                                      time=flight, steps=steps,
                                      max_radius=max_radius)
            if not armed and side_i < -2.0 * margin:
                armed = True
            if record is not None:
                record.append((steps, tuple(float(c) for c in xi), ri))
            r = propagate_radius(r, mu, h, locerr)
            max_radius = max(max_radius, r)
            if r > max_radius_cap:
                raise EnclosureFailure(
                    f"validated radius {r:.3g} exceeded the cap "
                    f"{max_radius_cap} after {steps + 1} steps")
            steps += 1
        x = pts[k]
    raise BudgetExhausted(
        f"no oriented crossing within {max_steps} steps (last side "
        f"{section.side(x):.3g}, r={r:.3g})")


# ---------------------------------------------------------------------------
# Section-map evaluator for enclosure construction
# ---------------------------------------------------------------------------

class LorenzSectionEvaluator:
    """Picklable evaluator mapping one section's cube centers to the
    next section, for :func:`chaoscert.grid.build_enclosure`.

    The whole source cube is absorbed into the initial radius (the cube
    is in-plane, so its sup-norm radius is eta), and the reported delta
    is the final validated radius; the per-cube Lipschitz contribution
    is therefore zero and the enclosure recipe stays rigorous with
    L = 0.
    """

    def __init__(self, params: FlowParams, src: SectionSpec,
                 dst: SectionSpec, h: float, max_steps: int,
                 k_seg: int = 16):
        self.params = params
        self.src = src
        self.dst = dst
        self.h = float(h)
        self.max_steps = int(max_steps)
        self.k_seg = int(k_seg)
        self._tables = None

    def tables(self) -> StepErrorTables:
        if self._tables is None:
            self._tables = step_error_tables(self.params, self.h)
        return self._tables

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_tables"] = None  # regenerated per process
        return d

    def __call__(self, center, eta: float) -> EvalResult:
        x0 = self.src.embed(center)
        try:
            res = integrate_to_section(self.params, x0, float(eta), self.h,
                                       self.dst, self.max_steps,
                                       k_seg=self.k_seg,
                                       tables=self.tables())
        except BudgetExhausted as e:
            raise EvaluatorFailure(f"ESCAPED:time-budget:{e}") from e
        except OverflowEscape as e:
            raise EvaluatorFailure(f"ESCAPED:overflow:{e}") from e
        except TangencySuspected as e:
            raise EvaluatorFailure(f"TANGENT:{e}") from e
        except EnclosureFailure as e:
            raise EvaluatorFailure(f"ENCLOSURE:{e}") from e
        return EvalResult(point=res.point, delta=res.radius, lipschitz=0.0,
                          stats={"steps": res.steps,
                                 "max_radius": res.max_radius,
                                 "flight_time": (res.time.lo, res.time.hi)})
