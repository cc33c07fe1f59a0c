"""End-to-end certification pipeline.

Drives the full chain: validated return-map enclosure on a Poincare
section, isolating-block verification, Conley index computation, and
the horseshoe verdict, emitting a machine-checkable certificate.

Lorenz runs split the return map into short legs between automatically
placed intermediate sections (a single validated leg is cheap, while
the whole return would blow the tube radius up by exp of the integral
of the logarithmic norm).  Sections are placed along a pilot orbit so
that each leg carries roughly the same share of that integral; every
leg is enclosed on its own in-plane cube grid and the legs are composed
as representable multivalued maps.  The flow commutes with the
rotation (x, y, z) -> (-x, -y, z), so the certified section map is the
half-return composed with the induced in-plane rotation: it maps the
positive-side strip to itself and its two reference rectangles realize
the two-symbol transition structure.

The certificate records the run configuration, per-leg statistics,
the isolating-block data, the index computations and the final
verdict; its JSON form is byte-stable across worker counts (only the
``runtime`` section carries timing and environment data).
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from ._kernels import backend, backend_name
from .conley import (
    NotIsolated,
    build_index_pair,
    index_map,
    leray_reduction,
    verify_theorem2,
)
from .grid import (
    Grid,
    GridError,
    RepresentableMvMap,
    RepresentableSet,
    build_enclosure,
    compose,
    cover_rect,
    diam_over,
    save_map,
)
from .homology import HomologyError
from .intervals import Interval, IntervalVector
from .isolation import check_isolating_block
from .lorenz import (
    FlowParams,
    LorenzSectionEvaluator,
    SectionSpec,
    logarithmic_norm,
    vector_field_point,
)

__all__ = [
    "PipelineError",
    "RunConfig",
    "default_lorenz_config",
    "default_horseshoe_config",
    "place_sections",
    "build_return_map",
    "certify_map",
    "run_certification",
    "export_artifacts",
    "certificate_digest",
]


class PipelineError(RuntimeError):
    """Structural failure: the run cannot produce a certificate."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _snap(v: float, up: bool) -> float:
    """Snap to the 1/16 lattice (outward by direction)."""
    f = Fraction(v) * 16
    g = math.ceil(f) if up else math.floor(f)
    return float(Fraction(g, 16))


@dataclass
class RunConfig:
    """Full description of one certification run.

    ``region_a``/``region_b`` are the two reference rectangles on the
    base section (in-plane coordinates, corners on the 1/16 lattice, so
    any grid step 2^-k <= 1/16 covers them exactly).  ``n_sections`` is
    the number of legs the return is split into; ``pilot`` is the
    in-plane start of the orbit used to place the intermediate
    sections.  ``eta`` halves on each refinement retry.
    """

    system: str = "lorenz"
    params: tuple = (45.0, 54.0, 10.0)
    eta: float = 1.0 / 32
    h: float = 100.0 / 2 ** 20
    n_sections: int = 23
    max_leg_steps: int = 3000
    k_seg: int = 16
    base_axis: int = 2
    base_level: float = 53.0
    base_orientation: int = -1
    base_window: float = 12.0
    window_margin: float = 8.0
    region_a: tuple = ((3.3125, 3.8125), (-1.4375, -0.9375))
    region_b: tuple = ((4.375, 4.5625), (-0.375, -0.1875))
    pilot: tuple = (3.70507242, -1.03262237)
    pilot_steps: int = 6000
    use_symmetry: bool = True
    workers: int = 1
    max_refinements: int = 0

    def flow_params(self) -> FlowParams:
        return FlowParams(*self.params)

    def base_section(self) -> SectionSpec:
        return SectionSpec(axis=self.base_axis, level=self.base_level,
                           orientation=self.base_orientation)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # runtime detail, not part of the result identity
        return d

    @staticmethod
    def from_json(d: dict) -> "RunConfig":
        d = dict(d)
        d.pop("workers", None)
        for key in ("params", "pilot"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("region_a", "region_b"):
            if key in d:
                d[key] = tuple(tuple(x) for x in d[key])
        return RunConfig(**d)


def default_lorenz_config(**overrides) -> RunConfig:
    return RunConfig(**overrides)


def default_horseshoe_config(**overrides) -> RunConfig:
    overrides.setdefault("system", "horseshoe")
    overrides.setdefault("eta", 1.0 / 64)
    return RunConfig(**overrides)


# ---------------------------------------------------------------------------
# Section placement
# ---------------------------------------------------------------------------

def place_sections(cfg: RunConfig) -> tuple[list[SectionSpec], np.ndarray,
                                            list[int]]:
    """Sections splitting the pilot return into balanced legs.

    Runs the numeric pilot orbit to its first oriented return to the
    base section, then cuts the arc at equal shares of the cumulative
    positive logarithmic norm.  At each cut the section takes the axis
    of largest velocity (transversality), the pilot coordinate snapped
    to the 1/16 lattice as its level, and the velocity sign as its
    orientation.  Returns (sections, pilot orbit, cut step indices);
    the first and last section are the base section.
    """
    p = cfg.flow_params()
    base = cfg.base_section()
    x0 = np.asarray(base.embed(cfg.pilot))
    orb = backend().rk4_orbit(x0, cfg.h, cfg.pilot_steps, p.s, p.R, p.q)
    if not np.all(np.isfinite(orb)):
        raise PipelineError("pilot orbit diverged")
    ret = None
    armed = False
    for i in range(len(orb) - 1):
        s = base.side(orb[i])
        if not armed and s < -0.5:
            armed = True
        if armed and s <= 0.0 < base.side(orb[i + 1]):
            ret = i + 1
            break
    if ret is None:
        raise PipelineError(
            "pilot orbit does not return to the base section within "
            f"{cfg.pilot_steps} steps")
    mus = np.empty(ret)
    for i in range(ret):
        mus[i] = max(0.0, logarithmic_norm(
            p, IntervalVector.from_point(tuple(orb[i]))))
    c = np.cumsum(mus)
    m = cfg.n_sections
    cuts = []
    for j in range(1, m):
        idx = int(np.searchsorted(c, c[-1] * j / m))
        if cuts and idx <= cuts[-1]:
            idx = cuts[-1] + 1
        cuts.append(min(idx, ret - 1))
    sections = [base]
    for i in cuts:
        v = vector_field_point(p, orb[i])
        ax = int(np.argmax(np.abs(v)))
        lev = float(Fraction(round(float(orb[i][ax]) * 16), 16))
        ori = 1 if v[ax] > 0 else -1
        sections.append(SectionSpec(axis=ax, level=lev, orientation=ori))
    sections.append(base)
    return sections, orb[:ret + 1], cuts


def _section_grid(cfg: RunConfig, section: SectionSpec,
                  center2) -> Grid:
    lows = [_snap(c - cfg.window_margin, up=False) for c in center2]
    highs = [_snap(c + cfg.window_margin, up=True) for c in center2]
    return Grid(lows, highs, cfg.eta)


def _base_grid(cfg: RunConfig) -> Grid:
    w = _snap(cfg.base_window, up=True)
    return Grid([-w, -w], [w, w], cfg.eta)


def section_grids(cfg: RunConfig, sections: list[SectionSpec],
                  pilot_orbit: np.ndarray, cuts: list[int]) -> list[Grid]:
    """One in-plane grid per section, windows centered on the pilot.

    The base section (first and last entry) gets a window symmetric
    about the in-plane origin so the rotation acts on its lattice.
    """
    grids = [_base_grid(cfg)]
    for sec, i in zip(sections[1:-1], cuts):
        axes = sec.in_plane_axes()
        center = tuple(float(pilot_orbit[i][a]) for a in axes)
        grids.append(_section_grid(cfg, sec, center))
    grids.append(grids[0])
    return grids


# ---------------------------------------------------------------------------
# Leg construction and composition
# ---------------------------------------------------------------------------

def region_set(box, grid: Grid) -> RepresentableSet:
    iv = IntervalVector([Interval(lo, hi) for lo, hi in box])
    return cover_rect(iv, grid).to_set(grid)


def _leg_stats(F: RepresentableMvMap, frontier: RepresentableSet,
               eta: float) -> dict:
    diam = diam_over(F, F.domain()) if len(F.values) else 0.0
    reasons: dict[str, int] = {}
    for r in F.failed.values():
        key = r.split(":", 1)[0]
        reasons[key] = reasons.get(key, 0) + 1
    return {
        "source_cubes": len(frontier),
        "computed": len(F.values),
        "failed": len(F.failed),
        "failure_reasons": reasons,
        "max_value_diameter": diam,
        "growth_factor": diam / (2.0 * eta) if diam else 0.0,
    }


def build_legs(cfg: RunConfig, sections: list[SectionSpec],
               grids: list[Grid], start: RepresentableSet,
               precomputed: dict[int, RepresentableMvMap] | None = None,
               ) -> tuple[list[RepresentableMvMap], list[dict], int | None]:
    """Validated enclosures for every leg, chained over the frontier.

    ``precomputed`` maps leg indices to maps loaded from a resume
    directory; a loaded leg is reused only when its domain covers the
    current frontier.  When every frontier cube of some leg fails, the
    chain is truncated there and the leg index is returned as the third
    element (None for a complete chain); the caller turns this into an
    all-failed composed map, which is a negative certificate rather
    than an error.
    """
    p = cfg.flow_params()
    legs = []
    stats = []
    frontier = start
    for i in range(len(sections) - 1):
        if len(frontier) == 0:
            raise PipelineError(f"empty frontier before leg {i}")
        F = None
        if precomputed and i in precomputed:
            cand = precomputed[i]
            if (cand.src_grid == grids[i] and cand.dst_grid == grids[i + 1]
                    and frontier.issubset(cand.domain().union(
                        RepresentableSet(grids[i],
                                         list(cand.failed.keys()))))):
                F = cand
        if F is None:
            ev = LorenzSectionEvaluator(p, sections[i], sections[i + 1],
                                        cfg.h, cfg.max_leg_steps,
                                        k_seg=cfg.k_seg)
            F = build_enclosure(ev, 0.0, frontier, grids[i], grids[i + 1],
                                workers=cfg.workers)
        legs.append(F)
        stats.append(_leg_stats(F, frontier, cfg.eta))
        ok_ids = [int(c) for c in frontier.ids if int(c) in F.values]
        if not ok_ids:
            return legs, stats, i
        pieces = [F.value_ids(c) for c in ok_ids]
        frontier = RepresentableSet(grids[i + 1],
                                    np.unique(np.concatenate(pieces)))
    return legs, stats, None


def rotate_values(F: RepresentableMvMap) -> RepresentableMvMap:
    """Post-compose with the in-plane rotation (a, b) -> (-a, -b).

    The destination grid must be mirror-symmetric about the origin on
    both axes (the base window is).  Domain cubes are unchanged.
    """
    g = F.dst_grid
    out = RepresentableMvMap(F.src_grid, g)
    out.failed = dict(F.failed)
    out.meta = dict(F.meta)
    for cid in F.values:
        ids = F.value_ids(cid)
        coords = g.decode_many(ids)
        mirrored = np.empty_like(coords)
        for ax in range(g.dim):
            col = np.array([g.mirror_coord(ax, int(c))
                            for c in coords[:, ax]], dtype=np.int64)
            mirrored[:, ax] = col
        out.set_ids(cid, g.encode_many(mirrored))
    return out


def build_return_map(cfg: RunConfig,
                     precomputed: dict[int, RepresentableMvMap] | None = None,
                     ) -> dict:
    """Composed, rotation-conjugated section map over both regions.

    Returns a dict with the composed map ``F``, the region cube sets,
    the legs, grids, sections and per-leg stats.
    """
    sections, pilot, cuts = place_sections(cfg)
    grids = section_grids(cfg, sections, pilot, cuts)
    base_grid = grids[0]
    n_a = region_set(cfg.region_a, base_grid)
    n_b = region_set(cfg.region_b, base_grid)
    if len(n_a.intersect(n_b)):
        raise PipelineError("reference regions overlap")
    start = n_a.union(n_b)
    legs, leg_stats, truncated = build_legs(cfg, sections, grids, start,
                                            precomputed)
    if truncated is not None:
        R = RepresentableMvMap(base_grid, base_grid)
        for cid in start.ids:
            R.mark_failed(int(cid), f"CHAIN:leg-{truncated}-all-failed")
    else:
        R = compose(legs)
        if cfg.use_symmetry:
            R = rotate_values(R)
    return {
        "F": R,
        "n_a": n_a,
        "n_b": n_b,
        "legs": legs,
        "grids": grids,
        "sections": sections,
        "leg_stats": leg_stats,
        "pilot_return_steps": len(pilot) - 1,
    }


# ---------------------------------------------------------------------------
# Verification on a composed map
# ---------------------------------------------------------------------------

def certify_map(F: RepresentableMvMap, n_a: RepresentableSet,
                n_b: RepresentableSet) -> tuple[dict, bool]:
    """Block check, Conley indices and horseshoe verdict for one map.

    Returns (JSON-able stage report, overall verdict).  Index
    computations run only when every block check is positive; a
    negative block is a clean inconclusive outcome, never an error.
    """
    N = n_a.union(n_b)
    report: dict = {"regions": {"S0": len(n_a), "S1": len(n_b)}}
    blocks = {}
    all_ok = True
    for name, region in (("S0", n_a), ("S1", n_b), ("union", N)):
        cert = check_isolating_block(F, region)
        blocks[name] = cert.to_json()
        all_ok = all_ok and cert.verdict
    report["blocks"] = blocks
    valued = RepresentableSet(N.grid, [int(c) for c in N.ids
                                       if int(c) in F.values])
    report["diam_bound"] = diam_over(F, valued)
    report["failed_in_N"] = len(N) - len(valued)
    if not all_ok:
        report["status"] = "block-negative"
        return report, False
    try:
        indices = {}
        for name, region in (("S0", n_a), ("S1", n_b), ("union", N)):
            pair = build_index_pair(F, region)
            idx = leray_reduction(index_map(F, pair))
            indices[name] = idx
        report["indices"] = {k: v.to_json() for k, v in indices.items()}
        verdict = verify_theorem2(indices["S0"], indices["S1"],
                                  indices["union"])
        report["verdict"] = verdict.to_json()
        report["status"] = "verified" if verdict.conclusion else \
            "index-inconclusive"
        return report, verdict.conclusion
    except (NotIsolated, HomologyError) as exc:
        report["status"] = "index-failed"
        report["index_error"] = str(exc)
        return report, False


# ---------------------------------------------------------------------------
# Top-level runs and the certificate
# ---------------------------------------------------------------------------

def _tool_versions() -> dict:
    import numpy
    import sympy
    return {
        "python": sys.version.split()[0],
        "numpy": numpy.__version__,
        "sympy": sympy.__version__,
        "kernel_backend": backend_name(),
    }


def _attempt_lorenz(cfg: RunConfig, precomputed=None) -> tuple[dict, bool,
                                                               dict]:
    built = build_return_map(cfg, precomputed)
    report, ok = certify_map(built["F"], built["n_a"], built["n_b"])
    attempt = {
        "eta": cfg.eta,
        "sections": [s.to_json() for s in built["sections"]],
        "pilot_return_steps": built["pilot_return_steps"],
        "legs": built["leg_stats"],
        "total_evaluations": sum(s["source_cubes"]
                                 for s in built["leg_stats"]),
        "composed_failed": len(built["F"].failed),
        "report": report,
    }
    return attempt, ok, built


def _attempt_horseshoe(cfg: RunConfig) -> tuple[dict, bool, dict]:
    from .horseshoe import build_fixture_enclosure, make_grid
    grid = make_grid(cfg.eta)
    F, n0, n1 = build_fixture_enclosure(grid, workers=cfg.workers)
    report, ok = certify_map(F, n0, n1)
    attempt = {
        "eta": cfg.eta,
        "total_evaluations": len(F.values) + len(F.failed),
        "composed_failed": len(F.failed),
        "report": report,
    }
    built = {"F": F, "n_a": n0, "n_b": n1, "legs": [], "grids": [grid]}
    return attempt, ok, built


def run_certification(cfg: RunConfig,
                      precomputed: dict[int, RepresentableMvMap] | None = None,
                      ) -> tuple[dict, dict]:
    """Refinement loop producing the final certificate.

    The grid step halves after an inconclusive attempt, up to
    ``max_refinements`` retries.  The outcome is ``"chaos"`` when some
    attempt verifies both theorem hypotheses and ``"undecided"``
    otherwise; a negative or inconclusive run never claims absence of
    chaos.  ``precomputed`` (resume) legs apply to the first attempt
    only.  Returns (certificate dict, artifacts of the last attempt).
    """
    t0 = time.perf_counter()
    attempts = []
    outcome = "undecided"
    built = None
    sub = cfg
    for k in range(cfg.max_refinements + 1):
        if k > 0:
            d = sub.to_json()
            d["eta"] = sub.eta / 2
            sub = RunConfig.from_json(d)
            sub.workers = cfg.workers
        if cfg.system == "lorenz":
            attempt, ok, built = _attempt_lorenz(
                sub, precomputed if k == 0 else None)
        elif cfg.system == "horseshoe":
            attempt, ok, built = _attempt_horseshoe(sub)
        else:
            raise PipelineError(f"unknown system {cfg.system!r}")
        attempts.append(attempt)
        if ok:
            outcome = "chaos"
            break
    certificate = {
        "format": "chaoscert-certificate-1",
        "config": cfg.to_json(),
        "attempts": attempts,
        "outcome": outcome,
        "runtime": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_seconds": time.perf_counter() - t0,
            "workers": cfg.workers,
            "tools": _tool_versions(),
        },
    }
    return certificate, built


def certificate_json(cert: dict) -> str:
    return json.dumps(cert, sort_keys=True, indent=2) + "\n"


def certificate_digest(cert: dict) -> str:
    """Digest of the result content (runtime section excluded)."""
    import hashlib
    stripped = {k: v for k, v in cert.items() if k != "runtime"}
    return hashlib.sha256(
        json.dumps(stripped, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def export_artifacts(cert: dict, built: dict, outdir: str) -> None:
    """Certificate JSON, binary map dumps and plot CSVs under outdir."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "certificate.json"), "w") as fh:
        fh.write(certificate_json(cert))
    mapdir = os.path.join(outdir, "maps")
    os.makedirs(mapdir, exist_ok=True)
    for i, leg in enumerate(built.get("legs", [])):
        save_map(leg, os.path.join(mapdir, f"leg_{i:02d}.bin"))
    save_map(built["F"], os.path.join(mapdir, "composed.bin"))
    export_plots(built, os.path.join(outdir, "plots"))


def export_plots(built: dict, plotdir: str) -> None:
    """CSV scatter and rectangle data for external plotting."""
    os.makedirs(plotdir, exist_ok=True)
    F = built["F"]
    g = F.src_grid
    with open(os.path.join(plotdir, "return_scatter.csv"), "w") as fh:
        fh.write("src_x,src_y,img_x,img_y\n")
        for cid in sorted(F.values):
            c = g.cube_center(cid)
            rect = F.value_rect(cid)
            box = rect.point_box(F.dst_grid)
            mid = [box[i].mid for i in range(F.dst_grid.dim)]
            fh.write(f"{c[0]!r},{c[1]!r},{mid[0]!r},{mid[1]!r}\n")
    covers = {"regions": built["n_a"].union(built["n_b"])}
    dom = F.domain()
    try:
        from .isolation import image, weak_preimage
        covers["core"] = weak_preimage(F, dom).intersect(dom).intersect(
            image(F, dom))
    except GridError:
        pass
    for name, s in covers.items():
        with open(os.path.join(plotdir, f"cover_{name}.csv"), "w") as fh:
            fh.write("x_lo,x_hi,y_lo,y_hi\n")
            for cid in sorted(int(c) for c in s.ids):
                box = s.grid.cube_box(cid)
                fh.write(f"{box[0].lo!r},{box[0].hi!r},"
                         f"{box[1].lo!r},{box[1].hi!r}\n")
