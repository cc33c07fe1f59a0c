"""Pipeline plumbing: configuration, placement, symmetry, artifacts.

The full Lorenz chain is exercised end to end by the acceptance tests;
here the focus is the deterministic plumbing around it, fast single-leg
behavior, and the horseshoe path through the same driver.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from chaoscert.grid import Grid, LatticeRect, RepresentableMvMap, load_map
from chaoscert.pipeline import (
    RunConfig,
    build_legs,
    certificate_digest,
    certificate_json,
    default_horseshoe_config,
    default_lorenz_config,
    export_artifacts,
    place_sections,
    region_set,
    rotate_values,
    run_certification,
    section_grids,
)


class TestConfig:
    def test_json_round_trip(self):
        cfg = default_lorenz_config(eta=1.0 / 16, n_sections=7)
        d = cfg.to_json()
        back = RunConfig.from_json(json.loads(json.dumps(d)))
        assert back.to_json() == d

    def test_workers_not_part_of_identity(self):
        a = default_lorenz_config(workers=1)
        b = default_lorenz_config(workers=8)
        assert a.to_json() == b.to_json()

    def test_regions_on_coarse_lattice(self):
        cfg = default_lorenz_config()
        for box in (cfg.region_a, cfg.region_b):
            for lo, hi in box:
                assert (lo * 16) == int(lo * 16)
                assert (hi * 16) == int(hi * 16)


class TestPlacement:
    @pytest.fixture(scope="class")
    def placed(self):
        cfg = default_lorenz_config()
        return cfg, place_sections(cfg)

    def test_section_count_and_base(self, placed):
        cfg, (secs, pilot, cuts) = placed
        assert len(secs) == cfg.n_sections + 1
        assert secs[0] == cfg.base_section() == secs[-1]
        assert len(cuts) == cfg.n_sections - 1
        assert all(c1 < c2 for c1, c2 in zip(cuts, cuts[1:]))

    def test_levels_snapped(self, placed):
        _, (secs, _, _) = placed
        for s in secs:
            assert s.level * 16 == int(s.level * 16)
            assert s.orientation in (-1, 1)

    def test_pilot_returns_near_mirror_start(self, placed):
        cfg, (secs, pilot, _) = placed
        end = pilot[-1]
        assert abs(end[0] + cfg.pilot[0]) < 0.05
        assert abs(end[1] + cfg.pilot[1]) < 0.05

    def test_grids_aligned_and_symmetric(self, placed):
        cfg, (secs, pilot, cuts) = placed
        grids = section_grids(cfg, secs, pilot, cuts)
        assert len(grids) == len(secs)
        assert grids[0] is grids[-1]
        base = grids[0]
        assert base.lows[0] == -base.lows[0] - base.counts[0] * 2 * base.eta \
            or base.lows == (-12.0, -12.0)
        for ax in range(2):
            assert base.mirror_coord(ax, 0) == base.counts[ax] - 1
        cube_counts = [g.counts for g in grids]
        assert all(all(isinstance(c, int) and c > 0 for c in cc)
                   for cc in cube_counts)


class TestRegions:
    def test_region_sets(self):
        cfg = default_lorenz_config()
        secs, pilot, cuts = place_sections(cfg)
        g = section_grids(cfg, secs, pilot, cuts)[0]
        n_a = region_set(cfg.region_a, g)
        n_b = region_set(cfg.region_b, g)
        assert len(n_a) == 8 * 8
        assert len(n_b) == 3 * 3
        assert len(n_a.intersect(n_b)) == 0


class TestRotateValues:
    def test_mirror_involution(self):
        g = Grid([-1.0, -1.0], [1.0, 1.0], 1.0 / 8)
        F = RepresentableMvMap(g, g)
        F.set_rect(0, LatticeRect((1, 2), (3, 5)))
        F.set_ids(5, np.asarray([g.encode((0, 0)), g.encode((7, 7))]))
        F.mark_failed(9, "ESCAPED:test")
        R = rotate_values(F)
        assert R.failed == F.failed
        # the rect [1,3]x[2,5] mirrors to [4,6]x[2,5] on an 8-count axis
        assert R.value_rect(0) == LatticeRect((4, 2), (6, 5))
        assert sorted(int(i) for i in R.value_ids(5)) == sorted(
            [g.encode((7, 7)), g.encode((0, 0))])
        RR = rotate_values(R)
        assert RR == F.convexify() or all(
            np.array_equal(np.sort(RR.value_ids(c)),
                           np.sort(F.value_ids(c))) for c in F.values)

    def test_points_actually_negated(self):
        g = Grid([-1.0, -1.0], [1.0, 1.0], 1.0 / 8)
        F = RepresentableMvMap(g, g)
        cid = g.encode((2, 3))
        F.set_ids(cid, np.asarray([cid]))
        R = rotate_values(F)
        box = g.cube_box(cid)
        mbox = g.cube_box(int(R.value_ids(cid)[0]))
        assert mbox[0].lo == -box[0].hi and mbox[0].hi == -box[0].lo
        assert mbox[1].lo == -box[1].hi and mbox[1].hi == -box[1].lo


class TestSingleLeg:
    def test_first_leg_small_frontier(self):
        cfg = default_lorenz_config(n_sections=23)
        secs, pilot, cuts = place_sections(cfg)
        grids = section_grids(cfg, secs, pilot, cuts)
        start = region_set(((3.625, 3.75), (-1.125, -1.0)), grids[0])
        legs, stats, truncated = build_legs(cfg, secs[:2], grids[:2], start)
        assert len(legs) == 1
        assert truncated is None
        assert stats[0]["failed"] == 0
        assert stats[0]["source_cubes"] == len(start)
        assert 1.0 < stats[0]["growth_factor"] < 6.0
        for cid in start.ids:
            assert legs[0].is_rect_valued(int(cid))


class TestHorseshoeDriver:
    @pytest.fixture(scope="class")
    def run(self):
        # 1/32 is too coarse on purpose: the driver must refine to 1/64
        cfg = default_horseshoe_config(eta=1.0 / 32, max_refinements=1)
        return run_certification(cfg)

    def test_outcome_after_refinement(self, run):
        cert, built = run
        assert cert["outcome"] == "chaos"
        assert len(cert["attempts"]) == 2
        assert cert["attempts"][0]["report"]["status"] == "block-negative"
        assert cert["attempts"][1]["eta"] == 1.0 / 64
        assert cert["attempts"][1]["report"]["status"] == "verified"
        assert cert["attempts"][1]["report"]["verdict"]["conclusion"]

    def test_digest_excludes_runtime(self, run):
        cert, _ = run
        d1 = certificate_digest(cert)
        clone = json.loads(certificate_json(cert))
        clone["runtime"]["timestamp"] = "someday"
        clone["runtime"]["wall_seconds"] = -1
        assert certificate_digest(clone) == d1

    def test_artifacts_round_trip(self, run, tmp_path):
        cert, built = run
        out = str(tmp_path / "out")
        export_artifacts(cert, built, out)
        with open(os.path.join(out, "certificate.json")) as fh:
            loaded = json.load(fh)
        assert loaded["outcome"] == "chaos"
        F2 = load_map(os.path.join(out, "maps", "composed.bin"))
        assert F2 == built["F"]
        scatter = os.path.join(out, "plots", "return_scatter.csv")
        with open(scatter) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "src_x,src_y,img_x,img_y"
        assert len(lines) == len(built["F"].values) + 1


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "chaoscert.cli", *args],
            capture_output=True, text=True)

    def test_certify_horseshoe_exit_zero(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps(
            default_horseshoe_config(eta=1.0 / 64).to_json()))
        out = tmp_path / "out"
        r = self.run_cli("certify", "--config", str(cfgfile),
                         "--out", str(out), "--threads", "1")
        assert r.returncode == 0, r.stderr
        assert (out / "certificate.json").exists()

        ins = self.run_cli("inspect", str(out / "maps" / "composed.bin"))
        assert ins.returncode == 0
        assert "domain cubes" in ins.stdout

        exp = self.run_cli("export", "--out", str(out),
                           "--plots", str(tmp_path / "plots"))
        assert exp.returncode == 0
        assert (tmp_path / "plots" / "return_scatter.csv").exists()

    def test_structural_error_exit(self, tmp_path):
        r = self.run_cli("certify", "--config", str(tmp_path / "nope.json"))
        assert r.returncode == 20

    def test_bad_args_exit(self):
        r = self.run_cli("frobnicate")
        assert r.returncode == 21
