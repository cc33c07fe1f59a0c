"""Command line interface.

Subcommands::

    chaoscert certify [--config cfg.json] [--out DIR] [--threads N]
                      [--resume MAPDIR]
    chaoscert inspect MAP.bin
    chaoscert export --out DIR [--plots PLOTDIR]

Exit codes: 0 when the run verifies chaos, 10 for a clean inconclusive
outcome (negative block or inconclusive index at every attempted
resolution), 20 and above for structural failures (bad configuration,
domain gaps, unreadable artifacts).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .conley import ConleyError
from .grid import GridError, load_map
from .homology import HomologyError
from .lorenz import FlowError
from .pipeline import (
    PipelineError,
    RunConfig,
    certificate_json,
    default_lorenz_config,
    export_artifacts,
    export_plots,
    run_certification,
)

EXIT_VERIFIED = 0
EXIT_INCONCLUSIVE = 10
EXIT_STRUCTURAL = 20
EXIT_BAD_ARGS = 21


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return default_lorenz_config()
    with open(path) as fh:
        return RunConfig.from_json(json.load(fh))


def _load_resume(mapdir: str):
    out = {}
    if not os.path.isdir(mapdir):
        raise PipelineError(f"resume directory {mapdir!r} not found")
    for name in sorted(os.listdir(mapdir)):
        if name.startswith("leg_") and name.endswith(".bin"):
            idx = int(name[4:-4])
            out[idx] = load_map(os.path.join(mapdir, name))
    return out


def cmd_certify(args) -> int:
    cfg = _load_config(args.config)
    if args.threads is not None:
        cfg.workers = args.threads
    precomputed = _load_resume(args.resume) if args.resume else None
    cert, built = run_certification(cfg, precomputed)
    if args.out:
        export_artifacts(cert, built, args.out)
    else:
        sys.stdout.write(certificate_json(cert))
    print(f"outcome: {cert['outcome']}", file=sys.stderr)
    return EXIT_VERIFIED if cert["outcome"] == "chaos" else EXIT_INCONCLUSIVE


def cmd_inspect(args) -> int:
    F = load_map(args.map)
    g = F.src_grid
    print(f"source grid: dim {g.dim}, lows {g.lows}, counts {g.counts}, "
          f"eta {g.eta}")
    h = F.dst_grid
    print(f"target grid: dim {h.dim}, lows {h.lows}, counts {h.counts}, "
          f"eta {h.eta}")
    print(f"domain cubes: {len(F.values)}")
    print(f"failed cubes: {len(F.failed)}")
    if F.values:
        worst = max(F.value_diameter(int(c)) for c in F.values)
        print(f"max value diameter: {worst}")
    reasons: dict[str, int] = {}
    for r in F.failed.values():
        key = r.split(":", 1)[0]
        reasons[key] = reasons.get(key, 0) + 1
    for key, n in sorted(reasons.items()):
        print(f"  {key}: {n}")
    return EXIT_VERIFIED


def cmd_export(args) -> int:
    certpath = os.path.join(args.out, "certificate.json")
    mappath = os.path.join(args.out, "maps", "composed.bin")
    if not (os.path.exists(certpath) and os.path.exists(mappath)):
        raise PipelineError(
            f"{args.out!r} does not contain certificate.json and "
            "maps/composed.bin")
    with open(certpath) as fh:
        cert = json.load(fh)
    F = load_map(mappath)
    cfg = RunConfig.from_json(cert["config"])
    if cfg.system == "horseshoe":
        from .horseshoe import N0_BOX, N1_BOX
        from .horseshoe import region_set as hs_region_set
        n_a = hs_region_set(N0_BOX, F.src_grid)
        n_b = hs_region_set(N1_BOX, F.src_grid)
    else:
        from .pipeline import region_set
        n_a = region_set(cfg.region_a, F.src_grid)
        n_b = region_set(cfg.region_b, F.src_grid)
    built = {"F": F, "n_a": n_a, "n_b": n_b}
    export_plots(built, args.plots or os.path.join(args.out, "plots"))
    print(f"plots written to {args.plots or os.path.join(args.out, 'plots')}")
    return EXIT_VERIFIED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaoscert",
                                 description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="run a certification")
    c.add_argument("--config", help="run configuration JSON")
    c.add_argument("--out", help="artifact output directory")
    c.add_argument("--threads", type=int, help="worker process count")
    c.add_argument("--resume", help="directory with saved leg maps")
    c.set_defaults(func=cmd_certify)

    i = sub.add_parser("inspect", help="summarize a binary map file")
    i.add_argument("map")
    i.set_defaults(func=cmd_inspect)

    e = sub.add_parser("export", help="regenerate plot CSVs from artifacts")
    e.add_argument("--out", required=True, help="artifact directory")
    e.add_argument("--plots", help="plot output directory")
    e.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_ARGS if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (PipelineError, GridError, ConleyError, HomologyError,
            FlowError, OSError, json.JSONDecodeError, TypeError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL


if __name__ == "__main__":
    sys.exit(main())
