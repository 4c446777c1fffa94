"""Command-line front end: ``ringflow {solve,trace,ridge,verify,figure}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, RingflowError
from .fields import level_curves, recover_gradient
from .mesh import generate_mesh
from .ridge import boundary_speed, build_ridge
from .solver import solve_sweep
from .streamline import Tracer
from .verify import _seed_points, run_suite

COMMANDS = ("solve", "trace", "ridge", "verify", "figure")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ringflow", description="p-harmonic potentials, streamlines and ridges in convex rings")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--preset", help="preset ring, e.g. square, truncated-square, rectangle, annulus, hexagon")
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--p", help="comma-separated exponents")
    ap.add_argument("--h", type=float, help="target mesh size")
    ap.add_argument("--seeds", help="seed count, 'edge:K', or a file of 'x y' lines")
    ap.add_argument("--tol-file", help="threshold overrides, key = value")
    ap.add_argument("--out", help="output directory")
    return ap


def _config(args) -> io.RunConfig:
    mapping = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
        mapping.update(io.domains.parse_kv(text))
    if args.preset:
        mapping = {k: v for k, v in mapping.items() if k not in io.domains.DOMAIN_KEYS or k in ("delta", "eps_k")}
        mapping["preset"] = args.preset
    if args.p:
        mapping["p"] = args.p
    if args.h is not None:
        mapping["h"] = repr(args.h)
    if args.out:
        mapping["out"] = args.out
    if args.seeds:
        s = args.seeds.strip()
        if s.isdigit() or s.startswith("edge:"):
            mapping["seeds"] = s
        else:
            try:
                lines = Path(s).read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                raise ConfigError(f"cannot read seed file {s}: {exc.strerror}") from exc
            pts = [ln.split("#", 1)[0].strip() for ln in lines]
            mapping["seeds"] = ", ".join(p for p in pts if p)
    if args.tol_file:
        try:
            tol = io.read_thresholds(Path(args.tol_file).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read tolerance file {args.tol_file}: {exc.strerror}") from exc
        mapping.update({f"tol.{k}": repr(v) for k, v in tol.items()})
    return io.RunConfig.from_mapping(mapping)


def _solve(cfg, all_p: bool):
    ring = cfg.ring()
    mesh = generate_mesh(ring, cfg.h)
    ps = sorted(cfg.p) if all_p else [max(cfg.p)]
    return ring, solve_sweep(mesh, ps)


def _trace(cfg, field):
    grad = recover_gradient(field)
    tracer = Tracer(grad)
    return grad, [tracer.trace(x) for x in _seed_points(cfg, field.mesh.ring)]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        cmd = args.command
        if cmd == "verify":
            report = run_suite(cfg)
            (out / "report.json").write_text(report.to_json(), encoding="utf-8")
            (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
            sys.stdout.write(report.to_table())
            return 0 if report.success else 1
        ring, fields = _solve(cfg, all_p=cmd == "solve")
        top = fields[max(fields)]
        if cmd == "solve":
            for p, f in fields.items():
                stem = out / f"field_p{p:g}"
                io.save_field(stem.with_suffix(".rff"), f)
                speed = recover_gradient(f).speed
                stem.with_suffix(".txt").write_text(io.field_table(f, speed), encoding="utf-8")
                (out / f"solve_p{p:g}.log").write_text(f.report.to_text() if f.report else "", encoding="utf-8")
            print(f"wrote {len(fields)} fields to {out}")
        elif cmd == "trace":
            _, sls = _trace(cfg, top)
            for k, s in enumerate(sls):
                (out / f"streamline_{k:03d}.txt").write_text(io.streamline_table([s]), encoding="utf-8")
            io.write_json(out / "streamlines.json", io.streamlines_to_json(sls))
            print(f"wrote {len(sls)} streamlines to {out}")
        elif cmd == "ridge":
            ridge = build_ridge(top, boundary_speed(top, cfg.n_boundary))
            io.write_json(out / "ridge.json", io.ridge_to_json(ridge))
            print(f"wrote ridge with {len(ridge)} attracting streamlines to {out}")
        elif cmd == "figure":
            _, sls = _trace(cfg, top)
            ridge = build_ridge(top, boundary_speed(top, cfg.n_boundary))
            curves = [c for lv in np.arange(0.1, 0.95, 0.1) for c in level_curves(top, lv)]
            (out / "figure.svg").write_text(io.render_svg(ring, curves, sls, ridge), encoding="utf-8")
            print(f"wrote {out / 'figure.svg'}")
        return 0
    except (RingflowError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"ringflow: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
