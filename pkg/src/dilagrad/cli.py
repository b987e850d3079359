"""Command-line driver for the verification suites and the demo optimizer."""

import argparse
import csv
import io
import json
import sys
import dataclasses
from importlib import resources
from pathlib import Path

import numpy as np

from .dilation import dj2, ibp_check
from .errors import DilagradError, SolverError
from .fields import PiecewiseField
from .instances import candidate_nodes
from .levelset import HatPerturbation, levelset_from_spec, load_levelset
from .mesh import build_structured_mesh, load_mesh
from .optimize import optimize
from .oracle import step_scale
from .render import render_svg, write_atomic
from .verification import (
    compare_fitted_unfitted, gaps_decrease, identity_suite, layer_records, random_theta,
    support_meets_domain, taylor_record, taylor_suite, IdentityRecord, TOLERANCES,
)

COMMANDS = ("check-dj1", "check-dj2", "check-identities", "compare-fitted-unfitted", "optimize")
NO_OP = "no-op: supp w ∩ Ω = ∅"

CSV_HELP = """\
output files (under --out):
  check-dj1, check-dj2
    summary.csv   instance, dim, node, side, reference, fitted_order, passed,
                  two_sided, agreement
    fd_<instance>_<side>.csv   t, quotient, reference, error; last row
                  fitted_order,<value>
    <instance>.svg  2D instances only
  check-identities
    identities.csv  check, instance, value, tolerance, kind, passed
                  (kind 'order' means value must be >= tolerance)
  compare-fitted-unfitted
    compare.csv   cells_per_axis, continuous, fitted_volume, fitted_strong, gap,
                  fitted_fd, fitted_order, cut_node, cut, cut_fd, cut_order,
                  min_cut_fraction
  optimize
    optimize.csv  iteration, objective, compliance, volume, step,
                  gradient_norm, min_cut_fraction, pattern_kept
    frame_<iteration>.svg

exit codes: 0 all checks pass, 1 a check or the solver failed (or the
negative control ran), 2 the configuration could not be resolved.
"""


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    """Settings of one run; mirrors the JSON configuration document."""

    command: str = None
    mesh: dict = dataclasses.field(default_factory=lambda: {"dim": 2, "cells_per_axis": 4})
    levelset: dict = None
    field: dict = dataclasses.field(default_factory=lambda: {"kind": "random", "degree": 2})
    nodes: list = None
    instances: dict = dataclasses.field(default_factory=lambda: {"dim2": 20, "dim3": 10})
    ladder: dict = dataclasses.field(default_factory=lambda: {"kmin": 3, "kmax": 8})
    seed: int = 0
    out: str = "dilagrad-out"
    source: object = dataclasses.field(default_factory=lambda: [1.0, 0.5, 0.25])
    dirichlet_label: str = "xmin"
    levels: list = dataclasses.field(default_factory=lambda: [4, 8, 16])
    optimizer: dict = dataclasses.field(default_factory=dict)
    base_dir: Path = dataclasses.field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data, base_dir=Path(base_dir))

    def path(self, name):
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p


def default_config_text(command):
    return resources.files("dilagrad").joinpath("configs", f"{command}.json").read_text()


def load_config(command, path):
    if path is None:
        text, base = default_config_text(command), "."
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        base = Path(path).parent
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    cfg = RunConfig.from_dict(data, base)
    if cfg.command not in (None, command):
        raise ConfigError(f"config is for '{cfg.command}', not '{command}'")
    cfg.command = command
    return cfg


# ---- resolution --------------------------------------------------------------------

def resolve_mesh(cfg):
    spec = cfg.mesh
    if "file" in spec:
        return load_mesh(cfg.path(spec["file"]))
    try:
        return build_structured_mesh(int(spec["dim"]), int(spec["cells_per_axis"]),
                                     spec.get("extent", 1.0), spec.get("origin"))
    except KeyError as exc:
        raise ConfigError(f"mesh spec needs {exc}") from exc


def resolve_levelset(cfg, mesh):
    spec = cfg.levelset
    if "file" in spec:
        return load_levelset(mesh, cfg.path(spec["file"]))
    return levelset_from_spec(mesh, spec)


def resolve_field(cfg, mesh, rng):
    spec = cfg.field
    kind = spec.get("kind", "random")
    if kind == "constant":
        return PiecewiseField.constant(mesh, float(spec.get("value", 1.0)))
    if kind == "random":
        return PiecewiseField.random(mesh, int(spec.get("degree", 2)), rng,
                                     continuous=bool(spec.get("continuous", False)))
    raise ConfigError(f"unknown field kind {kind!r}")


def resolve_nodes(cfg, levelset):
    if cfg.nodes is not None:
        nodes = [int(n) for n in cfg.nodes]
        bad = [n for n in nodes if not 0 <= n < levelset.mesh.n_vertices]
        if bad:
            raise ConfigError(f"perturbation nodes out of range: {bad}")
        return nodes
    return [int(n) for n in candidate_nodes(levelset)]


class _resolving:
    """Turn failures while building objects from the config into ``ConfigError``."""

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and not isinstance(exc, ConfigError) and isinstance(
                exc, (DilagradError, OSError, ValueError, TypeError, KeyError)):
            raise ConfigError(str(exc)) from exc
        return False


def fixed_problem(cfg):
    """Mesh, level set, field and hats of a configuration with an explicit level set."""
    rng = np.random.default_rng(cfg.seed)
    with _resolving():
        mesh = resolve_mesh(cfg)
        ls = resolve_levelset(cfg, mesh)
        f = resolve_field(cfg, mesh, rng)
        hats = [HatPerturbation(mesh, n) for n in resolve_nodes(cfg, ls)]
    hats = [h for h in hats if support_meets_domain(ls, h)]
    return mesh, ls, f, hats, rng


# ---- output helpers ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    write_atomic(path, buf.getvalue())


def _say(msg):
    print(msg, flush=True)


# ---- commands ----------------------------------------------------------------------

def cmd_check_dj(cfg, out, negative_control=False):
    kind = "dj1" if cfg.command == "check-dj1" else "dj2"
    kmin, kmax = int(cfg.ladder.get("kmin", 3)), int(cfg.ladder.get("kmax", 8))
    if cfg.levelset is not None:
        mesh, ls, f, hats, rng = fixed_problem(cfg)
        if not hats:
            _say(NO_OP)
            return 0
        fprime = PiecewiseField.random(mesh, 1, rng) if cfg.field.get("fprime", False) else None
        records = [taylor_record(kind, f"node{h.center_node}", ls, h, f, fprime, kmin, kmax,
                                 negative_control) for h in hats]
    else:
        records = taylor_suite(kind, int(cfg.instances.get("dim2", 20)),
                               int(cfg.instances.get("dim3", 10)), cfg.seed, kmin, kmax,
                               negative_control)
    rows = []
    for r in records:
        for rep in (r.above, r.below):
            rows.append([r.label, r.dim, r.node, rep.side, rep.reference_value,
                         rep.fitted_order, rep.passed(), r.two_sided, r.agreement])
            write_atomic(out / f"fd_{r.label}_{rep.side}.csv", rep.to_csv())
    write_csv(out / "summary.csv", ["instance", "dim", "node", "side", "reference",
                                    "fitted_order", "passed", "two_sided", "agreement"], rows)
    for r in records:
        if r.dim == 2:
            ls, hat, f = r.problem
            faces = dj2(ls, hat, f).face_contributions if kind == "dj2" else None
            write_atomic(out / f"{r.label}.svg", render_svg(ls.mesh, ls, hat, faces))
    failed = [r.label for r in records if not r.passed]
    _say(f"{cfg.command}: {len(records) - len(failed)}/{len(records)} instances pass")
    if failed:
        _say("failed: " + ", ".join(failed))
    return 1 if failed or negative_control else 0


def cmd_check_identities(cfg, out, negative_control=False):
    if cfg.levelset is not None:
        mesh, ls, f, hats, rng = fixed_problem(cfg)
        if not hats:
            _say(NO_OP)
            return 0
        recs = []
        for h in hats:
            label = f"node{h.center_node}"
            recs += layer_records(ls, h, f, label, negative_control)
            theta = random_theta(mesh, rng, False)
            t = 0.5 * step_scale(ls, h)
            recs.append(IdentityRecord("ibp_jump", label, ibp_check(ls, h, t, f, theta),
                                       TOLERANCES["ibp_jump"]))
    else:
        inst = cfg.instances
        recs = identity_suite(cfg.seed, int(inst.get("dim2", 6)), int(inst.get("dim3", 4)),
                              negative_control)
    write_csv(out / "identities.csv", ["check", "instance", "value", "tolerance", "kind",
                                       "passed"],
              [[r.check, r.instance, r.value, r.tolerance, r.kind, r.passed] for r in recs])
    failed = [f"{r.check}:{r.instance}" for r in recs if not r.passed]
    _say(f"check-identities: {len(recs) - len(failed)}/{len(recs)} checks pass")
    if failed:
        _say("failed: " + ", ".join(failed))
    return 1 if failed or negative_control else 0


def cmd_compare(cfg, out, negative_control=False):
    kmin, kmax = int(cfg.ladder.get("kmin", 3)), int(cfg.ladder.get("kmax", 8))
    try:
        rows = compare_fitted_unfitted(tuple(int(n) for n in cfg.levels), cfg.source,
                                       cfg.dirichlet_label, kmin, kmax)
    except SolverError as exc:
        _say(f"solver failure: {exc} (min cut fraction {exc.min_cut_fraction})")
        return 1
    header = ["cells_per_axis", "continuous", "fitted_volume", "fitted_strong", "gap",
              "fitted_fd", "fitted_order", "cut_node", "cut", "cut_fd", "cut_order",
              "min_cut_fraction"]
    write_csv(out / "compare.csv", header, [[getattr(r, h) for h in header] for r in rows])
    ok = True
    if len(rows) >= 2:
        ok = gaps_decrease(rows)
        _say("gap decreases monotonically" if ok else "gap does not decrease monotonically")
    else:
        _say("single level: monotonicity not checked")
    for r in rows:
        for name, order in (("fitted", r.fitted_order), ("cut", r.cut_order)):
            if order != "exact" and order < 0.9:
                ok = False
                _say(f"{name} Taylor order {order:.3f} below 0.9 at n = {r.cells_per_axis}")
    return 1 if not ok or negative_control else 0


def cmd_optimize(cfg, out, negative_control=False):
    if cfg.levelset is None:
        raise ConfigError("optimize needs a level set")
    with _resolving():
        mesh = resolve_mesh(cfg)
        ls = resolve_levelset(cfg, mesh)
    opts = dict(cfg.optimizer)
    allowed = {"penalty", "target_volume", "max_iterations", "max_step", "gradient_tol"}
    unknown = sorted(set(opts) - allowed)
    if unknown:
        raise ConfigError(f"unknown optimizer settings: {', '.join(unknown)}")
    if negative_control:
        opts["direction"] = 1.0
    header = ["iteration", "objective", "compliance", "volume", "step", "gradient_norm",
              "min_cut_fraction", "pattern_kept"]
    history = []

    def frame(rec, levelset):
        history.append(rec)
        if mesh.dim == 2:
            write_atomic(out / f"frame_{rec.iteration:03d}.svg", render_svg(mesh, levelset))

    res = optimize(mesh, ls, cfg.source, cfg.dirichlet_label, callback=frame, **opts)
    write_csv(out / "optimize.csv", header,
              [[getattr(r, h) for h in header] for r in res.history])
    if res.error is not None:
        _say(f"solver failure at iteration {len(res.history)}: {res.error}")
        return 1
    objs = np.array([r.objective for r in res.history])
    monotone = bool(np.all(np.diff(objs) <= 1e-14 * np.abs(objs[:-1])))
    patterns = all(r.pattern_kept for r in res.history)
    _say(f"optimize: {len(res.history) - 1} steps, objective {float(objs[0])!r} -> {float(objs[-1])!r}")
    if not monotone:
        _say("objective increased during the run")
    if not patterns:
        _say("a step changed the cut pattern")
    return 0 if monotone and patterns else 1


HANDLERS = {
    "check-dj1": cmd_check_dj,
    "check-dj2": cmd_check_dj,
    "check-identities": cmd_check_identities,
    "compare-fitted-unfitted": cmd_compare,
    "optimize": cmd_optimize,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="dilagrad",
        description="Verify level-set shape derivatives and run the demo optimizer.",
        epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (default: bundled config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed for randomized suites (overrides the config)")
    p.add_argument("--negative-control", action="store_true",
                   help="corrupt the claimed values; the run must then fail")
    p.add_argument("--print-config", action="store_true",
                   help="print the bundled default config of the command and exit")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.print_config:
        sys.stdout.write(default_config_text(args.command))
        return 0
    try:
        with _resolving():
            cfg = load_config(args.command, args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            out = Path(args.out) if args.out else cfg.path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, out, args.negative_control)
    except ConfigError as exc:
        print(f"dilagrad: configuration error: {exc}", file=sys.stderr)
        return 2
    except DilagradError as exc:
        print(f"dilagrad: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
