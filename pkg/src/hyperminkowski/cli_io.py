"""Configuration, the end-to-end solve pipeline, file export and the CLI."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .curvfunc import CurvatureFunctionSpec, f_eval, inverse_spec, kstar_check
from .duality import (
    beltrami,
    beltrami_convexity_check,
    dual_pair,
    duality_verify,
    gauss_map,
    resample_to_graph,
    roundtrip_displacement,
)
from .errors import ConfigError, MinkowskiError, NotConverged, StageError
from .flow import FlowOptions, PrescribedData, auto_barriers, run_flow, slice_oracle
from .geometry import Ambient, GraphHypersurface, codazzi_residual, graph_geometry
from .sphere_grid import build_grid, covariant_jet, laplacian, sphere_integrate

EMIT_KEYS = ("fields", "mesh", "diagnostics")


# --- configuration ----------------------------------------------------------------


def _strict(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class SolveConfig:
    F: CurvatureFunctionSpec
    f: PrescribedData
    n: int = 2
    resolution: tuple = (32, 64)
    stencil_order: int = 2
    flow: FlowOptions = field(default_factory=FlowOptions)
    output_dir: str | None = None
    seed: int = 0
    emit: dict = field(default_factory=lambda: {k: True for k in EMIT_KEYS})

    TOP_KEYS = ("n", "resolution", "stencil_order", "F", "f", "flow", "output_dir", "seed", "emit")

    @classmethod
    def from_dict(cls, d):
        _strict(d, cls.TOP_KEYS, "config")
        if "F" not in d or "f" not in d:
            raise ConfigError("config needs both 'F' and 'f'")
        n = int(d.get("n", 2))
        res = d.get("resolution", [32, 64] if n == 2 else [64])
        res = tuple(int(r) for r in (res if isinstance(res, (list, tuple)) else [res]))
        flow_d = d.get("flow", {})
        _strict(flow_d, FlowOptions.__dataclass_fields__, "flow")
        emit = d.get("emit", {})
        _strict(emit, EMIT_KEYS, "emit")
        try:
            cfg = cls(
                F=CurvatureFunctionSpec.from_dict(d["F"]),
                f=PrescribedData.from_dict(d["f"], n=n),
                n=n,
                resolution=res,
                stencil_order=int(d.get("stencil_order", 2)),
                flow=FlowOptions(**flow_d),
                output_dir=d.get("output_dir"),
                seed=int(d.get("seed", 0)),
                emit={k: bool(emit.get(k, True)) for k in EMIT_KEYS},
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self):
        return {
            "n": self.n,
            "resolution": list(self.resolution),
            "stencil_order": self.stencil_order,
            "F": self.F.to_dict(),
            "f": self.f.to_dict(),
            "flow": asdict(self.flow),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "emit": dict(self.emit),
        }

    def grid(self):
        res = self.resolution[0] if self.n == 1 else self.resolution
        return build_grid(self.n, res, self.stencil_order)

    def validate(self):
        try:
            grid = self.grid()
            f_eval(self.F, np.ones(self.n))
        except (MinkowskiError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        lo, _ = self.f.bounds()
        if not lo > 1.0:
            raise ConfigError(f"inf f = {lo:g} must exceed 1 for slice barriers")
        if self.f.kind == "harmonic" and len(self.f.direction) != self.n + 1:
            raise ConfigError("harmonic direction must have n+1 components")
        return grid


# --- export -------------------------------------------------------------------------


def write_csv(path, grid, values):
    """Node values with 17 significant digits, row-major over (theta, phi)."""
    path = Path(path)
    values = grid.field(values)
    phi = grid.phi if grid.phi is not None else np.zeros(grid.size)
    try:
        with path.open("w", newline="") as fh:
            fh.write("theta,phi,value\n")
            for t, p, v in zip(grid.theta, phi, values):
                fh.write(f"{t:.17g},{p:.17g},{v:.17g}\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Returns (theta, phi, value) arrays."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or list(rows[0]) != ["theta", "phi", "value"]:
        raise ValueError(f"{path}: expected header theta,phi,value")
    arr = np.array([[float(r["theta"]), float(r["phi"]), float(r["value"])] for r in rows])
    return arr[:, 0], arr[:, 1], arr[:, 2]


def grid_from_csv(theta, phi, stencil_order=2):
    """Rebuild the grid a CSV was written on."""
    nt = np.unique(theta).size
    nph = np.unique(phi).size
    grid = build_grid(1, nt, stencil_order) if nph == 1 else build_grid(2, (nt, nph), stencil_order)
    if not np.allclose(grid.theta, theta, atol=1e-12):
        raise ValueError("CSV nodes do not match a lat-long grid")
    return grid


def write_obj(path, grid, u):
    """Triangle mesh of the Beltrami-ball image of a hyperbolic graph.

    Poles are closed with triangle fans around an extra vertex placed on the
    axis at the mean ball radius of the adjacent row.
    """
    path = Path(path)
    m = GraphHypersurface(Ambient.HYPERBOLIC, grid.field(u))
    x, _ = geometry.embed(m, grid)
    y = beltrami(x)
    lines = []
    if grid.n == 1:
        lines += [f"v {p[0]:.17g} {p[1]:.17g} 0" for p in y]
        idx = list(range(1, grid.size + 1)) + [1]
        lines.append("l " + " ".join(map(str, idx)))
    else:
        nt, nph = grid.shape
        r = np.linalg.norm(y, axis=1).reshape(nt, nph)
        lines += [f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in y]
        north, south = grid.size + 1, grid.size + 2
        lines.append(f"v 0 0 {r[0].mean():.17g}")
        lines.append(f"v 0 0 {-r[-1].mean():.17g}")

        def vid(j, k):
            return j * nph + (k % nph) + 1

        for k in range(nph):
            lines.append(f"f {north} {vid(0, k)} {vid(0, k + 1)}")
        for j in range(nt - 1):
            for k in range(nph):
                a, b = vid(j, k), vid(j, k + 1)
                c, d = vid(j + 1, k), vid(j + 1, k + 1)
                lines.append(f"f {a} {c} {d}")
                lines.append(f"f {a} {d} {b}")
        for k in range(nph):
            lines.append(f"f {south} {vid(nt - 1, k + 1)} {vid(nt - 1, k)}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_jsonl(path, history):
    path = Path(path)
    try:
        with path.open("w") as fh:
            for d in history:
                fh.write(json.dumps(d.record()) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def export(kind, path, **data):
    """Dispatch to a writer: ``csv`` (grid, values), ``obj`` (grid, u),
    ``jsonl`` (history)."""
    if kind == "csv":
        return write_csv(path, data["grid"], data["values"])
    if kind == "obj":
        return write_obj(path, data["grid"], data["u"])
    if kind == "jsonl":
        return write_jsonl(path, data["history"])
    raise ValueError(f"unknown export format {kind!r}")


# --- solve pipeline -----------------------------------------------------------------


@dataclass
class SolveReport:
    converged: bool
    dual_residual: float
    primal_residual: float | None = None
    dual_kappa: tuple | None = None
    primal_kappa: tuple | None = None
    rho_range: tuple | None = None
    tau_range: tuple | None = None
    steps: int = 0
    wall_time: float = 0.0
    files: list = field(default_factory=list)
    message: str = ""

    def to_dict(self):
        return asdict(self)


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except (MinkowskiError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


def primal_residual(m, F, f, grid):
    """sup |F(kappa) - f(x~)| with x~ the de Sitter dual point of each node."""
    s = graph_geometry(m, grid)
    xd = s.nu
    tau = np.arcsinh(xd[:, 0])
    direction = xd[:, 1:] / np.linalg.norm(xd[:, 1:], axis=1)[:, None]
    fv = f(tau, direction)
    return float(np.abs(f_eval(F, s.kappa).value - fv).max()), s


def solve_minkowski(config, quiet=True):
    """Dual flow, Gauss map back to hyperbolic space, primal check, export."""
    t0 = time.perf_counter()
    out = Path(config.output_dir) if config.output_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    grid = config.grid()
    report = SolveReport(converged=False, dual_residual=float("nan"))

    def log(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    with _stage("barriers"):
        barriers = auto_barriers(config.f, config.F, grid)
    log(f"barriers tau1={barriers.tau1:.6f} tau2={barriers.tau2:.6f}")
    with _stage("flow"):
        try:
            res = run_flow(config.F, config.f, grid, config.flow, barriers=barriers)
        except NotConverged as exc:
            res = exc.result
            if res is None:
                raise
    report.converged = res.converged
    report.dual_residual = res.final_residual
    report.steps = len(res.history)
    report.tau_range = (float(res.u.min()), float(res.u.max()))
    report.message = res.message
    log(f"flow: converged={res.converged} steps={report.steps} residual={res.final_residual:.3g}")

    with _stage("export"):
        if out is not None and config.emit["diagnostics"]:
            report.files.append(str(write_jsonl(out / "diagnostics.jsonl", res.history)))
        if out is not None and config.emit["fields"]:
            report.files.append(str(write_csv(out / "dual_u.csv", grid, res.u)))
    if res.converged:
        dual = GraphHypersurface(Ambient.DESITTER, res.u)
        with _stage("gauss_map"):
            s_dual = graph_geometry(dual, grid)
            cloud = gauss_map(dual, grid, shape=s_dual, direction="NtoH")
        report.dual_kappa = (float(s_dual.kappa.min()), float(s_dual.kappa.max()))
        with _stage("resample"):
            primal = resample_to_graph(cloud, grid)
        with _stage("primal_check"):
            report.primal_residual, s = primal_residual(primal, config.F, config.f, grid)
        report.primal_kappa = (float(s.kappa.min()), float(s.kappa.max()))
        report.rho_range = (float(primal.u.min()), float(primal.u.max()))
        log(f"primal residual {report.primal_residual:.3g}")
        with _stage("export"):
            if out is not None and config.emit["fields"]:
                report.files.append(str(write_csv(out / "primal_u.csv", grid, primal.u)))
            if out is not None and config.emit["mesh"]:
                report.files.append(str(write_obj(out / "primal_beltrami.obj", grid, primal.u)))
    report.wall_time = time.perf_counter() - t0
    if out is not None:
        path = out / "report.json"
        report.files.append(str(path))
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report


# --- verification suites ------------------------------------------------------------


def empirical_orders(errors):
    e = np.asarray(errors, dtype=float)
    return [float(v) for v in np.log2(e[:-1] / e[1:])]


def _ladder(levels):
    return [build_grid(2, (nt, 2 * nt)) for nt in levels]


def _perturbed(grid):
    return GraphHypersurface(Ambient.HYPERBOLIC, 1.0 + 0.05 * np.cos(grid.theta))


def _sphere(grid, rho=1.0):
    return GraphHypersurface(Ambient.HYPERBOLIC, np.full(grid.size, rho))


def _suite_duality(levels, min_order=1.8):
    names = ("inner", "metric", "second_form", "curvature")
    reports = [duality_verify(dual_pair(_perturbed(g), g)) for g in _ladder(levels)]
    errs = {k: [getattr(r, k) for r in reports] for k in names}
    fixture = duality_verify(dual_pair(_sphere(_ladder(levels[:1])[0]), _ladder(levels[:1])[0]))
    orders = {k: empirical_orders(errs[k]) for k in names}
    floor = 1e-12  # deviations at round-off carry no order information
    ok = all(
        all(o >= min_order for o in orders[k]) or max(errs[k]) < floor for k in names
    )
    return {
        "passed": bool(ok and errs["curvature"][-1] <= 1e-3),
        "errors": errs,
        "orders": orders,
        "sphere_fixture": fixture.as_dict(),
    }


def _suite_involution(levels, min_order=1.8):
    grids = _ladder(levels)
    errs = [roundtrip_displacement(_perturbed(g), g) for g in grids]
    fixture = roundtrip_displacement(_sphere(grids[0]), grids[0])
    orders = empirical_orders(errs)
    return {
        "passed": bool(all(o >= min_order for o in orders) and fixture <= 1e-8),
        "errors": errs,
        "orders": orders,
        "sphere_fixture": fixture,
    }


def _suite_beltrami(levels):
    grids = _ladder(levels)
    per = [beltrami_convexity_check(_perturbed(g), g) for g in grids]
    fd = [r.relation_fd for r in per]
    sph = beltrami_convexity_check(_sphere(grids[0]), grids[0])
    crit_grid = build_grid(2, (2 * levels[0] - 1, 2 * levels[0]))
    crit = beltrami_convexity_check(
        GraphHypersurface(Ambient.HYPERBOLIC, 1.0 + 0.05 * np.cos(2 * crit_grid.theta)), crit_grid
    )
    rng = np.random.default_rng(0)
    y = rng.uniform(-0.5, 0.5, size=(100, 3))
    roundtrip = float(np.abs(beltrami(beltrami(y, "inverse")) - y).max())
    orders = empirical_orders(fd)
    ok = (
        roundtrip <= 1e-12
        and sph.relation <= 1e-8
        and sph.relation_fd <= 1e-8
        and max(r.relation for r in per) <= 1e-8
        and all(o >= 1.8 for o in orders)
        and all(r.ordering for r in per)
        and crit.critical_nodes > 0
        and crit.critical_deviation <= 1e-8
    )
    return {
        "passed": bool(ok),
        "roundtrip": roundtrip,
        "sphere_relation": sph.relation,
        "relation_chain": [r.relation for r in per],
        "relation_fd": fd,
        "orders_fd": orders,
        "critical_nodes": crit.critical_nodes,
        "critical_deviation": crit.critical_deviation,
    }


def _suite_kstar(seed, samples):
    k = kstar_check(CurvatureFunctionSpec("GaussK"), 2, samples=samples, seed=seed)
    h1 = kstar_check(CurvatureFunctionSpec("Hk", k=1), 2, samples=samples, seed=seed)
    return {
        "passed": bool(abs(k.infimum - 1) <= 1e-8 and abs(h1.infimum - 0.5) <= 1e-3),
        "GaussK": k.infimum,
        "H1": h1.infimum,
        "estimate": True,
    }


def l2_norm(values, grid):
    return float(np.sqrt(sphere_integrate(np.asarray(values) ** 2, grid)))


def _suite_codazzi(levels):
    grids = _ladder(levels)
    l2, sup = [], []
    for g in grids:
        r = codazzi_residual(graph_geometry(_perturbed(g), g), g)
        l2.append(l2_norm(r, g))
        sup.append(float(r.max()))
    g0 = grids[0]
    sph = float(codazzi_residual(graph_geometry(_sphere(g0), g0), g0).max())
    orders = empirical_orders(l2)
    return {
        "passed": bool(all(o >= 1.8 for o in orders) and sph <= 1e-8),
        "l2": l2,
        "orders_l2": orders,
        "sup": sup,
        "orders_sup": empirical_orders(sup),
        "sphere_fixture": sph,
    }


def _suite_grid(levels):
    out = {}
    ok = True
    for order in (2, 4):
        errs = {1: [], 2: []}
        for nt in levels:
            g = build_grid(2, (nt, 2 * nt), order)
            z = np.cos(g.theta)
            for ell, u in ((1, z), (2, 1.5 * z**2 - 0.5)):
                lap = laplacian(covariant_jet(u, g), g)
                errs[ell].append(float(np.abs(lap + ell * (ell + 1) * u).max()))
        orders = {ell: empirical_orders(e) for ell, e in errs.items()}
        ok &= all(o >= order - 0.2 for os_ in orders.values() for o in os_)
        out[f"order{order}"] = {"errors": errs, "orders": orders}
    out["passed"] = bool(ok)
    return out


SUITES = ("grid", "kstar", "codazzi", "duality", "involution", "beltrami")


def check(levels=(16, 32, 64), seed=0, samples=10000, suites=SUITES, mutate_orientation=False):
    """Run the verification suites; failures are entries, never exceptions.

    ``mutate_orientation`` flips the hyperbolic entry of the orientation table
    for the duration of the call (mutation test).
    """
    runners = {
        "grid": lambda: _suite_grid(levels),
        "kstar": lambda: _suite_kstar(seed, samples),
        "codazzi": lambda: _suite_codazzi(levels),
        "duality": lambda: _suite_duality(levels),
        "involution": lambda: _suite_involution(levels),
        "beltrami": lambda: _suite_beltrami(levels),
    }
    saved = dict(geometry.ORIENTATION)
    if mutate_orientation:
        geometry.ORIENTATION["hyperbolic"] = -saved["hyperbolic"]
    report = {}
    try:
        for name in suites:
            try:
                report[name] = runners[name]()
            except Exception as exc:  # a crashing suite is a failed suite
                report[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
    finally:
        geometry.ORIENTATION.clear()
        geometry.ORIENTATION.update(saved)
    report["all_passed"] = all(report[s]["passed"] for s in suites)
    return report


# --- CLI --------------------------------------------------------------------------------


def _load_config(args):
    if not args.config:
        raise ConfigError("--config is required")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    d = json.loads(text) if text.strip() else {}
    if args.out is not None:
        d["output_dir"] = args.out
    if args.seed is not None:
        d["seed"] = args.seed
    return SolveConfig.from_dict(d)


def _emit(obj, quiet):
    if not quiet:
        print(json.dumps(obj, indent=2, default=float))


def _cmd_solve(args):
    cfg = _load_config(args)
    report = solve_minkowski(cfg, quiet=args.quiet)
    _emit(report.to_dict(), args.quiet)
    return 0 if report.converged else 2


def _cmd_flow(args):
    cfg = _load_config(args)
    grid = cfg.grid()
    try:
        res = run_flow(cfg.F, cfg.f, grid, cfg.flow)
    except NotConverged as exc:
        res = exc.result
        if res is None:
            raise
    out = Path(cfg.output_dir) if cfg.output_dir else None
    files = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.emit["diagnostics"]:
            files.append(str(write_jsonl(out / "diagnostics.jsonl", res.history)))
        if cfg.emit["fields"]:
            files.append(str(write_csv(out / "dual_u.csv", grid, res.u)))
    _emit(
        {
            "converged": res.converged,
            "residual": res.final_residual,
            "steps": len(res.history),
            "tau_range": [float(res.u.min()), float(res.u.max())],
            "message": res.message,
            "files": files,
        },
        args.quiet,
    )
    return 0 if res.converged else 2


def _cmd_dualize(args):
    theta, phi, values = read_csv(args.input)
    grid = grid_from_csv(theta, phi)
    m = GraphHypersurface(Ambient.parse(args.ambient), values)
    cloud = gauss_map(m, grid)
    dual, info = resample_to_graph(cloud, grid, full_output=True)
    summary = {"target": dual.ambient.value, "resample_residual": info.residual}
    if m.ambient is Ambient.HYPERBOLIC:
        summary["duality"] = duality_verify(dual_pair(m, grid)).as_dict()
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary["file"] = str(write_csv(out / "dual_u.csv", grid, dual.u))
    _emit(summary, args.quiet)
    return 0


def _cmd_check(args):
    seed = 0 if args.seed is None else args.seed
    report = check(seed=seed, mutate_orientation=args.mutate_orientation)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "check.json").write_text(json.dumps(report, indent=2, default=float) + "\n")
    _emit(report, args.quiet)
    return 0 if report["all_passed"] else 1


def _cmd_slice_oracle(args):
    F = CurvatureFunctionSpec.from_dict(json.loads(args.F))
    _emit(slice_oracle(F, args.c), False)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hyperminkowski", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="full pipeline")
    sub.add_parser("flow", parents=[common], help="dual flow only")
    d = sub.add_parser("dualize", parents=[common], help="Gauss map of a graph given as CSV")
    d.add_argument("--input", required=True, help="CSV with header theta,phi,value")
    d.add_argument("--ambient", default="hyperbolic", choices=["hyperbolic", "desitter"])
    c = sub.add_parser("check", parents=[common], help="verification suites")
    c.add_argument("--mutate-orientation", action="store_true", help="flip an orientation sign")
    o = sub.add_parser("slice-oracle", parents=[common], help="closed-form radial answers")
    o.add_argument("--F", default='{"family": "GaussK"}', help="curvature function as JSON")
    o.add_argument("--c", type=float, required=True, help="constant value of f")
    return p


COMMANDS = {
    "solve": _cmd_solve,
    "flow": _cmd_flow,
    "dualize": _cmd_dualize,
    "check": _cmd_check,
    "slice-oracle": _cmd_slice_oracle,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return 2
    except (MinkowskiError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
