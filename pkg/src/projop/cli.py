"""Command-line entry point: ``projop``."""
import os

_threads = os.environ.get("PROJOP_THREADS")
if _threads:
    for _v in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_v, _threads)

import csv
import io
import json
import sys
from pathlib import Path

import click
import jsonschema
import numpy as np

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["surface", "eps"],
    "properties": {
        "surface": {"oneOf": [
            {"enum": ["sphere", "torus"]},
            {"type": "object", "additionalProperties": False, "required": ["name"],
             "properties": {"name": {"enum": ["sphere", "torus"]},
                            "R": {"type": "number", "exclusiveMinimum": 0},
                            "r": {"type": "number", "exclusiveMinimum": 0}}}]},
        "morse": {"enum": ["height"]},
        "p": {"oneOf": [{"type": "number", "minimum": 1}, {"enum": ["inf"]}]},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "resolution": {"oneOf": [
            {"type": "integer", "minimum": 32},
            {"type": "array", "items": {"type": "integer", "minimum": 16},
             "minItems": 2, "maxItems": 2}]},
        "cover": {"type": "object", "additionalProperties": False, "properties": {
            "bell": {"enum": ["smooth", "sine"]},
            "zone_nodes": {"type": "integer", "minimum": 2, "multipleOf": 2},
            "corrupt_cut": {"type": "integer", "minimum": 0},
            "shift_cut": {"type": "array", "prefixItems": [{"type": "integer", "minimum": 0},
                                                     {"type": "number"}],
                          "minItems": 2, "maxItems": 2}}},
        "tolerances": {"type": "object", "additionalProperties": False, "properties": {
            k: {"type": "number", "exclusiveMinimum": 0}
            for k in ("idempotence", "annihilation", "sum", "exterior", "symmetry",
                      "eigen", "riesz_slack")}},
    },
}


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def parse_p(value):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return float("inf")
        value = float(value)
    p = float(value)
    if not p >= 1:
        raise ValueError(f"p must be >= 1 or inf, got {value}")
    return p


def _fmt_p(p):
    return "inf" if np.isinf(p) else f"{p:g}"


def load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config: {e}")
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config schema error: {e.message}")
    return cfg


def _surface(cfg):
    from .geometry import make_surface, make_morse
    s = cfg["surface"]
    if isinstance(s, str):
        S = make_surface(s)
    else:
        kw = {k: v for k, v in s.items() if k != "name"}
        if s["name"] == "sphere" and kw:
            raise ConfigError("the sphere takes no parameters")
        S = make_surface(s["name"], **kw)
    return S, make_morse(S, cfg.get("morse", "height"))


def run_decompose(cfg, out, seed=None, resolution=None, p=None, dump_matrices=False):
    """Build, verify and write artifacts; returns the exit code."""
    from .decomposition import build_decomposition, verify_decomposition, support_polygons
    S, M = _surface(cfg)
    p = parse_p(cfg.get("p", 2.0)) if p is None else p
    seed = cfg.get("seed", 0) if seed is None else seed
    res = cfg.get("resolution", 128) if resolution is None else resolution
    K, L = (res, 2 * res) if isinstance(res, int) else res
    cov = cfg.get("cover", {})
    shift = tuple(cov["shift_cut"]) if "shift_cut" in cov else None
    dec = build_decomposition(S, M, cfg["eps"], p=p, n_levels=K, n_traj=L,
                              n_zone=cov.get("zone_nodes", 16), bell_profile=cov.get("bell", "smooth"),
                              corrupt_cut=cov.get("corrupt_cut"), shift=shift)
    rep = verify_decomposition(dec, cfg.get("tolerances"), seed=seed)
    fam = dec.family
    polys = support_polygons(dec)
    manifest = {
        "config": cfg,
        "p": _fmt_p(p),
        "seed": seed,
        "surface": S.name,
        "plan": dec.plan.to_dict(),
        "grid": fam.meta["grid"],
        "counts": {"operators": len(fam), "critical-patch": fam.count("critical-patch"),
                   "strip": fam.count("strip")},
        "operators": [{"name": n, "kind": k, "nnz": int(m.nnz), "support_nodes": int(s.sum()),
                       "support": poly}
                      for n, k, m, s, poly in zip(fam.names, fam.kinds, fam.operators,
                                                  fam.supports, polys)],
        "patches": dec.info["patch_distance"],
        "report": rep.to_dict(),
    }
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    (out / "report.json").write_text(rep.to_json())
    if dump_matrices:
        mdir = out / "matrices"
        mdir.mkdir(exist_ok=True)
        for n, m in zip(fam.names, fam.operators):
            C = m.tocoo()
            buf = io.StringIO()
            buf.write(f"# {n} shape={m.shape[0]}x{m.shape[1]} levels={K} trajectories={L}\n")
            buf.write("row,col,value\n")
            for i, j, v in sorted(zip(C.row.tolist(), C.col.tolist(), C.data.tolist())):
                buf.write(f"{i},{j},{v!r}\n")
            (mdir / f"{n}.csv").write_text(buf.getvalue())
    for c in rep.checks:
        click.echo(f"{c['name']:<28} {'ok' if c['passed'] else 'FAIL'}  value={c['value']:.3e}  "
                   f"tol={c['tol']:.3e}")
    click.echo(f"operators={len(fam)} critical-patch={fam.count('critical-patch')} "
               f"riesz=[{rep.riesz[0]:.6f}, {rep.riesz[1]:.6f}] overlap={rep.overlap}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


@click.group()
def main():
    """Smooth decompositions of the identity on surfaces."""


@main.command()
@click.option("--config", "config", required=True, type=click.Path(dir_okay=False))
@click.option("--out", default="out", type=click.Path(file_okay=False), show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--resolution", type=int, default=None, help="levels; trajectories = 2x")
@click.option("--p", "p", default=None, help="exponent, a number >= 1 or 'inf'")
@click.option("--dump-matrices", is_flag=True, help="also write CSV matrices")
def decompose(config, out, seed, resolution, p, dump_matrices):
    """Build and verify a decomposition from a JSON config."""
    from .decomposition import ResolutionError
    cfg = load_config(config)
    try:
        pv = None if p is None else parse_p(p)
    except ValueError as e:
        raise ConfigError(str(e))
    if resolution is not None and resolution < 32:
        raise ConfigError("resolution must be at least 32")
    try:
        code = run_decompose(cfg, out, seed, resolution, pv, dump_matrices)
    except (ResolutionError, IndexError, ValueError) as e:
        raise ConfigError(f"cannot build the decomposition: {e}")
    sys.exit(code)


@main.command("bp-table")
@click.option("--p-list", default="1,1.5,2,4,inf", show_default=True)
def bp_table(p_list):
    """CSV of the 2x2 fold-block norm constants B_p."""
    from .aww1d import Bp
    try:
        ps = [(s.strip(), parse_p(s)) for s in p_list.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(str(e))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["p", "B_p"])
    for s, p in ps:
        w.writerow([_fmt_p(p), f"{Bp(p):.12f}"])


@main.command("bell-check")
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--grid", "n_grid", type=int, default=10001, show_default=True)
@click.option("--profile", default="smooth", show_default=True)
def bell_check(delta, n_grid, profile):
    """Check the quadratic identity of a bell; exit 1 when it fails."""
    from .bell import make_bell, verify_bell
    try:
        b = make_bell(delta, profile)
        r = verify_bell(b, n_grid)
    except ValueError as e:
        raise ConfigError(str(e))
    ok = max(r.values()) <= 1e-12
    r["passed"] = ok
    click.echo(json.dumps(r, sort_keys=True))
    sys.exit(EXIT_OK if ok else EXIT_VERIFY)


@main.command("flow-trace")
@click.option("--surface", "surf", default="sphere", type=click.Choice(["sphere", "torus"]))
@click.option("--config", "config", default=None, type=click.Path(dir_okay=False))
@click.option("--from", "t0", type=float, required=True)
@click.option("--to", "t1", type=float, required=True)
@click.option("--seeds", type=int, default=64, show_default=True)
@click.option("--samples", type=int, default=21, show_default=True)
def flow_trace(surf, config, t0, t1, seeds, samples):
    """CSV of gradient-flow trajectories and density samples between two levels."""
    from .geometry import GeometryError, build_flow_grid
    cfg = load_config(config) if config else {"surface": surf, "eps": 1.0}
    S, M = _surface(cfg)
    if seeds < 4 or samples < 2:
        raise ConfigError("need at least 4 seeds and 2 samples")
    levels = np.linspace(t0, t1, samples)
    try:
        fg = build_flow_grid(S, M, levels, np.ones(samples), seeds, seed_level=t0)
    except (GeometryError, ValueError) as e:
        raise ConfigError(f"cannot trace: {e}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["trajectory", "component", "t", "u", "v", "psi"])
    for l in range(fg.shape[1]):
        for k in range(fg.shape[0]):
            u, v = S.wrap(fg.points[k, l])[0]
            w.writerow([l, int(fg.seed_comp[l]), f"{levels[k]:.10g}", f"{u:.10f}", f"{v:.10f}",
                        f"{fg.psi[k, l]:.10g}"])


@main.command("export-supports")
@click.argument("manifest", type=click.Path(dir_okay=False))
@click.option("--out", default="supports", type=click.Path(file_okay=False), show_default=True)
def export_supports(manifest, out):
    """Support polygons (JSON) and cut-off level curves (CSV) from a manifest."""
    from .geometry import level_set
    try:
        man = json.loads(Path(manifest).read_text())
        ops = man["operators"]
        cfg = man["config"]
        cuts = man["plan"]["cuts"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid manifest: {e}")
    S, M = _surface(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    polys = {"surface": S.name, "box": [list(b) for b in S.box],
             "supports": [{"name": o["name"], "kind": o["kind"], "polygons": o["support"]}
                          for o in ops]}
    (out / "supports.json").write_text(json.dumps(polys, sort_keys=True, indent=1))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "component", "u", "v"])
    for t in cuts:
        curve = level_set(S, M, t)
        for c, comp in enumerate(curve.components):
            for u, v in comp.points:
                w.writerow([f"{t:.10g}", c, f"{u:.8f}", f"{v:.8f}"])
    (out / "level_curves.csv").write_text(buf.getvalue())
    click.echo(f"supports={len(ops)} levels={len(cuts)} -> {out}")


if __name__ == "__main__":
    main()
