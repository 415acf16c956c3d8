"""
Command-line front end: `anisocap <subcommand> [options]`
"""
import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import bernstein, flow, variational
from .config import build_config, read_config_file, schema
from .errors import AcceptanceError, AnisocapError, ConfigError, ValidationError
from .geometry import generators, parametric
from .geometry.mesh import load_mesh, save_mesh
from .geometry.state import compute_state
from .pipeline import ResolutionLadder
from .stability import (
    assemble,
    boundary_identity_residuals,
    jacobi_identity_residuals,
    minkowski_test_function,
    q_phi,
    rigidity_gap,
    second_variation_fd_check,
    spectrum,
)
from .utils import optional_debugging

logger = logging.getLogger(__name__)

LOG_LEVEL_VARIABLE = "ANISOCAP_LOG_LEVEL"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ACCEPTANCE = 3
EXIT_USAGE = 64
EXIT_NO_INPUT = 66

STATE_QUANTITIES = (
    "state_capillary_residual",
    "frame_residual",
    "conormal_identity_residual",
    "principal_residual",
    "state_camc_residual",
)
ENERGY_QUANTITIES = ("camc_residual", "capillary_residual")

SUBCOMMANDS = (
    "wulff-gen",
    "state",
    "energy",
    "minkowski",
    "spectrum",
    "verify-identities",
    "second-variation-check",
    "flow",
    "bernstein",
)


def _floats(s):
    return [float(v) for v in s.split(",") if v]


def _ints(s):
    return [int(v) for v in s.split(",") if v]


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON or YAML experiment config")
    p.add_argument("--aniso", help="iso | ellipsoidal:a,b,c | perturbed:eps[:cubic|tilt]")
    p.add_argument("--omega0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sphere-samples", type=int)
    p.add_argument("--debug", action="store_true", help="launch ipdb on exceptions")


def _add_surface(p):
    p.add_argument("--mesh", type=Path, help="OFF/NOFF/OBJ mesh file")
    p.add_argument("--kind", choices=["wulff", "closed", "plane"])
    p.add_argument("--res", type=int, help="number of rings of the generated mesh")
    p.add_argument("--perturb", type=float, help="relative amplitude of normal noise")
    p.add_argument("--ladder", type=_ints, help="comma separated resolutions")
    p.add_argument("--csv", type=Path, help="write residual rows as CSV")
    p.add_argument("--output-dir", help="where ladder meshes and summaries are cached")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="anisocap",
        description="Anisotropic capillary surfaces in the half-space",
    )
    parser.add_argument(
        "--print-schema", action="store_true", help="print the config JSON schema"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("wulff-gen", help="generate a truncated Wulff cap or test surface")
    _add_common(p)
    _add_surface(p)
    p.add_argument("--radius", type=float)
    p.add_argument("--out", type=Path, required=True)

    for name, help in (
        ("state", "geometric state of a surface"),
        ("energy", "energy and first variation residuals"),
        ("minkowski", "Minkowski-type formula residual"),
    ):
        p = sub.add_parser(name, help=help)
        _add_common(p)
        _add_surface(p)
        p.add_argument("--out", type=Path)

    p = sub.add_parser("spectrum", help="stability spectrum of the second variation")
    _add_common(p)
    _add_surface(p)
    p.add_argument("--mode", choices=["weak", "strong"])
    p.add_argument("--k", type=int)
    p.add_argument("--expect-stable", action="store_true")
    p.add_argument("--out", type=Path, help="report JSON")
    p.add_argument("--coo", type=Path, help="export Q in coordinate format")

    p = sub.add_parser("verify-identities", help="Jacobi and contact line identities")
    _add_common(p)
    p.add_argument("--patch", choices=["sphere", "wulff", "bump"])
    p.add_argument("--order", type=int, choices=[2, 4, 6])
    p.add_argument("--grid", type=int)
    p.add_argument("--tol", type=float, help="fail (exit 3) above this residual")
    p.add_argument("--out", type=Path)

    p = sub.add_parser(
        "second-variation-check", help="finite-difference check of the second variation"
    )
    _add_common(p)
    p.add_argument("--res", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--touching", action="store_true", help="bump centred on the wall")
    p.add_argument("--steps", type=_floats)
    p.add_argument("--tol", type=float, default=1e-3)

    p = sub.add_parser("flow", help="volume preserving capillary gradient flow")
    _add_common(p)
    _add_surface(p)
    p.add_argument("--flowcfg", type=Path, help="flow settings JSON")
    p.add_argument("--trace", type=Path, help="trace CSV")
    p.add_argument("--checkpoint-dir", type=Path)
    p.add_argument("--out", type=Path, help="final mesh")
    p.add_argument("--progress", action="store_true")

    p = sub.add_parser("bernstein", help="area growth and cutoff estimate")
    _add_common(p)
    p.add_argument("--mesh", type=Path)
    p.add_argument("--radii", type=_floats)
    p.add_argument("--cutoff", type=_floats)
    p.add_argument("--r-max", type=float)
    p.add_argument("--out", type=Path)
    p.add_argument("--csv", type=Path)
    return parser


def _overrides(args):
    """
    Config fields given on the command line
    """
    d = {}
    surface = {}
    for key, attr in (
        ("aniso", "aniso"),
        ("omega0", "omega0"),
        ("seed", "seed"),
        ("sphere_samples", "sphere_samples"),
        ("resolutions", "ladder"),
        ("output_dir", "output_dir"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    for key, attr in (
        ("resolution", "res"),
        ("kind", "kind"),
        ("perturbation", "perturb"),
        ("radius", "radius"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            surface[key] = v
    if getattr(args, "mesh", None) is not None:
        surface.update(kind="file", path=str(args.mesh))
    if surface:
        d["surface"] = surface

    spectrum_ = {k: getattr(args, k) for k in ("k", "mode") if getattr(args, k, None) is not None}
    if spectrum_:
        d["spectrum"] = spectrum_
    identities = {
        k: getattr(args, k) for k in ("patch", "order", "grid") if getattr(args, k, None) is not None
    }
    if identities:
        d["identities"] = identities
    bern = {}
    if getattr(args, "radii", None) is not None:
        bern["radii"] = args.radii
    if getattr(args, "cutoff", None) is not None:
        bern["cutoff"] = args.cutoff
    if getattr(args, "r_max", None) is not None:
        bern["r_max"] = args.r_max
    if bern:
        d["bernstein"] = bern
    return d


def _make_mesh(cfg, hs, resolution=None):
    src = cfg.surface
    aniso = hs.aniso
    res = resolution or src.resolution
    if src.kind == "file":
        if src.path is None:
            raise ConfigError("surface kind `file` needs a path")
        return load_mesh(src.path)
    elif src.kind == "wulff":
        mesh = generators.build_truncated_wulff(aniso, hs, res)
        if src.perturbation > 0.0:
            mesh = generators.perturb_mesh(mesh, src.perturbation, seed=cfg.seed)
        return mesh
    elif src.kind == "closed":
        return generators.build_closed_wulff(aniso, res)
    elif src.kind == "plane":
        return generators.build_capillary_plane(aniso, hs, radius=src.radius, resolution=res)
    raise NotImplementedError(src.kind)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def _emit(d, out=None):
    text = json.dumps(_clean(d), sort_keys=True, indent=2)
    print(text)
    if out is not None:
        Path(out).write_text(text + "\n")


def _ladder(cfg, hs):
    """
    Run the luigi resolution ladder for the configured cap, caching meshes
    and summaries under `output_dir`
    """
    if cfg.surface.kind != "wulff":
        raise ValidationError("resolution ladders run on generated truncated Wulff caps")
    ladder = ResolutionLadder(
        hs.aniso,
        hs.omega0,
        perturbation=cfg.surface.perturbation,
        seed=cfg.seed,
        output_dir=cfg.output_dir,
    )
    return ladder.with_resolutions(*cfg.resolutions).with_spectrum(k=0).execute(quiet=True)


def _residual_rows(cfg, hs, values, quantities):
    """
    Rows (quantity, value, resolution, order): one rung per ladder
    resolution with the two-grid order between consecutive rungs, or a
    single row per quantity from `values` for the configured surface
    """
    if not cfg.resolutions:
        return [
            dict(quantity=q, value=v, resolution=cfg.surface.resolution, order=float("nan"))
            for q, v in values.items()
        ]
    ds = _ladder(cfg, hs)
    rows = []
    for i, resolution in enumerate(ds.resolution.values):
        for q in quantities:
            rows.append(
                dict(
                    quantity=q,
                    value=float(ds[q].values[i]),
                    resolution=int(resolution),
                    order=float(ds[f"{q}_order"].values[i]),
                )
            )
    return rows


def _surface(cfg, hs):
    """
    The configured surface, at the finest ladder resolution when a ladder is
    given
    """
    if cfg.resolutions and cfg.surface.kind != "file":
        return _make_mesh(cfg, hs, max(cfg.resolutions))
    return _make_mesh(cfg, hs)


def _write_rows(rows, filepath):
    if filepath is not None:
        df = pd.DataFrame(rows, columns=["quantity", "value", "resolution", "order"])
        df.to_csv(filepath, index=False, float_format="%.12g")


def cmd_wulff_gen(cfg, hs, args):
    mesh = _make_mesh(cfg, hs)
    save_mesh(mesh, args.out)
    state = compute_state(mesh, hs.aniso, hs)
    cap = float(np.max(np.abs(state.capillary_residual), initial=0.0))
    _emit(
        dict(
            out=str(args.out),
            n_vertices=mesh.n_vertices,
            n_faces=mesh.n_faces,
            capillary_residual=cap,
            energy=variational.energy(mesh, hs.aniso, hs).total,
        )
    )


def cmd_state(cfg, hs, args):
    mesh = _surface(cfg, hs)
    state = compute_state(mesh, hs.aniso, hs)
    values = dict(
        state_capillary_residual=float(np.max(np.abs(state.capillary_residual), initial=0.0)),
        frame_residual=state.frame_residual(),
        conormal_identity_residual=state.conormal_identity_residual(),
        principal_residual=float(np.max(np.abs(state.principal_residual), initial=0.0)),
        state_camc_residual=state.camc_residual(),
    )
    rows = _residual_rows(cfg, hs, values, STATE_QUANTITIES)
    _write_rows(rows, args.csv)
    if args.out is not None:
        if args.out.suffix == ".nc":
            state.to_dataset().to_netcdf(args.out)
        else:
            state.to_json(args.out)
    _emit(dict(rows=rows))


def cmd_energy(cfg, hs, args):
    mesh = _surface(cfg, hs)
    E = variational.energy(mesh, hs.aniso, hs)
    var = variational.first_variation(mesh, hs.aniso, hs)
    values = dict(camc_residual=var.camc_residual, capillary_residual=var.capillary_residual)
    rows = _residual_rows(cfg, hs, values, ENERGY_QUANTITIES)
    _write_rows(rows, args.csv)
    _emit(dict(energy=E.to_dict(), multiplier=var.multiplier, rows=rows), args.out)


def cmd_minkowski(cfg, hs, args):
    mesh = _surface(cfg, hs)
    state = compute_state(mesh, hs.aniso, hs)
    result = variational.minkowski_residual(state, mesh, hs)
    values = dict(minkowski_normalized=abs(result.normalized))
    rows = _residual_rows(cfg, hs, values, ("minkowski_normalized",))
    _write_rows(rows, args.csv)
    qF = variational.boundary_qF(state, hs)
    _emit(dict(minkowski=result.to_dict(), q_F_discrepancy=qF.discrepancy, rows=rows), args.out)


def cmd_spectrum(cfg, hs, args):
    mesh = _make_mesh(cfg, hs)
    state = compute_state(mesh, hs.aniso, hs)
    form = assemble(mesh, state, hs)
    report = spectrum(
        form, k=cfg.spectrum.k, mode=cfg.spectrum.mode, band_constant=cfg.spectrum.band_constant
    )
    phi = minkowski_test_function(state, hs)
    report.phi_value = q_phi(form, phi)
    report.rigidity_gap = rigidity_gap(state, hs)
    report.extra["phi_integral"] = phi.integral
    if args.coo is not None:
        form.to_coo(args.coo)
    d = report.to_dict()
    d.pop("witness", None)
    _emit(d)
    if args.out is not None:
        report.to_json(args.out)
    if args.expect_stable and not report.stable:
        raise AcceptanceError(
            f"lambda_min = {report.lambda_min:.6f} is below the band -{report.band:.6f}"
        )


def _identity_patch(cfg, hs):
    p = cfg.identities
    if p.patch == "sphere":
        return parametric.sphere_cap_patch(hs.omega0, n=p.grid)
    elif p.patch == "bump":
        u_b = float(np.arccos(-hs.omega0))
        eta = parametric.interior_bump(0.05, 0.4, u_b - 0.2)
        return parametric.sphere_cap_patch(hs.omega0, n=p.grid, eta=eta)
    elif p.patch == "wulff":
        return parametric.radial_wulff_patch(hs.aniso, hs.omega0, n=p.grid)
    raise NotImplementedError(p.patch)


def cmd_verify_identities(cfg, hs, args):
    patch = _identity_patch(cfg, hs)
    order = cfg.identities.order
    jacobi = jacobi_identity_residuals(patch, hs.aniso, hs, order=order)
    boundary = boundary_identity_residuals(patch, hs.aniso, hs, order=order)
    _emit(dict(jacobi=jacobi.to_dict(), boundary=boundary.to_dict()), args.out)
    worst = max(jacobi.worst, boundary.worst)
    if args.tol is not None and worst > args.tol:
        raise AcceptanceError(f"identity residual {worst:.3e} exceeds {args.tol:.1e}")


def bump(mesh, center, width):
    r2 = np.sum((mesh.vertices - np.asarray(center)) ** 2, axis=-1)
    return np.exp(-0.5 * r2 / width**2)


def cmd_second_variation_check(cfg, hs, args):
    radius = args.radius or cfg.surface.radius
    mesh = generators.build_capillary_plane(
        hs.aniso, hs, radius=radius, resolution=args.res or cfg.surface.resolution
    )
    nu = generators.capillary_plane_normal(hs.aniso, hs.omega0)
    e_up = np.array([-nu[2], 0.0, nu[0]])
    center = np.zeros(3) if args.touching else 0.5 * radius * e_up
    f = bump(mesh, center, 0.15 * radius)
    check = second_variation_fd_check(mesh, hs.aniso, hs, f, steps=args.steps)
    _emit(check.to_dict())
    if check.discrepancy > args.tol:
        raise AcceptanceError(
            f"second variation discrepancy {check.discrepancy:.3e} exceeds {args.tol:.1e}"
        )


def cmd_flow(cfg, hs, args):
    if args.flowcfg is not None:
        flowcfg = flow.FlowConfig.from_json(args.flowcfg)
    else:
        flowcfg = flow.FlowConfig.from_dict(cfg.flow)
    mesh = _make_mesh(cfg, hs)
    trace = flow.run_flow(
        mesh, hs.aniso, hs, flowcfg, checkpoint_dir=args.checkpoint_dir, progress=args.progress
    )
    if args.trace is not None:
        trace.to_csv(args.trace)
    if args.out is not None:
        save_mesh(trace.mesh, args.out)
    last = trace.records[-1]
    _emit(
        dict(
            converged=trace.converged,
            steps=len(trace.records) - 1,
            camc_residual=last["camc_residual"],
            capillary_residual=last["capillary_residual"],
            volume_drift=trace.volume_drift,
            fit=trace.fit.to_dict(),
        )
    )


def cmd_bernstein(cfg, hs, args):
    p = cfg.bernstein
    cutoff = tuple(p.cutoff) if p.cutoff is not None else None
    if args.mesh is not None:
        mesh = load_mesh(args.mesh)
    else:
        anchor = cutoff[1] if cutoff is not None else max(p.radii)
        radii = generators.graded_radii(p.r_core, p.r_max, p.n_core, anchor=anchor)
        mesh = generators.build_capillary_plane(hs.aniso, hs, radii=radii)
    report = bernstein.growth_estimate(mesh, hs.aniso, hs, p.radii, cutoff=cutoff)
    if args.csv is not None:
        report.to_csv(args.csv)
    d = report.to_dict()
    _emit(d, args.out)


COMMANDS = {
    "wulff-gen": cmd_wulff_gen,
    "state": cmd_state,
    "energy": cmd_energy,
    "minkowski": cmd_minkowski,
    "spectrum": cmd_spectrum,
    "verify-identities": cmd_verify_identities,
    "second-variation-check": cmd_second_variation_check,
    "flow": cmd_flow,
    "bernstein": cmd_bernstein,
}


def _setup_logging():
    level = os.environ.get(LOG_LEVEL_VARIABLE, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def dispatch(argv=None):
    """
    Run one subcommand and return the process exit code
    """
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        print(
            f"anisocap: unknown subcommand `{argv[0]}`, choose from"
            f" {', '.join(SUBCOMMANDS)}",
            file=sys.stderr,
        )
        return EXIT_USAGE

    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else EXIT_VALIDATION

    if args.print_schema:
        print(json.dumps(schema(), sort_keys=True, indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    _setup_logging()
    try:
        file_values = read_config_file(args.config) if args.config is not None else {}
    except (OSError, ConfigError) as ex:
        print(f"anisocap: cannot read config: {ex}", file=sys.stderr)
        return EXIT_NO_INPUT

    try:
        with optional_debugging(with_debugger=args.debug):
            cfg = build_config(file_values, _overrides(args))
            hs = cfg.half_space()
            COMMANDS[args.command](cfg, hs, args)
    except AcceptanceError as ex:
        print(f"anisocap: acceptance failed: {ex}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except ValidationError as ex:
        print(f"anisocap: invalid input: {ex}", file=sys.stderr)
        return EXIT_VALIDATION
    except AnisocapError as ex:
        print(f"anisocap: {type(ex).__name__}: {ex}", file=sys.stderr)
        return EXIT_VALIDATION
    except NotImplementedError as ex:
        print(f"anisocap: unsupported: {ex}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as ex:
        print(f"anisocap: {ex}", file=sys.stderr)
        return EXIT_NO_INPUT
    return EXIT_OK


def main():
    sys.exit(dispatch())
