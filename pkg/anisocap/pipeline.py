"""
luigi task graph for resolution ladders: generate truncated Wulff caps at a
sequence of resolutions, summarise each one as a netCDF file and merge the
summaries with two-grid convergence orders
"""
import json
import shutil
import warnings
from pathlib import Path

import luigi
import numpy as np
import xarray as xr

from .anisotropy import Anisotropy, make_config
from .errors import PipelineError, ValidationError
from .geometry.generators import build_truncated_wulff, perturb_mesh
from .geometry.mesh import read_off, write_off
from .geometry.state import compute_state
from .stability import assemble, minkowski_test_function, q_phi, rigidity_gap, spectrum
from .utils import convergence_order, dict_to_hash, optional_debugging
from .variational import energy, first_variation, minkowski_residual

LADDER_PATH = "anisocap_ladder"

# residuals that get a convergence order along the ladder
RESIDUALS = [
    "minkowski_normalized",
    "state_camc_residual",
    "state_capillary_residual",
    "principal_residual",
    "frame_residual",
    "conormal_identity_residual",
    "phi_integral_normalized",
    "rigidity_gap_normalized",
    "camc_residual",
    "capillary_residual",
    "q_phi",
]


class XArrayTarget(luigi.target.FileSystemTarget):
    fs = luigi.local_target.LocalFileSystem()

    def __init__(self, path, *args, **kwargs):
        super(XArrayTarget, self).__init__(path, *args, **kwargs)
        self.path = path

    def open(self, *args, **kwargs):
        # load into memory so the file handle is released straight away
        with xr.open_dataset(self.path, *args, **kwargs) as ds:
            return ds.load()

    @property
    def fn(self):
        return self.path


def _surface_params(aniso, omega0, perturbation, seed):
    return dict(aniso=aniso, omega0=omega0, perturbation=perturbation, seed=seed)


class CapMesh(luigi.Task):
    """
    Truncated Wulff cap (optionally with smoothed normal noise) stored as a
    NOFF file
    """

    aniso = luigi.Parameter()
    omega0 = luigi.FloatParameter()
    resolution = luigi.IntParameter()
    perturbation = luigi.FloatParameter(default=0.0)
    seed = luigi.IntParameter(default=0)
    output_dir = luigi.Parameter(default=LADDER_PATH)

    def run(self):
        aniso = Anisotropy.from_dict(json.loads(self.aniso))
        config = make_config(aniso, self.omega0)
        mesh = build_truncated_wulff(aniso, config, self.resolution)
        if self.perturbation > 0.0:
            mesh = perturb_mesh(mesh, self.perturbation, seed=self.seed)
        Path(self.output().path).parent.mkdir(exist_ok=True, parents=True)
        write_off(mesh, self.output().path)

    @property
    def identifier(self):
        params = _surface_params(self.aniso, self.omega0, self.perturbation, self.seed)
        return dict_to_hash(params)

    def output(self):
        fn = f"cap__{self.identifier}__res{self.resolution}.off"
        return luigi.LocalTarget(str(Path(self.output_dir) / fn))


class SurfaceSummary(luigi.Task):
    """
    Energy, Minkowski residual, rigidity gap, stationarity and contact line
    residuals and, unless k = 0, the bottom of the stability spectrum of one
    cap
    """

    aniso = luigi.Parameter()
    omega0 = luigi.FloatParameter()
    resolution = luigi.IntParameter()
    perturbation = luigi.FloatParameter(default=0.0)
    seed = luigi.IntParameter(default=0)
    output_dir = luigi.Parameter(default=LADDER_PATH)
    k = luigi.IntParameter(default=6)
    # k = 0 skips the eigensolve
    mode = luigi.Parameter(default="weak")
    debug = luigi.BoolParameter(default=False)

    def requires(self):
        return CapMesh(
            aniso=self.aniso,
            omega0=self.omega0,
            resolution=self.resolution,
            perturbation=self.perturbation,
            seed=self.seed,
            output_dir=self.output_dir,
        )

    def run(self):
        with optional_debugging(with_debugger=self.debug):
            ds = self._run()
        ds.to_netcdf(self.output().fn)

    def _run(self):
        aniso = Anisotropy.from_dict(json.loads(self.aniso))
        config = make_config(aniso, self.omega0)
        mesh = read_off(self.input().path)
        state = compute_state(mesh, aniso, config)

        E = energy(mesh, aniso, config)
        var = first_variation(mesh, aniso, config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mink = minkowski_residual(state, mesh, config)
        phi = minkowski_test_function(state, config)
        form = assemble(mesh, state, config)
        area = mink.area

        values = dict(
            energy=E.total,
            volume=E.volume,
            wetted_area=E.wetted_area,
            mesh_size=mesh.mean_edge_length,
            minkowski_normalized=abs(mink.normalized),
            phi_integral_normalized=abs(phi.normalized),
            rigidity_gap_normalized=rigidity_gap(state, config) / area,
            camc_residual=var.camc_residual,
            capillary_residual=var.capillary_residual,
            state_camc_residual=state.camc_residual(),
            state_capillary_residual=float(np.max(np.abs(state.capillary_residual), initial=0.0)),
            principal_residual=float(np.max(np.abs(state.principal_residual), initial=0.0)),
            frame_residual=state.frame_residual(),
            conormal_identity_residual=state.conormal_identity_residual(),
            q_phi=abs(q_phi(form, phi)),
        )
        ds = xr.Dataset({name: ((), float(v)) for name, v in values.items()})
        if self.k > 0:
            report = spectrum(form, k=self.k, mode=self.mode)
            ds["lambda_min"] = ((), report.lambda_min)
            ds["band"] = ((), report.band)
            ds["eigenvalue"] = ("eigen_index", report.eigenvalues)
            ds["stable"] = ((), int(report.stable))
            ds.attrs["verdict"] = report.verdict
        ds = ds.assign_coords(resolution=self.resolution)
        ds.attrs["mode"] = self.mode
        return ds

    def output(self):
        fn_mesh = Path(self.input().path)
        fn = fn_mesh.parent / f"{fn_mesh.stem}__{self.mode}_k{self.k}.nc"
        return XArrayTarget(str(fn))


class ResolutionLadder:
    """
    Chainable description of a ladder of cap resolutions, e.g.

        ds = (
            ResolutionLadder(aniso, omega0=0.3)
            .with_resolutions(6, 12, 24)
            .execute(quiet=True)
        )
    """

    def __init__(
        self,
        aniso,
        omega0,
        resolutions=[],
        perturbation=0.0,
        seed=0,
        k=6,
        mode="weak",
        output_dir=LADDER_PATH,
    ):
        self._aniso = aniso
        self._omega0 = float(omega0)
        self._resolutions = list(resolutions)
        self._perturbation = perturbation
        self._seed = seed
        self._k = k
        self._mode = mode
        self._output_dir = str(output_dir)

    def _kwargs(self):
        return dict(
            aniso=self._aniso,
            omega0=self._omega0,
            resolutions=self._resolutions,
            perturbation=self._perturbation,
            seed=self._seed,
            k=self._k,
            mode=self._mode,
            output_dir=self._output_dir,
        )

    def with_resolutions(self, *resolutions):
        kwargs = self._kwargs()
        kwargs["resolutions"] = sorted(set(self._resolutions) | set(resolutions))
        return ResolutionLadder(**kwargs)

    def with_spectrum(self, k=6, mode="weak"):
        kwargs = self._kwargs()
        kwargs.update(k=k, mode=mode)
        return ResolutionLadder(**kwargs)

    def _make_tasks(self, debug):
        aniso = json.dumps(self._aniso.to_dict(), sort_keys=True)
        return [
            SurfaceSummary(
                aniso=aniso,
                omega0=self._omega0,
                resolution=res,
                perturbation=self._perturbation,
                seed=self._seed,
                output_dir=self._output_dir,
                k=self._k,
                mode=self._mode,
                debug=debug,
            )
            for res in self._resolutions
        ]

    def _run_tasks(self, tasks, parallel_tasks, quiet=False):
        kwargs = {}
        if parallel_tasks == 1:
            kwargs["local_scheduler"] = True
        else:
            kwargs["workers"] = parallel_tasks

        if quiet:
            kwargs["log_level"] = "ERROR"

        success = luigi.build(tasks, **kwargs)

        if success:
            return [t.output() for t in tasks]
        else:
            raise PipelineError("a task of the resolution ladder failed, see the luigi log")

    def execute(self, parallel_tasks=1, debug=False, clean=False, quiet=False):
        """
        Run every rung with `parallel_tasks` workers (if >1 an instance of
        `luigid` must be running) and merge the summaries along `resolution`

        clean: remove previously generated meshes and summaries first
        quiet: if `True` then only errors and critical errors will be logged
        """
        if len(self._resolutions) == 0:
            raise ValidationError("No resolutions given, use `with_resolutions` first")
        if debug and parallel_tasks != 1:
            raise ValidationError("Debugging is only possible when executing in serial mode")
        if clean and Path(self._output_dir).exists():
            shutil.rmtree(self._output_dir)

        tasks = self._make_tasks(debug=debug)
        outputs = self._run_tasks(tasks=tasks, parallel_tasks=parallel_tasks, quiet=quiet)
        return self._merge_outputs(outputs=outputs)

    def _merge_outputs(self, outputs):
        ds = xr.concat([output.open() for output in outputs], dim="resolution")
        return add_convergence_orders(ds)


def add_convergence_orders(ds, variables=RESIDUALS):
    """
    Append `<name>_order`, the two-grid order of each residual between
    consecutive rungs (nan on the coarsest rung), using the mesh size as h
    """
    h = ds.mesh_size.values
    for name in variables:
        if name not in ds:
            continue
        err = ds[name].values
        orders = [np.nan] + [
            convergence_order(err[i - 1], err[i], h[i - 1], h[i]) for i in range(1, len(err))
        ]
        ds[f"{name}_order"] = ("resolution", np.array(orders))
    return ds
