"""Training run, data-driven extension and run comparison.

The reference run alternates constitutive integration over the whole history
with a linear equilibrium solve whose right-hand side carries the plastic
strain of the previous iteration. The data-driven run replaces the full
integration over the forecast window by a forecast of the macro modes,
corrected from integrations at a few reference elements, and solves
equilibrium with the multi-time PGD solver.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corrector, hodmd
from .errors import ArgumentError, ConvergenceError, MTPGDError
from .fem import (
    ElasticSolver,
    Material,
    assemble_stiffness,
    element_strain_operator,
    evaluate_strain,
    external_force,
    plastic_force_operator,
    point_weights,
)
from .incremental import solve_incremental
from .loading import LoadProgram
from .mesh import dog_bone, read_mesh, rectangular_bar
from .pgd_solver import DirichletData, SeparatedRhs, mtpgd_solve
from .plasticity import (
    HistorySnapshot,
    PlasticState,
    integrate_history,
    integrate_history_sparse,
    read_snapshot,
    write_snapshot,
)
from .separated import SeparatedField, TimeGrid, export_modes, mtpgd_decompose

FORMAT_VERSION = 1


class PhaseError(MTPGDError):
    """Failure inside a named phase of a run."""

    def __init__(self, phase, cause):
        super().__init__(f"[{phase}] {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class RunConfig:
    """Flat run configuration; every field maps to one config-file key."""

    mesh_file: str = ""
    mesh_kind: str = "bar"
    length: float = 100.0
    width: float = 20.0
    nx: int = 10
    ny: int = 5
    clamp: bool = False

    young_modulus: float = 210e3
    poisson_ratio: float = 0.3
    yield_stress: float = 205.0
    hardening_modulus: float = 2e3

    amplitude: float = 0.125
    cycle_duration: float = 20.0
    waveform: str = "reversed"
    drift: float = 0.0

    n_micro: int = 200
    training_cycles: int = 20
    target_cycles: int = 60

    pgd_tol: float = 1e-6
    pgd_max_rank: int = 50
    decompose_tol: float = 1e-4
    decompose_max_rank: int = 4

    hodmd_d: int = 0
    hodmd_tol_svd: float = 1e-8
    hodmd_tol_spectral: float = 1e-6
    hodmd_resample: int = 0

    reference_count: int = 4
    enrich_tol: float = 1e-3
    max_extra_rank: int = 10
    extension: str = "zero"

    outer_tol: float = 1e-4
    max_outer: int = 30
    anderson_depth: int = 5
    reference_start: str = "incremental"
    reference_solver: str = "direct"

    output_dir: str = ""
    seed: int = 0

    def validate(self):
        if not self.training_cycles < self.target_cycles:
            raise ArgumentError("training_cycles must be smaller than target_cycles")
        if self.training_cycles < 1 or self.n_micro < 1:
            raise ArgumentError("training_cycles and n_micro must be positive")
        for name in ("pgd_tol", "decompose_tol", "hodmd_tol_svd", "hodmd_tol_spectral", "enrich_tol", "outer_tol"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        if self.mesh_kind not in ("bar", "dogbone"):
            raise ArgumentError(f"unknown mesh_kind {self.mesh_kind!r}")
        if self.extension not in ("zero", "gappy"):
            raise ArgumentError(f"unknown extension {self.extension!r}")
        if self.reference_start not in ("incremental", "zero"):
            raise ArgumentError(f"unknown reference_start {self.reference_start!r}")
        if self.reference_solver not in ("direct", "mtpgd"):
            raise ArgumentError(f"unknown reference_solver {self.reference_solver!r}")
        if self.mesh_file and not Path(self.mesh_file).is_file():
            raise ArgumentError(f"mesh file {self.mesh_file!r} not found")
        self.material()
        self.load_program()
        return self

    def material(self):
        return Material(self.young_modulus, self.poisson_ratio, self.yield_stress, self.hardening_modulus)

    def load_program(self):
        return LoadProgram(self.amplitude, self.cycle_duration, self.target_cycles, self.waveform, self.drift)

    def mesh(self):
        if self.mesh_file:
            return read_mesh(self.mesh_file)
        if self.mesh_kind == "dogbone":
            return dog_bone(self.length, self.width, 0.5 * self.width, 0.4 * self.length, self.nx, self.ny, self.clamp)
        return rectangular_bar(self.length, self.width, self.nx, self.ny, self.clamp)

    def training_grid(self):
        return TimeGrid(self.n_micro, self.training_cycles, self.cycle_duration, 0)

    def forecast_grid(self):
        n = self.target_cycles - self.training_cycles
        return TimeGrid(self.n_micro, n, self.cycle_duration, self.training_cycles)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def save(self, path):
        cp = configparser.ConfigParser()
        cp["run"] = {k: str(v) for k, v in self.to_dict().items()}
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        out = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ArgumentError(f"unknown configuration key {key!r}")
            out[key] = _coerce(kinds[key], raw, key)
        return cls(**out)

    @classmethod
    def load(cls, path, overrides=None):
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ArgumentError(f"{path}: {exc}") from exc
        if "run" not in cp:
            raise ArgumentError(f"{path}: missing [run] section")
        values = dict(cp["run"])
        values.update(overrides or {})
        return cls.from_mapping(values)


def _coerce(kind, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if kind in ("bool", bool):
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ArgumentError(f"invalid value {raw!r} for {key}") from exc
    return raw


@dataclass
class RunReport:
    """Diagnostics of one run phase.

    ``evaluations_per_pass`` counts pointwise return-mapping calls in one
    outer pass; ``evaluations`` sums them over all passes. Timings are wall
    clock seconds and do not take part in equality.
    """

    phase: str
    iterations: int = 0
    outer_changes: list = field(default_factory=list)
    equilibrium_residual: float = 0.0
    evaluations: int = 0
    evaluations_per_pass: int = 0
    n_points: int = 0
    reference_points: int = 0
    n_times: int = 0
    rank: int = 0
    rank_star: int = 0
    eps_hat: float = float("nan")
    eps_hat_star: float = float("nan")
    eps_hat_star_sampled: float = float("nan")
    reference_elements: list = field(default_factory=list)
    enrichment_history: list = field(default_factory=list)
    timings: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _Timer:
    def __init__(self, timings, key):
        self.timings, self.key = timings, key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timings[self.key] = self.timings.get(self.key, 0.0) + time.perf_counter() - self.t0


class Problem:
    """Discrete operators shared by every phase of a run."""

    def __init__(self, config):
        self.config = config
        self.mesh = config.mesh()
        self.material = config.material()
        self.load = config.load_program()
        self.K = assemble_stiffness(self.mesh, self.material)
        self.fixed, self.scale = self.mesh.dirichlet_dofs()
        self.solver = ElasticSolver(self.K, self.fixed)
        self.f_ref = external_force(self.mesh, self.load.body_force)
        self.P = plastic_force_operator(self.mesh, self.material)
        self.point_weights = point_weights(self.mesh)
        self.row_weights = np.tile(self.point_weights, 3)

    @property
    def n_points(self):
        return self.mesh.n_points

    def rhs(self, times, eps_p):
        """Nodal right-hand side at the given instants; ``eps_p`` is (3n, n_t)."""
        f = np.outer(self.f_ref, self.load.force_factor(times))
        return f + self.P @ eps_p

    def solve_direct(self, grid, eps_p):
        t = grid.times()
        values = np.outer(self.scale, self.load.displacement(t))
        return self.solver.solve(self.rhs(t, eps_p), values)

    def solve_incremental(self, grid, initial_state):
        t = grid.times()
        values = np.outer(self.scale, self.load.displacement(t))
        f = np.outer(self.f_ref, self.load.force_factor(t))
        return solve_incremental(self.mesh, self.material, f, self.fixed, values, initial_state)

    def dirichlet(self, grid):
        g = self.load.displacement(grid.times())
        return DirichletData.from_signal(self.fixed, self.scale, g, grid)

    def separated_rhs(self, grid, plastic):
        force = None
        if np.any(self.f_ref):
            fac = self.load.force_factor(grid.times())
            force = SeparatedField(self.f_ref[None, :], *_signal_pair(fac, grid)).normalized()
        pl = None
        if plastic is not None and plastic.rank:
            pl = SeparatedField((self.P @ plastic.spatial.T).T, plastic.micro, plastic.macro)
        return SeparatedRhs(force, pl)

    def solve_pgd(self, grid, plastic):
        cfg = self.config
        return mtpgd_solve(
            self.K,
            self.separated_rhs(grid, plastic),
            grid,
            self.dirichlet(grid),
            tol=cfg.pgd_tol,
            max_rank=cfg.pgd_max_rank,
            solver=self.solver,
        )

    def equilibrium_residual(self, grid, u, eps_p):
        """Relative residual of the free equations over all instants."""
        rhs = self.rhs(grid.times(), eps_p)
        free = self.solver.free
        r = (self.K @ u)[free] - rhs[free]
        den = np.linalg.norm(rhs[free] - self.solver.Kfd @ u[self.fixed])
        return float(np.linalg.norm(r) / den) if den > 0 else float(np.linalg.norm(r))

    def point_strain(self, u):
        """(n_points, 3, n_t) strain from a dense displacement history."""
        return evaluate_strain(self.mesh, u)


def _signal_pair(signal, grid):
    from .separated import separate_signal

    return separate_signal(signal, grid)


@dataclass
class ReferenceResult:
    """Dense fields of a full-integration run over one window."""

    config: RunConfig
    grid: TimeGrid
    displacement: np.ndarray
    snapshot: HistorySnapshot
    initial_state: PlasticState
    final_state: PlasticState
    report: RunReport

    def plastic_history(self):
        return self.snapshot.data

    def displacement_history(self):
        return self.displacement


class AndersonMixer:
    """Anderson acceleration of a fixed point ``x = G(x)``.

    ``update(x, g)`` takes the current iterate and its image and returns the
    next iterate. With ``depth = 0`` it returns ``g`` (plain fixed point).
    """

    def __init__(self, depth=5):
        self.depth = int(depth)
        self._x = self._f = self._g = None
        self._dF, self._dG = [], []

    def update(self, x, g):
        f = g - x
        if self.depth <= 0:
            return g
        if self._f is not None:
            self._dF.append((f - self._f).ravel())
            self._dG.append((g - self._g).ravel())
            del self._dF[: -self.depth], self._dG[: -self.depth]
        self._f, self._g = f, g
        if not self._dF:
            return g
        dF = np.column_stack(self._dF)
        gamma = np.linalg.lstsq(dF, f.ravel(), rcond=1e-10)[0]
        return g - (np.column_stack(self._dG) @ gamma).reshape(g.shape)


def _fixed_point(problem, grid, initial_state, phase, use_pgd=False):
    cfg = problem.config
    report = RunReport(phase, n_points=problem.n_points, n_times=grid.n_total)
    timings = report.timings
    if cfg.reference_start == "incremental":
        with _Timer(timings, "incremental"):
            eps_p = problem.solve_incremental(grid, initial_state)[1]
    else:
        eps_p = np.zeros((3 * problem.n_points, grid.n_total))
    mixer = AndersonMixer(cfg.anderson_depth)
    u_prev = None
    for it in range(1, cfg.max_outer + 1):
        with _Timer(timings, "solve"):
            if use_pgd:
                plastic = SeparatedField(*_dense_to_triads(eps_p, grid)) if np.any(eps_p) else None
                u = problem.solve_pgd(grid, plastic).field.full()
            else:
                u = problem.solve_direct(grid, eps_p)
        if u_prev is not None:
            change = float(np.linalg.norm(u - u_prev) / max(np.linalg.norm(u), 1e-300))
            report.outer_changes.append(change)
        with _Timer(timings, "constitutive"):
            snap, final = integrate_history(problem.mesh, problem.material, problem.point_strain(u), initial_state)
        report.evaluations += snap.evaluations
        report.evaluations_per_pass = snap.evaluations
        report.iterations = it
        if np.array_equal(snap.data, eps_p):
            break
        if u_prev is not None and change < cfg.outer_tol:
            break
        u_prev = u
        eps_p = mixer.update(eps_p, snap.data)
    else:
        raise ConvergenceError(
            f"{phase}: outer iterations did not converge in {cfg.max_outer} passes", None, report.outer_changes
        )
    report.equilibrium_residual = problem.equilibrium_residual(grid, u, eps_p)
    return u, snap, final, report


def _dense_to_triads(data, grid):
    f = mtpgd_decompose(data, grid, tol=1e-10, max_rank=grid.n_macro * grid.n_micro)
    return f.spatial, f.micro, f.macro


def run_reference(config, problem=None):
    """Full-integration run over the training window ``(0, T_K]``."""
    config.validate()
    problem = problem or Problem(config)
    grid = config.training_grid()
    state0 = PlasticState.zeros(problem.n_points)
    try:
        u, snap, final, report = _fixed_point(problem, grid, state0, "reference", config.reference_solver == "mtpgd")
    except ConvergenceError:
        raise
    except MTPGDError as exc:
        raise PhaseError("reference", exc) from exc
    return ReferenceResult(config, grid, u, snap, state0, final, report)


def run_extended_reference(config, trained, problem=None):
    """Full-integration run over the forecast window, started from ``T_K``."""
    problem = problem or Problem(config)
    grid = config.forecast_grid()
    try:
        u, snap, final, report = _fixed_point(problem, grid, trained.final_state, "extended-reference")
    except ConvergenceError:
        raise
    except MTPGDError as exc:
        raise PhaseError("extended-reference", exc) from exc
    return ReferenceResult(config, grid, u, snap, trained.final_state, final, report)


@dataclass
class DataDrivenResult:
    """Separated fields of the data-driven extension over ``(T_K, T_N]``."""

    config: RunConfig
    grid: TimeGrid
    base: SeparatedField
    models: list
    predictor: SeparatedField
    bundle: corrector.PredictionBundle
    plastic: SeparatedField
    displacement: SeparatedField
    truth_sampled: np.ndarray
    pgd_residual: float
    report: RunReport

    def plastic_history(self):
        return self.plastic.full()

    def displacement_history(self):
        return self.displacement.full()


def fit_macro_models(base, config):
    """One DMD-d model per macro mode of ``base``."""
    models = []
    for b in base.macro:
        d = config.hodmd_d
        n = config.hodmd_resample or len(b)
        if d <= 0:
            cands = range(1, max(1, (n - 1) // 2) + 1)
            d = hodmd.select_lag(b, cands, tol_svd=config.hodmd_tol_svd, tol_spectral=config.hodmd_tol_spectral)
        d = min(d, (n - 1) // 2)
        if config.hodmd_resample and config.hodmd_resample < len(b):
            _, model = hodmd.forecast_series(
                b, 1, d, config.hodmd_tol_svd, config.hodmd_tol_spectral, resample=config.hodmd_resample
            )
        else:
            model = hodmd.hodmd_fit(b, d, config.hodmd_tol_svd, config.hodmd_tol_spectral)
        models.append(model)
    return models


def forecast_macro(models, base, horizon, config):
    if config.hodmd_resample and config.hodmd_resample < base.n_macro:
        out = [
            hodmd.forecast_series(b, horizon, m.d, config.hodmd_tol_svd, config.hodmd_tol_spectral,
                                  resample=config.hodmd_resample)[0]
            for b, m in zip(base.macro, models)
        ]
        return SeparatedField(base.spatial, base.micro, np.array(out).reshape(base.rank, horizon))
    return corrector.predict_nonlinear(base, models, horizon)


def _reference_strain_modes(problem, reference, u_field):
    """Strain spatial modes at the reference points, rows (point, component)."""
    B, dofs = element_strain_operator(problem.mesh, reference.elements)
    ue = u_field.spatial[:, dofs]  # (m, J, 8)
    eps = np.einsum("egia,mea->megi", B, ue)
    return eps.reshape(u_field.rank, -1)  # index (e, g, i) -> point-major


def run_datadriven(config, trained, problem=None, truth=None):
    """Forecast, correct and re-solve over ``(T_K, T_N]``.

    ``truth`` (an extended reference result) is optional; when given the
    report carries the prediction errors against it.
    """
    config.validate()
    problem = problem or Problem(config)
    train_grid, grid = config.training_grid(), config.forecast_grid()
    report = RunReport("data-driven", n_points=problem.n_points, n_times=grid.n_total)
    timings = report.timings
    w = problem.row_weights

    phase = "decompose"
    try:
        with _Timer(timings, "decompose"), warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            try:
                base = mtpgd_decompose(
                    trained.snapshot, train_grid, config.decompose_tol, config.decompose_max_rank, weights=w
                )
            except ConvergenceError as exc:
                base = exc.best
        phase = "forecast"
        with _Timer(timings, "forecast"):
            models = fit_macro_models(base, config)
            predictor = forecast_macro(models, base, grid.n_macro, config)
        phase = "select"
        reference = corrector.select_reference_points(trained.final_state, config.reference_count)
        report.reference_elements = reference.elements.tolist()
        report.reference_points = len(reference.points)
        report.rank = base.rank

        phase = "correct"
        basis = base.spatial if config.extension == "gappy" else None
        plastic = predictor
        u_prev = None
        bundle = None
        truth_r = None
        for it in range(1, config.max_outer + 1):
            with _Timer(timings, "solve"):
                sol = problem.solve_pgd(grid, plastic)
            u = sol.field
            if u_prev is not None:
                diff = (u + u_prev.scaled(-1.0)).norm()
                change = float(diff / max(u.norm(), 1e-300))
                report.outer_changes.append(change)
                if change < config.outer_tol:
                    break
            with _Timer(timings, "constitutive"):
                S = _reference_strain_modes(problem, reference, u)
                strain_r = SeparatedField(S, u.micro, u.macro).full()
                strain_r = strain_r.reshape(len(reference.points), 3, grid.n_total)
                snap, _ = integrate_history_sparse(
                    problem.mesh, problem.material, strain_r, trained.final_state, reference.points
                )
            truth_r = snap.data
            report.evaluations += snap.evaluations
            report.evaluations_per_pass = snap.evaluations
            report.iterations = it
            with _Timer(timings, "correct"):
                bundle = corrector.correct_prediction(
                    base, predictor, reference, w, truth_r, grid,
                    enrich_tol=config.enrich_tol, max_extra_rank=config.max_extra_rank,
                    basis_extension=basis is not None,
                )
            plastic = bundle.corrected()
            u_prev = u
        else:
            raise ConvergenceError(
                f"data-driven: outer iterations did not converge in {config.max_outer} passes",
                None,
                report.outer_changes,
            )
    except ConvergenceError:
        raise
    except MTPGDError as exc:
        raise PhaseError(phase, exc) from exc

    report.rank_star = plastic.rank
    report.enrichment_history = list(bundle.enrichment_history)
    u_dense = u.full()
    report.equilibrium_residual = problem.equilibrium_residual(grid, u_dense, plastic.full())
    rows = reference.rows
    report.eps_hat_star_sampled = corrector.prediction_error(plastic, truth_r, w, rows)
    if truth is not None:
        ref = truth.plastic_history()
        report.eps_hat = corrector.prediction_error(predictor, ref, w)
        report.eps_hat_star = corrector.prediction_error(plastic, ref, w)
    return DataDrivenResult(
        config, grid, base, models, predictor, bundle, plastic, u, truth_r, sol.residual, report
    )


# comparison ------------------------------------------------------------------

# keys that define the physical problem; everything else is a method setting
_PROBLEM_KEYS = (
    "mesh_file", "mesh_kind", "length", "width", "nx", "ny", "clamp",
    "young_modulus", "poisson_ratio", "yield_stress", "hardening_modulus",
    "amplitude", "cycle_duration", "waveform", "drift",
    "n_micro", "training_cycles", "target_cycles",
)


def compare_runs(ref, dd, path=None):
    """Errors, speed-ups and evaluation-count ratio between two runs.

    Both arguments provide ``plastic_history()``, ``displacement_history()``
    and ``report``; ``ref`` is the full-integration run over the same window.
    """
    c1 = {k: getattr(ref.config, k) for k in _PROBLEM_KEYS}
    c2 = {k: getattr(dd.config, k) for k in _PROBLEM_KEYS}
    if c1 != c2:
        diff = sorted(k for k in c1 if c1[k] != c2[k])
        raise ArgumentError(f"runs use different configurations: {', '.join(diff)}")
    ep_ref, ep_dd = ref.plastic_history(), dd.plastic_history()
    w = np.tile(point_weights(ref.config.mesh()), 3)
    u_ref, u_dd = ref.displacement_history(), dd.displacement_history()
    du = np.linalg.norm(u_dd - u_ref)
    nu = np.linalg.norm(u_ref)
    r1, r2 = ref.report, dd.report

    def ratio(key):
        a, b = r1.timings.get(key, 0.0), r2.timings.get(key, 0.0)
        return a / b if b > 0 else float("nan")

    t1, t2 = sum(r1.timings.values()), sum(r2.timings.values())
    rows = [
        ("eps_hat", r2.eps_hat if np.isfinite(r2.eps_hat) else 0.0, "-"),
        ("eps_hat_star", corrector.prediction_error(ep_dd, ep_ref, w) if np.any(ep_ref) else 0.0, "-"),
        ("displacement_error", du / nu if nu > 0 else 0.0, "-"),
        ("speedup_constitutive", ratio("constitutive"), "-"),
        ("speedup_overall", t1 / t2 if t2 > 0 else float("nan"), "-"),
        ("evaluations_reference", r1.evaluations_per_pass, "calls"),
        ("evaluations_datadriven", r2.evaluations_per_pass, "calls"),
        ("evaluation_ratio", r2.evaluations_per_pass / r1.evaluations_per_pass, "-"),
        ("outer_iterations_reference", r1.iterations, "-"),
        ("outer_iterations_datadriven", r2.iterations, "-"),
    ]
    if path is not None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["metric", "value", "unit"])
            wr.writerows(rows)
    return {k: v for k, v, _ in rows}


# persistence -----------------------------------------------------------------


def _write_manifest(directory, kind, files, config):
    config.save(directory / "config.ini")
    manifest = {"format_version": FORMAT_VERSION, "kind": kind, "files": sorted(files)}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _read_manifest(directory, kind):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise OSError(f"{directory}: cannot read manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ArgumentError(f"{directory}: unsupported format version {manifest.get('format_version')}")
    if manifest.get("kind") != kind:
        raise ArgumentError(f"{directory}: expected a {kind} run, found {manifest.get('kind')}")
    return manifest


def _write_report(directory, report):
    (directory / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    with open(directory / "outer.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration [-]", "relative displacement change [-]"])
        for k, c in enumerate(report.outer_changes, start=2):
            wr.writerow([k, repr(c)])


def save_reference(result, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_snapshot(directory / "plastic.bin", result.snapshot.data)
    write_snapshot(directory / "displacement.bin", result.displacement)
    np.savez(
        directory / "state.npz",
        initial_eps_p=result.initial_state.eps_p,
        initial_eps_bar=result.initial_state.eps_bar,
        eps_p=result.final_state.eps_p,
        eps_bar=result.final_state.eps_bar,
    )
    _write_report(directory, result.report)
    files = ["plastic.bin", "displacement.bin", "state.npz", "report.json", "outer.csv", "config.ini"]
    _write_manifest(directory, result.report.phase, files, result.config)


def load_reference(directory, kind="reference"):
    directory = Path(directory)
    _read_manifest(directory, kind)
    config = RunConfig.load(directory / "config.ini")
    st = np.load(directory / "state.npz")
    report = RunReport.from_dict(json.loads((directory / "report.json").read_text()))
    grid = config.training_grid() if kind == "reference" else config.forecast_grid()
    return ReferenceResult(
        config,
        grid,
        read_snapshot(directory / "displacement.bin"),
        HistorySnapshot(read_snapshot(directory / "plastic.bin")),
        PlasticState(st["initial_eps_p"], st["initial_eps_bar"]),
        PlasticState(st["eps_p"], st["eps_bar"]),
        report,
    )


def _save_field(path, f):
    np.savez(path, spatial=f.spatial, micro=f.micro, macro=f.macro)


def _load_field(path):
    z = np.load(path)
    return SeparatedField(z["spatial"], z["micro"], z["macro"])


def save_datadriven(result, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _save_field(directory / "plastic.npz", result.plastic)
    _save_field(directory / "displacement.npz", result.displacement)
    _save_field(directory / "predictor.npz", result.predictor)
    _save_field(directory / "base.npz", result.base)
    write_snapshot(directory / "sampled_truth.bin", result.truth_sampled)
    hodmd.write_model_csv(directory / "hodmd_models.csv", result.models)
    export_modes(result.base, directory / "modes", "training", result.config.training_grid())
    with open(directory / "reference_elements.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["element [-]"])
        wr.writerows([[e] for e in result.report.reference_elements])
    _write_report(directory, result.report)
    files = [
        "plastic.npz", "displacement.npz", "predictor.npz", "base.npz", "sampled_truth.bin",
        "hodmd_models.csv", "modes", "reference_elements.csv", "report.json", "outer.csv", "config.ini",
    ]
    _write_manifest(directory, "data-driven", files, result.config)


@dataclass
class StoredRun:
    """Minimal view of a persisted run for comparison."""

    config: RunConfig
    report: RunReport
    plastic: np.ndarray
    displacement: np.ndarray

    def plastic_history(self):
        return self.plastic

    def displacement_history(self):
        return self.displacement


def load_run(directory):
    """Load any persisted run as a :class:`StoredRun`."""
    directory = Path(directory)
    try:
        kind = json.loads((directory / "manifest.json").read_text()).get("kind")
    except (OSError, ValueError) as exc:
        raise OSError(f"{directory}: cannot read manifest ({exc})") from exc
    if kind == "data-driven":
        _read_manifest(directory, kind)
        config = RunConfig.load(directory / "config.ini")
        report = RunReport.from_dict(json.loads((directory / "report.json").read_text()))
        return StoredRun(
            config, report, _load_field(directory / "plastic.npz").full(),
            _load_field(directory / "displacement.npz").full(),
        )
    r = load_reference(directory, kind)
    return StoredRun(r.config, r.report, r.snapshot.data, r.displacement)
