"""Scenarios, convergence studies and the ``gpfv`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .discrete_ops import assemble_laplacian, h1_seminorm, pointwise_interpolant
from .io import (
    GmshFormatError,
    export_vtk,
    parse_gmsh,
    read_gridfunction_csv,
    read_mesh,
    write_gridfunction_csv,
)
from .mesh import Mesh, MeshError, build_fv_mesh_from_triangulation, generate_uniform_rectangle_mesh, validate_admissibility
from .solver import (
    NumericalError,
    Potential,
    SolverConfig,
    StirrerPotential,
    ZeroPotential,
    run_simulation,
)
from .vorticity import detect_vortices, pseudo_vorticity, write_vortex_csv

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


# ------------------------------------------------------------------ meshes


def builtin_mesh_path(name: str) -> Path:
    files = {"disk": "disk_h0.1.msh", "disk-coarse": "disk_h0.2.msh"}
    return Path(str(resources.files("gpfv") / "data" / files[name]))


def resolve_mesh(source: str | Path | Mesh) -> Mesh:
    """Mesh from a builtin name, a ``.msh`` file or a native dump.

    Builtins: ``disk`` (~3k triangles, radius 2), ``disk-coarse`` (~760),
    ``square:N`` (unit square, N x N) and ``rect:NX:NY:LX:LY[:X0:Y0]``.
    """
    if isinstance(source, Mesh):
        return source
    s = str(source)
    if s in ("disk", "disk-coarse"):
        return build_fv_mesh_from_triangulation(parse_gmsh(builtin_mesh_path(s)))
    if s.startswith("square:"):
        n = int(s.split(":")[1])
        return generate_uniform_rectangle_mesh(n, n, 1.0, 1.0)
    if s.startswith("rect:"):
        parts = [float(v) for v in s.split(":")[1:]]
        nx, ny, lx, ly = int(parts[0]), int(parts[1]), parts[2], parts[3]
        origin = (parts[4], parts[5]) if len(parts) >= 6 else (0.0, 0.0)
        return generate_uniform_rectangle_mesh(nx, ny, lx, ly, origin)
    path = Path(s)
    if not path.exists():
        raise FileNotFoundError(f"no such mesh: {s}")
    if path.suffix == ".msh":
        return build_fv_mesh_from_triangulation(parse_gmsh(path))
    return read_mesh(path)


# -------------------------------------------------------------- scenarios


def make_potential(spec: dict | None) -> Potential:
    if not spec or spec.get("type", "zero") in ("zero", "none"):
        return ZeroPotential()
    if spec["type"] == "stirrer":
        return StirrerPotential(float(spec.get("V0", 100.0)), float(spec.get("eps", 0.2)),
                                float(spec.get("omega", 1.0)))
    raise ValueError(f"unknown potential type {spec['type']!r}")


def square_eigenmode(t, x, y, p: int = 1, q: int = 1):
    """Exact free solution ``exp(-i pi^2 (p^2+q^2) t) sin(p pi x) sin(q pi y)`` on the unit square."""
    return np.exp(-1j * math.pi**2 * (p * p + q * q) * t) * np.sin(p * math.pi * x) * np.sin(q * math.pi * y)


def make_initial(spec: dict | None, mesh: Mesh) -> np.ndarray:
    spec = spec or {"type": "gaussian"}
    kind = spec.get("type", "gaussian")
    if kind == "gaussian":
        a = float(spec.get("alpha", 2.0))
        return pointwise_interpolant(lambda x, y: np.exp(-a * (x * x + y * y)) + 0j, mesh)
    if kind == "eigenmode":
        p, q = int(spec.get("p", 1)), int(spec.get("q", 1))
        return pointwise_interpolant(lambda x, y: square_eigenmode(0.0, x, y, p, q), mesh)
    if kind == "file":
        with open(spec["path"]) as fp:
            return read_gridfunction_csv(fp)
    raise ValueError(f"unknown initial condition {kind!r}")


@dataclass(frozen=True)
class Scenario:
    name: str
    mesh: str
    potential: dict
    initial: dict
    lam: float
    tau: float
    T: float
    bc_mode: str = "dirichlet"
    scheme: str = "lie"
    linear_solver: str = "lu"
    exact: Callable | None = None

    def config(self, **overrides) -> SolverConfig:
        kw = dict(tau=self.tau, T=self.T, lam=self.lam, scheme=self.scheme, bc_mode=self.bc_mode,
                  linear_solver=self.linear_solver, cfl_enforce="off")
        kw.update(overrides)
        return SolverConfig(**kw)

    def with_omega(self, omega: float) -> "Scenario":
        return replace(self, potential={**self.potential, "omega": omega})


SCENARIOS: dict[str, Scenario] = {
    "stirred-disk": Scenario(
        name="stirred-disk", mesh="disk",
        potential={"type": "stirrer", "V0": 100.0, "eps": 0.2, "omega": 1.0},
        initial={"type": "gaussian", "alpha": 2.0}, lam=100.0, tau=0.001, T=0.1,
    ),
    "stirred-disk-vortex": Scenario(
        name="stirred-disk-vortex", mesh="disk",
        potential={"type": "stirrer", "V0": 100.0, "eps": 0.2, "omega": 30.0},
        initial={"type": "gaussian", "alpha": 2.0}, lam=100.0, tau=0.001, T=5.0,
    ),
    "square-eigenmode": Scenario(
        name="square-eigenmode", mesh="square:32", potential={"type": "zero"},
        initial={"type": "eigenmode", "p": 1, "q": 1}, lam=0.0, tau=0.1 / 32, T=0.1,
        exact=square_eigenmode,
    ),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


# ------------------------------------------------------------ time order


@dataclass(frozen=True)
class OrderReport:
    delta_t: float
    err_coarse: float  # |U_{2dt} - U_{dt}|_{H1_h}
    err_fine: float  # |U_{dt} - U_{dt/2}|_{H1_h}
    m: float

    @staticmethod
    def from_errors(delta_t, err_coarse, err_fine) -> "OrderReport":
        if not (err_coarse > 0 and err_fine > 0):
            raise NumericalError("zero difference between runs; the setup is degenerate")
        return OrderReport(delta_t, err_coarse, err_fine, math.log(err_coarse / err_fine) / math.log(2.0))

    def csv_row(self) -> str:
        return f"{self.delta_t!r},{self.err_coarse!r},{self.err_fine!r},{self.m!r}"


ORDER_HEADER = "dt,err_coarse,err_fine,m"


class _RunCache:
    """Final states keyed by step count, shared across one study."""

    def __init__(self, scenario: Scenario, T: float, mesh: Mesh | None = None):
        self.scenario = scenario
        self.T = T
        self.mesh = resolve_mesh(mesh if mesh is not None else scenario.mesh)
        self.potential = make_potential(scenario.potential)
        self.U0 = make_initial(scenario.initial, self.mesh)
        self.A = assemble_laplacian(self.mesh, scenario.bc_mode)
        self._states: dict[int, np.ndarray] = {}

    def final(self, n_steps: int) -> np.ndarray:
        if n_steps not in self._states:
            cfg = self.scenario.config(tau=self.T / n_steps, T=self.T, diagnostics_stride=max(1, n_steps))
            self._states[n_steps] = run_simulation(self.mesh, self.potential, self.U0, cfg, A=self.A).U
        return self._states[n_steps]


def _steps_for(T: float, dt: float) -> int:
    n = T / dt
    if abs(n - round(n)) > 1e-8 * max(1.0, n) or round(n) < 2 or round(n) % 2:
        raise ValueError(f"T/delta_t = {n:g} must be an even integer >= 2")
    return int(round(n))


def time_order_estimate(scenario: Scenario | str, delta_t: float, T: float, mesh: Mesh | str | None = None,
                        _cache: _RunCache | None = None) -> OrderReport:
    """Extrapolated time order from runs at ``2 dt``, ``dt`` and ``dt/2`` (H1_h differences at ``T``)."""
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    n = _steps_for(T, delta_t)
    cache = _cache or _RunCache(scenario, T, mesh)
    coarse, mid, fine = cache.final(n // 2), cache.final(n), cache.final(2 * n)
    return OrderReport.from_errors(delta_t, h1_seminorm(cache.mesh, coarse - mid), h1_seminorm(cache.mesh, mid - fine))


def time_order_table(scenario: Scenario | str, T: float, ks: Sequence[int], mesh: Mesh | str | None = None
                     ) -> list[OrderReport]:
    """One :class:`OrderReport` per ``N = 2**k`` steps, reusing runs between rows."""
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    cache = _RunCache(scenario, T, mesh)
    return [time_order_estimate(scenario, T / 2**k, T, _cache=cache) for k in ks]


# ----------------------------------------------------------- space order


@dataclass(frozen=True)
class SpaceOrderReport:
    h: tuple[float, ...]
    err: tuple[float, ...]
    slope: float
    r2: float

    def csv_lines(self) -> list[str]:
        return ["h,err"] + [f"{h!r},{e!r}" for h, e in zip(self.h, self.err)]


def loglog_fit(h: Sequence[float], err: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(err) against log(h) and its R^2."""
    x, y = np.log(np.asarray(h, dtype=float)), np.log(np.asarray(err, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def space_error_vs_reference(scenario: Scenario | str, mesh_family: Sequence[Mesh | str],
                             tau: float | Callable[[float], float]) -> SpaceOrderReport:
    """H1_h error at ``scenario.T`` against ``P_h`` of the closed-form solution, per mesh.

    ``tau`` may be a number or a function of the mesh size ``h``; the value is
    rounded so that ``T/tau`` is an integer.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    if scenario.exact is None:
        raise ValueError(f"scenario {scenario.name!r} has no closed-form reference")
    if len(mesh_family) < 2:
        raise ValueError("need >= 2 resolutions")
    hs, errs = [], []
    for m in mesh_family:
        mesh = resolve_mesh(m)
        t = tau(mesh.h) if callable(tau) else float(tau)
        n = max(1, int(round(scenario.T / t)))
        cfg = scenario.config(tau=scenario.T / n, T=scenario.T, diagnostics_stride=n)
        U0 = pointwise_interpolant(lambda x, y: scenario.exact(0.0, x, y), mesh)
        res = run_simulation(mesh, make_potential(scenario.potential), U0, cfg)
        ref = pointwise_interpolant(lambda x, y: scenario.exact(scenario.T, x, y), mesh)
        hs.append(mesh.h)
        errs.append(h1_seminorm(mesh, res.U - ref))
    slope, r2 = loglog_fit(hs, errs)
    return SpaceOrderReport(tuple(hs), tuple(errs), slope, r2)


# ----------------------------------------------------------- run configs


@dataclass
class RunSpec:
    mesh: Mesh
    potential: Potential
    U0: np.ndarray
    config: SolverConfig
    outputs: Path
    vortex_threshold: float = 0.3


def parse_run_config(doc: dict, base: Path = Path(".")) -> RunSpec:
    """Build a run from the JSON config (keys: mesh, potential, lambda, tau, T, ...)."""
    required = ("tau", "T")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ValueError(f"config is missing {missing}")
    mesh_src = doc.get("mesh", "disk")
    if isinstance(mesh_src, str) and (base / mesh_src).exists():
        mesh_src = base / mesh_src
    mesh = resolve_mesh(mesh_src)
    solver = doc.get("solver", "lu")
    config = SolverConfig(
        tau=float(doc["tau"]), T=float(doc["T"]), lam=float(doc.get("lambda", 1.0)),
        scheme=doc.get("scheme", "lie"), bc_mode=doc.get("bc_mode", "dirichlet"),
        linear_solver=solver, cfl_enforce=doc.get("cfl", "warn"),
        diagnostics_stride=int(doc.get("diagnostics_stride", 1)),
        snapshot_times=tuple(float(t) for t in doc.get("snapshots", ())),
    )
    return RunSpec(mesh, make_potential(doc.get("potential")), make_initial(doc.get("initial"), mesh), config,
                   base / doc.get("outputs", "out"), float(doc.get("vortex_threshold", 0.3)))


def execute_run(spec: RunSpec) -> dict:
    out = spec.outputs
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_simulation(spec.mesh, spec.potential, spec.U0, spec.config)
    except NumericalError as exc:
        if exc.diagnostics is not None:
            with open(out / "diagnostics.csv", "w") as fp:
                exc.diagnostics.write_csv(fp)
        raise
    with open(out / "diagnostics.csv", "w") as fp:
        result.diagnostics.write_csv(fp)
    with open(out / "final_state.csv", "w") as fp:
        write_gridfunction_csv(result.U, fp)
    omega = pseudo_vorticity(spec.mesh, result.U)
    export_vtk(spec.mesh, {"U": result.U, "density": np.abs(result.U), "vorticity": omega}, out / "final.vtk")
    for t, U in sorted(result.snapshots.items()):
        export_vtk(spec.mesh, {"U": U, "vorticity": pseudo_vorticity(spec.mesh, U)}, out / f"snapshot_t{t:.6g}.vtk")
    marks = detect_vortices(spec.mesh, omega, spec.vortex_threshold)
    with open(out / "vortices.csv", "w") as fp:
        write_vortex_csv(marks, fp)
    d = result.diagnostics
    return {"steps": spec.config.n_steps, "mass_drift": abs(d.mass[-1] - d.mass[0]) / d.mass[0],
            "n_vortices": len(marks), "outputs": str(out)}


# --------------------------------------------------------------------- CLI


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpfv", description="Finite-volume Gross-Pitaevskii solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a simulation from a JSON config")
    r.add_argument("--config", required=True)

    o = sub.add_parser("order", help="extrapolated time order (prints dt,err_coarse,err_fine,m)")
    o.add_argument("--scenario", default="stirred-disk")
    o.add_argument("--dt", type=float, nargs="+")
    o.add_argument("--k", type=int, nargs="+", help="use dt = T / 2**k")
    o.add_argument("--T", type=float, default=0.1)
    o.add_argument("--omega", type=float)
    o.add_argument("--mesh")
    o.add_argument("--scheme", choices=("lie", "strang"))
    o.add_argument("--bc-mode", choices=("interior", "dirichlet"))

    s = sub.add_parser("space-order", help="H1_h error vs mesh size against a closed-form solution")
    s.add_argument("--scenario", default="square-eigenmode")
    s.add_argument("--n", type=int, nargs="+", default=[8, 16, 32, 64], help="square resolutions")
    s.add_argument("--tau-per-h", type=float, default=None, help="tau = c*h (default: T/n steps)")

    v = sub.add_parser("validate-mesh", help="admissibility report")
    v.add_argument("--input", required=True)
    v.add_argument("--tol", type=float, default=1e-10)

    x = sub.add_parser("vortices", help="pseudo-vorticity extrema of a stored state")
    x.add_argument("--mesh", required=True)
    x.add_argument("--field", required=True, help="grid function CSV (cell_id,re,im)")
    x.add_argument("--threshold", type=float, default=0.3)
    x.add_argument("--out")
    return p


def _cmd_run(args) -> int:
    path = Path(args.config)
    doc = json.loads(path.read_text())
    summary = execute_run(parse_run_config(doc, base=path.parent))
    print(json.dumps(summary))
    return EXIT_OK


def _cmd_order(args) -> int:
    sc = get_scenario(args.scenario)
    if args.omega is not None:
        sc = sc.with_omega(args.omega)
    if args.scheme:
        sc = replace(sc, scheme=args.scheme)
    if args.bc_mode:
        sc = replace(sc, bc_mode=args.bc_mode)
    dts = list(args.dt or []) + [args.T / 2**k for k in (args.k or [])]
    if not dts:
        raise ValueError("give --dt or --k")
    cache = _RunCache(sc, args.T, args.mesh)
    print(ORDER_HEADER)
    for dt in dts:
        print(time_order_estimate(sc, dt, args.T, _cache=cache).csv_row())
    return EXIT_OK


def _cmd_space_order(args) -> int:
    sc = get_scenario(args.scenario)
    meshes = [f"square:{n}" for n in args.n]
    if args.tau_per_h is not None:
        tau = lambda h: args.tau_per_h * h  # noqa: E731
    else:
        by_h = {}
        for n in args.n:
            by_h[round(math.sqrt(2) / n, 12)] = sc.T / n
        tau = lambda h: by_h[round(h, 12)]  # noqa: E731
    rep = space_error_vs_reference(sc, meshes, tau)
    print("\n".join(rep.csv_lines()))
    print(f"# slope={rep.slope!r} r2={rep.r2!r}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    src = Path(args.input)
    if src.suffix == ".msh":
        mesh = build_fv_mesh_from_triangulation(parse_gmsh(src), tol=-math.inf)
    else:
        mesh = resolve_mesh(args.input)
    rep = validate_admissibility(mesh, args.tol)
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.orthogonality_defect <= args.tol else EXIT_INPUT


def _cmd_vortices(args) -> int:
    mesh = resolve_mesh(args.mesh)
    with open(args.field) as fp:
        U = read_gridfunction_csv(fp)
    if U.shape != (mesh.n_cells,):
        raise ValueError("field does not match the mesh")
    marks = detect_vortices(mesh, pseudo_vorticity(mesh, U), args.threshold)
    if args.out:
        with open(args.out, "w") as fp:
            write_vortex_csv(marks, fp)
    else:
        write_vortex_csv(marks, sys.stdout)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run, "order": _cmd_order, "space-order": _cmd_space_order,
    "validate-mesh": _cmd_validate, "vortices": _cmd_vortices,
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"gpfv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, MeshError, GmshFormatError, json.JSONDecodeError) as exc:
        print(f"gpfv: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(cli_main())
