"""Split-step time integration of the cubic Schroedinger / Gross-Pitaevskii equation

    i dpsi/dt + Laplace psi = lambda |psi|^2 psi + V(t, x) psi

on a finite-volume mesh with homogeneous Dirichlet data.

One Lie step applies, in order, the cubic phase, the potential phase
``exp(-i G_n)`` with ``G_n(tau, x) = int_0^tau V(t_n + s, x) ds``, and the
Cayley (Pade(1,1)) approximation of ``exp(i tau A)``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .discrete_ops import BCMode, LaplaceOperator, assemble_laplacian, h1_seminorm, lp_norm
from .mesh import Mesh

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite state or linear-solver failure."""

    def __init__(self, message: str, step: int | None = None, diagnostics=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.diagnostics = diagnostics


class CFLViolation(NumericalError):
    pass


# -------------------------------------------------------------- potentials


class Potential:
    """Real potential ``V(t, x, y)`` with its time antiderivative.

    Subclasses override :meth:`value` and, if a closed form is known,
    :meth:`antiderivative`. The fallback integrates ``value`` adaptively.
    """

    def value(self, t: float, x, y):
        raise NotImplementedError

    def antiderivative(self, t_n: float, tau: float, x, y):
        from scipy.integrate import quad_vec

        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if tau == 0:
            return np.zeros(np.broadcast(x, y).shape)
        res, _ = quad_vec(lambda s: np.asarray(self.value(t_n + s, x, y), dtype=float), 0.0, tau,
                          epsabs=1e-12, epsrel=1e-12)
        return res


class ZeroPotential(Potential):
    def value(self, t, x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def antiderivative(self, t_n, tau, x, y):
        return self.value(t_n, x, y)


@dataclass(frozen=True)
class StirrerPotential(Potential):
    """Harmonic trap with a rotating quadrupole stirrer.

    ``V = V0 r^2 (1 + eps cos(2 theta - omega t))``, evaluated in Cartesian
    form ``V0 (r^2 + eps((x^2 - y^2) cos wt + 2xy sin wt))``.
    """

    V0: float = 100.0
    eps: float = 0.2
    omega: float = 1.0

    def value(self, t, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        wt = self.omega * t
        return self.V0 * (x * x + y * y + self.eps * ((x * x - y * y) * math.cos(wt) + 2 * x * y * math.sin(wt)))

    def antiderivative(self, t_n, tau, x, y):
        return stirrer_antiderivative(t_n, tau, x, y, self.V0, self.eps, self.omega)


def stirrer_antiderivative(t_n, tau, x, y, V0, eps, omega):
    """Closed-form ``int_0^tau V(t_n + s, x) ds`` for :class:`StirrerPotential`.

    Uses ``(sin(a) - sin(b))/omega = tau cos((a+b)/2) sinc`` so that small
    ``omega*tau`` loses no digits; below 1e-12 the left-endpoint form is used.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    r2 = x * x + y * y
    c2, s2 = x * x - y * y, 2 * x * y  # r^2 cos 2theta, r^2 sin 2theta
    if abs(omega * tau) < 1e-12:
        phi = omega * t_n
        osc = tau * (c2 * math.cos(phi) + s2 * math.sin(phi))
    else:
        half = 0.5 * omega * tau
        phi = omega * (t_n + 0.5 * tau)
        # r^2 cos(2theta - phi) = c2 cos(phi) + s2 sin(phi)
        osc = (2.0 * math.sin(half) / omega) * (c2 * math.cos(phi) + s2 * math.sin(phi))
    return V0 * (r2 * tau + eps * osc)


@dataclass(frozen=True)
class CallablePotential(Potential):
    """Wrap a user function; without ``antiderivative_fn`` the quadrature fallback is used."""

    value_fn: Callable
    antiderivative_fn: Callable | None = None

    def __post_init__(self):
        if self.antiderivative_fn is None:
            warnings.warn("no closed-form antiderivative: using adaptive quadrature (tol 1e-12)", stacklevel=3)

    def value(self, t, x, y):
        return self.value_fn(t, x, y)

    def antiderivative(self, t_n, tau, x, y):
        if self.antiderivative_fn is None:
            return super().antiderivative(t_n, tau, x, y)
        return self.antiderivative_fn(t_n, tau, x, y)


# ------------------------------------------------------------------ config


class Scheme(str, Enum):
    LIE = "lie"
    STRANG = "strang"


@dataclass(frozen=True)
class LinearSolver:
    """``kind`` is ``"lu"`` (sparse LU, cached) or ``"cg"`` (COCG iterations)."""

    kind: str = "lu"
    tol: float = 1e-13
    maxit: int = 2000

    @classmethod
    def parse(cls, value) -> "LinearSolver":
        if isinstance(value, cls):
            return value
        if value is None:
            return cls()
        if isinstance(value, str):
            kind = value.lower()
            return cls(kind={"directlu": "lu", "direct": "lu"}.get(kind, kind))
        if isinstance(value, dict):
            kind = str(value.get("kind", value.get("type", "lu"))).lower()
            return cls(kind={"directlu": "lu", "direct": "lu"}.get(kind, kind),
                       tol=float(value.get("tol", 1e-13)), maxit=int(value.get("maxit", 2000)))
        raise ValueError(f"bad linear solver spec {value!r}")


@dataclass(frozen=True)
class SolverConfig:
    tau: float
    T: float
    lam: float = 1.0
    scheme: Scheme = Scheme.LIE
    bc_mode: BCMode = BCMode.DIRICHLET_FLUX
    linear_solver: LinearSolver = field(default_factory=LinearSolver)
    cfl_enforce: str = "warn"  # warn | error | off
    dimension: int = 2
    diagnostics_stride: int = 1
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "bc_mode", BCMode.parse(self.bc_mode))
        object.__setattr__(self, "linear_solver", LinearSolver.parse(self.linear_solver))
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.T < self.tau * (1 - 1e-12):
            raise ValueError("T must be >= tau")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-8 * max(1.0, n):
            raise ValueError(f"T/tau = {n} is not an integer")
        if self.cfl_enforce not in ("warn", "error", "off"):
            raise ValueError("cfl_enforce must be warn, error or off")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.diagnostics_stride < 1:
            raise ValueError("diagnostics_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def with_tau(self, tau: float) -> "SolverConfig":
        return replace(self, tau=tau)


def cfl_satisfied(tau: float, h: float, dimension: int = 2) -> bool:
    """``tau |log h|^2 <= 1`` in 2D, ``tau <= h`` in 3D."""
    if dimension == 2:
        return tau * math.log(h) ** 2 <= 1.0
    return tau <= h


def check_cfl(config: SolverConfig, h: float) -> None:
    if config.cfl_enforce == "off" or cfl_satisfied(config.tau, h, config.dimension):
        return
    msg = f"CFL condition violated: tau={config.tau:g}, h={h:g}, d={config.dimension}"
    if config.cfl_enforce == "error":
        raise CFLViolation(msg)
    log.warning(msg)


# ------------------------------------------------------------------ flows


def nonlinear_flow(U, tau: float, lam: float = 1.0) -> np.ndarray:
    """Exact flow of ``i u' = lam |u|^2 u``: pointwise phase rotation."""
    U = np.ascontiguousarray(U, dtype=np.complex128)
    return _kernels.cubic_phase(U, float(tau * lam))


def potential_flow(U, G) -> np.ndarray:
    """Multiply by ``exp(-i G)`` for a real phase field ``G``."""
    G = np.asarray(G)
    if np.iscomplexobj(G):
        if np.any(G.imag != 0):
            raise ValueError("potential phase must be real")
        G = G.real
    U = np.ascontiguousarray(U, dtype=np.complex128)
    if G.shape != U.shape:
        raise ValueError("phase and state have different lengths")
    return _kernels.phase_rotate(U, np.ascontiguousarray(G, dtype=np.float64))


class CayleyPropagator:
    """``X = (I - i tau/2 A)^-1 (I + i tau/2 A) U`` for a fixed ``(A, tau)``.

    The system is solved in the symmetric form ``(M - i tau/2 S) X = (M + i tau/2 S) U``.
    With ``kind="lu"`` the factorisation is computed once.
    """

    def __init__(self, A: LaplaceOperator, tau: float, solver: LinearSolver | str | None = None):
        self.A = A
        self.tau = float(tau)
        self.solver = LinearSolver.parse(solver)
        M = sp.diags(A.areas.astype(np.complex128))
        S = A.stiffness.astype(np.complex128)
        half = 0.5j * self.tau
        self._lhs = sp.csc_matrix(M - half * S)
        self._rhs = sp.csr_matrix(M + half * S)
        self._lu = None
        if self.solver.kind == "lu":
            self._lu = spla.splu(self._lhs, permc_spec="COLAMD")
        elif self.solver.kind != "cg":
            raise ValueError(f"unknown linear solver {self.solver.kind!r}")
        self._diag = self._lhs.diagonal()
        self.last_iterations = 0

    def __call__(self, U) -> np.ndarray:
        if self.tau == 0:
            return np.array(U, dtype=np.complex128)
        b = self._rhs @ np.asarray(U, dtype=np.complex128)
        if self._lu is not None:
            return self._lu.solve(b)
        return self._cocg(b, x0=np.asarray(U, dtype=np.complex128))

    def _cocg(self, b, x0):
        """Jacobi-preconditioned conjugate orthogonal CG for complex symmetric systems."""
        Aop = self._lhs
        dinv = 1.0 / self._diag
        x = x0.copy()
        r = b - Aop @ x
        bnorm = np.linalg.norm(b) or 1.0
        if np.linalg.norm(r) <= self.solver.tol * bnorm:
            self.last_iterations = 0
            return x
        z = dinv * r
        p = z.copy()
        rz = r @ z  # bilinear, no conjugation
        for it in range(1, self.solver.maxit + 1):
            Ap = Aop @ p
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= self.solver.tol * bnorm:
                self.last_iterations = it
                return x
            z = dinv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise NumericalError(f"COCG did not converge in {self.solver.maxit} iterations")


def linear_flow(U, tau: float, A: LaplaceOperator, solver=None) -> np.ndarray:
    """One Cayley step; builds a fresh propagator (use :class:`CayleyPropagator` to reuse it)."""
    return CayleyPropagator(A, tau, solver)(U)


# ---------------------------------------------------------------- stepping


class Stepper:
    """Holds the cached propagator and potential geometry for repeated steps."""

    def __init__(self, mesh: Mesh, config: SolverConfig, potential: Potential | None = None,
                 A: LaplaceOperator | None = None):
        self.mesh = mesh
        self.config = config
        self.potential = potential if potential is not None else ZeroPotential()
        self.A = A if A is not None else assemble_laplacian(mesh, config.bc_mode)
        self.prop = CayleyPropagator(self.A, config.tau, config.linear_solver)
        self._x = np.ascontiguousarray(mesh.centers[:, 0])
        self._y = np.ascontiguousarray(mesh.centers[:, 1])
        self._zero_potential = isinstance(self.potential, ZeroPotential)

    def _G(self, t_n, tau):
        if self._zero_potential:
            return None
        return np.asarray(self.potential.antiderivative(t_n, tau, self._x, self._y), dtype=np.float64)

    def _phase(self, U, t_n, tau):
        G = self._G(t_n, tau)
        return U if G is None else potential_flow(U, G)

    def lie(self, U, t_n: float) -> np.ndarray:
        c = self.config
        V = nonlinear_flow(U, c.tau, c.lam) if c.lam != 0 else np.asarray(U, dtype=np.complex128)
        V = self._phase(V, t_n, c.tau)
        return self.prop(V)

    def strang(self, U, t_n: float) -> np.ndarray:
        c = self.config
        half = 0.5 * c.tau
        V = nonlinear_flow(U, half, c.lam) if c.lam != 0 else np.asarray(U, dtype=np.complex128)
        V = self._phase(V, t_n, half)
        V = self.prop(V)
        V = self._phase(V, t_n + half, half)
        return nonlinear_flow(V, half, c.lam) if c.lam != 0 else V

    def step(self, U, t_n: float) -> np.ndarray:
        return self.lie(U, t_n) if self.config.scheme is Scheme.LIE else self.strang(U, t_n)


def lie_step(U, t_n, config: SolverConfig, mesh: Mesh, A=None, potential=None) -> np.ndarray:
    return Stepper(mesh, replace(config, scheme=Scheme.LIE), potential, A).lie(U, t_n)


def strang_step(U, t_n, config: SolverConfig, mesh: Mesh, A=None, potential=None) -> np.ndarray:
    return Stepper(mesh, replace(config, scheme=Scheme.STRANG), potential, A).strang(U, t_n)


# ------------------------------------------------------------- diagnostics


def discrete_energy(U, t: float, mesh: Mesh, A: LaplaceOperator, potential: Potential | None, lam: float) -> float:
    """``<-AU,U>/2 + lam/4 sum|K||U|^4 + 1/2 sum|K| V(t,x_K)|U|^2``.

    This is half the Hamiltonian of the space-discrete equation, hence exactly
    conserved by its flow when ``V`` does not depend on time. In the
    interior-only mode the first term is ``|U|_{H1_h}^2 / 2``.
    """
    U = np.asarray(U, dtype=np.complex128)
    rho = U.real**2 + U.imag**2
    kinetic = -float(np.real(np.vdot(U, A.stiffness @ U)))
    e = 0.5 * kinetic + 0.25 * lam * float(np.sum(mesh.areas * rho**2))
    if potential is not None and not isinstance(potential, ZeroPotential):
        V = np.asarray(potential.value(t, mesh.centers[:, 0], mesh.centers[:, 1]), dtype=float)
        e += 0.5 * float(np.sum(mesh.areas * V * rho))
    return e


@dataclass
class Diagnostics:
    n: list[int] = field(default_factory=list)
    t: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    h1: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    linf: list[float] = field(default_factory=list)

    HEADER = ("n", "t", "mass", "h1", "energy", "linf")

    def record(self, n, t, mass, h1, energy, linf):
        self.n.append(n)
        self.t.append(t)
        self.mass.append(mass)
        self.h1.append(h1)
        self.energy.append(energy)
        self.linf.append(linf)

    def rows(self):
        for row in zip(self.n, self.t, self.mass, self.h1, self.energy, self.linf):
            yield dict(zip(self.HEADER, row))

    def __len__(self):
        return len(self.n)

    def write_csv(self, fp) -> None:
        fp.write(",".join(self.HEADER) + "\n")
        for n, t, m, h, e, l in zip(self.n, self.t, self.mass, self.h1, self.energy, self.linf):
            fp.write(f"{n},{t!r},{m!r},{h!r},{e!r},{l!r}\n")


@dataclass
class SimulationResult:
    U: np.ndarray
    diagnostics: Diagnostics
    snapshots: dict[float, np.ndarray]
    config: SolverConfig


def run_simulation(mesh: Mesh, potential: Potential | None, U0, config: SolverConfig,
                   A: LaplaceOperator | None = None,
                   callback: Callable[[int, float, np.ndarray], None] | None = None) -> SimulationResult:
    """Advance ``U0`` by ``round(T/tau)`` steps of the configured splitting.

    Diagnostics are recorded at step 0, every ``diagnostics_stride`` steps and
    at the final step. Snapshots are taken at the step nearest each requested
    time. Raises :class:`NumericalError` on a non-finite state.
    """
    U = np.array(U0, dtype=np.complex128)
    if U.shape != (mesh.n_cells,):
        raise ValueError("initial state does not match the mesh")
    check_cfl(config, mesh.h)
    stepper = Stepper(mesh, config, potential, A)
    A = stepper.A
    N, tau = config.n_steps, config.tau
    snap_steps: dict[int, float] = {}
    for ts in config.snapshot_times:
        snap_steps.setdefault(min(N, max(0, int(round(ts / tau)))), ts)
    snapshots: dict[float, np.ndarray] = {}
    diag = Diagnostics()

    def record(n, U):
        t = n * tau
        diag.record(n, t, lp_norm(mesh, U, 2), h1_seminorm(mesh, U),
                    discrete_energy(U, t, mesh, A, stepper.potential, config.lam), lp_norm(mesh, U, math.inf))

    record(0, U)
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = U.copy()
    for n in range(1, N + 1):
        try:
            U = stepper.step(U, (n - 1) * tau)
        except NumericalError as exc:
            raise NumericalError(str(exc), step=n, diagnostics=diag) from exc
        if not np.all(np.isfinite(U)):
            raise NumericalError("non-finite values in the state", step=n, diagnostics=diag)
        if n % config.diagnostics_stride == 0 or n == N:
            record(n, U)
        if n in snap_steps:
            snapshots[snap_steps[n]] = U.copy()
        if callback is not None:
            callback(n, n * tau, U)
    return SimulationResult(U, diag, snapshots, config)
