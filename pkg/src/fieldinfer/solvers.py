"""Forward models mapping gridded conductivity fields to sensor responses.

Two black-box solvers share one interface: a 1D finite-volume rod and a 2D
bilinear-quad FEM for steady conduction on the unit square, both with T=0 on
the x=0 face and a uniform inward flux q on x=1 (insulated elsewhere in 2D).
Solvers are deterministic and stateless between calls; the operator wrapper
adds upscaling and thread-safe call accounting.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as _dfield

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .field import GridField, field_to_grid
from .likelihood import ObservationSet, log_marginal_likelihood
from .prior import Hyperparams

__all__ = [
    "SolverFailure",
    "SensorLayout",
    "SolverLevel",
    "regular_sensors",
    "solve_rod1d",
    "solve_conduct2d",
    "ForwardOperator",
    "LevelLikelihood",
    "make_synthetic",
    "default_levels",
]


class SolverFailure(RuntimeError):
    """Invalid field input or non-converged linear solve."""


@dataclass(frozen=True)
class SensorLayout:
    locations: np.ndarray  # (n, dim)

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def dim(self) -> int:
        return self.locations.shape[1]


def regular_sensors(dim: int, count: int) -> SensorLayout:
    """Regular sensor grid: excludes the Dirichlet face, includes the flux face.

    1D: x_i = i/count for i=1..count.  2D: (i/g, j/g) for i=1..g, j=0..g,
    n = g*(g+1) points.
    """
    if dim == 1:
        xs = np.arange(1, count + 1) / count
        return SensorLayout(xs[:, None])
    g = count
    pts = np.array([(i / g, j / g) for j in range(g + 1) for i in range(1, g + 1)])
    return SensorLayout(pts)


@dataclass(frozen=True)
class SolverLevel:
    """One rung of the resolution hierarchy plus its boundary data."""

    resolution: int
    q: float = 1.0
    dirichlet: float = 0.0
    cost_weight: float = 1.0

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")


def default_levels(problem: str) -> list[int]:
    return [8, 16, 32, 64, 128] if problem == "rod1d" else [8, 16, 32, 64]


def _check_conductivity(values: np.ndarray):
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise SolverFailure("conductivity field must be finite and positive")


# ---------------------------------------------------------------------------
# 1D rod
# ---------------------------------------------------------------------------

def solve_rod1d(field: GridField, q: float, sensors: SensorLayout,
                dirichlet: float = 0.0) -> np.ndarray:
    """Finite-volume rod: T at boundary m is dirichlet + q * sum_{i<m} dx/c_i."""
    c = np.asarray(field.values, dtype=float)
    _check_conductivity(c)
    m = field.resolution
    dx = 1.0 / m
    t_bound = np.concatenate(([0.0], q * np.cumsum(dx / c))) + dirichlet
    x = sensors.locations[:, 0]
    idx = np.clip(np.floor(x * m).astype(int), 0, m - 1)
    return t_bound[idx] + (x - idx * dx) * q / c[idx]


# ---------------------------------------------------------------------------
# 2D bilinear-quad FEM
# ---------------------------------------------------------------------------

# reference stiffness for -div(grad T) on a square Q1 element,
# node order (0,0), (1,0), (1,1), (0,1)
_KREF = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0


class Conduct2DSolver:
    """Steady conduction on the unit square with precomputed assembly structure."""

    def __init__(self, resolution: int, q: float = 1.0, dirichlet: float = 0.0,
                 sensors: SensorLayout | None = None, cg_rtol: float = 1e-10,
                 cg_maxiter: int = 20000):
        self.m = resolution
        self.q = q
        self.dirichlet = dirichlet
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        m = resolution
        nn = (m + 1) * (m + 1)
        self.n_nodes = nn

        ex, ey = np.meshgrid(np.arange(m), np.arange(m))
        n00 = (ey * (m + 1) + ex).ravel()
        elem_nodes = np.stack([n00, n00 + 1, n00 + m + 2, n00 + m + 1], axis=1)
        self._elem_nodes = elem_nodes
        self._rows = np.repeat(elem_nodes, 4, axis=1).ravel()
        self._cols = np.tile(elem_nodes, (1, 4)).ravel()

        ix = np.arange(nn) % (m + 1)
        self.fixed = np.where(ix == 0)[0]
        self.free = np.where(ix != 0)[0]
        self._free_index = -np.ones(nn, dtype=int)
        self._free_index[self.free] = np.arange(len(self.free))

        # consistent load for uniform inward flux on x=1
        h = 1.0 / m
        load = np.zeros(nn)
        right = np.where(ix == m)[0]
        load[right] = q * h
        iy_right = right // (m + 1)
        load[right[(iy_right == 0) | (iy_right == m)]] = q * h / 2.0
        self._load = load

        self._sensor_matrix = (
            self._interpolation_matrix(sensors.locations) if sensors is not None else None
        )

    def _interpolation_matrix(self, points: np.ndarray) -> sp.csr_matrix:
        m = self.m
        pts = np.asarray(points, dtype=float)
        cx = np.clip(np.floor(pts[:, 0] * m).astype(int), 0, m - 1)
        cy = np.clip(np.floor(pts[:, 1] * m).astype(int), 0, m - 1)
        xi = pts[:, 0] * m - cx
        eta = pts[:, 1] * m - cy
        n00 = cy * (m + 1) + cx
        cols = np.stack([n00, n00 + 1, n00 + m + 2, n00 + m + 1], axis=1)
        w = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1)
        rows = np.repeat(np.arange(len(pts)), 4)
        return sp.csr_matrix((w.ravel(), (rows, cols.ravel())),
                             shape=(len(pts), self.n_nodes))

    def assemble(self, values: np.ndarray) -> sp.csr_matrix:
        """Global stiffness for per-element conductivities values[ey, ex]."""
        data = (values.ravel()[:, None] * _KREF.ravel()[None, :]).ravel()
        return sp.csr_matrix((data, (self._rows, self._cols)),
                             shape=(self.n_nodes, self.n_nodes))

    def solve_full(self, values: np.ndarray) -> np.ndarray:
        """Nodal temperatures on all (m+1)^2 nodes."""
        _check_conductivity(values)
        k_full = self.assemble(values)
        k_ff = k_full[self.free][:, self.free]
        f = self._load[self.free]
        diag = k_ff.diagonal()
        precond = sp.diags(1.0 / diag)
        t_free, info = cg(k_ff, f, rtol=self.cg_rtol, atol=0.0,
                          maxiter=self.cg_maxiter, M=precond)
        if info != 0:
            raise SolverFailure(f"CG did not converge (info={info})")
        t = np.zeros(self.n_nodes)
        t[self.free] = t_free
        return t + self.dirichlet

    def predict(self, values: np.ndarray) -> np.ndarray:
        if self._sensor_matrix is None:
            raise ValueError("solver built without sensors")
        return self._sensor_matrix @ self.solve_full(values)

    def reactions(self, values: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Discrete reaction forces at the Dirichlet nodes."""
        k_full = self.assemble(values)
        r = k_full @ (t - self.dirichlet) - self._load
        return r[self.fixed]


def solve_conduct2d(field: GridField, level: SolverLevel,
                    sensors: SensorLayout) -> np.ndarray:
    if field.resolution != level.resolution:
        raise ValueError("field resolution does not match solver level")
    solver = Conduct2DSolver(level.resolution, level.q, level.dirichlet, sensors)
    return solver.predict(np.asarray(field.values, dtype=float))


# ---------------------------------------------------------------------------
# operator wrapper and per-level likelihood
# ---------------------------------------------------------------------------

class ForwardOperator:
    """Binds problem type, level, sensors and upscaling; counts every call."""

    def __init__(self, problem: str, level: SolverLevel, sensors: SensorLayout,
                 upscale: str = "log-mean"):
        if problem not in ("rod1d", "conduct2d"):
            raise ValueError(f"unknown problem {problem!r}")
        self.problem = problem
        self.level = level
        self.sensors = sensors
        self.upscale = upscale
        self.calls = 0
        self.failures = 0
        self._lock = threading.Lock()
        self._solver = (
            Conduct2DSolver(level.resolution, level.q, level.dirichlet, sensors)
            if problem == "conduct2d" else None
        )

    @property
    def dim(self) -> int:
        return 1 if self.problem == "rod1d" else 2

    def predict(self, field_like) -> np.ndarray:
        """Upscale the field to this level's grid and run the solver."""
        with self._lock:
            self.calls += 1
        grid = field_to_grid(field_like, self.level.resolution,
                             transform="exp", upscale=self.upscale)
        try:
            if self.problem == "rod1d":
                return solve_rod1d(grid, self.level.q, self.sensors, self.level.dirichlet)
            return self._solver.predict(np.asarray(grid.values, dtype=float))
        except SolverFailure:
            with self._lock:
                self.failures += 1
            raise


class LevelLikelihood:
    """Marginal log-likelihood at one solver level; solver failures map to -inf."""

    def __init__(self, operator: ForwardOperator, obs: ObservationSet, hp: Hyperparams):
        self.operator = operator
        self.obs = obs
        self.hp = hp

    @property
    def key(self) -> int:
        return self.operator.level.resolution

    def predict(self, theta) -> np.ndarray:
        return self.operator.predict(theta)

    def __call__(self, theta) -> float:
        try:
            pred = self.operator.predict(theta)
        except SolverFailure:
            return -np.inf
        return log_marginal_likelihood(self.obs, pred, self.hp)


def make_synthetic(truth, operator: ForwardOperator, noise_frac: float,
                   rng: np.random.Generator) -> ObservationSet:
    """Solve the truth at the operator's level and add scaled Gaussian noise.

    Noise standard deviation is noise_frac times the mean absolute response.
    """
    if noise_frac < 0:
        raise ValueError("noise_frac must be >= 0")
    pred = operator.predict(truth)
    mu_a = float(np.mean(np.abs(pred)))
    y = pred.copy()
    if noise_frac > 0:
        y = y + rng.normal(0.0, noise_frac * mu_a, size=len(pred))
    return ObservationSet(locations=operator.sensors.locations.copy(), y=y)
