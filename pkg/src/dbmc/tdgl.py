"""Stochastic time-dependent Ginzburg-Landau dynamics on a periodic 2-D lattice.

Forward Euler-Maruyama update with a 5-point Laplacian::

    phi' = phi + D dt lap(phi) - dt (-theta phi + chi phi^3) + sqrt(2 dt / dx) N

Three path observables are tracked: the field at one site and step (P1), the
lattice total at that step (P2) and the space-time total over steps 0..T (P3,
step 0 being the initial field).
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernel
from .noise import make_stream

# Normals drawn per chunk when integrating a path (8 MiB of float64).
CHUNK_NORMALS = 1 << 20


class Observable(enum.IntEnum):
    P1 = 1  # point magnetization
    P2 = 2  # total magnetization at a given step
    P3 = 3  # space-time magnetization

    @classmethod
    def parse(cls, value) -> "Observable":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown observable {value!r}; expected P1, P2 or P3") from None
        return cls(int(value))


class BlowUpError(ArithmeticError):
    """A path produced a non-finite field value."""

    def __init__(self, step: int, theta: float, path_index: int | None = None):
        self.step = step
        self.theta = theta
        self.path_index = path_index
        where = f" on path {path_index}" if path_index is not None else ""
        super().__init__(f"non-finite field at step {step} (theta={theta}){where}")


BOUNDARIES = ("periodic",)
INITIAL_CONDITIONS = ("zero", "constant")


@dataclass(frozen=True)
class ModelConfig:
    """Physical and numerical settings of one run.

    ``theta`` may be left as ``None`` for settings shared across parameter
    values (a database stores the model that way). ``point_site`` defaults to
    the lattice centre and ``point_time_step`` to the final step.
    """

    theta: float | None = None
    chi: float = 1.0
    diffusion: float = 1.0
    dt: float = 0.01
    dx: float = 1.0
    lattice_size: int = 40
    n_steps: int = 5000
    boundary: str = "periodic"
    initial_condition: str = "zero"
    initial_value: float = 0.0
    point_site: tuple[int, int] | None = None
    point_time_step: int | None = None

    def __post_init__(self):
        L = int(self.lattice_size)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if L < 2:
            raise ValueError(f"lattice_size must be >= 2, got {L}")
        if int(self.n_steps) < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ValueError(f"unknown initial condition {self.initial_condition!r}")
        if self.initial_condition == "zero" and self.initial_value != 0.0:
            raise ValueError("initial_condition 'zero' requires initial_value 0")
        site = self.point_site if self.point_site is not None else (L // 2, L // 2)
        site = (int(site[0]), int(site[1]))
        if not all(0 <= s < L for s in site):
            raise ValueError(f"point_site {site} outside a {L}x{L} lattice")
        step = self.n_steps if self.point_time_step is None else int(self.point_time_step)
        if not 0 <= step <= self.n_steps:
            raise ValueError(f"point_time_step {step} not in [0, {self.n_steps}]")
        object.__setattr__(self, "lattice_size", L)
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "point_site", site)
        object.__setattr__(self, "point_time_step", step)
        for name in ("chi", "diffusion", "dt", "dx", "initial_value"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.theta is not None:
            object.__setattr__(self, "theta", float(self.theta))

    def with_theta(self, theta: float | None) -> "ModelConfig":
        return replace(self, theta=theta)

    @property
    def noise_amplitude(self) -> float:
        # Printed form sqrt(2 dt / dx); identical to sqrt(2 dt / dx^2) at dx = 1.
        return math.sqrt(2.0 * self.dt / self.dx)

    def initial_field(self) -> np.ndarray:
        L = self.lattice_size
        return np.full((L, L), self.initial_value if self.initial_condition == "constant" else 0.0)


@dataclass(frozen=True)
class ObservableRecord:
    point_mag: float
    total_mag_at_t: float
    spacetime_mag: float
    step_totals: np.ndarray | None = None

    def value(self, kind: Observable) -> float:
        return (self.point_mag, self.total_mag_at_t, self.spacetime_mag)[Observable.parse(kind) - 1]


def laplacian_5pt(field: np.ndarray, dx: float) -> np.ndarray:
    """Periodic 5-point Laplacian."""
    f = np.asarray(field, dtype=float)
    return (np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1) - 4.0 * f) / (dx * dx)


def potential_force(phi, theta: float, chi: float):
    """V'(phi) for V = -theta/2 phi^2 + chi/4 phi^4."""
    return -theta * phi + chi * phi * phi * phi


def euler_step(field: np.ndarray, cfg: ModelConfig, noise: np.ndarray) -> np.ndarray:
    L = cfg.lattice_size
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (L, L) or np.shape(field) != (L, L):
        raise ValueError(f"field and noise must both be {L}x{L}")
    f = np.asarray(field, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        lap = laplacian_5pt(f, cfg.dx)
        out = (f + cfg.diffusion * cfg.dt * lap - cfg.dt * potential_force(f, cfg.theta, cfg.chi)
               + cfg.noise_amplitude * noise)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(-1, cfg.theta)
    return out


def integrate(cfg: ModelConfig, thetas, noise, record_steps: bool = False):
    """Run one path at every value in ``thetas`` under a single noise realisation.

    ``noise`` is anything with a ``fill(out)`` method (normally a
    :class:`~dbmc.noise.NoiseStream`); it is consumed exactly once, so all
    parameter values see the same draws. Returns ``(obs, step_totals, fields)``
    where ``obs[q]`` holds (P1, P2, P3) for ``thetas[q]``.
    """
    thetas = np.ascontiguousarray(thetas, dtype=float).reshape(-1)
    k, L, T = thetas.size, cfg.lattice_size, cfg.n_steps
    pi, pj = cfg.point_site
    fields = np.repeat(cfg.initial_field()[None], k, axis=0)
    point = np.zeros(k)
    total = np.zeros(k)
    spacetime = np.zeros(k)
    step_totals = np.zeros((k, T + 1 if record_steps else 0))
    t0 = _kernel.field_total(fields[0])
    spacetime[:] = t0
    if record_steps:
        step_totals[:, 0] = t0
    if cfg.point_time_step == 0:
        point[:] = fields[0, pi, pj]
        total[:] = t0
    scratch = np.empty((L, L))
    chunk = max(1, min(T, CHUNK_NORMALS // (L * L)))
    buf = np.empty((chunk, L, L))
    amp = cfg.noise_amplitude
    step = 1
    while step <= T:
        m = min(chunk, T - step + 1)
        block = buf[:m]
        noise.fill(block)
        bad = _kernel.integrate_chunk(fields, thetas, cfg.chi, cfg.diffusion, cfg.dt, cfg.dx, amp, block, step,
                                      pi, pj, cfg.point_time_step, point, total, spacetime, step_totals, scratch)
        if bad >= 0:
            q = _first_nonfinite(fields)
            raise BlowUpError(bad, float(thetas[q]))
        step += m
    obs = np.stack([point, total, spacetime], axis=1)
    return obs, (step_totals if record_steps else None), fields


def _first_nonfinite(fields) -> int:
    for q in range(fields.shape[0]):
        if not np.all(np.isfinite(fields[q])):
            return q
    return 0


def simulate_path(cfg: ModelConfig, stream, record_steps: bool = False) -> ObservableRecord:
    if cfg.theta is None:
        raise ValueError("simulate_path needs a config with theta set")
    obs, totals, _ = integrate(cfg, [cfg.theta], stream, record_steps=record_steps)
    return ObservableRecord(float(obs[0, 0]), float(obs[0, 1]), float(obs[0, 2]),
                            None if totals is None else totals[0])


def _simulate_block(cfg, thetas, master_seed, indices):
    out = np.empty((len(indices), len(thetas), 3))
    for r, j in enumerate(indices):
        try:
            out[r] = integrate(cfg, thetas, make_stream(master_seed, int(j)))[0]
        except BlowUpError as exc:
            raise BlowUpError(exc.step, exc.theta, int(j)) from None
    return out


def simulate_paths(cfg: ModelConfig, thetas, master_seed: int, path_indices, workers: int = 1) -> np.ndarray:
    """Observables for many paths, shape ``(len(path_indices), len(thetas), 3)``.

    Path ``j`` uses stream ``(master_seed, j)`` and one noise realisation
    shared by all ``thetas``. Output does not depend on ``workers``.
    """
    thetas = [float(t) for t in np.atleast_1d(thetas)]
    indices = np.asarray(path_indices, dtype=np.uint64).reshape(-1)
    if workers <= 1 or len(indices) < 2:
        return _simulate_block(cfg, thetas, master_seed, indices)
    blocks = np.array_split(indices, min(len(indices), 4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_simulate_block, [cfg] * len(blocks), [thetas] * len(blocks),
                              [master_seed] * len(blocks), blocks))
    return np.concatenate(parts, axis=0)
