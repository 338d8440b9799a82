"""Pseudo-spectral Vlasov-Navier-Stokes solver on a periodic box.

Fluid: ``du/dt + P div(u u) = nu Lap u + P f`` with ``f`` the Brinkman force
``kappa sum_i w_i (v_i - u(x_i)) delta(x - x_i)`` deposited by a quadratic
B-spline; particles follow ``dx/dt = v``, ``dv/dt = -kappa (v - u(x))`` with
the same spline for interpolation.  Fluid and particles are advanced together
by integrating-factor RK4, so every stage exchanges equal and opposite
momentum and total momentum is conserved to roundoff.

The stored fluid state is the physical velocity on the grid; every step
starts from it, which makes restarts from a snapshot bit-exact.
"""
from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CFLError, ContractError, SimulationError

MAGIC = b"VNS1"
BOX = 2.0 * np.pi


# --------------------------------------------------------------------------
# grids


class SpectralGrid:
    """Wavenumbers, masks and transforms for an ``n^dim`` periodic grid."""

    def __init__(self, n: int, dim: int = 2, length: float = BOX):
        if dim not in (2, 3):
            raise ContractError("dim must be 2 or 3")
        if n < 4 or n % 2:
            raise ContractError("grid size must be even and >= 4")
        self.n, self.dim, self.length = n, dim, length
        self.h = length / n
        scale = 2.0 * np.pi / length
        ks = [np.fft.fftfreq(n, 1.0 / n) * scale] * (dim - 1) + [np.fft.rfftfreq(n, 1.0 / n) * scale]
        self.k = np.array(np.meshgrid(*ks, indexing="ij"))
        self.k2 = np.sum(self.k**2, axis=0)
        self.k2_safe = np.where(self.k2 == 0, 1.0, self.k2)
        cut = (n / 3.0) * scale
        self.mask = np.all(np.abs(self.k) < cut, axis=0)
        self.shape = (n,) * dim
        self.axes = tuple(range(1, dim + 1))

    def fft(self, u):
        return np.fft.rfftn(u, axes=self.axes)

    def ifft(self, u_hat):
        return np.fft.irfftn(u_hat, s=self.shape, axes=self.axes)

    def fft_scalar(self, a):
        return np.fft.rfftn(a)

    def ifft_scalar(self, a_hat):
        return np.fft.irfftn(a_hat, s=self.shape, axes=tuple(range(self.dim)))

    @property
    def n_points(self):
        return self.n**self.dim

    def coords(self):
        x = np.arange(self.n) * self.h
        return np.array(np.meshgrid(*([x] * self.dim), indexing="ij"))


def project_divfree(u_hat, grid: SpectralGrid):
    """Leray projection ``(I - k k^T/|k|^2)`` on every nonzero mode."""
    kdotu = np.sum(grid.k * u_hat, axis=0)
    out = u_hat - grid.k * (kdotu / grid.k2_safe)
    out[(slice(None),) + (0,) * grid.dim] = u_hat[(slice(None),) + (0,) * grid.dim]
    return out


def spectral_divergence(u_hat, grid: SpectralGrid):
    """Largest ``|k . u_hat|`` with coefficients normalised to amplitudes."""
    return float(np.abs(np.sum(grid.k * u_hat, axis=0)).max() / grid.n_points)


# --------------------------------------------------------------------------
# states


@dataclass
class FluidState:
    u: np.ndarray
    grid: SpectralGrid
    nu: float
    t: float = 0.0

    @property
    def u_hat(self):
        return self.grid.fft(self.u)

    def momentum(self):
        return self.u.reshape(self.grid.dim, -1).sum(axis=1) * self.grid.h**self.grid.dim

    def kinetic_energy(self):
        return 0.5 * float(np.sum(self.u**2)) * self.grid.h**self.grid.dim

    @classmethod
    def zero(cls, grid, nu):
        return cls(np.zeros((grid.dim,) + grid.shape), grid, nu)

    @classmethod
    def taylor_green(cls, grid, nu, amplitude=1.0):
        """``u = A (sin x cos y, -cos x sin y[, 0])``."""
        X = grid.coords()
        u = np.zeros((grid.dim,) + grid.shape)
        u[0] = amplitude * np.sin(X[0]) * np.cos(X[1])
        u[1] = -amplitude * np.cos(X[0]) * np.sin(X[1])
        return cls(u, grid, nu)

    @classmethod
    def uniform(cls, grid, nu, U):
        u = np.zeros((grid.dim,) + grid.shape)
        u += np.asarray(U, float).reshape((grid.dim,) + (1,) * grid.dim)
        return cls(u, grid, nu)

    @classmethod
    def random_modes(cls, grid, nu, rng, amplitude=1.0, kmax=4):
        """Random divergence-free field supported on ``|k| <= kmax``."""
        u_hat = rng.standard_normal((grid.dim,) + grid.k2.shape) + 1j * rng.standard_normal((grid.dim,) + grid.k2.shape)
        u_hat *= (grid.k2 <= kmax**2) & (grid.k2 > 0)
        u = grid.ifft(project_divfree(u_hat, grid))
        u *= amplitude / max(np.sqrt(np.mean(u**2)), 1e-300)
        return cls(grid.ifft(grid.fft(u) * grid.mask), grid, nu)


@dataclass
class ParticleCloud:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    kappa: float

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, float))
        self.weights = np.asarray(self.weights, float).reshape(-1)
        if self.positions.shape != self.velocities.shape or len(self.weights) != len(self.positions):
            raise ContractError("particle arrays have inconsistent shapes")
        if np.any(self.weights <= 0):
            raise ContractError("particle weights must be positive")
        if self.kappa < 0:
            raise ContractError("kappa must be >= 0")

    def momentum(self):
        return self.weights @ self.velocities

    def kinetic_energy(self):
        return 0.5 * float(self.weights @ np.sum(self.velocities**2, axis=1))

    @classmethod
    def empty(cls, dim, kappa=0.0):
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0), kappa)

    @classmethod
    def preset(cls, name, count, dim, kappa, rng, length=BOX, total_weight=None, speed=1.0):
        """``uniform_random`` (Gaussian velocities), ``at_rest`` or ``beam`` (all moving along x)."""
        pos = rng.random((count, dim)) * length
        if name == "uniform_random":
            vel = speed * rng.standard_normal((count, dim))
        elif name == "at_rest":
            vel = np.zeros((count, dim))
        elif name == "beam":
            vel = np.zeros((count, dim))
            vel[:, 0] = speed
        else:
            raise ContractError(f"unknown particle preset {name!r}")
        total_weight = length**dim * 0.1 if total_weight is None else total_weight
        return cls(pos, vel, np.full(count, total_weight / max(count, 1)), kappa)


@dataclass
class CouplingDiagnostics:
    step: int
    t: float
    fluid_momentum: np.ndarray
    particle_momentum: np.ndarray
    fluid_energy: float
    particle_energy: float
    brinkman_norm: float
    pressure_residual: float
    max_divergence: float
    total_momentum: np.ndarray = field(init=False)

    def __post_init__(self):
        self.total_momentum = self.fluid_momentum + self.particle_momentum

    @property
    def total_energy(self):
        return self.fluid_energy + self.particle_energy

    def row(self):
        d = len(self.fluid_momentum)
        out = {"step": self.step, "t": self.t}
        for name, vec in (("fluid_mom", self.fluid_momentum), ("particle_mom", self.particle_momentum),
                          ("total_mom", self.total_momentum)):
            for i in range(d):
                out[f"{name}_{i}"] = vec[i]
        out.update(fluid_ke=self.fluid_energy, particle_ke=self.particle_energy, total_energy=self.total_energy,
                   brinkman_norm=self.brinkman_norm, pressure_residual=self.pressure_residual,
                   max_divergence=self.max_divergence)
        return out


# --------------------------------------------------------------------------
# particle-grid transfer


def _stencil(positions, grid: SpectralGrid):
    """Flat grid indices ``(np, 3^dim)`` and quadratic B-spline weights."""
    s = positions / grid.h
    i0 = np.rint(s).astype(np.int64)
    d = s - i0
    w1 = np.stack([0.5 * (0.5 - d) ** 2, 0.75 - d**2, 0.5 * (0.5 + d) ** 2], axis=-1)
    idx = np.zeros((len(positions), 1), dtype=np.int64)
    wts = np.ones((len(positions), 1))
    for a in range(grid.dim):
        ia = (i0[:, a, None] + np.array([-1, 0, 1])) % grid.n
        idx = (idx[:, :, None] * grid.n + ia[:, None, :]).reshape(len(positions), -1)
        wts = (wts[:, :, None] * w1[:, a, None, :]).reshape(len(positions), -1)
    return idx, wts


def interpolate(field_, positions, grid: SpectralGrid, stencil=None):
    """Vector field ``(dim, n, ..)`` at particle positions, shape ``(np, dim)``."""
    idx, wts = stencil if stencil is not None else _stencil(positions, grid)
    flat = field_.reshape(field_.shape[0], -1)
    return np.einsum("pk,cpk->pc", wts, flat[:, idx])


def deposit(values, positions, grid: SpectralGrid, stencil=None):
    """Density on the grid from particle vectors (adjoint of :func:`interpolate`)."""
    idx, wts = stencil if stencil is not None else _stencil(positions, grid)
    vol = grid.h**grid.dim
    out = np.empty((values.shape[1],) + grid.shape)
    for c in range(values.shape[1]):
        out[c] = np.bincount(idx.ravel(), (wts * values[:, c, None]).ravel(), grid.n_points).reshape(grid.shape)
    return out / vol


def deposit_brinkman(cloud: ParticleCloud, fluid: FluidState, positions=None, velocities=None, u_field=None):
    """Force density ``kappa sum w_i (v_i - u(x_i)) S(x - x_i)`` on the grid."""
    grid = fluid.grid
    x = cloud.positions if positions is None else positions
    v = cloud.velocities if velocities is None else velocities
    u = fluid.u if u_field is None else u_field
    if len(x) == 0:
        return np.zeros_like(u)
    st = _stencil(x, grid)
    rel = v - interpolate(u, x, grid, st)
    return deposit(cloud.kappa * cloud.weights[:, None] * rel, x, grid, st)


# --------------------------------------------------------------------------
# stepping


def _nonlinear_hat(u_hat, grid):
    u = grid.ifft(u_hat)
    d = grid.dim
    out = np.zeros_like(u_hat)
    for i in range(d):
        for j in range(i, d):
            prod = grid.fft_scalar(u[i] * u[j])
            out[i] += 1j * grid.k[j] * prod
            if i != j:
                out[j] += 1j * grid.k[i] * prod
    return out * grid.mask


def check_cfl(fluid: FluidState, cloud: ParticleCloud, dt, cfl=1.0, drag_mode="rk4"):
    speed = float(np.abs(fluid.u).max()) if fluid.u.size else 0.0
    if len(cloud.weights):
        speed = max(speed, float(np.abs(cloud.velocities).max()))
    c = dt * speed / fluid.grid.h
    if c > cfl:
        raise CFLError(f"CFL number {c:.3f} exceeds {cfl}")
    if drag_mode == "rk4" and cloud.kappa * dt > 2.5:
        raise CFLError(f"kappa*dt = {cloud.kappa * dt:.3f} exceeds the RK4 drag bound 2.5; use drag_mode='exponential'")
    return c


def suggest_dt(fluid, cloud, cfl=0.4, dt_max=0.1):
    speed = max(float(np.abs(fluid.u).max()), float(np.abs(cloud.velocities).max()) if len(cloud.weights) else 0.0)
    dt = cfl * fluid.grid.h / speed if speed > 0 else dt_max
    if cloud.kappa > 0:
        dt = min(dt, 1.0 / cloud.kappa)
    return min(dt, dt_max)


def step(fluid: FluidState, cloud: ParticleCloud, dt: float, *, fluid_frozen=False, two_way=True,
         drag_mode="rk4", cfl=1.0, diagnostics=True):
    """Advance fluid and particles by ``dt``; returns ``(fluid, cloud, diagnostics)``.

    ``drag_mode='rk4'`` integrates the particle ODEs inside the fluid RK4
    stages.  ``'exponential'`` instead relaxes velocities exactly towards the
    fluid velocity frozen at the step start, and hands the fluid the opposite
    momentum as a constant force over the step.
    """
    check_cfl(fluid, cloud, dt, cfl, drag_mode)
    grid = fluid.grid
    E = np.exp(-0.5 * fluid.nu * grid.k2 * dt)
    E2 = E * E
    w = cloud.weights
    kap = cloud.kappa
    has_p = len(w) > 0
    couple = two_way and has_p and kap > 0 and not fluid_frozen
    u0_hat = grid.fft(fluid.u) * grid.mask
    x0, v0 = cloud.positions, cloud.velocities

    def rhs(u_hat, x, v):
        u = grid.ifft(u_hat) if not fluid_frozen else fluid.u
        if has_p:
            st = _stencil(x % grid.length, grid)
            rel = v - interpolate(u, x % grid.length, grid, st)
            dv = -kap * rel
        else:
            dv = np.zeros_like(v)
        if fluid_frozen:
            return None, v, dv
        nl = -_nonlinear_hat(u_hat, grid)
        if couple:
            f = deposit(kap * w[:, None] * rel, x % grid.length, grid, st)
            nl = nl + grid.fft(f) * grid.mask
        return project_divfree(nl, grid), v, dv

    if drag_mode == "exponential" and has_p:
        u_start = fluid.u
        st = _stencil(x0, grid)
        up = interpolate(u_start, x0, grid, st)
        decay = np.exp(-kap * dt)
        v1 = up + (v0 - up) * decay
        growth = dt if kap == 0 else (1.0 - decay) / kap
        x1 = x0 + up * dt + (v0 - up) * growth
        if fluid_frozen:
            u1 = fluid.u
        else:
            force_hat = 0.0
            if couple:
                f = deposit(w[:, None] * (v0 - v1) / dt, x0, grid, st)
                force_hat = project_divfree(grid.fft(f) * grid.mask, grid)
            u1 = _advance_fluid(u0_hat, dt, E, E2, grid, force_hat)
    elif drag_mode in ("rk4", "exponential"):
        if fluid_frozen:
            _, kx1, kv1 = rhs(None, x0, v0)
            _, kx2, kv2 = rhs(None, x0 + 0.5 * dt * kx1, v0 + 0.5 * dt * kv1)
            _, kx3, kv3 = rhs(None, x0 + 0.5 * dt * kx2, v0 + 0.5 * dt * kv2)
            _, kx4, kv4 = rhs(None, x0 + dt * kx3, v0 + dt * kv3)
            u1 = fluid.u
        else:
            k1, kx1, kv1 = rhs(u0_hat, x0, v0)
            k2, kx2, kv2 = rhs(E * (u0_hat + 0.5 * dt * k1), x0 + 0.5 * dt * kx1, v0 + 0.5 * dt * kv1)
            k3, kx3, kv3 = rhs(E * u0_hat + 0.5 * dt * k2, x0 + 0.5 * dt * kx2, v0 + 0.5 * dt * kv2)
            k4, kx4, kv4 = rhs(E2 * u0_hat + dt * E * k3, x0 + dt * kx3, v0 + dt * kv3)
            u1_hat = E2 * u0_hat + (dt / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)
            u1 = grid.ifft(u1_hat * grid.mask)
        x1 = x0 + (dt / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        v1 = v0 + (dt / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
    else:
        raise ContractError(f"unknown drag mode {drag_mode!r}")

    new_fluid = FluidState(u1, grid, fluid.nu, fluid.t + dt)
    new_cloud = replace(cloud, positions=np.mod(x1, grid.length), velocities=v1)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(x1)) and np.all(np.isfinite(v1))):
        path = os.path.join(tempfile.gettempdir(), f"vns_crash_t{fluid.t:.6g}.vns")
        write_snapshot(path, fluid, cloud, -1)
        raise SimulationError(f"non-finite state after step at t={fluid.t}; state dumped to {path}", path)
    diag = coupling_diagnostics(new_fluid, new_cloud) if diagnostics else None
    return new_fluid, new_cloud, diag


def _advance_fluid(u0_hat, dt, E, E2, grid, force_hat):
    def f(u_hat):
        return project_divfree(-_nonlinear_hat(u_hat, grid), grid) + force_hat

    k1 = f(u0_hat)
    k2 = f(E * (u0_hat + 0.5 * dt * k1))
    k3 = f(E * u0_hat + 0.5 * dt * k2)
    k4 = f(E2 * u0_hat + dt * E * k3)
    return grid.ifft((E2 * u0_hat + (dt / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)) * grid.mask)


# --------------------------------------------------------------------------
# pressure


def pressure(fluid: FluidState, cloud: ParticleCloud | None = None):
    """Solve ``-Lap p = tr((grad u)^2) - div f`` spectrally (zero-mean ``p``).

    Returns ``(p, p_hat, f_hat, rhs_hat)``.
    """
    grid = fluid.grid
    u_hat = grid.fft(fluid.u) * grid.mask
    grads = [[grid.ifft_scalar(1j * grid.k[j] * u_hat[i]) for j in range(grid.dim)] for i in range(grid.dim)]
    tr = sum(grads[i][j] * grads[j][i] for i in range(grid.dim) for j in range(grid.dim))
    rhs_hat = grid.fft_scalar(tr) * grid.mask
    f_hat = np.zeros_like(u_hat)
    if cloud is not None and len(cloud.weights) and cloud.kappa > 0:
        f_hat = grid.fft(deposit_brinkman(cloud, fluid)) * grid.mask
        rhs_hat = rhs_hat - np.sum(1j * grid.k * f_hat, axis=0)
    p_hat = rhs_hat / grid.k2_safe
    p_hat[(0,) * grid.dim] = 0.0
    return grid.ifft_scalar(p_hat), p_hat, f_hat, rhs_hat


def pressure_poisson_residual(fluid: FluidState, cloud: ParticleCloud | None = None):
    """Divergence of the momentum equation with the computed pressure.

    ``div(-(u.grad)u - grad p + nu Lap u + f)`` in amplitude-normalised
    spectral coefficients; vanishes to roundoff for a divergence-free ``u``.
    """
    grid = fluid.grid
    _, p_hat, f_hat, _ = pressure(fluid, cloud)
    u_hat = grid.fft(fluid.u) * grid.mask
    mom = -_nonlinear_hat(u_hat, grid) - 1j * grid.k * p_hat - fluid.nu * grid.k2 * u_hat + f_hat
    div = np.sum(1j * grid.k * mom, axis=0)
    scale = max(1.0, float(np.abs(u_hat).max()) / grid.n_points) ** 2
    return float(np.abs(div).max() / grid.n_points / scale)


def coupling_diagnostics(fluid: FluidState, cloud: ParticleCloud, step_index=0):
    grid = fluid.grid
    f = deposit_brinkman(cloud, fluid) if len(cloud.weights) else np.zeros_like(fluid.u)
    return CouplingDiagnostics(
        step_index, fluid.t, fluid.momentum(),
        cloud.momentum() if len(cloud.weights) else np.zeros(grid.dim),
        fluid.kinetic_energy(), cloud.kinetic_energy() if len(cloud.weights) else 0.0,
        float(np.sqrt(np.sum(f**2) * grid.h**grid.dim)),
        pressure_poisson_residual(fluid, cloud),
        spectral_divergence(fluid.u_hat, grid),
    )


# --------------------------------------------------------------------------
# snapshots

_HEADER = struct.Struct("<4s5q4d16s16s")


def write_snapshot(path, fluid: FluidState, cloud: ParticleCloud, step_index: int, meta=None):
    """Flat little-endian snapshot (layout documented in the README).

    ``meta`` may carry ``seed``, ``config_hash`` and ``version``; they are
    stored in the header so every snapshot identifies the run that wrote it.
    """
    g = fluid.grid
    meta = meta or {}
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.dim, g.n, len(cloud.weights), step_index, int(meta.get("seed", 0)),
                              fluid.t, fluid.nu, cloud.kappa, g.length,
                              str(meta.get("config_hash", "")).encode()[:16],
                              str(meta.get("version", "")).encode()[:16]))
        for arr in (fluid.u, cloud.positions, cloud.velocities, cloud.weights):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path, with_meta=False):
    """Inverse of :func:`write_snapshot`; returns ``(fluid, cloud, step[, meta])``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise ContractError(f"{path}: truncated snapshot")
    magic, dim, n, npart, step_index, seed, t, nu, kappa, length, chash, ver = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ContractError(f"{path}: not a VNS1 snapshot")
    grid = SpectralGrid(n, dim, length)
    off = _HEADER.size
    sizes = [dim * n**dim, npart * dim, npart * dim, npart]
    if off + 8 * sum(sizes) != len(buf):
        raise ContractError(f"{path}: size mismatch ({len(buf)} bytes, expected {off + 8 * sum(sizes)})")
    arrs = []
    for s in sizes:
        arrs.append(np.frombuffer(buf, dtype="<f8", count=s, offset=off).astype(float))
        off += 8 * s
    u = arrs[0].reshape((dim,) + grid.shape)
    cloud = ParticleCloud(arrs[1].reshape(npart, dim), arrs[2].reshape(npart, dim), arrs[3], kappa) \
        if npart else ParticleCloud.empty(dim, kappa)
    out = (FluidState(u, grid, nu, t), cloud, step_index)
    if with_meta:
        meta = {"seed": seed, "config_hash": chash.rstrip(b"\0").decode(), "version": ver.rstrip(b"\0").decode()}
        return out + (meta,)
    return out


# --------------------------------------------------------------------------
# driver

SIM_DEFAULTS = {
    "grid_n": 64, "dim": 2, "nu": 0.05, "kappa": 1.0, "dt": 0.0, "steps": 200, "snapshot_every": 0,
    "fluid_init": "random", "fluid_amplitude": 1.0, "drag_mode": "rk4", "two_way": True, "cfl": 0.4,
    "particles": {"count": 10_000, "init_preset": "uniform_random", "seed": 0, "speed": 1.0, "total_weight": 0.0},
}


def initial_state(cfg):
    rng = np.random.default_rng(cfg["particles"]["seed"])
    grid = SpectralGrid(cfg["grid_n"], cfg["dim"])
    init = cfg["fluid_init"]
    if init == "zero":
        fluid = FluidState.zero(grid, cfg["nu"])
    elif init == "taylor_green":
        fluid = FluidState.taylor_green(grid, cfg["nu"], cfg["fluid_amplitude"])
    elif init == "random":
        fluid = FluidState.random_modes(grid, cfg["nu"], rng, cfg["fluid_amplitude"])
    else:
        raise ContractError(f"unknown fluid_init {init!r}")
    pc = cfg["particles"]
    if pc["count"] > 0:
        cloud = ParticleCloud.preset(pc["init_preset"], pc["count"], cfg["dim"], cfg["kappa"], rng,
                                     grid.length, pc.get("total_weight") or None, pc.get("speed", 1.0))
    else:
        cloud = ParticleCloud.empty(cfg["dim"], cfg["kappa"])
    return fluid, cloud


def run_simulation(cfg, out_dir=None, restart=None, callback=None, meta=None):
    """Fixed-step loop; returns ``(diagnostics list, snapshot paths, final fluid, final cloud)``.

    ``restart`` is a snapshot path; the run then continues from its step
    index up to ``cfg['steps']``.  ``dt`` is fixed for the whole run (taken
    from the initial state when ``cfg['dt']`` is 0), so pass the same value
    explicitly when restarting.
    """
    full = {**SIM_DEFAULTS, **cfg, "particles": {**SIM_DEFAULTS["particles"], **cfg.get("particles", {})}}
    meta = {"seed": full["particles"]["seed"], **(meta or {})}
    if restart:
        fluid, cloud, start = read_snapshot(restart)
    else:
        fluid, cloud = initial_state(full)
        start = 0
    dt = full["dt"] or suggest_dt(fluid, cloud, full["cfl"])
    diags = [coupling_diagnostics(fluid, cloud, start)]
    snaps = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for n in range(start + 1, full["steps"] + 1):
        fluid, cloud, d = step(fluid, cloud, dt, drag_mode=full["drag_mode"], two_way=full["two_way"])
        d.step = n
        diags.append(d)
        if callback:
            callback(n, fluid, cloud, d)
        if out_dir and full["snapshot_every"] and n % full["snapshot_every"] == 0:
            path = os.path.join(out_dir, f"snapshot_{n:06d}.vns")
            write_snapshot(path, fluid, cloud, n, meta)
            snaps.append(path)
    if out_dir:
        last = diags[-1].step
        path = os.path.join(out_dir, f"snapshot_{last:06d}.vns")
        if not snaps or snaps[-1] != path:
            write_snapshot(path, fluid, cloud, last, meta)
            snaps.append(path)
        comment =" ".join(f"{k}={v}" for k, v in sorted(meta.items())) + f" dt={dt!r}"
        write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), diags, comment)
    return diags, snaps, fluid, cloud


def run_verdicts(diags, div_tol=1e-12, momentum_tol=1e-8, energy_tol=1e-12):
    """Invariant checks over a diagnostics series.

    Energy may rise by at most ``energy_tol`` times the initial energy in a
    single step (time-integration error of a strictly dissipative system).
    """
    p0 = diags[0].total_momentum
    scale = max(float(np.abs(p0).max()), 1e-300)
    drift = max(float(np.abs(d.total_momentum - p0).max()) for d in diags) / scale
    div = max(d.max_divergence for d in diags)
    e = np.array([d.total_energy for d in diags])
    rise = float(np.max(np.diff(e))) / max(e[0], 1e-300) if len(e) > 1 else 0.0
    return {
        "max_divergence": div, "divergence_ok": bool(div <= div_tol),
        "momentum_drift": drift, "momentum_ok": bool(drift <= momentum_tol),
        "max_energy_rise": rise, "energy_ok": bool(rise <= energy_tol),
    }


def write_diagnostics_csv(path, diags, header_comment=None):
    rows = [d.row() for d in diags]
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(float(v)) if not isinstance(v, int) else v for k, v in r.items()})
