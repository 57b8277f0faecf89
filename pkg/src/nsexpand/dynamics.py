"""Galerkin integration of du/dt + A u + P_L B(u, u) = 0 (nu = 1, L = 2 pi)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bilinear import convolve, convolve_batched
from .field import VOLUME, SpectralField, read_snapshot, write_snapshot
from .lattice import mode_set

TRAJECTORY_MANIFEST = "trajectory.json"
TRAJECTORY_FORMAT = "nsexpand-trajectory/1"


class BlowUpError(FloatingPointError):
    """The discrete state stopped being finite."""

    def __init__(self, t_last: float):
        super().__init__(f"non-finite state after t = {t_last:.6g}")
        self.t_last = t_last


@dataclass(frozen=True)
class GalerkinConfig:
    cutoff: int
    dt: float
    t_end: float
    snapshot_stride: int = 1

    def __post_init__(self) -> None:
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride}")

    @property
    def steps(self) -> int:
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * self.t_end:
            raise ValueError(f"t_end = {self.t_end} is not a whole number of steps dt = {self.dt}")
        return n


class Trajectory:
    """Snapshots of one Galerkin run, stored as a (samples, modes, 3) stack."""

    def __init__(self, config: GalerkinConfig, times, coeffs):
        times = np.asarray(times, dtype=np.float64)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        ms = mode_set(config.cutoff)
        if coeffs.shape != (times.size, ms.size, 3):
            raise ValueError("coefficient stack does not match times and cutoff")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("snapshot times must increase strictly")
        times.setflags(write=False)
        coeffs.setflags(write=False)
        self.config = config
        self.modes = ms
        self.times = times
        self.coeffs = coeffs

    def __len__(self) -> int:
        return self.times.size

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.modes, self.coeffs[i], solenoidal=True)

    @property
    def samples(self) -> list[tuple[float, SpectralField]]:
        return [(float(t), self.state(i)) for i, t in enumerate(self.times)]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not a stored sample time")
        return i

    def at(self, t: float) -> SpectralField:
        return self.state(self.index_of(t))

    @property
    def initial(self) -> SpectralField:
        return self.state(0)

    def subsample(self, every: int) -> "Trajectory":
        cfg = GalerkinConfig(
            self.config.cutoff, self.config.dt, self.config.t_end, self.config.snapshot_stride * every
        )
        return Trajectory(cfg, self.times[::every], self.coeffs[::every])


def _nonlinear(u: np.ndarray, ms) -> np.ndarray:
    return -convolve(u, u, ms)


def integrate(u0: SpectralField, cfg: GalerkinConfig) -> Trajectory:
    """Fourth-order Lawson (integrating-factor Runge-Kutta) stepping.

    The linear decay exp(-|k|^2 t) is applied exactly; only the projected
    nonlinearity is approximated.
    """
    if u0.cutoff != cfg.cutoff:
        raise ValueError(f"initial field has cutoff {u0.cutoff}, config says {cfg.cutoff}")
    if not u0.solenoidal:
        raise ValueError("initial field must be solenoidal")
    ms = u0.modes
    dt = cfg.dt
    lam = ms.k2.astype(np.float64)[:, None]
    e_full = np.exp(-lam * dt)
    e_half = np.exp(-lam * dt / 2)
    steps, stride = cfg.steps, cfg.snapshot_stride

    n_samples = steps // stride + 1
    times = np.arange(n_samples) * (stride * dt)
    out = np.empty((n_samples, ms.size, 3), dtype=np.complex128)
    u = u0.coeffs.copy()
    out[0] = u
    # overflow is caught by the finiteness check below, not reported as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, steps + 1):
            k1 = _nonlinear(u, ms)
            k2 = _nonlinear(e_half * (u + 0.5 * dt * k1), ms)
            k3 = _nonlinear(e_half * u + 0.5 * dt * k2, ms)
            k4 = _nonlinear(e_full * u + dt * e_half * k3, ms)
            u = e_full * u + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
            if not np.all(np.isfinite(u)):
                raise BlowUpError((step - 1) * dt)
            if step % stride == 0:
                out[step // stride] = u
    return Trajectory(cfg, times, out)


def energy_residual(traj: Trajectory) -> np.ndarray:
    """Per-interval defect of the energy balance, per unit time.

    For each pair of neighbouring samples returns
    |(|u2|^2 - |u1|^2)/2 + int_{t1}^{t2} ||u||^2 dt| / |u1|^2 / (t2 - t1).
    The dissipation integral uses the trapezoid rule with its endpoint
    derivative correction, d/dt ||u||^2 = -2 |Au|^2 - 2 <Au, B(u,u)>, which
    keeps the quadrature error at fourth order in the sample spacing.
    """
    if len(traj) < 3:
        raise ValueError("energy residual needs at least three samples")
    ms = traj.modes
    c = traj.coeffs
    k2 = ms.k2.astype(np.float64)
    scale = 2.0 * VOLUME
    power = np.einsum("smi,smi->sm", c, c.conj()).real
    energy = scale * power.sum(axis=1)
    enstrophy = scale * power @ k2
    au = c * k2[:, None]
    b = convolve_batched(c, c, ms)
    d_enstrophy = -2.0 * scale * (np.einsum("smi,smi->s", au, au.conj()).real + np.einsum("smi,smi->s", au, b.conj()).real)
    h = np.diff(traj.times)
    dissipated = 0.5 * h * (enstrophy[:-1] + enstrophy[1:]) - h**2 / 12.0 * (d_enstrophy[1:] - d_enstrophy[:-1])
    defect = 0.5 * (energy[1:] - energy[:-1]) + dissipated
    ref = energy[:-1]
    safe = np.where(ref > 0, ref, 1.0)
    return np.where(ref > 0, np.abs(defect) / safe / h, 0.0)


# persistence ---------------------------------------------------------------


def _snapshot_name(i: int) -> str:
    return f"snap_{i:06d}.bin"


def save_trajectory(traj: Trajectory, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(len(traj)):
        write_snapshot(d / _snapshot_name(i), traj.state(i))
    manifest = {
        "format": TRAJECTORY_FORMAT,
        "config": asdict(traj.config),
        "count": len(traj),
        "times": [float(t) for t in traj.times],
        "snapshots": [_snapshot_name(i) for i in range(len(traj))],
    }
    (d / TRAJECTORY_MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    return d


def load_trajectory(directory) -> Trajectory:
    d = Path(directory)
    manifest = json.loads((d / TRAJECTORY_MANIFEST).read_text())
    if manifest.get("format") != TRAJECTORY_FORMAT:
        raise ValueError(f"{d} does not hold a trajectory")
    cfg = GalerkinConfig(**manifest["config"])
    coeffs = [read_snapshot(d / name).coeffs for name in manifest["snapshots"]]
    if len(coeffs) != manifest["count"]:
        raise ValueError("trajectory manifest count disagrees with its snapshot list")
    return Trajectory(cfg, manifest["times"], np.stack(coeffs))
