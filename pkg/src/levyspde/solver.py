"""Semi-implicit Euler-Maruyama stepping on a jump-adapted grid.

The leading part A_L is diagonal in the spectral basis and treated
implicitly with weight ``theta_implicit``; A_S, F, B and the jump
compensator are explicit.  Jumps sit exactly on grid points and act on the
left limit produced by the continuous part of the step.

Two runtime monitors shadow the analysis: a blow-up detector on
``sup ||u||_H + int ||u||_V^2`` and a truncation monitor that stops the path
once the smooth cutoff of its size functional vanishes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gelfand import SpectralTriple
from .model import ModelSpec, smooth_cutoff
from .noise import JumpEvents, NoiseRecord, RngStream, sample_noise

__all__ = [
    "SolveConfig",
    "PathRecord",
    "ItoResidual",
    "build_grid",
    "step",
    "solve_path",
    "solve_with_noise",
    "truncation_argument",
    "truncation_value",
    "ito_residual",
    "write_path_csv",
    "PATH_CSV_COLUMNS",
    "STATUS_FLAGS",
]

CONVENTIONS = ("left_limit", "step_start")
STATUS_FLAGS = {"normal": 0, "jump": 1, "blowup": 2, "truncation_exit": 3}


@dataclass(frozen=True)
class SolveConfig:
    """Discretization and monitor settings for one path.

    ``jump_convention`` selects where the jump amplitude is evaluated:
    ``"left_limit"`` uses the post-diffusion state of the step (default),
    ``"step_start"`` the state at the start of the step.
    """

    T: float = 1.0
    n_steps: int = 256
    theta_implicit: float = 1.0
    blowup_threshold: float = 1e6
    truncation_lambda: Optional[float] = None
    record_every: int = 1
    jump_convention: str = "left_limit"

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if not 0.5 <= self.theta_implicit <= 1.0:
            raise ValueError("theta_implicit must lie in [1/2, 1]")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.truncation_lambda is not None and not self.truncation_lambda > 0:
            raise ValueError("truncation_lambda must be positive")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.jump_convention not in CONVENTIONS:
            raise ValueError(f"jump_convention must be one of {CONVENTIONS}")


@dataclass
class PathRecord:
    """Discrete cadlag trajectory.

    ``states[i]`` is u(t_i) and ``pre_states[i]`` the left limit u(t_i-);
    they differ only where ``jump_marks[i] >= 0``.  The running monitors are
    evaluated at every recorded point.
    """

    grid: np.ndarray
    states: np.ndarray
    pre_states: np.ndarray
    jump_marks: np.ndarray
    running_sup_h: np.ndarray
    running_v_energy: np.ndarray
    status: str = "completed"
    halt_time: Optional[float] = None
    noise: Optional[NoiseRecord] = field(default=None, repr=False)
    record_every: int = 1

    @property
    def pre_jump_states(self) -> np.ndarray:
        return self.pre_states

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def status_line(self) -> str:
        if self.status == "completed":
            return "completed"
        return f"{self.status} at t={self.halt_time:.6g}"

    def monitor(self) -> np.ndarray:
        return self.running_sup_h + self.running_v_energy


def build_grid(T: float, n_steps: int, events: JumpEvents | None = None):
    """Uniform grid ``(i / n) T`` merged with the jump times.

    Returns ``(grid, jump_at)`` where ``jump_at[i]`` is the mark id of the
    jump at ``grid[i]`` and ``-1`` elsewhere.  A jump falling exactly on a
    base point does not duplicate it.
    """
    if T <= 0 or n_steps < 1:
        raise ValueError("need T > 0 and n_steps >= 1")
    base = np.arange(n_steps + 1) / n_steps * T
    if events is None or len(events) == 0:
        return base, np.full(base.size, -1, dtype=np.int64)
    times = events.times
    if times[0] <= 0 or times[-1] > T:
        raise ValueError("jump times must lie in (0, T]")
    grid = np.union1d(base, times)
    jump_at = np.full(grid.size, -1, dtype=np.int64)
    jump_at[np.searchsorted(grid, times)] = events.mark_ids
    return grid, jump_at


def step(u, t: float, dt: float, model: ModelSpec, dW=None, jump_mark: int = -1,
         theta: float = 1.0, convention: str = "left_limit"):
    """One semi-implicit step from ``t`` to ``t + dt``.

    Returns ``(u_next, u_pre)`` with ``u_pre`` the left limit at ``t + dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    diag = model.leading(t, u)
    denom = 1.0 + theta * dt * diag
    if np.any(denom <= 0):
        raise ValueError("implicit diagonal entry is not positive; reduce dt")
    rhs = u + dt * ((theta - 1.0) * diag * u - model.singular(t, dt, u, u) + model.reaction(t, u))
    if model.noise_dim and dW is not None:
        rhs = rhs + np.asarray(dW, dtype=float) @ model.diffusion(t, u)
    if model.n_marks:
        rhs = rhs - dt * model.compensator(t, u)
    u_pre = rhs / denom
    if jump_mark >= 0:
        base = u_pre if convention == "left_limit" else u
        return u_pre + model.jump_amplitude(t, base, int(jump_mark)), u_pre
    return u_pre, u_pre


class _Monitor:
    """Incremental path functionals along the full (unthinned) grid."""

    def __init__(self, triple: SpectralTriple, u0, betas, lam):
        self.lam = triple.eigvals
        self.u0 = u0
        self.sup_h = float(np.linalg.norm(u0))
        self.v_energy = 0.0
        self.betas = betas if lam is not None else ()
        self.x_int = {b: 0.0 for b in self.betas}
        self.sup_dev = 0.0

    def _xq(self, v, b):
        q = 2.0 / (2.0 * b - 1.0)
        return float(np.sum(self.lam ** (2 * b - 1) * v * v)) ** (q / 2.0)

    def advance(self, dt, u_left, u_pre, u_next):
        self.sup_h = max(self.sup_h, float(np.linalg.norm(u_pre)), float(np.linalg.norm(u_next)))
        self.v_energy += 0.5 * dt * (float(np.sum(self.lam * u_left * u_left))
                                     + float(np.sum(self.lam * u_pre * u_pre)))
        for b in self.betas:
            self.x_int[b] += 0.5 * dt * (self._xq(u_left, b) + self._xq(u_pre, b))
        if self.betas:
            self.sup_dev = max(self.sup_dev, float(np.linalg.norm(u_pre - self.u0)))

    def truncation_arg(self) -> float:
        xs = [self.x_int[b] ** ((2.0 * b - 1.0) / 2.0) for b in self.betas]
        return (max(xs) if xs else 0.0) + self.sup_dev


def solve_path(model: ModelSpec, u0, cfg: SolveConfig, rng: RngStream) -> PathRecord:
    """Sample the noise for ``rng`` and integrate one path."""
    noise = sample_noise(model.levy, model.noise_dim, cfg.T, cfg.n_steps, rng)
    return solve_with_noise(model, u0, cfg, noise)


def solve_with_noise(model: ModelSpec, u0, cfg: SolveConfig, noise: NoiseRecord) -> PathRecord:
    """Integrate one path driven by a given noise realization."""
    u = np.array(u0, dtype=float)
    if u.shape != (model.K,):
        raise ValueError(f"initial state must have {model.K} coefficients")
    if not np.all(np.isfinite(u)):
        raise ValueError("initial state must be finite")
    if noise.dW.shape != (noise.grid.size - 1, model.noise_dim):
        raise ValueError("noise record does not match the model's Wiener dimension")
    grid = noise.grid
    betas = model.params.betas
    mon = _Monitor(model.triple, u, betas, cfg.truncation_lambda)

    keep = [0]
    states = [u.copy()]
    pres = [u.copy()]
    sups = [mon.sup_h]
    energies = [0.0]
    status, halt = "completed", None
    base_every = cfg.record_every
    for i in range(grid.size - 1):
        t, dt = grid[i], grid[i + 1] - grid[i]
        mark = int(noise.jump_at[i + 1])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                u_next, u_pre = step(u, t, dt, model, noise.dW[i], mark,
                                     cfg.theta_implicit, cfg.jump_convention)
        except FloatingPointError:
            u_next = u_pre = np.full_like(u, np.nan)
        finite = np.all(np.isfinite(u_next)) and np.all(np.isfinite(u_pre))
        if finite:
            with np.errstate(over="ignore"):
                mon.advance(dt, u, u_pre, u_next)
            finite = math.isfinite(mon.sup_h + mon.v_energy)
        if not finite:
            status, halt = "blowup", float(grid[i + 1])
            break
        u = u_next
        last = i + 1 == grid.size - 1
        if last or mark >= 0 or (i + 1) % base_every == 0 or mon.sup_h + mon.v_energy >= cfg.blowup_threshold:
            keep.append(i + 1)
            states.append(u_next)
            pres.append(u_pre)
            sups.append(mon.sup_h)
            energies.append(mon.v_energy)
        if mon.sup_h + mon.v_energy >= cfg.blowup_threshold:
            status, halt = "blowup", float(grid[i + 1])
            break
        if cfg.truncation_lambda is not None:
            if smooth_cutoff(mon.truncation_arg() / cfg.truncation_lambda) <= 0.0:
                status, halt = "truncation_exit", float(grid[i + 1])
                if keep[-1] != i + 1:
                    keep.append(i + 1)
                    states.append(u_next)
                    pres.append(u_pre)
                    sups.append(mon.sup_h)
                    energies.append(mon.v_energy)
                break

    keep = np.array(keep)
    return PathRecord(
        grid=grid[keep].copy(),
        states=np.array(states),
        pre_states=np.array(pres),
        jump_marks=noise.jump_at[keep].copy(),
        running_sup_h=np.array(sups),
        running_v_energy=np.array(energies),
        status=status,
        halt_time=halt,
        noise=noise,
        record_every=cfg.record_every,
    )


def truncation_argument(triple: SpectralTriple, path: PathRecord, x, betas, t: float | None = None) -> float:
    """``max_beta ||v||_{X(a,t), beta} + sup_{s<=t} ||v(s-) - x||_H`` over the recorded path."""
    from .gelfand import path_norms

    a = float(path.grid[0])
    t = float(path.grid[-1]) if t is None else float(t)
    if t <= a:
        return 0.0
    norms = path_norms(triple, path, a, t, betas=betas)
    upto = path.grid <= t
    dev = np.linalg.norm(np.asarray(path.pre_states)[upto] - np.asarray(x), axis=1)
    return max(norms.x_norms.values()) + float(dev.max())


def truncation_value(triple: SpectralTriple, path: PathRecord | None, x, lam: float,
                     betas=(1.0,), t: float | None = None) -> float:
    """Theta_lambda of the path history: ``xi(argument / lambda)``.

    An empty history (``path`` is None or ``t`` equal to its start) gives 1.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if path is None:
        return 1.0
    arg = truncation_argument(triple, path, x, betas, t)
    return float(smooth_cutoff(arg / lam))


# ---------------------------------------------------------------------------
# Ito energy identity


@dataclass
class ItoResidual:
    """Terms of the energy identity along a path.

    ``rhs_terms`` (jump terms in N-integral form):

    * ``initial``      ||u_0||^2
    * ``drift``        2 int <-A(s,u), u> ds (trapezoid, compensator excluded)
    * ``ito_corr``     int ||B(s,u)||_HS^2 ds
    * ``wiener``       2 int <u, B dW>
    * ``jump_mart``    2 int <u(s-), C> dN~
    * ``jump_qv``      sum over jumps of ||Delta u||^2

    ``alt_terms`` replace the last two by the compensated form
    ``jump_tilde`` (int (||u- + C||^2 - ||u-||^2) dN~) and
    ``jump_nu`` (int int ||C||^2 nu(dz) ds).
    """

    times: np.ndarray
    lhs: np.ndarray
    rhs_terms: dict
    alt_terms: dict
    residual: np.ndarray
    alt_residual: np.ndarray
    gate_finite: bool

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def form_gap(self) -> float:
        """Largest relative disagreement of the two assemblies."""
        scale = np.abs(self.lhs) + sum(np.abs(v) for v in self.rhs_terms.values())
        scale = scale + sum(np.abs(v) for v in self.alt_terms.values())
        gap = np.abs(self.residual - self.alt_residual) / np.maximum(scale, np.finfo(float).tiny)
        return float(np.max(gap))


def ito_residual(path: PathRecord, model: ModelSpec, noise: NoiseRecord | None = None) -> ItoResidual:
    """Both assemblies of the Ito identity for ``||u(t)||_H^2`` at every grid point."""
    noise = noise if noise is not None else path.noise
    if noise is None:
        raise ValueError("a noise record is required")
    n = path.grid.size
    if path.record_every != 1 or not np.array_equal(noise.grid[:n], path.grid):
        raise ValueError("noise record does not match the path grid (record_every must be 1)")
    grid = path.grid
    S, P = path.states, path.pre_states
    nu = model.levy.intensities if model.n_marks else np.zeros(0)

    def node(t, v, dt):
        d = float(np.dot(model.drift(t, v, dt), v))
        amps = model.jump_amplitudes(t, v) if model.n_marks else np.zeros((0, model.K))
        comp = float(np.dot(nu @ amps, v)) if model.n_marks else 0.0
        sq = np.sum(amps * amps, axis=1)
        shifted = np.sum((v + amps) ** 2, axis=1) - float(np.dot(v, v))
        return d, comp, float(nu @ shifted), float(nu @ sq)

    keys = ("drift", "ito_corr", "wiener", "jump_mart", "jump_qv", "comp_tilde", "nu_sq", "tilde_events")
    inc = {k: np.zeros(n) for k in keys}
    for i in range(n - 1):
        t, dt = grid[i], grid[i + 1] - grid[i]
        u, up = S[i], P[i + 1]
        dl, cl, tl, ql = node(t, u, dt)
        dr, cr, tr, qr = node(t, up, dt)
        inc["drift"][i + 1] = dt * (dl + dr)
        if model.noise_dim:
            B = model.diffusion(t, u)
            inc["ito_corr"][i + 1] = float(np.sum(B * B)) * dt
            inc["wiener"][i + 1] = 2.0 * float(np.dot(noise.dW[i] @ B, u))
        jump = S[i + 1] - P[i + 1]
        ev = path.jump_marks[i + 1] >= 0
        inc["jump_mart"][i + 1] = (2.0 * float(np.dot(up, jump)) if ev else 0.0) - dt * (cl + cr)
        inc["jump_qv"][i + 1] = float(np.dot(jump, jump)) if ev else 0.0
        inc["tilde_events"][i + 1] = (float(np.dot(S[i + 1], S[i + 1]) - np.dot(up, up)) if ev else 0.0)
        inc["comp_tilde"][i + 1] = 0.5 * dt * (tl + tr)
        inc["nu_sq"][i + 1] = 0.5 * dt * (ql + qr)
    acc = {k: np.cumsum(v) for k, v in inc.items()}
    u0sq = float(np.dot(S[0], S[0]))
    initial = np.full(n, u0sq)
    rhs = {
        "initial": initial,
        "drift": acc["drift"],
        "ito_corr": acc["ito_corr"],
        "wiener": acc["wiener"],
        "jump_mart": acc["jump_mart"],
        "jump_qv": acc["jump_qv"],
    }
    alt = {
        "initial": initial,
        "drift": acc["drift"],
        "ito_corr": acc["ito_corr"],
        "wiener": acc["wiener"],
        "jump_tilde": acc["tilde_events"] - acc["comp_tilde"],
        "jump_nu": acc["nu_sq"],
    }
    lhs = np.sum(S * S, axis=1)
    residual = lhs - sum(rhs.values())
    alt_residual = lhs - sum(alt.values())
    return ItoResidual(
        times=grid.copy(),
        lhs=lhs,
        rhs_terms=rhs,
        alt_terms=alt,
        residual=residual,
        alt_residual=alt_residual,
        gate_finite=bool(np.isfinite(acc["nu_sq"][-1])),
    )


# ---------------------------------------------------------------------------
# CSV dump

PATH_CSV_COLUMNS = ("t", "status_flag", "norm_H", "norm_V", "sup_H_so_far", "V_energy_so_far")


def write_path_csv(dest, path: PathRecord, triple: SpectralTriple, modes: bool = False) -> None:
    """Write a path as CSV.

    Columns ``t, status_flag, norm_H, norm_V, sup_H_so_far, V_energy_so_far``
    and, with ``modes``, one ``u_k`` column per coefficient.  ``status_flag``
    is 0 for an ordinary point, 1 at a jump, 2 at a blow-up halt and 3 at a
    truncation exit.  Floats are written with ``repr`` so output is exact
    and deterministic.
    """
    lam = triple.eigvals
    header = list(PATH_CSV_COLUMNS)
    if modes:
        header += [f"u_{k + 1}" for k in range(triple.modes)]
    n = path.grid.size
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            u = path.states[i]
            flag = STATUS_FLAGS["jump"] if path.jump_marks[i] >= 0 else STATUS_FLAGS["normal"]
            if i == n - 1 and path.status != "completed":
                flag = STATUS_FLAGS[path.status]
            row = [repr(float(path.grid[i])), str(flag),
                   repr(float(np.linalg.norm(u))), repr(float(np.sqrt(np.sum(lam * u * u)))),
                   repr(float(path.running_sup_h[i])), repr(float(path.running_v_energy[i]))]
            if modes:
                row += [repr(float(x)) for x in u]
            w.writerow(row)
