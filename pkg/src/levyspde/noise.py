"""Driving noises: truncated cylindrical Wiener process and finite-activity
Poisson random measures, plus the stochastic integrals used for diagnostics.

Randomness flows exclusively through :class:`RngStream`.  Each stream hands
out independent numpy ``Generator`` objects backed by the counter-based
Philox bit generator, keyed by ``SeedSequence(master_seed,
spawn_key=(stream_id, purpose_tag))``.  Gaussian variates come from
``Generator.standard_normal`` (numpy's ziggurat transform of the Philox
stream), so a given ``(master_seed, stream_id)`` reproduces bit-identical
noise independent of scheduling.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "LevyMeasureSpec",
    "JumpEvents",
    "WienerIncrements",
    "RngStream",
    "NoiseRecord",
    "sample_jump_events",
    "sample_wiener",
    "sample_noise",
    "compensated_integral",
    "quadratic_variation",
    "write_noise",
    "read_noise",
]


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Finite atomic characteristic measure ``nu = sum_i nu_i delta_{z_i}``.

    ``marks`` carry arbitrary payloads (scalars, vectors); the solver and the
    integrals only ever see the mark index.
    """

    marks: tuple = ()
    intensities: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        inten = np.array(self.intensities, dtype=float).reshape(-1)
        marks = tuple(self.marks) if len(self.marks) else tuple(range(inten.size))
        if len(marks) != inten.size:
            raise ValueError("one intensity per mark is required")
        if np.any(~np.isfinite(inten)) or np.any(inten <= 0):
            raise ValueError("intensities must be finite and positive")
        inten.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "intensities", inten)

    @property
    def total_mass(self) -> float:
        return float(self.intensities.sum())

    @property
    def n_marks(self) -> int:
        return self.intensities.size

    @classmethod
    def empty(cls) -> "LevyMeasureSpec":
        return cls((), np.zeros(0))


@dataclass(frozen=True)
class JumpEvents:
    """Sampled atoms of the Poisson random measure on (0, T] x Z."""

    times: np.ndarray
    mark_ids: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        m = np.array(self.mark_ids, dtype=np.int64).reshape(-1)
        if t.size != m.size:
            raise ValueError("times and mark_ids differ in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        t.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "mark_ids", m)

    def __len__(self):
        return self.times.size

    @classmethod
    def none(cls) -> "JumpEvents":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class WienerIncrements:
    """Increments of a ``dim_u``-dimensional Brownian motion on ``grid``."""

    dim_u: int
    grid: np.ndarray
    dW: np.ndarray


@dataclass(frozen=True)
class RngStream:
    """Per-path randomness keyed by ``(master_seed, stream_id)``."""

    master_seed: int
    stream_id: int = 0

    def generator(self, purpose: str) -> np.random.Generator:
        """Independent generator for one use inside the path."""
        tag = zlib.crc32(purpose.encode("ascii"))
        ss = np.random.SeedSequence(
            entropy=int(self.master_seed) & (2**64 - 1),
            spawn_key=(int(self.stream_id), tag),
        )
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.master_seed, stream_id)


def sample_jump_events(spec: LevyMeasureSpec | None, T: float, rng: RngStream) -> JumpEvents:
    """Atoms of N on (0, T]: Poisson count, uniform times, categorical marks."""
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if spec is None or spec.n_marks == 0:
        return JumpEvents.none()
    gen = rng.generator("jumps")
    n = int(gen.poisson(spec.total_mass * T))
    # 1 - U lies in (0, 1]
    times = np.sort(T * (1.0 - gen.random(n)))
    marks = gen.choice(spec.n_marks, size=n, p=spec.intensities / spec.total_mass)
    return JumpEvents(times, marks)


def sample_wiener(dim_u: int, grid, rng: RngStream) -> WienerIncrements:
    """Independent centred Gaussian increments with variance ``dt`` per component."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 1:
        raise ValueError("empty time grid")
    dt = np.diff(grid)
    if np.any(dt < 0):
        raise ValueError("grid must be nondecreasing")
    gen = rng.generator("wiener")
    z = gen.standard_normal((dt.size, int(dim_u)))
    return WienerIncrements(int(dim_u), grid, z * np.sqrt(dt)[:, None])


@dataclass(frozen=True)
class NoiseRecord:
    """One realization of all driving noise on a jump-adapted grid.

    ``jump_at[i]`` is the mark id of the jump at ``grid[i]`` or ``-1``.
    """

    grid: np.ndarray
    jump_at: np.ndarray
    wiener: WienerIncrements
    events: JumpEvents
    T: float

    @property
    def dW(self) -> np.ndarray:
        return self.wiener.dW

    def coarsen(self, n_steps: int) -> "NoiseRecord":
        """Same noise seen on the coarser base grid ``n_steps`` merged with the jumps.

        Brownian increments are aggregated; the coarse grid must be a subset of
        this record's grid.
        """
        from .solver import build_grid

        grid, flags = build_grid(self.T, n_steps, self.events)
        pos = np.searchsorted(self.grid, grid)
        pos = np.minimum(pos, self.grid.size - 1)
        if not np.array_equal(self.grid[pos], grid):
            raise ValueError("non-nested grids: coarse points missing from the fine grid")
        W = np.concatenate([np.zeros((1, self.wiener.dim_u)), np.cumsum(self.dW, axis=0)])
        dW = np.diff(W[pos], axis=0)
        return NoiseRecord(
            grid=grid,
            jump_at=self.jump_at[pos],
            wiener=WienerIncrements(self.wiener.dim_u, grid, dW),
            events=self.events,
            T=self.T,
        )


def sample_noise(spec: LevyMeasureSpec | None, dim_u: int, T: float, n_steps: int,
                 rng: RngStream) -> NoiseRecord:
    """Jumps first, then Brownian increments on the merged grid."""
    from .solver import build_grid

    events = sample_jump_events(spec, T, rng)
    grid, jump_at = build_grid(T, n_steps, events)
    wiener = sample_wiener(dim_u, grid, rng)
    return NoiseRecord(grid=grid, jump_at=jump_at, wiener=wiener, events=events, T=float(T))


Integrand = Callable[[float, int], np.ndarray]


def _eval(h: Integrand, t: float, z: int) -> np.ndarray:
    try:
        val = h(t, z)
    except (KeyError, IndexError) as exc:
        raise ValueError(f"integrand undefined on mark {z}") from exc
    val = np.atleast_1d(np.asarray(val, dtype=float))
    if not np.all(np.isfinite(val)):
        raise ValueError(f"integrand not finite on mark {z}")
    return val


def _cell_start(grid: np.ndarray, t: float) -> float:
    """Left end of the grid cell (t_j, t_{j+1}] containing t."""
    j = int(np.searchsorted(grid, t, side="left")) - 1
    return float(grid[max(j, 0)])


def compensated_integral(h: Integrand, events: JumpEvents, spec: LevyMeasureSpec | None,
                         grid, dim: int | None = None) -> np.ndarray:
    """Running value of int_0^t int_Z h dN~ at every grid point.

    ``h`` is a left-continuous step integrand: on the cell (t_j, t_{j+1}] it
    equals ``h(t_j, z)``, so a jump at ``t_i`` in that cell contributes
    ``h(t_j, z_i)``.  The compensator is integrated exactly for such
    integrands.  ``dim`` is only needed when there are neither marks nor
    events to infer the output size from.
    """
    grid = np.asarray(grid, dtype=float)
    n_marks = spec.n_marks if spec is not None else 0
    jumps = [
        _eval(h, _cell_start(grid, t), int(z)) for t, z in zip(events.times, events.mark_ids)
    ]
    if n_marks:
        rates = np.array([
            sum(spec.intensities[z] * _eval(h, grid[j], z) for z in range(n_marks))
            for j in range(grid.size - 1)
        ])
        dim = rates.shape[1]
    else:
        dim = jumps[0].size if jumps else (dim or 1)
        rates = np.zeros((grid.size - 1, dim))
    comp = np.concatenate([np.zeros((1, dim)), np.cumsum(np.diff(grid)[:, None] * rates, axis=0)])
    counted = np.zeros((grid.size, dim))
    if jumps:
        cell = np.searchsorted(grid, events.times, side="left")
        np.add.at(counted, cell, np.array(jumps))
        counted = np.cumsum(counted, axis=0)
    return counted - comp


def quadratic_variation(h: Integrand, events: JumpEvents, up_to: float, grid=None) -> float:
    """Sum of ``||h(t_i, z_i)||^2`` over jumps with ``t_i <= up_to``.

    With ``grid`` given, ``h`` is read with the same left-continuous
    convention as :func:`compensated_integral`.
    """
    total = 0.0
    g = None if grid is None else np.asarray(grid, dtype=float)
    for t, z in zip(events.times, events.mark_ids):
        if t > up_to:
            break
        s = t if g is None else _cell_start(g, t)
        v = _eval(h, s, int(z))
        total += float(np.dot(v, v))
    return total


_MAGIC = b"LVYN"
_VERSION = 1


def write_noise(path, record: NoiseRecord) -> None:
    """Binary dump of a noise record for cross-language replay.

    Layout, all little-endian::

        4s   magic "LVYN"
        u32  version (1)
        f64  horizon T
        u64  n_events
        f64[n_events]  jump times
        i64[n_events]  mark ids
        u64  n_steps
        u64  dim_u
        f64[n_steps+1] grid
        i64[n_steps+1] jump mark at grid point (-1 if none)
        f64[n_steps*dim_u] Brownian increments, row-major (step, component)
    """
    ev = record.events
    n_steps = record.grid.size - 1
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<d", record.T))
        fh.write(struct.pack("<Q", len(ev)))
        fh.write(ev.times.astype("<f8").tobytes())
        fh.write(ev.mark_ids.astype("<i8").tobytes())
        fh.write(struct.pack("<QQ", n_steps, record.wiener.dim_u))
        fh.write(record.grid.astype("<f8").tobytes())
        fh.write(record.jump_at.astype("<i8").tobytes())
        fh.write(np.ascontiguousarray(record.dW).astype("<f8").tobytes())


def read_noise(path) -> NoiseRecord:
    """Inverse of :func:`write_noise`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a noise dump")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported noise dump version {version}")
    off = 8
    (T,) = struct.unpack_from("<d", data, off)
    off += 8
    (n_ev,) = struct.unpack_from("<Q", data, off)
    off += 8
    times = np.frombuffer(data, "<f8", n_ev, off).astype(float)
    off += 8 * n_ev
    marks = np.frombuffer(data, "<i8", n_ev, off).astype(np.int64)
    off += 8 * n_ev
    n_steps, dim_u = struct.unpack_from("<QQ", data, off)
    off += 16
    grid = np.frombuffer(data, "<f8", n_steps + 1, off).astype(float)
    off += 8 * (n_steps + 1)
    jump_at = np.frombuffer(data, "<i8", n_steps + 1, off).astype(np.int64)
    off += 8 * (n_steps + 1)
    dW = np.frombuffer(data, "<f8", n_steps * dim_u, off).astype(float).reshape(n_steps, dim_u)
    return NoiseRecord(
        grid=grid,
        jump_at=jump_at,
        wiener=WienerIncrements(int(dim_u), grid, dW),
        events=JumpEvents(times, marks),
        T=T,
    )
