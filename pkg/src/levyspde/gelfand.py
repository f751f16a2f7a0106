"""Spectral realization of the Gelfand triple V -> H -> V* and its scale V_theta.

Everything lives in an orthonormal eigenbasis of H.  A state is a vector of
coefficients ``x`` and the interpolation norms are diagonal weights::

    ||x||_theta^2 = sum_k lam_k^(2 theta - 1) x_k^2

so theta = 1/2 is the H norm, theta = 1 the V norm and theta = 0 the V* norm.
With these weights complex interpolation is exact, which makes the classical
interpolation and duality inequalities hold with constant one.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SpectralTriple",
    "PathNorms",
    "build_dirichlet_triple",
    "theta_norm",
    "pairing",
    "path_norms",
    "as_coeffs",
]


@dataclass(frozen=True)
class SpectralTriple:
    """Gelfand triple diagonalized by a fixed orthonormal basis.

    Attributes
    ----------
    dim : int
        Spatial dimension (0 for abstract sequence spaces such as shell models).
    lengths : tuple of float
        Side lengths of the rectangular domain.
    modes : int
        Number of retained basis functions ``K``.
    eigvals : ndarray, shape (K,)
        Weights ``lam_k`` defining the V norm, sorted ascending.
    mode_index : ndarray, shape (K, dim)
        Multi-index of each mode (1-based sine wavenumbers).
    lap_eigvals : ndarray, shape (K,)
        Dirichlet Laplacian eigenvalues of the modes.  Equal to ``eigvals``
        for the H^1_0 triple, and to ``sqrt(eigvals)`` for the H^2 triple.
    order : int
        1 for V = H^1_0, 2 for V = H^2 cap H^1_0.
    """

    dim: int
    lengths: tuple
    modes: int
    eigvals: np.ndarray = field(repr=False)
    mode_index: np.ndarray = field(repr=False)
    lap_eigvals: np.ndarray = field(repr=False)
    order: int = 1

    def __post_init__(self):
        for name in ("eigvals", "mode_index", "lap_eigvals"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.eigvals.shape != (self.modes,):
            raise ValueError("eigvals must have one entry per mode")
        if np.any(self.eigvals <= 0) or np.any(np.diff(self.eigvals) < 0):
            raise ValueError("eigvals must be strictly positive and sorted")

    @classmethod
    def from_eigvals(cls, eigvals: Sequence[float]) -> "SpectralTriple":
        """Abstract triple on a sequence space with the given V weights."""
        lam = np.asarray(eigvals, dtype=float)
        order = np.argsort(lam, kind="stable")
        lam = lam[order]
        k = lam.size
        return cls(
            dim=0,
            lengths=(),
            modes=k,
            eigvals=lam,
            mode_index=(order + 1).reshape(k, 1),
            lap_eigvals=lam,
            order=1,
        )

    def weights(self, theta: float) -> np.ndarray:
        """Squared-norm weights ``lam_k^(2 theta - 1)`` of V_theta."""
        _check_theta(theta)
        return self.eigvals ** (2.0 * theta - 1.0)

    def basis(self, k: int) -> np.ndarray:
        """Unit coefficient vector of mode ``k`` (0-based)."""
        e = np.zeros(self.modes)
        e[k] = 1.0
        return e


@dataclass(frozen=True)
class PathNorms:
    """Path-space norms of a trajectory over a time window ``[a, b]``."""

    m_norm: float
    x_norms: dict
    sup_h: float
    v_energy: float


def build_dirichlet_triple(d: int, lengths, K: int, order: int = 1) -> SpectralTriple:
    """Sine basis of the Dirichlet Laplacian on a box.

    Parameters
    ----------
    d : int
        Dimension, 1 or 2.
    lengths : float or sequence of float
        Side lengths.
    K : int
        Number of modes.  For ``d = 2`` the ``K`` smallest tensor eigenvalues
        are kept, ties broken by lexicographic multi-index.
    order : int, optional
        1 gives V = H^1_0 (weights mu_k); 2 gives V = H^2 cap H^1_0 with
        Navier conditions (weights mu_k^2).
    """
    if d not in (1, 2):
        raise ValueError(f"unsupported dimension d={d}; only 1 and 2 are available")
    if K < 1:
        raise ValueError("mode count K must be at least 1")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    lengths = tuple(float(x) for x in np.broadcast_to(np.atleast_1d(lengths), (d,)))
    if any(x <= 0 for x in lengths):
        raise ValueError("domain lengths must be positive")

    if d == 1:
        idx = np.arange(1, K + 1).reshape(K, 1)
    else:
        # enough candidates in each direction to contain the K smallest
        n = K + 1
        cand = sorted(
            itertools.product(range(1, n + 1), range(1, n + 1)),
            key=lambda mn: (_lap_value(mn, lengths), mn),
        )
        idx = np.array(cand[:K], dtype=int)
    mu = np.array([_lap_value(tuple(row), lengths) for row in idx])
    return SpectralTriple(
        dim=d,
        lengths=lengths,
        modes=K,
        eigvals=mu**order,
        mode_index=idx,
        lap_eigvals=mu,
        order=order,
    )


def _lap_value(mn, lengths) -> float:
    return float(sum((np.pi * m / L) ** 2 for m, L in zip(mn, lengths)))


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"interpolation index must lie in [0, 1], got {theta}")


def as_coeffs(triple: SpectralTriple, x) -> np.ndarray:
    """Validate a coefficient vector against ``triple``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != triple.modes:
        raise ValueError(f"expected {triple.modes} coefficients, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("coefficients must be finite")
    return x


def theta_norm(triple: SpectralTriple, x, theta: float) -> float:
    """Norm of ``x`` in V_theta."""
    w = triple.weights(theta)
    x = as_coeffs(triple, x)
    # scale by the largest entry so tiny or huge coefficients neither underflow nor overflow
    s = float(np.max(np.abs(x), initial=0.0))
    if s == 0.0:
        return 0.0
    y = x / s
    return s * float(np.sqrt(np.sum(w * y * y, axis=-1)))


def pairing(triple: SpectralTriple, u, v) -> float:
    """Duality pairing, the continuous extension of the H inner product."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape[-1] != triple.modes:
        raise ValueError("pairing needs two coefficient vectors of the triple's length")
    return float(np.dot(u, v))


def path_norms(triple: SpectralTriple, path, a: float, b: float, betas=(1.0,)) -> PathNorms:
    """M(a,b) and X-type norms of a cadlag path.

    ``path`` needs ``grid``, ``states`` (right-continuous values) and
    ``pre_states`` (left limits; equal to ``states`` off jump times).
    Time integrals use the trapezoidal rule on each grid cell with the
    left limit at the cell's right end.
    """
    betas = tuple(float(bt) for bt in betas)
    for bt in betas:
        if not 0.5 < bt <= 1.0:
            raise ValueError(f"beta must lie in (1/2, 1], got {bt}")
    grid = np.asarray(path.grid, dtype=float)
    if not a < b:
        raise ValueError("empty time window")
    if a < grid[0] - 1e-14 or b > grid[-1] + 1e-14:
        raise ValueError("time window outside the path's span")

    times, right, left = _window(grid, np.asarray(path.states), np.asarray(path.pre_states), a, b)
    h_sq_r = np.sum(right * right, axis=1)
    h_sq_l = np.sum(left * left, axis=1)
    sup_h = float(np.sqrt(max(h_sq_r.max(), h_sq_l.max())))
    dt = np.diff(times)
    lam = triple.eigvals

    def integrate(fn):
        vr = fn(right)
        vl = fn(left)
        return float(np.sum(0.5 * dt * (vr[:-1] + vl[1:])))

    v_energy = integrate(lambda s: np.sum(lam * s * s, axis=1))
    x_norms = {}
    for bt in betas:
        q = 2.0 / (2.0 * bt - 1.0)
        w = lam ** (2.0 * bt - 1.0)
        # rescale by the largest node value so large q cannot overflow
        peak = float(np.sqrt(max(np.max(np.sum(w * right * right, axis=1)),
                                 np.max(np.sum(w * left * left, axis=1)))))
        if peak == 0.0:
            x_norms[bt] = 0.0
            continue
        val = integrate(lambda s: (np.sqrt(np.sum(w * s * s, axis=1)) / peak) ** q)
        x_norms[bt] = peak * val ** (1.0 / q)
    return PathNorms(
        m_norm=sup_h + float(np.sqrt(v_energy)),
        x_norms=x_norms,
        sup_h=sup_h,
        v_energy=v_energy,
    )


def _window(grid, states, pre, a, b):
    """Restrict a path to [a, b], interpolating linearly inside a cell."""
    inside = (grid > a) & (grid < b)
    t = [a]
    r = [_value_at(grid, states, pre, a, right=True)]
    l = [_value_at(grid, states, pre, a, right=False)]
    for i in np.flatnonzero(inside):
        t.append(grid[i])
        r.append(states[i])
        l.append(pre[i])
    t.append(b)
    r.append(_value_at(grid, states, pre, b, right=True))
    l.append(_value_at(grid, states, pre, b, right=False))
    return np.array(t), np.array(r), np.array(l)


def _value_at(grid, states, pre, t, right):
    i = int(np.searchsorted(grid, t, side="left"))
    if i < grid.size and np.isclose(grid[i], t, rtol=0, atol=1e-14):
        return states[i] if right else pre[i]
    # strictly inside cell (i-1, i): linear between states[i-1] and pre[i]
    t0, t1 = grid[i - 1], grid[i]
    s = (t - t0) / (t1 - t0)
    return (1 - s) * states[i - 1] + s * pre[i]
