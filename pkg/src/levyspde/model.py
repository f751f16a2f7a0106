"""The abstract quasilinear problem

    du + A(t,u) dt = B(t,u) dW + int_Z C(t,u(t-),z) N~(dz,dt),
    A = A_L + A_S - F - f,   B = B_0 u + G + g,   C = C_0 u + H + h,

expressed on a :class:`~levyspde.gelfand.SpectralTriple`, together with
mechanical checks of the exponent and coercivity hypotheses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .gelfand import SpectralTriple
from .noise import LevyMeasureSpec, RngStream

__all__ = [
    "GrowthParams",
    "ModelSpec",
    "CoercivityProfile",
    "SubcriticalityReport",
    "ExponentCheck",
    "ModelValidationError",
    "is_admissible",
    "p_from_alpha",
    "check_subcriticality",
    "critical_beta",
    "check_parabolicity",
    "exponent_check",
    "estimate_coercivity",
    "smooth_cutoff",
]

CRITICAL_TOL = 1e-12


class ModelValidationError(ValueError):
    """A structural hypothesis fails for a model declaration."""


def _inv(x: float) -> float:
    # the 1/0 := infinity convention
    return math.inf if x == 0 else 1.0 / x


@dataclass(frozen=True)
class GrowthParams:
    """Growth and smoothness exponents of the operator tuple."""

    alpha_A: float = 0.5
    beta_A: float = 0.5
    beta_B: float = 1.0
    beta_C: float = 1.0
    alpha_F: float = 0.0
    beta_F: float = 0.75
    rho_F: float = 0.0
    beta_G: float = 0.75
    rho_G: float = 0.0
    beta_H: float = 0.75
    rho_H: float = 0.0

    def __post_init__(self):
        def within(name, lo, hi, open_lo=False):
            v = getattr(self, name)
            ok = (lo < v if open_lo else lo <= v) and v <= hi
            if not ok:
                raise ValueError(f"{name}={v} outside {'(' if open_lo else '['}{lo}, {hi}]")

        within("alpha_A", 0.0, 0.5)
        within("alpha_F", 0.0, 0.5)
        for name in ("beta_A", "beta_B", "beta_C"):
            within(name, 0.5, 1.0)
        for name in ("beta_F", "beta_G", "beta_H"):
            within(name, 0.5, 1.0, open_lo=True)
        for name in ("rho_F", "rho_G", "rho_H"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def r_A(self) -> float:
        return _inv(1.0 + self.alpha_A - self.beta_A)

    @property
    def r_B(self) -> float:
        return _inv(1.0 - self.beta_B)

    @property
    def r_C(self) -> float:
        return _inv(1.0 - self.beta_C)

    @property
    def betas(self) -> tuple:
        """Exponents whose path norms define the X(a,b) space."""
        return tuple(sorted({1.0, self.beta_A, self.beta_B, self.beta_C,
                             self.beta_F, self.beta_G, self.beta_H} - {0.5}))


@dataclass(frozen=True)
class CoercivityProfile:
    """Constants of a coercivity bound ``kappa ||v||_V^2 - M ||v||_H^2 - psi``."""

    kappa: float
    M: float
    psi: float = 0.0
    eta: float = 0.0
    mode: str = "linearized"
    n_samples: int = 0
    note: str = "sample-based certificate over random and basis directions, not a proof"

    @property
    def valid(self) -> bool:
        return self.kappa > 0 and math.isfinite(self.M) and math.isfinite(self.psi)


# ---------------------------------------------------------------------------
# model declaration


@dataclass
class ModelSpec:
    """Operator tuple of the problem on a spectral triple.

    All callables act on coefficient vectors of length ``K``:

    * ``a_leading(t, u) -> (K,)`` diagonal symbol of A_L(t, u) (treated
      implicitly by the solver).
    * ``a_singular(t, dt, u, v) -> (K,)`` A_S(t, u) v averaged over
      ``[t, t + dt]``; ``dt = 0`` means the pointwise value.
    * ``nonlin_F(t, u) -> (K,)`` and ``forcing_f(t) -> (K,)``.
    * ``b_linear(t, u, v) -> (m, K)`` B_0(t, u) v, one row per Wiener channel;
      ``nonlin_G(t, u)`` and ``forcing_g(t)`` likewise.
    * ``c_linear(t, u, v, z) -> (K,)``, ``nonlin_H(t, u, z)``,
      ``forcing_h(t, z)`` for mark index ``z`` of ``levy``.

    Unused entries are ``None``.
    """

    triple: SpectralTriple
    a_leading: Callable
    params: GrowthParams = field(default_factory=GrowthParams)
    name: str = "model"
    a_singular: Optional[Callable] = None
    nonlin_F: Optional[Callable] = None
    forcing_f: Optional[Callable] = None
    noise_dim: int = 0
    b_linear: Optional[Callable] = None
    nonlin_G: Optional[Callable] = None
    forcing_g: Optional[Callable] = None
    levy: Optional[LevyMeasureSpec] = None
    c_linear: Optional[Callable] = None
    nonlin_H: Optional[Callable] = None
    forcing_h: Optional[Callable] = None
    # admissible pairs (p, theta) declared for each part of f
    forcing_pairs: tuple = ()
    # integrable time weights added to the zero-order coercivity constant
    phi_profiles: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise_dim < 0:
            raise ValueError("noise_dim must be nonnegative")
        for p, theta in self.forcing_pairs:
            if not is_admissible(p, theta):
                raise ModelValidationError(f"forcing pair (p={p}, theta={theta}) is not admissible")

    @property
    def K(self) -> int:
        return self.triple.modes

    @property
    def n_marks(self) -> int:
        return 0 if self.levy is None else self.levy.n_marks

    def replace(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    # -- assembled terms -------------------------------------------------
    def leading(self, t, u) -> np.ndarray:
        return np.asarray(self.a_leading(t, u), dtype=float)

    def singular(self, t, dt, u, v) -> np.ndarray:
        if self.a_singular is None:
            return np.zeros(self.K)
        return self.a_singular(t, dt, u, v)

    def reaction(self, t, u) -> np.ndarray:
        """F(t, u) + f(t)."""
        out = np.zeros(self.K)
        if self.nonlin_F is not None:
            out = out + self.nonlin_F(t, u)
        if self.forcing_f is not None:
            out = out + self.forcing_f(t)
        return out

    def drift(self, t, u, dt=0.0) -> np.ndarray:
        """-A(t, u) = -A_L u - A_S u + F + f."""
        return -self.leading(t, u) * u - self.singular(t, dt, u, u) + self.reaction(t, u)

    def diffusion(self, t, u) -> np.ndarray:
        """B(t, u) = B_0(t, u) u + G(t, u) + g(t), shape (m, K)."""
        out = np.zeros((self.noise_dim, self.K))
        if self.noise_dim == 0:
            return out
        if self.b_linear is not None:
            out = out + self.b_linear(t, u, u)
        if self.nonlin_G is not None:
            out = out + self.nonlin_G(t, u)
        if self.forcing_g is not None:
            out = out + self.forcing_g(t)
        return out

    def jump_amplitude(self, t, u, z) -> np.ndarray:
        """C(t, u, z) = C_0(t, u, z) u + H(t, u, z) + h(t, z)."""
        out = np.zeros(self.K)
        if self.c_linear is not None:
            out = out + self.c_linear(t, u, u, z)
        if self.nonlin_H is not None:
            out = out + self.nonlin_H(t, u, z)
        if self.forcing_h is not None:
            out = out + self.forcing_h(t, z)
        return out

    def jump_amplitudes(self, t, u) -> np.ndarray:
        """C(t, u, z) for every mark, shape (n_marks, K)."""
        return np.array([self.jump_amplitude(t, u, z) for z in range(self.n_marks)]).reshape(
            self.n_marks, self.K
        )

    def compensator(self, t, u) -> np.ndarray:
        """sum_z nu({z}) C(t, u, z)."""
        if self.n_marks == 0:
            return np.zeros(self.K)
        return self.levy.intensities @ self.jump_amplitudes(t, u)


# ---------------------------------------------------------------------------
# exponent arithmetic


def is_admissible(p: float, theta: float) -> bool:
    """Whether ``(p, theta)`` satisfies ``theta >= 1/p - 1/2``."""
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"p must lie in [1, 2], got {p}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return theta >= 1.0 / p - 0.5 - 1e-15


def p_from_alpha(alpha: float) -> float:
    """Integrability exponent ``2 / (2 alpha + 1)`` paired with V_alpha."""
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [0, 1/2], got {alpha}")
    return 2.0 / (2.0 * alpha + 1.0)


@dataclass(frozen=True)
class ConditionVerdict:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def verdict(self) -> str:
        if abs(self.slack) <= CRITICAL_TOL:
            return "critical"
        return "subcritical" if self.slack > 0 else "violated"

    @property
    def ok(self) -> bool:
        return self.verdict != "violated"

    def line(self) -> str:
        s = 0.0 if self.verdict == "critical" else self.slack
        return f"{self.name}: {self.verdict} (slack {s:.6g})"


@dataclass(frozen=True)
class SubcriticalityReport:
    F: ConditionVerdict
    G: ConditionVerdict
    H: ConditionVerdict

    @property
    def conditions(self) -> tuple:
        return (self.F, self.G, self.H)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)


def check_subcriticality(params: GrowthParams) -> SubcriticalityReport:
    """Evaluate the three growth/smoothness balance conditions for F, G, H."""
    p = params
    return SubcriticalityReport(
        F=ConditionVerdict("F-condition", (1 + p.rho_F) * (2 * p.beta_F - 1), 1 + 2 * p.alpha_F),
        G=ConditionVerdict("G-condition", (1 + p.rho_G) * (2 * p.beta_G - 1), 1.0),
        H=ConditionVerdict("H-condition", (1 + p.rho_H) * (2 * p.beta_H - 1), 1.0),
    )


def critical_beta(alpha: float, rho: float, clip: bool = True) -> float:
    """Smoothness index making the F-condition an equality.

    Returns ``1/2 + (1 + 2 alpha) / (2 (1 + rho))``.  Values above 1 mean the
    condition cannot bind; they are clipped to 1 unless ``clip`` is false.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    beta = 0.5 + (1.0 + 2.0 * alpha) / (2.0 * (1.0 + rho))
    return min(beta, 1.0) if clip else beta


def check_parabolicity(b_coeffs, c_profile=None, spec: LevyMeasureSpec | None = None) -> float:
    """Stochastic parabolicity constant ``1 - |b|^2/2 - |c|_{L^2(nu)}^2/2``.

    ``b_coeffs`` has one row (scalar or d-vector) per Wiener channel;
    ``c_profile`` maps a mark index to its gradient coefficient, or is an
    array indexed by mark.  The model is parabolic iff the result is > 0.
    """
    b = np.asarray(b_coeffs if b_coeffs is not None else [], dtype=float)
    b_sq = float(np.sum(b * b))
    if not math.isfinite(b_sq):
        raise ValueError("gradient-noise coefficients are not square summable")
    c_sq = 0.0
    if c_profile is not None and spec is not None:
        for z in range(spec.n_marks):
            cz = np.asarray(c_profile(z) if callable(c_profile) else c_profile[z], dtype=float)
            c_sq += spec.intensities[z] * float(np.sum(cz * cz))
    if not math.isfinite(c_sq):
        raise ValueError("jump gradient coefficients are not square integrable")
    return 1.0 - 0.5 * b_sq - 0.5 * c_sq


@dataclass(frozen=True)
class ExponentCheck:
    """Outcome of the Sobolev exponent bookkeeping for one nonlinearity."""

    rho: float
    d: int
    order: int
    derivative: int
    alpha: float
    beta: float
    rho_max: float

    @property
    def slack(self) -> float:
        return self.rho_max - self.rho

    @property
    def ok(self) -> bool:
        return self.rho <= self.rho_max + 64 * np.finfo(float).eps * max(1.0, self.rho_max)

    def line(self) -> str:
        return (f"exponent: rho={self.rho:.6g} <= {self.rho_max:.6g} "
                f"(d={self.d}, order={self.order}) -> {'accepted' if self.ok else 'rejected'}")


def exponent_check(rho: float, d: int, order: int = 1, derivative: int = 0) -> ExponentCheck:
    """Largest admissible growth for a polynomial nonlinearity.

    ``order`` is 1 when V = H^1 and 2 when V = H^2, so V_beta embeds in
    H^{order (2 beta - 1)}.  ``derivative`` is 1 for divergence-form terms
    div(fbar(u)), which must land in H^{-1}, and 0 for pointwise terms in L^2.
    The matching alpha solves ``order (2 alpha - 1) = -derivative``; with the
    critical beta the embedding into L^{2(rho+1)} holds iff
    ``rho <= 2 order (1 + 2 alpha) / d``.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    alpha = 0.5 - derivative / (2.0 * order)
    rho_max = 2.0 * order * (1.0 + 2.0 * alpha) / d
    beta = critical_beta(alpha, rho) if rho > 0 else 1.0
    return ExponentCheck(rho, d, order, derivative, alpha, beta, rho_max)


# ---------------------------------------------------------------------------
# coercivity


def _quadratic_parts(model: ModelSpec, t: float, u_ref, v, mode: str, eta: float):
    """(form, ||v||_V^2, ||v||_H^2) for one direction ``v``."""
    lam = model.triple.eigvals
    c = 0.5 if mode == "linearized" else 0.5 + eta
    if mode == "linearized":
        form = float(np.dot(model.leading(t, u_ref) * v, v))
        if model.b_linear is not None and model.noise_dim:
            bv = model.b_linear(t, u_ref, v)
            form -= c * float(np.sum(bv * bv))
        if model.c_linear is not None and model.n_marks:
            for z in range(model.n_marks):
                cv = model.c_linear(t, u_ref, v, z)
                form -= c * model.levy.intensities[z] * float(np.dot(cv, cv))
    else:
        form = float(np.dot(model.leading(t, v) * v, v)) - float(np.dot(model.reaction(t, v), v))
        bv = model.diffusion(t, v)
        form -= c * float(np.sum(bv * bv))
        for z in range(model.n_marks):
            cv = model.jump_amplitude(t, v, z)
            form -= c * model.levy.intensities[z] * float(np.dot(cv, cv))
    return form, float(np.sum(lam * v * v)), float(np.dot(v, v))


def estimate_coercivity(model: ModelSpec, triple: SpectralTriple | None = None,
                        n_samples: int = 200, rng: RngStream | None = None,
                        mode: str = "linearized", eta: float = 0.01,
                        times=(0.0,), amplitudes=(0.1, 1.0, 10.0)) -> CoercivityProfile:
    """Sample-based coercivity constants.

    Directions are all basis vectors plus ``n_samples`` Gaussian vectors,
    each normalized to unit V norm, evaluated at every time in ``times``.

    ``linearized`` evaluates ``<A_0 v, v> - |B_0 v|^2/2 - |C_0 v|^2/2`` with
    ``u`` frozen at zero.  The constants follow a fixed rule:

    1. ``kappa = min form / ||v||_V^2``; if positive, ``M = 0``.
    2. otherwise ``kappa`` is half the smallest ratio over the upper half of
       the basis vectors (where V dominates H) and ``M`` is the least value
       making every sample satisfy the bound.

    ``full`` uses the complete nonlinear operators with factor ``1/2 + eta``
    and the directions rescaled by each of ``amplitudes``.  ``kappa`` comes
    from the linearized rule (with the ``eta`` factor), ``M`` is fitted on
    states with ``||v||_H >= 1`` and ``psi`` absorbs the remainder.

    A time-singular part A_S is left out of both forms; its weight enters
    the zero-order term through ``model.phi_profiles`` instead.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if mode not in ("linearized", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    triple = triple or model.triple
    rng = rng or RngStream(0, 0)
    gen = rng.generator("coercivity")
    K = triple.modes
    lam = triple.eigvals
    dirs = [np.eye(K)[k] / math.sqrt(lam[k]) for k in range(K)]
    for _ in range(n_samples):
        g = gen.standard_normal(K)
        dirs.append(g / math.sqrt(float(np.sum(lam * g * g))))
    zero = np.zeros(K)

    lin_eta = 0.0 if mode == "linearized" else eta
    lin = np.array([
        _quadratic_parts(model, t, zero, v, "linearized", 0.0)
        if lin_eta == 0.0 else _lin_with_eta(model, t, v, lin_eta)
        for t in times for v in dirs
    ])
    if not np.all(np.isfinite(lin)):
        raise ModelValidationError("coercivity form is not finite on the sample set")
    kappa, M = _kappa_M(lin, K, len(dirs))

    if mode == "linearized":
        return CoercivityProfile(kappa=kappa, M=M, psi=0.0, eta=0.0, mode=mode,
                                 n_samples=len(dirs) * len(times))

    rows = []
    for t in times:
        for a in amplitudes:
            for v in dirs:
                rows.append(_quadratic_parts(model, t, zero, a * v, "full", eta))
    full = np.array(rows)
    if not np.all(np.isfinite(full)):
        return CoercivityProfile(kappa=kappa, M=math.inf, psi=math.inf, eta=eta, mode=mode,
                                 n_samples=len(rows))
    form, vv, hh = full.T
    big = hh >= 1.0
    M_full = M
    if np.any(big):
        M_full = max(M, float(np.max((kappa * vv[big] - form[big]) / hh[big])))
    psi = max(0.0, float(np.max(kappa * vv - M_full * hh - form)))
    return CoercivityProfile(kappa=kappa, M=max(M_full, 0.0), psi=psi, eta=eta, mode=mode,
                             n_samples=len(rows))


def _lin_with_eta(model, t, v, eta):
    lam = model.triple.eigvals
    zero = np.zeros_like(v)
    form = float(np.dot(model.leading(t, zero) * v, v))
    c = 0.5 + eta
    if model.b_linear is not None and model.noise_dim:
        bv = model.b_linear(t, zero, v)
        form -= c * float(np.sum(bv * bv))
    if model.c_linear is not None and model.n_marks:
        for z in range(model.n_marks):
            cv = model.c_linear(t, zero, v, z)
            form -= c * model.levy.intensities[z] * float(np.dot(cv, cv))
    return form, float(np.sum(lam * v * v)), float(np.dot(v, v))


def _kappa_M(rows: np.ndarray, K: int, n_dirs: int):
    form, vv, hh = rows.T
    ratio = form / vv
    kappa = float(np.min(ratio))
    if kappa > 0:
        return kappa, 0.0
    # basis vectors come first within each time block
    n_t = rows.shape[0] // n_dirs
    top = [b * n_dirs + k for b in range(n_t) for k in range(K // 2, K)]
    kappa = 0.5 * float(np.min(ratio[top]))
    if kappa <= 0:
        return kappa, math.inf
    M = float(np.max((kappa * vv - form) / hh))
    return kappa, max(M, 0.0)


# ---------------------------------------------------------------------------
# cutoff used by the truncation monitor


def smooth_cutoff(r) -> np.ndarray:
    """Fixed cutoff: 1 on [-1, 1], 0 outside (-2, 2), quintic smoothstep between.

    On ``1 <= |r| <= 2`` the value is ``1 - S(|r| - 1)`` with
    ``S(s) = 6 s^5 - 15 s^4 + 10 s^3``, which is C^2 at both junctions.
    """
    s = np.clip(np.abs(np.asarray(r, dtype=float)) - 1.0, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
