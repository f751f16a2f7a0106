"""Concrete models on the Dirichlet sine basis.

Pointwise nonlinearities are evaluated pseudo-spectrally: coefficients are
synthesized on a uniform physical grid that includes both endpoints, the
map is applied pointwise, and the result is projected back with trapezoid
weights.  The grid is sized so that the projection of odd polynomials of
degree ``p`` (and of divergence-form fluxes of degree ``p``) is exact: every
integrand is then a cosine series of wavenumber below ``2 (N + 1)``, which
the trapezoid rule integrates without error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .gelfand import SpectralTriple, build_dirichlet_triple
from .model import (
    ConditionVerdict,
    GrowthParams,
    ModelSpec,
    ModelValidationError,
    check_parabolicity,
    check_subcriticality,
    critical_beta,
    estimate_coercivity,
    exponent_check,
)
from .noise import LevyMeasureSpec, RngStream

__all__ = [
    "SpectralGrid",
    "gradient_matrix",
    "PowerProfile",
    "EquationPreset",
    "allen_cahn",
    "reaction_diffusion",
    "burgers",
    "kuramoto_sivashinsky",
    "shell_model",
    "ShellCoupling",
    "heat",
    "zero_model",
    "with_singular_drift",
    "PRESETS",
    "build_preset",
    "run_checks",
]


# ---------------------------------------------------------------------------
# pseudo-spectral machinery


def dealiased_points(k_max: int, degree: int) -> int:
    """Number of grid intervals ``N + 1`` making degree-``degree`` projections exact."""
    return (degree + 1) * k_max // 2 + 1


def _axis(L: float, k_max: int, degree: int):
    n1 = dealiased_points(k_max, degree)
    x = np.arange(n1 + 1) * (L / n1)
    w = np.full(n1 + 1, L / n1)
    w[[0, -1]] *= 0.5
    k = np.arange(1, k_max + 1)
    arg = np.outer(x, k) * (np.pi / L)
    amp = math.sqrt(2.0 / L)
    return x, w, amp * np.sin(arg), amp * (np.pi / L) * k * np.cos(arg)


class SpectralGrid:
    """Synthesis and projection between sine coefficients and a physical grid.

    Parameters
    ----------
    triple : SpectralTriple
        Dirichlet triple (``dim`` 1 or 2).
    degree : int
        Largest polynomial degree that must be projected exactly.
    """

    def __init__(self, triple: SpectralTriple, degree: int = 3):
        if triple.dim not in (1, 2):
            raise ValueError("pseudo-spectral evaluation needs a 1D or 2D domain")
        self.triple = triple
        self.degree = int(degree)
        idx = triple.mode_index
        axes = [_axis(L, int(idx[:, a].max()), self.degree) for a, L in enumerate(triple.lengths)]
        if triple.dim == 1:
            x, w, S, C = axes[0]
            cols = idx[:, 0] - 1
            self.points = (x,)
            self.weights = w
            self.E = S[:, cols]
            self.D = [C[:, cols]]
        else:
            (x, wx, Sx, Cx), (y, wy, Sy, Cy) = axes
            m, n = idx[:, 0] - 1, idx[:, 1] - 1
            self.points = (x, y)
            self.weights = np.outer(wx, wy).ravel()
            self.E = np.einsum("ik,jk->ijk", Sx[:, m], Sy[:, n]).reshape(-1, triple.modes)
            self.D = [
                np.einsum("ik,jk->ijk", Cx[:, m], Sy[:, n]).reshape(-1, triple.modes),
                np.einsum("ik,jk->ijk", Sx[:, m], Cy[:, n]).reshape(-1, triple.modes),
            ]
        self._ET_w = self.E.T * self.weights
        self._DT_w = [D.T * self.weights for D in self.D]

    @property
    def n_points(self) -> int:
        return self.weights.size

    def to_grid(self, u) -> np.ndarray:
        return self.E @ u

    def gradient(self, u) -> list:
        return [D @ u for D in self.D]

    def project(self, values) -> np.ndarray:
        """Galerkin coefficients of a grid function."""
        return self._ET_w @ values

    def project_neg_div(self, fluxes) -> np.ndarray:
        """Coefficients of ``-div(flux)``, integrating by parts against the basis."""
        return sum(DTw @ fl for DTw, fl in zip(self._DT_w, fluxes))

    def shape(self, k: int) -> np.ndarray:
        """Grid values of basis function ``k`` (0-based)."""
        return self.E[:, k]


def gradient_matrix(triple: SpectralTriple, axis: int = 0) -> np.ndarray:
    """Galerkin matrix of ``d/dx_axis`` on the sine basis (closed form).

    In 1D, ``D[j, k] = (2 j k / L) (1 - (-1)^(j + k)) / (j^2 - k^2)`` with
    zero diagonal; the matrix is skew-symmetric.  In 2D the other index must
    match.
    """
    idx = triple.mode_index
    L = triple.lengths[axis]
    j = idx[:, axis][:, None].astype(float)
    k = idx[:, axis][None, :].astype(float)
    parity = 1.0 - (-1.0) ** (j + k)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(j == k, 0.0, (2.0 * j * k / L) * parity / (j * j - k * k))
    for other in range(triple.dim):
        if other != axis:
            D = D * (idx[:, other][:, None] == idx[:, other][None, :])
    return D


def _poly(coeffs: Sequence[float]) -> Callable:
    c = np.asarray(coeffs, dtype=float)
    return lambda y: np.polynomial.polynomial.polyval(y, c)


def _degree(coeffs: Sequence[float]) -> int:
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    return max(c.size - 1, 0)


# ---------------------------------------------------------------------------
# presets


@dataclass
class EquationPreset:
    """A built model together with the certificate it is expected to carry.

    ``expected_checks`` maps a check name to the verdict the model must
    produce; ``f_components`` lists ``(label, alpha, beta, rho)`` for each
    part of the nonlinear drift, all of which are checked.
    """

    name: str
    model: ModelSpec
    expected_params: GrowthParams
    expected_checks: dict
    inputs: dict = field(default_factory=dict)
    f_components: tuple = ()
    u0_shape: Optional[np.ndarray] = None
    grid: Optional[SpectralGrid] = None

    def u0(self, scale: float = 1.0) -> np.ndarray:
        shape = self.u0_shape if self.u0_shape is not None else np.zeros(self.model.K)
        return scale * shape


def _smooth_u0(triple: SpectralTriple) -> np.ndarray:
    """Unit-H-norm initial shape with algebraically decaying coefficients."""
    u = 1.0 / np.arange(1, triple.modes + 1) ** 2
    u[1::2] *= -1.0
    return u / np.linalg.norm(u)


def _lipschitz_noise(grid: SpectralGrid, sigmas):
    """``g_n(u) = sigma_n (1/2 + sin(u)/2) e_n``, one Wiener channel per ``n``."""
    shapes = np.array([grid.shape(n) for n in range(len(sigmas))])
    sig = np.asarray(sigmas, dtype=float)

    def G(t, u):
        phi = 0.5 + 0.5 * np.sin(grid.to_grid(u))
        return np.array([s * grid.project(phi * sh) for s, sh in zip(sig, shapes)])

    return G


def reaction_diffusion(d: int = 1, L=1.0, K: int = 16, *, reaction=(0.0, 1.0, 0.0, -1.0),
                       flux=None, flux_dir=None, a=1.0, b=None, c=None, sigma: float = 0.0,
                       n_noise: int = 4, jump_amps=(), jump_intensities=(),
                       quadratic_noise: float = 0.0, dissipative_M: Optional[float] = 1.0,
                       name: str = "reaction-diffusion") -> EquationPreset:
    """Second-order reaction-diffusion model with gradient and Lipschitz noise.

    du = [div(a grad u) + f(u) - div(fbar(u))] dt
         + sum_n [b_n . grad u + g_n(u) + q u^2 delta_{n0}] dW_n
         + int [c_z . grad u + amp_z sin(u)] dN~

    ``reaction`` and ``flux`` are power-series coefficients of ``f`` and
    ``fbar``; ``a`` is a diagonal (x-independent) diffusion.  Odd reactions
    and all polynomial fluxes in 1D are projected exactly.
    """
    triple = build_dirichlet_triple(d, L, K)
    a_diag = np.broadcast_to(np.asarray(a, dtype=float), (d,)).copy()
    if np.any(a_diag <= 0):
        raise ModelValidationError("diffusion matrix must be positive definite")

    f_deg = _degree(reaction) if reaction is not None else 0
    fb_deg = _degree(flux) if flux is not None else 0
    rho1 = max(f_deg - 1, 0)
    rho2 = max(fb_deg - 1, 0)
    ex1 = exponent_check(rho1, d, order=1, derivative=0)
    ex2 = exponent_check(rho2, d, order=1, derivative=1)
    if not ex1.ok:
        raise ModelValidationError(f"reaction growth rho={rho1} exceeds {ex1.rho_max:g} for d={d}")
    if flux is not None and not ex2.ok:
        raise ModelValidationError(f"flux growth rho={rho2} exceeds {ex2.rho_max:g} for d={d}")

    degree = max(f_deg, fb_deg, 3)
    if quadratic_noise:
        degree = max(degree, 2)
    grid = SpectralGrid(triple, degree)
    D = [gradient_matrix(triple, ax) for ax in range(d)]
    mu_axes = [(np.pi * triple.mode_index[:, ax] / triple.lengths[ax]) ** 2 for ax in range(d)]
    symbol = sum(ad * m for ad, m in zip(a_diag, mu_axes))

    b = np.zeros((0, d)) if b is None else np.atleast_2d(np.asarray(b, dtype=float)).reshape(-1, d)
    m = max(n_noise if (sigma or quadratic_noise) else 0, b.shape[0])
    if b.shape[0] < m:
        b = np.vstack([b, np.zeros((m - b.shape[0], d))])
    amps = np.asarray(jump_amps, dtype=float)
    n_marks = amps.size
    levy = None
    if n_marks:
        levy = LevyMeasureSpec(tuple(amps), np.asarray(jump_intensities, dtype=float))
    c = np.zeros((n_marks, d)) if c is None else np.atleast_2d(np.asarray(c, dtype=float)).reshape(-1, d)
    if c.shape[0] != n_marks:
        raise ValueError("one gradient jump coefficient per mark is required")

    theta = check_parabolicity(b / np.sqrt(a_diag.min()), c / np.sqrt(a_diag.min()), levy) * a_diag.min()
    if not theta > 0:
        raise ModelValidationError(f"parabolicity fails: theta={theta:.6g} <= 0")
    C1 = quadratic_noise**2
    if C1 >= 2.0:
        raise ModelValidationError(f"quadratic noise constant C1={C1:g} must be below 2")

    f_fun = _poly(reaction) if reaction is not None else None
    fb_fun = _poly(flux) if flux is not None else None
    fdir = np.ones(d) if flux_dir is None else np.asarray(flux_dir, dtype=float)

    def a_leading(t, u):
        return symbol

    nonlin_F = None
    if f_fun is not None or fb_fun is not None:
        def nonlin_F(t, u):
            y = grid.to_grid(u)
            out = grid.project(f_fun(y)) if f_fun is not None else 0.0
            if flux_part is not None:
                out = out + flux_part(t, u)
            return out

    flux_part = None
    if fb_fun is not None:
        def flux_part(t, u):
            fy = fb_fun(grid.to_grid(u))
            return grid.project_neg_div([fd * fy for fd in fdir])

    b_linear = None
    if np.any(b):
        def b_linear(t, u, v):
            grads = [Dm @ v for Dm in D]
            return np.array([sum(bn[ax] * grads[ax] for ax in range(d)) for bn in b])

    nonlin_G = None
    if m and (sigma or quadratic_noise):
        sig = sigma / np.arange(1, m + 1) if sigma else np.zeros(m)
        lip = _lipschitz_noise(grid, sig) if sigma else None

        def nonlin_G(t, u):
            out = lip(t, u) if lip is not None else np.zeros((m, triple.modes))
            if quadratic_noise:
                out = out.copy()
                out[0] += quadratic_noise * grid.project(grid.to_grid(u) ** 2)
            return out

    c_linear = nonlin_H = None
    if n_marks and np.any(c):
        def c_linear(t, u, v, z):
            return sum(c[z, ax] * (D[ax] @ v) for ax in range(d))
    if n_marks and np.any(amps):
        def nonlin_H(t, u, z):
            return amps[z] * grid.project(np.sin(grid.to_grid(u)))

    rho_G = 1.0 if quadratic_noise else 0.0
    beta_G = 0.75
    comps = []
    if reaction is not None:
        comps.append(("reaction", 0.5, critical_beta(0.5, rho1) if rho1 > 0 else 1.0, float(rho1)))
    if flux is not None:
        comps.append(("flux", 0.0, critical_beta(0.0, rho2) if rho2 > 0 else 1.0, float(rho2)))
    lead = comps[0] if comps else ("none", 0.0, 0.75, 0.0)
    params = GrowthParams(alpha_F=lead[1], beta_F=lead[2], rho_F=lead[3],
                          beta_G=beta_G, rho_G=rho_G, beta_H=0.75, rho_H=0.0)

    model = ModelSpec(
        triple=triple, a_leading=a_leading, params=params, name=name,
        nonlin_F=nonlin_F, noise_dim=m, b_linear=b_linear, nonlin_G=nonlin_G,
        levy=levy, c_linear=c_linear, nonlin_H=nonlin_H,
        metadata={"parabolicity": theta,
                  "exponent_checks": tuple(e for e, used in ((ex1, reaction is not None), (ex2, flux is not None)) if used),
                  "dissipative_M": dissipative_M, "reaction": reaction, "flux": flux,
                  "conservative_part": flux_part},
    )
    checks = {"subcriticality": True, "parabolicity": True, "exponents": True}
    if reaction is not None and dissipative_M is not None:
        checks["dissipativity"] = _dissipative(f_fun, dissipative_M)
    if flux is not None:
        checks["conservative_cancellation"] = True
    return EquationPreset(
        name=name, model=model, expected_params=params, expected_checks=checks,
        inputs=dict(d=d, L=L, K=K, a=a, sigma=sigma, n_noise=n_noise),
        f_components=tuple(comps), u0_shape=_smooth_u0(triple), grid=grid,
    )


def _dissipative(f: Callable, M: float) -> bool:
    y = np.linspace(-1e3, 1e3, 20001)
    return bool(np.all(y * f(y) <= M * (1.0 + y * y) + 1e-9))


def allen_cahn(d: int = 1, L=1.0, K: Optional[int] = None, *, rho: int = 2, b=None, c=None,
               sigma: float = 0.5, n_noise: int = 4, jump_amps=(0.3, -0.3),
               jump_intensities=(1.0, 1.0), flip: bool = False, quadratic_noise: float = 0.0,
               name: Optional[str] = None) -> EquationPreset:
    """Allen-Cahn ``du = [Delta u + u - u^(rho+1)] dt + noise``.

    ``rho`` is 2 (cubic) or, in 1D, 4 (quintic).  ``flip`` replaces the
    restoring term by ``+u^3``, a non-coercive variant used to exercise the
    blow-up detector.
    """
    if rho not in (2, 4):
        raise ValueError("rho must be 2 or 4")
    if K is None:
        K = 16 if d == 1 else 24
    reaction = np.zeros(rho + 2)
    reaction[1] = 1.0
    reaction[rho + 1] = 1.0 if flip else -1.0
    preset = reaction_diffusion(
        d, L, K, reaction=reaction, b=b, c=c, sigma=sigma, n_noise=n_noise,
        jump_amps=jump_amps, jump_intensities=jump_intensities,
        quadratic_noise=quadratic_noise,
        name=name or (f"allen-cahn-{d}d" + ("-flipped" if flip else "")),
    )
    if flip:
        preset.expected_checks["dissipativity"] = False
    return preset


def burgers(d: int = 1, L=1.0, K: int = 16, *, nu: float = 1.0, sigma: float = 0.5,
            n_noise: int = 4, b=None, jump_amps=(0.3, -0.3), jump_intensities=(1.0, 1.0),
            name: Optional[str] = None) -> EquationPreset:
    """Viscous Burgers ``du = [nu Delta u - div(u^2)] dt + noise``."""
    return reaction_diffusion(
        d, L, K, reaction=None, flux=(0.0, 0.0, 1.0), a=nu, b=b, sigma=sigma, n_noise=n_noise,
        jump_amps=jump_amps, jump_intensities=jump_intensities, name=name or f"burgers-{d}d",
    )


def kuramoto_sivashinsky(d: int = 1, L=8.0, K: int = 32, *, flux=(0.0, 0.0, 0.5),
                         sigma: float = 0.2, n_noise: int = 4, jump_amps=(0.2, -0.2),
                         jump_intensities=(1.0, 1.0), name: Optional[str] = None) -> EquationPreset:
    """Kuramoto-Sivashinsky ``du = [-Delta^2 u - Delta u - div(fbar(u))] dt + noise``.

    Uses the second-order triple V = H^2 with Navier conditions; A_L has the
    multiplier ``mu^2 - mu``.
    """
    triple = build_dirichlet_triple(d, L, K, order=2)
    rho = max(_degree(flux) - 1, 0)
    ex = exponent_check(rho, d, order=2, derivative=1)
    if not ex.ok:
        raise ModelValidationError(f"flux growth rho={rho} exceeds {ex.rho_max:g} for d={d}")
    grid = SpectralGrid(triple, max(_degree(flux), 3))
    mu = triple.lap_eigvals
    symbol = mu * mu - mu
    fb = _poly(flux)

    def nonlin_F(t, u):
        fy = fb(grid.to_grid(u))
        return grid.project_neg_div([fy] * d)

    m = n_noise if sigma else 0
    nonlin_G = _lipschitz_noise(grid, sigma / np.arange(1, m + 1)) if m else None
    amps = np.asarray(jump_amps, dtype=float)
    levy = LevyMeasureSpec(tuple(amps), np.asarray(jump_intensities, dtype=float)) if amps.size else None
    nonlin_H = None
    if amps.size:
        def nonlin_H(t, u, z):
            return amps[z] * grid.project(np.sin(grid.to_grid(u)))

    beta = critical_beta(0.25, rho) if rho > 0 else 1.0
    params = GrowthParams(alpha_F=0.25, beta_F=beta, rho_F=float(rho), beta_G=0.75, beta_H=0.75)
    model = ModelSpec(
        triple=triple, a_leading=lambda t, u: symbol, params=params,
        name=name or f"ks-{d}d", nonlin_F=nonlin_F, noise_dim=m, nonlin_G=nonlin_G,
        levy=levy, nonlin_H=nonlin_H, metadata={"exponent_checks": (ex,), "flux": flux},
    )
    return EquationPreset(
        name=model.name, model=model, expected_params=params,
        expected_checks={"subcriticality": True, "exponents": True, "coercivity": True,
                         "conservative_cancellation": True},
        inputs=dict(d=d, L=L, K=K, sigma=sigma), f_components=(("flux", 0.25, beta, float(rho)),),
        u0_shape=_smooth_u0(triple), grid=grid,
    )


# ---------------------------------------------------------------------------
# shell model


@dataclass(frozen=True)
class ShellCoupling:
    """Real GOY-type shell coupling with wavenumbers ``k_n = k0 lam^n``.

    ``Phi_n(u, v) = k_n [a u_{n+1} v_{n+2} + b u_{n-1} v_{n+1} + c u_{n-2} v_{n-1}]``
    with ``a = 1``, ``b = -eps / lam``, ``c = -(1 - eps) / lam^2``, so that
    ``a + b lam + c lam^2 = 0`` and ``<Phi(u, u), u> = 0`` identically.
    """

    n_shells: int = 8
    lam: float = 2.0
    eps: float = 0.5
    k0: float = 1.0

    def __post_init__(self):
        if self.n_shells < 3:
            raise ValueError("a shell model needs at least 3 shells")
        if not self.lam > 1:
            raise ValueError("shell ratio must exceed 1")

    @property
    def k(self) -> np.ndarray:
        return self.k0 * self.lam ** np.arange(self.n_shells)

    @property
    def coefficients(self):
        return 1.0, -self.eps / self.lam, -(1.0 - self.eps) / self.lam**2

    def phi(self, u, v) -> np.ndarray:
        a, b, c = self.coefficients
        n = self.n_shells
        up = np.zeros(n + 4)
        vp = np.zeros(n + 4)
        up[2:n + 2] = u
        vp[2:n + 2] = v
        i = np.arange(2, n + 2)
        out = a * up[i + 1] * vp[i + 2] + b * up[i - 1] * vp[i + 1] + c * up[i - 2] * vp[i - 1]
        return self.k * out


def shell_model(n_shells: int = 8, coupling: Optional[ShellCoupling] = None, *, nu: float = 1.0,
                forcing: float = 1.0, sigma: float = 0.5, jump_amps=(0.3, -0.3),
                jump_intensities=(1.0, 1.0), name: str = "shell") -> EquationPreset:
    """Dyadic shell model ``du = [-nu k^2 u - Phi(u, u) + f] dt + sigma dW + h dN~``.

    Forcing, Wiener and jump noise act on the first shell.  The V weights
    are ``k_n^2``.
    """
    coupling = coupling or ShellCoupling(n_shells)
    if coupling.n_shells != n_shells:
        raise ValueError("coupling and n_shells disagree")
    k = coupling.k
    triple = SpectralTriple.from_eigvals(k**2)
    symbol = nu * triple.eigvals
    e0 = np.zeros(n_shells)
    e0[0] = 1.0
    amps = np.asarray(jump_amps, dtype=float)
    levy = LevyMeasureSpec(tuple(amps), np.asarray(jump_intensities, dtype=float)) if amps.size else None
    params = GrowthParams(alpha_F=0.0, beta_F=0.75, rho_F=1.0, beta_G=0.75, beta_H=0.75)
    model = ModelSpec(
        triple=triple, a_leading=lambda t, u: symbol, params=params, name=name,
        nonlin_F=lambda t, u: -coupling.phi(u, u),
        forcing_f=(lambda t: forcing * e0) if forcing else None,
        noise_dim=1 if sigma else 0,
        forcing_g=(lambda t: sigma * e0[None, :]) if sigma else None,
        levy=levy,
        forcing_h=(lambda t, z: amps[z] * e0) if amps.size else None,
        metadata={"coupling": coupling},
    )
    return EquationPreset(
        name=name, model=model, expected_params=params,
        expected_checks={"subcriticality": True, "bilinear_cancellation": True},
        inputs=dict(n_shells=n_shells, nu=nu, forcing=forcing, sigma=sigma),
        f_components=(("bilinear", 0.0, 0.75, 1.0),),
        u0_shape=e0 / k * k[0],
    )


# ---------------------------------------------------------------------------
# linear presets


def heat(d: int = 1, L=1.0, K: int = 8, *, sigma: float = 0.0, n_noise: int = 2,
         jump_amps=(), jump_intensities=(), name: Optional[str] = None) -> EquationPreset:
    """Linear heat equation with additive noise on the first modes.

    Channel ``n`` drives mode ``n`` with amplitude ``sigma / (n + 1)``;
    jump mark ``z`` adds ``amp_z`` to the first mode.
    """
    triple = build_dirichlet_triple(d, L, K)
    mu = triple.eigvals
    m = min(n_noise, K) if sigma else 0
    g = np.zeros((m, K))
    for n in range(m):
        g[n, n] = sigma / (n + 1)
    amps = np.asarray(jump_amps, dtype=float)
    levy = LevyMeasureSpec(tuple(amps), np.asarray(jump_intensities, dtype=float)) if amps.size else None
    e0 = np.zeros(K)
    e0[0] = 1.0
    model = ModelSpec(
        triple=triple, a_leading=lambda t, u: mu, name=name or f"heat-{d}d",
        noise_dim=m, forcing_g=(lambda t: g) if m else None, levy=levy,
        forcing_h=(lambda t, z: amps[z] * e0) if amps.size else None,
    )
    return EquationPreset(
        name=model.name, model=model, expected_params=model.params,
        expected_checks={"subcriticality": True, "coercivity": True},
        inputs=dict(d=d, L=L, K=K, sigma=sigma), u0_shape=_smooth_u0(triple),
    )


def zero_model(K: int = 4, name: str = "zero") -> EquationPreset:
    """A = B = C = 0 on an abstract K-mode triple."""
    triple = SpectralTriple.from_eigvals(np.arange(1, K + 1, dtype=float))
    model = ModelSpec(triple=triple, a_leading=lambda t, u: np.zeros(K), name=name)
    return EquationPreset(name=name, model=model, expected_params=model.params,
                          expected_checks={"subcriticality": True},
                          u0_shape=np.ones(K) / math.sqrt(K))


# ---------------------------------------------------------------------------
# singular drift


@dataclass(frozen=True)
class PowerProfile:
    """Time weight ``c t^p`` on ``(0, T]``."""

    c: float
    p: float = 0.0

    def __call__(self, t):
        with np.errstate(divide="ignore"):
            return self.c * np.power(np.asarray(t, dtype=float), self.p)

    def average(self, t: float, dt: float) -> float:
        """Mean of the profile over ``[t, t + dt]`` (pointwise value if ``dt = 0``)."""
        if dt == 0:
            return float(self(t))
        if self.p == -1.0:
            return self.c * math.log((t + dt) / t) / dt if t > 0 else math.inf
        q = self.p + 1.0
        return self.c * ((t + dt) ** q - t**q) / (q * dt)

    def lr_norm(self, r: float, T: float) -> float:
        """``(int_0^T |c t^p|^r dt)^(1/r)``; infinite when not integrable."""
        if self.c == 0:
            return 0.0
        q = self.p * r + 1.0
        if q <= 0:
            return math.inf
        return abs(self.c) * (T**q / q) ** (1.0 / r)


def with_singular_drift(preset: EquationPreset, zeta0: PowerProfile | None = None,
                        zetas: Sequence = (), T: float = 1.0) -> EquationPreset:
    """Add ``A_S(t) u = zeta0(t) u + sum_j zeta_j(t) d_j u``.

    ``zetas`` holds ``(axis, profile)`` pairs.  ``zeta0`` must be in
    L^1(0, T) and every ``zeta_j`` in L^2(0, T); ``|zeta0|`` is added to the
    zero-order coercivity weights.  The solver uses exact cell averages.
    """
    model = preset.model
    if zeta0 is not None and not math.isfinite(zeta0.lr_norm(1.0, T)):
        raise ModelValidationError("zeta0 is not integrable on (0, T)")
    for axis, prof in zetas:
        if not math.isfinite(prof.lr_norm(2.0, T)):
            raise ModelValidationError(f"zeta on axis {axis} is not square integrable on (0, T)")
    D = {axis: gradient_matrix(model.triple, axis) for axis, _ in zetas}
    prev = model.a_singular

    def a_singular(t, dt, u, v):
        out = prev(t, dt, u, v) if prev is not None else np.zeros(model.K)
        if zeta0 is not None:
            out = out + zeta0.average(t, dt) * v
        for axis, prof in zetas:
            out = out + prof.average(t, dt) * (D[axis] @ v)
        return out

    phi = tuple(model.phi_profiles) + ((PowerProfile(abs(zeta0.c), zeta0.p),) if zeta0 is not None else ())
    params = model.params
    if zetas:
        params = replace(params, alpha_A=0.5, beta_A=1.0)
    new = model.replace(a_singular=a_singular, phi_profiles=phi, params=params,
                        name=model.name + "+singular")
    return EquationPreset(
        name=new.name, model=new, expected_params=params,
        expected_checks=dict(preset.expected_checks), inputs=dict(preset.inputs),
        f_components=preset.f_components, u0_shape=preset.u0_shape, grid=preset.grid,
    )


# ---------------------------------------------------------------------------
# checks and registry


def run_checks(preset: EquationPreset, n_samples: int = 64, seed: int = 0) -> dict:
    """Evaluate every check named in ``expected_checks``.

    Returns ``name -> (verdict, detail line)``.
    """
    model = preset.model
    out = {}
    for name in preset.expected_checks:
        if name == "subcriticality":
            lines, ok = [], True
            rep = check_subcriticality(model.params)
            for cond in rep.conditions:
                lines.append(cond.line())
            for label, al, be, rh in preset.f_components:
                cv = ConditionVerdict(f"F[{label}]-condition", (1 + rh) * (2 * be - 1), 1 + 2 * al)
                ok &= cv.ok
                lines.append(cv.line())
            out[name] = (ok and rep.ok, "; ".join(lines))
        elif name == "parabolicity":
            th = model.metadata.get("parabolicity", 1.0)
            out[name] = (bool(th > 0), f"parabolicity: theta={th:.6g}")
        elif name == "exponents":
            exs = model.metadata.get("exponent_checks", ())
            out[name] = (all(e.ok for e in exs), "; ".join(e.line() for e in exs))
        elif name == "dissipativity":
            f = _poly(model.metadata["reaction"])
            M = model.metadata.get("dissipative_M") or 1.0
            ok = _dissipative(f, M)
            out[name] = (ok, f"dissipativity: y f(y) <= {M:g} (1 + y^2) {'holds' if ok else 'fails'}")
        elif name == "coercivity":
            prof = estimate_coercivity(model, n_samples=n_samples, rng=RngStream(seed, 0),
                                       mode="full" if model.nonlin_F is not None else "linearized")
            ok = prof.valid and math.isfinite(prof.psi)
            out[name] = (ok, f"coercivity: kappa={prof.kappa:.6g} M={prof.M:.6g} psi={prof.psi:.6g} ({prof.mode})")
        elif name == "conservative_cancellation":
            worst = _cancellation(model, seed)
            out[name] = (bool(worst <= 1e-8), f"conservative cancellation: max |<F(v),v>|/||v||^3 = {worst:.3e}")
        elif name == "bilinear_cancellation":
            worst = _cancellation(model, seed)
            out[name] = (bool(worst <= 1e-12), f"bilinear cancellation: max |<Phi(v,v),v>|/||v||^3 = {worst:.3e}")
        else:
            raise ValueError(f"unknown check {name!r}")
    return out


def _cancellation(model: ModelSpec, seed: int, n: int = 100) -> float:
    # only the divergence-form part of F cancels when F also carries a reaction
    F = model.metadata.get("conservative_part") or model.nonlin_F
    gen = RngStream(seed, 0).generator("perturb")
    worst = 0.0
    for _ in range(n):
        v = gen.standard_normal(model.K)
        val = abs(float(np.dot(F(0.0, v), v)))
        worst = max(worst, val / np.linalg.norm(v) ** 3)
    return worst


PRESETS = {
    "allen-cahn-1d": lambda **kw: allen_cahn(1, **kw),
    "allen-cahn-2d": lambda **kw: allen_cahn(2, **kw),
    "burgers-1d": lambda **kw: burgers(1, **kw),
    "ks-1d": lambda **kw: kuramoto_sivashinsky(1, **kw),
    "shell": lambda **kw: shell_model(**kw),
    "heat-1d": lambda **kw: heat(1, **kw),
    "zero": lambda **kw: zero_model(**kw),
}


def build_preset(name: str, **overrides) -> EquationPreset:
    """Build a registered preset with keyword overrides."""
    try:
        builder = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return builder(**overrides)
