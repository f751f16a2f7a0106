"""Registered acceptance experiments, shared by ``levyspde verify`` and the test suite.

Each criterion returns a :class:`CriterionResult`; wall-clock budgets are
part of the verdict.  ``paths`` overrides the ensemble size of the
statistical criteria (3, 7, 8, 9) and ``jobs`` the worker count.
"""
from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np

from .equations import allen_cahn, heat, kuramoto_sivashinsky, shell_model
from .gelfand import build_dirichlet_triple, path_norms, theta_norm
from .harness import (
    apriori_linearity,
    continuous_dependence,
    emit_report,
    mc_moments,
    mean_se,
    self_convergence,
)
from .model import (
    GrowthParams,
    ModelSpec,
    check_subcriticality,
    estimate_coercivity,
    exponent_check,
)
from .noise import (
    LevyMeasureSpec,
    RngStream,
    compensated_integral,
    quadratic_variation,
    sample_jump_events,
)
from .solver import SolveConfig, ito_residual, solve_path

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all", "default_jobs"]

SEED = 20240607


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: list = field(default_factory=list)
    seconds: float = 0.0
    budget: float = math.inf

    def line(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        budget = f"budget {self.budget:g}s" if math.isfinite(self.budget) else "no budget"
        return f"criterion {self.number:>2} {state} {self.title} ({self.seconds:.2f}s / {budget})"


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    budget: float
    fn: Callable


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# 1


def _c1(paths=None, jobs=1):
    d = []
    ok = True
    for label, params in (("allen-cahn-2d", GrowthParams(alpha_F=0.5, beta_F=5 / 6, rho_F=2.0)),
                          ("fluid", GrowthParams(alpha_F=0.0, beta_F=0.75, rho_F=1.0))):
        cond = check_subcriticality(params).F
        good = cond.verdict == "critical" and abs(cond.slack) <= 1e-12
        ok &= good
        d.append(f"{label}: {cond.line()}")
    for name, order, deriv, num in (("KS", 2, 1, 6.0), ("SH", 2, 0, 8.0)):
        for dim in range(1, 7):
            bound = num / dim
            at = exponent_check(bound, dim, order, deriv).ok
            below = exponent_check(bound - 1e-12, dim, order, deriv).ok
            above = exponent_check(bound + 1e-12, dim, order, deriv).ok
            good = at and below and not above
            ok &= good
            d.append(f"{name} d={dim}: bound {bound:.6g} accept(at)={at} accept(-1e-12)={below} "
                     f"accept(+1e-12)={above}")
    return ok, d


# ---------------------------------------------------------------------------
# 2


def _c2(paths=None, jobs=1):
    gen = RngStream(SEED, 2).generator("perturb")
    tol = 1e-12
    worst = {"interp_dual": 0.0, "interp_H": 0.0, "duality": 0.0, "embed_X": 0.0, "embed_M": 0.0}
    triples = [build_dirichlet_triple(1, 1.0, 8), build_dirichlet_triple(2, (1.0, 1.5), 8)]

    def excess(lhs, rhs):
        return (lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)

    for n in range(1000):
        tr = triples[n % 2]
        x = gen.standard_normal(8) * np.exp(gen.uniform(-3, 3, 8))
        y = gen.standard_normal(8) * np.exp(gen.uniform(-3, 3, 8))
        th = float(gen.uniform(0, 1))
        n0, n1, nh = theta_norm(tr, x, 0.0), theta_norm(tr, x, 1.0), theta_norm(tr, x, 0.5)
        worst["interp_dual"] = max(worst["interp_dual"], excess(theta_norm(tr, x, th), n0 ** (1 - th) * n1**th))
        th2 = float(gen.uniform(0.5, 1))
        worst["interp_H"] = max(worst["interp_H"],
                                excess(theta_norm(tr, x, th2), nh ** (2 - 2 * th2) * n1 ** (2 * th2 - 1)))
        worst["duality"] = max(worst["duality"],
                               excess(abs(float(np.dot(x, y))), theta_norm(tr, x, th) * theta_norm(tr, y, 1 - th)))
        # random cadlag path
        m = 12
        grid = np.sort(np.concatenate([[0.0, 1.0], gen.uniform(0, 1, m - 2)]))
        states = gen.standard_normal((m, 8)) * np.exp(gen.uniform(-2, 2, (m, 1)))
        pre = states.copy()
        jumps = gen.random(m) < 0.3
        jumps[0] = False
        pre[jumps] = gen.standard_normal((int(jumps.sum()), 8))
        path = SimpleNamespace(grid=grid, states=states, pre_states=pre)
        beta = max(float(gen.uniform(0.5, 1.0)), 0.5 + 1e-9)
        pn = path_norms(tr, path, 0.0, 1.0, betas=(beta,))
        mid = math.sqrt(pn.v_energy) ** (2 * beta - 1) * pn.sup_h ** (2 - 2 * beta)
        worst["embed_X"] = max(worst["embed_X"], excess(pn.x_norms[beta], mid))
        worst["embed_M"] = max(worst["embed_M"], excess(mid, pn.m_norm))
    ok = all(v <= tol for v in worst.values())
    return ok, [f"{k}: worst relative excess {v:.3e} (tolerance {tol:g})" for k, v in worst.items()]


# ---------------------------------------------------------------------------
# 3


def _c3(paths=None, jobs=1):
    n = paths or 10_000
    spec = LevyMeasureSpec(("a", "b"), np.array([1.0, 3.0]))
    vecs = np.array([[1.0, -0.5, 0.25], [-0.3, 0.8, 0.1]])
    T = 1.0
    grid = np.linspace(0.0, T, 9)

    def h(t, z):
        return vecs[z] * (1.0 + t)

    target = sum(
        (grid[j + 1] - grid[j]) * sum(spec.intensities[z] * float(np.dot(h(grid[j], z), h(grid[j], z)))
                                      for z in range(2))
        for j in range(grid.size - 1)
    )
    finals, sq, qv = [], [], []
    for i in range(n):
        ev = sample_jump_events(spec, T, RngStream(SEED + 3, i))
        val = compensated_integral(h, ev, spec, grid)[-1]
        finals.append(val)
        sq.append(float(np.dot(val, val)))
        qv.append(quadratic_variation(h, ev, T, grid))
    finals = np.array(finals)
    d, ok = [], True
    for k in range(finals.shape[1]):
        m, se = mean_se(finals[:, k])
        good = abs(m) <= 3 * se
        ok &= good
        d.append(f"martingale mean component {k}: {m:.5f} +- {se:.5f} (target 0)")
    for label, vals in (("isometry E||M_T||^2", sq), ("compensation E[QV_T]", qv)):
        m, se = mean_se(vals)
        good = abs(m - target) <= 3 * se
        ok &= good
        d.append(f"{label}: {m:.5f} +- {se:.5f} (target {target:.5f})")
    return ok, d


# ---------------------------------------------------------------------------
# 4


def pure_jump_model(K: int = 4) -> ModelSpec:
    """A = B = 0 with additive step jump amplitudes on two marks."""
    tr = build_dirichlet_triple(1, 1.0, K)
    amps = np.array([np.linspace(1.0, 0.25, K), -0.5 * np.ones(K)])
    return ModelSpec(triple=tr, a_leading=lambda t, u: np.zeros(K), name="pure-jump",
                     levy=LevyMeasureSpec((0, 1), np.array([3.0, 2.0])),
                     forcing_h=lambda t, z: amps[z] * (1.0 + (t >= 0.5)))


def _c4(paths=None, jobs=1):
    d, ok = [], True
    gap = 0.0
    pj = pure_jump_model()
    worst = 0.0
    for i in range(20):
        p = solve_path(pj, np.array([1.0, -1.0, 0.5, 0.0]), SolveConfig(T=1.0, n_steps=16), RngStream(SEED + 4, i))
        r = ito_residual(p, pj)
        worst = max(worst, r.max_abs)
        gap = max(gap, r.form_gap)
    ok &= worst <= 1e-10
    d.append(f"pure-jump residual max {worst:.3e} (tolerance 1e-10)")

    hm = heat(1, K=4).model
    u0 = heat(1, K=4).u0(1.0)
    ns = [2**k for k in range(6, 11)]
    res = []
    for n in ns:
        p = solve_path(hm, u0, SolveConfig(T=1.0, n_steps=n), RngStream(SEED + 4, 0))
        r = ito_residual(p, hm)
        res.append(r.max_abs)
        gap = max(gap, r.form_gap)
    order = float(np.polyfit(np.log([1.0 / n for n in ns]), np.log(res), 1)[0])
    ok &= order >= 0.9
    d.append(f"heat residual order {order:.4f} (min 0.9); residuals " + ", ".join(f"{x:.3e}" for x in res))

    ac = allen_cahn(1, K=8).model
    for i in range(10):
        p = solve_path(ac, allen_cahn(1, K=8).u0(1.0), SolveConfig(T=0.5, n_steps=100), RngStream(SEED + 4, 100 + i))
        r = ito_residual(p, ac)
        gap = max(gap, r.form_gap)
        ok &= r.gate_finite
    ok &= gap <= 1e-12
    d.append(f"N-form vs compensated-form relative gap {gap:.3e} (tolerance 1e-12), gate integrals finite")
    return ok, d


# ---------------------------------------------------------------------------
# 5


def _c5(paths=None, jobs=1):
    d, ok = [], True
    lap = heat(1, K=16).model
    prof = estimate_coercivity(lap, n_samples=200, rng=RngStream(SEED + 5, 0))
    good = abs(prof.kappa - 1.0) <= 1e-10 and prof.M == 0.0
    ok &= good
    d.append(f"Laplacian: kappa={prof.kappa!r} M={prof.M!r}")
    ac = allen_cahn(1, K=16, b=[[1.0]], sigma=0.0, jump_amps=()).model
    prof = estimate_coercivity(ac, n_samples=200, rng=RngStream(SEED + 5, 1))
    good = prof.kappa >= 0.45
    ok &= good
    d.append(f"Allen-Cahn ||b||^2=1: kappa={prof.kappa:.6f} (min 0.45) M={prof.M:.6g}")
    ks = kuramoto_sivashinsky(1).model
    prof = estimate_coercivity(ks, n_samples=200, rng=RngStream(SEED + 5, 2))
    good = prof.kappa > 0 and math.isfinite(prof.M)
    ok &= good
    d.append(f"Kuramoto-Sivashinsky: kappa={prof.kappa:.6f} M={prof.M:.6g}")
    return ok, d


# ---------------------------------------------------------------------------
# 6


def _c6(paths=None, jobs=1):
    model = shell_model().model
    phi = model.metadata["coupling"].phi
    gen = RngStream(SEED + 6, 0).generator("perturb")
    worst = 0.0
    for _ in range(1000):
        u = gen.standard_normal(model.K) * np.exp(gen.uniform(-4, 4))
        worst = max(worst, abs(float(np.dot(phi(u, u), u))) / np.linalg.norm(u) ** 3)
    return worst <= 1e-12, [f"max |<Phi(u,u),u>| / ||u||^3 = {worst:.3e} over 1000 states (tolerance 1e-12)"]


# ---------------------------------------------------------------------------
# 7


def _c7(paths=None, jobs=1):
    n = paths or 1000
    d, ok = [], True
    cfg = SolveConfig(T=1.0, n_steps=400, blowup_threshold=1e6)
    for dim in (1, 2):
        pre = allen_cahn(dim)
        rep = mc_moments(pre.model, pre.u0(1.0), cfg, n, SEED + 7 + dim, jobs)
        f = rep.estimates["blowup_frequency"][0]
        ok &= f == 0.0
        d.append(f"allen-cahn-{dim}d: blow-up frequency {f:g} over {n} paths")
    flip = allen_cahn(1, flip=True)
    hits = []
    for s in range(10):
        p = solve_path(flip.model, flip.u0(10.0), cfg, RngStream(SEED + 70 + s, 0))
        hits.append(p.status == "blowup")
    freq = sum(hits) / len(hits)
    ok &= freq == 1.0
    d.append(f"flipped F=+u^3, amplitude 10: blow-up frequency {freq:g} over 10 seeds")
    return ok, d


# ---------------------------------------------------------------------------
# 8


def _c8(paths=None, jobs=1):
    d, ok = [], True
    lin = heat(1, K=8, sigma=1.0, jump_amps=(0.5, -0.25), jump_intensities=(1.0, 2.0))
    rep = apriori_linearity(lin.model, [0.5, 1, 2, 4], SolveConfig(T=1.0, n_steps=200), paths or 200,
                            SEED + 8, u0_shape=lin.u0_shape, r2_min=0.999, jobs=jobs)
    ok &= rep.verdicts["linearity"][0] and rep.verdicts["envelope"][0]
    d.append(f"linear: R2={rep.fits['R2']:.6f} (min 0.999)")
    ac = allen_cahn(2)
    rep = apriori_linearity(ac.model, [0.5, 1, 2, 4], SolveConfig(T=1.0, n_steps=400), paths or 200,
                            SEED + 80, u0_shape=ac.u0_shape, slack=2.0, jobs=jobs)
    ok &= rep.verdicts["envelope"][0]
    d.append(f"allen-cahn-2d: {rep.verdicts['envelope'][1]}; R2={rep.fits['R2']:.4f}")
    return ok, d


# ---------------------------------------------------------------------------
# 9


def _c9(paths=None, jobs=1):
    ac = allen_cahn(1)
    rep = continuous_dependence(ac.model, ac.u0(1.0), [0.5, 0.1, 0.02, 0.0], SolveConfig(T=1.0, n_steps=200),
                                paths or 500, SEED + 9, eps_grid=(0.1,), jobs=jobs)
    return rep.passed, [f"{k}: {v[1]}" for k, v in rep.verdicts.items()]


# ---------------------------------------------------------------------------
# 10


def _c10(paths=None, jobs=1):
    jmax = max(2, default_jobs())
    ac = allen_cahn(1)
    cfg = SolveConfig(T=0.5, n_steps=100)
    n = paths or 16
    d, ok = [], True
    with tempfile.TemporaryDirectory() as tmp:
        blobs = {}
        for j in (1, jmax):
            out = os.path.join(tmp, f"jobs{j}")
            r1 = mc_moments(ac.model, ac.u0(1.0), cfg, n, SEED + 10, jobs=j)
            r2 = self_convergence(ac.model, ac.u0(1.0), [8, 16, 32], cfg, max(n // 4, 2), SEED + 10,
                                  ref_factor=4, jobs=j)
            blobs[j] = [emit_report(r, "csv", out).read_bytes() for r in (r1, r2)]
        same = blobs[1] == blobs[jmax]
        ok &= same
        d.append(f"CSV outputs with jobs=1 and jobs={jmax}: {'byte-identical' if same else 'differ'}")
    return ok, d


CRITERIA = {
    1: Criterion(1, "exponent arithmetic", 1.0, _c1),
    2: Criterion(2, "norm identities", 5.0, _c2),
    3: Criterion(3, "Poisson calculus", 30.0, _c3),
    4: Criterion(4, "Ito energy identity", 60.0, _c4),
    5: Criterion(5, "coercivity certificates", 30.0, _c5),
    6: Criterion(6, "shell-model cancellation", 5.0, _c6),
    7: Criterion(7, "global-existence reflection", 600.0, _c7),
    8: Criterion(8, "a-priori bound envelope", 600.0, _c8),
    9: Criterion(9, "continuous dependence", 600.0, _c9),
    10: Criterion(10, "determinism across worker counts", math.inf, _c10),
}


def run_criterion(number: int, paths: Optional[int] = None, jobs: int = 1) -> CriterionResult:
    """Run one criterion; its wall-clock budget is part of the verdict."""
    if number not in CRITERIA:
        raise KeyError(f"unknown criterion {number}; choose from 1-{len(CRITERIA)}")
    if paths is not None and paths < 2:
        raise ValueError("at least 2 paths are needed for standard errors")
    c = CRITERIA[number]
    t0 = time.perf_counter()
    ok, details = c.fn(paths=paths, jobs=jobs)
    dt = time.perf_counter() - t0
    in_budget = dt < c.budget
    if not in_budget:
        details = list(details) + [f"runtime {dt:.2f}s exceeds budget {c.budget:g}s"]
    return CriterionResult(number, c.title, bool(ok and in_budget), list(details), dt, c.budget)


def run_all(selection=None, paths: Optional[int] = None, jobs: int = 1) -> list:
    nums = sorted(selection) if selection else sorted(CRITERIA)
    return [run_criterion(n, paths, jobs) for n in nums]
