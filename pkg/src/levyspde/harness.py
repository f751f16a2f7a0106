"""Monte-Carlo experiments over independent seeded paths.

Path ``i`` of an experiment with master seed ``s`` always uses
``RngStream(s, i)``, and per-path results are aggregated in index order with
``math.fsum``, so every estimate is independent of how the paths were
scheduled across workers.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .gelfand import path_norms
from .model import ModelSpec
from .noise import RngStream, sample_noise
from .solver import SolveConfig, solve_with_noise

__all__ = [
    "ExperimentReport",
    "run_paths",
    "mean_se",
    "mc_moments",
    "apriori_linearity",
    "continuous_dependence",
    "self_convergence",
    "emit_report",
]


@dataclass
class ExperimentReport:
    """Outcome of one experiment.

    ``estimates`` maps a quantity to ``(mean, standard error)``; ``rows`` and
    ``columns`` form the CSV table; ``footer`` is an optional summary row;
    ``series`` holds ``label -> (x, y, yerr)`` curves for the SVG chart.
    """

    name: str
    n_paths: int
    seed: int
    estimates: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)
    columns: tuple = ()
    rows: list = field(default_factory=list)
    footer: Optional[list] = None
    series: dict = field(default_factory=dict)
    axes: tuple = ("x", "y")
    log_axes: bool = False

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.verdicts.values())

    def verdict_lines(self) -> list:
        tag = f"[n_paths={self.n_paths} seed={self.seed}]"
        return [f"{'PASS' if ok else 'FAIL'} {self.name}.{k}: {detail} {tag}"
                for k, (ok, detail) in self.verdicts.items()]


def mean_se(values) -> tuple:
    """Mean and standard error with order-independent summation."""
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(v) / n
    if n < 2:
        return m, math.nan
    var = math.fsum((x - m) ** 2 for x in v) / (n - 1)
    return m, math.sqrt(var / n)


def run_paths(fn: Callable, n_paths: int, jobs: int = 1) -> list:
    """Evaluate ``fn(i)`` for every path index, results in index order."""
    if jobs == 1 or n_paths < 2:
        return [fn(i) for i in range(n_paths)]
    return Parallel(n_jobs=jobs)(delayed(fn)(i) for i in range(n_paths))


def _u0_for(u0_sampler, rng: RngStream) -> np.ndarray:
    if callable(u0_sampler):
        return np.asarray(u0_sampler(rng), dtype=float)
    return np.asarray(u0_sampler, dtype=float)


class _MomentTask:
    """Picklable per-path work item for :func:`mc_moments`."""

    def __init__(self, model, u0_sampler, cfg, seed):
        self.model, self.u0_sampler, self.cfg, self.seed = model, u0_sampler, cfg, seed

    def __call__(self, i):
        rng = RngStream(self.seed, i)
        u0 = _u0_for(self.u0_sampler, rng)
        noise = sample_noise(self.model.levy, self.model.noise_dim, self.cfg.T, self.cfg.n_steps, rng)
        p = solve_with_noise(self.model, u0, self.cfg, noise)
        return (float(p.running_sup_h[-1]) ** 2, float(p.running_v_energy[-1]),
                p.status == "blowup", float(np.dot(u0, u0)), p.halt_time)


def mc_moments(model: ModelSpec, u0_sampler, cfg: SolveConfig, n_paths: int, master_seed: int,
               jobs: int = 1) -> ExperimentReport:
    """Estimate ``E sup ||u||_H^2``, ``E int ||u||_V^2`` and the blow-up frequency.

    ``u0_sampler`` is a fixed coefficient vector or a callable taking the
    path's :class:`RngStream`.  Blown-up paths are excluded from the moment
    estimates and counted in ``blowup_frequency``.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2 for standard errors")
    t0 = time.perf_counter()
    res = run_paths(_MomentTask(model, u0_sampler, cfg, master_seed), n_paths, jobs)
    ok = [r for r in res if not r[2]]
    blow = [1.0 if r[2] else 0.0 for r in res]
    rep = ExperimentReport(name=f"mc_moments[{model.name}]", n_paths=n_paths, seed=master_seed)
    rep.estimates["E_sup_H2"] = mean_se(r[0] for r in ok)
    rep.estimates["E_int_V2"] = mean_se(r[1] for r in ok)
    rep.estimates["E_functional"] = mean_se(r[0] + r[1] for r in ok)
    rep.estimates["E_u0_H2"] = mean_se(r[3] for r in res)
    rep.estimates["blowup_frequency"] = mean_se(blow)
    rep.runtime["seconds"] = time.perf_counter() - t0
    rep.columns = ("path", "sup_H2", "int_V2", "blowup", "halt_time")
    rep.rows = [[i, r[0], r[1], int(r[2]), "" if r[4] is None else r[4]] for i, r in enumerate(res)]
    if not ok:
        rep.verdicts["finite_paths"] = (False, "all paths blew up")
    return rep


# ---------------------------------------------------------------------------


def apriori_linearity(model: ModelSpec, scales: Sequence[float], cfg: SolveConfig, n_paths: int,
                      master_seed: int, u0_shape=None, slack: float = 2.0,
                      r2_min: Optional[float] = None, jobs: int = 1) -> ExperimentReport:
    """Fit the moment functional against ``1 + E||u0||^2`` over initial-data scales.

    The functional is ``E sup ||u||_H^2 + E int ||u||_V^2``.  An ordinary
    least-squares line ``y = a + b x`` with ``x = E||u0||^2`` gives the
    envelope constant ``C_T = max(a, b)``; the envelope verdict requires
    ``C_T > 0`` and ``y_i + 3 SE_i <= slack C_T (1 + x_i)`` at every scale.
    All scales share the same path streams.
    """
    scales = [float(s) for s in scales]
    shape = np.asarray(u0_shape if u0_shape is not None else np.eye(model.K)[0], dtype=float)
    trivial = len(set(scales)) == 1
    if not trivial and len(set(scales)) < 3:
        raise ValueError("degenerate scales: need at least 3 distinct values")
    rep = ExperimentReport(name=f"apriori[{model.name}]", n_paths=n_paths, seed=master_seed,
                           axes=("1 + E||u0||^2", "E sup||u||^2 + E int||u||_V^2"))
    xs, ys, ses, blow = [], [], [], []
    t0 = time.perf_counter()
    for s in scales:
        r = mc_moments(model, s * shape, cfg, n_paths, master_seed, jobs)
        y, se = r.estimates["E_functional"]
        xs.append(r.estimates["E_u0_H2"][0])
        ys.append(y)
        ses.append(0.0 if math.isnan(se) else se)
        blow.append(r.estimates["blowup_frequency"][0])
    x, y, se = np.array(xs), np.array(ys), np.array(ses)
    if trivial:
        a, b, r2 = float(y.max()), 0.0, math.nan
    else:
        b, a = np.polyfit(x, y, 1)
        pred = a + b * x
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    C_T = float(max(a, b))
    cover = bool(C_T > 0 and np.all(y + 3 * se <= slack * C_T * (1 + x)))
    rep.fits = {"intercept": float(a), "slope": float(b), "C_T": C_T, "R2": r2, "slack": slack}
    rep.verdicts["envelope"] = (cover, f"C_T={C_T:.6g} slack={slack:g} covers {len(x)} scales" if cover
                                else f"C_T={C_T:.6g} slack={slack:g} fails to cover")
    if r2_min is not None:
        rep.verdicts["linearity"] = (bool(r2 >= r2_min), f"R2={r2:.6f} (min {r2_min})")
    rep.verdicts["no_blowup"] = (max(blow) == 0.0, f"max blow-up frequency {max(blow):g}")
    rep.columns = ("scale", "x", "functional", "se", "envelope")
    rep.rows = [[s, xi, yi, si, slack * C_T * (1 + xi)] for s, xi, yi, si in zip(scales, x, y, se)]
    rep.footer = ["fit", a, b, r2, C_T]
    rep.series = {"functional": (x, y, 3 * se), "envelope": (x, slack * C_T * (1 + x), None)}
    rep.runtime["seconds"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------


def _m_distance(triple, p, q) -> float:
    if p.status == "blowup" or q.status == "blowup" or p.grid.size != q.grid.size:
        return math.inf
    diff = SimpleNamespace(grid=p.grid, states=p.states - q.states,
                           pre_states=p.pre_states - q.pre_states)
    return path_norms(triple, diff, float(p.grid[0]), float(p.grid[-1])).m_norm


class _DependenceTask:
    def __init__(self, model, u0, direction, deltas, cfg, seed):
        self.model, self.u0, self.w, self.deltas, self.cfg, self.seed = model, u0, direction, deltas, cfg, seed

    def __call__(self, i):
        rng = RngStream(self.seed, i)
        noise = sample_noise(self.model.levy, self.model.noise_dim, self.cfg.T, self.cfg.n_steps, rng)
        z = float(rng.generator("perturb").standard_normal())
        base = solve_with_noise(self.model, self.u0, self.cfg, noise)
        out = []
        for d in self.deltas:
            other = solve_with_noise(self.model, self.u0 + d * z * self.w, self.cfg, noise)
            out.append(_m_distance(self.model.triple, base, other))
        return out


def continuous_dependence(model: ModelSpec, u0, deltas: Sequence[float], cfg: SolveConfig,
                          n_paths: int, master_seed: int, eps_grid: Sequence[float] = (0.1,),
                          direction=None, jobs: int = 1) -> ExperimentReport:
    """Exceedance probabilities ``P(||u - u_delta||_M(T) > eps)`` under coupled noise.

    ``u_delta(0) = u0 + delta Z w`` with ``Z`` a standard normal drawn once
    per path from its ``"perturb"`` stream and ``w`` a unit H direction.
    Both solutions share the same noise record.  ``deltas`` must be
    decreasing; a zero delta must give distance exactly 0 on every path, and
    the probabilities over the positive deltas must decrease strictly.
    """
    deltas = [float(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    if any(d < 0 for d in deltas):
        raise ValueError("deltas must be nonnegative")
    u0 = np.asarray(u0, dtype=float)
    w = np.asarray(direction if direction is not None else _unit(u0, model.K), dtype=float)
    w = w / np.linalg.norm(w)
    t0 = time.perf_counter()
    dist = np.array(run_paths(_DependenceTask(model, u0, w, deltas, cfg, master_seed), n_paths, jobs))
    rep = ExperimentReport(name=f"contdep[{model.name}]", n_paths=n_paths, seed=master_seed,
                           axes=("delta", "P(distance > eps)"))
    rep.columns = ("delta", "eps", "probability", "se", "mean_distance", "Lq_distance_q1")
    for eps in eps_grid:
        probs = []
        for j, d in enumerate(deltas):
            exceed = (dist[:, j] > eps).astype(float)
            p, se = mean_se(exceed)
            finite = dist[np.isfinite(dist[:, j]), j]
            md = mean_se(finite)[0]
            rep.estimates[f"P[delta={d:g},eps={eps:g}]"] = (p, se)
            rep.rows.append([d, eps, p, se, md, md])
            probs.append(p)
        pos = [p for d, p in zip(deltas, probs) if d > 0]
        mono = all(a > b for a, b in zip(pos, pos[1:]))
        rep.verdicts[f"monotone[eps={eps:g}]"] = (mono, "probabilities " + ", ".join(f"{p:.4g}" for p in pos))
        rep.series[f"eps={eps:g}"] = (np.array(deltas), np.array(probs), None)
    for j, d in enumerate(deltas):
        if d == 0:
            zero = bool(np.all(dist[:, j] == 0.0))
            rep.verdicts["zero_delta"] = (zero, "distance exactly 0 at delta=0" if zero
                                          else f"max distance {dist[:, j].max():.3e} at delta=0")
    rep.runtime["seconds"] = time.perf_counter() - t0
    return rep


def _unit(u0, K):
    if np.any(u0):
        return u0
    e = np.zeros(K)
    e[0] = 1.0
    return e


# ---------------------------------------------------------------------------


class _ConvergenceTask:
    def __init__(self, model, u0, n_list, ref_n, cfg, seed, exact):
        self.model, self.u0, self.n_list, self.ref_n = model, u0, n_list, ref_n
        self.cfg, self.seed, self.exact = cfg, seed, exact

    def __call__(self, i):
        rng = RngStream(self.seed, i)
        fine = sample_noise(self.model.levy, self.model.noise_dim, self.cfg.T, self.ref_n, rng)
        if self.exact is not None:
            ref = np.asarray(self.exact(self.u0, self.cfg.T), dtype=float)
        else:
            ref = solve_with_noise(self.model, self.u0, _with_steps(self.cfg, self.ref_n), fine).final
        errs = []
        for n in self.n_list:
            p = solve_with_noise(self.model, self.u0, _with_steps(self.cfg, n), fine.coarsen(n))
            errs.append(float(np.linalg.norm(p.final - ref)) if p.status == "completed" else math.inf)
        return errs


def _with_steps(cfg: SolveConfig, n: int) -> SolveConfig:
    return replace(cfg, n_steps=int(n), record_every=1, truncation_lambda=None)


def self_convergence(model: ModelSpec, u0, n_list: Sequence[int], cfg: SolveConfig, n_paths: int,
                     master_seed: int, ref_factor: int = 16, exact: Optional[Callable] = None,
                     expected_order: Optional[float] = None, order_tol: float = 0.1,
                     jobs: int = 1) -> ExperimentReport:
    """Strong error ``E||u_dt(T) - u_ref(T)||_H`` over nested step counts.

    The reference is the same noise on ``ref_factor * max(n_list)`` steps
    (or ``exact(u0, T)`` for deterministic problems); coarse runs see the
    aggregated Brownian increments and the same jumps.  The order is the
    least-squares slope of ``log error`` against ``log dt``.
    """
    n_list = sorted(int(n) for n in n_list)
    ref_n = ref_factor * n_list[-1]
    if len(n_list) < 2:
        raise ValueError("need at least two step counts")
    if any(ref_n % n for n in n_list):
        raise ValueError("non-nested grids: every step count must divide the reference count")
    u0 = np.asarray(u0, dtype=float)
    t0 = time.perf_counter()
    errs = np.array(run_paths(_ConvergenceTask(model, u0, n_list, ref_n, cfg, master_seed, exact),
                              n_paths, jobs))
    dts = np.array([cfg.T / n for n in n_list])
    means, ses = zip(*(mean_se(errs[:, j]) for j in range(len(n_list))))
    means, ses = np.array(means), np.array([0.0 if math.isnan(s) else s for s in ses])
    rep = ExperimentReport(name=f"convergence[{model.name}]", n_paths=n_paths, seed=master_seed,
                           axes=("dt", "strong error"), log_axes=True)
    if np.all(means == 0):
        order = math.nan
        rep.verdicts["zero_error"] = (True, "error identically 0")
    elif np.all(np.isfinite(means)) and np.all(means > 0):
        order = float(np.polyfit(np.log(dts), np.log(means), 1)[0])
    else:
        order = math.nan
        rep.verdicts["finite_error"] = (False, "some errors are zero or infinite")
    rep.fits = {"order": order}
    if expected_order is not None:
        ok = bool(abs(order - expected_order) <= order_tol)
        rep.verdicts["order"] = (ok, f"fitted order {order:.4f} vs {expected_order} +- {order_tol}")
    for n, dt, m, s in zip(n_list, dts, means, ses):
        rep.estimates[f"error[n={n}]"] = (float(m), float(s))
    rep.columns = ("n_steps", "dt", "error", "se")
    rep.rows = [[n, dt, m, s] for n, dt, m, s in zip(n_list, dts, means, ses)]
    rep.footer = ["fitted_order", order, "", ""]
    rep.series = {"error": (dts, means, 3 * ses)}
    rep.runtime["seconds"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _csv_text(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns or ("quantity", "mean", "se"))
    rows = report.rows
    if not report.columns:
        rows = [[k, m, s] for k, (m, s) in report.estimates.items()]
    for r in rows:
        w.writerow([_cell(v) for v in r])
    if report.footer is not None and rows:
        w.writerow([_cell(v) for v in report.footer])
    return buf.getvalue()


def _svg(report: ExperimentReport, dest: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "levyspde", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, (x, y, err) in report.series.items():
            if err is not None:
                ax.errorbar(x, y, yerr=err, marker="o", label=label, capsize=3)
            else:
                ax.plot(x, y, linestyle="--", label=label)
        if report.log_axes:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(report.axes[0])
        ax.set_ylabel(report.axes[1])
        ax.set_title(report.name)
        if report.series:
            ax.legend()
        fig.tight_layout()
        fig.savefig(dest, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_report(report: ExperimentReport, fmt: str, dest) -> Path:
    """Write ``report`` as ``csv``, ``svg`` or ``text`` into directory ``dest``.

    Output bytes depend only on the report contents.  Returns the file path.
    """
    dest = Path(dest)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {dest}: {exc}") from exc
    stem = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in report.name).strip("_")
    if fmt == "csv":
        out = dest / f"{stem}.csv"
        out.write_text(_csv_text(report))
    elif fmt == "svg":
        out = dest / f"{stem}.svg"
        _svg(report, out)
    elif fmt == "text":
        out = dest / f"{stem}.txt"
        lines = [f"experiment {report.name} n_paths={report.n_paths} seed={report.seed}"]
        lines += [f"estimate {k}: {m!r} +- {s!r}" for k, (m, s) in report.estimates.items()]
        lines += [f"fit {k}: {v!r}" for k, v in report.fits.items()]
        lines += report.verdict_lines()
        out.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return out
