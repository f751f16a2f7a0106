import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyspde.acceptance import pure_jump_model
from levyspde.equations import allen_cahn, heat
from levyspde.noise import JumpEvents, NoiseRecord, RngStream, WienerIncrements, sample_noise
from levyspde.solver import (
    PATH_CSV_COLUMNS,
    SolveConfig,
    build_grid,
    ito_residual,
    solve_path,
    solve_with_noise,
    step,
    truncation_value,
    write_path_csv,
)


def _noise(grid, jump_at, dW, events=None, T=1.0):
    grid = np.asarray(grid, dtype=float)
    dW = np.asarray(dW, dtype=float).reshape(grid.size - 1, -1)
    return NoiseRecord(grid, np.asarray(jump_at), WienerIncrements(dW.shape[1], grid, dW),
                       events or JumpEvents.none(), T)


@pytest.mark.parametrize("kw", [dict(T=0), dict(n_steps=0), dict(theta_implicit=0.3),
                                dict(truncation_lambda=-1.0), dict(record_every=0),
                                dict(jump_convention="right")])
def test_solve_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


def test_implicit_heat_step():
    m = heat(K=3).model
    u = np.array([1.0, 2.0, -1.0])
    mu = m.triple.eigvals
    nxt, pre = step(u, 0.0, 0.01, m, theta=1.0)
    np.testing.assert_allclose(nxt, u / (1 + 0.01 * mu), rtol=1e-15)
    np.testing.assert_array_equal(nxt, pre)
    cn, _ = step(u, 0.0, 0.01, m, theta=0.5)
    np.testing.assert_allclose(cn, u * (1 - 0.005 * mu) / (1 + 0.005 * mu), rtol=1e-14)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step(np.zeros(3), 0.0, 0.0, heat(K=3).model)


def test_jump_conventions_differ_for_state_dependent_amplitude():
    m = allen_cahn(1, K=4, sigma=0.0)
    u = m.u0(1.0)
    left, pre = step(u, 0.0, 0.1, m.model, jump_mark=0, convention="left_limit")
    start, pre2 = step(u, 0.0, 0.1, m.model, jump_mark=0, convention="step_start")
    np.testing.assert_array_equal(pre, pre2)
    np.testing.assert_allclose(left - pre, m.model.jump_amplitude(0.0, pre, 0))
    np.testing.assert_allclose(start - pre, m.model.jump_amplitude(0.0, u, 0))
    assert not np.allclose(left, start)


def test_additive_noise_path_matches_hand_recursion():
    m = heat(K=2, sigma=1.0, n_noise=2).model
    grid = np.linspace(0, 1, 5)
    dW = np.array([[0.1, -0.2], [0.3, 0.0], [-0.1, 0.1], [0.2, 0.2]])
    rec = solve_with_noise(m, np.array([1.0, 1.0]), SolveConfig(T=1.0, n_steps=4),
                           _noise(grid, np.full(5, -1), dW))
    u = np.array([1.0, 1.0])
    g = np.diag([1.0, 0.5])
    for i in range(4):
        u = (u + dW[i] @ g) / (1 + 0.25 * m.triple.eigvals)
    np.testing.assert_allclose(rec.final, u, rtol=1e-14)
    assert rec.status == "completed"
    assert rec.status_line == "completed"


def test_jump_applied_at_flagged_point():
    pj = pure_jump_model(K=4)
    ev = JumpEvents([0.25, 0.75], [0, 1])
    grid, jump_at = build_grid(1.0, 4, ev)
    rec = solve_with_noise(pj, np.zeros(4), SolveConfig(n_steps=4), _noise(grid, jump_at, np.zeros((4, 0)), ev))
    # the compensator drift 3 a_0 + 2 a_1 is subtracted every step; amplitudes double after t = 1/2
    amps = np.array([np.linspace(1.0, 0.25, 4), -0.5 * np.ones(4)])
    comp = 3 * amps[0] + 2 * amps[1]
    expected = amps[0] + 2 * amps[1] - 0.25 * (2 * comp + 2 * 2 * comp)
    np.testing.assert_allclose(rec.final, expected, atol=1e-14)
    np.testing.assert_array_equal(rec.jump_marks, [-1, 0, -1, 1, -1])


def test_same_seed_same_path():
    m = allen_cahn(1, K=8).model
    cfg = SolveConfig(n_steps=32)
    a = solve_path(m, np.ones(8) * 0.1, cfg, RngStream(3, 1))
    b = solve_path(m, np.ones(8) * 0.1, cfg, RngStream(3, 1))
    np.testing.assert_array_equal(a.states, b.states)


def test_blowup_detected_for_flipped_reaction():
    pre = allen_cahn(1, K=8, flip=True, sigma=0.0, jump_amps=())
    rec = solve_path(pre.model, pre.u0(10.0), SolveConfig(n_steps=400), RngStream(0))
    assert rec.status == "blowup"
    assert rec.halt_time < 1.0
    assert rec.status_line.startswith("blowup at t=")


def test_truncation_exit():
    pre = heat(K=4, sigma=2.0)
    rec = solve_path(pre.model, pre.u0(5.0), SolveConfig(n_steps=64, truncation_lambda=0.5), RngStream(1))
    assert rec.status == "truncation_exit"


def test_record_every_thins_output():
    m = heat(K=3).model
    rec = solve_path(m, np.ones(3), SolveConfig(n_steps=16, record_every=4), RngStream(0))
    np.testing.assert_allclose(rec.grid, [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError, match="record_every"):
        ito_residual(rec, m)


def test_truncation_value_empty_history_and_validation():
    m = heat(K=3).model
    assert truncation_value(m.triple, None, np.zeros(3), 1.0) == 1.0
    rec = solve_path(m, np.zeros(3), SolveConfig(n_steps=8), RngStream(0))
    assert truncation_value(m.triple, rec, np.zeros(3), 1.0) == 1.0
    with pytest.raises(ValueError):
        truncation_value(m.triple, rec, np.zeros(3), 0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pure_jump_energy_identity_exact(seed):
    pj = pure_jump_model()
    p = solve_path(pj, np.array([1.0, -1.0, 0.5, 0.0]), SolveConfig(n_steps=16), RngStream(seed))
    r = ito_residual(p, pj)
    assert r.max_abs <= 1e-10
    assert r.form_gap <= 1e-12


def test_heat_energy_residual_shrinks_with_dt():
    pre = heat(K=4, sigma=1.0, jump_amps=(0.5,), jump_intensities=(2.0,))
    fine = sample_noise(pre.model.levy, pre.model.noise_dim, 1.0, 1024, RngStream(9))
    errs = []
    for n in (64, 1024):
        noise = fine.coarsen(n)
        p = solve_with_noise(pre.model, pre.u0(1.0), SolveConfig(n_steps=n), noise)
        errs.append(ito_residual(p, pre.model, noise).max_abs)
    assert errs[1] < errs[0] / 4


def test_initial_state_validation():
    m = heat(K=3).model
    with pytest.raises(ValueError):
        solve_path(m, np.ones(4), SolveConfig(), RngStream(0))
    with pytest.raises(ValueError):
        solve_path(m, np.array([np.nan, 0, 0]), SolveConfig(), RngStream(0))


def test_path_csv(tmp_path):
    pre = allen_cahn(1, K=4)
    rec = solve_path(pre.model, pre.u0(1.0), SolveConfig(n_steps=8), RngStream(2))
    f = tmp_path / "p.csv"
    write_path_csv(f, rec, pre.model.triple, modes=True)
    rows = list(csv.reader(f.open()))
    assert tuple(rows[0][:6]) == PATH_CSV_COLUMNS
    assert rows[0][6:] == ["u_1", "u_2", "u_3", "u_4"]
    assert len(rows) == rec.grid.size + 1
    assert float(rows[1][2]) == pytest.approx(1.0)
    flags = [int(r[1]) for r in rows[1:]]
    assert flags == [1 if m >= 0 else 0 for m in rec.jump_marks]
    # exact repr round trip
    assert [float(x) for x in rows[-1][6:]] == [float(x) for x in rec.final]


def test_path_csv_marks_halt(tmp_path):
    pre = allen_cahn(1, K=8, flip=True, sigma=0.0, jump_amps=())
    rec = solve_path(pre.model, pre.u0(10.0), SolveConfig(n_steps=400), RngStream(0))
    f = tmp_path / "p.csv"
    write_path_csv(f, rec, pre.model.triple)
    last = f.read_text().strip().splitlines()[-1].split(",")
    assert last[1] == "2"
    assert math.isclose(float(last[0]), rec.halt_time)
