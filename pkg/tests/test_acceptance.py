"""Acceptance criteria, each run at its stated tolerance.

Every test records a PASS / FAIL / NOT RUN line that is printed in the
session summary. Criteria that need the full-size configuration (hours of
CPU time per run) read finished runs from ``$SPPINN_ACCEPTANCE_RUNS`` or train
them when ``SPPINN_ACCEPTANCE_FULL=1``; otherwise they are reported as NOT RUN
and skipped, never passed.
"""
import csv
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import acceptance_plan as plan
from helpers import SLOT_TOL, seam_margin, slot_fd
from sppinn import cli
from sppinn.config import preset
from sppinn.diffjet import Tape, grad_params, value_of
from sppinn.model import build_model, eval_constrained
from sppinn.problems import catalog, get_problem, heat_problem
from sppinn.refsolver import (
    SpectralConfig,
    ac_energy,
    default_config,
    etdrk4_solve,
    mass,
    self_converge,
    temporal_order,
)
from sppinn.sampling import lhs_sample
from sppinn.training import sp_loss

SLOTS = tuple(SLOT_TOL)


# ---------------------------------------------------------------------------
# 1. constraint exactness
# ---------------------------------------------------------------------------


def test_c1_constraint_exactness(acceptance):
    n_draws, n_pts = 1000, 1000
    start = time.perf_counter()
    worst_ic = worst_per = 0.0
    for k, problem in enumerate(catalog()):
        model = build_model(problem, hidden=2, width=8, m=5, seed=k, warn_tail=math.inf)
        d = problem.domain
        rng = np.random.default_rng(100 + k)
        for _ in range(n_draws):
            m = model.with_params(rng.normal(size=model.n_params))
            x = rng.uniform(d.a, d.b, n_pts)
            t = rng.uniform(0.0, d.T, n_pts)
            worst_ic = max(worst_ic, float(np.max(np.abs(m.predict(0.0, x) - problem.u0(x)))))
            worst_per = max(worst_per, float(np.max(np.abs(m.predict(t, x) - m.predict(t, x + d.P)))))
    elapsed = time.perf_counter() - start
    ok = worst_ic <= 1e-12 and worst_per <= 1e-9 and elapsed < 60
    acceptance(
        "criterion 1 constraint exactness",
        ok,
        f"max|u(0,x)-u0|={worst_ic:.1e} (<=1e-12), max periodic gap={worst_per:.1e} (<=1e-9), "
        f"{elapsed:.0f}s (<60s)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 2. derivative correctness
# ---------------------------------------------------------------------------


def test_c2_derivatives_and_gradient(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    problems = catalog()
    worst = {s: 0.0 for s in SLOTS}
    for _ in range(100):
        p = problems[rng.integers(len(problems))]
        model = build_model(
            p, hidden=2, width=8, m=3, seed=int(rng.integers(2**31)),
            psi_mode=("exp_decay", "constant")[rng.integers(2)], warn_tail=math.inf,
        )
        d = p.domain
        t = rng.uniform(0.1 * d.T, 0.9 * d.T, 4)
        gap = seam_margin(model)
        x = rng.uniform(d.a + gap, d.b - gap, 4)
        jets = eval_constrained(model, t, x)
        fd = slot_fd(model, t, x)
        for c, j in enumerate(jets):
            for s in SLOTS:
                got = np.broadcast_to(np.asarray(value_of(getattr(j, s)), dtype=float), t.shape)
                scale = max(float(np.max(np.abs(got))), 1e-300)
                worst[s] = max(worst[s], float(np.max(np.abs(got - fd[s][:, c]))) / scale)
    slots_ok = all(worst[s] <= SLOT_TOL[s] for s in SLOTS)

    grad_rel = 0.0
    for pid in ("ac1", "ks"):
        p = get_problem(pid)
        model = build_model(p, hidden=2, width=8, m=3, seed=5, warn_tail=math.inf)
        pts = lhs_sample(32, p.domain, 1).points
        tape = Tape()
        _, total = sp_loss(model, pts, tape)
        g = grad_params(total, tape)
        th = model.params
        eps = 1e-6

        def f(v):
            return sp_loss(model.with_params(v), pts)[0].total

        fd = np.array([(f(th + eps * e) - f(th - eps * e)) / (2 * eps) for e in np.eye(th.size)])
        grad_rel = max(grad_rel, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
    elapsed = time.perf_counter() - start
    ok = slots_ok and grad_rel <= 1e-6 and elapsed < 120
    detail = ", ".join(f"{s} {worst[s]:.1e}" for s in SLOTS)
    acceptance(
        "criterion 2 derivative correctness",
        ok,
        f"slot rel. errors {detail} (<=1e-6 / 1e-4); sp_loss gradient rel. {grad_rel:.1e} (<=1e-6); "
        f"{elapsed:.0f}s (<120s)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 3. reference-solver trust
# ---------------------------------------------------------------------------


def test_c3_reference_solver_trust(acceptance):
    start = time.perf_counter()
    k = 3
    sol = etdrk4_solve(heat_problem(mode=k), SpectralConfig(N=128, dt=1e-3))
    exact = np.exp(-(k**2) * sol.times)[:, None] * np.sin(k * sol.positions)[None, :]
    heat = float(np.linalg.norm(sol.values[..., 0] - exact) / np.linalg.norm(exact))

    a = 0.5
    flat = replace(get_problem("nls"), initial=lambda x, prm: [a + 0.0 * x, 0.0 * x])
    sol = etdrk4_solve(flat, SpectralConfig(N=64, dt=1e-3))
    modulus = float(np.max(np.abs(np.hypot(sol.values[..., 0], sol.values[..., 1]) - a)))

    ch = get_problem("ch")
    sol = etdrk4_solve(ch, default_config(ch))
    mean = sol.values[..., 0].mean(axis=1)
    ch_drift = float(np.max(np.abs(mean - mean[0])))

    nls = get_problem("nls")
    sol = etdrk4_solve(nls, default_config(nls))
    m = mass(sol)
    nls_drift = float(np.max(np.abs(m - m[0])) / m[0])

    ac = get_problem("ac1")
    sol = etdrk4_solve(ac, default_config(ac))
    rise = float(np.max(np.diff(ac_energy(sol, **ac.params))))

    orders = temporal_order(get_problem("burgers"), 256, [1e-2 / 2**i for i in range(4)])
    elapsed = time.perf_counter() - start
    ok = (
        heat <= 1e-8 and modulus <= 1e-9 and ch_drift <= 1e-12 and nls_drift <= 1e-8
        and rise <= 1e-10 and all(3.5 <= o <= 4.5 for o in orders) and elapsed < 600
    )
    acceptance(
        "criterion 3 reference-solver trust",
        ok,
        f"heat {heat:.1e}, NLS modulus {modulus:.1e}, CH mean drift {ch_drift:.1e}, "
        f"NLS mass drift {nls_drift:.1e}, AC max energy rise {rise:.1e}, "
        f"Burgers orders {[round(o, 2) for o in orders]}, {elapsed:.0f}s (<600s)",
    )
    assert ok


# ---------------------------------------------------------------------------
# smoke-budget training runs shared by criteria 4, 5 and 8
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ac1_reference():
    p = get_problem("ac1")
    sol, diff = self_converge(p, default_config(p))
    return sol


def smoke_train(out: Path, reference, baseline=False):
    start = time.perf_counter()
    res, report = cli._train_one(get_problem("ac1"), preset("smoke"), out, baseline, reference)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def smoke_run_a(tmp_path_factory, ac1_reference):
    out = tmp_path_factory.mktemp("smoke_a")
    report, elapsed = smoke_train(out, ac1_reference)
    return out, report, elapsed


# ---------------------------------------------------------------------------
# 4. Allen-Cahn Case I
# ---------------------------------------------------------------------------


def test_c4_ac1_smoke(acceptance, smoke_run_a):
    _, report, elapsed = smoke_run_a
    err = report["relative_l2"]
    ok = err <= 5e-2 and elapsed <= 15 * 60
    acceptance(
        "criterion 4 (smoke gate) AC-I structure-preserving, 2x16, 2048 pts, 5k Adam",
        ok,
        f"relative L2 {err:.3e} (<=5e-2), {elapsed:.0f}s (<=900s)",
    )
    assert ok


def test_c4_ac1_full(acceptance):
    runs = {k: plan.obtain(k) for k in ("ac1-s0", "ac1-s1", "ac1-s2")}
    done = {k: r.relative_l2 for k, r in runs.items() if r is not None}
    label = "criterion 4 (full) AC-I full-size config, best of 3 seeds"
    if not done:
        acceptance(label, "NOT RUN", f"needs {plan.RUNS_ENV} or {plan.FULL_ENV}=1 (hours of CPU)")
        pytest.skip("full-configuration runs not available")
    best = min(done.values())
    ok = best <= 3e-3
    seeds = ", ".join(f"{k}: {v:.3e}" for k, v in done.items())
    missing = [k for k in runs if k not in done]
    acceptance(label, ok, f"best relative L2 {best:.3e} (<=3e-3) [{seeds}]"
               + (f"; seeds not run: {missing}" if missing else ""))
    assert ok


# ---------------------------------------------------------------------------
# 5. baseline failure mode
# ---------------------------------------------------------------------------


def test_c5_baseline_fails(acceptance, tmp_path, ac1_reference):
    report, elapsed = smoke_train(tmp_path, ac1_reference, baseline=True)
    err = report["relative_l2"]
    ok = err >= 0.5
    acceptance("criterion 5 baseline PINN on AC-I (smoke budget)", ok,
               f"relative L2 {err:.3e} (>=0.5), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. Burgers
# ---------------------------------------------------------------------------


def test_c6_burgers_full(acceptance):
    label = "criterion 6 Burgers (unpublished parameters) full config"
    run = plan.obtain("burgers")
    if run is None:
        acceptance(label, "NOT RUN", f"needs {plan.RUNS_ENV} or {plan.FULL_ENV}=1 (hours of CPU)")
        pytest.skip("full-configuration run not available")
    ok = run.relative_l2 <= 1e-2
    acceptance(label, ok, f"relative L2 {run.relative_l2:.3e} (<=1e-2)")
    assert ok


# ---------------------------------------------------------------------------
# 7. remaining benchmarks
# ---------------------------------------------------------------------------

C7 = [
    ("cahn-hilliard", "ch", "ch"),
    ("kuramoto-sivashinsky", "ks", "ks-T2"),
    ("gray-scott", "gs", "gs-T5"),
    ("belousov-zhabotinsky", "bz", "bz"),
    ("nls", "nls", "nls"),
]


@pytest.mark.parametrize("pid,loss_key,err_key", C7, ids=[c[0] for c in C7])
def test_c7_remaining_benchmarks(acceptance, pid, loss_key, err_key):
    label = f"criterion 7 {pid} full config"
    loss_run, err_run = plan.obtain(loss_key), plan.obtain(err_key)
    if loss_run is None or err_run is None:
        acceptance(label, "NOT RUN", f"needs {plan.RUNS_ENV} or {plan.FULL_ENV}=1 (hours of CPU)")
        pytest.skip("full-configuration runs not available")
    loss = loss_run.training_loss()
    err = err_run.relative_l2
    horizon = err_run.model.problem.domain.T
    ok = loss <= 1e-4 and err <= 1e-1
    acceptance(label, ok, f"sp_loss {loss:.3e} (<=1e-4), relative L2 {err:.3e} at T={horizon:g} (<=1e-1)")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism
# ---------------------------------------------------------------------------


def _log_without_wall_time(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    i = rows[0].index("wall_time")
    return [r[:i] + r[i + 1 :] for r in rows]


def _header_without_timings(path):
    header = json.loads(Path(path).read_text())
    header.pop("extra", None)
    return header


def test_c8_determinism(acceptance, tmp_path, smoke_run_a, ac1_reference):
    out_a = smoke_run_a[0]
    out_b = tmp_path / "b"
    smoke_train(out_b, ac1_reference)
    stem = "allen-cahn-1"
    same_log = _log_without_wall_time(out_a / f"{stem}.log.csv") == _log_without_wall_time(out_b / f"{stem}.log.csv")
    same_params = (out_a / f"{stem}.f64").read_bytes() == (out_b / f"{stem}.f64").read_bytes()
    same_header = _header_without_timings(out_a / f"{stem}.json") == _header_without_timings(out_b / f"{stem}.json")
    ok = same_log and same_params and same_header
    acceptance("criterion 8 determinism (two serial smoke runs)", ok,
               f"log rows identical: {same_log}, parameter bytes identical: {same_params}, "
               f"checkpoint header identical: {same_header}")
    assert ok
