"""Losses, optimisers and the two-stage (Adam then L-BFGS) training loop."""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .diffjet import Tape, Var, grad_params, value_of
from .model import SpModel, build_model
from .problems import PdeProblem, residual
from .sampling import BatchPlan, boundary_points, initial_points, lhs_sample

log = logging.getLogger(__name__)

__all__ = [
    "AdamState",
    "LbfgsResult",
    "LossBreakdown",
    "ModelConfig",
    "NonFiniteGradient",
    "TrainResult",
    "TrainingConfig",
    "TrainingDiverged",
    "adam_step",
    "baseline_loss",
    "lbfgs_minimize",
    "sp_loss",
    "train",
]

LOSS_MODES = ("structure_preserving", "baseline")


class NonFiniteGradient(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, log_rows=None):
        super().__init__(msg)
        self.log_rows = log_rows or []


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    hidden: int = 7
    width: int = 32
    m: int = 10
    seed: int = 0
    psi_mode: str = "exp_decay"
    separate_nets: bool = False
    periodic: bool = True


@dataclass
class TrainingConfig:
    adam_steps: int = 50_000
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0  # multiplicative per step; 1.0 keeps the rate constant
    lbfgs_iters: int = 2000
    lbfgs_memory: int = 50
    lbfgs_tol: float = 1e-9
    n_collocation: int = 16_384
    batch_size: int = 4096
    sample_seed: int = 0
    batch_seed: int = 0
    resample_every: int = 0
    loss_mode: str = "structure_preserving"
    n_ic: int = 512
    n_bc: int = 512
    divergence_threshold: float = 1e6
    divergence_patience: int = 1000

    def __post_init__(self):
        if self.adam_steps < 0 or self.lbfgs_iters < 0:
            raise ValueError("step counts must be non-negative")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.lbfgs_memory < 1:
            raise ValueError("L-BFGS memory must be at least 1")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.n_collocation < 1 or self.batch_size < 1:
            raise ValueError("collocation count and batch size must be positive")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass
class LossBreakdown:
    total: float
    residual: float
    ic: float = 0.0
    bc: float = 0.0
    per_component: list = field(default_factory=list)


def _sqsum(r):
    if isinstance(r, Var):
        return (r * r).sum()
    return float(np.sum(np.square(r)))


def _points(batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != 2 or len(batch) == 0:
        raise ValueError("expected a non-empty (n, 2) array of (t, x) points")
    return batch[:, 0], batch[:, 1]


def residual_sums(model: SpModel, batch, tape: Tape | None = None) -> list:
    """Per-component sums of squared residuals over ``batch``."""
    t, x = _points(batch)
    jets = model.jets(t, x, tape)
    return [_sqsum(r) for r in residual(model.problem, jets)]


def _total(parts):
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def sp_loss(model: SpModel, batch, tape: Tape | None = None):
    """Mean squared residual of the constrained output, summed over components.

    Only collocation points are needed: initial and boundary data are
    built into the model. Returns ``(LossBreakdown, taped_total)``.
    """
    tape = Tape() if tape is None else tape
    n = len(_points(batch)[0])
    sums = residual_sums(model, batch, tape)
    per = [s * (1.0 / n) for s in sums]
    total = _total(per)
    vals = [float(value_of(p)) for p in per]
    return LossBreakdown(sum(vals), sum(vals), 0.0, 0.0, vals), total


def ic_bc_terms(model: SpModel, ic, bc, tape: Tape):
    """Initial-data and periodic-pair mean-square mismatches of the raw network."""
    problem = model.problem
    t0, x0 = _points(ic)
    out0 = model.jets(t0, x0, tape, order=-1)
    target = problem.u0(x0)
    ic_terms = [_sqsum(j.u - target[:, c]) * (1.0 / len(x0)) for c, j in enumerate(out0)]

    tb, xb = _points(bc)
    left = model.jets(tb, xb, tape, order=-1)
    right = model.jets(tb, xb + problem.domain.P, tape, order=-1)
    bc_terms = [_sqsum(l.u - r.u) * (1.0 / len(tb)) for l, r in zip(left, right)]
    return _total(ic_terms), _total(bc_terms)


def baseline_loss(model: SpModel, cl, ic, bc, tape: Tape | None = None):
    """Residual + initial mismatch + periodic-pair mismatch (unit weights)."""
    tape = Tape() if tape is None else tape
    n_cl = len(_points(cl)[0])
    res = [s * (1.0 / n_cl) for s in residual_sums(model, cl, tape)]
    r_t = _total(res)
    i_t, b_t = ic_bc_terms(model, ic, bc, tape)
    total = r_t + i_t + b_t
    rv, iv, bv = (float(value_of(v)) for v in (r_t, i_t, b_t))
    return (
        LossBreakdown(rv + iv + bv, rv, iv, bv, [float(value_of(p)) for p in res]),
        total,
    )


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, config: TrainingConfig, loss=None):
    """One bias-corrected Adam update. Returns ``(params, state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != np.shape(params):
        raise ValueError("gradient and parameter shapes differ")
    if not np.all(np.isfinite(grads)):
        gmax = float(np.max(np.abs(grads[np.isfinite(grads)]), initial=0.0))
        raise NonFiniteGradient(
            f"non-finite gradient at Adam step {state.step + 1} "
            f"(loss={loss}, max finite |grad|={gmax:.3e})"
        )
    b1, b2 = config.beta1, config.beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    lr = config.lr * config.lr_decay ** (step - 1)
    new = params - lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return new, AdamState(m, v, step)


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    n_eval: int
    status: str
    history: list = field(default_factory=list)


def _two_loop(g, s_hist, y_hist, rho_hist):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(
    fun: Callable,
    x0,
    max_iter: int = 2000,
    memory: int = 50,
    tol: float = 1e-9,
    c1: float = 1e-4,
    c2: float = 0.9,
    callback: Callable | None = None,
) -> LbfgsResult:
    """Minimise ``fun(x) -> (f, grad)`` with L-BFGS and a strong-Wolfe search.

    Stops when ``max|grad| <= tol``, after ``max_iter`` iterations, or when
    the line search fails; the reason is reported in ``status``.
    """
    x = np.array(x0, dtype=np.float64)
    cache = {}
    n_eval = 0

    def evaluate(z):
        nonlocal n_eval
        key = z.tobytes()
        if key not in cache:
            n_eval += 1
            f, g = fun(z)
            cache.clear()
            cache[key] = (float(f), np.asarray(g, dtype=np.float64))
        return cache[key]

    f, g = evaluate(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite loss or gradient at the initial point (f={f})")

    s_hist, y_hist, rho_hist = [], [], []
    history = [f]
    old_f = f + np.linalg.norm(g) / 2.0
    status = "max_iter"
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol:
            status = "converged"
            break
        if it >= max_iter:
            break
        p = _two_loop(g, s_hist, y_hist, rho_hist)
        if not p @ g < 0:
            s_hist, y_hist, rho_hist = [], [], []
            p = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, _, _, f_new, _, _ = line_search(
                lambda z: evaluate(z)[0],
                lambda z: evaluate(z)[1],
                x,
                p,
                gfk=g,
                old_fval=f,
                old_old_fval=old_f,
                c1=c1,
                c2=c2,
                maxiter=50,
            )
        if alpha is None:
            status = "line_search_failed"
            break
        x_new = x + alpha * p
        f_new, g_new = evaluate(x_new)
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        old_f, f, x, g = f, f_new, x_new, g_new
        it += 1
        history.append(f)
        if callback is not None:
            callback(it, x, f, g)
        if not np.isfinite(f):
            status = "non_finite"
            break
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return LbfgsResult(x, f, gnorm, it, n_eval, status, history)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: SpModel
    log: list  # deterministic rows
    wall_times: list  # seconds since start, one per log row
    timings: dict
    lbfgs: LbfgsResult | None = None
    collocation: object = None

    def write_log(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = ["phase", "step", "loss", "residual", "ic", "bc", "grad_norm"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + ["wall_time"])
            for row, wt in zip(self.log, self.wall_times):
                w.writerow([row[c] if isinstance(row[c], str) else repr(row[c]) for c in cols]
                           + [f"{wt:.6f}"])
        return path


def _shards(points, size):
    for i in range(0, len(points), size):
        yield points[i : i + size]


class Objective:
    """Loss and gradient over a point set, evaluated shard by shard.

    Shards are visited in a fixed order and their contributions summed in
    that order, so the result does not depend on how work is scheduled.
    """

    def __init__(self, model: SpModel, cfg: TrainingConfig, ic=None, bc=None):
        self.model = model
        self.cfg = cfg
        self.ic = ic
        self.bc = bc

    def batch(self, params, pts):
        model = self.model.with_params(params)
        tape = Tape()
        if self.cfg.loss_mode == "baseline":
            br, total = baseline_loss(model, pts, self.ic, self.bc, tape)
        else:
            br, total = sp_loss(model, pts, tape)
        return br, grad_params(total, tape)

    def full(self, params, pts):
        """Mean-squared residual over all of ``pts`` (plus IC/BC terms in baseline mode)."""
        model = self.model.with_params(params)
        n = len(pts)
        size = self.cfg.batch_size
        grad = np.zeros(model.n_params)
        per = None
        for shard in _shards(pts, size):
            tape = Tape()
            sums = residual_sums(model, shard, tape)
            total = _total(sums) * (1.0 / n)
            grad += grad_params(total, tape)
            vals = [float(value_of(s)) / n for s in sums]
            per = vals if per is None else [a + b for a, b in zip(per, vals)]
        res = sum(per)
        if self.cfg.loss_mode != "baseline":
            return LossBreakdown(res, res, 0.0, 0.0, per), grad
        tape = Tape()
        i_t, b_t = ic_bc_terms(model, self.ic, self.bc, tape)
        grad += grad_params(i_t + b_t, tape)
        iv, bv = float(value_of(i_t)), float(value_of(b_t))
        return LossBreakdown(res + iv + bv, res, iv, bv, per), grad


def make_model(problem: PdeProblem, mcfg: ModelConfig, baseline: bool = False) -> SpModel:
    return build_model(
        problem,
        hidden=mcfg.hidden,
        width=mcfg.width,
        m=mcfg.m,
        seed=mcfg.seed,
        psi_mode=mcfg.psi_mode,
        separate_nets=mcfg.separate_nets,
        constrained=not baseline,
        periodic=mcfg.periodic,
    )


def train(
    problem: PdeProblem,
    mcfg: ModelConfig,
    cfg: TrainingConfig,
    model: SpModel | None = None,
    progress: Callable | None = None,
) -> TrainResult:
    """Adam over mini-batches, then L-BFGS on the full collocation set."""
    baseline = cfg.loss_mode == "baseline"
    if model is None:
        model = make_model(problem, mcfg, baseline=baseline)
    colloc = lhs_sample(cfg.n_collocation, problem.domain, cfg.sample_seed)
    ic = bc = None
    if baseline:
        ic = initial_points(cfg.n_ic, problem.domain, cfg.sample_seed + 1)
        bc = boundary_points(cfg.n_bc, problem.domain, cfg.sample_seed + 2)
    obj = Objective(model, cfg, ic, bc)
    plan = BatchPlan(colloc.n, cfg.batch_size, cfg.batch_seed)

    rows, walls = [], []
    start = time.perf_counter()
    params = model.params.copy()
    state = AdamState.zeros(params.size)
    above = 0
    for step in range(1, cfg.adam_steps + 1):
        if cfg.resample_every and step > 1 and (step - 1) % cfg.resample_every == 0:
            colloc = lhs_sample(
                cfg.n_collocation, problem.domain, cfg.sample_seed + (step - 1) // cfg.resample_every
            )
        pts = colloc.points[plan.next_indices()]
        br, g = obj.batch(params, pts)
        gnorm = float(np.linalg.norm(g))
        rows.append(_row("adam", step, br, gnorm))
        walls.append(time.perf_counter() - start)
        if progress is not None:
            progress(rows[-1])
        above = above + 1 if not br.total <= cfg.divergence_threshold else 0
        if above >= cfg.divergence_patience:
            raise TrainingDiverged(
                f"loss above {cfg.divergence_threshold:g} for {above} consecutive steps "
                f"(step {step}, loss {br.total:.3e})",
                rows,
            )
        params, state = adam_step(params, g, state, cfg, loss=br.total)
    t_adam = time.perf_counter() - start

    lres = None
    if cfg.lbfgs_iters > 0:
        pts = colloc.points

        def fun(z):
            br, g = obj.full(z, pts)
            return br.total, g

        def cb(it, x, f, g):
            rows.append(
                {"phase": "lbfgs", "step": it, "loss": f, "residual": f, "ic": 0.0, "bc": 0.0,
                 "grad_norm": float(np.linalg.norm(g))}
            )
            walls.append(time.perf_counter() - start)
            if progress is not None:
                progress(rows[-1])

        lres = lbfgs_minimize(
            fun, params, cfg.lbfgs_iters, cfg.lbfgs_memory, cfg.lbfgs_tol, callback=cb
        )
        params = lres.x
        log.info("L-BFGS stopped: %s after %d iterations", lres.status, lres.n_iter)
    total = time.perf_counter() - start
    timings = {"adam_seconds": t_adam, "lbfgs_seconds": total - t_adam, "total_seconds": total}
    return TrainResult(model.with_params(params), rows, walls, timings, lres, colloc)


def _row(phase, step, br: LossBreakdown, gnorm):
    return {
        "phase": phase,
        "step": step,
        "loss": br.total,
        "residual": br.residual,
        "ic": br.ic,
        "bc": br.bc,
        "grad_norm": gnorm,
    }


def config_dict(cfg) -> dict:
    return asdict(cfg)

