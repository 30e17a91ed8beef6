"""Fourier pseudospectral + ETDRK4 reference solutions for the catalog PDEs.

Each problem is split as ``u_t = L u + N(u)`` with ``L`` diagonal in Fourier
space. ETDRK4 (Cox-Matthews scheme, Kassam-Trefethen coefficients) treats the
linear part exactly; the phi-function coefficients are evaluated as means over
a circle of 32 points around each ``h L`` to avoid cancellation for small
arguments.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ._io import paired_paths
from .problems import Domain, PdeProblem

log = logging.getLogger(__name__)

__all__ = [
    "GridSolution",
    "SelfConvergenceError",
    "SemilinearSplit",
    "SolverBlowup",
    "SpectralConfig",
    "ac_energy",
    "etdrk4_coefficients",
    "etdrk4_solve",
    "self_converge",
    "semilinear_split",
    "temporal_order",
]

SOLUTION_FORMAT = "sppinn-grid-solution"
CONTOUR_POINTS = 32


class SolverBlowup(FloatingPointError):
    pass


class SelfConvergenceError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class SpectralConfig:
    N: int = 512
    dt: float | None = None  # None -> 1e-4 * T
    dealias: bool = True
    n_snapshots: int = 101
    snapshot_times: list | None = None

    def __post_init__(self):
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {self.N}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.n_snapshots < 2 and self.snapshot_times is None:
            raise ValueError("need at least two snapshots")


def default_config(problem: PdeProblem) -> SpectralConfig:
    N = 1024 if problem.id == "kuramoto-sivashinsky" else 512
    return SpectralConfig(N=N, dt=1e-4 * problem.domain.T)


# ---------------------------------------------------------------------------
# grid solutions
# ---------------------------------------------------------------------------


@dataclass
class GridSolution:
    times: np.ndarray
    positions: np.ndarray
    values: np.ndarray  # (time, space, component)
    problem_id: str
    domain: Domain
    component_names: tuple
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        nt, nx = len(self.times), len(self.positions)
        if self.values.shape[:2] != (nt, nx) or self.values.ndim != 3:
            raise ValueError(f"values shape {self.values.shape} does not match grid ({nt}, {nx}, C)")

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def save(self, path) -> tuple[Path, Path]:
        jpath, bpath = paired_paths(path)
        jpath.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "format": SOLUTION_FORMAT,
            "version": 1,
            "problem_id": self.problem_id,
            "domain": {"a": self.domain.a, "b": self.domain.b, "T": self.domain.T},
            "N": len(self.positions),
            "dt": self.config.get("dt"),
            "snapshot_times": [float(t) for t in self.times],
            "component_names": list(self.component_names),
            "shape": list(self.values.shape),
            "layout": "row-major [time][space][component]",
            "byte_order": "little",
            "dtype": "float64",
            "values_file": bpath.name,
            "config": self.config,
        }
        jpath.write_text(json.dumps(meta, indent=2))
        bpath.write_bytes(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return jpath, bpath

    @classmethod
    def load(cls, path) -> "GridSolution":
        jpath, _ = paired_paths(path)
        meta = json.loads(jpath.read_text())
        if meta.get("format") != SOLUTION_FORMAT:
            raise ValueError(f"{jpath} is not a grid solution file")
        shape = tuple(meta["shape"])
        raw = (jpath.parent / meta["values_file"]).read_bytes()
        if len(raw) != 8 * math.prod(shape):
            raise ValueError(f"value file size does not match shape {shape}")
        values = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        d = meta["domain"]
        domain = Domain(d["a"], d["b"], d["T"])
        N = meta["N"]
        positions = domain.a + domain.P * np.arange(N) / N
        return cls(
            np.asarray(meta["snapshot_times"], dtype=np.float64),
            positions,
            values,
            meta["problem_id"],
            domain,
            tuple(meta["component_names"]),
            meta.get("config", {}),
        )


# ---------------------------------------------------------------------------
# semilinear splitting
# ---------------------------------------------------------------------------


@dataclass
class SemilinearSplit:
    """Diagonal linear symbol and nonlinear term in Fourier space.

    For real problems the state is ``rfft`` coefficients with shape
    ``(C, N//2 + 1)``; ``complex_field`` problems carry one complex component
    with full ``fft`` coefficients.
    """

    symbol: Callable  # k -> (C, nk) array
    nonlinear: Callable  # (u_phys (C, N), k, to_hat) -> (C, nk) array
    complex_field: bool = False


def semilinear_split(problem: PdeProblem) -> SemilinearSplit:
    p = problem.params
    pid = problem.id

    if pid == "heat":
        return SemilinearSplit(
            lambda k: np.array([-p["kappa"] * k**2]),
            lambda u, k, F: np.zeros((1, k.size), dtype=complex),
        )
    if pid == "burgers":
        nu = p["nu"]
        return SemilinearSplit(
            lambda k: np.array([-nu * k**2]),
            lambda u, k, F: -0.5j * k * F(u * u),
        )
    if pid in ("allen-cahn-1", "allen-cahn-2"):
        g1, g2 = p["gamma1"], p["gamma2"]
        return SemilinearSplit(
            lambda k: np.array([-g1 * k**2 + g2]),
            lambda u, k, F: -g2 * F(u**3),
        )
    if pid == "cahn-hilliard":
        e1, e2 = p["eps1"], p["eps2"]
        return SemilinearSplit(
            lambda k: np.array([e1 * (k**2 - e2 * k**4)]),
            lambda u, k, F: -e1 * k**2 * F(u**3),
        )
    if pid == "kuramoto-sivashinsky":
        return SemilinearSplit(
            lambda k: np.array([k**2 - k**4]),
            lambda u, k, F: -0.5j * k * F(u * u),
        )
    if pid == "gray-scott":
        e1, e2, b, kk = p["eps1"], p["eps2"], p["b"], p["k"]

        def gs(u, k, F):
            uv2 = u[0] * u[1] ** 2
            return F(np.stack([b - uv2, uv2]))

        return SemilinearSplit(
            lambda k: np.stack([-e1 * k**2 - b, -e2 * k**2 - (b + kk)]), gs
        )
    if pid == "belousov-zhabotinsky":
        e1, e2 = p["eps1"], p["eps2"]

        def bz(u, k, F):
            a, b_, c = u
            return F(np.stack([b_ - a * b_ - a * a, c - a * b_, a]))

        return SemilinearSplit(
            lambda k: np.stack([-e1 * k**2 + 1.0, -e2 * k**2 - 1.0, -e1 * k**2 - 1.0]), bz
        )
    if pid == "nls":
        return SemilinearSplit(
            lambda k: np.array([-1j * k**2]),
            lambda u, k, F: F(1j * np.abs(u) ** 2 * u),
            complex_field=True,
        )
    raise KeyError(f"no spectral splitting for problem {pid!r}")


def etdrk4_coefficients(L: np.ndarray, h: float, M: int = CONTOUR_POINTS):
    """``E, E2, Q, f1, f2, f3`` for the diagonal linear symbol ``L``."""
    L = np.asarray(L)
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2.0)
    r = np.exp(2j * np.pi * (np.arange(1, M + 1) - 0.5) / M)
    LR = h * L[..., None] + r
    eLR = np.exp(LR)
    Q = h * np.mean((np.exp(LR / 2.0) - 1.0) / LR, axis=-1)
    f1 = h * np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=-1)
    f2 = h * np.mean((2.0 + LR + eLR * (LR - 2.0)) / LR**3, axis=-1)
    f3 = h * np.mean((-4.0 - 3.0 * LR - LR**2 + eLR * (4.0 - LR)) / LR**3, axis=-1)
    if np.isrealobj(L):
        Q, f1, f2, f3 = Q.real, f1.real, f2.real, f3.real
    return E, E2, Q, f1, f2, f3


def _snapshot_plan(T, dt, cfg: SpectralConfig):
    if cfg.snapshot_times is not None:
        times = np.asarray(sorted(cfg.snapshot_times), dtype=np.float64)
        if times[0] < 0 or times[-1] > T * (1 + 1e-12):
            raise ValueError("snapshot times must lie in [0, T]")
        nsteps = max(1, math.ceil(T / dt - 1e-9))
        h = T / nsteps
        idx = np.rint(times / h).astype(int)
        return h, nsteps, idx
    segs = cfg.n_snapshots - 1
    per = max(1, math.ceil(T / dt / segs - 1e-9))
    nsteps = per * segs
    return T / nsteps, nsteps, np.arange(cfg.n_snapshots) * per


def etdrk4_solve(problem: PdeProblem, config: SpectralConfig | None = None) -> GridSolution:
    """Integrate ``problem`` to its horizon and return snapshots on a uniform grid."""
    cfg = config or default_config(problem)
    dom = problem.domain
    T = dom.T
    dt = cfg.dt if cfg.dt is not None else 1e-4 * T
    h, nsteps, snap_idx = _snapshot_plan(T, dt, cfg)
    N = cfg.N
    x = dom.a + dom.P * np.arange(N) / N
    split = semilinear_split(problem)
    C = problem.components

    if split.complex_field:
        k = 2.0 * np.pi / dom.P * np.fft.fftfreq(N, 1.0 / N)
        to_hat = lambda u: np.fft.fft(u, axis=-1)  # noqa: E731
        to_phys = lambda v: np.fft.ifft(v, axis=-1)  # noqa: E731
        u0 = problem.u0(x)
        state = to_hat((u0[:, 0] + 1j * u0[:, 1])[None, :])
        kidx = np.abs(np.fft.fftfreq(N, 1.0 / N))
    else:
        k = 2.0 * np.pi / dom.P * np.arange(N // 2 + 1)
        to_hat = lambda u: np.fft.rfft(u, axis=-1)  # noqa: E731
        to_phys = lambda v: np.fft.irfft(v, n=N, axis=-1)  # noqa: E731
        state = to_hat(problem.u0(x).T)
        kidx = np.arange(N // 2 + 1)
    mask = (kidx < N / 3.0) if cfg.dealias else np.ones(kidx.shape, bool)

    # odd derivatives must not see the unpaired Nyquist mode
    k_odd = k.copy()
    if N % 2 == 0:
        k_odd[np.argmax(kidx == N // 2)] = 0.0

    def nonlinear(v):
        return split.nonlinear(to_phys(v), k_odd, to_hat) * mask

    L = split.symbol(k)
    E, E2, Q, f1, f2, f3 = etdrk4_coefficients(L, h)

    snaps = []
    want = dict.fromkeys(snap_idx.tolist())
    v = state
    if 0 in want:
        snaps.append(v.copy())
    for n in range(1, nsteps + 1):
        # overflow is caught by the finiteness check below and reported as SolverBlowup
        with np.errstate(over="ignore", invalid="ignore"):
            Nv = nonlinear(v)
            a = E2 * v + Q * Nv
            Na = nonlinear(a)
            b = E2 * v + Q * Na
            Nb = nonlinear(b)
            c = E2 * a + Q * (2.0 * Nb - Nv)
            Nc = nonlinear(c)
            v = E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3
        if n in want or n % 200 == 0:
            if not np.all(np.isfinite(v)):
                bad = np.argwhere(~np.isfinite(v))[0]
                raise SolverBlowup(
                    f"{problem.id}: non-finite Fourier coefficient at step {n} "
                    f"(t={n * h:.6g}), component {bad[0]}, mode {bad[1]}"
                )
            if n in want:
                snaps.append(v.copy())

    vals = []
    for s in snaps:
        phys = to_phys(s)
        if split.complex_field:
            vals.append(np.stack([phys[0].real, phys[0].imag], axis=-1))
        else:
            vals.append(phys.T)
    values = np.asarray(vals)
    # the initial snapshot is the sampled initial data itself
    if 0 in want:
        values[0] = problem.u0(x)
    echo = asdict(cfg)
    echo.update(dt=h, nsteps=nsteps, params=dict(problem.params))
    return GridSolution(
        snap_idx * h, x, values, problem.id, dom, tuple(problem.component_names), echo
    )


def _rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def self_converge(
    problem: PdeProblem,
    base: SpectralConfig | None = None,
    tol: float | None = None,
    max_N: int = 4096,
    max_levels: int = 6,
) -> tuple[GridSolution, float]:
    """Refine (halve dt, double N up to ``max_N``) until final states agree to ``tol``.

    Returns the finest solution and the last observed relative L2 difference.
    """
    base = base or default_config(problem)
    if tol is None:
        tol = 1e-6 if problem.id == "kuramoto-sivashinsky" else 1e-8
    cfg = base
    prev = etdrk4_solve(problem, cfg)
    history = []
    for level in range(max_levels):
        dt = (cfg.dt if cfg.dt is not None else 1e-4 * problem.domain.T) / 2.0
        cfg = replace(cfg, dt=dt, N=min(cfg.N * 2, max_N))
        cur = etdrk4_solve(problem, cfg)
        stride = len(cur.positions) // len(prev.positions)
        diff = _rel_l2(prev.final, cur.final[::stride])
        history.append({"N": cfg.N, "dt": cur.config["dt"], "diff": diff})
        log.info("%s: N=%d dt=%.3g diff=%.3e", problem.id, cfg.N, cur.config["dt"], diff)
        if diff <= tol:
            cur.config["self_convergence"] = history
            return cur, diff
        prev = cur
    raise SelfConvergenceError(
        f"{problem.id}: no self-convergence to {tol:g} within {max_levels} refinements", history
    )


def temporal_order(problem: PdeProblem, N: int, dts) -> list[float]:
    """Observed orders ``log2(e_i / e_{i+1})`` from successive dt halvings."""
    sols = [etdrk4_solve(problem, SpectralConfig(N=N, dt=dt, n_snapshots=2)).final for dt in dts]
    errs = [np.linalg.norm(a - b) for a, b in zip(sols[:-1], sols[1:])]
    return [math.log2(e1 / e2) for e1, e2 in zip(errs[:-1], errs[1:])]


def ac_energy(sol: GridSolution, gamma1: float, gamma2: float) -> np.ndarray:
    """Allen-Cahn free energy of every snapshot (spectral derivative, rectangle rule)."""
    N = len(sol.positions)
    P = sol.domain.P
    k = 2.0 * np.pi / P * np.fft.rfftfreq(N, 1.0 / N)
    k[-1] = 0.0
    u = sol.values[..., 0]
    ux = np.fft.irfft(1j * k * np.fft.rfft(u, axis=-1), n=N, axis=-1)
    dens = 0.5 * gamma1 * ux**2 + 0.25 * gamma2 * (u**2 - 1.0) ** 2
    return dens.sum(axis=-1) * (P / N)


def mass(sol: GridSolution) -> np.ndarray:
    """Integral of the sum of squared components, per snapshot."""
    N = len(sol.positions)
    return np.sum(sol.values**2, axis=(1, 2)) * (sol.domain.P / N)
