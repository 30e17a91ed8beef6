"""Benchmark PDE catalog: domains, parameters, initial data and residuals.

Every problem is written as ``u_t - P(u) = 0`` on a periodic interval. The
residual functions operate on :class:`~sppinn.diffjet.Jet4` slots only, so the
same code runs on plain arrays and on taped values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diffjet import Jet4, jet_cos, jet_exp, jet_mul, jet_recip, jet_sin

__all__ = [
    "Domain",
    "PdeProblem",
    "ValidationReport",
    "catalog",
    "get_problem",
    "heat_problem",
    "residual",
    "validate_problem",
    "with_horizon",
    "with_params",
]


@dataclass(frozen=True)
class Domain:
    a: float
    b: float
    T: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty spatial interval [{self.a}, {self.b}]")
        if not self.T > 0:
            raise ValueError(f"time horizon must be positive, got {self.T}")

    @property
    def P(self) -> float:
        return self.b - self.a


InitialFn = Callable[[Jet4, dict], list]
ResidualFn = Callable[[list, dict], list]


@dataclass(frozen=True)
class PdeProblem:
    id: str
    components: int
    domain: Domain
    params: dict
    initial: InitialFn = field(repr=False)
    residual_fn: ResidualFn = field(repr=False)
    ic_expr: tuple = ()
    component_names: tuple = ("u",)
    order: int = 2  # highest spatial derivative the residual reads
    published_values: bool = True
    title: str = ""

    def u0_jets(self, x) -> list[Jet4]:
        """Initial data as x-jets (value plus four spatial derivatives)."""
        x = np.asarray(x, dtype=np.float64)
        return self.initial(Jet4.seed_x(x), self.params)

    def u0(self, x) -> np.ndarray:
        """Initial values, shape ``(..., components)``."""
        jets = self.u0_jets(x)
        x = np.asarray(x, dtype=np.float64)
        return np.stack([np.broadcast_to(j.u, x.shape) for j in jets], axis=-1)

    def u0_derivatives(self, x) -> np.ndarray:
        """Shape ``(components, 5, ...)``: orders 0..4 of the initial data."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        for j in self.u0_jets(x):
            out.append([np.broadcast_to(np.asarray(s, dtype=np.float64), x.shape) for s in j.xs])
        return np.asarray(out)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "components": self.components,
            "component_names": list(self.component_names),
            "domain": {"a": self.domain.a, "b": self.domain.b, "T": self.domain.T},
            "params": dict(self.params),
            "initial_condition": list(self.ic_expr),
            "published_values": self.published_values,
        }


def residual(problem: PdeProblem, jets: list) -> list:
    """Per-component residual ``u_t - P(u)`` evaluated on jet data."""
    if len(jets) != problem.components:
        raise ValueError(f"{problem.id} expects {problem.components} jets, got {len(jets)}")
    return problem.residual_fn(jets, problem.params)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def _burgers(j, p):
    (u,) = j
    return [u.ut + u.u * u.ux - p["nu"] * u.uxx]


def _allen_cahn(j, p):
    (u,) = j
    g1, g2 = p["gamma1"], p["gamma2"]
    return [u.ut - g1 * u.uxx + g2 * u.u**3 - g2 * u.u]


def _cahn_hilliard(j, p):
    (u,) = j
    e1, e2 = p["eps1"], p["eps2"]
    # (u^3)_xx expanded by hand
    cube_xx = 6.0 * u.u * u.ux**2 + 3.0 * u.u**2 * u.uxx
    return [u.ut - e1 * (-u.uxx - e2 * u.uxxxx + cube_xx)]


def _kuramoto_sivashinsky(j, p):
    (u,) = j
    return [u.ut + u.uxx + u.uxxxx + u.u * u.ux]


def _gray_scott(j, p):
    u, v = j
    e1, e2, b, k = p["eps1"], p["eps2"], p["b"], p["k"]
    uv2 = u.u * v.u**2
    return [
        u.ut - e1 * u.uxx - b * (1.0 - u.u) + uv2,
        v.ut - e2 * v.uxx + (b + k) * v.u - uv2,
    ]


def _belousov_zhabotinsky(j, p):
    u, v, w = j
    e1, e2 = p["eps1"], p["eps2"]
    uv = u.u * v.u
    return [
        u.ut - e1 * u.uxx - u.u - v.u + uv + u.u**2,
        v.ut - e2 * v.uxx - w.u + v.u + uv,
        w.ut - e1 * w.uxx - u.u + w.u,
    ]


def _nls(j, p):
    # u = p + i q;  u_t = i u_xx + i |u|^2 u
    re, im = j
    mod2 = re.u**2 + im.u**2
    return [
        re.ut + im.uxx + mod2 * im.u,
        im.ut - re.uxx - mod2 * re.u,
    ]


def _heat(j, p):
    (u,) = j
    return [u.ut - p["kappa"] * u.uxx]


# ---------------------------------------------------------------------------
# initial data (jet arithmetic keeps all derivatives exact)
# ---------------------------------------------------------------------------


def _ic_burgers(x, p):
    return [-1.0 * jet_sin(math.pi * x)]


def _ic_ac1(x, p):
    return [jet_mul(x, x, jet_cos(math.pi * x))]


def _ic_ac2(x, p):
    return [jet_mul(x, x, jet_sin(2.0 * math.pi * x))]


def _ic_ch(x, p):
    return [-1.0 * jet_cos(2.0 * math.pi * x)]


def _ic_ks(x, p):
    return [jet_mul(jet_cos(x * (1.0 / 16.0)), 1.0 + jet_sin((x - 1.0) * (1.0 / 16.0)))]


def _sin4(x):
    s = jet_sin((x - 50.0) * (math.pi / 100.0))
    s2 = jet_mul(s, s)
    return jet_mul(s2, s2)


def _ic_gs(x, p):
    s4 = _sin4(x)
    return [1.0 - 0.5 * s4, 0.25 * s4]


def _gauss(x, c):
    d = x - c
    return jet_exp(-100.0 * jet_mul(d, d))


def _ic_bz(x, p):
    return [_gauss(x, -0.5), _gauss(x, 0.0), _gauss(x, 0.5)]


def _ic_nls(x, p):
    re = 2.0 * jet_recip(2.0 - math.sqrt(2.0) * jet_cos(x)) - 1.0
    return [re, Jet4(0.0)]


def _ic_heat(x, p):
    return [jet_sin(p["mode"] * x)]


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def catalog() -> list[PdeProblem]:
    """The eight benchmark entries (Allen-Cahn appears as two cases)."""
    return [
        PdeProblem(
            id="burgers",
            title="Viscous Burgers",
            components=1,
            domain=Domain(-1.0, 1.0, 1.0),
            params={"nu": 0.01 / math.pi},
            initial=_ic_burgers,
            residual_fn=_burgers,
            ic_expr=("-sin(pi*x)",),
            order=2,
            published_values=False,
        ),
        PdeProblem(
            id="allen-cahn-1",
            title="Allen-Cahn, case I",
            components=1,
            domain=Domain(-1.0, 1.0, 1.0),
            params={"gamma1": 0.001, "gamma2": 5.0},
            initial=_ic_ac1,
            residual_fn=_allen_cahn,
            ic_expr=("x**2*cos(pi*x)",),
            order=2,
        ),
        PdeProblem(
            id="allen-cahn-2",
            title="Allen-Cahn, case II",
            components=1,
            domain=Domain(-1.0, 1.0, 1.0),
            params={"gamma1": 0.001, "gamma2": 4.0},
            initial=_ic_ac2,
            residual_fn=_allen_cahn,
            ic_expr=("x**2*sin(2*pi*x)",),
            order=2,
        ),
        PdeProblem(
            id="cahn-hilliard",
            title="Cahn-Hilliard",
            components=1,
            domain=Domain(-1.0, 1.0, 1.0),
            params={"eps1": 1e-2, "eps2": 1e-4},
            initial=_ic_ch,
            residual_fn=_cahn_hilliard,
            ic_expr=("-cos(2*pi*x)",),
            order=4,
        ),
        PdeProblem(
            id="kuramoto-sivashinsky",
            title="Kuramoto-Sivashinsky",
            components=1,
            domain=Domain(0.0, 32.0 * math.pi, 20.0),
            params={},
            initial=_ic_ks,
            residual_fn=_kuramoto_sivashinsky,
            ic_expr=("cos(x/16)*(1+sin((x-1)/16))",),
            order=4,
        ),
        PdeProblem(
            id="gray-scott",
            title="Gray-Scott",
            components=2,
            domain=Domain(-50.0, 50.0, 20.0),
            params={"eps1": 1.0, "eps2": 0.01, "b": 0.02, "k": 0.0562},
            initial=_ic_gs,
            residual_fn=_gray_scott,
            ic_expr=("1-sin(pi*(x-50)/100)**4/2", "sin(pi*(x-50)/100)**4/4"),
            component_names=("u", "v"),
            order=2,
        ),
        PdeProblem(
            id="belousov-zhabotinsky",
            title="Belousov-Zhabotinsky",
            components=3,
            domain=Domain(-1.0, 1.0, 3.0),
            params={"eps1": 1e-5, "eps2": 2e-5},
            initial=_ic_bz,
            residual_fn=_belousov_zhabotinsky,
            ic_expr=("exp(-100*(x+0.5)**2)", "exp(-100*x**2)", "exp(-100*(x-0.5)**2)"),
            component_names=("u", "v", "w"),
            order=2,
        ),
        PdeProblem(
            id="nls",
            title="Nonlinear Schroedinger",
            components=2,
            domain=Domain(-math.pi, math.pi, 2.0),
            params={},
            initial=_ic_nls,
            residual_fn=_nls,
            ic_expr=("2/(2-sqrt(2)*cos(x))-1", "0"),
            component_names=("re", "im"),
            order=2,
        ),
    ]


def heat_problem(mode: int = 1, kappa: float = 1.0, T: float = 1.0) -> PdeProblem:
    """Synthetic ``u_t = kappa u_xx`` on [-pi, pi] with ``u0 = sin(mode x)``."""
    return PdeProblem(
        id="heat",
        title="Heat equation (synthetic)",
        components=1,
        domain=Domain(-math.pi, math.pi, T),
        params={"kappa": float(kappa), "mode": float(mode)},
        initial=_ic_heat,
        residual_fn=_heat,
        ic_expr=(f"sin({mode}*x)",),
        order=2,
        published_values=False,
    )


_ALIASES = {
    "ac1": "allen-cahn-1",
    "ac-1": "allen-cahn-1",
    "ac2": "allen-cahn-2",
    "ac-2": "allen-cahn-2",
    "ch": "cahn-hilliard",
    "ks": "kuramoto-sivashinsky",
    "gs": "gray-scott",
    "bz": "belousov-zhabotinsky",
}


def get_problem(name: str) -> PdeProblem:
    key = _ALIASES.get(name.lower(), name.lower())
    if key == "heat":
        return heat_problem()
    for p in catalog():
        if p.id == key:
            return p
    raise KeyError(f"unknown problem {name!r}")


def with_horizon(problem: PdeProblem, T: float) -> PdeProblem:
    d = problem.domain
    return replace(problem, domain=Domain(d.a, d.b, float(T)))


def with_params(problem: PdeProblem, **overrides) -> PdeProblem:
    unknown = set(overrides) - set(problem.params)
    if unknown:
        raise KeyError(f"{problem.id} has no parameter(s) {sorted(unknown)}")
    params = dict(problem.params)
    params.update({k: float(v) for k, v in overrides.items()})
    return replace(problem, params=params)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    problem_id: str
    passed: bool
    value_mismatch: list
    slope_mismatch: list
    messages: list
    warnings: list

    def __bool__(self):
        return self.passed


# positivity is not required of every named parameter (heat "mode" is a label)
_POSITIVE_EXEMPT = {"mode"}


def validate_problem(problem: PdeProblem, tol: float = 1e-8) -> ValidationReport:
    """Check periodic compatibility of the initial data and parameter signs.

    A value mismatch at the interval ends fails the check. A slope mismatch
    only produces a warning: Allen-Cahn case I has ``u0'(+-1) = -+2`` and is
    still a catalog entry.
    """
    a, b = problem.domain.a, problem.domain.b
    da = problem.u0_derivatives(np.array([a, b]))
    value = [float(abs(d[0, 0] - d[0, 1])) for d in da]
    slope = [float(abs(d[1, 0] - d[1, 1])) for d in da]
    messages, warnings = [], []
    for c, (mv, ms) in enumerate(zip(value, slope)):
        name = problem.component_names[c]
        if mv > tol:
            messages.append(f"{name}: u0(a) - u0(b) mismatch {mv:.3e} > {tol:g}")
        if ms > tol:
            warnings.append(f"{name}: u0'(a) - u0'(b) mismatch {ms:.3e} > {tol:g}")
    for k, v in problem.params.items():
        if k not in _POSITIVE_EXEMPT and not v > 0:
            messages.append(f"parameter {k}={v} is not positive")
    return ValidationReport(problem.id, not messages, value, slope, messages, warnings)
