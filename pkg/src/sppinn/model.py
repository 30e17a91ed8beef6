"""Structure-preserving network: periodic features, dense trunk, hard constraint.

The constrained output is ``u~ = psi + phi * u_nn`` with ``u_nn = f_nn(v(t, x))``
and ``v(t, x) = [t, 1, cos(w x), sin(w x), ..., cos(m w x), sin(m w x)]``,
``w = 2 pi / P``. With the default ``psi = u0(x) exp(-t)`` and ``phi = t`` the
initial data and periodicity hold for every parameter vector.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import paired_paths
from .diffjet import Jet4, Tape, jet_add, jet_linear, jet_mul, jet_tanh
from .problems import PdeProblem, get_problem, with_horizon, with_params

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "DenseNet",
    "HardConstraint",
    "PeriodicEmbedding",
    "SpModel",
    "build_model",
    "embed",
    "eval_constrained",
    "harmonic_tail",
    "init_params",
    "load_checkpoint",
    "net_forward",
    "save_checkpoint",
]

CHECKPOINT_FORMAT = "sppinn-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid model or embedding configuration."""


# ---------------------------------------------------------------------------
# periodic embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicEmbedding:
    P: float
    m: int

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ConfigError(f"number of harmonics must be a positive integer, got {self.m!r}")
        if not self.P > 0:
            raise ConfigError(f"period must be positive, got {self.P!r}")

    @property
    def dim(self) -> int:
        return 2 * self.m + 2


def embed(t, x, emb: PeriodicEmbedding, order: int = 4) -> Jet4:
    """Feature jet with slots of shape ``(..., 2m + 2)``.

    ``order`` limits the spatial derivatives carried; ``order=-1`` keeps the
    value only (no time derivative either), for plain prediction.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t, x = np.broadcast_arrays(t, x)
    k = np.arange(1, emb.m + 1, dtype=np.float64) * (2.0 * math.pi / emb.P)
    arg = x[..., None] * k
    c, s = np.cos(arg), np.sin(arg)
    shape = x.shape + (emb.dim,)

    def pack(first, second, cos_part, sin_part):
        out = np.empty(shape)
        out[..., 0] = first
        out[..., 1] = second
        out[..., 2::2] = cos_part
        out[..., 3::2] = sin_part
        return out

    value = pack(t, 1.0, c, s)
    if order < 0:
        return Jet4(value)
    ut = np.zeros(shape)
    ut[..., 0] = 1.0
    slots = [value, ut]
    # d^n/dx^n of (cos, sin)(k x): rotate by a quarter turn per order
    k1, k2, k3, k4 = k, k * k, k**3, k**4
    derivs = [
        pack(0.0, 0.0, -k1 * s, k1 * c),
        pack(0.0, 0.0, -k2 * c, -k2 * s),
        pack(0.0, 0.0, k3 * s, -k3 * c),
        pack(0.0, 0.0, k4 * c, k4 * s),
    ]
    for n in range(1, 5):
        slots.append(derivs[n - 1] if n <= order else 0.0)
    return Jet4(*slots)


def raw_features(t, x, order: int = 4) -> Jet4:
    """Unembedded ``[t, x]`` input jet, used by the baseline network."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t, x = np.broadcast_arrays(t, x)
    value = np.stack([t, x], axis=-1)
    if order < 0:
        return Jet4(value)
    ut = np.zeros_like(value)
    ut[..., 0] = 1.0
    slots = [value, ut, 0.0, 0.0, 0.0, 0.0]
    if order >= 1:
        ux = np.zeros_like(value)
        ux[..., 1] = 1.0
        slots[2] = ux
    return Jet4(*slots)


def harmonic_tail(problem: PdeProblem, m: int, n: int = 4096) -> float:
    """Relative L2 weight of initial-data Fourier modes above ``m``."""
    a, P = problem.domain.a, problem.domain.P
    x = a + P * np.arange(n) / n
    u = problem.u0(x)
    coef = np.fft.rfft(u, axis=0)
    total = np.sqrt(np.sum(np.abs(coef) ** 2))
    if total == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(coef[m + 1 :]) ** 2)) / total)


# ---------------------------------------------------------------------------
# dense network
# ---------------------------------------------------------------------------


@dataclass
class DenseNet:
    widths: tuple
    weights: list
    biases: list

    @property
    def n_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.widths[:-1], self.widths[1:]))

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [np.ravel(w), np.ravel(b)]
        return np.concatenate(parts)

    def with_flat(self, vec) -> "DenseNet":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ConfigError(f"expected {self.n_params} parameters, got {vec.size}")
        ws, bs, pos = [], [], 0
        for i, o in zip(self.widths[:-1], self.widths[1:]):
            ws.append(vec[pos : pos + i * o].reshape(i, o))
            pos += i * o
            bs.append(vec[pos : pos + o].copy())
            pos += o
        return DenseNet(tuple(self.widths), ws, bs)


def init_params(widths, seed: int) -> DenseNet:
    """Glorot-uniform weights, zero biases; reproducible from ``seed``."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or min(widths) < 1:
        raise ConfigError(f"invalid layer widths {widths}")
    rng = np.random.Generator(np.random.PCG64(seed))
    ws, bs = [], []
    for i, o in zip(widths[:-1], widths[1:]):
        bound = math.sqrt(6.0 / (i + o))
        ws.append(rng.uniform(-bound, bound, size=(i, o)))
        bs.append(np.zeros(o))
    return DenseNet(widths, ws, bs)


def net_forward(net: DenseNet, features: Jet4, tape: Tape | None = None) -> Jet4:
    """Propagate a feature jet through the network (tanh hidden, linear output).

    With a ``tape`` the weights are registered as parameter slots (layer
    order, weight before bias) so :func:`grad_params` applies.
    """
    width = np.shape(features.u)[-1]
    if width != net.widths[0]:
        raise ConfigError(f"feature width {width} does not match input width {net.widths[0]}")
    h = features
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        if tape is not None:
            w, b = tape.param(w, key=(id(w), "W")), tape.param(b, key=(id(b), "b"))
        h = jet_linear(h, w, b)
        if i < last:
            h = jet_tanh(h)
    return h


# ---------------------------------------------------------------------------
# hard constraint
# ---------------------------------------------------------------------------

PSI_MODES = ("exp_decay", "constant")


@dataclass(frozen=True)
class HardConstraint:
    """``psi`` and ``phi`` of the transform, with analytic jets.

    ``psi_mode='exp_decay'`` gives ``psi = u0(x) exp(-t)``; ``'constant'``
    gives ``psi = u0(x)``. In both cases ``phi = t``.
    """

    problem: PdeProblem
    psi_mode: str = "exp_decay"

    def __post_init__(self):
        if self.psi_mode not in PSI_MODES:
            raise ConfigError(f"psi_mode must be one of {PSI_MODES}, got {self.psi_mode!r}")

    def wrap(self, x) -> np.ndarray:
        """Map x into [a, b]; points already inside are returned untouched."""
        x = np.asarray(x, dtype=np.float64)
        d = self.problem.domain
        inside = (x >= d.a) & (x <= d.b)
        return np.where(inside, x, d.a + np.mod(x - d.a, d.P))

    def psi(self, t, x, order: int = 4) -> list[Jet4]:
        t = np.asarray(t, dtype=np.float64)
        out = []
        for j in self.problem.u0_jets(self.wrap(x)):
            j = j.truncate(max(order, 0))
            if self.psi_mode == "constant":
                out.append(Jet4(j.u, 0.0, j.ux, j.uxx, j.uxxx, j.uxxxx))
                continue
            e = np.exp(-t)
            s = j.map(lambda v: v * e)
            ut = 0.0 if order < 0 else -s.u
            out.append(Jet4(s.u, ut, s.ux, s.uxx, s.uxxx, s.uxxxx))
        return out

    def phi(self, t, x, order: int = 4) -> Jet4:
        t = np.asarray(t, dtype=np.float64)
        if order < 0:
            return Jet4(t)
        return Jet4(t, np.ones_like(t))


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


@dataclass
class SpModel:
    """Periodic embedding + dense network(s) + hard constraint.

    ``constraint=None`` gives the unconstrained network used by the baseline
    loss; ``embedding=None`` feeds raw ``[t, x]`` to the network.
    """

    problem: PdeProblem
    embedding: PeriodicEmbedding | None
    nets: list
    constraint: HardConstraint | None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def components(self) -> int:
        return self.problem.components

    @property
    def shared(self) -> bool:
        return len(self.nets) == 1

    @property
    def n_params(self) -> int:
        return sum(n.n_params for n in self.nets)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([n.flat() for n in self.nets])

    def with_params(self, vec) -> "SpModel":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ConfigError(f"expected {self.n_params} parameters, got {vec.size}")
        nets, pos = [], 0
        for n in self.nets:
            nets.append(n.with_flat(vec[pos : pos + n.n_params]))
            pos += n.n_params
        return replace(self, nets=nets)

    def features(self, t, x, order: int = 4) -> Jet4:
        if self.embedding is None:
            return raw_features(t, x, order)
        return embed(t, x, self.embedding, order)

    def network_jets(self, t, x, tape: Tape | None = None, order: int | None = None) -> list[Jet4]:
        """Unconstrained ``u_nn`` jets, one per component."""
        order = self.problem.order if order is None else order
        feats = self.features(t, x, order)
        if self.shared:
            out = net_forward(self.nets[0], feats, tape)
            return [out[..., c] for c in range(self.components)]
        return [net_forward(n, feats, tape)[..., 0] for n in self.nets]

    def jets(self, t, x, tape: Tape | None = None, order: int | None = None) -> list[Jet4]:
        """Constrained output jets (or raw network jets without a constraint)."""
        order = self.problem.order if order is None else order
        nn = self.network_jets(t, x, tape, order)
        if self.constraint is None:
            return nn
        psi = self.constraint.psi(t, x, order)
        phi = self.constraint.phi(t, x, order)
        return [jet_add(p, jet_mul(phi, n)) for p, n in zip(psi, nn)]

    def predict(self, t, x) -> np.ndarray:
        """Field values at ``(t, x)``, shape ``broadcast(t, x).shape + (C,)``."""
        jets = self.jets(t, x, order=-1)
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        return np.stack([np.broadcast_to(j.u, t.shape) for j in jets], axis=-1)


def eval_constrained(model: SpModel, t, x, order: int = 4) -> list[Jet4]:
    return model.jets(t, x, order=order)


def build_model(
    problem: PdeProblem,
    hidden: int = 7,
    width: int = 32,
    m: int = 10,
    seed: int = 0,
    psi_mode: str = "exp_decay",
    separate_nets: bool = False,
    constrained: bool = True,
    periodic: bool = True,
    warn_tail: float = 1e-3,
) -> SpModel:
    """Initialise a model for ``problem`` (``hidden`` tanh layers of ``width``)."""
    if hidden < 0 or width < 1:
        raise ConfigError(f"invalid network shape hidden={hidden} width={width}")
    emb = PeriodicEmbedding(problem.domain.P, int(m)) if periodic else None
    n_in = emb.dim if emb is not None else 2
    if periodic:
        tail = harmonic_tail(problem, int(m))
        if tail > warn_tail:
            log.warning(
                "%s: initial data has relative weight %.2e beyond %d harmonics",
                problem.id, tail, m,
            )
    C = problem.components
    if separate_nets and C > 1:
        nets = [
            init_params((n_in,) + (width,) * hidden + (1,), seed + c) for c in range(C)
        ]
    else:
        nets = [init_params((n_in,) + (width,) * hidden + (C,), seed)]
    constraint = HardConstraint(problem, psi_mode) if constrained else None
    meta = {
        "hidden": hidden,
        "width": width,
        "m": int(m),
        "psi_mode": psi_mode,
        "separate_nets": bool(separate_nets and C > 1),
        "constrained": constrained,
        "periodic": periodic,
    }
    return SpModel(problem, emb, nets, constraint, seed, meta)


# ---------------------------------------------------------------------------
# checkpoints: <stem>.json header + <stem>.f64 little-endian parameters
# ---------------------------------------------------------------------------


def save_checkpoint(model: SpModel, path, extra: dict | None = None) -> tuple[Path, Path]:
    jpath, bpath = paired_paths(path)
    jpath.parent.mkdir(parents=True, exist_ok=True)
    params = model.params
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "problem_id": model.problem.id,
        "problem": model.problem.to_dict(),
        "shapes": [list(n.widths) for n in model.nets],
        "m": model.embedding.m if model.embedding is not None else None,
        "P": model.problem.domain.P,
        "seed": model.seed,
        "psi_mode": model.constraint.psi_mode if model.constraint is not None else None,
        "model": dict(model.meta),
        "n_params": int(params.size),
        "byte_order": "little",
        "dtype": "float64",
        "values_file": bpath.name,
    }
    if extra:
        header["extra"] = extra
    jpath.write_text(json.dumps(header, indent=2, sort_keys=True))
    bpath.write_bytes(params.astype("<f8").tobytes())
    return jpath, bpath


def load_checkpoint(path) -> SpModel:
    jpath, _ = paired_paths(path)
    header = json.loads(jpath.read_text())
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{jpath} is not a model checkpoint")
    bpath = jpath.parent / header["values_file"]
    params = np.frombuffer(bpath.read_bytes(), dtype="<f8").astype(np.float64)
    if params.size != header["n_params"]:
        raise ConfigError(f"{bpath}: expected {header['n_params']} values, found {params.size}")
    pd = header["problem"]
    problem = get_problem(pd["id"])
    if problem.params != pd["params"]:
        problem = with_params(problem, **pd["params"])
    if problem.domain.T != pd["domain"]["T"]:
        problem = with_horizon(problem, pd["domain"]["T"])
    meta = header["model"]
    model = build_model(
        problem,
        hidden=meta["hidden"],
        width=meta["width"],
        m=meta["m"],
        seed=header["seed"],
        psi_mode=meta["psi_mode"],
        separate_nets=meta["separate_nets"],
        constrained=meta["constrained"],
        periodic=meta["periodic"],
        warn_tail=math.inf,
    )
    return model.with_params(params)
