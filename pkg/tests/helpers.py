"""Shared model fixtures for the test-suite."""
import math

from sppinn.model import DenseNet

from fdutil import STEP_FRACTION, richardson

# relative tolerance per slot, as a fraction of the largest slot magnitude
SLOT_TOL = {"ut": 1e-6, "ux": 1e-6, "uxx": 1e-6, "uxxx": 1e-4, "uxxxx": 1e-4}


def zero_last_layer(model):
    """Copy of ``model`` whose output layer is zero, so the network term vanishes."""
    net = model.nets[0]
    ws = [w.copy() for w in net.weights]
    bs = [b.copy() for b in net.biases]
    ws[-1][:] = 0.0
    bs[-1][:] = 0.0
    return model.with_params(DenseNet(net.widths, ws, bs).flat())


def slot_fd(model, t, x):
    """Finite-difference estimates of every derivative slot of the model output."""
    d = model.problem.domain
    ell = d.P / (2 * math.pi * model.embedding.m)
    out = {"ut": richardson(lambda tt: model.predict(tt, x), t, 1, 1e-2 * d.T)}
    for k, name in enumerate(("ux", "uxx", "uxxx", "uxxxx"), start=1):
        out[name] = richardson(lambda xx: model.predict(t, xx), x, k, STEP_FRACTION[k] * ell)
    return out


def seam_margin(model):
    """Reach of the widest x stencil used by ``slot_fd``.

    The periodic extension of the initial data may have derivative jumps at
    the ends of the domain; finite differences straddling them are not a valid
    oracle, so sample points are kept this far from the seam.
    """
    ell = model.problem.domain.P / (2 * math.pi * model.embedding.m)
    return 2.0 * max(STEP_FRACTION.values()) * ell * 1.01
