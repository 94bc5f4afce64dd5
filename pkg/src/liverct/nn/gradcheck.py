"""Central finite-difference verification of analytic gradients.

For sampled parameter elements the analytic gradient from backward() is
compared against (L(t+h) - L(t-h)) / 2h in double precision.  Dropout
masks must be held fixed across both evaluations or the comparison is
meaningless; the checker freezes them by default and flags the report
invalid if asked not to.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .layers import BatchNorm, Dropout


@dataclass
class GradCheckEntry:
    param_index: int
    role: str
    flat_index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    valid: bool
    reason: str = ""
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return self.valid and self.max_rel_error <= self.tol


def _sample_indices(n, max_elements):
    if n <= max_elements:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_elements).astype(int))


def _rel_error(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-6)


def grad_check(network, x, label, h=1e-5, tol=1e-4, max_elements=16,
               freeze_dropout=True):
    """Compare backward() gradients to central differences of the BCE loss.

    Returns a GradCheckReport; a non-finite loss or an unfrozen dropout
    mask yields an invalid report rather than an exception.
    """
    x = np.asarray(x, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)

    dropouts = [d for d in network.find(Dropout) if d.rate > 0.0]
    if dropouts and not freeze_dropout:
        return GradCheckReport(np.inf, tol, valid=False,
                               reason="dropout masks not frozen across evaluations")
    frozen_before = [(d, d.frozen) for d in dropouts]
    for d in dropouts:
        d.frozen = True

    bn_state = [(l, l.running_mean.copy(), l.running_var.copy())
                for l in network.find(BatchNorm)]
    was_training = network.training
    network.train()

    def loss_at():
        pred = network.forward(x)
        loss, grad = ops.bce_loss(pred, label)
        return loss, grad

    try:
        network.zero_grad()
        loss0, lgrad = loss_at()
        if not np.isfinite(loss0):
            return GradCheckReport(np.inf, tol, valid=False,
                                   reason=f"non-finite loss {loss0}")
        network.backward(lgrad)
        analytic = [p.grad.copy() for p in network.parameters()]

        entries = []
        for pi, p in enumerate(network.parameters()):
            for i in _sample_indices(p.value.size, max_elements):
                orig = p.value.flat[i]
                p.value.flat[i] = orig + h
                lp, _ = loss_at()
                p.value.flat[i] = orig - h
                lm, _ = loss_at()
                p.value.flat[i] = orig
                if not (np.isfinite(lp) and np.isfinite(lm)):
                    return GradCheckReport(np.inf, tol, valid=False,
                                           reason="non-finite loss during perturbation")
                numeric = (lp - lm) / (2.0 * h)
                ana = analytic[pi].flat[i]
                entries.append(GradCheckEntry(pi, p.role, int(i), float(ana),
                                              float(numeric), _rel_error(ana, numeric)))
        max_err = max(e.rel_error for e in entries) if entries else 0.0
        return GradCheckReport(max_err, tol, valid=True, entries=entries)
    finally:
        network.zero_grad()
        for d, was in frozen_before:
            d.frozen = was
            d._frozen_mask = None
        for l, mean, var in bn_state:
            l.running_mean = mean
            l.running_var = var
        network.training = was_training
