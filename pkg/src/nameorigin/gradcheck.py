"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import LSTM, Dense, Network, sparse_crossentropy


@dataclass
class GradcheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err < self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def lines(self):
        for name, err in self.max_rel_error.items():
            status = "ok" if err < self.tolerance else "FAIL"
            yield f"{name:<16} max rel err {err:.3e}  {status}"


def relative_error(analytic, numeric, floor=1e-4):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    Central differences with ``h = 1e-5`` carry roughly 1e-11 of rounding
    noise, so entries smaller than ``floor`` are compared on an absolute
    scale instead.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def gradcheck(network: Network, x, labels, tolerance=1e-5, h=1e-5, seed=0,
              training=False, floor=1e-4, corrupt=None):
    """Compare backprop gradients with central differences for every parameter.

    With ``training=True`` dropout is active; the generator is re-seeded
    before every forward pass so all evaluations share one dropout mask.
    ``corrupt`` maps parameter names to an offset added to the analytic
    gradient, for checking that the checker itself catches faults.
    """
    def loss():
        rng = np.random.default_rng(seed)
        return sparse_crossentropy(network.forward(x, training=training, rng=rng), labels)

    _, grads = network.loss_and_grad(x, labels, training=training, rng=np.random.default_rng(seed))
    analytic = {name: g.copy() for name, g in grads.items()}
    for name, offset in (corrupt or {}).items():
        analytic[name] = analytic[name] + offset

    report = GradcheckReport(tolerance=tolerance)
    for name, p in network.parameters().items():
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss()
            flat[k] = orig - h
            down = loss()
            flat[k] = orig
            numeric.flat[k] = (up - down) / (2.0 * h)
        report.max_rel_error[name] = float(relative_error(analytic[name], numeric, floor).max())
    network._recorded = False
    return report


def standard_suite(tolerance=1e-5, seed=0):
    """Run the three reference checks: dense softmax, one LSTM, two stacked LSTMs."""
    rng = np.random.default_rng(seed)
    reports = {}

    net = Network([Dense(10, 4, "softmax", rng=rng)])
    x = rng.normal(size=(6, 10))
    y = rng.integers(0, 4, size=6)
    reports["dense_softmax"] = gradcheck(net, x, y, tolerance=tolerance)

    net = Network([LSTM(4, 3, return_sequences=False, rng=rng), Dense(3, 4, "softmax", rng=rng)])
    _jitter_biases(net, rng)
    x = rng.normal(size=(3, 5, 4))
    y = rng.integers(0, 4, size=3)
    reports["lstm"] = gradcheck(net, x, y, tolerance=tolerance)

    net = Network([
        LSTM(4, 8, dropout=0.2, rng=rng),
        LSTM(8, 4, dropout=0.2, return_sequences=False, rng=rng),
        Dense(4, 3, "softmax", rng=rng),
    ])
    _jitter_biases(net, rng)
    x = rng.normal(size=(3, 5, 4))
    y = rng.integers(0, 3, size=3)
    reports["stacked_lstm"] = gradcheck(net, x, y, tolerance=tolerance, training=True, seed=seed + 1)
    return reports


def _jitter_biases(network, rng):
    # zero biases give symmetric, partly degenerate gradients
    for name, p in network.parameters().items():
        if name.endswith(".b"):
            p += rng.normal(scale=0.1, size=p.shape)
