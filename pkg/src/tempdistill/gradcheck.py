"""Central finite-difference checks of tape gradients.

A spiking forward pass is piecewise constant in the weights, so finite
differences cannot see the surrogate derivative.  The network check
therefore swaps the spike step for its own sigmoid in the forward pass and
keeps the reset differentiable.  The surrogate then is the true
derivative, and the check exercises the full BPTT graph exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .losses import LOSS_MODES, LossWeights, loss_terms, objective, one_hot
from .snn import LifConfig, SnnNetwork, forward_unroll
from .tensor import Tape, Tensor, stack_mean

STEP = 1e-5
REL_TOL = 1e-4
# Rounding noise of a central difference grows like eps*|f|/STEP, so
# derivative entries below FLOOR_SCALE*max(1, |f|) are compared absolutely.
FLOOR_SCALE = 1e-6


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR_SCALE) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f: Callable[[list[np.ndarray]], float], params: Sequence[np.ndarray],
                 step: float = STEP) -> list[np.ndarray]:
    """Central differences of ``f`` w.r.t. every entry of every array."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(params)
            flat[i] = orig - step
            lo = f(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def check_function(build: Callable[[list[Tensor]], Tensor], params: Sequence[np.ndarray],
                   step: float = STEP) -> float:
    """Max relative error between tape and finite-difference gradients.

    ``build`` maps parameter tensors to a scalar tensor.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    tape = Tape()
    root = build(tape.watch(params))
    analytic = tape.backward(root)
    numeric = numeric_grad(lambda ps: build([Tensor(p) for p in ps]).item(), params, step)
    floor = FLOOR_SCALE * max(1.0, abs(root.item()))
    return max(float(rel_error(a, n, floor).max()) for a, n in zip(analytic, numeric))


@dataclass
class GradcheckResult:
    mode: str
    n_params: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < REL_TOL


def network_gradcheck(sizes=(2, 8, 8, 4), T: int = 3, mode: str = "temporal_kd_full",
                      seed: int = 0, batch: int = 5, w: LossWeights = LossWeights(),
                      detach_ensemble: bool = True) -> GradcheckResult:
    """Check the full loss gradient of a small smoothed SNN."""
    rng = np.random.default_rng(seed)
    lif = LifConfig(detach_reset=False, smooth_forward=True)
    net = SnnNetwork.init(list(sizes), rng, lif)
    # Non-zero biases keep every unit away from a degenerate operating point.
    for i in range(1, len(net.params), 2):
        net.params[i] = rng.uniform(-1.0, 1.0, size=net.params[i].shape)
    x = rng.uniform(-2.0, 2.0, size=(batch, sizes[0]))
    zt = rng.uniform(-2.0, 2.0, size=(batch, sizes[-1]))
    y = one_hot(rng.integers(0, sizes[-1], size=batch), sizes[-1])

    # A detached target is a constant at the evaluation point, so the
    # finite differences must hold it fixed too.
    frozen = None
    if detach_ensemble:
        frozen = stack_mean(forward_unroll(net, x, T)).data

    def build(P):
        zs = forward_unroll(net, x, T, P)
        return objective(loss_terms(zs, zt, y, w, detach_ensemble, frozen), w, mode)

    err = check_function(build, net.params)
    return GradcheckResult(mode, sum(p.size for p in net.params), err)


def gradcheck_all_modes(seed: int = 0, **kw) -> list[GradcheckResult]:
    return [network_gradcheck(mode=m, seed=seed, **kw) for m in LOSS_MODES]
