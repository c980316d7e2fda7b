"""Leaky integrate-and-fire layers unrolled over discrete timesteps.

Hidden layers are LIF populations driven by a dense current; the readout is
a plain linear map of the last hidden layer's spikes, so every timestep
yields a real-valued logits row per sample.  Inputs are direct-encoded: the
same feature vector is injected at every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .tensor import (
    ContractError,
    DimensionError,
    Tensor,
    _emit,
    add,
    matmul,
    mul,
    scale,
    sub,
)


@dataclass(frozen=True)
class LifConfig:
    decay: float = 0.5
    threshold: float = 1.0
    surrogate_slope: float = 4.0
    detach_reset: bool = True
    # Replace the step by its sigmoid in the forward pass.  Only used to
    # finite-difference check BPTT, where the spike must be differentiable.
    smooth_forward: bool = False

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.threshold <= 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.surrogate_slope <= 0:
            raise ValueError(f"surrogate_slope must be positive, got {self.surrogate_slope}")


@dataclass
class LifState:
    v: Tensor
    s: Tensor

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> LifState:
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


def surrogate_heaviside(x: Tensor, a_s: float = 4.0, smooth_forward: bool = False) -> Tensor:
    """Step function forward, sigmoid-slope derivative backward.

    Fires on ``x >= 0``.  The recorded derivative is
    ``a_s * sig(a_s x) * (1 - sig(a_s x))``.
    """
    sig = special.expit(a_s * x.data)
    out = sig if smooth_forward else (x.data >= 0).astype(np.float64)
    deriv = a_s * sig * (1.0 - sig)
    return _emit("spike", (x,), out, lambda g: (g * deriv,))


def lif_step(state: LifState, current: Tensor, cfg: LifConfig) -> LifState:
    """One decay-integrate-fire update with hard reset of neurons that fired."""
    if state.v.shape != current.shape or state.s.shape != current.shape:
        raise DimensionError(
            f"lif_step: state {state.v.shape}/{state.s.shape} vs input {current.shape}")
    if cfg.detach_reset:
        keep = Tensor(1.0 - state.s.data)
    else:
        keep = sub(Tensor(np.ones(state.s.shape)), state.s)
    v = add(mul(scale(state.v, cfg.decay), keep), current)
    s = surrogate_heaviside(sub(v, Tensor(np.full(v.shape, cfg.threshold))),
                            cfg.surrogate_slope, cfg.smooth_forward)
    return LifState(v, s)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class SnnNetwork:
    """Spiking MLP: ``sizes = [d, h1, ..., hk, n]``.

    ``params`` holds ``[W1, b1, ..., Wk, bk, W_out, b_out]`` with weights laid
    out as ``(fan_in, fan_out)``.
    """

    sizes: list[int]
    params: list[np.ndarray]
    lif: LifConfig = field(default_factory=LifConfig)

    def __post_init__(self):
        if len(self.sizes) < 3:
            raise ValueError("need an input, at least one hidden layer and a readout")
        if len(self.params) != 2 * (len(self.sizes) - 1):
            raise ValueError("parameter count does not match layer sizes")
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            W, bias = self.params[2 * i], self.params[2 * i + 1]
            if W.shape != (a, b) or bias.shape != (b,):
                raise DimensionError(f"layer {i}: expected W{(a, b)} b{(b,)}, "
                                     f"got W{W.shape} b{bias.shape}")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, lif: LifConfig | None = None) -> SnnNetwork:
        params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            params.append(glorot_uniform(rng, a, b))
            params.append(np.zeros(b))
        return cls(list(sizes), params, lif or LifConfig())

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.sizes) - 2

    def param_names(self) -> list[str]:
        names = []
        for i in range(self.n_hidden_layers):
            names += [f"hidden{i}.weight", f"hidden{i}.bias"]
        return names + ["readout.weight", "readout.bias"]

    def copy(self) -> SnnNetwork:
        return SnnNetwork(list(self.sizes), [p.copy() for p in self.params], self.lif)


def forward_unroll(net: SnnNetwork, x, T: int, params: list[Tensor] | None = None,
                   spike_log: list | None = None) -> list[Tensor]:
    """Run ``T`` timesteps from a zero state and return the logits per step.

    ``params`` lets the caller pass tape-watched copies of ``net.params`` to
    get gradients; by default the weights enter as constants.  When
    ``spike_log`` is a list, one entry per timestep is appended holding the
    spike arrays of each hidden layer.
    """
    if T < 1:
        raise ContractError(f"T must be at least 1, got {T}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise DimensionError(f"input shape {x.shape} does not match {net.n_inputs} features")
    if params is None:
        params = [Tensor(p) for p in net.params]
    batch = x.shape[0]
    L = net.n_hidden_layers
    states = [LifState.zeros((batch, net.sizes[i + 1])) for i in range(L)]
    W_out, b_out = params[-2], params[-1]
    # Direct encoding: the first-layer current is identical at every step.
    first_current = add(matmul(x, params[0]), params[1])
    outputs = []
    for _ in range(T):
        h = None
        for i in range(L):
            current = first_current if i == 0 else add(matmul(h, params[2 * i]), params[2 * i + 1])
            states[i] = lif_step(states[i], current, net.lif)
            h = states[i].s
        if spike_log is not None:
            spike_log.append([st.s.data.copy() for st in states])
        outputs.append(add(matmul(h, W_out), b_out))
    return outputs
