"""Non-spiking ReLU MLP used as the distillation teacher."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .snn import glorot_uniform
from .tensor import DimensionError, Tensor, add, matmul, relu


@dataclass
class TeacherModel:
    sizes: list[int]
    params: list[np.ndarray]

    def __post_init__(self):
        if len(self.params) != 2 * (len(self.sizes) - 1):
            raise ValueError("parameter count does not match layer sizes")
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if self.params[2 * i].shape != (a, b) or self.params[2 * i + 1].shape != (b,):
                raise DimensionError(f"teacher layer {i} has inconsistent shapes")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> TeacherModel:
        params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            params += [glorot_uniform(rng, a, b), np.zeros(b)]
        return cls(list(sizes), params)

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    def param_names(self) -> list[str]:
        return [f"layer{i}.{k}" for i in range(len(self.sizes) - 1) for k in ("weight", "bias")]

    def forward(self, x, params: list[Tensor] | None = None) -> Tensor:
        if params is None:
            params = [Tensor(p) for p in self.params]
        h = x if isinstance(x, Tensor) else Tensor(x)
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            h = add(matmul(h, params[2 * i]), params[2 * i + 1])
            if i < n_layers - 1:
                h = relu(h)
        return h

    def logits(self, x) -> np.ndarray:
        return self.forward(x).data
