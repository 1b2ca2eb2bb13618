"""Adam optimizer over named parameter sets."""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .errors import ContractError
from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction.

    Parameters are a name -> Tensor mapping; moments are kept per name so the
    whole state can be checkpointed. Gradients are zeroed after each step.
    """

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 2e-4,
        betas: Tuple[float, float] = (0.5, 0.999),
        eps: float = 1e-8,
    ):
        if not 0.0 < betas[0] < 1.0 or not 0.0 < betas[1] < 1.0:
            raise ContractError(f"betas must lie in (0, 1), got {betas}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        missing = [k for k, p in self.params.items() if p.grad is None]
        if missing:
            raise ContractError(f"adam step with missing gradient for {missing[0]}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - update.astype(p.data.dtype, copy=False)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
