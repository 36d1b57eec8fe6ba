import logging
from typing import Sequence

import numpy as np

from src.core.tensor import Parameter
from src.storage.checkpoint import decode_counter, encode_counter

logger = logging.getLogger(__name__)


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
    step_index: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One decoupled-weight-decay Adam update.

    Args:
        param: Current parameter values
        grad: Gradient of the loss with respect to ``param``
        m: First-moment estimate from the previous step
        v: Second-moment estimate from the previous step
        step_index: 1-based index of this step, used for bias correction

    Returns:
        Tuple of (new_param, new_m, new_v)
    """
    dtype = param.dtype
    m = (beta1 * m + (1.0 - beta1) * grad).astype(dtype)
    v = (beta2 * v + (1.0 - beta2) * grad * grad).astype(dtype)
    m_hat = m / (1.0 - beta1**step_index)
    v_hat = v / (1.0 - beta2**step_index)
    decayed = param - lr * weight_decay * param
    new_param = (decayed - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(dtype)
    return new_param, m, v


class AdamW:
    """AdamW over the trainable subset of a parameter list"""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-6,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if lr <= 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        self.params = [p for p in params if not p.frozen]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_index = 0
        self.moments = {
            p.name: (np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params
        }

    def step(self) -> None:
        self.step_index += 1
        for p in self.params:
            if p.grad is None:
                continue
            m, v = self.moments[p.name]
            p.data, m, v = adamw_step(
                p.data,
                p.grad,
                m,
                v,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                self.weight_decay,
                self.step_index,
            )
            self.moments[p.name] = (m, v)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"optim.step": encode_counter(self.step_index)}
        for name, (m, v) in self.moments.items():
            state[f"optim.m.{name}"] = m
            state[f"optim.v.{name}"] = v
        return state

    def load_state_dict(self, state: dict) -> None:
        self.step_index = decode_counter(state["optim.step"])
        for p in self.params:
            m = state.get(f"optim.m.{p.name}")
            v = state.get(f"optim.v.{p.name}")
            if m is None or v is None:
                logger.warning(f"No optimizer moments stored for {p.name}; starting from zero")
                continue
            self.moments[p.name] = (
                np.asarray(m, dtype=p.dtype).reshape(p.shape),
                np.asarray(v, dtype=p.dtype).reshape(p.shape),
            )
