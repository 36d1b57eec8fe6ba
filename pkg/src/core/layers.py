"""Building blocks shared by the frozen backbone, the text encoder and the video contextualizer."""

import math
from typing import Iterator, Optional

import numpy as np

from src.core.lora import LoraAdapter, effective_forward
from src.core.tensor import (
    Parameter,
    Tensor,
    gelu,
    get_default_dtype,
    layer_norm,
    matmul,
    reshape,
    softmax,
    swapaxes,
)


class Module:
    """Container that owns named parameters and child modules, in registration order"""

    def __init__(self):
        self._params: list[Parameter] = []
        self._children: list["Module"] = []

    def add_parameter(self, param: Parameter) -> Parameter:
        self._params.append(param)
        return param

    def add_module(self, module: "Module") -> "Module":
        self._children.append(module)
        return module

    def parameters(self) -> Iterator[Parameter]:
        yield from self._params
        for child in self._children:
            yield from child.parameters()

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for p in self.parameters():
            yield p.name, p

    def freeze(self) -> None:
        for p in self.parameters():
            p.freeze()

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.unfreeze()


def normal(rng: np.random.Generator, shape: tuple, std: float) -> np.ndarray:
    return rng.normal(0.0, std, shape).astype(get_default_dtype())


class Linear(Module):
    """y = x @ W.T + b, with an optional LoRA adapter on W"""

    def __init__(
        self,
        name: str,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        std: Optional[float] = None,
        bias: bool = True,
        frozen: bool = False,
    ):
        super().__init__()
        std = 1.0 / math.sqrt(d_in) if std is None else std
        self.weight = self.add_parameter(
            Parameter(name, normal(rng, (d_out, d_in), std), frozen=frozen)
        )
        self.bias = (
            self.add_parameter(
                Parameter(f"{name}.bias", np.zeros(d_out, dtype=get_default_dtype()), frozen=frozen)
            )
            if bias
            else None
        )
        self.adapter: Optional[LoraAdapter] = None

    def __call__(self, x: Tensor) -> Tensor:
        out = effective_forward(self.weight, self.adapter, x)
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, name: str, dim: int, frozen: bool = False):
        super().__init__()
        dtype = get_default_dtype()
        self.gamma = self.add_parameter(Parameter(f"{name}.gamma", np.ones(dim, dtype=dtype), frozen=frozen))
        self.beta = self.add_parameter(Parameter(f"{name}.beta", np.zeros(dim, dtype=dtype), frozen=frozen))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class TransformerBlock(Module):
    """Pre-norm encoder block: x + attn(ln1(x)), then x + mlp(ln2(x))"""

    def __init__(
        self,
        name: str,
        dim: int,
        heads: int,
        mlp_ratio: int,
        rng: np.random.Generator,
        std: float = 0.02,
        frozen: bool = False,
    ):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} is not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.ln1 = self.add_module(LayerNorm(f"{name}.ln1", dim, frozen))
        self.q = self.add_module(Linear(f"{name}.attn.q", dim, dim, rng, std, frozen=frozen))
        self.k = self.add_module(Linear(f"{name}.attn.k", dim, dim, rng, std, frozen=frozen))
        self.v = self.add_module(Linear(f"{name}.attn.v", dim, dim, rng, std, frozen=frozen))
        self.o = self.add_module(Linear(f"{name}.attn.o", dim, dim, rng, std, frozen=frozen))
        self.ln2 = self.add_module(LayerNorm(f"{name}.ln2", dim, frozen))
        self.fc = self.add_module(Linear(f"{name}.mlp.fc", dim, dim * mlp_ratio, rng, std, frozen=frozen))
        self.proj = self.add_module(Linear(f"{name}.mlp.proj", dim * mlp_ratio, dim, rng, std, frozen=frozen))

    def linears(self) -> Iterator[tuple[str, Linear]]:
        for weight_type in ("q", "k", "v", "o", "fc", "proj"):
            yield weight_type, getattr(self, weight_type)

    def _split_heads(self, x: Tensor) -> Tensor:
        shape = x.shape[:-1] + (self.heads, self.head_dim)
        return swapaxes(reshape(x, shape), -2, -3)

    def attention(self, x: Tensor) -> Tensor:
        q = self._split_heads(self.q(x))
        k = self._split_heads(self.k(x))
        v = self._split_heads(self.v(x))
        scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.head_dim))
        mixed = swapaxes(matmul(softmax(scores, axis=-1), v), -2, -3)
        return self.o(reshape(mixed, x.shape))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attention(self.ln1(x))
        return x + self.proj(gelu(self.fc(self.ln2(x))))


class TransformerEncoder(Module):
    def __init__(
        self,
        name: str,
        depth: int,
        dim: int,
        heads: int,
        mlp_ratio: int,
        rng: np.random.Generator,
        frozen: bool = False,
    ):
        super().__init__()
        self.blocks = [
            self.add_module(TransformerBlock(f"{name}.block{i}", dim, heads, mlp_ratio, rng, frozen=frozen))
            for i in range(depth)
        ]

    def linears(self) -> Iterator[tuple[str, Linear]]:
        for block in self.blocks:
            yield from block.linears()

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x
