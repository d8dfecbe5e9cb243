"""Neural building blocks on top of core.autodiff.

Scalar features have shape [..., f]; vector features have shape [..., c, 3]
with the spatial axis last. Nothing in the vector path carries an additive
bias, so vector outputs rotate with their inputs.
"""

from typing import Iterator, List, Optional, Tuple

import numpy as np

from core import autodiff as ad
from core.autodiff import Tensor

ScalarVector = Tuple[Tensor, Optional[Tensor]]


class Module:
    """Parameter container; parameters are discovered in attribute order."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{idx}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))


def init_weight(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> Tensor:
    """Uniform fan-in scaled weights, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = init_weight(rng, in_dim, (in_dim, out_dim))
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out


class VectorLinear(Module):
    """Channel mixing of vector features: [..., c_in, 3] -> [..., c_out, 3]."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = init_weight(rng, in_dim, (in_dim, out_dim))

    def __call__(self, v: Tensor) -> Tensor:
        return ad.swapaxes(ad.matmul(ad.swapaxes(v, -1, -2), self.weight), -1, -2)


class GVP(Module):
    """Geometric Vector Perceptron.

    v_h = W_h v
    s'  = act(W_m [s ++ |v_h|])
    v'  = sigmoid(W_g s') * (W_mu v_h)
    """

    def __init__(
        self,
        in_dims: Tuple[int, int],
        out_dims: Tuple[int, int],
        rng: np.random.Generator,
        scalar_act: bool = True,
        h_dim: Optional[int] = None,
    ):
        self.si, self.vi = in_dims
        self.so, self.vo = out_dims
        self.scalar_act = scalar_act
        if self.vi:
            self.h_dim = h_dim or max(self.vi, self.vo)
            self.wh = VectorLinear(self.vi, self.h_dim, rng)
            self.ws = Linear(self.si + self.h_dim, self.so, rng)
            if self.vo:
                self.wv = VectorLinear(self.h_dim, self.vo, rng)
                self.wg = Linear(self.so, self.vo, rng)
        else:
            self.ws = Linear(self.si, self.so, rng)

    def __call__(self, s: Tensor, v: Optional[Tensor]) -> ScalarVector:
        if not self.vi:
            s = self.ws(s)
            return (ad.relu(s) if self.scalar_act else s), None

        vh = self.wh(v)
        s = self.ws(ad.concat([s, ad.safe_norm(vh)], axis=-1))
        if self.scalar_act:
            s = ad.relu(s)
        if not self.vo:
            return s, None
        gate = ad.sigmoid(self.wg(s))
        gate = ad.reshape(gate, gate.shape + (1,))
        return s, ad.mul(self.wv(vh), gate)


class LayerNorm(Module):
    """Affine layer norm on scalars; vectors rescaled by their RMS channel norm."""

    def __init__(self, s_dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(s_dim), requires_grad=True)
        self.beta = Tensor(np.zeros(s_dim), requires_grad=True)
        self.eps = eps

    def __call__(self, s: Tensor, v: Optional[Tensor]) -> ScalarVector:
        centered = ad.sub(s, ad.mean(s, -1, keepdims=True))
        var = ad.mean(ad.mul(centered, centered), -1, keepdims=True)
        s = ad.mul(centered, ad.rsqrt(var, self.eps))
        s = ad.add(ad.mul(s, self.gamma), self.beta)
        if v is None:
            return s, None
        channels = v.shape[-2]
        sq = ad.sum(ad.mul(v, v), -1)
        inv = ad.rsqrt(ad.mean(sq, -1, keepdims=True), 1e-8)
        inv = ad.expand(ad.reshape(inv, inv.shape + (1,)), -2, channels)
        return s, ad.mul(v, inv)


def dropout(s: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout on scalar channels."""
    if not training or p <= 0.0 or rng is None:
        return s
    keep = (rng.random(s.shape) >= p) / (1.0 - p)
    return ad.mul(s, ad.constant(keep))


def vector_dropout(v: Optional[Tensor], p: float, rng: Optional[np.random.Generator], training: bool) -> Optional[Tensor]:
    """Drop whole vector channels so the surviving vectors still rotate rigidly."""
    if v is None or not training or p <= 0.0 or rng is None:
        return v
    keep = (rng.random(v.shape[:-1] + (1,)) >= p) / (1.0 - p)
    return ad.mul(v, ad.constant(keep))
