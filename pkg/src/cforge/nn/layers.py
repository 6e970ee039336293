"""Fully connected building blocks for the generator and critic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from . import autodiff as ad
from .autodiff import Tensor

BN_MOMENTUM = 0.9
BN_EPS = 1e-6


@dataclass(frozen=True)
class MlpConfig:
    """Hidden-layer layout of a multilayer perceptron.

    ``activation`` is ``"relu"`` or ``"leaky_relu"``; ``leaky_alpha`` is only
    read for the latter.
    """

    layer_widths: tuple[int, ...] = (128, 64, 32)
    activation: str = "relu"
    leaky_alpha: float = 0.2
    batch_norm: bool = False
    dropout_rate: float = 0.0

    def __post_init__(self):
        if len(self.layer_widths) < 1 or any(int(w) < 1 for w in self.layer_widths):
            raise ContractError("MlpConfig needs at least one positive hidden width")
        if self.activation not in ("relu", "leaky_relu"):
            raise ContractError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError("dropout_rate must lie in [0, 1)")


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.W = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, size=(n_out,)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.affine(x, self.W, self.b)

    def parameters(self) -> list[Tensor]:
        return [self.W, self.b]


class BatchNorm:
    def __init__(self, width: int):
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)

    def __call__(self, x: Tensor, train: bool, update_running: bool = True) -> Tensor:
        return ad.batch_norm(
            x,
            self.gamma,
            self.beta,
            train,
            self.running_mean,
            self.running_var,
            momentum=BN_MOMENTUM,
            eps=BN_EPS,
            update_running=update_running,
        )

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]


@dataclass
class Mlp:
    """Linear -> [batch norm] -> activation -> [dropout] per hidden layer,
    followed by a linear read-out."""

    config: MlpConfig
    n_in: int
    n_out: int
    linears: list[Linear] = field(default_factory=list)
    norms: list[BatchNorm] = field(default_factory=list)

    @classmethod
    def build(cls, config: MlpConfig, n_in: int, n_out: int, rng: np.random.Generator) -> "Mlp":
        widths = [n_in, *config.layer_widths, n_out]
        linears = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        norms = [BatchNorm(w) for w in config.layer_widths] if config.batch_norm else []
        return cls(config, n_in, n_out, linears, norms)

    def dropout_masks(self, n_rows: int, rng: np.random.Generator) -> list[np.ndarray] | None:
        p = self.config.dropout_rate
        if p == 0.0:
            return None
        return [ad.dropout_mask((n_rows, w), p, rng) for w in self.config.layer_widths]

    def __call__(
        self,
        x: Tensor,
        train: bool = False,
        masks: list[np.ndarray] | None = None,
        update_running: bool = True,
    ) -> Tensor:
        """Forward pass.

        Dropout is active only when ``train`` is set and ``masks`` are given;
        callers draw masks with :meth:`dropout_masks` so that paired batches
        can share them.
        """
        cfg = self.config
        h = x
        for i, lin in enumerate(self.linears[:-1]):
            h = lin(h)
            if self.norms:
                h = self.norms[i](h, train, update_running)
            if cfg.activation == "relu":
                h = ad.relu(h)
            else:
                h = ad.leaky_relu(h, cfg.leaky_alpha)
            if train and masks is not None:
                h = ad.mask_mul(h, masks[i])
        return self.linears[-1](h)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for i, lin in enumerate(self.linears):
            params.extend(lin.parameters())
            if i < len(self.norms):
                params.extend(self.norms[i].parameters())
        return params

    def buffers(self) -> list[np.ndarray]:
        out = []
        for bn in self.norms:
            out.extend([bn.running_mean, bn.running_var])
        return out
