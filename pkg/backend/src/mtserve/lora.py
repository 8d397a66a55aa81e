"""Low-rank adapters over the linear layers of a frozen base model."""

from __future__ import annotations

import json
import math
import os

import torch
from torch import nn


class LoRALinear(nn.Module):
    """y = base(x) + (alpha / rank) * x A^T B^T with the base frozen.

    B starts at zero so the wrapped layer is exactly the base layer until
    training moves it.
    """

    def __init__(self, base: nn.Linear, rank: int, alpha: float) -> None:
        super().__init__()
        if rank < 1:
            raise ValueError("rank must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        for param in self.base.parameters():
            param.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        delta = (x @ self.lora_a.t()) @ self.lora_b.t()
        return self.base(x) + self.scaling * delta


def apply_lora(model: nn.Module, rank: int, alpha: float) -> list[str]:
    """Freeze the model and wrap every nn.Linear it contains.

    Returns the dotted names of the wrapped layers. The multihead in-proj
    weights are plain parameters, not Linear modules, so they stay frozen;
    out_proj and the feed-forward linears carry the adaptation.
    """
    for param in model.parameters():
        param.requires_grad_(False)
    targets = [
        name
        for name, module in model.named_modules()
        if isinstance(module, nn.Linear)
    ]
    for name in targets:
        parent, _, leaf = name.rpartition(".")
        holder = model.get_submodule(parent) if parent else model
        base = getattr(holder, leaf)
        setattr(holder, leaf, LoRALinear(base, rank, alpha))
    return targets


def trainable_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def adapter_state(model: nn.Module) -> dict[str, torch.Tensor]:
    state = {}
    for name, module in model.named_modules():
        if isinstance(module, LoRALinear):
            state[f"{name}.lora_a"] = module.lora_a.detach().clone()
            state[f"{name}.lora_b"] = module.lora_b.detach().clone()
    return state


def save_adapters(model: nn.Module, rank: int, alpha: float, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "rank": rank,
        "alpha": alpha,
        "targets": [
            name
            for name, module in model.named_modules()
            if isinstance(module, LoRALinear)
        ],
    }
    with open(os.path.join(out_dir, "adapter_config.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")
    torch.save(adapter_state(model), os.path.join(out_dir, "adapter_weights.pt"))


def load_adapters(model: nn.Module, adapter_dir: str) -> None:
    """Wrap the model's linears and load trained A/B matrices into them."""
    with open(
        os.path.join(adapter_dir, "adapter_config.json"), encoding="utf-8"
    ) as fh:
        meta = json.load(fh)
    apply_lora(model, int(meta["rank"]), float(meta["alpha"]))
    state = torch.load(
        os.path.join(adapter_dir, "adapter_weights.pt"),
        map_location="cpu",
        weights_only=True,
    )
    modules = dict(model.named_modules())
    for key, tensor in state.items():
        name, _, which = key.rpartition(".")
        module = modules[name]
        if not isinstance(module, LoRALinear):
            raise ValueError(f"adapter state names a non-LoRA layer: {name}")
        getattr(module, which).data.copy_(tensor)
