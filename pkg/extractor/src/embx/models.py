"""Backbone registry: preprocessing constants and weight loading per model.

All models take 3x224x224 inputs. The ViT-family models normalize with the
ImageNet statistics; the RadImageNet ResNet50 uses 0.5 mean / 0.5 std.
Weights must be available locally: loaders never download.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import torch

INPUT_SIZE = 224

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
HALF_MEAN = (0.5, 0.5, 0.5)
HALF_STD = (0.5, 0.5, 0.5)


class MissingWeightsError(RuntimeError):
    """Raised when a model's weights are not available locally."""


@dataclass(frozen=True)
class ModelSpec:
    name: str
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    input_size: int = INPUT_SIZE


class Backbone:
    """A loaded feature extractor: spec plus a batch -> features function."""

    def __init__(self, spec: ModelSpec, module: torch.nn.Module,
                 forward: Callable[[torch.Tensor], torch.Tensor]):
        self.spec = spec
        self._module = module.eval()
        self._forward = forward

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> torch.Tensor:
        """(n, 3, 224, 224) -> (n, dim) float32 global features."""
        out = self._forward(batch)
        return out.reshape(out.shape[0], -1).float()


def _load_state_dict(weights: str | Path | None, name: str) -> dict:
    if weights is None:
        raise MissingWeightsError(
            f"model {name!r} needs local weights; pass --weights <state_dict.pt>"
        )
    path = Path(weights)
    if not path.exists():
        raise MissingWeightsError(f"weights file not found: {path}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    return state


def _load_resnet50(spec: ModelSpec, weights) -> Backbone:
    from torchvision.models import resnet50

    model = resnet50(weights=None)
    model.load_state_dict(_load_state_dict(weights, spec.name))
    # Global feature: pooled output ahead of the classifier head.
    model.fc = torch.nn.Identity()
    return Backbone(spec, model, model)


def _load_swin(spec: ModelSpec, weights) -> Backbone:
    from torchvision.models import swin_t

    model = swin_t(weights=None)
    model.load_state_dict(_load_state_dict(weights, spec.name))
    model.head = torch.nn.Identity()
    return Backbone(spec, model, model)


def _load_hub(repo: str, entry: str):
    def loader(spec: ModelSpec, weights) -> Backbone:
        # torch.hub may only be used against an existing local cache; any
        # download attempt or miss surfaces as missing weights.
        try:
            model = torch.hub.load(repo, entry, trust_repo=True)
        except Exception as exc:
            raise MissingWeightsError(
                f"model {spec.name!r} is loaded via torch.hub ({repo}:{entry}); "
                f"no local copy was found: {exc}"
            ) from None
        return Backbone(spec, model, model)

    return loader


_REGISTRY: dict[str, tuple[ModelSpec, Callable]] = {
    "dinov1": (
        ModelSpec("dinov1", IMAGENET_MEAN, IMAGENET_STD),
        _load_hub("facebookresearch/dino:main", "dino_vits16"),
    ),
    "dinov2": (
        ModelSpec("dinov2", IMAGENET_MEAN, IMAGENET_STD),
        _load_hub("facebookresearch/dinov2", "dinov2_vitb14"),
    ),
    "dreamsim": (
        ModelSpec("dreamsim", IMAGENET_MEAN, IMAGENET_STD),
        _load_hub("ssundaram21/dreamsim", "dreamsim"),
    ),
    "radimagenet_resnet50": (
        ModelSpec("radimagenet_resnet50", HALF_MEAN, HALF_STD),
        _load_resnet50,
    ),
    "radimagenet_swin": (
        ModelSpec("radimagenet_swin", IMAGENET_MEAN, IMAGENET_STD),
        _load_swin,
    ),
}

MODEL_NAMES = tuple(_REGISTRY)


def model_spec(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name][0]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}") from None


def load_backbone(name: str, weights: str | Path | None = None) -> Backbone:
    spec, loader = _REGISTRY.get(name, (None, None))
    if spec is None:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
    return loader(spec, weights)
