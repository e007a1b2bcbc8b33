"""Descriptor backends: a 4096-dim fc-layer network over image regions.

Each region (the whole frame, or a part crop) is resized to the network's
input resolution and pushed through a standard image-classification
network up to the first fully-connected layer; that 4096-dim activation
is the descriptor.  Two weight sources exist:

``pretrained``
    ImageNet-trained weights fetched through the deep-learning stack's
    normal weight cache.  This is the backend that produces descriptors
    worth retrieving with.

``seeded``
    The same architecture with deterministically seeded random weights.
    Needs no weight download, so it works in sealed environments and
    keeps tests and pipeline dry-runs reproducible — but it is untrained,
    and its descriptors carry no semantics.

Both are deterministic in inference mode: the same inputs yield the same
bytes.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BackendUnavailableError, ParameterError
from .proposals import Box

DESCRIPTOR_DIM = 4096
_INPUT_SIZE = 224
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

_INSTALL_HINT = (
    "descriptor backend unavailable: {cause}. Install the network stack with "
    "`pip install torch torchvision` and, for the pretrained backend, make "
    "sure the weight cache is reachable (or populate TORCH_HOME offline); "
    "`--backend seeded` runs without any weight download."
)


def _import_torch():
    try:
        import torch
        import torchvision
    except ImportError as e:
        raise BackendUnavailableError(_INSTALL_HINT.format(cause=e)) from e
    return torch, torchvision


@dataclass
class DescriptorBackend:
    """A loaded network ready to embed image regions."""

    name: str
    dim: int
    _torch: Any = field(repr=False)
    _model: Any = field(repr=False)

    def embed_regions(self, image: np.ndarray, boxes: list[Box]) -> np.ndarray:
        """Descriptors for the whole image followed by each box crop.

        Returns a (1 + len(boxes), dim) float32 matrix; row 0 is the
        image-level descriptor.
        """
        if image.ndim != 3 or image.shape[2] != 3:
            raise ParameterError(f"expected an (H, W, 3) image, got shape {image.shape}")
        height, width = image.shape[:2]
        regions = [image]
        for left, top, w, h in boxes:
            l, t, w, h = int(left), int(top), int(w), int(h)
            if w <= 0 or h <= 0 or l < 0 or t < 0 or l + w > width or t + h > height:
                raise ParameterError(
                    f"box {(left, top, w, h)} outside {width}x{height} image"
                )
            regions.append(image[t : t + h, l : l + w])
        return self._forward(regions)

    def _forward(self, regions: list[np.ndarray]) -> np.ndarray:
        torch = self._torch
        batch = torch.empty((len(regions), 3, _INPUT_SIZE, _INPUT_SIZE))
        with torch.no_grad():
            for i, region in enumerate(regions):
                x = torch.from_numpy(
                    np.ascontiguousarray(region, dtype=np.float32) / 255.0
                ).permute(2, 0, 1)[None]
                batch[i] = torch.nn.functional.interpolate(
                    x, size=(_INPUT_SIZE, _INPUT_SIZE),
                    mode="bilinear", align_corners=False,
                )[0]
            batch -= torch.from_numpy(_MEAN)[None, :, None, None]
            batch /= torch.from_numpy(_STD)[None, :, None, None]
            out = self._model(batch)
        return np.ascontiguousarray(out.numpy(), dtype=np.float32)


def _fc_head(torchvision, torch, weights):
    """The classification network truncated after its first fc activation."""
    net = torchvision.models.alexnet(weights=weights)
    net.eval()
    return torch.nn.Sequential(
        net.features,
        net.avgpool,
        torch.nn.Flatten(1),
        net.classifier[1],  # the 4096-dim fully-connected layer
        torch.nn.ReLU(),
    ).eval()


def load_backend(name: str = "pretrained", seed: int = 0) -> DescriptorBackend:
    """Construct a descriptor backend, failing fast if it cannot run."""
    torch, torchvision = _import_torch()
    if name == "pretrained":
        try:
            weights = torchvision.models.AlexNet_Weights.IMAGENET1K_V1
            model = _fc_head(torchvision, torch, weights)
        except Exception as e:  # weight fetch/cache failures surface here
            raise BackendUnavailableError(_INSTALL_HINT.format(cause=e)) from e
    elif name == "seeded":
        if seed < 0:
            raise ParameterError(f"seed must be non-negative, got {seed}")
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            model = _fc_head(torchvision, torch, None)
    else:
        raise ParameterError(f"unknown backend {name!r} (choose pretrained or seeded)")
    for p in model.parameters():
        p.requires_grad_(False)
    return DescriptorBackend(name=name, dim=DESCRIPTOR_DIM, _torch=torch, _model=model)


def extract_descriptors(
    image: np.ndarray, boxes: list[Box], backend: DescriptorBackend
) -> np.ndarray:
    """(1 + K, 4096) float32 descriptors: whole image first, then each box."""
    return backend.embed_regions(image, boxes)
