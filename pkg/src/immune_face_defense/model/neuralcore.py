"""Declarative networks for the antigen analyzer and the selection head.

Architectures are JSON-compatible lists of layer descriptors, for example::

    [
        {"type": "conv", "out_channels": 8, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "flatten"},
        {"type": "dense", "out_features": 64},
    ]

Supported layer types are ``conv``, ``dense``, ``tanh``, ``relu``, ``sigmoid``,
``avgpool``, ``maxpool`` and ``flatten``. Images enter as ``B x H x W`` rasters
and gain a channel axis internally. Every layer checks its activation for
non-finite values so a diverging run names the layer that broke.
"""

import copy
import logging
from collections import OrderedDict
from collections.abc import Callable, Iterable, Sequence

import torch
from torch import nn

from immune_face_defense.errors import NonFiniteError

logger = logging.getLogger(__name__)

LayerSpec = dict
ArchitectureSpec = list[LayerSpec]

PROBABILITY_CLIP = 1e-7

SHIPPED_ARCHITECTURES: dict[str, ArchitectureSpec] = {
    "conv_small": [
        {"type": "conv", "out_channels": 8, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "conv", "out_channels": 16, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "flatten"},
        {"type": "dense", "out_features": "output"},
    ],
    "conv_deep": [
        {"type": "conv", "out_channels": 8, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "conv", "out_channels": 16, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "conv", "out_channels": 32, "kernel_size": 3},
        {"type": "tanh"},
        {"type": "avgpool", "kernel_size": 2},
        {"type": "flatten"},
        {"type": "dense", "out_features": 128},
        {"type": "tanh"},
        {"type": "dense", "out_features": "output"},
    ],
    "mlp": [
        {"type": "flatten"},
        {"type": "dense", "out_features": 128},
        {"type": "tanh"},
        {"type": "dense", "out_features": "output"},
    ],
}

_ACTIVATIONS: dict[str, Callable[[], nn.Module]] = {
    "tanh": nn.Tanh,
    "relu": nn.ReLU,
    "sigmoid": nn.Sigmoid,
}


def resolve_architecture(
    architecture: str | Sequence[LayerSpec], output_dim: int
) -> ArchitectureSpec:
    """Look up a shipped architecture by name and fill in its output width.

    Args:
        architecture: Name in ``SHIPPED_ARCHITECTURES`` or an explicit layer list
        output_dim: Width substituted for ``"output"`` placeholders

    Returns:
        A fresh layer list safe to mutate
    """
    if isinstance(architecture, str):
        if architecture not in SHIPPED_ARCHITECTURES:
            raise ValueError(
                f"Unknown architecture '{architecture}', "
                f"expected one of {sorted(SHIPPED_ARCHITECTURES)}"
            )
        architecture = SHIPPED_ARCHITECTURES[architecture]
    layers = copy.deepcopy(list(architecture))
    for layer in layers:
        if layer.get("out_features") == "output":
            layer["out_features"] = output_dim
    return layers


def infer_output_shape(
    architecture: Sequence[LayerSpec], input_shape: tuple[int, int]
) -> tuple[int, ...]:
    """Shape of one sample after every layer, without building tensors.

    Raises:
        ValueError: For unknown layer types or shapes a layer cannot accept
    """
    shape: tuple[int, ...] = (1, *input_shape)
    for index, layer in enumerate(architecture):
        kind = layer.get("type")
        if kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"Layer {index} (conv) needs a spatial input, got {shape}")
            kernel = int(layer.get("kernel_size", 3))
            stride = int(layer.get("stride", 1))
            padding = int(layer.get("padding", kernel // 2))
            height = (shape[1] + 2 * padding - kernel) // stride + 1
            width = (shape[2] + 2 * padding - kernel) // stride + 1
            shape = (int(layer["out_channels"]), height, width)
        elif kind in ("avgpool", "maxpool"):
            if len(shape) != 3:
                raise ValueError(f"Layer {index} ({kind}) needs a spatial input, got {shape}")
            kernel = int(layer.get("kernel_size", 2))
            stride = int(layer.get("stride", kernel))
            shape = (shape[0], (shape[1] - kernel) // stride + 1, (shape[2] - kernel) // stride + 1)
        elif kind == "flatten":
            total = 1
            for size in shape:
                total *= size
            shape = (total,)
        elif kind == "dense":
            if len(shape) != 1:
                raise ValueError(
                    f"Layer {index} (dense) needs a flat input, got {shape}; add a flatten layer"
                )
            shape = (int(layer["out_features"]),)
        elif kind in _ACTIVATIONS:
            continue
        else:
            raise ValueError(f"Layer {index} has unknown type '{kind}'")
        if any(size <= 0 for size in shape):
            raise ValueError(f"Layer {index} ({kind}) collapses the shape to {shape}")
    return shape


def _build_layer(layer: LayerSpec, shape: tuple[int, ...]) -> nn.Module:
    kind = layer["type"]
    if kind == "conv":
        kernel = int(layer.get("kernel_size", 3))
        return nn.Conv2d(
            shape[0],
            int(layer["out_channels"]),
            kernel_size=kernel,
            stride=int(layer.get("stride", 1)),
            padding=int(layer.get("padding", kernel // 2)),
        )
    if kind == "avgpool":
        kernel = int(layer.get("kernel_size", 2))
        return nn.AvgPool2d(kernel, stride=int(layer.get("stride", kernel)))
    if kind == "maxpool":
        kernel = int(layer.get("kernel_size", 2))
        return nn.MaxPool2d(kernel, stride=int(layer.get("stride", kernel)))
    if kind == "flatten":
        return nn.Flatten()
    if kind == "dense":
        return nn.Linear(shape[0], int(layer["out_features"]))
    return _ACTIVATIONS[kind]()


def _finite_hook(name: str) -> Callable:
    def hook(module: nn.Module, inputs: tuple, output: torch.Tensor) -> None:
        if not torch.isfinite(output).all():
            raise NonFiniteError(f"Non-finite activation in layer '{name}'")

    return hook


def build_network(
    architecture: Sequence[LayerSpec], input_shape: tuple[int, int], seed: int
) -> nn.Sequential:
    """Instantiate a layer list with seeded initialisation.

    Layers are named ``<index>_<type>`` so diagnostics can point at them.
    """
    infer_output_shape(architecture, input_shape)
    modules: OrderedDict[str, nn.Module] = OrderedDict()
    shape: tuple[int, ...] = (1, *input_shape)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for index, layer in enumerate(architecture):
            name = f"{index}_{layer['type']}"
            module = _build_layer(layer, shape)
            module.register_forward_hook(_finite_hook(name))
            modules[name] = module
            shape = infer_output_shape(architecture[: index + 1], input_shape)
    return nn.Sequential(modules)


class ImageNet(nn.Module):
    """A declarative network applied to ``H x W`` or ``B x H x W`` rasters."""

    def __init__(
        self,
        architecture: Sequence[LayerSpec],
        input_shape: tuple[int, int],
        seed: int = 0,
    ) -> None:
        super().__init__()
        output_shape = infer_output_shape(architecture, input_shape)
        if len(output_shape) != 1:
            raise ValueError(
                f"Architecture must end in a flat output, ends in shape {output_shape}"
            )
        self.architecture = list(architecture)
        self.input_shape = tuple(input_shape)
        self.output_dim = int(output_shape[0])
        self.layers = build_network(architecture, self.input_shape, seed)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if tuple(images.shape[-2:]) != self.input_shape:
            raise ValueError(
                f"Input shape {tuple(images.shape[-2:])} does not match {self.input_shape}"
            )
        single = images.ndim == 2
        batch = images.unsqueeze(0) if single else images
        dtype = next(self.parameters()).dtype
        features = self.layers(batch.unsqueeze(1).to(dtype))
        return features[0] if single else features


class AnalyzerNet(ImageNet):
    """Antigen analyzer: maps an image to its noise feature ``f_n``."""

    @property
    def d_n(self) -> int:
        return self.output_dim


class SelectionHead(nn.Module):
    """Affine map ``d_n -> d_e`` squashed to selection probabilities.

    Outputs are clipped to ``[1e-7, 1 - 1e-7]`` so Bernoulli log-likelihoods of
    sampled antibodies stay finite.
    """

    def __init__(self, d_n: int, d_e: int, seed: int = 0) -> None:
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.affine = nn.Linear(d_n, d_e)
        self.affine.register_forward_hook(_finite_hook("selection_head"))

    @property
    def d_n(self) -> int:
        return self.affine.in_features

    @property
    def d_e(self) -> int:
        return self.affine.out_features

    def logits(self, f_hat: torch.Tensor) -> torch.Tensor:
        if f_hat.shape[-1] != self.d_n:
            raise ValueError(f"Selection head expects d_n={self.d_n}, got {f_hat.shape[-1]}")
        return self.affine(f_hat.to(self.affine.weight.dtype))

    def forward(self, f_hat: torch.Tensor) -> torch.Tensor:
        return clip_probabilities(torch.sigmoid(self.logits(f_hat)))


def clip_probabilities(probabilities: torch.Tensor) -> torch.Tensor:
    return probabilities.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)


def analyzer_forward(net: AnalyzerNet, image: torch.Tensor) -> torch.Tensor:
    """Noise feature ``f_n = H(x)``."""
    return net(image)


def selection_forward(head: SelectionHead, f_hat: torch.Tensor) -> torch.Tensor:
    """Selection probabilities ``f_e = sigmoid(G(f_hat))``."""
    return head(f_hat)


def named_parameters(modules: Iterable[nn.Module] | nn.Module) -> list[tuple[str, nn.Parameter]]:
    if isinstance(modules, nn.Module):
        modules = [modules]
    named = []
    for position, module in enumerate(modules):
        for name, parameter in module.named_parameters():
            if parameter.requires_grad:
                named.append((f"{position}.{name}", parameter))
    return named


def grad_params(
    modules: Iterable[nn.Module] | nn.Module,
    objective: Callable[[], torch.Tensor],
) -> dict[str, torch.Tensor]:
    """Exact gradient of a scalar objective for every trainable parameter.

    Args:
        modules: Modules whose parameters the gradient is taken against
        objective: Zero-argument callable returning a scalar tensor built from
            the modules' forwards

    Returns:
        Mapping ``"<module index>.<parameter name>"`` to a gradient shaped like
        the parameter; parameters the objective does not touch get zeros

    Raises:
        NonFiniteError: If the objective or any gradient is not finite
    """
    named = named_parameters(modules)
    value = objective()
    if value.numel() != 1:
        raise ValueError(f"Objective must be scalar, got shape {tuple(value.shape)}")
    if not torch.isfinite(value):
        raise NonFiniteError(f"Non-finite objective value {float(value)}")
    if not value.requires_grad:
        return {name: torch.zeros_like(parameter) for name, parameter in named}
    grads = torch.autograd.grad(
        value, [parameter for _, parameter in named], allow_unused=True
    )
    result = {}
    for (name, parameter), grad in zip(named, grads):
        grad = torch.zeros_like(parameter) if grad is None else grad
        if not torch.isfinite(grad).all():
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")
        result[name] = grad
    return result


def grad_input(
    pipeline: Callable[[torch.Tensor], torch.Tensor], image: torch.Tensor
) -> torch.Tensor:
    """Exact gradient of ``pipeline(image)`` (a scalar) with respect to the pixels."""
    pixels = image.detach().clone().requires_grad_(True)
    value = pipeline(pixels)
    if value.numel() != 1:
        raise ValueError(f"Objective must be scalar, got shape {tuple(value.shape)}")
    if not torch.isfinite(value):
        raise NonFiniteError(f"Non-finite objective value {float(value)}")
    if not value.requires_grad:
        return torch.zeros_like(pixels)
    (grad,) = torch.autograd.grad(value, pixels, allow_unused=True)
    if grad is None:
        return torch.zeros_like(pixels)
    if not torch.isfinite(grad).all():
        raise NonFiniteError("Non-finite gradient with respect to the input image")
    return grad
