"""Small dense GCN: forward pass, masked cross-entropy, analytic gradients.

The model is one or two graph-convolution layers. Each layer computes
``P_l = A_hat @ H_l @ W_l (+ b_l)``; hidden layers apply the configured
activation, the final layer emits raw logits. Parameters are grouped into
a shared encoder and an optional client-local head (the final layer, in
cross-domain federations) and travel between client and server as flat
vectors with a canonical layer-ordered, row-major layout.

Everything here is pure and double-precision; parameter values returned
from one call are never aliased into another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UnsupportedModelError
from .graphs import NormalizedAdjacency

__all__ = [
    "ModelConfig",
    "Layer",
    "ParameterSet",
    "FlatVector",
    "init_params",
    "forward",
    "masked_cross_entropy",
    "gradient",
    "flatten",
    "unflatten",
    "layer_slices",
    "induced_operator",
]

SHARED = "shared"
LOCAL = "local"


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    in_dim: int
    out_dim: int
    hidden_dim: int = 16
    activation: str = "relu"
    bias: bool = True

    def __post_init__(self):
        if self.n_layers not in (1, 2):
            raise InputError("n_layers must be 1 or 2")
        if self.activation not in ("relu", "identity"):
            raise InputError("activation must be 'relu' or 'identity'")
        if min(self.in_dim, self.out_dim) < 1 or (
            self.n_layers == 2 and self.hidden_dim < 1
        ):
            raise InputError("model dimensions must be positive")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray          # (fan_in, fan_out)
    bias: np.ndarray | None     # (fan_out,) or None
    group: str                  # SHARED or LOCAL

    def size(self) -> int:
        return self.weight.size + (self.bias.size if self.bias is not None else 0)


@dataclass(frozen=True)
class ParameterSet:
    layers: tuple[Layer, ...]

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class LayerSpec:
    """Shape descriptor for one layer inside a flat vector."""

    index: int
    group: str
    w_shape: tuple[int, int]
    b_size: int  # 0 when the layer has no bias

    @property
    def size(self) -> int:
        return self.w_shape[0] * self.w_shape[1] + self.b_size


@dataclass(frozen=True)
class FlatVector:
    """Concatenated parameters of the selected layers, canonical order:
    layers ascending, weight (row-major) then bias within each layer."""

    values: np.ndarray
    layout: tuple[LayerSpec, ...]

    def __post_init__(self):
        expect = sum(s.size for s in self.layout)
        if self.values.shape != (expect,):
            raise InputError(
                f"flat vector length {self.values.shape} does not match layout ({expect})"
            )


def init_params(config: ModelConfig, seed: int, cross_domain: bool = False) -> ParameterSet:
    """Seeded uniform initialization, scale sqrt(6 / (fan_in + fan_out)).

    In cross-domain mode the final layer is tagged as the client-local
    head; everything else is the shared encoder. Biases start at zero.
    RNG order: one uniform draw per layer, ascending.
    """
    rng = np.random.default_rng(seed)
    dims = [config.in_dim]
    if config.n_layers == 2:
        dims.append(config.hidden_dim)
    dims.append(config.out_dim)
    layers = []
    for li in range(config.n_layers):
        fan_in, fan_out = dims[li], dims[li + 1]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_in, fan_out))
        b = np.zeros(fan_out) if config.bias else None
        last = li == config.n_layers - 1
        group = LOCAL if (cross_domain and last) else SHARED
        layers.append(Layer(weight=w, bias=b, group=group))
    if cross_domain and all(l.group == LOCAL for l in layers):
        raise InputError("cross-domain mode needs at least one shared encoder layer")
    return ParameterSet(layers=tuple(layers))


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == "relu" else x


def forward(
    params: ParameterSet,
    adj: NormalizedAdjacency,
    x: np.ndarray,
    activation: str = "relu",
):
    """Run the propagation stack; the last layer output is raw logits.

    Returns ``(activations, messages, preacts)``: activations[0] is the
    input and activations[-1] the logits; messages[l] = A_hat @
    activations[l] and preacts[l] the pre-activation of layer l (both as
    needed by the backward pass).
    """
    if x.shape[0] != adj.n_nodes:
        raise InputError(f"feature rows {x.shape[0]} != adjacency size {adj.n_nodes}")
    h = np.asarray(x, dtype=np.float64)
    activations = [h]
    messages = []
    preacts = []
    n_layers = params.n_layers
    for li, layer in enumerate(params.layers):
        if h.shape[1] != layer.weight.shape[0]:
            raise InputError(
                f"layer {li}: input width {h.shape[1]} != fan_in {layer.weight.shape[0]}"
            )
        m = adj @ h
        p = m @ layer.weight
        if layer.bias is not None:
            p = p + layer.bias
        h = p if li == n_layers - 1 else _activate(p, activation)
        messages.append(m)
        preacts.append(p)
        activations.append(h)
    return activations, messages, preacts


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Mean softmax cross-entropy over masked nodes (log-sum-exp form)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InputError("empty mask")
    z = logits[mask]
    y = labels[mask]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), y]))


def _softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=1, keepdims=True)


def gradient(
    params: ParameterSet,
    adj: NormalizedAdjacency,
    x: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    activation: str = "relu",
    prox_center: FlatVector | None = None,
    mu: float = 0.0,
) -> tuple[float, ParameterSet]:
    """Loss and analytic gradients of masked cross-entropy.

    With ``prox_center`` and ``mu > 0`` the objective gains
    (mu/2) * ||theta - center||^2 over the layers named by the center's
    layout. Gradients come back ParameterSet-shaped, same groups.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InputError("empty mask")
    activations, messages, preacts = forward(params, adj, x, activation)
    logits = activations[-1]
    n_masked = int(mask.sum())

    if not np.all(np.isfinite(logits)):
        # training has diverged; report an infinite loss (the caller
        # decides what to do) without tripping overflow warnings below
        zeros = ParameterSet(layers=tuple(
            Layer(weight=np.zeros_like(l.weight),
                  bias=None if l.bias is None else np.zeros_like(l.bias),
                  group=l.group)
            for l in params.layers
        ))
        return float("inf"), zeros

    loss = masked_cross_entropy(logits, labels, mask)

    g = _softmax(logits)
    g[np.arange(logits.shape[0]), labels] -= 1.0
    g *= mask[:, None] / n_masked

    grads: list[Layer] = [None] * params.n_layers  # type: ignore[list-item]
    upstream = g  # d loss / d activations[-1]
    for li in range(params.n_layers - 1, -1, -1):
        layer = params.layers[li]
        if li == params.n_layers - 1:
            dp = upstream
        elif activation == "relu":
            dp = upstream * (preacts[li] > 0.0)
        else:
            dp = upstream
        gw = messages[li].T @ dp
        gb = dp.sum(axis=0) if layer.bias is not None else None
        grads[li] = Layer(weight=gw, bias=gb, group=layer.group)
        if li > 0:
            upstream = adj @ (dp @ layer.weight.T)

    grad_set = ParameterSet(layers=tuple(grads))
    if prox_center is not None and mu > 0.0:
        current = flatten(params, group=_layout_group(prox_center.layout))
        if current.layout != prox_center.layout:
            raise InputError("prox center layout does not match parameters")
        offset = current.values - prox_center.values
        loss += 0.5 * mu * float(np.dot(offset, offset))
        grad_set = _add_flat(grad_set, prox_center.layout, mu * offset)
    return loss, grad_set


def _layout_group(layout: tuple[LayerSpec, ...]) -> str:
    groups = {s.group for s in layout}
    return groups.pop() if len(groups) == 1 else "all"


def flatten(params: ParameterSet, group: str = "all") -> FlatVector:
    """Concatenate the selected layers into one vector (see FlatVector)."""
    if group not in ("all", SHARED, LOCAL):
        raise InputError(f"unknown group {group!r}")
    chunks = []
    layout = []
    for li, layer in enumerate(params.layers):
        if group != "all" and layer.group != group:
            continue
        chunks.append(layer.weight.ravel())
        b_size = 0
        if layer.bias is not None:
            chunks.append(layer.bias)
            b_size = layer.bias.size
        layout.append(
            LayerSpec(index=li, group=layer.group, w_shape=layer.weight.shape, b_size=b_size)
        )
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return FlatVector(values=values, layout=tuple(layout))


def layer_slices(layout: tuple[LayerSpec, ...]) -> list[tuple[int, int]]:
    """(start, stop) of each layer's block inside the flat vector."""
    out = []
    off = 0
    for s in layout:
        out.append((off, off + s.size))
        off += s.size
    return out


def unflatten(flat: FlatVector, template: ParameterSet) -> ParameterSet:
    """Rebuild a ParameterSet from ``template`` with the layers covered by
    ``flat.layout`` replaced by the flat values. Raises on any shape or
    group mismatch."""
    layers = list(template.layers)
    off = 0
    for spec in flat.layout:
        if spec.index >= len(layers):
            raise InputError(f"layout names layer {spec.index}, model has {len(layers)}")
        old = layers[spec.index]
        if old.weight.shape != spec.w_shape or spec.b_size != (
            old.bias.size if old.bias is not None else 0
        ):
            raise InputError(f"layout mismatch at layer {spec.index}")
        if old.group != spec.group:
            raise InputError(f"group mismatch at layer {spec.index}")
        w_n = spec.w_shape[0] * spec.w_shape[1]
        w = flat.values[off:off + w_n].reshape(spec.w_shape).copy()
        off += w_n
        b = None
        if spec.b_size:
            b = flat.values[off:off + spec.b_size].copy()
            off += spec.b_size
        elif old.bias is not None:
            b = old.bias.copy()
        layers[spec.index] = Layer(weight=w, bias=b, group=old.group)
    return ParameterSet(layers=tuple(layers))


def _add_flat(params: ParameterSet, layout: tuple[LayerSpec, ...], delta: np.ndarray) -> ParameterSet:
    """params + delta over the layers named by layout (used for prox)."""
    base = flatten(params, group=_layout_group(layout))
    if base.layout != layout:
        raise InputError("layout mismatch in flat addition")
    return unflatten(FlatVector(values=base.values + delta, layout=layout), params)


def induced_operator(params: ParameterSet, adj: NormalizedAdjacency) -> np.ndarray:
    """Dense node-space propagation operator of a 1-layer linear model.

    Only defined when the model is a single bias-free layer with a scalar
    (1x1) weight, giving W * A_hat, or an n x n weight, giving A_hat @ W.
    """
    if params.n_layers != 1:
        raise UnsupportedModelError("operator extraction requires a 1-layer model")
    layer = params.layers[0]
    if layer.bias is not None:
        raise UnsupportedModelError("operator extraction requires a bias-free layer")
    w = layer.weight
    if w.shape == (1, 1):
        return float(w[0, 0]) * adj.dense()
    if w.shape == (adj.n_nodes, adj.n_nodes):
        return adj.dense() @ w
    raise UnsupportedModelError(
        f"weight shape {w.shape} is neither scalar nor {adj.n_nodes}x{adj.n_nodes}"
    )
