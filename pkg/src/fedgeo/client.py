"""Client-side local training.

Each round a client receives the shared encoder parameters, trains on
its private graph for E full-batch gradient-descent steps ("epoch" =
one full-batch step; graphs here are small), and returns the shared
displacement delta = theta_local - theta_global. In cross-domain mode
the final layer is a client-local head: it trains locally, persists in
the client state across rounds, and never leaves the client.

Trainers: "fedavg" (E steps), "fedsgd" (forced single step), "fedprox"
(E steps, gradient augmented with mu * (theta - global) over the shared
group). Plain gradient descent throughout — no momentum, no batching —
so a round is bitwise deterministic in its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, InputError
from .graphs import Graph, NormalizedAdjacency
from .model import (
    FlatVector,
    Layer,
    ParameterSet,
    flatten,
    gradient,
    unflatten,
)

__all__ = ["ClientState", "LocalUpdate", "local_train", "TRAINERS"]

TRAINERS = ("fedavg", "fedsgd", "fedprox")


@dataclass
class ClientState:
    """One client's private state; owned exclusively by that client.

    ``params`` holds the full parameter set including any local head;
    ``local_train`` refreshes its shared slice from the broadcast vector
    each round and persists the trained values back. ``objective``, when
    set, replaces the node-classification loss with a custom
    ``params -> (loss, grad ParameterSet)`` callable (surrogate losses
    in tests); the fedprox proximal term still applies on top.
    """

    client_id: int
    graph: Graph
    adj: NormalizedAdjacency
    params: ParameterSet
    activation: str = "relu"
    trainer: str = "fedavg"
    lr: float = 0.05
    epochs: int = 1
    mu: float = 0.01
    objective: Callable[[ParameterSet], tuple[float, ParameterSet]] | None = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.trainer not in TRAINERS:
            raise InputError(f"unknown trainer {self.trainer!r}")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.lr < 0.0:
            raise InputError("learning rate must be nonnegative")
        if self.trainer == "fedprox" and self.mu < 0.0:
            raise InputError("fedprox mu must be nonnegative")


@dataclass(frozen=True)
class LocalUpdate:
    """Shared-group displacement a client sends to the server."""

    client_id: int
    round: int
    delta: FlatVector
    n_train: int

    def __post_init__(self):
        if self.n_train < 1:
            raise InputError("n_train must be >= 1")


def _step(params: ParameterSet, grads: ParameterSet, lr: float) -> ParameterSet:
    layers = []
    for p, g in zip(params.layers, grads.layers):
        w = p.weight - lr * g.weight
        b = p.bias - lr * g.bias if p.bias is not None else None
        layers.append(Layer(weight=w, bias=b, group=p.group))
    return ParameterSet(layers=tuple(layers))


def _shared_group(layout) -> str:
    groups = {s.group for s in layout}
    return groups.pop() if len(groups) == 1 else "all"


def local_train(state: ClientState, global_shared: FlatVector, round_index: int = 0) -> LocalUpdate:
    """Run one round of local training and return the shared delta.

    Loads the broadcast shared parameters into the client model (the
    local head, if any, keeps its previous values), runs E full-batch
    gradient steps (fedsgd: exactly one; fedprox: mu-proximal gradient
    toward the broadcast point), persists the trained parameters in the
    state, and returns theta_shared_after - theta_shared_broadcast.
    """
    own_shared = flatten(state.params, group=_shared_group(global_shared.layout))
    if own_shared.layout != global_shared.layout:
        raise InputError("broadcast layout does not match the client model")
    n_train = int(state.graph.train_mask.sum())
    if n_train < 1 and state.objective is None:
        raise InputError(f"client {state.client_id} has no train nodes")

    params = unflatten(global_shared, state.params)
    n_steps = 1 if state.trainer == "fedsgd" else state.epochs
    group = _shared_group(global_shared.layout)
    prox_mu = state.mu if state.trainer == "fedprox" else 0.0

    for _ in range(n_steps):
        if state.objective is not None:
            loss, grads = state.objective(params)
            if prox_mu > 0.0:
                cur = flatten(params, group=group)
                off = cur.values - global_shared.values
                loss += 0.5 * prox_mu * float(np.dot(off, off))
                gflat = flatten(grads, group=group)
                grads = unflatten(
                    FlatVector(values=gflat.values + prox_mu * off, layout=gflat.layout),
                    grads,
                )
        else:
            loss, grads = gradient(
                params,
                state.adj,
                state.graph.features,
                state.graph.labels,
                state.graph.train_mask,
                activation=state.activation,
                prox_center=global_shared if prox_mu > 0.0 else None,
                mu=prox_mu,
            )
        if not np.isfinite(loss):
            raise DivergenceError(round_index, state.client_id)
        params = _step(params, grads, state.lr)

    state.params = params
    new_shared = flatten(params, group=group)
    delta = FlatVector(
        values=new_shared.values - global_shared.values,
        layout=global_shared.layout,
    )
    # a displacement whose entries or norm are unrepresentable can never
    # be aggregated; surface it as divergence, not as a malformed input
    if not np.all(np.isfinite(delta.values)) or not np.isfinite(
        float(np.linalg.norm(delta.values))
    ):
        raise DivergenceError(round_index, state.client_id)
    return LocalUpdate(
        client_id=state.client_id,
        round=round_index,
        delta=delta,
        n_train=max(n_train, 1),
    )
