"""Server-side aggregation: plain weighted averaging and geometric regulation.

The regulated path maps each client's shared-parameter displacement to a
fixed-length proxy direction (layer-normalized, mass-weighted,
optionally sign-projected down to a fixed dimension), then pushes the
proxy through three gates against the server's running geometric state:

  1. directional gate  — proxies pointing away from the reference r are
     attenuated by beta;
  2. subspace gate     — proxies are projected onto the span of the
     dominant directions of the recent proxy window;
  3. magnitude gate    — proxy norms are capped at epsilon (fixed, or
     the median of the round's raw proxy norms).

Each gate contributes a scalar gain per layer; the product c_{k,l}
rescales the client's raw parameter update layer by layer before the
weighted sum. The reference follows the raw proxies by exponential
smoothing, and both modes (plain and regulated) maintain it, so the
alignment diagnostics are comparable across modes.

All reductions run in ascending client order; given the same inputs the
round is bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .client import LocalUpdate
from .errors import InputError
from .model import FlatVector, layer_slices

__all__ = [
    "AggregatorConfig",
    "ProxyVector",
    "GeometricReference",
    "ClientRegulation",
    "RegulationReport",
    "initial_reference",
    "proxy_map",
    "update_reference",
    "align_regulate",
    "subspace_project",
    "sensitivity_normalize",
    "regulate_and_aggregate",
]

# full-length proxies above this size are sign-projected down
_REDUCE_ABOVE = 4096
_REDUCED_DIM = 1024


@dataclass(frozen=True)
class AggregatorConfig:
    mode: str = "plain"                 # "plain" | "ggrs"
    alpha: float = 0.9                  # reference smoothing
    beta: float = 0.5                   # misaligned-update attenuation
    epsilon: float | str = "adaptive"   # norm cap, or per-round median
    subspace_dim: int = 8               # m; 0 disables the subspace gate
    window: int = 32                    # proxy history length W
    proxy_dim: int | None = None        # None = auto, 0 = never reduce
    weights: str = "uniform"            # "uniform" | "by_train_count"
    fallback: str = "largest"           # zero-reference rule; "none" disables
    reference: str = "raw"              # EMA source: "raw" | "regulated"
    proxy_seed: int = 97                # seeds sign projection + basis starts

    def __post_init__(self):
        if self.mode not in ("plain", "ggrs"):
            raise InputError(f"unknown aggregation mode {self.mode!r}")
        if not (0.0 <= self.alpha < 1.0):
            raise InputError("alpha must be in [0, 1)")
        if not (0.0 <= self.beta < 1.0):
            raise InputError("beta must be in [0, 1)")
        if isinstance(self.epsilon, str):
            if self.epsilon != "adaptive":
                raise InputError("epsilon must be a positive number or 'adaptive'")
        elif not self.epsilon > 0.0:
            raise InputError("epsilon must be a positive number or 'adaptive'")
        if self.subspace_dim < 0 or self.window < 1:
            raise InputError("subspace_dim must be >= 0 and window >= 1")
        if self.subspace_dim > self.window:
            raise InputError("subspace_dim must not exceed window")
        if self.proxy_dim is not None and self.proxy_dim < 0:
            raise InputError("proxy_dim must be None, 0, or positive")
        if self.weights not in ("uniform", "by_train_count"):
            raise InputError(f"unknown weighting {self.weights!r}")
        if self.fallback not in ("largest", "none"):
            raise InputError(f"unknown fallback {self.fallback!r}")
        if self.reference not in ("raw", "regulated"):
            raise InputError(f"unknown reference source {self.reference!r}")


@dataclass(frozen=True)
class ProxyVector:
    """Fixed-length direction summary of one client's update.

    ``blocks`` are the (start, stop) spans of the per-layer segments
    inside ``values`` — one span per layer, or a single span covering
    everything once dimension reduction has mixed the layers.
    """

    values: np.ndarray
    layer_norms: tuple[float, ...]
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise InputError("proxy entries must be finite")
        if self.blocks and self.blocks[-1][1] != self.values.shape[0]:
            raise InputError("proxy blocks do not tile the vector")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class GeometricReference:
    """Server-side geometric state: smoothed reference direction ``r``,
    the ring buffer of the last W accepted proxies (oldest first), and
    an orthonormal basis of their dominant directions (possibly empty,
    shape (d, b))."""

    r: np.ndarray
    window: tuple[np.ndarray, ...]
    basis: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.r)):
            raise InputError("reference must be finite")
        if self.basis.ndim != 2 or self.basis.shape[0] != self.r.shape[0]:
            raise InputError("basis rows must match the reference length")
        if self.basis.shape[1]:
            gram = self.basis.T @ self.basis
            if np.max(np.abs(gram - np.eye(self.basis.shape[1]))) > 1e-10:
                raise InputError("basis columns must be orthonormal")


def initial_reference(dim: int) -> GeometricReference:
    return GeometricReference(
        r=np.zeros(dim), window=(), basis=np.zeros((dim, 0))
    )


@dataclass(frozen=True)
class ClientRegulation:
    """Realized regulation of one client in one round."""

    client_id: int
    proxy_norm: float
    cos_ref: float                      # cosine(raw proxy, effective reference)
    align_factor: float                 # 1 or beta
    attenuated: bool
    retention: tuple[float, ...]        # per proxy block, in [0, 1]
    clip_factor: float                  # in (0, 1]
    coefficients: tuple[float, ...]     # per layer: align * retention * clip

    def __post_init__(self):
        if not (-1.0 - 1e-12 <= self.cos_ref <= 1.0 + 1e-12):
            raise InputError("cosine out of range")
        for f in (self.align_factor, self.clip_factor, *self.retention, *self.coefficients):
            if not (0.0 <= f <= 1.0 + 1e-12):
                raise InputError("regulation factors must lie in [0, 1]")


@dataclass(frozen=True)
class RegulationReport:
    clients: tuple[ClientRegulation, ...]
    layer_coefficients: tuple[float, ...]   # weight-averaged c_l across clients
    epsilon: float                          # resolved norm cap (0 = inactive)
    fallback_used: bool


def _resolve_proxy_dim(cfg: AggregatorConfig, full_len: int) -> int | None:
    """Target dimension of the sign projection, or None to keep layers."""
    if cfg.proxy_dim == 0:
        return None
    if cfg.proxy_dim is None:
        return _REDUCED_DIM if full_len > _REDUCE_ABOVE else None
    return cfg.proxy_dim if full_len > cfg.proxy_dim else None


_projection_cache: dict[tuple[int, int, int], np.ndarray] = {}


def _sign_projection(seed: int, d_in: int, d_out: int) -> np.ndarray:
    """Run-constant random +-1 matrix (d_in x d_out), cached."""
    key = (seed, d_in, d_out)
    if key not in _projection_cache:
        rng = np.random.default_rng(seed)
        _projection_cache[key] = 2.0 * rng.integers(0, 2, size=(d_in, d_out)) - 1.0
    return _projection_cache[key]


def proxy_map(delta: FlatVector, cfg: AggregatorConfig) -> ProxyVector:
    """Direction-and-mass summary of one shared-parameter displacement.

    Per layer l: unit direction u_l = vec(delta_l) / (||delta_l|| + 1e-12)
    scaled by the relative mass rho_l = ||delta_l|| / sum of layer norms,
    concatenated in layer order. When the result is longer than the
    configured proxy dimension it is pushed through a fixed seeded
    sign-projection and rescaled by 1/sqrt(d_z). A zero displacement
    maps to the zero proxy.
    """
    if not np.all(np.isfinite(delta.values)):
        raise InputError("update contains non-finite entries")
    slices = layer_slices(delta.layout)
    norms = np.array([np.linalg.norm(delta.values[a:b]) for a, b in slices])
    total = float(norms.sum())
    if total == 0.0:
        values = np.zeros(delta.values.shape[0])
    else:
        parts = []
        for (a, b), nl in zip(slices, norms):
            parts.append(delta.values[a:b] * (nl / total / (nl + 1e-12)))
        values = np.concatenate(parts)

    d_z = _resolve_proxy_dim(cfg, values.shape[0])
    if d_z is None:
        blocks = tuple((a, b) for a, b in slices)
    else:
        p = _sign_projection(cfg.proxy_seed, values.shape[0], d_z)
        values = (values @ p) / np.sqrt(d_z)
        blocks = ((0, d_z),)
    return ProxyVector(values=values, layer_norms=tuple(float(n) for n in norms), blocks=blocks)


def _top_directions(window: np.ndarray, m: int, seed: int,
                    tol: float = 1e-8, max_iter: int = 500) -> np.ndarray:
    """Top-m left singular directions of the (d x n) window matrix.

    Deflated power iteration with seeded deterministic starts, run on
    the small n x n Gram matrix (the left directions live in the window
    column span, so each converged right vector maps back through the
    window). Stops early when the residual spectrum is numerically rank
    deficient, so the basis never pads with noise directions.
    """
    d, n = window.shape
    gram = window.T @ window
    lead = float(np.trace(gram))  # = sum of squared singular values
    if lead <= 0.0:
        return np.zeros((d, 0))
    rank_tol = 1e-10 * lead
    rng = np.random.default_rng(seed)
    rights: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for _ in range(min(m, d, n)):
        v = rng.standard_normal(n)
        for u in rights:
            v -= u * (u @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            break
        v /= nv
        lam = 0.0
        for _ in range(max_iter):
            w = gram @ v
            for u in rights:
                w -= u * (u @ w)
            nw = np.linalg.norm(w)
            if nw <= rank_tol:
                lam = 0.0
                break
            w /= nw
            converged = np.linalg.norm(w - np.sign(w @ v + 1e-300) * v) < tol
            v = w
            if converged:
                lam = float(v @ (gram @ v))
                break
        else:
            lam = float(v @ (gram @ v))
        if lam <= rank_tol:
            break
        rights.append(v)
        left = window @ v
        left /= np.linalg.norm(left)
        # deterministic sign: largest-magnitude entry positive
        j = int(np.argmax(np.abs(left)))
        if left[j] < 0.0:
            left = -left
        cols.append(left)
    if not cols:
        return np.zeros((d, 0))
    basis = np.stack(cols, axis=1)
    # one re-orthonormalization pass guards the 1e-10 invariant
    q, _ = np.linalg.qr(basis)
    # qr may flip signs; restore the convention
    for k in range(q.shape[1]):
        j = int(np.argmax(np.abs(q[:, k])))
        if q[j, k] < 0.0:
            q[:, k] = -q[:, k]
    return q


def update_reference(
    ref: GeometricReference,
    proxies: list[ProxyVector],
    weights: np.ndarray,
    cfg: AggregatorConfig,
) -> GeometricReference:
    """Exponentially smooth the reference and refresh the subspace.

    r <- alpha * r + (1 - alpha) * sum_k w_k z_k; the round's proxies
    join the ring buffer (oldest evicted beyond W); the basis becomes
    the top-m directions of the buffer, or stays empty while the buffer
    holds fewer than m proxies or m = 0.
    """
    if abs(float(np.sum(weights)) - 1.0) > 1e-9:
        raise InputError("weights must sum to 1")
    if len(proxies) != len(weights):
        raise InputError("one weight per proxy required")
    mean = np.zeros_like(ref.r)
    for w, z in zip(weights, proxies):
        if z.values.shape != ref.r.shape:
            raise InputError("proxy length does not match the reference")
        mean += w * z.values
    r_new = cfg.alpha * ref.r + (1.0 - cfg.alpha) * mean

    window = list(ref.window) + [z.values.copy() for z in proxies]
    window = window[-cfg.window:]

    m = cfg.subspace_dim
    if m == 0 or len(window) < m:
        basis = np.zeros((ref.r.shape[0], 0))
    else:
        basis = _top_directions(
            np.stack(window, axis=1), m, seed=cfg.proxy_seed + 1
        )
    return GeometricReference(r=r_new, window=tuple(window), basis=basis)


def align_regulate(z: np.ndarray, ref: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Attenuate by beta when the proxy opposes the reference.

    The decision is the sign of the inner product, so it is invariant to
    positive rescaling of either vector; the zero boundary passes.
    """
    factor = 1.0 if float(z @ ref) >= 0.0 else beta
    return z * factor, factor


def subspace_project(
    z: np.ndarray, basis: np.ndarray, blocks: tuple[tuple[int, int], ...]
) -> tuple[np.ndarray, tuple[float, ...]]:
    """Project onto the dominant-direction subspace; per-block retention.

    Empty basis = identity. retention_b = ||projected block|| /
    (||block|| + 1e-12), clamped to [0, 1]."""
    if basis.shape[1] == 0:
        return z, tuple(1.0 for _ in blocks)
    proj = basis @ (basis.T @ z)
    retention = []
    for a, b in blocks:
        before = np.linalg.norm(z[a:b])
        after = np.linalg.norm(proj[a:b])
        retention.append(min(1.0, after / (before + 1e-12)))
    return proj, tuple(retention)


def sensitivity_normalize(z: np.ndarray, epsilon: float) -> tuple[np.ndarray, float]:
    """Cap the proxy norm at epsilon: z / max(1, ||z||/epsilon).

    epsilon <= 0 means the cap is inactive (factor 1); a zero vector is
    returned unchanged with factor 1.
    """
    n = float(np.linalg.norm(z))
    if epsilon <= 0.0 or n == 0.0:
        return z, 1.0
    factor = min(1.0, epsilon / n)
    return z * factor, factor


def _normalized_weights(updates: list[LocalUpdate], cfg: AggregatorConfig) -> np.ndarray:
    if cfg.weights == "uniform":
        return np.full(len(updates), 1.0 / len(updates))
    counts = np.array([u.n_train for u in updates], dtype=np.float64)
    total = counts.sum()
    if total <= 0.0:
        raise InputError("train-count weighting needs a positive total count")
    return counts / total


def regulate_and_aggregate(
    updates: list[LocalUpdate],
    ref: GeometricReference,
    cfg: AggregatorConfig,
) -> tuple[FlatVector, GeometricReference, RegulationReport]:
    """One server aggregation step.

    Plain mode is the exact weighted mean of the raw updates (every
    coefficient 1); regulated mode rescales each client's update layer
    by layer with c_{k,l} = align_factor * retention_l * clip_factor
    before the weighted sum. Either way the reference state advances on
    the round's proxies (raw by default, regulated under the ablation
    flag) and the report records the realized geometry.
    """
    if not updates:
        raise InputError("need at least one client update")
    updates = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate client ids in one round")
    layout = updates[0].delta.layout
    for u in updates[1:]:
        if u.delta.layout != layout:
            raise InputError("inconsistent update layouts")
    weights = _normalized_weights(updates, cfg)

    proxies = [proxy_map(u.delta, cfg) for u in updates]
    if proxies[0].values.shape != ref.r.shape:
        raise InputError(
            f"reference length {ref.r.shape[0]} does not match proxies "
            f"({proxies[0].values.shape[0]})"
        )

    # effective reference: fall back to the heaviest client's direction
    # when the smoothed reference has no direction yet
    r_eff = ref.r
    fallback_used = False
    if np.linalg.norm(ref.r) == 0.0 and cfg.fallback == "largest":
        lead = max(range(len(updates)), key=lambda i: (weights[i], -ids[i]))
        r_eff = proxies[lead].values
        fallback_used = True

    if cfg.epsilon == "adaptive":
        eps = float(np.median([z.norm for z in proxies]))
    else:
        eps = float(cfg.epsilon)

    slices = layer_slices(layout)
    n_layers = len(slices)
    global_delta = np.zeros_like(updates[0].delta.values)
    rows = []
    regulated_proxies = []
    layer_coeff = np.zeros(n_layers)
    r_norm = float(np.linalg.norm(r_eff))

    for u, z, w in zip(updates, proxies, weights):
        zn = z.norm
        cos_ref = 0.0
        if zn > 0.0 and r_norm > 0.0:
            cos_ref = float(np.clip(z.values @ r_eff / (zn * r_norm), -1.0, 1.0))

        if cfg.mode == "ggrs":
            z1, align_factor = align_regulate(z.values, r_eff, cfg.beta)
            z2, retention = subspace_project(z1, ref.basis, z.blocks)
            z3, clip_factor = sensitivity_normalize(z2, eps)
        else:
            z3 = z.values
            align_factor, clip_factor = 1.0, 1.0
            retention = tuple(1.0 for _ in z.blocks)
        regulated_proxies.append(
            ProxyVector(values=z3, layer_norms=z.layer_norms, blocks=z.blocks)
        )

        if len(z.blocks) == n_layers:
            per_layer = tuple(align_factor * retention[i] * clip_factor
                              for i in range(n_layers))
        else:  # reduced proxy: one block, one shared gain for all layers
            c = align_factor * retention[0] * clip_factor
            per_layer = tuple(c for _ in range(n_layers))

        regulated = u.delta.values.copy()
        for (a, b), c in zip(slices, per_layer):
            regulated[a:b] *= c
        global_delta += w * regulated
        layer_coeff += w * np.array(per_layer)

        rows.append(
            ClientRegulation(
                client_id=u.client_id,
                proxy_norm=zn,
                cos_ref=cos_ref,
                align_factor=align_factor,
                attenuated=align_factor < 1.0,
                retention=retention,
                clip_factor=clip_factor,
                coefficients=per_layer,
            )
        )

    source = proxies if cfg.reference == "raw" else regulated_proxies
    new_ref = update_reference(ref, source, weights, cfg)

    report = RegulationReport(
        clients=tuple(rows),
        layer_coefficients=tuple(float(c) for c in layer_coeff),
        epsilon=eps if cfg.mode == "ggrs" else 0.0,
        fallback_used=fallback_used,
    )
    return FlatVector(values=global_delta, layout=layout), new_ref, report
