"""Round-level geometry and performance diagnostics.

Three geometric summaries describe each aggregation round: the pairwise
cosine matrix between client updates, the mean cosine between client
proxies and the server's reference direction, and the Euclidean norm of
the applied global delta. Spectra of (small, symmetric) node-space
propagation operators come from a cyclic Jacobi eigensolver so the
values are exactly those of the symmetrized input.

Zero vectors have no direction; every cosine involving one is 0 by
convention and flagged where the API allows it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "RoundMetrics",
    "pairwise_coherence",
    "mean_alignment",
    "sensitivity_norm",
    "operator_spectrum",
    "accuracy",
]


@dataclass(frozen=True)
class RoundMetrics:
    """One aggregation round's diagnostics, as emitted per round.

    ``gamma`` is the K x K cosine matrix between raw client updates with
    ``zero_updates`` marking norm-zero rows; ``mean_alignment`` averages
    cos(proxy, reference) over clients with a nonzero proxy;
    ``sensitivity`` is the Euclidean norm of the applied global delta.
    """

    round: int
    test_accuracy: float
    client_accuracies: tuple[float, ...]
    gamma: np.ndarray
    zero_updates: np.ndarray
    mean_alignment: float
    sensitivity: float
    client_factors: tuple[float, ...]
    spectrum: tuple[float, ...] | None = None

    def __post_init__(self):
        k = self.gamma.shape[0]
        if self.gamma.shape != (k, k) or self.zero_updates.shape != (k,):
            raise InputError("gamma must be K x K with a K-length zero flag")
        if not (-1.0 - 1e-12 <= self.mean_alignment <= 1.0 + 1e-12):
            raise InputError("mean alignment out of [-1, 1]")
        if self.sensitivity < 0.0:
            raise InputError("sensitivity norm must be nonnegative")


def pairwise_coherence(updates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine matrix between the rows of ``updates`` (K x d, K >= 2).

    Returns ``(gamma, zero_mask)``: gamma[i, j] = cos(row_i, row_j),
    symmetric, entries in [-1, 1], unit diagonal for nonzero rows.
    Rows with zero norm get all-zero gamma rows/columns and are flagged
    in ``zero_mask``.
    """
    u = np.asarray(updates, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] < 2:
        raise InputError("need a 2-d array with at least two update rows")
    norms = np.linalg.norm(u, axis=1)
    zero_mask = norms == 0.0
    safe = np.where(zero_mask, 1.0, norms)
    unit = u / safe[:, None]
    gamma = unit @ unit.T
    gamma = np.clip(gamma, -1.0, 1.0)
    gamma[zero_mask, :] = 0.0
    gamma[:, zero_mask] = 0.0
    # exact symmetry and exact unit diagonal for the nonzero rows
    gamma = 0.5 * (gamma + gamma.T)
    idx = np.flatnonzero(~zero_mask)
    gamma[idx, idx] = 1.0
    return gamma, zero_mask


def mean_alignment(proxies: np.ndarray, ref: np.ndarray) -> float:
    """Mean of cos(z_k, ref) over rows with nonzero norm.

    Returns 0.0 when the reference is zero or no row has a direction
    (the zero-cosine convention).
    """
    z = np.asarray(proxies, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != r.shape[0]:
        raise InputError("proxies must be K x d matching the reference length")
    rnorm = np.linalg.norm(r)
    if rnorm == 0.0:
        return 0.0
    norms = np.linalg.norm(z, axis=1)
    live = norms > 0.0
    if not live.any():
        return 0.0
    cos = (z[live] @ r) / (norms[live] * rnorm)
    return float(np.mean(np.clip(cos, -1.0, 1.0)))


def sensitivity_norm(global_delta: np.ndarray) -> float:
    """Euclidean norm of the applied global update."""
    return float(np.linalg.norm(np.asarray(global_delta, dtype=np.float64)))


def _jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps the upper triangle in row order, rotating each (p, q) pair to
    zero, until the off-diagonal Frobenius norm drops below ``tol``.
    Returns (eigenvalues, eigenvectors) descending, columns matching.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v

    def offnorm(m):
        # sum only the off-diagonal squares; subtracting the diagonal from
        # the full Frobenius norm cancels catastrophically near convergence
        off = m - np.diag(m.diagonal())
        return float(np.linalg.norm(off))

    # stop threshold scales with the input so large matrices converge too
    stop = tol * max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        if offnorm(a) < stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0.0 else 1.0
                t /= abs(theta) + np.sqrt(theta * theta + 1.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if offnorm(a) >= stop:
            raise InputError("eigensolver did not converge")
    w = a.diagonal().copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def operator_spectrum(t: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric operator, descending.

    The input must be square and symmetric to within 1e-9 (max absolute
    entry of T - T^T); it is symmetrized by averaging before the solve.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise InputError(f"operator must be square, got shape {t.shape}")
    skew = np.max(np.abs(t - t.T)) if t.size else 0.0
    if skew > 1e-9:
        raise InputError(f"operator asymmetric by {skew:.3g} (limit 1e-9)")
    sym = 0.5 * (t + t.T)
    w, _ = _jacobi_eigh(sym)
    return w


def accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of masked nodes whose argmax logit matches the label.

    Ties go to the lowest class index.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise InputError("empty mask")
    pred = np.argmax(logits[mask], axis=1)  # argmax takes the first maximum
    return float(np.mean(pred == np.asarray(labels)[mask]))
