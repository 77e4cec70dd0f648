"""Subspace distance, eigenvalue-crossing detection and eigenvector rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, NearDegenerateError

DEFAULT_CROSSING_THRESHOLD = 0.05


@dataclass(frozen=True)
class SubspaceDistance:
    gamma: float
    r: int


def subspace_distance_batch(U, V):
    """``||U^T V_hat||_F / sqrt(r)`` with unit-column ``V_hat``; no input checks."""
    V = np.asarray(V, dtype=float)
    Vh = V / np.linalg.norm(V, axis=-2, keepdims=True)
    M = np.swapaxes(U, -1, -2) @ Vh
    return np.sqrt(np.sum(M * M, axis=(-2, -1)) / V.shape[-1])


def subspace_distance(U, V, tol: float = 1e-8) -> SubspaceDistance:
    """Distance between ``span(U)`` (orthonormal) and ``span(V)``.

    ``V`` is normalised column-wise first, so the value lies in [0, 1] and
    equals 1 exactly when the spans coincide.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if V.ndim == 1:
        V = V[:, None]
    if U.shape != V.shape:
        raise DimensionError(f"U is {U.shape} but V is {V.shape}")
    r = U.shape[1]
    if np.max(np.abs(U.T @ U - np.eye(r))) > tol:
        raise DegenerateInputError("U must have orthonormal columns")
    norms = np.linalg.norm(V, axis=0)
    if np.any(norms == 0):
        raise DegenerateInputError("V has a zero column")
    gamma = float(subspace_distance_batch(U, V))
    return SubspaceDistance(min(gamma, 1.0) if gamma < 1.0 + 1e-12 else gamma, r)


# ------------------------------------------------------------- crossings


@dataclass
class CrossingReport:
    """Near-crossings of ``lambda_r`` and ``lambda_{r+1}`` along a history.

    ``times``/``gaps`` list every interior local minimum of the relative gap
    ``lambda_r / lambda_{r+1} - 1`` that falls below ``threshold``.
    ``min_time``/``min_gap`` give the smallest interior minimum whether or
    not it is below threshold (nan when the gap never turns around).
    """

    pair: tuple[int, int]
    times: np.ndarray
    gaps: np.ndarray
    min_time: float
    min_gap: float
    threshold: float

    @property
    def crossed(self) -> bool:
        return len(self.times) > 0

    def rows(self):
        i, j = self.pair
        return [(float(t), f"{i}-{j}", float(g)) for t, g in zip(self.times, self.gaps)]


def relative_gap(eigenvalues, r: int) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.shape[-1] < r + 1:
        raise DimensionError(f"need at least {r + 1} eigenvalues, got {lam.shape[-1]}")
    if r < 1:
        raise DimensionError(f"r must be >= 1, got {r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return lam[..., r - 1] / lam[..., r] - 1.0


def _interior_minima(gap):
    """Indices k (axis 0) where gap[k] is a strict-left, weak-right local min."""
    g = gap
    is_min = np.zeros(g.shape, dtype=bool)
    if g.shape[0] >= 3:
        is_min[1:-1] = (g[1:-1] < g[:-2]) & (g[1:-1] <= g[2:])
    return is_min


def gap_crossings(gap, threshold: float = DEFAULT_CROSSING_THRESHOLD):
    """Per-series crossing flag from relative gaps shaped ``(K, ...)``."""
    gap = np.asarray(gap, dtype=float)
    return np.any(_interior_minima(gap) & (gap < threshold), axis=0)


def crossing_mask(eigenvalue_history, r: int, threshold: float = DEFAULT_CROSSING_THRESHOLD):
    """Per-series crossing flag for histories shaped ``(K, ..., n)``."""
    return gap_crossings(relative_gap(eigenvalue_history, r), threshold)


def detect_crossing(
    times, eigenvalue_history, r: int, threshold: float = DEFAULT_CROSSING_THRESHOLD
) -> CrossingReport:
    """Flag near-crossings between ``lambda_r`` and ``lambda_{r+1}``.

    At ``T -> 0`` every Cauchy-Green eigenvalue tends to 1, so the relative
    gap starts at zero on every trajectory.  Only interior local minima of
    the gap count as crossings; the monotone rise away from the initial
    degeneracy does not.
    """
    times = np.asarray(times, dtype=float)
    lam = np.asarray(eigenvalue_history, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != times.shape[0]:
        raise DimensionError("eigenvalue history must be (len(times), n)")
    if np.any(np.diff(lam, axis=1) > 1e-12 * np.abs(lam[:, :-1]) + 0.0):
        raise ValueError("each eigenvalue list must be in descending order")
    gap = relative_gap(lam, r)
    is_min = _interior_minima(gap)
    hits = is_min & (gap < threshold)
    if is_min.any():
        k = int(np.flatnonzero(is_min)[np.argmin(gap[is_min])])
        min_time, min_gap = float(times[k]), float(gap[k])
    else:
        min_time = min_gap = float("nan")
    return CrossingReport((r, r + 1), times[hits], gap[hits], min_time, min_gap, threshold)


# ------------------------------------------------------ eigenvector rates


@dataclass
class EigvecRate:
    K: np.ndarray
    R: np.ndarray
    eigenvalues: np.ndarray
    Lambda_dot: np.ndarray

    @property
    def R_dot(self) -> np.ndarray:
        return self.R @ self.K


def lancaster_rate(G, G_dot, spectrum=None, gap_floor: float | None = None) -> EigvecRate:
    """Rates of the eigen-decomposition of a symmetric path ``G(t)``.

    With ``G R = R diag(lambda)`` and ``Gt = R^T G_dot R``::

        K_ij = (Gt_ij + Gt_ji) / (2 (lambda_j - lambda_i)),  i != j
        R_dot = R K,   lambda_dot = diag(Gt)

    Parameters
    ----------
    G, G_dot : (n, n) symmetric arrays
    spectrum : (eigenvalues, R), optional
        Precomputed eigen-pairs of ``G``; computed (descending) when omitted.
    gap_floor : float, optional
        Minimum admissible eigenvalue separation, default ``1e-8 * max|lambda|``.

    Raises
    ------
    NearDegenerateError
        If two eigenvalues are closer than ``gap_floor``; the rotation rate
        is unbounded there.
    """
    G = np.asarray(G, dtype=float)
    G_dot = np.asarray(G_dot, dtype=float)
    if spectrum is None:
        w, R = np.linalg.eigh(0.5 * (G + G.T))
        w, R = w[::-1], R[:, ::-1]
    else:
        w, R = (np.asarray(a, dtype=float) for a in spectrum)
    if gap_floor is None:
        gap_floor = 1e-8 * np.max(np.abs(w))
    diff = w[None, :] - w[:, None]  # lambda_j - lambda_i
    off = ~np.eye(len(w), dtype=bool)
    if np.any(np.abs(diff[off]) <= gap_floor):
        i, j = np.argwhere(off & (np.abs(diff) <= gap_floor))[0]
        raise NearDegenerateError((int(i), int(j)), float(abs(diff[i, j])))
    Gt = R.T @ G_dot @ R
    K = np.zeros_like(Gt)
    K[off] = (Gt + Gt.T)[off] / (2.0 * diff[off])
    return EigvecRate(K, R, w, np.diag(Gt).copy())


def align_signs(reference, vectors) -> np.ndarray:
    """Flip columns of ``vectors`` to have non-negative overlap with ``reference``."""
    v = np.array(vectors, dtype=float)
    s = np.sum(np.asarray(reference) * v, axis=-2)
    return v * np.where(s < 0, -1.0, 1.0)[..., None, :]
