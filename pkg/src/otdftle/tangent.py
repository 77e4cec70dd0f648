"""Deformation gradients, Cauchy-Green spectra and full FTLEs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidSpectrumError, NumericalDegeneracyError
from .integrators import IntegratorConfig, integrate_coupled

EIGENVALUE_FLOOR = 1e-300
DEGENERACY_RATIO = 1e-10


@dataclass(frozen=True)
class FdConfig:
    h: float = 1e-8

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ConfigError(f"finite-difference step must be positive, got {self.h}")


@dataclass
class DeformationGradient:
    matrix: np.ndarray
    t0: float
    T: float
    z0: np.ndarray
    method: str  # "variational" | "finite_difference"


@dataclass
class StrainSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    side: str  # "right" (xi) | "left" (eta)
    tensor: np.ndarray
    degenerate: tuple[tuple[int, int], ...] = ()
    floored: bool = False


@dataclass
class FtleRecord:
    exponents: np.ndarray
    t0: float
    T: float
    z0: np.ndarray | None = None
    floored: bool = False
    degenerate: tuple[tuple[int, int], ...] = field(default=())


def _identity_like(z0, n):
    return np.broadcast_to(np.eye(n), np.shape(z0)[:-1] + (n, n)).copy()


def variational_rhs(sys):
    def rhs(t, y):
        z, F = y
        return sys.vector_field(z, t), sys.jacobian_action(z, t, F)

    return rhs


def deformation_gradient_variational(sys, z0, cfg: IntegratorConfig) -> DeformationGradient:
    """Integrate ``dF/dt = L(z(t), t) F``, ``F(t0) = I`` alongside the state.

    ``z0`` may carry leading batch axes; the matrix then has shape
    ``(..., n, n)``.
    """
    z0 = np.asarray(z0, dtype=float)
    _, F = integrate_coupled(variational_rhs(sys), (z0, _identity_like(z0, sys.dimension)), cfg)
    return DeformationGradient(F, cfg.t0, cfg.T, z0, "variational")


def deformation_gradient_fd(
    sys, z0, cfg: IntegratorConfig, fd: FdConfig = FdConfig()
) -> DeformationGradient:
    """Central differences of the flow map over the 2n auxiliary points.

    The divisor is the representable spacing ``(z0 + h e_i) - (z0 - h e_i)``
    rather than ``2h``, which makes the identity flow exact.
    """
    z0 = np.asarray(z0, dtype=float)
    n = sys.dimension
    E = fd.h * np.eye(n)
    plus = z0[..., None, :] + E
    minus = z0[..., None, :] - E
    pts = np.concatenate([z0[..., None, :], plus, minus], axis=-2)
    (final,) = integrate_coupled(lambda t, y: (sys.vector_field(y[0], t),), (pts,), cfg)
    fp = final[..., 1 : n + 1, :]
    fm = final[..., n + 1 :, :]
    spacing = np.diagonal(plus - minus, axis1=-2, axis2=-1)
    # rows of fp - fm are flow-map differences for each perturbed axis
    F = np.swapaxes(fp - fm, -1, -2) / spacing[..., None, :]
    return DeformationGradient(F, cfg.t0, cfg.T, z0, "finite_difference")


def _as_matrix(dg) -> np.ndarray:
    return np.asarray(dg.matrix if isinstance(dg, DeformationGradient) else dg, dtype=float)


def fix_signs(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip columns so that their first non-negligible component is positive."""
    v = np.array(vectors, dtype=float)
    big = np.abs(v) > tol
    first = np.argmax(big, axis=-2)
    lead = np.take_along_axis(v, first[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(lead < 0, -1.0, 1.0)
    return v * sign[..., None, :]


def cauchy_green(dg, side: str = "right") -> StrainSpectrum:
    """Eigen-decomposition of ``C = F^T F`` (right) or ``B = F F^T`` (left).

    Eigenvalues are returned in descending order.  Adjacent pairs with
    ``lambda_i / lambda_{i+1} < 1 + 1e-10`` are listed in ``degenerate``.
    """
    F = _as_matrix(dg)
    if F.ndim != 2:
        raise ValueError("cauchy_green takes a single matrix; use strain_eigenvalues for stacks")
    if not np.isfinite(F).all():
        raise NumericalDegeneracyError("deformation gradient has non-finite entries")
    if side == "right":
        G = F.T @ F
    elif side == "left":
        G = F @ F.T
    else:
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    G = 0.5 * (G + G.T)
    try:
        w, v = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(str(exc)) from exc
    w, v = w[::-1], fix_signs(v[:, ::-1])
    floored = bool(np.any((w > 0) & (w < EIGENVALUE_FLOOR)))
    degenerate = tuple(
        (i, i + 1)
        for i in range(len(w) - 1)
        if w[i + 1] > 0 and w[i] < w[i + 1] * (1.0 + DEGENERACY_RATIO)
    )
    return StrainSpectrum(w, v, side, G, degenerate, floored)


def strain_eigenvalues(F, side: str = "right") -> np.ndarray:
    """Descending Cauchy-Green eigenvalues for a stack of gradients."""
    F = np.asarray(F, dtype=float)
    Ft = np.swapaxes(F, -1, -2)
    G = Ft @ F if side == "right" else F @ Ft
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    return np.linalg.eigvalsh(G)[..., ::-1]


def exponents_from_eigenvalues(lam, T: float) -> np.ndarray:
    """``log(sqrt(lam)) / T`` elementwise, floor-clamped; non-positive gives nan."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 0.5 * np.log(np.maximum(lam, EIGENVALUE_FLOOR)) / T
    return np.where(lam > 0, out, np.nan)


def ftle(spectrum: StrainSpectrum, T: float) -> FtleRecord:
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    lam = np.asarray(spectrum.eigenvalues, dtype=float)
    if np.any(~(lam > 0)):
        raise InvalidSpectrumError(f"non-positive Cauchy-Green eigenvalue {lam.min():.3e}")
    floored = spectrum.floored or bool(np.any(lam < EIGENVALUE_FLOOR))
    return FtleRecord(
        exponents_from_eigenvalues(lam, T),
        t0=0.0,
        T=T,
        floored=floored,
        degenerate=spectrum.degenerate,
    )


def ftle_from_gradient(dg: DeformationGradient, k: int | None = None) -> FtleRecord:
    rec = ftle(cauchy_green(dg, "right"), dg.T)
    rec.t0, rec.z0 = dg.t0, dg.z0
    if k is not None:
        rec.exponents = rec.exponents[:k]
    return rec


def singular_pairing_check(dg, tol: float = 1e-8) -> bool:
    """Check ``F xi_i = sqrt(lambda_i) eta_i`` for every i.

    Returns False (never raises) when the relation fails, which is expected
    for repeated eigenvalues where the eigenvectors are not unique.
    """
    F = _as_matrix(dg)
    right = cauchy_green(F, "right")
    left = cauchy_green(F, "left")
    scale = np.sqrt(max(right.eigenvalues[0], 0.0))
    for i, lam in enumerate(right.eigenvalues):
        img = F @ right.eigenvectors[:, i]
        eta = left.eigenvectors[:, i]
        if img @ eta < 0:
            eta = -eta
        if np.linalg.norm(img - np.sqrt(max(lam, 0.0)) * eta) > tol * scale:
            return False
    return True
