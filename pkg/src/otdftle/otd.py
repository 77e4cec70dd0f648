"""Optimally time-dependent (OTD) modes and reduced-order FTLEs.

The reduced algorithm advances the state ``z``, the orthonormal basis
``U`` (n x r) and the reduced fundamental matrix ``Phi`` (r x r) in one
coupled RK4 step::

    z'   = f(z, t)
    U'   = L U - U (U^T L U)
    Phi' = (U^T L U) Phi

and re-orthonormalises ``U`` after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import subspace_distance_batch
from .errors import (
    DegenerateBasisError,
    DimensionError,
    InvalidSpectrumError,
    NumericalDegeneracyError,
    OtdFtleError,
)
from .integrators import IntegratorConfig, Trajectory, integrate_coupled
from .tangent import DEGENERACY_RATIO, exponents_from_eigenvalues, fix_signs, strain_eigenvalues

BASIS_TOL = 1e-12


def _mT(a):
    return np.swapaxes(a, -1, -2)


@dataclass
class TangentBasis:
    U: np.ndarray
    t: float = 0.0

    @property
    def r(self) -> int:
        return self.U.shape[-1]

    def orthonormality_error(self) -> float:
        G = _mT(self.U) @ self.U
        return float(np.max(np.abs(G - np.eye(self.r))))


@dataclass
class BasisHistory:
    times: np.ndarray
    bases: np.ndarray  # (K+1, ..., n, r)
    states: np.ndarray  # (K+1, ..., n)

    def at(self, k: int) -> TangentBasis:
        return TangentBasis(self.bases[k], float(self.times[k]))


@dataclass
class ReducedFundamental:
    """``Phi(t0) = I``; equals the transform T(t) with V = U T when V0 = U0."""

    Phi: np.ndarray
    t0: float
    T: float
    min_abs_det: float = field(default=np.nan)


@dataclass
class ReducedFtleRecord:
    exponents: np.ndarray
    r: int
    t0: float
    T: float
    z0: np.ndarray | None = None


def orthonormalize_masked(U, tol: float = BASIS_TOL):
    """QR with a positive triangular diagonal; also returns the collapsed mask.

    Collapsed columns (``|R_ii| < tol``) are reported, not raised, so a
    batched caller can flag individual points.
    """
    Q, R = np.linalg.qr(U)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    sign = np.where(d < 0, -1.0, 1.0)
    bad = np.any(np.abs(d) < tol, axis=-1)
    return Q * sign[..., None, :], bad


def orthonormalize(U, tol: float = BASIS_TOL) -> np.ndarray:
    """Span- and order-preserving orthonormalisation of the columns of ``U``."""
    Q, bad = orthonormalize_masked(U, tol)
    if np.any(bad):
        d = np.abs(np.diagonal(np.linalg.qr(U)[1], axis1=-2, axis2=-1))
        j = int(np.argmin(d.reshape(-1, d.shape[-1]).min(axis=0)))
        raise DegenerateBasisError(j, float(d.min()))
    return Q


def symmetric_part(L):
    return 0.5 * (L + _mT(L))


def otd_init(sys, z0, t0: float = 0.0, r: int = 2) -> TangentBasis:
    """Top-r eigenvectors of ``(L + L^T) / 2`` at ``(z0, t0)``.

    These are the instantaneously most unstable directions.
    """
    n = sys.dimension
    if not 1 <= r <= n:
        raise DimensionError(f"need 1 <= r <= {n}, got r={r}")
    Ls = symmetric_part(sys.jacobian(np.asarray(z0, dtype=float), t0))
    try:
        _, v = np.linalg.eigh(Ls)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError(str(exc)) from exc
    U = fix_signs(v[..., ::-1][..., :r])
    return TangentBasis(U, t0)


def otd_rhs(L, U):
    """``L U - U (U^T L U)``."""
    LU = L @ U
    return LU - U @ (_mT(U) @ LU)


def otd_rhs_coupled(sys):
    """RHS for ``(z, U, Phi)``."""

    def rhs(t, y):
        z, U, Phi = y
        LU = sys.jacobian_action(z, t, U)
        Lr = _mT(U) @ LU
        return sys.vector_field(z, t), LU - U @ Lr, Lr @ Phi

    return rhs


def _reorthonormalize_U(t, y):
    z, U, *rest = y
    return (z, orthonormalize(U), *rest)


def _check_basis(U0, n):
    U0 = np.asarray(U0.U if isinstance(U0, TangentBasis) else U0, dtype=float)
    if U0.shape[-2] != n:
        raise DimensionError(f"basis has {U0.shape[-2]} rows, model dimension is {n}")
    err = np.max(np.abs(_mT(U0) @ U0 - np.eye(U0.shape[-1])))
    if err > 1e-8:
        raise DegenerateBasisError(0, float(err))
    return U0


def evolve_otd(
    sys, traj: Trajectory, U0, cfg: IntegratorConfig, replay: bool = False
) -> BasisHistory:
    """Sampled OTD basis along ``traj``.

    By default the state is re-advanced together with ``U`` (coupled RK4,
    identical arithmetic to the stored trajectory).  ``replay=True`` instead
    reads stage states by linear interpolation of ``traj``; approximate.
    """
    U0 = _check_basis(U0, sys.dimension)
    z0 = np.asarray(traj.states[0], dtype=float)
    bases = np.empty((cfg.n_steps + 1,) + U0.shape)
    states = np.empty((cfg.n_steps + 1,) + z0.shape)

    def keep(k, t, y):
        states[k] = y[0]
        bases[k] = y[1]

    if replay:

        def rhs(t, y):
            z = traj.interpolate(t)
            return np.zeros_like(y[0]), otd_rhs(sys.jacobian(z, t), y[1])

        def keep_replay(k, t, y):
            states[k] = traj.interpolate(t)
            bases[k] = y[1]

        integrate_coupled(rhs, (z0, U0), cfg, post_step=_reorthonormalize_U, observe=keep_replay)
    else:

        def rhs(t, y):
            z, U = y
            LU = sys.jacobian_action(z, t, U)
            return sys.vector_field(z, t), LU - U @ (_mT(U) @ LU)

        integrate_coupled(rhs, (z0, U0), cfg, post_step=_reorthonormalize_U, observe=keep)
    return BasisHistory(cfg.times, bases, states)


def reduced_fundamental(
    sys, traj: Trajectory, basis: BasisHistory, cfg: IntegratorConfig, replay: bool = False
) -> ReducedFundamental:
    """Fundamental matrix of ``Phi' = U^T L U Phi``, ``Phi(t0) = I``.

    Coupled mode re-advances ``z`` and ``U`` from their first samples so the
    stage values of ``U`` enter ``L_r``; ``replay=True`` interpolates the
    stored samples instead (approximate).
    """
    r = basis.bases.shape[-1]
    z0 = np.asarray(traj.states[0], dtype=float)
    Phi0 = np.broadcast_to(np.eye(r), basis.bases.shape[1:-2] + (r, r)).copy()
    dets = []

    def watch(k, t, y):
        dets.append(np.min(np.abs(np.linalg.det(y[-1]))))

    if replay:
        U_traj = Trajectory(basis.times, basis.bases)

        def rhs(t, y):
            z = traj.interpolate(t)
            U = U_traj.interpolate(t)
            Lr = _mT(U) @ sys.jacobian_action(z, t, U)
            return (Lr @ y[0],)

        (Phi,) = integrate_coupled(rhs, (Phi0,), cfg, observe=watch)
    else:
        _, _, Phi = integrate_coupled(
            otd_rhs_coupled(sys),
            (z0, basis.bases[0], Phi0),
            cfg,
            post_step=_reorthonormalize_U,
            observe=watch,
        )
    return ReducedFundamental(Phi, cfg.t0, cfg.T, float(min(dets)))


def reduced_ftle(phi: ReducedFundamental) -> ReducedFtleRecord:
    if not phi.T > 0:
        raise ValueError(f"horizon must be positive, got {phi.T}")
    gam = strain_eigenvalues(phi.Phi)
    if np.any(~(gam > 0)):
        raise InvalidSpectrumError(f"non-positive reduced eigenvalue {np.min(gam):.3e}")
    return ReducedFtleRecord(
        exponents_from_eigenvalues(gam, phi.T), phi.Phi.shape[-1], phi.t0, phi.T
    )


def reduced_ftle_pipeline(
    sys,
    z0,
    r: int,
    cfg: IntegratorConfig,
    U0=None,
    t0: float | None = None,
    T: float | None = None,
) -> ReducedFtleRecord:
    """Reduced FTLEs of one initial condition (advect, OTD, Phi, exponents).

    Errors are re-raised with ``err.stage`` naming the failing step.
    """
    if t0 is not None:
        cfg = replace(cfg, t0=t0)
    if T is not None:
        cfg = cfg.with_horizon(T)
    z0 = np.asarray(z0, dtype=float)
    stage = "init"
    try:
        if U0 is None:
            U0 = otd_init(sys, z0, cfg.t0, r).U
        U0 = _check_basis(U0, sys.dimension)
        r = U0.shape[-1]
        stage = "integrate"
        Phi0 = np.broadcast_to(np.eye(r), U0.shape[:-2] + (r, r)).copy()
        _, _, Phi = integrate_coupled(
            otd_rhs_coupled(sys), (z0, U0, Phi0), cfg, post_step=_reorthonormalize_U
        )
        stage = "exponents"
        rec = reduced_ftle(ReducedFundamental(Phi, cfg.t0, cfg.T))
    except OtdFtleError as err:
        err.stage = stage
        raise
    rec.z0 = z0
    return rec


# -------------------------------------------------------- time histories


@dataclass
class FtleHistory:
    """FTLEs against horizon along one trajectory (one row per RK4 step)."""

    times: np.ndarray  # horizons T_k = k dt, k >= 1
    eigenvalues: np.ndarray  # (K, n) right Cauchy-Green, descending
    full: np.ndarray  # (K, n) Lambda_i(T_k)
    reduced: dict[int, np.ndarray]  # r -> (K, r) Gamma_i(T_k)
    alignment: dict[int, np.ndarray]  # r -> (K,) distance U vs top-r eta
    z0: np.ndarray
    t0: float


def ftle_history(
    sys, z0, cfg: IntegratorConfig, r_values=(1, 2), initial_bases: dict | None = None
) -> FtleHistory:
    """Full and reduced FTLEs for every horizon ``dt, 2 dt, ..., T``.

    A single coupled integration carries ``z``, ``F`` and one ``(U, Phi)``
    pair per requested ``r``.
    """
    z0 = np.asarray(z0, dtype=float)
    n = sys.dimension
    r_values = tuple(int(r) for r in r_values)
    initial_bases = initial_bases or {}
    y0 = [z0, np.eye(n)]
    for r in r_values:
        U0 = initial_bases.get(r)
        U0 = otd_init(sys, z0, cfg.t0, r).U if U0 is None else _check_basis(U0, n)
        y0 += [U0, np.eye(r)]

    def rhs(t, y):
        z, F = y[0], y[1]
        out = [sys.vector_field(z, t), sys.jacobian_action(z, t, F)]
        for j in range(len(r_values)):
            U, Phi = y[2 + 2 * j], y[3 + 2 * j]
            LU = sys.jacobian_action(z, t, U)
            Lr = _mT(U) @ LU
            out += [LU - U @ Lr, Lr @ Phi]
        return tuple(out)

    def post(t, y):
        y = list(y)
        for j in range(len(r_values)):
            y[2 + 2 * j] = orthonormalize(y[2 + 2 * j])
        return tuple(y)

    K = cfg.n_steps
    lam = np.empty((K, n))
    red = {r: np.empty((K, r)) for r in r_values}
    align = {r: np.empty(K) for r in r_values}

    def observe(k, t, y):
        if k == 0:
            return
        T = t - cfg.t0
        F = y[1]
        w, v = np.linalg.eigh(0.5 * (F @ F.T + (F @ F.T).T))
        lam[k - 1] = w[::-1]
        eta = v[:, ::-1]
        for j, r in enumerate(r_values):
            U, Phi = y[2 + 2 * j], y[3 + 2 * j]
            red[r][k - 1] = exponents_from_eigenvalues(strain_eigenvalues(Phi), T)
            # top-r eigenspace is undefined when lambda_r and lambda_{r+1} coincide
            w_desc = w[::-1]
            if r < n and w_desc[r] > 0 and w_desc[r - 1] < w_desc[r] * (1 + DEGENERACY_RATIO):
                align[r][k - 1] = np.nan
            else:
                align[r][k - 1] = subspace_distance_batch(U, eta[:, :r])

    integrate_coupled(rhs, tuple(y0), cfg, post_step=post, observe=observe)
    horizons = cfg.times[1:] - cfg.t0
    full = exponents_from_eigenvalues(lam, horizons[:, None])
    return FtleHistory(horizons, lam, full, red, align, z0, cfg.t0)


def equivalence_history(sys, z0, r: int, cfg: IntegratorConfig, U0=None) -> tuple:
    """Distance between the OTD span and the span of ``V' = L V``, ``V0 = U0``.

    ``V`` columns are rescaled to unit length after each step, which keeps
    them representable without changing their span.  Returns
    ``(times, gamma)`` including ``t0``.
    """
    z0 = np.asarray(z0, dtype=float)
    if U0 is None:
        U0 = otd_init(sys, z0, cfg.t0, r).U
    U0 = _check_basis(U0, sys.dimension)

    def rhs(t, y):
        z, U, V = y
        LU = sys.jacobian_action(z, t, U)
        return (
            sys.vector_field(z, t),
            LU - U @ (_mT(U) @ LU),
            sys.jacobian_action(z, t, V),
        )

    def post(t, y):
        z, U, V = y
        return z, orthonormalize(U), V / np.linalg.norm(V, axis=-2, keepdims=True)

    gam = np.empty(cfg.n_steps + 1)

    def observe(k, t, y):
        gam[k] = subspace_distance_batch(y[1], y[2])

    integrate_coupled(rhs, (z0, U0, U0.copy()), cfg, post_step=post, observe=observe)
    return cfg.times, gam
