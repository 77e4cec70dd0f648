"""Dynamical-system contract and the shipped benchmark models.

Every model evaluates on arrays with arbitrary leading batch axes:
``vector_field`` maps ``(..., n) -> (..., n)`` and ``jacobian`` maps
``(..., n) -> (..., n, n)``.  Grid scans rely on this to advance many
initial conditions in one vectorised RK4 step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError

SQRT2 = math.sqrt(2.0)


class DynamicalSystem:
    """Smooth vector field ``f(z, t)`` with Jacobian ``L(z, t)``."""

    name = "custom"
    dimension: int

    def vector_field(self, z, t):
        raise NotImplementedError

    def jacobian(self, z, t):
        raise NotImplementedError

    def jacobian_action(self, z, t, M):
        """Return ``L(z, t) @ M`` for ``M`` of shape ``(..., n, m)``.

        Override for matrix-free or sparse operators.
        """
        return self.jacobian(z, t) @ M

    def describe(self) -> dict:
        return {"model": self.name, "dimension": self.dimension}


# ---------------------------------------------------------------- ABC flow


@dataclass(frozen=True)
class AbcParams:
    A: float = math.sqrt(3.0)
    B: float = math.sqrt(2.0)
    C: float = 1.0


def abc_vector_field(z, t, p: AbcParams = AbcParams()):
    z = np.asarray(z, dtype=float)
    x, y, w = z[..., 0], z[..., 1], z[..., 2]
    return np.stack(
        [
            p.A * np.sin(w) + p.C * np.cos(y),
            p.B * np.sin(x) + p.A * np.cos(w),
            p.C * np.sin(y) + p.B * np.cos(x),
        ],
        axis=-1,
    )


def abc_jacobian(z, t, p: AbcParams = AbcParams()):
    z = np.asarray(z, dtype=float)
    x, y, w = z[..., 0], z[..., 1], z[..., 2]
    L = np.zeros(z.shape[:-1] + (3, 3))
    L[..., 0, 1] = -p.C * np.sin(y)
    L[..., 0, 2] = p.A * np.cos(w)
    L[..., 1, 0] = p.B * np.cos(x)
    L[..., 1, 2] = -p.A * np.sin(w)
    L[..., 2, 0] = -p.B * np.sin(x)
    L[..., 2, 1] = p.C * np.cos(y)
    return L


@dataclass(frozen=True)
class AbcFlow(DynamicalSystem):
    params: AbcParams = field(default_factory=AbcParams)

    name = "abc"
    dimension = 3

    def vector_field(self, z, t):
        return abc_vector_field(z, t, self.params)

    def jacobian(self, z, t):
        return abc_jacobian(z, t, self.params)

    def describe(self) -> dict:
        p = self.params
        return {"model": "abc", "dimension": 3, "A": p.A, "B": p.B, "C": p.C}


# ------------------------------------------------------- Charney-DeVore


@dataclass(frozen=True)
class CdvCoefficients:
    alpha: tuple[float, float]
    beta: tuple[float, float]
    delta: tuple[float, float]
    gamma: tuple[float, float]
    gamma_star: tuple[float, float]
    epsilon: float


def _cdv_mode(m: int, beta: float, gamma: float, b: float):
    b2, m2 = b * b, m * m
    alpha_m = 8 * SQRT2 / math.pi * m2 / (4 * m2 - 1) * (b2 + m2 - 1) / (b2 + m2)
    beta_m = beta * b2 / (b2 + m2)
    delta_m = 64 * SQRT2 / (15 * math.pi) * (b2 - m2 + 1) / (b2 + m2)
    gamma_star_m = gamma * 4 * m / (4 * m2 - 1) * SQRT2 * b / math.pi
    gamma_m = gamma * 4 * m**3 / (4 * m2 - 1) * SQRT2 * b / (math.pi * (b2 + m2))
    return alpha_m, beta_m, delta_m, gamma_m, gamma_star_m


@dataclass(frozen=True)
class CdvParams:
    """Six-mode Charney-DeVore parameters; coefficients derive on access."""

    z1_star: float = 0.95
    z4_star: float = -0.76095
    C: float = 0.1
    beta: float = 1.25
    gamma: float = 0.2
    b: float = 0.5

    @property
    def coefficients(self) -> CdvCoefficients:
        m1 = _cdv_mode(1, self.beta, self.gamma, self.b)
        m2 = _cdv_mode(2, self.beta, self.gamma, self.b)
        return CdvCoefficients(
            alpha=(m1[0], m2[0]),
            beta=(m1[1], m2[1]),
            delta=(m1[2], m2[2]),
            gamma=(m1[3], m2[3]),
            gamma_star=(m1[4], m2[4]),
            epsilon=16 * SQRT2 / (5 * math.pi),
        )


def cdv_vector_field(z, t, p: CdvParams = CdvParams(), as_printed: bool = False):
    """Right-hand side of the CDV model.

    ``as_printed`` selects ``(alpha_2 z1 - beta_2) z2`` in the sixth
    equation instead of the ``z5`` factor of the standard formulation.
    """
    z = np.asarray(z, dtype=float)
    c = p.coefficients
    a1, a2 = c.alpha
    b1, b2 = c.beta
    d1, d2 = c.delta
    g1, g2 = c.gamma
    gs1, gs2 = c.gamma_star
    eps, C = c.epsilon, p.C
    z1, z2, z3, z4, z5, z6 = (z[..., i] for i in range(6))
    s1 = a1 * z1 - b1
    s2 = a2 * z1 - b2
    return np.stack(
        [
            gs1 * z3 - C * (z1 - p.z1_star),
            -s1 * z3 - C * z2 - d1 * z4 * z6,
            s1 * z2 - g1 * z1 - C * z3 + d1 * z4 * z5,
            gs2 * z6 - C * (z4 - p.z4_star) + eps * (z2 * z6 - z3 * z5),
            -s2 * z6 - C * z5 - d2 * z4 * z3,
            s2 * (z2 if as_printed else z5) - g2 * z4 - C * z6 + d2 * z4 * z2,
        ],
        axis=-1,
    )


def cdv_jacobian(z, t, p: CdvParams = CdvParams(), as_printed: bool = False):
    z = np.asarray(z, dtype=float)
    c = p.coefficients
    a1, a2 = c.alpha
    b1, b2 = c.beta
    d1, d2 = c.delta
    g1, g2 = c.gamma
    gs1, gs2 = c.gamma_star
    eps, C = c.epsilon, p.C
    z1, z2, z3, z4, z5, z6 = (z[..., i] for i in range(6))
    L = np.zeros(z.shape[:-1] + (6, 6))
    L[..., 0, 0] = -C
    L[..., 0, 2] = gs1

    L[..., 1, 0] = -a1 * z3
    L[..., 1, 1] = -C
    L[..., 1, 2] = -(a1 * z1 - b1)
    L[..., 1, 3] = -d1 * z6
    L[..., 1, 5] = -d1 * z4

    L[..., 2, 0] = a1 * z2 - g1
    L[..., 2, 1] = a1 * z1 - b1
    L[..., 2, 2] = -C
    L[..., 2, 3] = d1 * z5
    L[..., 2, 4] = d1 * z4

    L[..., 3, 1] = eps * z6
    L[..., 3, 2] = -eps * z5
    L[..., 3, 3] = -C
    L[..., 3, 4] = -eps * z3
    L[..., 3, 5] = gs2 + eps * z2

    L[..., 4, 0] = -a2 * z6
    L[..., 4, 2] = -d2 * z4
    L[..., 4, 3] = -d2 * z3
    L[..., 4, 4] = -C
    L[..., 4, 5] = -(a2 * z1 - b2)

    L[..., 5, 3] = -g2 + d2 * z2
    L[..., 5, 5] = -C
    if as_printed:
        L[..., 5, 0] = a2 * z2
        L[..., 5, 1] = (a2 * z1 - b2) + d2 * z4
    else:
        L[..., 5, 0] = a2 * z5
        L[..., 5, 1] = d2 * z4
        L[..., 5, 4] = a2 * z1 - b2
    return L


@dataclass(frozen=True)
class CdvModel(DynamicalSystem):
    params: CdvParams = field(default_factory=CdvParams)
    as_printed: bool = False

    name = "cdv"
    dimension = 6

    def vector_field(self, z, t):
        return cdv_vector_field(z, t, self.params, self.as_printed)

    def jacobian(self, z, t):
        return cdv_jacobian(z, t, self.params, self.as_printed)

    def describe(self) -> dict:
        p = self.params
        return {
            "model": "cdv",
            "dimension": 6,
            "z1_star": p.z1_star,
            "z4_star": p.z4_star,
            "C": p.C,
            "beta": p.beta,
            "gamma": p.gamma,
            "b": p.b,
            "cdv_as_printed": self.as_printed,
        }


# ------------------------------------------------------ linear oracle


class LinearSystem(DynamicalSystem):
    """Autonomous ``z' = A z``; ``A`` may be dense or scipy-sparse."""

    name = "linear"

    def __init__(self, matrix):
        if sp.issparse(matrix):
            A = sp.csr_array(matrix, dtype=float)
        else:
            A = np.array(matrix, dtype=float)
            if A.ndim == 0:
                A = A.reshape(1, 1)
            A.setflags(write=False)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"linear model needs a square matrix, got {A.shape}")
        self.matrix = A
        self.dimension = A.shape[0]

    @property
    def sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def _dense(self):
        return self.matrix.toarray() if self.sparse else self.matrix

    def vector_field(self, z, t):
        z = np.asarray(z, dtype=float)
        if self.sparse:
            if z.ndim == 1:
                return self.matrix @ z
            flat = z.reshape(-1, self.dimension)
            return (self.matrix @ flat.T).T.reshape(z.shape)
        return z @ self.matrix.T

    def jacobian(self, z, t):
        z = np.asarray(z)
        return np.broadcast_to(self._dense(), z.shape[:-1] + self.matrix.shape).copy()

    def jacobian_action(self, z, t, M):
        if not self.sparse:
            return self.matrix @ M
        M = np.asarray(M)
        if M.ndim == 2:
            return self.matrix @ M
        n, m = M.shape[-2:]
        lead = M.shape[:-2]
        flat = np.moveaxis(M.reshape((-1, n, m)), 1, 0).reshape(n, -1)
        out = (self.matrix @ flat).reshape(n, -1, m)
        return np.moveaxis(out, 0, 1).reshape(lead + (n, m))

    def describe(self) -> dict:
        d = self._dense()
        return {
            "model": "linear",
            "dimension": self.dimension,
            "matrix": ";".join(",".join(repr(float(v)) for v in row) for row in d),
        }


class FunctionSystem(DynamicalSystem):
    """Wrap plain callables as a model.

    Unless ``batched`` is true the callables only see single states and are
    looped over any leading batch axes.
    """

    def __init__(
        self,
        dimension: int,
        vector_field: Callable,
        jacobian: Callable,
        name: str = "custom",
        batched: bool = False,
    ):
        self.dimension = int(dimension)
        self._f = vector_field
        self._jac = jacobian
        self.name = name
        self.batched = batched

    def _map(self, fn, z, t, tail):
        z = np.asarray(z, dtype=float)
        if self.batched or z.ndim == 1:
            return np.asarray(fn(z, t), dtype=float)
        flat = z.reshape(-1, self.dimension)
        out = np.stack([np.asarray(fn(zi, t), dtype=float) for zi in flat])
        return out.reshape(z.shape[:-1] + tail)

    def vector_field(self, z, t):
        return self._map(self._f, z, t, (self.dimension,))

    def jacobian(self, z, t):
        n = self.dimension
        return self._map(self._jac, z, t, (n, n))


# ------------------------------------------------------------ registry

_REGISTRY: dict[str, Callable[..., DynamicalSystem]] = {}


def register_model(name: str, factory: Callable[..., DynamicalSystem]) -> None:
    _REGISTRY[name] = factory


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def make_model(name: str, **params) -> DynamicalSystem:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; choose from {', '.join(available_models())}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from None


def _make_abc(**params):
    return AbcFlow(AbcParams(**params))


def _make_cdv(cdv_as_printed: bool = False, **params):
    return CdvModel(CdvParams(**params), as_printed=cdv_as_printed)


def _make_linear(matrix=None):
    if matrix is None:
        raise TypeError("the linear model requires a matrix")
    return LinearSystem(matrix)


register_model("abc", _make_abc)
register_model("cdv", _make_cdv)
register_model("linear", _make_linear)
