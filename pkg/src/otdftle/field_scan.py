"""FTLE fields over 2-D slices of phase space, their files, and the cost benchmark.

Grid points are split into fixed-size chunks in row-major order.  The chunk
boundaries never depend on the worker count, so the gathered field is
bitwise identical for any number of workers.
"""

from __future__ import annotations

import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

from . import __version__
from .diagnostics import DEFAULT_CROSSING_THRESHOLD, gap_crossings
from .errors import ConfigError, OtdFtleError
from .integrators import IntegratorConfig, integrate_coupled
from .models import LinearSystem
from .otd import _mT, orthonormalize_masked, otd_init, otd_rhs_coupled
from .tangent import FdConfig, exponents_from_eigenvalues, variational_rhs

# flag bits; a point is unflagged iff its value is finite
DIVERGED = 1
DEGENERATE_BASIS = 2
EXCEEDS_FULL = 4
CROSSING = 8
INVALID_SPECTRUM = 16
FAILURE_MASK = DIVERGED | DEGENERATE_BASIS | EXCEEDS_FULL | INVALID_SPECTRUM
FLAG_NAMES = {
    DIVERGED: "diverged",
    DEGENERATE_BASIS: "degenerate_basis",
    EXCEEDS_FULL: "reduced_exceeds_full",
    CROSSING: "eigenvalue_crossing",
    INVALID_SPECTRUM: "invalid_spectrum",
}
EXCEEDS_TOL = 1e-6
CHUNK = 256
METHODS = ("full_fd", "full_variational", "reduced")


@dataclass(frozen=True)
class GridSpec:
    """2-D slice: ``axes`` are zero-based coordinate indices.

    ``ranges`` holds ``(min, max, count)`` for each varying axis, endpoints
    inclusive; ``fixed`` holds the remaining coordinates in index order.
    """

    axes: tuple[int, int]
    ranges: tuple[tuple[float, float, int], tuple[float, float, int]]
    fixed: tuple[float, ...] = ()

    def __post_init__(self):
        a, b = self.axes
        if a == b:
            raise ConfigError("grid axes must differ")
        for lo, hi, count in self.ranges:
            if int(count) < 2:
                raise ConfigError(f"grid count must be >= 2, got {count}")
            if not lo < hi:
                raise ConfigError(f"grid range needs min < max, got {lo}:{hi}")

    @property
    def dimension(self) -> int:
        return len(self.fixed) + 2

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.ranges[0][2]), int(self.ranges[1][2]))

    def coordinates(self):
        return tuple(np.linspace(lo, hi, int(c)) for lo, hi, c in self.ranges)

    def points(self) -> np.ndarray:
        """Initial conditions, shape ``(count1 * count2, n)`` in row-major order."""
        n = self.dimension
        if max(self.axes) >= n or min(self.axes) < 0:
            raise ConfigError(f"grid axes {self.axes} out of range for n={n}")
        x, y = self.coordinates()
        X, Y = np.meshgrid(x, y, indexing="ij")
        P = np.empty(X.shape + (n,))
        others = [i for i in range(n) if i not in self.axes]
        for i, v in zip(others, self.fixed):
            P[..., i] = v
        P[..., self.axes[0]] = X
        P[..., self.axes[1]] = Y
        return P.reshape(-1, n)

    def check_dimension(self, n: int):
        if self.dimension != n:
            raise ConfigError(
                f"grid fixes {len(self.fixed)} coordinates; model needs {n - 2}"
            )

    def describe(self) -> str:
        parts = [f"z{a + 1}={lo!r}:{hi!r}:{int(c)}" for a, (lo, hi, c) in zip(self.axes, self.ranges)]
        others = [i for i in range(self.dimension) if i not in self.axes]
        parts += [f"z{i + 1}={v!r}" for i, v in zip(others, self.fixed)]
        return " ".join(parts)


@dataclass
class FieldSlice:
    grid: GridSpec
    values: np.ndarray
    method: str
    flags: np.ndarray
    r: int | None = None
    crossing: np.ndarray | None = None
    reference: np.ndarray | None = None  # full Lambda_1 when computed alongside
    meta: dict = field(default_factory=dict)

    @property
    def flagged(self) -> np.ndarray:
        return (self.flags & FAILURE_MASK) != 0


# ------------------------------------------------------------- chunk kernels


def _safe_eigvalsh(G):
    ok = np.isfinite(G).all(axis=(-2, -1))
    G = np.where(ok[..., None, None], G, np.eye(G.shape[-1]))
    w = np.linalg.eigvalsh(0.5 * (G + _mT(G)))[..., ::-1]
    return np.where(ok[..., None], w, np.nan)


def _finite_rows(a):
    return np.isfinite(a.reshape(a.shape[0], -1)).all(axis=1)


def _full_chunk(args):
    sys, pts, cfg, method, h = args
    with threadpool_limits(1):
        n = sys.dimension
        if method == "full_fd":
            E = h * np.eye(n)
            plus, minus = pts[:, None, :] + E, pts[:, None, :] - E
            aux = np.concatenate([plus, minus], axis=1)
            (fin,) = integrate_coupled(
                lambda t, y: (sys.vector_field(y[0], t),), (aux,), cfg, check_finite=False
            )
            spacing = np.diagonal(plus - minus, axis1=-2, axis2=-1)
            F = _mT(fin[:, :n] - fin[:, n:]) / spacing[:, None, :]
        else:
            F0 = np.broadcast_to(np.eye(n), (len(pts), n, n)).copy()
            _, F = integrate_coupled(variational_rhs(sys), (pts, F0), cfg, check_finite=False)
        flags = np.where(_finite_rows(F), 0, DIVERGED)
        lam1 = _safe_eigvalsh(_mT(F) @ F)[:, 0]
        vals = exponents_from_eigenvalues(lam1, cfg.T)
        flags = np.where((flags == 0) & ~np.isfinite(vals), INVALID_SPECTRUM, flags)
        vals = np.where(flags == 0, vals, np.nan)
    return vals, flags


def _reduced_chunk(args):
    sys, pts, cfg, r, with_full, threshold = args
    with threadpool_limits(1):
        m, n = pts.shape
        U0 = otd_init(sys, pts, cfg.t0, r).U
        Phi0 = np.broadcast_to(np.eye(r), (m, r, r)).copy()
        bad_basis = np.zeros(m, dtype=bool)
        base_rhs = otd_rhs_coupled(sys)
        gaps = []

        if with_full:
            F0 = np.broadcast_to(np.eye(n), (m, n, n)).copy()

            def rhs(t, y):
                z, U, Phi, F = y
                return (*base_rhs(t, (z, U, Phi)), sys.jacobian_action(z, t, F))

            y0 = (pts, U0, Phi0, F0)
        else:
            rhs, y0 = base_rhs, (pts, U0, Phi0)

        def post(t, y):
            Q, bad = orthonormalize_masked(y[1])
            bad_basis[:] |= bad
            return (y[0], Q, *y[2:])

        def observe(k, t, y):
            if with_full and k > 0 and r < n:
                lam = _safe_eigvalsh(_mT(y[3]) @ y[3])
                with np.errstate(divide="ignore", invalid="ignore"):
                    gaps.append(lam[:, r - 1] / lam[:, r] - 1.0)

        y = integrate_coupled(rhs, y0, cfg, post_step=post, observe=observe, check_finite=False)
        Phi = y[2]
        flags = np.zeros(m, dtype=np.int64)
        flags[~_finite_rows(Phi) | ~_finite_rows(y[1])] |= DIVERGED
        flags[bad_basis] |= DEGENERATE_BASIS
        gam1 = _safe_eigvalsh(_mT(Phi) @ Phi)[:, 0]
        vals = exponents_from_eigenvalues(gam1, cfg.T)
        flags[(flags == 0) & ~np.isfinite(vals)] |= INVALID_SPECTRUM
        ref = crossing = None
        if with_full:
            F = y[3]
            flags[~_finite_rows(F)] |= DIVERGED
            ref = exponents_from_eigenvalues(_safe_eigvalsh(_mT(F) @ F)[:, 0], cfg.T)
            exceeds = np.isfinite(ref) & np.isfinite(vals) & (vals > ref + EXCEEDS_TOL)
            flags[exceeds] |= EXCEEDS_FULL
            if gaps:
                crossing = gap_crossings(np.array(gaps), threshold)
            else:
                crossing = np.zeros(m, dtype=bool)
            flags[crossing] |= CROSSING
        vals = np.where((flags & FAILURE_MASK & ~EXCEEDS_FULL) == 0, vals, np.nan)
    return vals, flags, ref, crossing


def _run_chunks(kernel, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [kernel(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(kernel, payloads))


def _chunks(pts, size):
    return [pts[i : i + size] for i in range(0, len(pts), size)]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("OTDFTLE_WORKERS", "1")))
    except ValueError:
        raise ConfigError("OTDFTLE_WORKERS must be an integer") from None


def scan_full(
    sys,
    grid: GridSpec,
    method: str,
    cfg: IntegratorConfig,
    fd: FdConfig = FdConfig(),
    workers: int | None = None,
    chunk: int = CHUNK,
) -> FieldSlice:
    """Leading FTLE at every grid point, ``method`` in {"full_fd", "full_variational"}."""
    if method in ("fd", "finite_difference"):
        method = "full_fd"
    if method == "variational":
        method = "full_variational"
    if method not in ("full_fd", "full_variational"):
        raise ConfigError(f"unknown full method {method!r}")
    grid.check_dimension(sys.dimension)
    workers = default_workers() if workers is None else workers
    payloads = [(sys, c, cfg, method, fd.h) for c in _chunks(grid.points(), chunk)]
    parts = _run_chunks(_full_chunk, payloads, workers)
    vals = np.concatenate([p[0] for p in parts]).reshape(grid.shape)
    flags = np.concatenate([p[1] for p in parts]).reshape(grid.shape)
    meta = {"h": fd.h} if method == "full_fd" else {}
    return FieldSlice(grid, vals, method, flags.astype(np.int64), meta=meta)


def scan_reduced(
    sys,
    grid: GridSpec,
    r: int,
    cfg: IntegratorConfig,
    workers: int | None = None,
    chunk: int = CHUNK,
    with_full: bool = True,
    crossing_threshold: float = DEFAULT_CROSSING_THRESHOLD,
) -> FieldSlice:
    """Leading reduced FTLE at every grid point.

    With ``with_full`` the equation of variations is carried along, which
    provides the reference field, the ``Gamma_1 <= Lambda_1`` check and the
    crossing flags for the pair ``(r, r+1)``.
    """
    n = sys.dimension
    if not 1 <= r <= n:
        raise ConfigError(f"need 1 <= r <= {n}, got {r}")
    grid.check_dimension(n)
    workers = default_workers() if workers is None else workers
    payloads = [
        (sys, c, cfg, r, with_full, crossing_threshold) for c in _chunks(grid.points(), chunk)
    ]
    parts = _run_chunks(_reduced_chunk, payloads, workers)
    vals = np.concatenate([p[0] for p in parts]).reshape(grid.shape)
    flags = np.concatenate([p[1] for p in parts]).reshape(grid.shape)
    ref = crossing = None
    if with_full:
        ref = np.concatenate([p[2] for p in parts]).reshape(grid.shape)
        crossing = np.concatenate([p[3] for p in parts]).reshape(grid.shape)
    return FieldSlice(
        grid,
        vals,
        "reduced",
        flags.astype(np.int64),
        r=r,
        crossing=crossing,
        reference=ref,
        meta={"crossing_threshold": crossing_threshold} if with_full else {},
    )


# -------------------------------------------------------------- file I/O


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def field_header(slc: FieldSlice, cfg: IntegratorConfig | None = None, extra: dict | None = None):
    head = {
        "format": "otdftle-field-1",
        "version": __version__,
        "method": slc.method,
        **({} if slc.r is None else {"r": str(slc.r)}),
        "grid": slc.grid.describe(),
        "shape": f"{slc.grid.shape[0]}x{slc.grid.shape[1]}",
    }
    if cfg is not None:
        head.update(T=_fmt(cfg.T), dt=_fmt(cfg.dt), t0=_fmt(cfg.t0))
    head.update({k: (_fmt(v) if isinstance(v, float) else str(v)) for k, v in slc.meta.items()})
    head["flags"] = ",".join(f"{bit}={name}" for bit, name in FLAG_NAMES.items())
    if extra:
        head.update({k: str(v) for k, v in extra.items() if k not in head})
    return head


def write_field(slc: FieldSlice, path, cfg: IntegratorConfig | None = None, extra=None) -> None:
    """CSV: ``#``-prefixed ``key: value`` header, then ``x,y,value,flag`` rows.

    Values use 17 significant digits, which round-trips float64 exactly.
    """
    path = Path(path)
    head = field_header(slc, cfg, extra)
    x, y = slc.grid.coordinates()
    lines = [f"# {k}: {v}" for k, v in head.items()]
    lines.append("x,y,value,flag")
    for i, xi in enumerate(x):
        for j, yj in enumerate(y):
            lines.append(f"{_fmt(xi)},{_fmt(yj)},{_fmt(slc.values[i, j])},{int(slc.flags[i, j])}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write field file {path}: {exc}") from exc


@dataclass
class FieldData:
    header: dict
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    flags: np.ndarray


def read_field(path) -> FieldData:
    path = Path(path)
    header, rows = {}, []
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read field file {path}: {exc}") from exc
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            header[key.strip()] = val.strip()
        elif line and not line.startswith("x,"):
            rows.append(line.split(","))
    nx, ny = (int(s) for s in header["shape"].split("x"))
    arr = np.array([[float(a), float(b), float(c)] for a, b, c, _ in rows])
    flags = np.array([int(f) for *_, f in rows], dtype=np.int64)
    return FieldData(
        header,
        arr[::ny, 0].copy(),
        arr[:ny, 1].copy(),
        arr[:, 2].reshape(nx, ny),
        flags.reshape(nx, ny),
    )


def write_field_raw(slc: FieldSlice, path) -> None:
    """Little-endian: two uint64 dimensions, then float64 values row-major."""
    nx, ny = slc.values.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", nx, ny))
        fh.write(np.ascontiguousarray(slc.values, dtype="<f8").tobytes())


def read_field_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        nx, ny = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(nx, ny).astype(float)


# ------------------------------------------------------------ benchmark


def full_equation_count(n: int) -> int:
    return (n + 1) * n


def reduced_equation_count(n: int, r: int) -> int:
    return n * (r + 1) + r * r


def random_stable_matrix(n: int, bandwidth: int = 3, seed: int = 0):
    """Banded random matrix shifted to be strictly diagonally dominant and stable.

    Bandwidth stays fixed as ``n`` grows, so one Jacobian action on a vector
    costs O(n) and the timing follows the number of scalar equations.
    """
    rng = np.random.default_rng(seed + n)
    offsets = [o for o in range(-bandwidth, bandwidth + 1) if abs(o) < n]
    A = sp.diags([rng.standard_normal(n - abs(o)) for o in offsets], offsets, format="csr")
    shift = float(abs(A).sum(axis=1).max()) + 0.5
    return sp.csr_array(A - shift * sp.identity(n, format="csr"))


@dataclass
class CostRow:
    n: int
    r: int
    full_equations: int
    reduced_equations: int
    full_seconds: float
    reduced_seconds: float


@dataclass
class CostTable:
    rows: list
    full_slope: float
    reduced_slope: float


def _timed(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _loglog_slope(ns, ts):
    if len(ns) < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(ts), 1)[0])


def benchmark_scaling(
    n_list, r: int, cfg: IntegratorConfig, repeats: int = 3, seed: int = 0, bandwidth: int = 3
) -> CostTable:
    """Time full vs reduced FTLE integrations on synthetic linear systems.

    Equation counts are the sizes of the arrays actually integrated, so they
    double as a check of the closed-form totals.
    """
    rows = []
    for n in n_list:
        n = int(n)
        if not 1 <= r <= n:
            raise ConfigError(f"need 1 <= r <= n, got r={r}, n={n}")
        sys = LinearSystem(random_stable_matrix(n, bandwidth, seed))
        z0 = np.ones(n) / math.sqrt(n)
        full_y0 = (z0, np.eye(n))
        U0 = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, r)))[0]
        red_y0 = (z0, U0, np.eye(r))

        def post(t, y):
            return (y[0], orthonormalize_masked(y[1])[0], y[2])

        with threadpool_limits(1):
            t_full = _timed(lambda: integrate_coupled(variational_rhs(sys), full_y0, cfg), repeats)
            t_red = _timed(
                lambda: integrate_coupled(otd_rhs_coupled(sys), red_y0, cfg, post_step=post),
                repeats,
            )
        rows.append(
            CostRow(
                n,
                r,
                sum(a.size for a in full_y0),
                sum(a.size for a in red_y0),
                t_full,
                t_red,
            )
        )
    ns = [row.n for row in rows]
    return CostTable(
        rows,
        _loglog_slope(ns, [row.full_seconds for row in rows]),
        _loglog_slope(ns, [row.reduced_seconds for row in rows]),
    )


def write_cost_table(table: CostTable, path, extra: dict | None = None) -> None:
    lines = [
        "# format: otdftle-cost-1",
        f"# version: {__version__}",
        *(f"# {k}: {v}" for k, v in (extra or {}).items()),
        f"# full_slope: {_fmt(table.full_slope)}",
        f"# reduced_slope: {_fmt(table.reduced_slope)}",
        "n,r,full_equations,reduced_equations,full_seconds,reduced_seconds",
    ]
    for row in table.rows:
        lines.append(
            f"{row.n},{row.r},{row.full_equations},{row.reduced_equations},"
            f"{_fmt(row.full_seconds)},{_fmt(row.reduced_seconds)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
