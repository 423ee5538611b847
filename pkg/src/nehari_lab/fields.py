"""Periodic-box discretisation: spectral fractional Laplacian, norms, coupling.

Fields are plain ``numpy`` arrays of shape ``(n,) * dim`` sampled on the
uniform grid of ``[-L, L)^dim``. A pair is a :class:`FieldPair` holding two
such arrays on the same :class:`GridSpec`.

The Gagliardo seminorm is represented by its Fourier form::

    [f]^2 = sum_k |k|^(2s) |f_hat(k)|^2     (quadrature-weighted)

which is exactly ``int f * (-Delta)^s f`` on the grid. This drops the
normalising constant ``C(N, s)`` of the double-integral definition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateInputError, DomainError
from .fibering import Exponents, FiberingCoefficients

CONE_THRESHOLD = 1e-14


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    half_width: float = 16.0
    points_per_dim: int = 256
    s: float = 0.4

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not 0 < self.s < 1:
            raise DomainError(f"fractional order s must lie in (0, 1), got {self.s}")
        if not self.dim > 2 * self.s:
            raise DomainError(
                f"assumption (P) requires N > 2s, got N={self.dim}, s={self.s}")
        n = self.points_per_dim
        if n < 16 or n & (n - 1):
            raise DomainError(f"points_per_dim must be a power of two >= 16, got {n}")
        if not self.half_width > 0:
            raise DomainError(f"half_width must be positive, got {self.half_width}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / self.points_per_dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return (2 * self.half_width) ** self.dim

    @property
    def critical_exponent(self) -> float:
        return 2 * self.dim / (self.dim - 2 * self.s)

    def axis(self) -> np.ndarray:
        n, L = self.points_per_dim, self.half_width
        return -L + self.spacing * np.arange(n)

    def coords(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")

    def radius_sq(self) -> np.ndarray:
        return sum(x ** 2 for x in self.coords())

    def wavenumber_sq(self) -> np.ndarray:
        k = np.fft.fftfreq(self.points_per_dim, d=self.spacing) * 2 * np.pi
        ks = np.meshgrid(*([k] * self.dim), indexing="ij")
        return sum(kk ** 2 for kk in ks)

    def symbol(self, s: float | None = None) -> np.ndarray:
        """Fourier multiplier ``|k|^(2s)``, zero at ``k = 0``."""
        return _symbol(self, self.s if s is None else s)

    def with_(self, **changes) -> "GridSpec":
        return GridSpec(**{**self.__dict__, **changes})


@lru_cache(maxsize=64)
def _symbol(grid, s):
    sym = grid.wavenumber_sq() ** s
    sym.setflags(write=False)
    return sym


@dataclass(frozen=True)
class PotentialSpec:
    """``power_law``: ``(1 + |x|^2)^gamma``; ``constant``: ``V0``; ``tabulated``: given values."""

    kind: str = "power_law"
    gamma: float = 1.0
    v0: float = 1.0
    values: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("power_law", "constant", "tabulated"):
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if self.kind == "constant" and not self.v0 > 0:
            raise DomainError(f"(V0) requires a positive constant potential, got {self.v0}")
        if self.kind == "tabulated" and self.values is None:
            raise DomainError("tabulated potential needs values")

    def check(self, grid: GridSpec) -> None:
        """Raise when the (V1) example condition ``gamma > N/2`` fails."""
        if self.kind == "power_law" and not self.gamma > grid.dim / 2:
            raise DomainError(
                f"(V1) example condition requires gamma > N/2 = {grid.dim / 2}, "
                f"got gamma={self.gamma}")

    def on(self, grid: GridSpec) -> np.ndarray:
        return _potential_values(self, grid)

    def _evaluate(self, grid):
        if self.kind == "power_law":
            V = (1.0 + grid.radius_sq()) ** self.gamma
        elif self.kind == "constant":
            V = np.full(grid.shape, float(self.v0))
        else:
            V = np.asarray(self.values, dtype=float).reshape(grid.shape)
        if not np.all(V > 0):
            raise DomainError("(V0) requires a potential bounded below by a positive constant")
        V.setflags(write=False)
        return V

    def lower_bound(self, grid: GridSpec) -> float:
        return float(self.on(grid).min())


@lru_cache(maxsize=64)
def _potential_values(pot, grid):
    return pot._evaluate(grid)


@dataclass(frozen=True)
class FieldPair:
    u: np.ndarray
    v: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != self.grid.shape or v.shape != self.grid.shape:
            raise DomainError(
                f"fields must have shape {self.grid.shape}, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def __mul__(self, k: float) -> "FieldPair":
        return FieldPair(k * self.u, k * self.v, self.grid)

    __rmul__ = __mul__

    def __add__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.u + other.u, self.v + other.v, self.grid)

    def __sub__(self, other: "FieldPair") -> "FieldPair":
        return FieldPair(self.u - other.u, self.v - other.v, self.grid)

    def abs(self) -> "FieldPair":
        return FieldPair(np.abs(self.u), np.abs(self.v), self.grid)

    def stack(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    @classmethod
    def from_stack(cls, arr, grid: GridSpec) -> "FieldPair":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0], arr[1], grid)

    def is_zero(self) -> bool:
        return not (np.any(self.u) or np.any(self.v))


def fractional_laplacian_apply(f: np.ndarray, grid: GridSpec, s: float | None = None) -> np.ndarray:
    """``(-Delta)^s f`` through the Fourier multiplier ``|k|^(2s)``.

    ``s`` may be overridden (``s = 1`` gives the spectral ``-Delta``).
    """
    return np.fft.ifftn(grid.symbol(s) * np.fft.fftn(f)).real


def inner(f: np.ndarray, g: np.ndarray, grid: GridSpec) -> float:
    """Quadrature inner product ``h^N sum f g``."""
    return grid.cell_volume * math.fsum(np.ravel(f * g))


def spectral_inner(f: np.ndarray, g: np.ndarray, grid: GridSpec, s: float | None = None) -> float:
    """``sum |k|^(2s) f_hat conj(g_hat)`` with the same weights as :func:`inner`."""
    fh, gh = np.fft.fftn(f), np.fft.fftn(g)
    w = grid.cell_volume / f.size
    return w * math.fsum(np.ravel((grid.symbol(s) * fh * np.conj(gh)).real))


def gagliardo_seminorm_sq(f: np.ndarray, grid: GridSpec) -> float:
    return spectral_inner(f, f, grid)


def plancherel_sq(f: np.ndarray, grid: GridSpec) -> float:
    """``||f||_2^2`` evaluated on the Fourier side."""
    fh = np.fft.fftn(f)
    return grid.cell_volume / f.size * math.fsum(np.ravel(np.abs(fh) ** 2))


def lp_norm_pow(f: np.ndarray, r: float, grid: GridSpec) -> float:
    """``h^N sum |f|^r`` for ``r`` in ``[1, 2N/(N-2s)]``."""
    if not 1 <= r <= grid.critical_exponent:
        raise DomainError(
            f"exponent r={r} outside [1, {grid.critical_exponent}] for this grid")
    return grid.cell_volume * math.fsum(np.ravel(np.abs(f) ** r))


def weighted_l2_sq(f: np.ndarray, V: np.ndarray, grid: GridSpec) -> float:
    return grid.cell_volume * math.fsum(np.ravel(V * f * f))


def single_x_norm_sq(f: np.ndarray, V: np.ndarray, grid: GridSpec) -> float:
    return gagliardo_seminorm_sq(f, grid) + weighted_l2_sq(f, V, grid)


def x_norm_sq(pair: FieldPair, pots) -> float:
    """``[u]^2 + [v]^2 + int V1 u^2 + int V2 v^2``.

    ``pots`` is a pair of :class:`PotentialSpec` or of potential arrays.
    """
    V1, V2 = (P.on(pair.grid) if isinstance(P, PotentialSpec) else P for P in pots)
    g = pair.grid
    return single_x_norm_sq(pair.u, V1, g) + single_x_norm_sq(pair.v, V2, g)


def coupling_integral(pair: FieldPair, alpha: float, beta: float) -> float:
    """``h^N sum |u|^alpha |v|^beta``."""
    g = pair.grid
    return g.cell_volume * math.fsum(np.ravel(np.abs(pair.u) ** alpha * np.abs(pair.v) ** beta))


def in_cone(pair: FieldPair, alpha: float, beta: float) -> bool:
    return coupling_integral(pair, alpha, beta) > CONE_THRESHOLD * pair.grid.volume


def coefficients_of(pair: FieldPair, params) -> FiberingCoefficients:
    """Fibering invariants of ``pair`` under ``params`` (a :class:`~nehari_lab.energy.ProblemParams`)."""
    if pair.is_zero():
        raise DegenerateInputError("zero pair has no fibering coefficients")
    e = params.exp
    g = pair.grid
    a = x_norm_sq(pair, params.potential_arrays())
    b = params.theta * coupling_integral(pair, e.alpha, e.beta)
    if b <= CONE_THRESHOLD * g.volume * params.theta:
        b = 0.0
    c = lp_norm_pow(pair.u, e.p, g)
    d = lp_norm_pow(pair.v, e.q, g)
    return FiberingCoefficients(a, b, c, d, e)


# --- builders ---------------------------------------------------------------

def gaussian(grid: GridSpec, center=0.0, width=1.0, amplitude=1.0) -> np.ndarray:
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coords(), center))
    return amplitude * np.exp(-0.5 * r2 / width ** 2)


def cosine_mode(grid: GridSpec, m: int = 1, axis: int = 0) -> np.ndarray:
    """``cos(k x)`` with ``k = pi m / L`` along one axis, an exact grid eigenfunction."""
    k = np.pi * m / grid.half_width
    return np.cos(k * grid.coords()[axis])


def gaussian_pair(grid: GridSpec, offset=0.5, width=1.5, ratio=1.0) -> FieldPair:
    """Two overlapping bumps offset symmetrically about the origin."""
    shift = np.zeros(grid.dim)
    shift[0] = offset
    return FieldPair(gaussian(grid, -shift, width), gaussian(grid, shift, width, ratio), grid)


# --- embedding constants (diagnostic) ----------------------------------------

def estimate_embedding_constant(grid: GridSpec, V: np.ndarray, r: float,
                                seed: int = 0, n_random: int = 64) -> float:
    """Empirical ``max ||f||_r / ||f||_X`` over bumps and smooth random fields.

    A lower estimate of the discrete best constant; used only to assemble
    diagnostic bounds.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    center = np.unravel_index(np.argmin(V), V.shape)
    c = np.array([grid.axis()[i] for i in center])
    for w in np.geomspace(grid.spacing, grid.half_width / 2, 40):
        f = gaussian(grid, c, w)
        best = max(best, _embedding_ratio(f, V, r, grid))
    k2 = grid.wavenumber_sq()
    for _ in range(n_random):
        decay = rng.uniform(0.5, 4.0)
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        f = np.fft.ifftn(noise * np.exp(-decay * k2)).real
        f *= np.exp(-0.5 * grid.radius_sq() / rng.uniform(0.5, grid.half_width / 2) ** 2)
        best = max(best, _embedding_ratio(f, V, r, grid))
    return best


def _embedding_ratio(f, V, r, grid):
    return lp_norm_pow(f, r, grid) ** (1 / r) / math.sqrt(single_x_norm_sq(f, V, grid))


# --- Riesz map of the X inner product -----------------------------------------

class RieszMap:
    """Solve ``((-Delta)^s + V) y = g`` for one component.

    Dense Cholesky on small grids, Fourier-preconditioned conjugate gradients
    otherwise. Turns an L2 gradient into the X-gradient.
    """

    dense_limit = 1024

    def __init__(self, grid: GridSpec, V: np.ndarray, rtol: float = 1e-12):
        import scipy.linalg as sla
        self.grid, self.V, self.rtol = grid, V, rtol
        size = V.size
        if size <= self.dense_limit:
            eye = np.eye(size).reshape((size,) + grid.shape)
            axes = tuple(range(1, grid.dim + 1))
            L = np.fft.ifftn(grid.symbol() * np.fft.fftn(eye, axes=axes), axes=axes).real
            M = L.reshape(size, size) + np.diag(V.ravel())
            self._chol = sla.cho_factor(0.5 * (M + M.T))
        else:
            self._chol = None
            self._pre = 1.0 / (grid.symbol() + float(np.mean(V)))

    def __call__(self, g: np.ndarray) -> np.ndarray:
        import scipy.linalg as sla
        if self._chol is not None:
            return sla.cho_solve(self._chol, g.ravel()).reshape(g.shape)
        return self._cg(g)

    def _cg(self, g):
        from scipy.sparse.linalg import LinearOperator, cg
        shape, size, grid, V = g.shape, g.size, self.grid, self.V
        A = LinearOperator((size, size), dtype=float, matvec=lambda x: (
            fractional_laplacian_apply(x.reshape(shape), grid) + V * x.reshape(shape)).ravel())
        M = LinearOperator((size, size), dtype=float, matvec=lambda x: np.fft.ifftn(
            self._pre * np.fft.fftn(x.reshape(shape))).real.ravel())
        y, info = cg(A, g.ravel(), rtol=self.rtol, atol=0.0, M=M, maxiter=2000)
        return y.reshape(shape)
