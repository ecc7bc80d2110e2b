"""
Truncated Hermite eigenbasis of the harmonic oscillator.

The functions are indexed from 1, ``h_1 = pi**-0.25 * exp(-x**2/2)``, and
satisfy ``(-d^2/dx^2 + x^2) h_i = (2i - 1) h_i``.  Values are produced by the
normalized three-term recurrence with dynamic rescaling, so neither
factorials nor ``exp(x**2)`` are ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_hermite

from .errors import DomainError, QuadratureError

GRAM_TOL = 1e-10
LADDER_TOL = 1e-8
QUAD_MARGIN = 2

_LOG_BIG = 150.0 * np.log(10.0)


def eigenvalue(i: int) -> int:
    """Eigenvalue ``2i - 1`` of the i-th Hermite function (1-based)."""
    i = int(i)
    if i < 1:
        raise DomainError("Hermite index starts at 1")
    return 2 * i - 1


def hermite_functions(x, n: int) -> np.ndarray:
    """
    Evaluate ``h_1 .. h_n`` at the points ``x``.

    Parameters
    ----------
    x : array_like
        Evaluation points, any shape (flattened).
    n : int
        Number of functions.

    Returns
    -------
    ndarray, shape (x.size, n)
        ``out[p, i-1] = h_i(x_p)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((x.size, n))
    if n == 0:
        return out
    # recurrence on the polynomial part, Gaussian factor kept as a log scale
    logs = -0.5 * x**2
    prev = np.zeros_like(x)
    cur = np.full_like(x, np.pi**-0.25)
    out[:, 0] = cur * np.exp(logs)
    for m in range(1, n):
        nxt = np.sqrt(2.0 / m) * x * cur - np.sqrt((m - 1) / m) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if big.any():
            cur[big] *= 1e-150
            prev[big] *= 1e-150
            logs[big] += _LOG_BIG
        out[:, m] = cur * np.exp(logs)
    return out


def hermite_derivatives(x, values: np.ndarray) -> np.ndarray:
    """
    Derivatives ``h_i'`` from ``h_i' = -x h_i + sqrt(2(i-1)) h_{i-1}``.

    ``values`` must hold ``h_1 .. h_n`` at ``x`` as returned by
    :func:`hermite_functions`; the result has the same shape.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = values.shape[1]
    d = -x[:, None] * values
    if n > 1:
        i = np.arange(2, n + 1)
        d[:, 1:] += np.sqrt(2.0 * (i - 1)) * values[:, :-1]
    return d


def ladder_apply(i: int, which: str) -> tuple[float, int | None]:
    """
    Ladder action on ``h_i``.

    ``T = d/dx + x`` lowers, ``T^dagger = -d/dx + x`` raises:
    ``T h_i = sqrt(2(i-1)) h_{i-1}`` and ``T^dagger h_i = sqrt(2i) h_{i+1}``.

    Returns
    -------
    (coefficient, target)
        ``target`` is None when the image vanishes (``T h_1 = 0``).
    """
    i = int(i)
    if i < 1:
        raise DomainError("Hermite index starts at 1")
    if which in ("T", "lower"):
        if i == 1:
            return 0.0, None
        return float(np.sqrt(2.0 * (i - 1))), i - 1
    if which in ("Tdagger", "raise"):
        return float(np.sqrt(2.0 * i)), i + 1
    raise DomainError(f"unknown ladder operator {which!r}")


def _gauss_hermite(q: int) -> tuple[np.ndarray, np.ndarray]:
    # nodes from scipy; weights with the Gaussian folded back in,
    # W_k = w_k exp(x_k^2) = 1 / sum_{m<q} phi_m(x_k)^2 (Christoffel form)
    x, _ = roots_hermite(q)
    phi = hermite_functions(x, q)
    W = 1.0 / np.einsum("pm,pm->p", phi, phi)
    x = 0.5 * (x - x[::-1])
    W = 0.5 * (W + W[::-1])
    return x, W


@dataclass(frozen=True)
class HermiteBasis:
    """
    Hermite functions ``h_1 .. h_{n_max}`` sampled on a Gauss-Hermite rule.

    ``quad_weights`` are the compensated weights ``w_k exp(x_k**2)``, so that
    ``sum_k W_k f(x_k)`` integrates ``f`` when ``f`` already carries the
    Gaussian factor (as products ``h_i h_j`` do).  ``values`` holds one extra
    column ``h_{n_max+1}`` needed by the ladder relations.
    """

    n_max: int
    quad_nodes: np.ndarray
    quad_weights: np.ndarray
    normalized: bool = True
    values: np.ndarray = field(repr=False, default=None)
    derivs: np.ndarray = field(repr=False, default=None)

    @property
    def quad_size(self) -> int:
        return self.quad_nodes.size

    @property
    def H(self) -> np.ndarray:
        """Values of ``h_1 .. h_{n_max}``, shape (quad_size, n_max)."""
        return self.values[:, : self.n_max]

    def eigenvalues(self) -> np.ndarray:
        return 2 * np.arange(1, self.n_max + 1) - 1

    def integrate(self, f) -> np.ndarray:
        """Quadrature of sampled values ``f`` (first axis over nodes)."""
        return np.tensordot(self.quad_weights, f, axes=(0, 0))

    def project(self, fx) -> np.ndarray:
        """Galerkin matrix ``<h_i, f h_j>`` of the multiplier ``f``."""
        fx = np.asarray(fx)
        return self.H.T @ ((self.quad_weights * fx)[:, None] * self.H)

    def gram(self) -> np.ndarray:
        return self.project(np.ones(self.quad_size))

    def gram_deviation(self) -> float:
        return float(np.abs(self.gram() - np.eye(self.n_max)).max())

    def ladder_residual(self) -> float:
        """
        Pointwise residual of ``h_i' = -sqrt(i/2) h_{i+1} + sqrt((i-1)/2) h_{i-1}``.

        The left side is taken from the polynomial-derivative recurrence so the
        check is not circular.
        """
        n = self.n_max
        i = np.arange(1, n + 1)
        rhs = -np.sqrt(i / 2.0) * self.values[:, 1 : n + 1]
        rhs[:, 1:] += np.sqrt((i[1:] - 1) / 2.0) * self.values[:, : n - 1]
        return float(np.abs(self.derivs[:, :n] - rhs).max())

    def position_residual(self) -> float:
        """Pointwise residual of ``x h_i = sqrt(i/2) h_{i+1} + sqrt((i-1)/2) h_{i-1}``."""
        n = self.n_max
        i = np.arange(1, n + 1)
        rhs = np.sqrt(i / 2.0) * self.values[:, 1 : n + 1]
        rhs[:, 1:] += np.sqrt((i[1:] - 1) / 2.0) * self.values[:, : n - 1]
        return float(np.abs(self.quad_nodes[:, None] * self.H - rhs).max())

    def eigen_matrix(self) -> np.ndarray:
        """
        ``<h_i, (-d^2/dx^2 + x^2) h_j>`` through ``H = T T^dagger - Id``.

        ``<h_i, T T^dagger h_j> = <T^dagger h_i, T^dagger h_j>`` and
        ``T^dagger h = -h' + x h`` is evaluated pointwise.
        """
        n = self.n_max
        x = self.quad_nodes[:, None]
        up = -self.derivs[:, :n] + x * self.H
        return up.T @ (self.quad_weights[:, None] * up) - np.eye(n)

    def eigen_residual(self) -> float:
        E = self.eigen_matrix()
        return float(np.abs(E - np.diag(self.eigenvalues())).max())

    def refined(self, extra: int | None = None) -> "HermiteBasis":
        """Same basis on a larger rule, used for two-rule discrepancy checks."""
        if extra is None:
            extra = max(16, self.quad_size // 4)
        return build_basis(self.n_max, self.quad_size + extra)


def build_basis(n_max: int = 128, quad_size: int | None = None, margin: int = QUAD_MARGIN) -> HermiteBasis:
    """
    Build the truncated basis on a Gauss-Hermite rule.

    Parameters
    ----------
    n_max : int
        Number of basis functions.
    quad_size : int, optional
        Number of quadrature nodes, default ``4 * n_max``.
    margin : int
        Extra nodes required beyond ``2 * n_max``.

    Raises
    ------
    QuadratureError
        If ``quad_size < 2 * n_max + margin``.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise DomainError("n_max must be positive")
    if quad_size is None:
        quad_size = 4 * n_max
    quad_size = int(quad_size)
    if quad_size < 2 * n_max + margin:
        raise QuadratureError(
            f"quadrature underresolved: quad_size={quad_size} < 2*n_max+{margin}={2 * n_max + margin}"
        )
    x, W = _gauss_hermite(quad_size)
    vals = hermite_functions(x, n_max + 1)
    ders = hermite_derivatives(x, vals)
    for a in (x, W, vals, ders):
        a.setflags(write=False)
    return HermiteBasis(n_max, x, W, True, vals, ders)


def weighted_norm(basis: HermiteBasis, i: int, delta: float, panels: int | None = None) -> float:
    """
    ``||(1 + |x|)**delta h_i||_{L^2}``.

    Uses composite Gauss-Legendre on ``[0, L]`` (the integrand is even and has
    a kink at 0), with ``L`` far beyond the turning point ``sqrt(2i - 1)``.
    The panel count is doubled once and the two results must agree.
    """
    i = int(i)
    if not 1 <= i <= basis.n_max:
        raise DomainError(f"index {i} outside basis range 1..{basis.n_max}")
    if not 0.0 <= delta <= 1.0:
        raise DomainError("delta must lie in [0, 1]")
    L = np.sqrt(2.0 * i + 1.0) + 16.0
    if panels is None:
        panels = int(np.ceil(2.0 * L)) + 2 * i
    vals = [_weighted_sq(i, delta, L, p) for p in (panels, 2 * panels)]
    if abs(vals[0] - vals[1]) > 1e-12 * max(vals[1], 1.0):
        raise QuadratureError(
            f"quadrature underresolved in weighted_norm: discrepancy {abs(vals[0] - vals[1]):.3e}"
        )
    return float(np.sqrt(vals[1]))


def _weighted_sq(i, delta, L, panels, order=20):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, L, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * t + 0.5 * (a + b)).ravel()
    wx = (0.5 * (b - a) * w).ravel()
    h = hermite_functions(x, i)[:, i - 1]
    return 2.0 * float(np.sum(wx * (1.0 + x) ** (2 * delta) * h**2))


def weighted_norm_ratio(basis: HermiteBasis, i: int, delta: float) -> float:
    """``weighted_norm / (2i - 1)**(delta/2)``, the quantity expected to stay bounded."""
    return weighted_norm(basis, i, delta) / (2.0 * i - 1.0) ** (delta / 2.0)
