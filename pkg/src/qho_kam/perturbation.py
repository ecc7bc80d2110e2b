"""
Perturbation matrix ``P_ij(theta) = int V(x, theta) h_i(x) h_j(x) dx`` and its
Fourier coefficients in ``theta``.
"""
from __future__ import annotations

import importlib
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import matrix_spaces as ms
from .errors import AliasingError, DomainError, QuadratureError
from .fourier import FourierMatrix, theta_grid
from .hermite import HermiteBasis

QUAD_CHECK_TOL = 1e-10
ALIAS_FLOOR = 1e-13
ALIAS_FACTOR = 10.0


@dataclass(frozen=True)
class PotentialSpec:
    """
    A potential ``V(x, theta)`` with its declared constants.

    ``evaluator(x, theta)`` receives a 1-d array of positions and a point
    ``theta`` of shape ``(n_freq,)`` and returns values shaped like ``x``.
    ``bound_C`` and ``delta`` are the constants of ``|V| <= C`` and
    ``|d_x V| <= C (1 + |x|)**delta``; ``strip_sigma`` is the declared width of
    the analyticity strip in ``theta``.
    """

    evaluator: Callable
    n_freq: int
    bound_C: float
    delta: float
    strip_sigma: float
    name: str = "user"
    params: dict = field(default_factory=dict)

    def __call__(self, x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))[: self.n_freq]
        return np.broadcast_to(np.asarray(self.evaluator(x, theta), dtype=float), x.shape)


# catalog

def _constant(value=1.0):
    return lambda x, th: np.full_like(x, value)


def _cos_shift(x, th):
    return np.cos(x - th[0])


def _two_freq(x, th):
    return np.cos(x) * np.cos(th[0]) + np.sin(2 * x) * np.sin(th[1])


def catalog(name: str, **params) -> PotentialSpec:
    """
    Built-in potentials.

    ``constant``   V = value (default 1), one frequency, theta independent
    ``cos_shift``  V = cos(x - theta_1)
    ``two_freq``   V = cos(x) cos(theta_1) + sin(2x) sin(theta_2)
    ``user``       ``evaluator="module:function"`` with ``n_freq`` and constants
    """
    delta = float(params.pop("delta", 0.1))
    sigma = float(params.pop("strip_sigma", 40.0))
    if name == "constant":
        v = float(params.get("value", 1.0))
        return PotentialSpec(_constant(v), 1, max(abs(v), 1e-300), delta, sigma, name, {"value": v})
    if name == "cos_shift":
        return PotentialSpec(_cos_shift, 1, 1.0, delta, sigma, name, {})
    if name == "two_freq":
        # |V| <= 2 and |V_x| <= 1 + 2
        return PotentialSpec(_two_freq, 2, 3.0, delta, sigma, name, {})
    if name == "user":
        ref = params.get("evaluator")
        if not isinstance(ref, str) or ":" not in ref:
            raise DomainError("user potential needs evaluator='module:function'")
        mod, fn = ref.split(":", 1)
        f = getattr(importlib.import_module(mod), fn)
        return PotentialSpec(f, int(params.get("n_freq", 1)), float(params.get("bound_C", 1.0)), delta, sigma, name, {"evaluator": ref})
    raise DomainError(f"unknown potential {name!r}")


def spot_check(V: PotentialSpec, x=None, n_theta: int = 8, h: float = 1e-5) -> dict:
    """
    Falsification check of the declared bounds and of periodicity.

    Raises :class:`DomainError` on a violation, otherwise returns the observed
    maxima.  Passing says nothing about points off the sample grid.
    """
    if x is None:
        x = np.linspace(-20.0, 20.0, 801)
    x = np.asarray(x, dtype=float)
    thetas = theta_grid(n_theta, V.n_freq) if V.n_freq else np.zeros((1, 0))
    vmax, rmax, pmax = 0.0, 0.0, 0.0
    for th in thetas:
        v = V(x, th)
        dv = (V(x + h, th) - V(x - h, th)) / (2 * h)
        vmax = max(vmax, float(np.abs(v).max()))
        rmax = max(rmax, float(np.max(np.abs(dv) / (1.0 + np.abs(x)) ** V.delta)))
        for d in range(V.n_freq):
            sh = th.copy()
            sh[d] += 2 * np.pi
            pmax = max(pmax, float(np.abs(V(x, sh) - v).max()))
    slack = 1e-6 * max(V.bound_C, 1.0)
    if vmax > V.bound_C + slack:
        raise DomainError(f"|V| reaches {vmax:.6g} > declared C={V.bound_C}")
    if rmax > V.bound_C + slack:
        raise DomainError(f"|V_x|/(1+|x|)^delta reaches {rmax:.6g} > declared C={V.bound_C}")
    if pmax > 1e-9:
        raise DomainError(f"V not 2pi-periodic in theta (defect {pmax:.3e})")
    return {"sup_V": vmax, "sup_Vx_weighted": rmax, "periodicity_defect": pmax}


# assembly

def _project(basis: HermiteBasis, vx: np.ndarray) -> np.ndarray:
    P = basis.project(vx)
    return 0.5 * (P + P.T)


def assemble_P(basis: HermiteBasis, V: PotentialSpec, theta=(), check: bool = True) -> np.ndarray:
    """
    Galerkin matrix of ``V(., theta)`` in the basis (real symmetric).

    With ``check`` the result is recomputed on a refined Gauss-Hermite rule
    and a :class:`QuadratureError` reports the maximal discrepancy if the two
    rules disagree beyond ``QUAD_CHECK_TOL``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    P = _project(basis, V(basis.quad_nodes, theta))
    if check:
        ref = _refined(basis)
        P2 = _project(ref, V(ref.quad_nodes, theta))
        disc = float(np.abs(P - P2).max())
        if disc > QUAD_CHECK_TOL * max(1.0, float(np.abs(P).max())):
            raise QuadratureError(f"quadrature underresolved for V: max discrepancy {disc:.3e}")
    return P


_REFINED_CACHE: dict = {}


def _refined(basis: HermiteBasis) -> HermiteBasis:
    key = (basis.n_max, basis.quad_size)
    if key not in _REFINED_CACHE:
        _REFINED_CACHE.clear()
        _REFINED_CACHE[key] = basis.refined()
    return _REFINED_CACHE[key]


def _fourier_coeffs(basis, V, k_max, G):
    n = V.n_freq
    x = basis.quad_nodes
    thetas = theta_grid(G, n)
    samples = np.stack([V(x, th) for th in thetas], axis=-1)  # (q, G**n)
    samples = samples.reshape((x.size,) + (G,) * n)
    hat = np.fft.fftn(samples, axes=tuple(range(1, n + 1))) / G**n
    F = FourierMatrix.zeros(basis.n_max, n, k_max, "hermitian")
    F.theta_grid_size = G
    HW = basis.H * basis.quad_weights[:, None]
    for k in F.k_vectors():
        vk = hat[(slice(None),) + tuple(c % G for c in k)]
        F.coeffs[F._idx(k)] = HW.T @ (vk[:, None] * basis.H)
    # exact conjugate symmetry for real V
    for k in F.k_vectors():
        mk = tuple(-c for c in k)
        if k > mk:
            continue
        a = F.coeffs[F._idx(k)]
        b = F.coeffs[F._idx(mk)]
        s = 0.5 * (a + b.conj().T)
        F.coeffs[F._idx(k)] = s
        F.coeffs[F._idx(mk)] = s.conj().T
    return F, hat


def fourier_P(
    basis: HermiteBasis,
    V: PotentialSpec,
    k_max: int,
    oversample: int = 2,
    strict: bool = False,
    check: bool = True,
) -> FourierMatrix:
    """
    Fourier coefficients ``P_hat(k)``, ``|k|_1 <= k_max``.

    ``V`` is sampled on ``oversample * (2 k_max + 1)`` points per frequency
    dimension and transformed by FFT before projection onto the basis.  The
    top retained shell is compared with an exponential fit of the lower
    shells; a tenfold excess is reported as aliasing (warning, or
    :class:`AliasingError` when ``strict``).
    """
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    G = int(oversample) * (2 * int(k_max) + 1)
    F, _ = _fourier_coeffs(basis, V, k_max, G)
    if check:
        F2, _ = _fourier_coeffs(_refined(basis), V, k_max, G)
        disc = float(np.abs(F.coeffs - F2.coeffs).max())
        if disc > QUAD_CHECK_TOL * max(1.0, float(np.abs(F.coeffs).max())):
            raise QuadratureError(f"quadrature underresolved for V: max discrepancy {disc:.3e}")
    F.meta["aliasing"] = _aliasing_check(F)
    if F.meta["aliasing"]["flagged"]:
        msg = (
            f"top retained shell {F.meta['aliasing']['top']:.3e} exceeds decay-fit "
            f"prediction {F.meta['aliasing']['predicted']:.3e} by more than {ALIAS_FACTOR}x"
        )
        if strict:
            raise AliasingError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return F


def _aliasing_check(F: FourierMatrix) -> dict:
    out = {"flagged": False, "top": 0.0, "predicted": None}
    if F.k_max < 2:
        return out
    shells = np.zeros(F.k_max + 1)
    for k, v in F.mode_norms().items():
        r = sum(abs(c) for c in k)
        shells[r] = max(shells[r], v)
    top = shells[-1]
    out["top"] = float(top)
    scale = shells.max()
    if scale == 0.0 or top <= ALIAS_FLOOR * scale:
        return out
    r = np.nonzero(shells[:-1] > ALIAS_FLOOR * scale)[0]
    if r.size < 2:
        pred = ALIAS_FLOOR * scale
    else:
        slope, icpt = np.polyfit(r, np.log(shells[r]), 1)
        pred = max(float(np.exp(icpt + slope * F.k_max)), ALIAS_FLOOR * scale)
    out["predicted"] = pred
    out["flagged"] = bool(top > ALIAS_FACTOR * pred)
    return out


# decay diagnostics

def _inej_ratio(A: np.ndarray, delta: float) -> np.ndarray:
    n = A.shape[-1]
    i = np.arange(1, n + 1)
    mx = np.maximum.outer(i, i)
    mn = np.minimum.outer(i, i)
    w = np.abs(i[:, None] - i[None, :]) / (mx**0.5 * mn ** (delta / 2.0))
    return np.max(w * np.abs(A), axis=(-2, -1))


def _sqrtj_ratio(A: np.ndarray, delta: float) -> np.ndarray:
    return np.asarray(ms.alpha_norm(ms.difference(A), (1.0 - delta) / 2.0))


def tail_envelope(d: np.ndarray) -> np.ndarray:
    """``e_i = max_{i' >= i} d_{i'}``, the monotone upper envelope from the right."""
    return np.maximum.accumulate(np.asarray(d)[::-1])[::-1]


def diagonal_slope(d: np.ndarray, i_min: int = 4) -> float | None:
    """Least-squares log-log slope of the tail envelope of ``d_i`` (1-based), i >= i_min."""
    d = np.abs(np.asarray(d, dtype=float))
    env = tail_envelope(d)
    i = np.arange(1, d.size + 1)
    sel = (i >= i_min) & (env > 0)
    if sel.sum() < 2:
        return None
    return float(np.polyfit(np.log(i[sel]), np.log(env[sel]), 1)[0])


def decay_report(Pf: FourierMatrix, delta: float, n_theta: int | None = None, slope_tol: float = 0.1) -> dict:
    """
    Decay of ``P`` and of its difference matrix.

    Reports, per mode and as a sup over a theta grid,
    ``sup |i-j||P_ij| / (max(i,j)**0.5 (i^j)**(delta/2))`` (``inej``) and
    ``sup (i^j)**((1-delta)/2) |dP_ij|`` (``sqrtj``), plus the log-log slope of
    the upper envelope of ``sup_theta |dP_ii|``.  ``holds`` requires finite
    sups and ``slope <= -(1-delta)/2 + slope_tol``.
    """
    n = Pf.n_freq
    modes = []
    for k in Pf.k_vectors():
        C = Pf.coeff(k)
        modes.append({"k": list(k), "inej": float(_inej_ratio(C, delta)), "sqrtj": float(_sqrtj_ratio(C, delta))})
    if n_theta is None:
        n_theta = max(16, 2 * (2 * Pf.k_max + 1))
    vals = Pf.on_grid(n_theta).real if n else Pf.on_grid(1).real
    inej = float(np.max(_inej_ratio(vals, delta)))
    sqrtj = float(np.max(_sqrtj_ratio(vals, delta)))
    dd = np.max(np.abs(np.diagonal(ms.difference(vals), axis1=-2, axis2=-1)), axis=0)
    slope = diagonal_slope(dd)
    threshold = -(1.0 - delta) / 2.0 + slope_tol
    finite = bool(np.isfinite(inej) and np.isfinite(sqrtj))
    holds = finite and (slope is None or slope <= threshold)
    return {
        "N": Pf.N,
        "delta": float(delta),
        "alpha": (1.0 - delta) / 2.0,
        "n_theta": int(n_theta),
        "inej_sup": inej,
        "sqrtj_sup": sqrtj,
        "diag_diff_slope": slope,
        "slope_threshold": threshold,
        "holds": holds,
        "modes": modes,
        "coefficient_decay": Pf.decay_fit(),
    }
