"""
Homological equation in Fourier variables, small-divisor carving and the
measure of excluded frequencies.

For a diagonal ``A = diag(Lambda)`` and ``P(theta) = sum_k P_hat(k) e^{ik.theta}``
the equation ``[A, S] - i dS/dt = A_tilde - P + R`` along ``theta = omega t``
reads, mode by mode,

    (k.omega + Lambda_i - Lambda_j) S_hat_ij(k) = delta_{k0} A_tilde_ij - P_hat_ij(k) + R_hat_ij(k).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import matrix_spaces as ms
from .errors import DomainError, UncarvedDivisorError
from .fourier import FourierMatrix, l1_ball

DIVISOR_FLOOR = 1e-13
# test hook: -1 flips the sign of the S formula (mutation check of the verify suite)
_SOLUTION_SIGN = 1.0


def _lam(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim == 1:
        return A.real.astype(float)
    if not ms.check_structure(A, "diagonal"):
        raise DomainError("A must be diagonal")
    return np.diag(A).real.astype(float)


def _tails(lam: np.ndarray) -> np.ndarray:
    return lam - ms.harmonic_diagonal(lam.size)


def divisor(omega, k, Lam_i: float, Lam_j: float) -> float:
    """``k.omega + Lambda_i - Lambda_j``."""
    kw = float(np.dot(np.atleast_1d(k), np.atleast_1d(omega))) if np.size(k) else 0.0
    return kw + (Lam_i - Lam_j)


def divisor_matrix(omega, k, lam: np.ndarray) -> np.ndarray:
    """
    All divisors for one mode, ``D_ij = k.omega + Lambda_i - Lambda_j``.

    The unperturbed part ``2(i - j)`` is formed in integer arithmetic and the
    small tails ``Lambda_i - (2i - 1)`` are added separately.
    """
    n = lam.size
    i = np.arange(n)
    two_d = (2 * (i[:, None] - i[None, :])).astype(float)
    t = _tails(lam)
    kw = float(np.dot(k, omega)) if len(k) else 0.0
    return (kw + two_d) + (t[:, None] - t[None, :])


def _kdot_x(k, omega) -> np.longdouble:
    return np.sum(np.asarray(k, dtype=np.longdouble) * np.asarray(omega, dtype=np.longdouble)) if len(k) else np.longdouble(0)


def _divisor_matrix_x(omega, k, lam_x: np.ndarray) -> np.ndarray:
    # divisor_matrix in long double (80-bit on x86-64; plain double elsewhere)
    n = lam_x.size
    i = np.arange(n)
    two_d = (2 * (i[:, None] - i[None, :])).astype(np.longdouble)
    t = lam_x - (2 * np.arange(1, n + 1) - 1).astype(np.longdouble)
    return (_kdot_x(k, omega) + two_d) + (t[:, None] - t[None, :])


# Melnikov set

def _even_levels(kabs: int) -> np.ndarray:
    lmax = int(math.floor(4.0 * math.pi * kabs))
    lmax -= lmax % 2
    return np.arange(-lmax, lmax + 1, 2)


def melnikov_violations(omega, gamma: float, K: float, first_only: bool = False) -> list:
    """
    Tuples ``(k, l, value)`` with ``0 < |k| <= K``, even ``|l| <= 4 pi |k|`` and
    ``|k.omega + l| < gamma (1 + |l|)``, in lexicographic ``k`` order.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not 0.0 < gamma < 0.25:
        raise DomainError(f"gamma={gamma} outside (0, 1/4)")
    if K < 1:
        raise DomainError("K must be >= 1")
    out = []
    for k in l1_ball(omega.size, int(math.floor(K))):
        ka = sum(abs(c) for c in k)
        if ka == 0:
            continue
        l = _even_levels(ka)
        v = np.abs(np.dot(k, omega) + l)
        bad = np.nonzero(v < gamma * (1.0 + np.abs(l)))[0]
        for b in bad:
            out.append((k, int(l[b]), float(np.dot(k, omega) + l[b])))
            if first_only:
                return out
    return out


def melnikov_accept(omega, gamma: float, K: float) -> bool:
    """True iff ``|k.omega + l| >= gamma (1 + |l|)`` on the finite scan region."""
    return not melnikov_violations(omega, gamma, K, first_only=True)


# carving

@dataclass
class DivisorScan:
    omega: np.ndarray
    kappa: float
    K: float
    i_cut: int
    violations: list = field(default_factory=list)
    gamma: float = float("nan")
    melnikov: bool = True
    melnikov_violation: tuple | None = None

    @property
    def kept(self) -> bool:
        return not self.violations and self.melnikov

    def offending(self):
        """First resonance responsible for a rejection, or None."""
        if self.violations:
            return ("carve",) + tuple(self.violations[0])
        if not self.melnikov:
            return ("melnikov",) + tuple(self.melnikov_violation)
        return None


def i_cut_value(eps: float, gamma: float, alpha: float) -> int:
    """``ceil((eps / gamma)**(1/alpha))``, saturated to avoid overflow."""
    if eps <= 0:
        return 1
    e = math.log(eps / gamma) / alpha
    if e > 60:
        return 2**62
    return max(1, math.ceil(math.exp(e) - 1e-12))


def homo_verify_norm(lam: np.ndarray, alpha: float) -> float:
    """``||A - A_0||_alpha_hat`` for diagonal ``A``, ``A_0 = diag(2i - 1)``."""
    t = _tails(lam)
    return max(float(np.abs(t).max()), float(ms.alpha_norm(np.diag(np.diff(t)), alpha)))


def carve_resonances(A, omega, kappa: float, K: float, eps: float, gamma: float, alpha: float) -> DivisorScan:
    """
    Scan ``0 < |k| <= K``, ``|i - j| <= 2 pi |k|``, ``min(i, j) <= i_cut`` for
    ``|k.omega + Lambda_i - Lambda_j| < kappa (1 + |i - j|)``.

    Raises :class:`DomainError` when ``A`` is not diagonal or when
    ``||A - diag(2i-1)||_alpha_hat > eps``.
    """
    lam = _lam(A)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    dev = homo_verify_norm(lam, alpha)
    if dev > eps:
        raise DomainError(f"||A - A0||_alpha_hat = {dev:.3e} exceeds eps = {eps:.3e}")
    n = lam.size
    icut = i_cut_value(eps, gamma, alpha)
    i = np.arange(1, n + 1)
    dist = np.abs(i[:, None] - i[None, :])
    inside = np.minimum.outer(i, i) <= icut
    viol = []
    for k in l1_ball(omega.size, int(math.floor(K))):
        ka = sum(abs(c) for c in k)
        if ka == 0:
            continue
        D = divisor_matrix(omega, k, lam)
        mask = inside & (dist <= 2 * math.pi * ka) & (np.abs(D) < kappa * (1 + dist))
        for a, b in zip(*np.nonzero(mask)):
            viol.append((k, int(a) + 1, int(b) + 1, float(D[a, b])))
    mv = melnikov_violations(omega, gamma, K, first_only=True)
    return DivisorScan(omega, float(kappa), float(K), icut, viol, float(gamma), not mv, mv[0] if mv else None)


# solution

@dataclass
class HomologicalSolution:
    A_tilde: np.ndarray
    S: FourierMatrix
    R: FourierMatrix
    residual_norm: float
    residual_rel: float
    min_divisor: float = float("inf")
    residuals: dict = field(default_factory=dict)


def solve_homological(A, Pf: FourierMatrix, omega, kappa: float, K: float) -> HomologicalSolution:
    """
    Explicit solution mode by mode.

    ``A_tilde = diag P_hat(0)``, ``R_hat(k) = P_hat(k)`` for ``|k| > K``,
    ``S_hat_ij(k) = -P_hat_ij(k) / (k.omega + Lambda_i - Lambda_j)`` for
    ``|k| <= K`` with ``S_hat_ii(0) = 0``.  The residual of each mode identity
    is recomputed with commutator products, independently of the division.

    Raises :class:`UncarvedDivisorError` when a divisor falls below
    ``1e-13 (1 + |i - j|)``.  ``kappa`` is recorded for the minimal
    normalized divisor report only; carving happens in
    :func:`carve_resonances`.
    """
    lam = _lam(A)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = Pf.n_freq
    N = Pf.N
    if lam.size != N:
        raise DomainError("A and P dimensions differ")
    KS = min(int(math.floor(K)), Pf.k_max)
    low, R = Pf.split(K)
    R.structure = "hermitian"
    S = FourierMatrix.zeros(N, n, KS, "anti_hermitian")
    P0 = Pf.coeff((0,) * n)
    A_tilde = np.real(np.diag(P0)).copy()
    idx = np.arange(1, N + 1)
    dist = np.abs(idx[:, None] - idx[None, :])
    eye = np.eye(N, dtype=bool)
    min_div = np.inf
    # divisors and quotients in extended precision: near a small divisor the
    # rounding of k.omega alone would cost eps |k.omega| / |D| in S
    lam_x = lam.astype(np.longdouble)
    for k in S.k_vectors():
        D = _divisor_matrix_x(omega, k, lam_x)
        if not any(k):
            D = np.where(eye, 1.0, D)
        small = np.abs(D) < DIVISOR_FLOOR * (1 + dist)
        if small.any():
            a, b = np.argwhere(small)[0]
            raise UncarvedDivisorError(k, a + 1, b + 1, float(D[a, b]))
        off = ~eye if not any(k) else np.ones_like(eye)
        if off.any():
            min_div = min(min_div, float(np.min((np.abs(D) / (1 + dist))[off])))
        Sk = _SOLUTION_SIGN * (-Pf.coeff(k).astype(np.clongdouble) / D)
        if not any(k):
            Sk[eye] = 0.0
        S.coeffs[S._idx(k)] = Sk.astype(complex)
    # residuals of the mode identities, |k| <= K, with commutator products
    # (extended precision so the check does not add its own cancellation)
    res = {}
    for k in S.k_vectors():
        Sk = S.coeff(k).astype(np.clongdouble)
        kw = _kdot_x(k, omega)
        comm = lam_x[:, None] * Sk - Sk * lam_x[None, :]
        rhs = -Pf.coeff(k).astype(np.clongdouble)
        if not any(k):
            rhs = rhs + np.diag(A_tilde.astype(np.longdouble))
        res[k] = float(ms.op_norm((kw * Sk + comm - rhs).astype(complex)))
    rnorm = max(res.values(), default=0.0)
    scale = Pf.max_mode_norm()
    rel = rnorm / scale if scale > 0 else rnorm
    return HomologicalSolution(A_tilde, S, R, rnorm, rel, min_div, res)


def omega_derivative(A, Pf: FourierMatrix, omega, K: float, alpha: float, h: float = 1e-5, n_theta: int | None = None) -> dict:
    """
    Central finite-difference ``d/d omega_l`` of the solution ``S`` at fixed ``A``.

    Returns the sup over theta and over components of the ``alpha_hat_plus``
    norm of the difference quotient.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    worst = 0.0
    for l in range(omega.size):
        e = np.zeros_like(omega)
        e[l] = h
        Sp = solve_homological(A, Pf, omega + e, 0.0, K).S
        Sm = solve_homological(A, Pf, omega - e, 0.0, K).S
        dS = FourierMatrix((Sp.coeffs - Sm.coeffs) / (2 * h), Sp.k_max, Sp.n_freq)
        G = n_theta or max(8, 2 * (2 * dS.k_max + 1))
        worst = max(worst, ms.sup_report(dS.on_grid(G), alpha).alpha_hat_plus)
    return {"h": h, "dS_domega_alpha_hat_plus": worst}


# measure of the excluded set

def sample_frequencies(n_samples: int, n_freq: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points in ``[0, 2 pi)^n``, deterministic in ``seed``."""
    m = max(0, math.ceil(math.log2(max(n_samples, 1))))
    eng = qmc.Sobol(d=n_freq, scramble=True, seed=np.random.default_rng(seed))
    return 2.0 * math.pi * eng.random_base2(m)[:n_samples]


def excluded_mask(omegas, lam, kappa: float, K: float, eps: float, gamma: float, alpha: float,
                  carve: bool = True, melnikov: bool = True) -> np.ndarray:
    """
    Vectorised rejection test over many frequencies, equivalent to
    ``not carve_resonances(...).kept`` sample by sample.
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    lam = _lam(lam)
    m, n = omegas.shape
    N = lam.size
    icut = i_cut_value(eps, gamma, alpha)
    bad = np.zeros(m, dtype=bool)
    t = _tails(lam)
    for k in l1_ball(n, int(math.floor(K))):
        ka = sum(abs(c) for c in k)
        if ka == 0:
            continue
        kw = omegas @ np.asarray(k, dtype=float)
        if melnikov:
            l = _even_levels(ka)
            v = np.abs(kw[:, None] + l[None, :])
            bad |= np.any(v < gamma * (1.0 + np.abs(l))[None, :], axis=1)
        if not carve or kappa <= 0:
            continue
        dmax = min(int(math.floor(2 * math.pi * ka)), N - 1)
        for d in range(-dmax, dmax + 1):
            # pairs (i, j = i - d), 1-based, min(i, j) <= icut
            i = np.arange(max(1, 1 + d), min(N, N + d) + 1)
            i = i[np.minimum(i, i - d) <= icut]
            if i.size == 0:
                continue
            vals = np.sort(2.0 * d + (t[i - 1] - t[i - d - 1]))
            target = -kw
            pos = np.clip(np.searchsorted(vals, target), 1, vals.size - 1) if vals.size > 1 else np.zeros(m, int)
            near = np.minimum(np.abs(kw + vals[pos]), np.abs(kw + vals[np.maximum(pos - 1, 0)]))
            bad |= near < kappa * (1 + abs(d))
    return bad


def estimate_excluded_measure(A, kappa: float, K: float, eps: float, gamma: float, alpha: float,
                              n_samples: int, sampler_seed: int, n_freq: int = 1) -> float:
    """
    Fraction of low-discrepancy samples ``omega in [0, 2pi)^n`` rejected by the
    carving or by the Melnikov test.
    """
    if n_samples < 1000:
        warnings.warn(f"n_samples={n_samples} < 1000: fraction is a coarse estimate", RuntimeWarning, stacklevel=2)
    om = sample_frequencies(n_samples, n_freq, sampler_seed)
    return float(np.mean(excluded_mask(om, A, kappa, K, eps, gamma, alpha)))
