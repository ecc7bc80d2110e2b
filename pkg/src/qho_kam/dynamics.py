"""
Cauchy problem ``i u' = (A0 + eps P(omega t)) u`` in Hermite coefficients.

Two routes: the reduced flow through the KAM transformation,
``psi(t) = U(omega t) exp(-i t A_inf) U(0)^{-1} psi0``, and a direct
interaction-picture RK4 integration that serves as the reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matrix_spaces as ms
from .errors import DomainError, NumericalError
from .fourier import FourierMatrix
from .parallel import chunks
from .perturbation import PotentialSpec, fourier_P

NORM_PS = (0, 1, 2)


def sobolev_norm(u, p: float = 0.0) -> np.ndarray | float:
    """``sqrt(sum_i i**p |u_i|**2)`` along the last axis."""
    u = np.asarray(u)
    w = np.arange(1, u.shape[-1] + 1) ** float(p)
    out = np.sqrt(np.sum(w * np.abs(u) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


@dataclass
class StateVector:
    coeffs: np.ndarray
    sobolev_p: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if not 0.0 <= self.sobolev_p <= 2.0:
            raise DomainError("sobolev_p must lie in [0, 2]")

    def norm(self, p: float | None = None) -> float:
        return sobolev_norm(self.coeffs, self.sobolev_p if p is None else p)


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    norms: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.norms:
            self.norms = {p: sobolev_norm(self.states, p) for p in NORM_PS}

    def final(self) -> np.ndarray:
        return self.states[-1]


def initial_data(kind: str, N: int, mode_index: int = 1, width: float = 2.0) -> np.ndarray:
    """
    Normalized initial coefficients.

    ``gaussian_low``  ``u_i ~ exp(-(i-1)^2 / (2 width^2))``
    ``single_mode``   ``u = e_{mode_index}``
    ``rough``         ``u_i ~ i**-1.25``, in l^2_1 but not l^2_2 as N grows
    """
    i = np.arange(1, N + 1, dtype=float)
    if kind == "gaussian_low":
        u = np.exp(-((i - 1) ** 2) / (2 * width**2))
    elif kind == "single_mode":
        if not 1 <= mode_index <= N:
            raise DomainError("mode_index out of range")
        u = np.zeros(N)
        u[mode_index - 1] = 1.0
    elif kind == "rough":
        u = i**-1.25
    else:
        raise DomainError(f"unknown initial data {kind!r}")
    u = u.astype(complex)
    return u / np.linalg.norm(u)


def evolve_reduced(lambda_inf, v0, t: float) -> StateVector:
    """``v_i(t) = exp(-i lambda_i t) v_i(0)``."""
    lam = np.asarray(lambda_inf, dtype=float)
    if isinstance(v0, StateVector):
        c, p = v0.coeffs, v0.sobolev_p
    else:
        c, p = np.asarray(v0, dtype=complex), 0.0
    return StateVector(np.exp(-1j * lam * t) * c, p)


def evolve_original(U_fourier: FourierMatrix, lambda_inf, psi0, t_grid, omega, unitary_tol: float = 1e-8) -> Trajectory:
    """
    ``psi(t) = U(omega t) exp(-i t diag(lambda_inf)) U(0)^{-1} psi0`` on ``t_grid``.

    ``U`` is resynthesized from its Fourier coefficients and must be unitary
    to ``unitary_tol`` at every required point.
    """
    psi0 = psi0.coeffs if isinstance(psi0, StateVector) else np.asarray(psi0, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    lam = np.asarray(lambda_inf, dtype=float)
    U0 = U_fourier.synthesize(np.zeros((1, U_fourier.n_freq)))[0]
    if ms.unitarity_defect(U0) > unitary_tol:
        raise NumericalError("U(0) not unitary")
    v0 = U0.conj().T @ psi0
    out = np.empty((t.size, lam.size), dtype=complex)
    worst = 0.0
    for sl in chunks(t.size, 64):
        Ut = U_fourier.synthesize(np.outer(t[sl], omega))
        worst = max(worst, ms.unitarity_defect(Ut))
        v = np.exp(-1j * np.outer(t[sl], lam)) * v0[None, :]
        out[sl] = np.einsum("tij,tj->ti", Ut, v)
    if worst > unitary_tol:
        raise NumericalError(f"U not unitary along the trajectory: {worst:.3e}")
    return Trajectory(t, out, extra={"unitarity_defect": worst})


def direct_integrate(basis, V: PotentialSpec | None, omega, eps: float, psi0, t_grid,
                     k_max: int = 4, Pf: FourierMatrix | None = None, keep: int = 1) -> Trajectory:
    """
    Reference solution by RK4 in the interaction picture.

    With ``v = exp(i A0 t) u`` the equation becomes
    ``v' = -i eps e^{i A0 t} P(omega t) e^{-i A0 t} v``, whose right-hand side is
    small; the diagonal part is propagated exactly.  The integration steps are
    the spacings of ``t_grid``; every ``keep``-th grid point is stored.

    Raises :class:`DomainError` if a step exceeds ``0.5 / lambda_N``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise DomainError("t_grid must be a non-empty 1-d array")
    psi0 = psi0.coeffs if isinstance(psi0, StateVector) else np.asarray(psi0, dtype=complex)
    N = psi0.size
    lam = ms.harmonic_diagonal(N)
    dt_max = 0.5 / lam[-1]
    if t.size > 1 and np.max(np.diff(t)) > dt_max * (1 + 1e-12):
        raise DomainError(f"time step {np.max(np.diff(t)):.3e} exceeds 0.5/lambda_N = {dt_max:.3e}")
    if np.any(np.diff(t) <= 0):
        raise DomainError("t_grid must be increasing")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if Pf is None:
        if V is None:
            raise DomainError("need V or Pf")
        Pf = fourier_P(basis, V, k_max) if eps != 0.0 else FourierMatrix.zeros(N, V.n_freq, 0)
    ks, C = _active_modes(Pf)
    nk = len(ks)
    Cflat = C.reshape(nk * N, N) if nk else None
    kvec = np.asarray(ks, dtype=float).reshape(nk, Pf.n_freq)

    def rhs(s, v):
        if nk == 0 or eps == 0.0:
            return np.zeros_like(v)
        ph = np.exp(1j * lam * s)
        w = (Cflat @ (ph.conj() * v)).reshape(nk, N)
        e = np.exp(1j * (kvec @ omega) * s)
        return -1j * eps * ph * (e @ w)

    keep = max(1, int(keep))
    idx = list(range(0, t.size, keep))
    if idx[-1] != t.size - 1:
        idx.append(t.size - 1)
    store = set(idx)
    out = np.empty((len(idx), N), dtype=complex)
    v = np.exp(1j * lam * t[0]) * psi0
    j = 0
    if 0 in store:
        out[j] = psi0
        j += 1
    for n in range(1, t.size):
        s, h = t[n - 1], t[n] - t[n - 1]
        k1 = rhs(s, v)
        k2 = rhs(s + h / 2, v + h / 2 * k1)
        k3 = rhs(s + h / 2, v + h / 2 * k2)
        k4 = rhs(s + h, v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if n in store:
            out[j] = np.exp(-1j * lam * t[n]) * v
            j += 1
    return Trajectory(t[idx], out)


def _active_modes(Pf: FourierMatrix, rel: float = 1e-14):
    norms = Pf.mode_norms()
    top = max(norms.values(), default=0.0)
    ks = [k for k, v in norms.items() if v > rel * top and v > 0]
    if not ks:
        return [], np.zeros((0, Pf.N, Pf.N), dtype=complex)
    return ks, np.stack([Pf.coeff(k) for k in ks])


def norm_ratio_envelope(traj: Trajectory) -> dict:
    """``(min, max)`` of ``||psi(t)||_p / ||psi(0)||_p`` for each p."""
    out = {}
    for p, v in traj.norms.items():
        r = v / v[0]
        out[p] = (float(r.min()), float(r.max()))
    return out


def dominant_frequency(t, signal) -> float:
    """Angular frequency of the largest peak of a uniformly sampled signal."""
    t = np.asarray(t)
    dt = t[1] - t[0]
    win = np.hanning(t.size)
    spec = np.fft.fft(np.asarray(signal) * win)
    f = 2 * np.pi * np.fft.fftfreq(t.size, d=dt)
    return float(f[np.argmax(np.abs(spec))])


def order_study(basis, V, omega, eps, psi0, T: float, dts, k_max: int = 4, Pf=None) -> dict:
    """
    Self-convergence of :func:`direct_integrate`: errors against the finest
    step and the observed reduction factor per halving.
    """
    dts = sorted(dts, reverse=True)
    finals = []
    for dt in dts:
        n = int(round(T / dt))
        tg = np.linspace(0.0, T, n + 1)
        finals.append(direct_integrate(basis, V, omega, eps, psi0, tg, k_max, Pf, keep=n).final())
    ref = finals[-1]
    errs = [float(np.linalg.norm(f - ref)) for f in finals[:-1]]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1) if errs[i + 1] > 0]
    return {"dts": dts, "errors": errs, "ratios": ratios}
