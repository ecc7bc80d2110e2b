"""
KAM iteration reducing ``i u' = (A0 + eps P(omega t)) u`` to a constant
diagonal system, ``A0 = diag(2i - 1)``.

One step maps ``(A_m, P_m)`` to ``(A_{m+1}, P_{m+1})`` through the generator
``S_{m+1}`` of the homological equation::

    A_{m+1} = A_m + A_tilde_m
    P_{m+1} = R_m + int_0^1 e^{-tau S} [(1 - tau)(A_tilde_m + R_m) + tau P_m, S] e^{tau S} dtau

The tau integral uses Gauss-Legendre nodes; theta-dependent products are
formed pointwise on a uniform grid and re-expanded by FFT.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import homological as hom
from . import matrix_spaces as ms
from .config import RunConfig
from .errors import DomainError, NumericalError
from .fourier import FourierMatrix, theta_grid
from .hermite import build_basis
from .parallel import chunks, pmap
from .perturbation import fourier_P

ZETA2 = math.pi**2 / 6.0


@dataclass(frozen=True)
class KamSchedule:
    """
    Parameter sequences indexed by the step ``m = 0 .. m_max + 1``.

    ``kappa[m]`` and ``K[m]`` are defined for ``m >= 1`` (``nan`` at 0).
    """

    eps_0: float
    sigma_0: float
    eps: np.ndarray
    kappa: np.ndarray
    sigma: np.ndarray
    K: np.ndarray

    @property
    def m_max(self) -> int:
        return self.eps.size - 2


def build_schedule(eps_0: float, sigma_0: float, m_max: int) -> KamSchedule:
    """
    ``eps_{m+1} = eps_m**(4/3)``, ``kappa_{m+1} = eps_m**(1/16)``,
    ``sigma_m - sigma_{m+1} = sigma_0 (m+1)**-2 / (2 zeta(2))``,
    ``K_{m+1} = 2 ln(1/eps_m) / (sigma_m - sigma_{m+1})``.
    """
    if not eps_0 < 1.0:
        raise DomainError("eps_0 must be < 1")
    if not eps_0 > 0.0:
        raise DomainError("eps_0 must be > 0")
    if not sigma_0 > 0.0:
        raise DomainError("sigma_0 must be > 0")
    if m_max < 1:
        raise DomainError("m_max must be >= 1")
    M = m_max + 2
    eps = np.empty(M)
    kappa = np.full(M, np.nan)
    sigma = np.empty(M)
    K = np.full(M, np.nan)
    eps[0], sigma[0] = eps_0, sigma_0
    for m in range(M - 1):
        eps[m + 1] = eps[m] ** (4.0 / 3.0)
        kappa[m + 1] = eps[m] ** (1.0 / 16.0)
        gap = sigma_0 / (m + 1) ** 2 / (2.0 * ZETA2)
        sigma[m + 1] = sigma[m] - gap
        # eps underflows to 0 after a few dozen steps; K is then unbounded
        K[m + 1] = 2.0 * -math.log(eps[m]) / gap if eps[m] > 0 else math.inf
    return KamSchedule(float(eps_0), float(sigma_0), eps, kappa, sigma, K)


@dataclass
class KamState:
    m: int
    lam: np.ndarray
    Pf: FourierMatrix
    omega: np.ndarray
    S_history: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    kept: bool = True
    rejection: tuple | None = None
    log: list = field(default_factory=list)

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.lam)


@dataclass
class KamResult:
    lambda_inf: np.ndarray
    step_log: list
    kept: bool
    U_fourier: FourierMatrix
    schedule: KamSchedule | None
    state: KamState
    rejection: tuple | None = None
    meta: dict = field(default_factory=dict)


# step parameters

def step_parameters(cfg: RunConfig, schedule: KamSchedule, m: int) -> dict:
    """Carving parameters for the step leaving ``m`` (uses index ``m + 1``)."""
    kappa = float(schedule.kappa[m + 1])
    K = float(schedule.K[m + 1])
    if cfg.k_cap is not None:
        K = min(K, float(cfg.k_cap))
    nu1 = cfg.nu1
    gamma = cfg.gamma_scale * kappa**nu1
    kappa_carve = gamma ** (1.0 / nu1)
    K_next = float(schedule.K[m + 2]) if m + 2 < schedule.K.size else K
    if cfg.k_cap is not None:
        K_next = min(K_next, float(cfg.k_cap))
    return {"kappa": kappa, "K": K, "gamma": gamma, "kappa_carve": kappa_carve, "K_next": K_next}


def _gl(order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


def _step_chunk(S_g, P_g, R_g, A_tilde, taus, weights, tol):
    Y0 = R_g + np.diag(A_tilde)[None]
    acc = np.zeros_like(P_g)
    for tau, w in zip(taus, weights):
        E = ms.mat_exp(tau * S_g, tol=tol, antihermitian=True)
        Y = (1.0 - tau) * Y0 + tau * P_g
        C = Y @ S_g - S_g @ Y
        acc += w * (np.swapaxes(E, -1, -2).conj() @ C @ E)
    return R_g + acc


def transport(Pf: FourierMatrix, sol: hom.HomologicalSolution, k_out: int, G: int,
              gl_order: int = 8, tol: float = 1e-13, threads: int = 1) -> tuple[FourierMatrix, np.ndarray]:
    """
    New perturbation ``P_{m+1}`` from ``P_m`` and the homological solution.

    Returns the Fourier family truncated to ``|k| <= k_out`` and the grid
    values before truncation.
    """
    n = Pf.n_freq
    S_g = sol.S.on_grid(G)
    P_g = Pf.on_grid(G)
    R_g = sol.R.on_grid(G)
    taus, weights = _gl(gl_order)
    parts = pmap(
        lambda sl: _step_chunk(S_g[sl], P_g[sl], R_g[sl], sol.A_tilde, taus, weights, tol),
        chunks(S_g.shape[0]),
        threads,
    )
    vals = np.concatenate(parts, axis=0)
    out = FourierMatrix.from_grid(vals, n, k_out, "hermitian")
    scale = max(out.max_mode_norm(), 1e-300)
    defect = out.conjugation_defect(+1)
    if defect > 1e-10 * scale + 1e-300:
        raise NumericalError(f"P_(m+1) lost Hermitian structure: defect {defect:.3e}")
    for k in out.k_vectors():
        mk = tuple(-c for c in k)
        if k <= mk:
            a = 0.5 * (out.coeff(k) + out.coeff(mk).conj().T)
            out.coeffs[out._idx(k)] = a
            out.coeffs[out._idx(mk)] = a.conj().T
    return out, vals


def norm_grid_size(k_max: int, n: int) -> int:
    return max(32, 2 * k_max + 2) if n == 1 else max(8, 2 * k_max + 2)


def fourier_norms(F: FourierMatrix, alpha: float, G: int | None = None) -> ms.NormReport:
    """Sup over a real theta grid of the five norms."""
    G = G or norm_grid_size(F.k_max, F.n_freq)
    return ms.sup_report(F.on_grid(G), alpha)


def kam_step(state: KamState, schedule: KamSchedule, cfg: RunConfig) -> KamState:
    """
    One KAM step.  On rejection of ``omega`` the returned state has
    ``kept=False`` and ``rejection`` naming the offending resonance; ``A`` and
    ``P`` are then unchanged.
    """
    m = state.m
    alpha = cfg.alpha_value
    prm = step_parameters(cfg, schedule, m)
    row = {"m": m}
    if not prm["gamma"] < 0.25:
        return _reject(state, ("gamma", prm["gamma"]), row)
    homo_dev = hom.homo_verify_norm(state.lam, alpha)
    row["homo_verify"] = bool(homo_dev <= cfg.eps_bar)
    scan = hom.carve_resonances(state.lam, state.omega, prm["kappa_carve"], prm["K"], cfg.eps_bar, prm["gamma"], alpha)
    row["melnikov_global"] = None
    if not scan.kept:
        row["violations"] = list(scan.violations)
        row["melnikov_violation"] = scan.melnikov_violation
        return _reject(state, scan.offending(), row)
    sol = hom.solve_homological(state.lam, state.Pf, state.omega, prm["kappa_carve"], prm["K"])
    if sol.S.conjugation_defect(-1) > 1e-14 * max(sol.S.max_mode_norm(), 1e-300):
        raise NumericalError("S lost anti-Hermitian structure")
    n = state.Pf.n_freq
    k_out = int(math.floor(prm["K_next"])) + cfg.guard
    k_need = max(k_out, sol.S.k_max + state.Pf.k_max)
    G = cfg.oversample * (2 * k_need + 1)
    P_new, _ = transport(state.Pf, sol, k_out, G, cfg.gl_order, cfg.exp_tol, cfg.threads)
    lam_new = state.lam + sol.A_tilde
    rep = fourier_norms(P_new, alpha)
    S_rep = fourier_norms(sol.S, alpha) if sol.S.k_max >= 0 else None
    row.update({
        "A_tilde_norm": float(np.abs(sol.A_tilde).max()),
        "residual": sol.residual_norm,
        "residual_rel": sol.residual_rel,
        "min_divisor": sol.min_divisor,
        "S_alpha_hat_plus": S_rep.alpha_hat_plus,
        "grid": G,
    })
    if cfg.fd_omega:
        row.update(hom.omega_derivative(state.lam, state.Pf, state.omega, prm["K"], alpha))
    new = KamState(
        m + 1, lam_new, P_new, state.omega,
        state.S_history + [sol.S], state.norms + [rep], True, None, state.log + [row],
    )
    return new


def _reject(state, reason, row):
    out = KamState(state.m, state.lam, state.Pf, state.omega, list(state.S_history), list(state.norms), False, reason, state.log + [row])
    return out


# transformations

def compose_U_batch(S_history: list, thetas, tol: float = 1e-13) -> np.ndarray:
    """``U(theta) = e^{S_1(theta)} ... e^{S_m(theta)}`` at many points, ``(m, N, N)``."""
    thetas = np.asarray(thetas, dtype=float)
    if not S_history:
        raise DomainError("need N; use compose_U with an explicit dimension for empty history")
    n = S_history[0].n_freq
    thetas = thetas.reshape(-1, n)
    U = None
    for S in S_history:
        E = ms.mat_exp(S.synthesize(thetas), tol=tol, antihermitian=True)
        U = E if U is None else U @ E
    dev = ms.unitarity_defect(U)
    if dev > 10 * tol + 64 * U.shape[-1] * len(S_history) * np.finfo(float).eps:
        raise NumericalError(f"composed transformation not unitary: {dev:.3e}")
    return U


def compose_U(S_history: list, theta, tol: float = 1e-13, N: int | None = None) -> np.ndarray:
    """Composed transformation at one point; identity of size ``N`` for an empty history."""
    if not S_history:
        if N is None:
            raise DomainError("empty history needs N")
        return np.eye(N, dtype=complex)
    return compose_U_batch(S_history, np.atleast_1d(theta)[None, :], tol)[0]


def U_fourier_from_history(S_history: list, N: int, n: int, k_max: int, tol: float = 1e-13) -> FourierMatrix:
    if not S_history:
        return FourierMatrix.constant(np.eye(N, dtype=complex), n)
    G = 2 * (2 * k_max + 1)
    U = compose_U_batch(S_history, theta_grid(G, n), tol)
    return FourierMatrix.from_grid(U, n, k_max, "general")


# driver

STEP_COLUMNS = [
    "m", "eps_m", "sigma_m", "kappa_next", "K_next", "gamma_next", "kappa_carve",
    "P_op", "P_comm", "P_alpha", "P_delta_alpha", "P_delta_comm_alpha", "P_alpha_hat", "P_alpha_hat_plus",
    "drift", "A_tilde_norm", "residual", "residual_rel", "min_divisor", "S_alpha_hat_plus",
    "homo_verify", "kept",
]


def initial_state(cfg: RunConfig, basis=None, schedule: KamSchedule | None = None) -> KamState:
    V = cfg.potential_spec()
    N = cfg.N
    omega = np.asarray(cfg.omega_vector, dtype=float)
    lam = ms.harmonic_diagonal(N)
    if cfg.eps == 0.0:
        Pf = FourierMatrix.zeros(N, V.n_freq, 0, "hermitian")
        return KamState(0, lam, Pf, omega)
    basis = basis or build_basis(N, cfg.quad)
    K1 = float(schedule.K[1]) if schedule is not None else 1.0
    if cfg.k_cap is not None:
        K1 = min(K1, cfg.k_cap)
    k0 = int(math.floor(K1)) + cfg.guard
    Pf = fourier_P(basis, V, k0, cfg.oversample, cfg.strict, cfg.check_quadrature).scaled(cfg.eps)
    Pf.structure = "hermitian"
    return KamState(0, lam, Pf, omega)


def run(cfg: RunConfig, basis=None, P0: FourierMatrix | None = None) -> KamResult:
    """
    Iterate until ``m_max`` steps, ``||P_m|| <= stop_tol`` or rejection.

    Rejection is reported in the result, not raised.
    """
    alpha = cfg.alpha_value
    N = cfg.N
    n = cfg.potential_spec().n_freq
    schedule = build_schedule(cfg.eps, cfg.sigma, cfg.m_max) if cfg.eps > 0 else None
    state = initial_state(cfg, basis, schedule) if P0 is None else KamState(0, ms.harmonic_diagonal(N), P0, np.asarray(cfg.omega_vector))
    state.norms = [fourier_norms(state.Pf, alpha)]
    while True:
        rep = state.norms[-1]
        if schedule is None or state.m >= cfg.m_max or rep.op_norm <= cfg.stop_tol:
            break
        state = kam_step(state, schedule, cfg)
        if not state.kept:
            break
    U_f = U_fourier_from_history(state.S_history, N, n, cfg.u_kmax, cfg.exp_tol)
    log = _step_log(state, schedule, cfg)
    res = KamResult(state.lam.copy(), log, state.kept, U_f, schedule, state, state.rejection)
    res.meta["global_melnikov"] = _global_melnikov(state, schedule, cfg)
    return res


def _global_melnikov(state, schedule, cfg):
    # alternative convention: one Melnikov set with the largest K used
    if schedule is None or not state.S_history:
        return None
    m = len(state.S_history) - 1
    prm = step_parameters(cfg, schedule, m)
    try:
        return bool(hom.melnikov_accept(state.omega, prm["gamma"], prm["K"]))
    except DomainError:
        return False


def _step_log(state, schedule, cfg) -> list:
    rows = []
    A0 = ms.harmonic_diagonal(cfg.N)
    # drift per row is reconstructed from the cumulative A_tilde norms
    drift = 0.0
    for m, rep in enumerate(state.norms):
        row = dict.fromkeys(STEP_COLUMNS, float("nan"))
        row["m"] = m
        row["eps_m"] = float(schedule.eps[m]) if schedule is not None else 0.0
        row["sigma_m"] = float(schedule.sigma[m]) if schedule is not None else float("nan")
        row.update({
            "P_op": rep.op_norm, "P_comm": rep.comm_norm, "P_alpha": rep.alpha_norm,
            "P_delta_alpha": rep.delta_alpha_norm, "P_delta_comm_alpha": rep.delta_comm_alpha_norm,
            "P_alpha_hat": rep.alpha_hat, "P_alpha_hat_plus": rep.alpha_hat_plus,
        })
        row["drift"] = drift
        row["homo_verify"] = True
        row["kept"] = True
        if m < len(state.log):
            st = state.log[m]
            if schedule is not None:
                prm = step_parameters(cfg, schedule, m)
                row.update({"kappa_next": prm["kappa"], "K_next": prm["K"], "gamma_next": prm["gamma"], "kappa_carve": prm["kappa_carve"]})
            for key in ("A_tilde_norm", "residual", "residual_rel", "min_divisor", "S_alpha_hat_plus", "homo_verify"):
                if key in st:
                    row[key] = st[key]
            if "dS_domega_alpha_hat_plus" in st:
                row["dS_domega_alpha_hat_plus"] = st["dS_domega_alpha_hat_plus"]
            if "A_tilde_norm" in st:
                drift += st["A_tilde_norm"]
            row["kept"] = not (m == len(state.log) - 1 and not state.kept)
        rows.append(row)
    # exact drift of the final diagonal
    if rows:
        rows[-1]["drift"] = float(np.abs(state.lam - A0).max())
    return rows


# measure

def measure_scan(cfg: RunConfig, eps_grid, n_samples: int, mode: str = "frozen", seed: int | None = None) -> list:
    """
    Rejected fraction of sampled frequencies along the schedule, per step and
    cumulatively, for each ``eps`` in ``eps_grid``.

    ``frozen`` carves every step against the unperturbed diagonal (a cheap
    vectorised pass); ``full`` runs the whole iteration for each sample.
    """
    if n_samples < 1000:
        warnings.warn(f"n_samples={n_samples} < 1000: fractions are coarse", RuntimeWarning, stacklevel=2)
    n = cfg.potential_spec().n_freq
    seed = cfg.seed if seed is None else seed
    om = hom.sample_frequencies(n_samples, n, seed)
    rows = []
    alpha = cfg.alpha_value
    lam0 = ms.harmonic_diagonal(cfg.N)
    basis = build_basis(cfg.N, cfg.quad) if mode == "full" else None
    for eps in eps_grid:
        if eps == 0.0:
            # no perturbation: nothing is carved at any step
            rows.extend({
                "eps": 0.0, "step": m, "kappa": float("nan"), "kappa_carve": float("nan"), "K": float("nan"),
                "gamma": float("nan"), "fraction_step": 0.0, "fraction_cumulative": 0.0, "bound_ratio": float("nan"),
            } for m in range(cfg.m_max))
            continue
        sched = build_schedule(eps, cfg.sigma, cfg.m_max)
        alive = np.ones(n_samples, dtype=bool)
        if mode == "full":
            died = np.full(n_samples, -1)
            for s in range(n_samples):
                r = run(cfg.replace(eps=eps, omega=list(om[s]), threads=1), basis=basis)
                if not r.kept:
                    died[s] = len(r.state.S_history)
        for m in range(cfg.m_max):
            prm = step_parameters(cfg, sched, m)
            if mode == "full":
                rej = died == m
            elif prm["gamma"] >= 0.25:
                rej = np.ones(n_samples, dtype=bool)
            else:
                rej = hom.excluded_mask(om, lam0, prm["kappa_carve"], prm["K"], cfg.eps_bar, prm["gamma"], alpha)
            step_rej = alive & rej
            alive &= ~rej
            cum = 1.0 - alive.mean()
            rows.append({
                "eps": float(eps), "step": m, "kappa": prm["kappa"], "kappa_carve": prm["kappa_carve"],
                "K": prm["K"], "gamma": prm["gamma"], "fraction_step": float(step_rej.mean()),
                "fraction_cumulative": float(cum),
                "bound_ratio": float(cum / eps ** (cfg.nu1 / 17.0)),
            })
    return rows


# conjugation identity

def conjugation_defect(state: KamState, P0: FourierMatrix, tol: float = 1e-13, G: int | None = None) -> float:
    """
    ``max_theta || A_m + P_m - [U^-1 (A0 + P0) U - i U^-1 omega.dU] ||`` on a
    uniform grid, with ``dU`` by spectral differentiation of ``U``'s samples.
    """
    n = P0.n_freq
    N = P0.N
    if G is None:
        G = max(32, 2 * max(state.Pf.k_max, P0.k_max) + 2)
    thetas = theta_grid(G, n)
    if state.S_history:
        U = compose_U_batch(state.S_history, thetas, tol)
    else:
        U = np.broadcast_to(np.eye(N, dtype=complex), (thetas.shape[0], N, N)).copy()
    Ug = U.reshape((G,) * n + (N, N))
    freqs = np.fft.fftfreq(G, d=1.0 / G)
    dU = np.zeros_like(Ug)
    hat = np.fft.fftn(Ug, axes=tuple(range(n)))
    for d in range(n):
        sh = [1] * n + [1, 1]
        sh[d] = G
        f = freqs.copy()
        if G % 2 == 0:
            f[G // 2] = 0.0
        dU = dU + state.omega[d] * np.fft.ifftn(1j * f.reshape(sh) * hat, axes=tuple(range(n)))
    dU = dU.reshape(-1, N, N)
    Uinv = np.swapaxes(U, -1, -2).conj()
    H0 = np.diag(ms.harmonic_diagonal(N))[None] + P0.on_grid(G)
    rhs = Uinv @ H0 @ U - 1j * (Uinv @ dU)
    lhs = np.diag(state.lam)[None] + state.Pf.on_grid(G)
    return float(np.max(ms.op_norm(lhs - rhs)))
