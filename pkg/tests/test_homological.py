import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qho_kam import homological as hom
from qho_kam import matrix_spaces as ms
from qho_kam.errors import DomainError, UncarvedDivisorError
from qho_kam.fourier import FourierMatrix
from qho_kam.hermite import build_basis
from qho_kam.perturbation import catalog, fourier_P

GOLDEN = math.sqrt(5.0) - 1.0


def perturbed_diagonal(rng, N, eps, alpha):
    """Diagonal with ||A - A0||_alpha_hat <= eps, built from bounded increments."""
    i = np.arange(1, N)
    steps = rng.uniform(-1, 1, N - 1) * 0.5 * eps * i**-alpha
    t = np.concatenate([[0.0], np.cumsum(steps)])
    t *= 0.5 * eps / max(np.abs(t).max(), 1e-300) if np.abs(t).max() > 0.5 * eps else 1.0
    lam = ms.harmonic_diagonal(N) + t
    assert hom.homo_verify_norm(lam, alpha) <= eps
    return lam


def brute_violations(lam, omega, kappa, K, icut):
    # independent loops: i, j outermost, then every integer k in the box
    N = lam.size
    out = []
    n = len(omega)
    rng_k = range(-int(K), int(K) + 1)
    grid = np.array(np.meshgrid(*([list(rng_k)] * n), indexing="ij")).reshape(n, -1).T
    for k in sorted(map(tuple, grid)):
        ka = sum(abs(c) for c in k)
        if ka == 0 or ka > K:
            continue
        for i in range(1, N + 1):
            for j in range(1, N + 1):
                if abs(i - j) > 2 * math.pi * ka or min(i, j) > icut:
                    continue
                v = sum(c * w for c, w in zip(k, omega)) + (lam[i - 1] - lam[j - 1])
                if abs(v) < kappa * (1 + abs(i - j)):
                    out.append((k, i, j))
    return out


def brute_melnikov(omega, gamma, K):
    n = len(omega)
    for k in np.ndindex(*([2 * int(K) + 1] * n)):
        k = tuple(c - int(K) for c in k)
        ka = sum(abs(c) for c in k)
        if ka == 0 or ka > K:
            continue
        kw = sum(c * w for c, w in zip(k, omega))
        l = 0
        while abs(l) <= 4 * math.pi * ka:
            for s in {l, -l}:
                if abs(kw + s) < gamma * (1 + abs(s)):
                    return False
            l += 2
    return True


def test_divisor_examples():
    assert hom.divisor([0.3], [0], 5.0, 1.0) == 4.0
    assert hom.divisor([1.0], [2], 7.0, 7.0) == 2.0


def test_unperturbed_divisor_integer_part():
    lam = ms.harmonic_diagonal(20)
    D = hom.divisor_matrix([0.0], (3,), lam)
    i = np.arange(20)
    assert np.array_equal(D, (2 * (i[:, None] - i[None, :])).astype(float))
    D = hom.divisor_matrix([GOLDEN], (2,), lam)
    assert np.array_equal(D, 2 * GOLDEN + (2 * (i[:, None] - i[None, :])).astype(float))


@pytest.mark.parametrize("omega", [(math.pi,), (GOLDEN,), (2.0,), (0.5,), (1.0, math.e), (GOLDEN, math.sqrt(2))])
def test_melnikov_matches_brute_force(omega):
    for gamma, K in [(0.1, 10), (0.01, 3), (0.2, 1)]:
        if len(omega) == 2 and K > 3:
            continue
        assert hom.melnikov_accept(omega, gamma, K) == brute_melnikov(omega, gamma, K)


def test_melnikov_pi_and_integer():
    # pi is close to 3 + 0.14: 2*pi - 6 = 0.283 < 0.1 * 7
    assert not hom.melnikov_accept([math.pi], 0.1, 10)
    viol = hom.melnikov_violations([2.0], 0.05, 1)
    assert viol[0][:2] == ((-1,), 2)
    assert viol[0][2] == 0.0


def test_melnikov_small_gamma_accepts_irrational():
    assert hom.melnikov_accept([GOLDEN], 1e-12, 5)
    assert hom.melnikov_accept([GOLDEN, math.sqrt(2)], 1e-12, 3)


def test_melnikov_domain():
    for g in (0.0, 0.25, -1.0):
        with pytest.raises(DomainError):
            hom.melnikov_accept([GOLDEN], g, 2)
    with pytest.raises(DomainError):
        hom.melnikov_accept([GOLDEN], 0.1, 0.5)


@pytest.mark.parametrize("n", [1, 2])
def test_melnikov_measure_exponent(n):
    om = hom.sample_frequencies(10000, n, 0)
    lam = ms.harmonic_diagonal(16)
    gs = np.array([1e-3, 3e-3, 1e-2, 3e-2])
    fr = [hom.excluded_mask(om, lam, 0.0, 2, 0.1, g, 0.5, carve=False).mean() for g in gs]
    slope = np.polyfit(np.log(gs), np.log(fr), 1)[0]
    assert abs(slope - 1.0) <= 0.2


def test_carve_empty_for_unperturbed():
    lam = ms.harmonic_diagonal(32)
    scan = hom.carve_resonances(lam, [GOLDEN], 1e-8, 6, 0.1, 0.01, 0.5)
    assert scan.violations == [] and scan.kept
    assert scan.i_cut == 100


@pytest.mark.parametrize("seed", range(6))
def test_carve_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    N, alpha, eps = 24, 0.5, 0.1
    lam = perturbed_diagonal(rng, N, eps, alpha)
    n = 1 + seed % 2
    omega = rng.uniform(0, 2 * math.pi, n)
    kappa, gamma, K = 0.05, 0.05, 3 if n == 1 else 2
    scan = hom.carve_resonances(lam, omega, kappa, K, eps, gamma, alpha)
    got = [(k, i, j) for k, i, j, _ in scan.violations]
    assert sorted(got) == sorted(brute_violations(lam, omega, kappa, K, scan.i_cut))
    assert scan.kept == (not got and hom.melnikov_accept(omega, gamma, K))


def test_carve_preconditions():
    lam = ms.harmonic_diagonal(8)
    with pytest.raises(DomainError, match="diagonal"):
        hom.carve_resonances(np.ones((8, 8)), [GOLDEN], 1e-3, 2, 0.1, 0.01, 0.5)
    bad = lam.copy()
    bad[3] += 0.5
    with pytest.raises(DomainError, match="exceeds"):
        hom.carve_resonances(bad, [GOLDEN], 1e-3, 2, 0.1, 0.01, 0.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), eps=st.floats(1e-4, 0.5), alpha=st.floats(0.05, 1.0))
def test_zero_mode_separation(seed, eps, alpha):
    # |Lambda_i - Lambda_j| >= (1 + |i-j|)/2 whenever ||A - A0||_alpha_hat <= eps <= 1 - 2 gamma
    lam = perturbed_diagonal(np.random.default_rng(seed), 40, eps, alpha)
    i = np.arange(40)
    d = np.abs(i[:, None] - i[None, :])
    gap = np.abs(lam[:, None] - lam[None, :])
    off = d > 0
    assert np.all(gap[off] >= 0.5 * (1 + d[off]))


def test_i_cut_value():
    assert hom.i_cut_value(0.1, 0.05, 0.5) == 4
    assert hom.i_cut_value(0.1, 0.1, 0.5) == 1
    assert hom.i_cut_value(1e-3, 1e-4, 1.0) == 10
    assert hom.i_cut_value(0.0, 0.1, 0.5) == 1


def test_beyond_cut_no_violation():
    rng = np.random.default_rng(11)
    N, alpha, eps, gamma, K = 300, 0.5, 0.1, 0.05, 3
    lam = perturbed_diagonal(rng, N, eps, alpha)
    while True:
        omega = rng.uniform(0, 2 * math.pi, 1)
        if hom.melnikov_accept(omega, gamma, K):
            break
    kappa = gamma ** (1 + 2 / alpha)
    icut = hom.i_cut_value(eps, gamma, alpha)
    hits = 0
    while hits < 1000:
        k = int(rng.integers(1, K + 1)) * int(rng.choice([-1, 1]))
        i = int(rng.integers(icut, N - 20))
        d = int(rng.integers(-int(2 * math.pi * abs(k)), int(2 * math.pi * abs(k)) + 1))
        j = i - d
        if not icut <= j <= N:
            continue
        hits += 1
        assert abs(hom.divisor(omega, [k], lam[i - 1], lam[j - 1])) >= kappa * (1 + abs(d))


def test_solve_diagonal_only():
    N = 8
    Pf = FourierMatrix.constant(np.diag(np.linspace(0.1, 0.8, N)).astype(complex), 1, "hermitian")
    sol = hom.solve_homological(ms.harmonic_diagonal(N), Pf, [GOLDEN], 1e-3, 3)
    assert np.all(sol.S.coeffs == 0)
    assert np.array_equal(sol.A_tilde, np.linspace(0.1, 0.8, N))
    assert np.all(sol.R.coeffs == 0)
    assert sol.residual_norm == 0.0


def test_solve_single_entry():
    N, p, k0 = 8, 0.3 - 0.1j, 2
    Pf = FourierMatrix.zeros(N, 1, 3, "hermitian")
    Pf.coeffs[Pf._idx((k0,)), 1, 4] = p
    Pf.coeffs[Pf._idx((-k0,)), 4, 1] = np.conj(p)
    lam = ms.harmonic_diagonal(N)
    sol = hom.solve_homological(lam, Pf, [GOLDEN], 1e-3, 3)
    assert sol.S.coeff((k0,))[1, 4] == pytest.approx(-p / (k0 * GOLDEN + lam[1] - lam[4]), rel=1e-15)
    nz = np.abs(sol.S.coeffs) > 0
    assert nz.sum() == 2
    assert sol.residual_rel <= 1e-15
    assert sol.S.conjugation_defect(-1) == 0.0


@pytest.fixture(scope="module")
def cos_instance():
    b = build_basis(32, 128)
    Pf = fourier_P(b, catalog("cos_shift"), 6).scaled(1e-3)
    return ms.harmonic_diagonal(32), Pf


def test_solve_cos_instance(cos_instance):
    lam, Pf = cos_instance
    sol = hom.solve_homological(lam, Pf, [GOLDEN], 1e-6, 4)
    assert sol.residual_rel <= 1e-12
    assert sol.S.k_max == 4
    for k in sol.S.k_vectors():
        assert np.all(sol.R.coeff(k) == 0) or abs(k[0]) > 4
    for k in Pf.k_vectors():
        if abs(k[0]) > 4:
            assert np.array_equal(sol.R.coeff(k), Pf.coeff(k))
            assert np.all(sol.S.coeff(k) == 0)
    assert np.all(np.diag(sol.S.coeff((0,))) == 0)
    assert sol.S.conjugation_defect(-1) <= 1e-18
    assert sol.R.conjugation_defect(+1) == 0.0
    assert sol.A_tilde.dtype == float


def test_A_tilde_estimate(cos_instance):
    lam, Pf = cos_instance
    rng = np.random.default_rng(0)
    P2 = Pf.copy()
    d = rng.standard_normal(32) * 1e-4
    P2.coeffs[P2._idx((0,))] += np.diag(d)
    sol = hom.solve_homological(lam, P2, [GOLDEN], 1e-6, 4)
    a = 0.45
    At = ms.alpha_hat_norm(np.diag(sol.A_tilde), a)
    assert At <= ms.alpha_hat_norm(P2.on_grid(16), a) * (1 + 1e-12)


def test_S_estimate_constant_stable(cos_instance):
    lam, Pf = cos_instance
    a = 0.45
    P_norm = ms.alpha_hat_norm(Pf.on_grid(16), a)
    consts = []
    for omega in (GOLDEN, math.sqrt(2) - 1, math.e - 2, 0.1 + math.pi / 7):
        K = 4
        sol = hom.solve_homological(lam, Pf, [omega], 0.0, K)
        kappa = sol.min_divisor
        S_norm = ms.alpha_hat_plus_norm(sol.S.on_grid(16), a)
        consts.append(S_norm * kappa**4 / (K**3 * P_norm))
    consts = np.array(consts)
    assert np.all(np.isfinite(consts)) and np.all(consts > 0)
    assert consts.max() <= 1.0


def test_R_tail_bound():
    b = build_basis(16, 64)
    V = catalog("user", evaluator="aux_potentials:gauss_bump", n_freq=1)
    Pf = fourier_P(b, V, 10)
    C_f, rho = Pf.decay_fit()
    lam = ms.harmonic_diagonal(16)
    for K in (2, 4, 6):
        sol = hom.solve_homological(lam, Pf, [GOLDEN], 0.0, K)
        R_norm = float(np.max(ms.op_norm(sol.R.on_grid(32))))
        tail = sum(2 * C_f * math.exp(-rho * r) for r in range(K + 1, 11))
        assert R_norm <= 1.5 * tail


def test_uncarved_divisor_raises():
    N = 8
    Pf = FourierMatrix.zeros(N, 1, 1, "hermitian")
    Pf.coeffs[Pf._idx((1,)), 0, 1] = 1.0
    Pf.coeffs[Pf._idx((-1,)), 1, 0] = 1.0
    with pytest.raises(UncarvedDivisorError) as err:
        hom.solve_homological(ms.harmonic_diagonal(N), Pf, [2.0], 1e-3, 1)
    assert "k=(" in str(err.value)


def test_sign_flip_hook_breaks_residual(cos_instance, monkeypatch):
    lam, Pf = cos_instance
    monkeypatch.setattr(hom, "_SOLUTION_SIGN", -1.0)
    sol = hom.solve_homological(lam, Pf, [GOLDEN], 1e-6, 4)
    assert sol.residual_rel > 1.0


def test_omega_derivative_single_mode():
    N, p, k0 = 6, 0.2, 1
    Pf = FourierMatrix.zeros(N, 1, 1, "hermitian")
    Pf.coeffs[Pf._idx((k0,)), 0, 1] = p
    Pf.coeffs[Pf._idx((-k0,)), 1, 0] = p
    lam = ms.harmonic_diagonal(N)
    out = hom.omega_derivative(lam, Pf, [GOLDEN], 1, 0.5)
    # dS/domega for one entry: p k / D^2 at both conjugate modes
    D = k0 * GOLDEN + lam[0] - lam[1]
    dS = FourierMatrix.zeros(N, 1, 1)
    dS.coeffs[dS._idx((1,)), 0, 1] = p * k0 / D**2
    dS.coeffs[dS._idx((-1,)), 1, 0] = -p * k0 / D**2
    ref = ms.alpha_hat_plus_norm(dS.on_grid(6), 0.5)
    assert out["dS_domega_alpha_hat_plus"] == pytest.approx(ref, rel=1e-6)


def test_sampler_deterministic_and_in_range():
    a = hom.sample_frequencies(1000, 2, 7)
    b = hom.sample_frequencies(1000, 2, 7)
    assert np.array_equal(a, b) and a.shape == (1000, 2)
    assert a.min() >= 0 and a.max() < 2 * math.pi
    assert not np.array_equal(a, hom.sample_frequencies(1000, 2, 8))


def test_excluded_mask_matches_scan():
    rng = np.random.default_rng(4)
    N, alpha, eps, gamma = 30, 0.5, 0.1, 0.02
    lam = perturbed_diagonal(rng, N, eps, alpha)
    om = hom.sample_frequencies(256, 1, 1)
    for kappa, K in [(0.02, 2), (0.1, 3)]:
        mask = hom.excluded_mask(om, lam, kappa, K, eps, gamma, alpha)
        ref = [not hom.carve_resonances(lam, w, kappa, K, eps, gamma, alpha).kept for w in om]
        assert mask.tolist() == ref


def test_measure_kappa_zero_and_monotone():
    lam = ms.harmonic_diagonal(32)
    om = hom.sample_frequencies(2048, 1, 0)
    assert not hom.excluded_mask(om, lam, 0.0, 3, 0.1, 0.01, 0.5, melnikov=False).any()
    prev = None
    for K in (1, 2, 3):
        row = [hom.excluded_mask(om, lam, k, K, 0.1, 0.01, 0.5, melnikov=False).mean() for k in (1e-3, 1e-2, 1e-1)]
        assert row == sorted(row)
        if prev is not None:
            assert all(a >= b for a, b in zip(row, prev))
        prev = row


def test_measure_slope_consistent_with_bound():
    nu1 = 0.5 / 2.5
    lam = ms.harmonic_diagonal(32)
    kappas = np.array([1e-8, 1e-6, 1e-4])
    fr = [hom.estimate_excluded_measure(lam, k, 2, 0.1, k**nu1, 0.5, 4096, 0) for k in kappas]
    slope = np.polyfit(np.log(kappas), np.log(fr), 1)[0]
    assert slope >= nu1 - 0.3


def test_measure_warns_on_few_samples():
    with pytest.warns(RuntimeWarning, match="coarse"):
        hom.estimate_excluded_measure(ms.harmonic_diagonal(8), 1e-3, 1, 0.1, 0.01, 0.5, 16, 0)
