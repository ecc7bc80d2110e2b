"""
Property suites over random structured matrices and the auxiliary
inequalities (column norms, damped absolute values, a weighted series,
weighted Hermite norms), plus the homological residual check.

Each suite returns a dict with ``passed`` and the empirical constants.
"""
from __future__ import annotations

import math

import numpy as np

from . import homological as hom
from . import matrix_spaces as ms
from .hermite import build_basis, weighted_norm_ratio
from .perturbation import catalog, fourier_P

STABILITY_FACTOR = 2.0
S_VALUES = (-2.0, -1.0, 1.0, 2.0)


def random_structured(rng, N: int, alpha: float, kind: str = "hat_plus", size: int | None = None) -> np.ndarray:
    """
    Random sections with controlled structure.

    A Toeplitz part ``t_{i-j} ~ (1 + |i-j|)**-p`` plus a part
    ``r_ij (i ^ j)**-alpha (1 + |i-j|)**-p`` with complex Gaussian ``t, r``.
    ``p = 3`` gives elements of the ``alpha_hat_plus`` space uniformly in
    ``N``, ``p = 2`` only of the ``alpha_hat`` space.  Half of the samples are
    made Hermitian.
    """
    p = {"hat_plus": 3.0, "hat": 2.0}[kind]
    m = 1 if size is None else size
    i = np.arange(1, N + 1)
    dist = np.abs(i[:, None] - i[None, :])
    mn = np.minimum.outer(i, i)
    cz = lambda *s: (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / math.sqrt(2)
    kk = np.arange(-(N - 1), N)
    t = cz(m, kk.size) * (1.0 + np.abs(kk)) ** -p
    T = t[:, (i[:, None] - i[None, :]) + N - 1]
    D = cz(m, N, N) * mn ** (-float(alpha)) * (1.0 + dist) ** -p
    A = T + D
    herm = rng.random(m) < 0.5
    A[herm] = 0.5 * (A[herm] + np.swapaxes(A[herm], -1, -2).conj())
    return A[0] if size is None else A


def _hat(A, alpha):
    return np.maximum(ms.op_norm(A), ms.alpha_norm(ms.difference(A), alpha))


def _hat_plus(A, alpha):
    dA = ms.difference(A)
    return np.maximum.reduce([
        ms.op_norm(A), ms.op_norm(ms.comm_with_N(A)),
        ms.alpha_norm(dA, alpha), ms.alpha_norm(ms.comm_with_N(dA), alpha),
    ])


def _plus(A):
    return np.maximum(ms.op_norm(A), ms.op_norm(ms.comm_with_N(A)))


def _stable(per_size: dict) -> tuple[bool, float]:
    v = np.array(list(per_size.values()), dtype=float)
    if not np.all(np.isfinite(v)) or v.min() <= 0:
        return False, float("inf")
    f = float(v.max() / v.min())
    return f <= STABILITY_FACTOR, f


def algebra_suite(sizes=(16, 32, 64), alphas=(0.25, 0.5, 1.0), samples: int = 200, seed: int = 0) -> dict:
    """
    Ratios ``||AB||_hat / (||A||_hat+ ||B||_hat)`` (product_hat),
    ``||AB||_hat+ / (||A||_hat+ ||B||_hat+)`` (product_hat_plus),
    ``||A||_{l^2_s} / ||A||_+`` (sobolev), and the exhaustive diagonal
    difference inequality, with max ratios compared across sizes.
    """
    out = {"product_hat": {}, "product_hat_plus": {}, "sobolev": {}, "diagonal_difference": {}}
    passed = True
    for a in alphas:
        per = {"product_hat": {}, "product_hat_plus": {}, **{f"sobolev_s{s:+g}": {} for s in S_VALUES}}
        diag_ok = True
        for N in sizes:
            rng = np.random.default_rng([seed, N, int(round(a * 1000))])
            A = random_structured(rng, N, a, "hat_plus", samples)
            B = random_structured(rng, N, a, "hat", samples)
            B2 = random_structured(rng, N, a, "hat_plus", samples)
            hpA = _hat_plus(A, a)
            per["product_hat"][N] = float(np.max(_hat(A @ B, a) / (hpA * _hat(B, a))))
            per["product_hat_plus"][N] = float(np.max(_hat_plus(A @ B2, a) / (hpA * _hat_plus(B2, a))))
            pA = _plus(A)
            for s in S_VALUES:
                per[f"sobolev_s{s:+g}"][N] = float(np.max(ms.sobolev_op_norm(A, s) / pA))
            # diagonal sequences d_i = 2i - 1 + sum_{l<i} r_l l^-alpha
            for r in rng.standard_normal((samples, N - 1)):
                d = 2.0 * np.arange(1, N + 1) - 1.0
                d[1:] += np.cumsum(r * np.arange(1, N) ** -a)
                diag_ok &= ms.diag_diff_bound_check(np.diag(d), a)
        key = f"alpha={a:g}"
        for name in ("product_hat", "product_hat_plus"):
            ok, f = _stable(per[name])
            out[name][key] = {"max_ratio_by_N": per[name], "C_emp": max(per[name].values()), "spread": f, "stable": ok}
            passed &= ok
        sob = {}
        for s in S_VALUES:
            d = per[f"sobolev_s{s:+g}"]
            ok, f = _stable(d)
            sob[f"s={s:+g}"] = {"max_ratio_by_N": d, "C_emp": max(d.values()), "spread": f, "stable": ok}
            passed &= ok
        out["sobolev"][key] = sob
        out["diagonal_difference"][key] = bool(diag_ok)
        passed &= bool(diag_ok)
    out["passed"] = bool(passed)
    out["constants"] = {
        "product_hat": max(v["C_emp"] for v in out["product_hat"].values()),
        "product_hat_plus": max(v["C_emp"] for v in out["product_hat_plus"].values()),
        "sobolev": max(v["C_emp"] for d in out["sobolev"].values() for v in d.values()),
    }
    return out


def column_norm_suite(sizes=(16, 32, 64), samples: int = 200, seed: int = 1, rtol: float = 1e-12) -> dict:
    """
    Per column and per row: ``l2(A_.j) <= ||A||`` and
    ``l2(|A_.j| (1 + |i - j|)) <= ||A|| + ||[N, A]||``, checked on every sample.
    """
    worst_plain, worst_bar, ok = 0.0, 0.0, True
    for N in sizes:
        rng = np.random.default_rng([seed, N])
        A = random_structured(rng, N, 0.5, "hat_plus", samples)
        op = ms.op_norm(A)
        cm = ms.op_norm(ms.comm_with_N(A))
        bar = ms.overline(A)
        for ax in (-2, -1):
            plain = np.sqrt(np.sum(np.abs(A) ** 2, axis=ax)).max(axis=-1)
            barred = np.sqrt(np.sum(bar**2, axis=ax)).max(axis=-1)
            r1 = plain / op
            r2 = barred / (op + cm)
            worst_plain = max(worst_plain, float(r1.max()))
            worst_bar = max(worst_bar, float(r2.max()))
            ok &= bool(np.all(r1 <= 1 + rtol) and np.all(r2 <= 1 + rtol))
    return {"passed": ok, "max_column_ratio": worst_plain, "max_barred_ratio": worst_bar}


def underline_suite(sizes=(16, 32, 64), samples: int = 200, seed: int = 2) -> dict:
    """``||A_underline|| / ||A||`` with ``A_underline_ij = |A_ij| / (1 + |i - j|)``; C_emp per size."""
    per = {}
    for N in sizes:
        rng = np.random.default_rng([seed, N])
        A = rng.standard_normal((samples, N, N)) + 1j * rng.standard_normal((samples, N, N))
        B = random_structured(rng, N, 0.5, "hat", samples)
        M = np.concatenate([A, B])
        per[N] = float(np.max(ms.op_norm(ms.underline(M)) / ms.op_norm(M)))
    ok, f = _stable(per)
    return {"passed": ok, "C_emp_by_N": per, "C_emp": max(per.values()), "spread": f}


def series_bound(s: float) -> float:
    """Explicit bound ``2**s (pi^2/3 - 1) + 2 pi^2 / 3`` for ``s in [0, 2]``."""
    return 2.0**s * (math.pi**2 / 3.0 - 1.0) + 2.0 * math.pi**2 / 3.0


def series_suite(M: int = 100000, i_values=(1, 10, 100, 1000), s_values=(0.0, 1.0, 2.0)) -> dict:
    """Partial sums ``sum_{j<=M} (i/j)**s / (1 + |j - i|)**2`` against :func:`series_bound`."""
    j = np.arange(1, M + 1, dtype=float)
    table, ok = {}, True
    for s in s_values:
        row = {}
        for i in i_values:
            terms = (i / j) ** s / (1.0 + np.abs(j - i)) ** 2
            row[int(i)] = float(math.fsum(terms))
        bound = series_bound(s)
        table[f"s={s:g}"] = {"sums": row, "max": max(row.values()), "bound": bound}
        ok &= max(row.values()) <= bound
    return {"passed": bool(ok), "table": table}


def weighted_hermite_suite(n: int = 128, deltas=(0.25, 0.5, 1.0)) -> dict:
    """
    ``||(1+|x|)^delta h_i|| / (2i-1)**(delta/2)`` for ``i <= n``; bounded means
    the maximum over the upper half of the range does not exceed the maximum
    over the lower half.
    """
    basis = build_basis(n, 4 * n)
    out, ok = {}, True
    for d in deltas:
        r = np.array([weighted_norm_ratio(basis, i, d) for i in range(1, n + 1)])
        lo, hi = float(r[: n // 2].max()), float(r[n // 2 :].max())
        good = bool(np.all(np.isfinite(r)) and hi <= lo)
        out[f"delta={d:g}"] = {"C_emp": float(r.max()), "max_lower_half": lo, "max_upper_half": hi, "bounded": good}
        ok &= good
    return {"passed": ok, "ratios": out}


def homological_suite(N: int = 32, eps: float = 1e-3, K: float = 6.0, n_omega: int = 16, seed: int = 3,
                      gamma: float = 1e-3, tol: float = 1e-12) -> dict:
    """Relative residual of the mode identities for every accepted sampled frequency."""
    basis = build_basis(N, 4 * N)
    Pf = fourier_P(basis, catalog("cos_shift"), int(K) + 4).scaled(eps)
    lam = ms.harmonic_diagonal(N)
    oms = np.concatenate([[[math.sqrt(5) - 1]], hom.sample_frequencies(n_omega, 1, seed)])
    worst, accepted = 0.0, 0
    for om in oms:
        scan = hom.carve_resonances(lam, om, gamma ** 5, K, 0.1, gamma, 0.45)
        if not scan.kept:
            continue
        accepted += 1
        sol = hom.solve_homological(lam, Pf, om, gamma ** 5, K)
        worst = max(worst, sol.residual_rel)
    return {"passed": bool(accepted > 0 and worst <= tol), "max_relative_residual": worst, "accepted": accepted, "tested": len(oms)}


def run_all(cfg_verify: dict) -> dict:
    v = cfg_verify
    report = {
        "algebra": algebra_suite(tuple(v["sizes"]), tuple(v["alphas"]), int(v["samples"])),
        "column_norms": column_norm_suite(tuple(v["sizes"]), int(v["samples"])),
        "underline": underline_suite(tuple(v["sizes"]), int(v["samples"])),
        "series": series_suite(int(v["series_M"]), tuple(v["series_i"])),
        "weighted_hermite": weighted_hermite_suite(int(v["koch_n"]), tuple(v["koch_deltas"])),
    }
    old = hom._SOLUTION_SIGN
    try:
        if v.get("inject_sign_flip"):
            hom._SOLUTION_SIGN = -1.0
        report["homological_residual"] = homological_suite(int(v["homological_N"]))
    finally:
        hom._SOLUTION_SIGN = old
    report["passed"] = all(r["passed"] for r in report.values() if isinstance(r, dict))
    report["constants"] = {
        "product_hat": report["algebra"]["constants"]["product_hat"],
        "product_hat_plus": report["algebra"]["constants"]["product_hat_plus"],
        "sobolev": report["algebra"]["constants"]["sobolev"],
        "underline": report["underline"]["C_emp"],
    }
    return report
