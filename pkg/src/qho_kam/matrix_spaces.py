"""
Finite sections of the weighted matrix spaces and their norms.

Matrices are plain complex numpy arrays indexed from 1 in the formulas
(row ``i``, column ``j``).  ``N = diag(1, 2, 3, ...)`` is the counting
matrix; the difference operator is ``(dA)_ij = A_{i+1,j+1} - A_ij``.

Most functions accept a leading batch axis, ``A.shape == (..., n, n)``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericalError

STRUCTURES = ("general", "hermitian", "anti_hermitian", "diagonal")
DENSE_LIMIT = 512


@dataclass(frozen=True)
class TruncMatrix:
    """An ``n x n`` complex section carrying a verified structure flag."""

    entries: np.ndarray
    structure: str = "general"

    def __post_init__(self):
        A = np.asarray(self.entries)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("TruncMatrix entries must be square")
        if A.shape[0] < 2:
            raise DomainError("TruncMatrix needs dim >= 2")
        if self.structure not in STRUCTURES:
            raise DomainError(f"unknown structure {self.structure!r}")
        if not check_structure(A, self.structure):
            raise DomainError(f"entries are not {self.structure}")
        object.__setattr__(self, "entries", A)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def check_structure(A, structure: str, tol: float = 0.0) -> bool:
    A = np.asarray(A)
    if structure == "general":
        return True
    if structure == "hermitian":
        return bool(np.abs(A - A.conj().T).max() <= tol * max(1.0, np.abs(A).max()))
    if structure == "anti_hermitian":
        return bool(np.abs(A + A.conj().T).max() <= tol * max(1.0, np.abs(A).max()))
    if structure == "diagonal":
        return not np.any(A[~np.eye(A.shape[0], dtype=bool)])
    raise DomainError(f"unknown structure {structure!r}")


def _arr(A) -> np.ndarray:
    return A.entries if isinstance(A, TruncMatrix) else np.asarray(A)


def counting_matrix(n: int) -> np.ndarray:
    """``N = diag(1, ..., n)``."""
    return np.diag(np.arange(1.0, n + 1))


def harmonic_diagonal(n: int) -> np.ndarray:
    """Unperturbed eigenvalues ``2i - 1`` as a float vector."""
    return 2.0 * np.arange(1, n + 1) - 1.0


def _min_index(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return np.minimum.outer(i, i)


def op_norm(A) -> float | np.ndarray:
    """Largest singular value (dense SVD up to n=512, power iteration above)."""
    A = _arr(A)
    n = A.shape[-1]
    if n <= DENSE_LIMIT:
        if A.size == 0:
            return 0.0
        s = np.linalg.svd(A, compute_uv=False)
        out = s[..., 0]
        return float(out) if out.ndim == 0 else out
    if A.ndim > 2:
        return np.array([op_norm(a) for a in A.reshape(-1, n, n)]).reshape(A.shape[:-2])
    return _power_norm(A)


def _power_norm(A, rtol=1e-8, maxiter=5000):
    v = np.ones(A.shape[1], dtype=complex) / np.sqrt(A.shape[1])
    lam = 0.0
    for _ in range(maxiter):
        w = A.conj().T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= rtol * nw:
            return float(np.sqrt(nw))
        lam = nw
    raise NumericalError("power iteration did not converge")


def difference(A) -> np.ndarray:
    """``(dA)_ij = A_{i+1,j+1} - A_ij``, dimension shrinks by one."""
    A = _arr(A)
    if A.shape[-1] < 2:
        raise DomainError("difference needs dim >= 2")
    return A[..., 1:, 1:] - A[..., :-1, :-1]


def alpha_norm(A, alpha: float) -> float | np.ndarray:
    """``|A|_alpha = max (i ^ j)**alpha |A_ij|``."""
    A = _arr(A)
    w = _min_index(A.shape[-1]) ** float(alpha)
    out = np.max(w * np.abs(A), axis=(-2, -1)) if A.size else np.zeros(A.shape[:-2])
    return float(out) if np.ndim(out) == 0 else out


def comm_with_N(A) -> np.ndarray:
    """``[N, A]_ij = (i - j) A_ij``."""
    A = _arr(A)
    n = A.shape[-1]
    i = np.arange(n)
    return (i[:, None] - i[None, :]) * A


@dataclass(frozen=True)
class NormReport:
    op_norm: float
    comm_norm: float
    alpha_norm: float
    delta_alpha_norm: float
    delta_comm_alpha_norm: float
    alpha: float

    @property
    def alpha_hat(self) -> float:
        return max(self.op_norm, self.delta_alpha_norm)

    @property
    def alpha_hat_plus(self) -> float:
        return max(self.op_norm, self.comm_norm, self.delta_alpha_norm, self.delta_comm_alpha_norm)

    @property
    def plus(self) -> float:
        return max(self.op_norm, self.comm_norm)

    def as_dict(self) -> dict:
        return {
            "op_norm": self.op_norm,
            "comm_norm": self.comm_norm,
            "alpha_norm": self.alpha_norm,
            "delta_alpha_norm": self.delta_alpha_norm,
            "delta_comm_alpha_norm": self.delta_comm_alpha_norm,
            "alpha_hat": self.alpha_hat,
            "alpha_hat_plus": self.alpha_hat_plus,
            "alpha": self.alpha,
        }

    @staticmethod
    def sup(reports) -> "NormReport":
        """Entrywise maximum over a family of reports (same alpha)."""
        reports = list(reports)
        f = lambda name: max(getattr(r, name) for r in reports)
        return NormReport(
            f("op_norm"), f("comm_norm"), f("alpha_norm"),
            f("delta_alpha_norm"), f("delta_comm_alpha_norm"), reports[0].alpha,
        )


def full_report(A, alpha: float) -> NormReport:
    """All five norms of a single section."""
    A = _arr(A)
    if A.shape[-1] < 2:
        raise DomainError("full_report needs dim >= 2")
    dA = difference(A)
    return NormReport(
        float(op_norm(A)),
        float(op_norm(comm_with_N(A))),
        float(alpha_norm(A, alpha)),
        float(alpha_norm(dA, alpha)),
        float(alpha_norm(comm_with_N(dA), alpha)),
        float(alpha),
    )


def sup_report(batch: np.ndarray, alpha: float) -> NormReport:
    """Entrywise sup of the norms over a batch ``(m, n, n)`` (e.g. a theta grid)."""
    batch = np.asarray(batch)
    dA = difference(batch)
    return NormReport(
        float(np.max(op_norm(batch))),
        float(np.max(op_norm(comm_with_N(batch)))),
        float(np.max(alpha_norm(batch, alpha))),
        float(np.max(alpha_norm(dA, alpha))),
        float(np.max(alpha_norm(comm_with_N(dA), alpha))),
        float(alpha),
    )


def alpha_hat_norm(A, alpha: float) -> float:
    A = _arr(A)
    return max(float(np.max(op_norm(A))), float(np.max(alpha_norm(difference(A), alpha))))


def alpha_hat_plus_norm(A, alpha: float) -> float:
    A = _arr(A)
    dA = difference(A)
    return max(
        float(np.max(op_norm(A))),
        float(np.max(op_norm(comm_with_N(A)))),
        float(np.max(alpha_norm(dA, alpha))),
        float(np.max(alpha_norm(comm_with_N(dA), alpha))),
    )


def plus_norm(A) -> float:
    """``||A||_+ = max(||A||, ||[N, A]||)``."""
    A = _arr(A)
    return max(float(np.max(op_norm(A))), float(np.max(op_norm(comm_with_N(A)))))


def is_antihermitian(S, rtol: float = 1e-12) -> bool:
    S = _arr(S)
    scale = max(float(np.abs(S).max()) if S.size else 0.0, 1e-300)
    return bool(np.abs(S + np.swapaxes(S, -1, -2).conj()).max() <= rtol * scale)


def _taylor_plan(x: float, tol: float):
    # smallest (squarings s, degree m) with remainder bound below tol
    s = max(0, int(np.ceil(np.log2(x / 0.5)))) if x > 0.5 else 0
    y = x / 2.0**s
    term, m = 1.0, 0
    while True:
        m += 1
        term *= y / m
        # tail bound: y^{m+1}/(m+1)! / (1 - y/(m+2))
        tail = term * y / (m + 1) / (1.0 - y / (m + 2))
        if tail <= tol * 2.0**-s or m >= 40:
            return s, m


def mat_exp(S, tol: float = 1e-13, antihermitian: bool | None = None, check: bool = True) -> np.ndarray:
    """
    Matrix exponential by scaling and squaring of the Taylor series.

    Parameters
    ----------
    S : array_like, shape (..., n, n)
        Generator, batched over leading axes.
    tol : float
        Target bound on the truncation error of the series.
    antihermitian : bool, optional
        Treat ``S`` as anti-Hermitian; detected when omitted.  The result is
        then checked to be unitary to ``tol`` (scaled by ``n`` and the number
        of squarings to account for rounding).

    Raises
    ------
    DomainError
        Non-finite input or ``tol <= 0``.
    NumericalError
        Unitarity check failed.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    S = np.asarray(_arr(S), dtype=complex)
    if not np.all(np.isfinite(S)):
        raise DomainError("mat_exp: non-finite entries")
    n = S.shape[-1]
    eye = np.eye(n, dtype=complex)
    if S.size == 0:
        return np.broadcast_to(eye, S.shape).copy()
    # 1-norm bounds the spectral norm up to sqrt(n); cheap and safe
    x = float(np.max(np.sum(np.abs(S), axis=-2)))
    s, m = _taylor_plan(x, tol)
    Y = S / 2.0**s
    E = eye + Y
    T = Y
    for j in range(2, m + 1):
        T = (T @ Y) / j
        E = E + T
    for _ in range(s):
        E = E @ E
    if antihermitian is None:
        antihermitian = is_antihermitian(S)
    if antihermitian and check:
        dev = unitarity_defect(E)
        bound = max(tol, 64 * n * (s + 1) * np.finfo(float).eps)
        if dev > bound:
            raise NumericalError(f"exponential of anti-Hermitian input not unitary: {dev:.3e} > {bound:.3e}")
    return E


def unitarity_defect(U) -> float:
    """``max ||U^dagger U - I||`` over a batch."""
    U = _arr(U)
    n = U.shape[-1]
    G = np.swapaxes(U, -1, -2).conj() @ U - np.eye(n)
    return float(np.max(op_norm(G)))


def sobolev_weights(n: int, s: float) -> np.ndarray:
    return np.arange(1.0, n + 1) ** (s / 2.0)


def sobolev_op_norm(A, s: float) -> float | np.ndarray:
    """Norm of ``A`` on ``l^2_s``: ``||D^{s/2} A D^{-s/2}||`` with ``D = diag(i)``."""
    if not -2.0 <= s <= 2.0:
        raise DomainError("sobolev exponent must lie in [-2, 2]")
    A = _arr(A)
    w = sobolev_weights(A.shape[-1], s)
    return op_norm(w[:, None] * A / w[None, :])


def diag_diff_bound_check(A, alpha: float, rtol: float = 1e-12) -> bool:
    """
    Check ``|d_i - d_j| <= |dA|_alpha |i - j| / (i ^ j)**alpha`` for all pairs.

    ``A`` must be diagonal (a 1-d array is read as the diagonal itself).
    """
    A = _arr(A)
    if A.ndim == 1:
        d = A
    else:
        if not check_structure(A, "diagonal"):
            raise DomainError("diag_diff_bound_check needs a diagonal matrix")
        d = np.diag(A)
    n = d.size
    if n < 2:
        raise DomainError("need dim >= 2")
    i = np.arange(1, n + 1)
    da = float(np.max(i[:-1] ** float(alpha) * np.abs(np.diff(d))))
    lhs = np.abs(d[:, None] - d[None, :])
    rhs = da * np.abs(i[:, None] - i[None, :]) / np.minimum.outer(i, i) ** float(alpha)
    slack = rtol * max(float(np.abs(d).max()), 1.0)
    return bool(np.all(lhs <= rhs + slack))


# auxiliary maps used by the bound suites

def overline(A) -> np.ndarray:
    """``|A_ij| (1 + |i - j|)``."""
    A = _arr(A)
    n = A.shape[-1]
    i = np.arange(n)
    return np.abs(A) * (1.0 + np.abs(i[:, None] - i[None, :]))


def underline(A) -> np.ndarray:
    """``|A_ij| / (1 + |i - j|)``."""
    A = _arr(A)
    n = A.shape[-1]
    i = np.arange(n)
    return np.abs(A) / (1.0 + np.abs(i[:, None] - i[None, :]))


def weighted_decay_sup(A, alpha: float) -> float:
    """``sup (1 + |i - j|) (i ^ j)**alpha |A_ij|``."""
    A = _arr(A)
    return float(np.max(overline(A) * _min_index(A.shape[-1]) ** float(alpha)))


# text format

_HEADER = "# qho_kam matrix v1"


def dump_matrix(A, fh, structure: str = "general", alpha: float | None = None) -> None:
    """
    Write a matrix in the text format::

        # qho_kam matrix v1
        dim <n>
        structure <flag>
        alpha <value or none>
        <re> <im>        (n*n lines, row-major)
    """
    A = np.asarray(_arr(A), dtype=complex)
    if isinstance(fh, (str, Path)):
        with open(fh, "w", encoding="ascii", newline="\n") as f:
            return dump_matrix(A, f, structure, alpha)
    n = A.shape[0]
    fh.write(f"{_HEADER}\ndim {n}\nstructure {structure}\n")
    fh.write("alpha none\n" if alpha is None else f"alpha {float(alpha):.17g}\n")
    flat = A.ravel()
    buf = io.StringIO()
    for z in flat:
        buf.write(f"{z.real:.17g} {z.imag:.17g}\n")
    fh.write(buf.getvalue())


def load_matrix(fh) -> tuple[np.ndarray, str, float | None]:
    """Inverse of :func:`dump_matrix`; returns ``(entries, structure, alpha)``."""
    if isinstance(fh, (str, Path)):
        with open(fh, encoding="ascii") as f:
            return load_matrix(f)
    lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise DomainError("not a qho_kam matrix file")
    n = int(lines[1].split()[1])
    structure = lines[2].split()[1]
    a = lines[3].split()[1]
    alpha = None if a == "none" else float(a)
    data = np.loadtxt(io.StringIO("\n".join(lines[4:])), ndmin=2)
    if data.shape != (n * n, 2):
        raise DomainError(f"expected {n * n} entries, found {data.shape[0]}")
    A = (data[:, 0] + 1j * data[:, 1]).reshape(n, n)
    return A, structure, alpha
