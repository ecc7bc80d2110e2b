"""
Theta-dependent matrix families stored by their Fourier coefficients.

A :class:`FourierMatrix` holds ``F(theta) = sum_k C_k exp(i k.theta)`` for
``k`` in the l1-ball ``|k|_1 <= k_max`` of ``Z^n``.  Coefficients live in a
dense box array of shape ``(2 k_max + 1,) * n + (N, N)``; entries outside
the ball are kept at zero.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matrix_spaces as ms
from .errors import DomainError


def l1_ball(n: int, k_max: int) -> list[tuple[int, ...]]:
    """Integer vectors with ``|k|_1 <= k_max`` in lexicographic order."""
    r = range(-k_max, k_max + 1)
    return [k for k in itertools.product(r, repeat=n) if sum(abs(c) for c in k) <= k_max]


def theta_grid(G: int, n: int) -> np.ndarray:
    """Uniform grid ``2 pi g / G`` on the n-torus, shape ``(G**n, n)``, C order."""
    t = 2.0 * np.pi * np.arange(G) / G
    if n == 0:
        return np.zeros((1, 0))
    mesh = np.meshgrid(*([t] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class FourierMatrix:
    coeffs: np.ndarray
    k_max: int
    n_freq: int
    theta_grid_size: int = 0
    structure: str = "general"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        n = self.n_freq
        if c.ndim != n + 2 or c.shape[:n] != (2 * self.k_max + 1,) * n:
            raise DomainError(f"coefficient box has shape {c.shape}, expected k_max={self.k_max}, n={n}")
        self.coeffs = c
        if n > 1:
            self.coeffs[~self._ball_mask()] = 0.0

    # shape helpers
    @property
    def N(self) -> int:
        return self.coeffs.shape[-1]

    def _ball_mask(self) -> np.ndarray:
        r = np.abs(np.arange(-self.k_max, self.k_max + 1))
        tot = np.zeros((2 * self.k_max + 1,) * self.n_freq, dtype=int)
        for d in range(self.n_freq):
            sh = [1] * self.n_freq
            sh[d] = -1
            tot = tot + r.reshape(sh)
        return tot <= self.k_max

    def k_vectors(self) -> list[tuple[int, ...]]:
        return l1_ball(self.n_freq, self.k_max)

    def _idx(self, k) -> tuple[int, ...]:
        return tuple(int(c) + self.k_max for c in k)

    def has(self, k) -> bool:
        return len(k) == self.n_freq and sum(abs(int(c)) for c in k) <= self.k_max

    def coeff(self, k) -> np.ndarray:
        k = tuple(int(c) for c in np.atleast_1d(k)) if self.n_freq else ()
        if not self.has(k):
            return np.zeros((self.N, self.N), dtype=complex)
        return self.coeffs[self._idx(k)]

    # constructors
    @classmethod
    def zeros(cls, N: int, n: int, k_max: int = 0, structure: str = "general") -> "FourierMatrix":
        return cls(np.zeros((2 * k_max + 1,) * n + (N, N), dtype=complex), k_max, n, 0, structure)

    @classmethod
    def constant(cls, M, n: int, structure: str = "general") -> "FourierMatrix":
        F = cls.zeros(np.shape(M)[0], n, 0, structure)
        F.coeffs[(0,) * n] = M
        return F

    @classmethod
    def from_modes(cls, modes: dict, N: int, n: int, structure: str = "general") -> "FourierMatrix":
        k_max = max((sum(abs(c) for c in k) for k in modes), default=0)
        F = cls.zeros(N, n, k_max, structure)
        for k, M in modes.items():
            F.coeffs[F._idx(k)] = M
        return F

    @classmethod
    def from_grid(cls, values: np.ndarray, n: int, k_max: int, structure: str = "general") -> "FourierMatrix":
        """
        Extract coefficients ``|k|_1 <= k_max`` from samples on :func:`theta_grid`.

        ``values`` has shape ``(G,) * n + (N, N)`` (or ``(G**n, N, N)``).
        """
        values = np.asarray(values)
        N = values.shape[-1]
        if n == 0:
            return cls(values.reshape(N, N), 0, 0, 1, structure)
        G = round(values.shape[0] ** (1.0 / n)) if values.ndim == 3 and n > 1 else values.shape[0]
        values = values.reshape((G,) * n + (N, N))
        if G < 2 * k_max + 1:
            raise DomainError(f"grid of {G} points cannot resolve k_max={k_max}")
        hat = np.fft.fftn(values, axes=tuple(range(n))) / G**n
        idx = np.arange(-k_max, k_max + 1) % G
        box = hat[np.ix_(*([idx] * n))] if n else hat
        return cls(box, k_max, n, G, structure)

    # evaluation
    def evaluate(self, theta) -> np.ndarray:
        """``F(theta)`` at a single point."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.synthesize(theta[None, :])[0]

    def synthesize(self, thetas) -> np.ndarray:
        """``F`` at arbitrary points, ``thetas`` of shape ``(m, n)``; returns ``(m, N, N)``."""
        if self.n_freq == 0:
            m = max(1, np.asarray(thetas).shape[0]) if np.ndim(thetas) else 1
            return np.broadcast_to(self.coeffs, (m, self.N, self.N)).copy()
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.n_freq)
        ks = np.array(self.k_vectors(), dtype=float).reshape(-1, self.n_freq)
        ph = np.exp(1j * thetas @ ks.T)
        C = np.stack([self.coeffs[self._idx(k)] for k in self.k_vectors()])
        return np.tensordot(ph, C, axes=(1, 0))

    def on_grid(self, G: int) -> np.ndarray:
        """Values on the uniform grid, shape ``(G**n, N, N)`` (C order over the grid)."""
        n = self.n_freq
        if n == 0:
            return self.coeffs[None].copy()
        if G < 2 * self.k_max + 1:
            raise DomainError(f"grid of {G} points cannot resolve k_max={self.k_max}")
        N = self.N
        buf = np.zeros((G,) * n + (N, N), dtype=complex)
        idx = np.arange(-self.k_max, self.k_max + 1) % G
        buf[np.ix_(*([idx] * n))] = self.coeffs
        vals = np.fft.ifftn(buf, axes=tuple(range(n))) * G**n
        return vals.reshape(G**n, N, N)

    # algebra
    def copy(self) -> "FourierMatrix":
        return FourierMatrix(self.coeffs.copy(), self.k_max, self.n_freq, self.theta_grid_size, self.structure, dict(self.meta))

    def scaled(self, c) -> "FourierMatrix":
        out = self.copy()
        out.coeffs *= c
        return out

    def resized(self, k_max: int) -> "FourierMatrix":
        """Zero-pad or truncate to a new ``k_max``."""
        n = self.n_freq
        out = FourierMatrix.zeros(self.N, n, k_max, self.structure)
        for k in out.k_vectors():
            if self.has(k):
                out.coeffs[out._idx(k)] = self.coeffs[self._idx(k)]
        out.meta = dict(self.meta)
        return out

    def split(self, K: float) -> tuple["FourierMatrix", "FourierMatrix"]:
        """``(low, high)`` with ``low`` holding ``|k|_1 <= K`` and ``high`` the rest."""
        low, high = self.copy(), self.copy()
        for k in self.k_vectors():
            if sum(abs(c) for c in k) <= K:
                high.coeffs[self._idx(k)] = 0.0
            else:
                low.coeffs[self._idx(k)] = 0.0
        return low, high

    def __add__(self, other: "FourierMatrix") -> "FourierMatrix":
        k = max(self.k_max, other.k_max)
        a, b = self.resized(k), other.resized(k)
        st = self.structure if self.structure == other.structure else "general"
        return FourierMatrix(a.coeffs + b.coeffs, k, self.n_freq, 0, st)

    # diagnostics
    def mode_norms(self) -> dict:
        return {k: float(ms.op_norm(self.coeffs[self._idx(k)])) for k in self.k_vectors()}

    def max_mode_norm(self) -> float:
        return max(self.mode_norms().values(), default=0.0)

    def conjugation_defect(self, sign: int = 1) -> float:
        """``max_k |C_{-k} - sign * C_k^dagger|``; sign=+1 Hermitian-valued, -1 anti."""
        d = 0.0
        for k in self.k_vectors():
            mk = tuple(-c for c in k)
            a = self.coeffs[self._idx(mk)]
            b = self.coeffs[self._idx(k)].conj().T
            d = max(d, float(np.abs(a - sign * b).max()))
        return d

    def decay_fit(self, floor_rel: float = 1e-13):
        """
        Fit ``max_{|k|=r} ||C_k|| ~ C_f exp(-rho r)`` over modes above the noise floor.

        Returns ``(C_f, rho)`` or None when fewer than two shells are above it.
        """
        shells = np.zeros(self.k_max + 1)
        for k, v in self.mode_norms().items():
            r = sum(abs(c) for c in k)
            shells[r] = max(shells[r], v)
        top = shells.max()
        if top == 0.0:
            return None
        r = np.nonzero(shells > floor_rel * top)[0]
        if r.size < 2:
            return None
        slope, icpt = np.polyfit(r, np.log(shells[r]), 1)
        return float(np.exp(icpt)), float(-slope)

    # serialization
    def dump(self, directory, alpha: float | None = None) -> None:
        """One text matrix per mode plus ``manifest.json`` listing the k vectors."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = []
        for k in self.k_vectors():
            name = "k_" + "_".join(f"{c:+d}" for c in k) + ".txt" if k else "k_0.txt"
            ms.dump_matrix(self.coeffs[self._idx(k)], d / name, "general", alpha)
            files.append({"k": list(k), "file": name})
        manifest = {
            "n_freq": self.n_freq,
            "k_max": self.k_max,
            "N": self.N,
            "structure": self.structure,
            "theta_grid_size": self.theta_grid_size,
            "blocks": files,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")

    @classmethod
    def load(cls, directory) -> "FourierMatrix":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        F = cls.zeros(man["N"], man["n_freq"], man["k_max"], man["structure"])
        F.theta_grid_size = man["theta_grid_size"]
        for blk in man["blocks"]:
            A, _, _ = ms.load_matrix(d / blk["file"])
            F.coeffs[F._idx(blk["k"])] = A
        return F
