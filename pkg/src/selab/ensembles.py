"""Gaussian sampling and the small dense linear algebra the rest of the package leans on.

All randomness is drawn from counter-based substreams: a generator is a pure
function of ``(seed, tag, indices...)`` so replicates and steps can be produced
in any order and are bit-reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariance, InvalidArgument

# stream tags, kept fixed so artifacts reproduce across versions
TAG_DATA = 11
TAG_AUX_U = 21
TAG_AUX_V = 22
TAG_XI_G = 31
TAG_XI_H = 32
TAG_SE_AUX_U = 41
TAG_SE_AUX_V = 42
TAG_POWER = 51


def stream(seed, *keys):
    """Generator keyed on ``(seed, *keys)``; the key tuple is hashed by SeedSequence."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)]))


def gaussian_vector(m, seed, *keys):
    """A single N(0, I_m/m) draw from the keyed substream."""
    return stream(seed, *keys).standard_normal(m) / np.sqrt(m)


@dataclass
class GaussianData:
    """Data matrix with i.i.d. N(0, 1/d) entries."""

    X: np.ndarray
    seed: int
    _op_norm: float = field(default=None, repr=False)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def aspect(self):
        return self.n / self.d

    def op_norm(self):
        if self._op_norm is None:
            self._op_norm = operator_norm(self.X.__matmul__, self.X.T.__matmul__, self.d)
        return self._op_norm


def sample_data(n, d, seed):
    if n < 1 or d < 1:
        raise InvalidArgument(f"dimensions must be positive, got n={n}, d={d}")
    X = stream(seed, TAG_DATA).standard_normal((n, d))
    X *= 1.0 / np.sqrt(d)
    return GaussianData(X=X, seed=int(seed))


class InnovationBank:
    """Replicated N(0, I_m/m) innovations, one independent substream per (replicate, step).

    ``draw(step)`` returns an ``(R, m)`` array whose row ``r`` depends only on
    ``(seed, tag, step, r)``.
    """

    def __init__(self, R, m, seed, tag):
        self.R, self.m, self.seed, self.tag = int(R), int(m), int(seed), int(tag)
        self._cache = {}

    def draw(self, step):
        if step not in self._cache:
            out = np.empty((self.R, self.m))
            for r in range(self.R):
                out[r] = stream(self.seed, self.tag, step, r).standard_normal(self.m)
            out *= 1.0 / np.sqrt(self.m)
            self._cache[step] = out
        return self._cache[step]

    def __len__(self):
        return len(self._cache)

    def columns(self, count):
        return [self.draw(j) for j in range(count)]


def mix(bank, coeffs):
    """Per replicate, the combination sum_l coeffs[l] * xi_l of the bank's innovations."""
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.ndim != 1:
        raise InvalidArgument("coefficients must be a vector")
    cols = bank.columns(len(coeffs)) if isinstance(bank, InnovationBank) else list(bank)
    if len(coeffs) > len(cols):
        raise InvalidArgument(f"{len(coeffs)} coefficients for {len(cols)} innovation steps")
    out = np.zeros_like(cols[0]) if cols else None
    for c, xi in zip(coeffs, cols):
        if c != 0.0:
            out += c * xi
    return out


def min_eigen(K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])


def default_jitter(K):
    K = np.atleast_2d(K)
    return 1e-10 * max(np.trace(K), 0.0) / K.shape[0]


def repair_psd(K, budget=1e-8):
    """Symmetrize and clip negative eigenvalues at zero.

    Eigenvalues below ``-budget * max(1, |lambda|_max)`` are not treated as
    round-off and raise DegenerateCovariance with the spectrum attached.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1]:
        raise InvalidArgument("covariance must be square")
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asym > 1e-8 * max(1.0, np.max(np.abs(K))):
        raise InvalidArgument(f"covariance is not symmetric (max asymmetry {asym:.3g})")
    K = 0.5 * (K + K.T)
    w, Q = np.linalg.eigh(K)
    if w.size and w[0] < -budget * max(1.0, np.max(np.abs(w))):
        raise DegenerateCovariance(f"covariance has eigenvalue {w[0]:.3g}", spectrum=w)
    if w.size and w[0] < 0:
        K = (Q * np.clip(w, 0.0, None)) @ Q.T
    return K


def lower_factor(K, jitter=0.0, budget=1e-8, pivot_tol=1e-10):
    """Lower-triangular L with L L^T equal to the PSD-repaired K + jitter*I.

    Semidefinite inputs are handled by zeroing pivots below ``pivot_tol`` times
    the largest diagonal entry, so a duplicated direction gets innovation
    weight exactly zero.
    """
    if jitter < 0:
        raise InvalidArgument("jitter must be non-negative")
    K = repair_psd(K, budget) + jitter * np.eye(np.atleast_2d(K).shape[0])
    k = K.shape[0]
    L = np.zeros_like(K)
    scale = max(np.max(np.diag(K)) if k else 0.0, np.finfo(float).tiny)
    for j in range(k):
        s = K[j, j] - L[j, :j] @ L[j, :j]
        if s <= pivot_tol * scale:
            continue
        L[j, j] = np.sqrt(s)
        L[j + 1:, j] = (K[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def gram_solve(K, b, pinv=False, rel_floor=1e-9):
    """Solve K x = b for a PSD Gram matrix K.

    With ``pinv`` the minimum-norm solution is returned when K is (near)
    singular; otherwise a near-singular K raises DegenerateCovariance.
    An all-zero K is the empty-span convention and always yields x = 0.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    b = np.asarray(b, dtype=float)
    if K.size == 0:
        return np.zeros(0)
    scale = np.max(np.abs(np.diag(K)))
    if scale == 0.0:
        return np.zeros_like(b)
    w = np.linalg.eigvalsh(K)
    if w[0] > rel_floor * scale:
        return np.linalg.solve(K, b)
    if not pinv:
        raise DegenerateCovariance(
            f"Gram matrix is near-singular (min eigenvalue {w[0]:.3g}, scale {scale:.3g})", spectrum=w)
    return np.linalg.pinv(K, rcond=rel_floor, hermitian=True) @ b


def extend_factor(L, K, k_row, q, pinv=False, rel_floor=1e-12):
    """Next row of a lower factor after bordering K with ``(k_row, q)``.

    Returns ``(coeffs, resid)`` where ``coeffs`` are the weights on the
    existing innovations and ``resid`` the weight on the fresh one. This is
    the Gaussian-regression form G K^+ k_row + sqrt(q - k_row^T K^+ k_row) xi.
    """
    k_row = np.asarray(k_row, dtype=float)
    if k_row.size == 0:
        return np.zeros(0), float(np.sqrt(max(q, 0.0)))
    a = gram_solve(K, k_row, pinv=pinv)
    coeffs = L.T @ a
    r2 = q - k_row @ a
    if r2 <= rel_floor * max(abs(q), np.finfo(float).tiny):
        r2 = 0.0
    return coeffs, float(np.sqrt(r2))


def project_orthogonal(M, v):
    """v minus its projection on the column span of M (pseudo-inverse when MᵀM is singular)."""
    v = np.asarray(v, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[1] == 0 or not np.any(M):
        return v.copy()
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    return v - M @ coef


def operator_norm(matvec, rmatvec, dim, iters=50, seed=0):
    """Largest singular value by power iteration on AᵀA from a fixed-seed start."""
    x = stream(seed, TAG_POWER, dim).standard_normal(dim)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = matvec(x)
        z = rmatvec(y)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        sigma = np.sqrt(nz)
        x = z / nz
    return float(sigma)
