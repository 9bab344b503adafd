"""Dense small-matrix primitives.

Everything here works on plain :class:`numpy.ndarray` objects. The rank test
used throughout the package lives here as :func:`is_full_rank`.
"""

import numpy as np
import scipy.linalg

from .errors import NotSPD, RankDeficient

RANK_TOL = 1e-9
SPD_TOL = 1e-12


def is_full_rank(a, tol=RANK_TOL):
    """Return True when ``sigma_min(a) > tol * max(n, m) * sigma_max(a)``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] > a.shape[0] or not np.all(np.isfinite(a)):
        return False
    sv = np.linalg.svd(a, compute_uv=False)
    return bool(sv[-1] > tol * max(a.shape) * sv[0])


def check_full_rank(a, tol=RANK_TOL):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise RankDeficient(f"expected a 2-d matrix, got shape {a.shape}")
    if a.shape[1] > a.shape[0]:
        raise RankDeficient(f"{a.shape[0]}x{a.shape[1]} matrix cannot have full column rank")
    if not is_full_rank(a, tol):
        raise RankDeficient("matrix is not of full column rank")
    return a


def pseudoinverse(a):
    """Moore-Penrose inverse ``(a^T a)^{-1} a^T`` of a full-rank ``n x m`` matrix.

    Raises
    ------
    RankDeficient
        If the smallest singular value fails the rank tolerance.
    """
    a = check_full_rank(a)
    return np.linalg.solve(a.T @ a, a.T)


def _check_symmetric(p, tol):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise NotSPD(f"expected a square matrix, got shape {p.shape}")
    scale = max(np.abs(p).max(), 1.0)
    if np.abs(p - p.T).max() > tol * scale:
        raise NotSPD("matrix is not symmetric")
    return 0.5 * (p + p.T)


def sym_eigh(p, tol=SPD_TOL):
    """Eigendecomposition of an SPD matrix, raising :class:`NotSPD` otherwise."""
    p = _check_symmetric(p, 1e-10)
    w, q = np.linalg.eigh(p)
    if w[0] <= tol * max(abs(w[-1]), 1.0):
        raise NotSPD(f"smallest eigenvalue {w[0]:.3e} is not positive")
    return w, q


def sym_sqrt(p):
    """Symmetric positive-definite square root of an SPD matrix."""
    w, q = sym_eigh(p)
    s = (q * np.sqrt(w)) @ q.T
    return 0.5 * (s + s.T)


def sym_invsqrt(p):
    w, q = sym_eigh(p)
    s = (q / np.sqrt(w)) @ q.T
    return 0.5 * (s + s.T)


def matrix_exp(x):
    """Matrix exponential (scaling and squaring with a Pade core)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    return scipy.linalg.expm(x)


def sample_gaussian(n, m, seed, size=None):
    """Draw ``n x m`` matrices with i.i.d. standard-normal entries.

    ``seed`` may be an integer or a :class:`numpy.random.SeedSequence`; the
    same seed always yields the same matrices. With ``size`` given, a stack of
    shape ``(size, n, m)`` is returned.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    rng = np.random.default_rng(seed)
    shape = (n, m) if size is None else (size, n, m)
    return rng.standard_normal(shape)


def random_orthogonal(n, seed):
    """Haar-distributed orthogonal ``n x n`` matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(sample_gaussian(n, n, seed))
    return q * np.sign(np.diag(r))


def random_spd(m, seed):
    x = sample_gaussian(m, m, seed)
    return x @ x.T + m * np.eye(m)


def matrix_to_json(a):
    """Encode a matrix as ``{"rows", "cols", "data"}`` with row-major data."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [float(x) for x in a.ravel()]}


def matrix_from_json(obj):
    """Decode ``{"rows", "cols", "data"}``; a list of equal-length rows is also accepted."""
    if isinstance(obj, list):
        a = np.asarray(obj, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("a matrix given as a list must be a nonempty list of equal-length rows")
    else:
        try:
            rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
        except (KeyError, TypeError) as err:
            raise ValueError(f"malformed matrix: missing or invalid {err}") from err
        if rows < 1 or cols < 1 or len(data) != rows * cols:
            raise ValueError(f"malformed matrix: {rows}x{cols} with {len(data)} entries")
        a = np.asarray(data, dtype=float).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a
