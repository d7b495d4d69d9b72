"""Small dense linear algebra kernels used everywhere else.

Everything here works on real float64 arrays of size at most a few dozen.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "RangeError",
    "SingularMatrixError",
    "Spectrum",
    "expm",
    "spectrum",
    "determinant",
    "solve_linear",
    "rank_of_columns",
    "log_norm",
]


class RangeError(ArithmeticError):
    """Raised when a result leaves the float64 range."""


class SingularMatrixError(np.linalg.LinAlgError):
    pass


# degree-13 Pade coefficients and the 1-norm bound under which it is accurate
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def expm(A, t=1.0):
    """Matrix exponential of ``t * A`` by scaling and squaring.

    Parameters
    ----------
    A : (n, n) array_like
    t : float

    Returns
    -------
    (n, n) ndarray

    Raises
    ------
    RangeError
        If the exponential overflows float64.
    """
    M = np.asarray(A, dtype=float) * float(t)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expm expects a square matrix")
    if not np.all(np.isfinite(M)):
        raise RangeError("non-finite entries in t*A")
    n = M.shape[0]
    ident = np.eye(n)
    norm1 = np.abs(M).sum(axis=0).max() if n else 0.0
    if norm1 == 0.0:
        return ident
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA13))))
    if s > 1000:
        raise RangeError("||t*A|| too large for expm")
    M = M / 2.0**s
    c = _PADE13
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M4 @ M2
    U = M @ (M6 @ (c[13] * M6 + c[11] * M4 + c[9] * M2)
             + c[7] * M6 + c[5] * M4 + c[3] * M2 + c[1] * ident)
    V = (M6 @ (c[12] * M6 + c[10] * M4 + c[8] * M2)
         + c[6] * M6 + c[4] * M4 + c[2] * M2 + c[0] * ident)
    R = np.linalg.solve(V - U, V + U)
    with np.errstate(over="raise", invalid="raise"):
        try:
            for _ in range(s):
                R = R @ R
        except FloatingPointError as exc:
            raise RangeError("matrix exponential overflows float64") from exc
    if not np.all(np.isfinite(R)):
        raise RangeError("matrix exponential overflows float64")
    return R


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    abscissa: float
    radius: float


def spectrum(A):
    """Eigenvalues sorted by decreasing real part, with abscissa and radius.

    Complex eigenvalues of a real matrix are returned as exact conjugate pairs.
    """
    A = np.asarray(A, dtype=float)
    ev = np.linalg.eigvals(A)
    scale = max(1.0, np.abs(ev).max()) if ev.size else 1.0
    ev = np.where(np.abs(ev.imag) <= 1e-14 * scale, ev.real + 0j, ev)
    # symmetrize conjugate pairs so that pairs compare equal bit for bit
    out = []
    used = np.zeros(ev.size, dtype=bool)
    for i, z in enumerate(ev):
        if used[i]:
            continue
        used[i] = True
        if z.imag == 0.0:
            out.append(complex(z.real, 0.0))
            continue
        cand = [j for j in range(ev.size) if not used[j]]
        j = min(cand, key=lambda k: abs(ev[k] - np.conj(z)))
        used[j] = True
        re = 0.5 * (z.real + ev[j].real)
        im = 0.5 * (abs(z.imag) + abs(ev[j].imag))
        out.extend([complex(re, im), complex(re, -im)])
    ev = np.array(sorted(out, key=lambda z: (-z.real, -z.imag)), dtype=complex)
    abscissa = float(ev.real.max()) if ev.size else -np.inf
    radius = float(np.abs(ev).max()) if ev.size else 0.0
    return Spectrum(ev, abscissa, radius)


def determinant(A):
    return float(np.linalg.det(np.asarray(A, dtype=float)))


def solve_linear(A, y):
    """Solve ``A x = y`` for square ``A``; small residual enforced."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if abs(determinant(A)) <= 1e-13:
        raise SingularMatrixError("matrix is numerically singular")
    x = np.linalg.solve(A, y)
    # one step of iterative refinement
    r = y - A @ x
    x = x + np.linalg.solve(A, r)
    return x


def rank_of_columns(vs, tol=None):
    """Numerical rank of the matrix whose columns are ``vs``.

    Uses QR with column pivoting; the default tolerance is ``1e-10`` times
    the largest column norm.
    """
    M = np.asarray(vs, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.size == 0:
        return 0
    colmax = np.linalg.norm(M, axis=0).max()
    if colmax == 0.0:
        return 0
    if tol is None:
        tol = 1e-10 * colmax
    R = scipy.linalg.qr(M, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    return int(np.sum(d > tol))


def log_norm(A):
    """Euclidean logarithmic norm, the top eigenvalue of the symmetric part."""
    A = np.asarray(A, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T)).max())
