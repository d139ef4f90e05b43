"""Memory-polynomial basis shared by the amplifier model and the predistorter.

Column ordering is fixed: memory-major, order-minor, bias last::

    [u(n)|u(n)|^0 .. u(n)|u(n)|^(K-1), u(n-1)|u(n-1)|^0 .. , ..., 1]

and the matching coefficient vector is ``[a_00, a_10, .., a_(K-1)0, a_01, .., b]``.
"""

import numpy as np

from .errors import ConfigurationError


def n_columns(K: int, M: int) -> int:
    return K * M + 1


def basis(samples, K: int, M: int) -> np.ndarray:
    """L x (K*M + 1) regressor with zero pre-record history."""
    if K < 1 or M < 1:
        raise ConfigurationError("nonlinearity order K and memory depth M must be >= 1")
    s = np.asarray(samples, dtype=complex)
    L = s.size
    out = np.empty((L, K * M + 1), dtype=complex)
    for m in range(M):
        sd = np.zeros(L, dtype=complex)
        sd[m:] = s[: L - m] if m else s
        mag = np.abs(sd)
        term = sd
        for k in range(K):  # running product keeps each power exact to one rounding per step
            out[:, m * K + k] = term
            term = term * mag
    out[:, -1] = 1.0
    return out


def evaluate(coeffs, samples, K: int, M: int) -> np.ndarray:
    """sum_k sum_m a_km s(n-m)|s(n-m)|^k + b for a packed coefficient vector."""
    a = np.asarray(coeffs, dtype=complex)
    if a.size != K * M + 1:
        raise ConfigurationError(f"expected {K * M + 1} coefficients, got {a.size}")
    return basis(samples, K, M) @ a


def identity_coefficients(K: int, M: int) -> np.ndarray:
    a = np.zeros(K * M + 1, dtype=complex)
    a[0] = 1.0
    return a


def pack(a_km, b) -> np.ndarray:
    """Pack a K x M coefficient array and bias into the column ordering above."""
    a_km = np.asarray(a_km, dtype=complex)
    return np.concatenate([a_km.T.ravel(), [complex(b)]])


def unpack(vec, K: int, M: int):
    v = np.asarray(vec, dtype=complex)
    if v.size != K * M + 1:
        raise ConfigurationError(f"expected {K * M + 1} coefficients, got {v.size}")
    return v[:-1].reshape(M, K).T.copy(), complex(v[-1])
