"""Truncated single-mode Fock space: ladder operators, displacements, coherent states.

All operators are dense ``(n_max + 1) x (n_max + 1)`` complex arrays.  The top
levels of a truncated space carry artifacts (for instance the commutator
``[a, a+]`` has ``-n_max`` in its last diagonal entry), so identities of the
infinite-dimensional algebra are only expected to hold on the lower block
returned by :func:`physical_levels`.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.linalg import expm


class TruncationWarning(UserWarning):
    """Amplitude is large enough that Fock truncation error may be visible."""


def check_n_max(n_max: int) -> int:
    if isinstance(n_max, bool) or int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be an integer >= 1, got {n_max!r}")
    return int(n_max)


def physical_levels(n_max: int) -> int:
    """Number of low levels on which truncation artifacts are negligible.

    For amplitudes inside the truncation guard, entries of truncated operator
    products agree with their infinite-space values to round-off on levels
    ``0 .. n_max // 2``.
    """
    return check_n_max(n_max) // 2 + 1


def _check_amplitude(alpha) -> complex:
    alpha = complex(alpha)
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise ValueError(f"amplitude must be finite, got {alpha!r}")
    return alpha


def truncation_guard(alpha: complex, n_max: int) -> bool:
    """Warn (and return False) when ``|alpha|^2 > n_max / 4``."""
    if abs(alpha) ** 2 > n_max / 4:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds n_max/4 = {n_max / 4:.3g}; "
            "truncation error may be significant",
            TruncationWarning,
            stacklevel=3,
        )
        return False
    return True


def annihilation(n_max: int) -> np.ndarray:
    """Annihilation operator with <n-1|a|n> = sqrt(n)."""
    n_max = check_n_max(n_max)
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)


def creation(n_max: int) -> np.ndarray:
    return annihilation(n_max).conj().T


def number(n_max: int) -> np.ndarray:
    return np.diag(np.arange(check_n_max(n_max) + 1, dtype=float)).astype(complex)


def displacement(alpha: complex, n_max: int) -> np.ndarray:
    """D(alpha) = exp(alpha a+ - alpha* a) on the truncated space.

    The generator is anti-Hermitian, so the result is unitary to round-off
    regardless of truncation.
    """
    alpha = _check_amplitude(alpha)
    n_max = check_n_max(n_max)
    truncation_guard(alpha, n_max)
    a = annihilation(n_max)
    return expm(alpha * a.conj().T - alpha.conjugate() * a)


def coherent_state(alpha: complex, n_max: int, *, normalize: bool = True) -> np.ndarray:
    """Coherent amplitudes exp(-|alpha|^2/2) alpha^n / sqrt(n!), n = 0..n_max.

    Renormalized to unit norm after truncation unless ``normalize=False``.
    """
    alpha = _check_amplitude(alpha)
    n_max = check_n_max(n_max)
    truncation_guard(alpha, n_max)
    psi = np.empty(n_max + 1, dtype=complex)
    psi[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, n_max + 1):
        psi[n] = psi[n - 1] * alpha / math.sqrt(n)
    if normalize:
        psi /= np.linalg.norm(psi)
    return psi


def vacuum(n_max: int) -> np.ndarray:
    psi = np.zeros(check_n_max(n_max) + 1, dtype=complex)
    psi[0] = 1.0
    return psi
