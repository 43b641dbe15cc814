"""Compiled inner loops for midpoint stepping of harmonic Hamiltonians.

H(t) = S + sum_k (exp(-i w_k t) X_k + h.c.).  Exponentials are Taylor series
summed to round-off, with the argument split so each factor has 1-norm <= 1/2.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _generator(S, Xs, Xds, ws, t, scale, out):
    """out = scale * H(t)."""
    d = S.shape[0]
    for i in range(d):
        for j in range(d):
            out[i, j] = S[i, j]
    for k in range(Xs.shape[0]):
        c = np.exp(-1j * ws[k] * t)
        cc = np.conj(c)
        for i in range(d):
            for j in range(d):
                out[i, j] += c * Xs[k, i, j] + cc * Xds[k, i, j]
    for i in range(d):
        for j in range(d):
            out[i, j] *= scale


@njit(cache=True)
def _norm1(a):
    best = 0.0
    for j in range(a.shape[1]):
        s = 0.0
        for i in range(a.shape[0]):
            s += abs(a[i, j])
        best = max(best, s)
    return best


@njit(cache=True)
def _expm_action(a, v, term, nxt):
    """v <- exp(a) v in place for small dense a."""
    d = v.shape[0]
    parts = max(1, int(np.ceil(_norm1(a) / 0.5)))
    inv = 1.0 / parts
    for _ in range(parts):
        for i in range(d):
            term[i] = v[i]
        for j in range(1, 40):
            big = 0.0
            for i in range(d):
                s = 0j
                for m in range(d):
                    s += a[i, m] * term[m]
                nxt[i] = s * (inv / j)
            for i in range(d):
                term[i] = nxt[i]
                v[i] += nxt[i]
                big = max(big, abs(nxt[i]))
            if big <= 1e-17:
                break


@njit(cache=True)
def _expm(a):
    """exp(a) by Taylor series with scaling and squaring."""
    squarings = 0
    nrm = _norm1(a)
    while nrm > 0.5:
        nrm /= 2
        squarings += 1
    a = a * (1.0 / 2.0**squarings)
    d = a.shape[0]
    acc = np.eye(d).astype(np.complex128)
    term = acc.copy()
    for j in range(1, 40):
        term = np.dot(term, a) * (1.0 / j)
        acc += term
        if np.max(np.abs(term)) <= 1e-17:
            break
    for _ in range(squarings):
        acc = np.dot(acc, acc)
    return acc


@njit(cache=True)
def vector_chunk(S, Xs, Xds, ws, t0, dt, n, psi0):
    d = psi0.shape[0]
    out = np.empty((n, d), dtype=np.complex128)
    a = np.empty((d, d), dtype=np.complex128)
    psi = psi0.copy()
    term = np.empty(d, dtype=np.complex128)
    nxt = np.empty(d, dtype=np.complex128)
    for k in range(n):
        _generator(S, Xs, Xds, ws, t0 + (k + 0.5) * dt, -1j * dt, a)
        _expm_action(a, psi, term, nxt)
        out[k] = psi
    return out


@njit(cache=True)
def _photon_loss(rho, coeff, atom_dim):
    """Exact zero-temperature photon loss on (atoms x Fock) blocks.

    coeff[k, n] is the amplitude for losing k photons from level n.
    """
    f = coeff.shape[0]
    out = np.zeros_like(rho)
    for a in range(atom_dim):
        for b in range(atom_dim):
            for i in range(f):
                for j in range(f):
                    s = 0j
                    for k in range(f - max(i, j)):
                        s += coeff[k, i + k] * coeff[k, j + k] * rho[a * f + i + k, b * f + j + k]
                    out[a * f + i, b * f + j] = s
    return out


@njit(cache=True)
def density_chunk(S, Xs, Xds, ws, t0, dt, n, rho0, coeff, atom_dim, sup):
    d = rho0.shape[0]
    out = np.empty((n, d, d), dtype=np.complex128)
    a = np.empty((d, d), dtype=np.complex128)
    rho = rho0.copy()
    for k in range(n):
        _generator(S, Xs, Xds, ws, t0 + (k + 0.5) * dt, -0.5j * dt, a)
        u = _expm(a)
        ud = np.ascontiguousarray(u.conj().T)
        rho = np.dot(np.dot(u, rho), ud)
        if coeff.shape[0] > 0:
            rho = _photon_loss(rho, coeff, atom_dim)
        if sup.shape[0] > 0:
            rho = np.dot(sup, rho.reshape(d * d)).reshape(d, d)
        rho = np.dot(np.dot(u, rho), ud)
        rho = 0.5 * (rho + rho.conj().T)
        out[k] = rho
    return out
