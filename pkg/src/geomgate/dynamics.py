"""Time evolution: midpoint exponential stepping, Lindblad cavity decay, frame changes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from geomgate import fock
from geomgate.model import JointOperator

NORM_TOL = 1e-9
CONVERGENCE_TOL = 1e-6
_CHUNK = 2048


class NonConvergence(RuntimeError):
    """Halving the time step changed the final state by more than the tolerance."""


class PositivityBreach(RuntimeWarning):
    """Density operator acquired a negative eigenvalue below -1e-6."""


@dataclass
class PropagationReport:
    final_state: np.ndarray
    step_count: int
    dt: float
    convergence_estimate: float = 0.0
    norm_drift: float = 0.0
    times: np.ndarray | None = None
    samples: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)


def _step_grid(t_total: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if t_total < 0:
        raise ValueError("t_total must be non-negative")
    if t_total == 0:
        return 0, dt
    n = max(1, math.ceil(t_total / dt - 1e-9))
    return n, t_total / n


def _sample_stride(sample_every: int | None) -> int | None:
    return None if sample_every is None else max(1, int(sample_every))


def _harmonic_parts(h: JointOperator):
    d = h.dim
    xs = np.array([x for _, x in h.terms], dtype=complex).reshape(-1, d, d)
    xds = np.ascontiguousarray(np.conj(np.swapaxes(xs, 1, 2)))
    ws = np.array([w for w, _ in h.terms], dtype=float)
    return np.ascontiguousarray(h.static, dtype=complex), np.ascontiguousarray(xs), xds, ws


def _pure_chunks(h, psi0, n_steps, dt):
    """Yield (times, states) per chunk of steps."""
    psi = np.array(psi0, dtype=complex)
    if isinstance(h, JointOperator):
        from geomgate import _kernels

        s, xs, xds, ws = _harmonic_parts(h)
        for start in range(0, n_steps, _CHUNK):
            n = min(_CHUNK, n_steps - start)
            states = _kernels.vector_chunk(s, xs, xds, ws, start * dt, dt, n, psi)
            psi = states[-1]
            yield (start + 1 + np.arange(n)) * dt, states
        return
    for start in range(0, n_steps, _CHUNK):
        n = min(_CHUNK, n_steps - start)
        states = np.empty((n, psi.size), dtype=complex)
        for i in range(n):
            psi = expm(-1j * dt * np.asarray(h((start + i + 0.5) * dt), dtype=complex)) @ psi
            states[i] = psi
        yield (start + 1 + np.arange(n)) * dt, states


def _run(chunks, state0, observe=None, stride=None):
    state = state0
    times, samples = ([0.0], [state0.copy()]) if stride else (None, None)
    if observe is not None:
        observe(np.zeros(1), state0[None])
    done = 0
    for ts, states in chunks:
        if observe is not None:
            observe(ts, states)
        if stride:
            steps = done + 1 + np.arange(len(ts))
            keep = steps % stride == 0
            times.extend(ts[keep])
            samples.extend(states[keep])
        done += len(ts)
        state = states[-1]
    if stride and times[-1] != (ts[-1] if done else 0.0):
        times.append(ts[-1])
        samples.append(state.copy())
    return state.copy(), times, samples


def propagate_unitary(h, psi0, t_total: float, dt: float, *, check: bool = True,
                      tol: float = CONVERGENCE_TOL, observe: Callable | None = None,
                      sample_every: int | None = None) -> PropagationReport:
    """Time-ordered product of midpoint propagators exp(-i H(t_k + dt/2) dt).

    ``h`` is a :class:`JointOperator` or any callable ``t -> matrix``.  The step
    is shrunk so that an integer number of steps spans ``t_total``.  With
    ``check`` the run is repeated at half the step and the norm of the
    difference is reported as ``convergence_estimate``; :class:`NonConvergence`
    is raised when it exceeds ``tol``.  ``observe(t, psi)`` is called at t = 0
    and after every step, in chunks: ``observe(times, states)`` receives arrays
    of shape ``(m,)`` and ``(m, dim)``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim != 1:
        raise ValueError("propagate_unitary expects a state vector")
    if abs(np.linalg.norm(psi0) - 1.0) > NORM_TOL:
        raise ValueError("initial state must have unit norm")
    n_steps, step = _step_grid(t_total, dt)
    stride = _sample_stride(sample_every)
    psi, times, samples = _run(_pure_chunks(h, psi0, n_steps, step), psi0, observe, stride)
    report = PropagationReport(psi, n_steps, step)
    report.norm_drift = abs(float(np.linalg.norm(psi)) - 1.0)
    if stride:
        report.times, report.samples = np.array(times), np.array(samples)
    if check and n_steps:
        fine, _, _ = _run(_pure_chunks(h, psi0, 2 * n_steps, step / 2), psi0)
        report.convergence_estimate = float(np.linalg.norm(psi - fine))
        if report.convergence_estimate > tol:
            raise NonConvergence(
                f"step halving changed the state by {report.convergence_estimate:.3g} > {tol:.3g}"
            )
    return report


def step_halving_ratio(h, psi0, t_total: float, dt: float) -> float:
    """||psi(dt) - psi(dt/2)|| / ||psi(dt/2) - psi(dt/4)||; tends to 4 for a second-order scheme."""
    n, step = _step_grid(t_total, dt)
    psi0 = np.asarray(psi0, dtype=complex)
    runs = [_run(_pure_chunks(h, psi0, n * m, step / m), psi0)[0] for m in (1, 2, 4)]
    return float(np.linalg.norm(runs[0] - runs[1]) / np.linalg.norm(runs[1] - runs[2]))


# -- open system -----------------------------------------------------------


def _dissipator_super(jumps: Sequence[tuple[float, np.ndarray]], dim: int) -> np.ndarray:
    """Row-major vectorized Lindblad dissipator."""
    eye = np.eye(dim)
    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    for rate, op in jumps:
        ldl = op.conj().T @ op
        sup += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return sup


def damping_coefficients(n_max: int, gamma_t: float) -> np.ndarray:
    """coeff[k, n] = sqrt(C(n, k) (1 - eta)^k eta^(n - k)), eta = exp(-gamma t).

    Amplitude for losing k photons from level n under zero-temperature decay;
    the Kraus operators are K_k = sum_n coeff[k, n] |n - k><n|.  Truncation is
    exact for this channel because ``a`` never leaves the space.
    """
    eta = math.exp(-gamma_t)
    dim = n_max + 1
    coeff = np.zeros((dim, dim))
    for k in range(dim):
        for n in range(k, dim):
            coeff[k, n] = math.sqrt(math.comb(n, k) * (1 - eta) ** k * eta ** (n - k))
    return coeff


def damping_kraus(n_max: int, gamma_t: float) -> np.ndarray:
    """Kraus operators of photon loss over exposure gamma*t, shape (n_max+1, dim, dim)."""
    coeff = damping_coefficients(n_max, gamma_t)
    dim = n_max + 1
    kraus = np.zeros((dim, dim, dim), dtype=complex)
    for k in range(dim):
        for n in range(k, dim):
            kraus[k, n - k, n] = coeff[k, n]
    return kraus


def _dissipation(h, dim: int, gamma_cav: float, extra, dt: float):
    """(loss coefficients, atom dim, superoperator) realising exp(D dt); empty when absent."""
    coeff = np.zeros((0, 0))
    atom_dim = 1
    sup = np.zeros((0, 0), dtype=complex)
    if gamma_cav > 0:
        if not isinstance(h, JointOperator):
            raise ValueError("cavity damping needs a JointOperator to locate the cavity factor")
        coeff = damping_coefficients(h.n_max, gamma_cav * dt)
        atom_dim = h.atom_levels**2
    if extra:
        sup = expm(_dissipator_super(extra, dim) * dt)
    return coeff, atom_dim, np.ascontiguousarray(sup)


def _density_chunks(h, rho0, n_steps, dt, gamma_cav, extra):
    rho = np.array(rho0, dtype=complex)
    coeff, atom_dim, sup = _dissipation(h, rho.shape[0], gamma_cav, extra, dt)
    chunk = max(1, _CHUNK // 8)
    if isinstance(h, JointOperator):
        from geomgate import _kernels

        s, xs, xds, ws = _harmonic_parts(h)
        for start in range(0, n_steps, chunk):
            n = min(chunk, n_steps - start)
            states = _kernels.density_chunk(s, xs, xds, ws, start * dt, dt, n, rho,
                                            coeff, atom_dim, sup)
            rho = states[-1]
            yield (start + 1 + np.arange(n)) * dt, states
        return
    kraus = None
    if len(coeff):
        eye_at = np.eye(atom_dim)
        kraus = np.stack([np.kron(eye_at, k) for k in damping_kraus(coeff.shape[0] - 1, gamma_cav * dt)])
    for start in range(0, n_steps, chunk):
        n = min(chunk, n_steps - start)
        states = np.empty((n,) + rho.shape, dtype=complex)
        for i in range(n):
            u = expm(-0.5j * dt * np.asarray(h((start + i + 0.5) * dt), dtype=complex))
            rho = u @ rho @ u.conj().T
            if kraus is not None:
                rho = np.einsum("kij,jl,kml->im", kraus, rho, kraus.conj())
            if len(sup):
                rho = (sup @ rho.reshape(-1)).reshape(rho.shape)
            rho = u @ rho @ u.conj().T
            rho = 0.5 * (rho + rho.conj().T)
            states[i] = rho
        yield (start + 1 + np.arange(n)) * dt, states


def propagate_lindblad(h, rho0, gamma_cav: float, t_total: float, dt: float, *,
                       extra_jumps: Sequence[tuple[float, np.ndarray]] = (),
                       check: bool = True, tol: float = CONVERGENCE_TOL,
                       observe: Callable | None = None,
                       sample_every: int | None = None) -> PropagationReport:
    """Integrate d rho/dt = -i[H(t), rho] + gamma (a rho a+ - {a+a, rho}/2) + extra channels.

    Strang splitting: half-step unitary at the step midpoint, exact dissipative
    step, half-step unitary.  Both unitary halves use H at the midpoint, so for
    ``gamma_cav = 0`` the scheme coincides with :func:`propagate_unitary`.
    Cavity loss uses the exact photon-loss channel; ``extra_jumps`` holds
    ``(rate, operator)`` pairs on the joint space (for instance spontaneous
    emission from |r>) and is exponentiated as a superoperator.
    """
    if gamma_cav < 0:
        raise ValueError("gamma_cav must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
        raise ValueError("propagate_lindblad expects a square density matrix")
    if abs(np.trace(rho0).real - 1.0) > NORM_TOL:
        raise ValueError("initial density matrix must have unit trace")
    n_steps, step = _step_grid(t_total, dt)
    stride = _sample_stride(sample_every)
    extra = tuple(extra_jumps)
    rho, times, samples = _run(_density_chunks(h, rho0, n_steps, step, gamma_cav, extra),
                               rho0, observe, stride)
    report = PropagationReport(rho, n_steps, step)
    report.norm_drift = abs(float(np.trace(rho).real) - 1.0)
    if stride:
        report.times, report.samples = np.array(times), np.array(samples)
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig < -1e-6:
        warnings.warn(f"density matrix eigenvalue {min_eig:.3g} < -1e-6", PositivityBreach,
                      stacklevel=2)
        report.notes.append(f"positivity breach: min eigenvalue {min_eig:.3g}")
    if check and n_steps:
        fine, _, _ = _run(_density_chunks(h, rho0, 2 * n_steps, step / 2, gamma_cav, extra), rho0)
        report.convergence_estimate = float(np.linalg.norm(rho - fine))
        if report.convergence_estimate > tol:
            raise NonConvergence(
                f"step halving changed the state by {report.convergence_estimate:.3g} > {tol:.3g}"
            )
    return report


# -- frames and observables ------------------------------------------------


def frame_transform(psi_prime, h0: JointOperator | np.ndarray, t: float) -> np.ndarray:
    """Apply exp(-i H_0 t) for a diagonal, time-independent H_0 (state or density)."""
    mat = h0.static if isinstance(h0, JointOperator) else np.asarray(h0)
    if isinstance(h0, JointOperator) and h0.time_dependent:
        raise ValueError("frame Hamiltonian must be time independent")
    diag = np.diag(mat)
    if np.any(mat - np.diag(diag)):
        raise ValueError("frame Hamiltonian must be diagonal in the product basis")
    phase = np.exp(-1j * diag.real * t)
    psi_prime = np.asarray(psi_prime, dtype=complex)
    if psi_prime.ndim == 1:
        return phase * psi_prime
    return phase[:, None] * psi_prime * np.conj(phase)[None, :]


def as_density(state) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj()) if state.ndim == 1 else state


def reduced_cavity(state, n_max: int) -> np.ndarray:
    """Partial trace over the atoms of a pure state or density matrix."""
    dim_f = n_max + 1
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        m = state.reshape(-1, dim_f)
        return m.T @ m.conj()
    d_at = state.shape[0] // dim_f
    return np.trace(state.reshape(d_at, dim_f, d_at, dim_f), axis1=0, axis2=2)


def expect(op: np.ndarray, state) -> complex:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.trace(op @ state))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def cavity_amplitude(state, n_max: int) -> complex:
    """<a> of the joint state."""
    return complex(np.trace(fock.annihilation(n_max) @ reduced_cavity(state, n_max)))


def cavity_number(state, n_max: int) -> float:
    return float(np.real(np.trace(fock.number(n_max) @ reduced_cavity(state, n_max))))
