"""Hamiltonians of two three-level atoms coupled to a detuned cavity mode.

Frequencies are in units of the atom-cavity coupling ``g`` (so ``g == 1``)
and times in units of ``1/g``.

Basis ordering
--------------
Each atom has levels ``g < e < r`` (indices 0, 1, 2).  Atom 1 is the slow
(left) tensor factor, then atom 2, then the cavity Fock level::

    index = ((level_1 * L) + level_2) * (n_max + 1) + n

with ``L = 3``.  On the qubit manifold (``L = 2``, levels ``g, e`` only) the
atomic order is ``gg, ge, eg, ee``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from geomgate import fock

MODEL_KINDS = ("full", "effective", "transformed", "effective_lindblad")
LEVELS = "ger"
QUBIT_LABELS = ("gg", "ge", "eg", "ee")


@dataclass(frozen=True)
class SystemParams:
    """Physical and numerical parameters, all frequencies as ratios to ``g``."""

    omega: float
    delta_large: float
    delta_small: float
    gamma_cav: float = 0.0
    n_max: int = 8
    t_total: float = 0.0
    dt: float | None = None
    model_kind: str = "transformed"
    g: float = 1.0

    def __post_init__(self):
        for name in ("omega", "delta_large", "delta_small", "gamma_cav", "t_total", "g"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.g <= 0:
            raise ValueError("g must be positive")
        if self.omega < 0 or self.gamma_cav < 0 or self.t_total < 0:
            raise ValueError("omega, gamma_cav and t_total must be non-negative")
        if self.delta_large == 0:
            raise ValueError("delta_large must be nonzero")
        fock.check_n_max(self.n_max)
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")

    @property
    def nu(self) -> float:
        """Loop angular frequency delta + g^2/Delta of a single conditional displacement."""
        return self.delta_small + self.g**2 / self.delta_large

    @property
    def radius(self) -> float:
        """Loop radius Omega g / (Delta delta + g^2)."""
        return self.omega * self.g / (self.delta_large * self.delta_small + self.g**2)

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else default_dt(self)

    def loop_time(self, loops: float = 1.0) -> float:
        return 2 * math.pi * loops / self.nu

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def validity_notes(self) -> list[str]:
        """Soft checks of the dispersive regime; reported, never enforced."""
        notes = []
        if abs(self.delta_large) < 5 * max(self.g, self.omega):
            notes.append("delta_large < 5 max(g, omega): dispersive approximation is marginal")
        if abs(self.delta_small) > 0.5 * abs(self.delta_large):
            notes.append("delta_small is not small compared with delta_large")
        if self.model_kind == "full" and self.step > 2 * math.pi / (50 * abs(self.delta_large)):
            notes.append("dt resolves the delta_large oscillation with fewer than 50 points")
        return notes


def param_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(SystemParams))


def default_dt(params: SystemParams) -> float:
    """200 points per period of the fastest phase factor of the chosen model."""
    if params.model_kind == "full":
        return 2 * math.pi / (200 * abs(params.delta_large))
    return 2 * math.pi / (200 * abs(params.nu))


# -- operator plumbing --------------------------------------------------------


@dataclass(frozen=True)
class JointOperator:
    """Hermitian operator ``static + sum_k (exp(-i w_k t) X_k + h.c.)``.

    Every time dependence in this model is a single harmonic, which keeps
    Hermiticity structural and lets propagators evaluate many times at once.
    """

    static: np.ndarray
    terms: tuple[tuple[float, np.ndarray], ...] = ()
    atom_levels: int = 3
    n_max: int = 1
    name: str = ""

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def time_dependent(self) -> bool:
        return bool(self.terms)

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for w, x in self.terms:
            c = np.exp(-1j * w * t)
            h += c * x + np.conj(c) * x.conj().T
        return h

    def at_times(self, times: np.ndarray) -> np.ndarray:
        """Stack of matrices, shape ``(len(times), dim, dim)``."""
        times = np.asarray(times, dtype=float)
        h = np.broadcast_to(self.static, (len(times),) + self.static.shape).copy()
        for w, x in self.terms:
            c = np.exp(-1j * w * times)[:, None, None]
            h += c * x + np.conj(c) * x.conj().T
        return h

    def restrict(self, indices: Sequence[int], atom_levels: int | None = None) -> "JointOperator":
        idx = np.asarray(indices)
        sub = np.ix_(idx, idx)
        return JointOperator(
            self.static[sub],
            tuple((w, x[sub]) for w, x in self.terms),
            self.atom_levels if atom_levels is None else atom_levels,
            self.n_max,
            self.name,
        )

    def to_qubits(self) -> "JointOperator":
        """Restriction to span{gg, ge, eg, ee} x Fock."""
        if self.atom_levels == 2:
            return self
        return self.restrict(qubit_indices(self.n_max), atom_levels=2)

    def hermiticity_error(self, t: float) -> float:
        h = self(t)
        scale = max(1.0, float(np.max(np.abs(h))))
        return float(np.max(np.abs(h - h.conj().T))) / scale

    def sector(self, start: Sequence[int]) -> np.ndarray:
        """Sorted indices of the smallest invariant subspace containing ``start``."""
        graph = self.coupling_graph()
        seen = np.zeros(self.dim, dtype=bool)
        frontier = np.unique(np.asarray(start, dtype=int))
        seen[frontier] = True
        while frontier.size:
            reach = np.any(graph[frontier], axis=0) & ~seen
            seen |= reach
            frontier = np.flatnonzero(reach)
        return np.flatnonzero(seen)

    def coupling_graph(self) -> np.ndarray:
        """Boolean adjacency of basis states coupled at any time."""
        mask = self.static != 0
        for _, x in self.terms:
            mask |= (x != 0) | (x.conj().T != 0)
        return mask


def atom_index(l1: int | str, l2: int | str, atom_levels: int = 3) -> int:
    if isinstance(l1, str):
        l1 = LEVELS.index(l1)
    if isinstance(l2, str):
        l2 = LEVELS.index(l2)
    if not (0 <= l1 < atom_levels and 0 <= l2 < atom_levels):
        raise ValueError(f"levels ({l1}, {l2}) outside a {atom_levels}-level atom")
    return l1 * atom_levels + l2


def basis_index(label: str, n: int, n_max: int, atom_levels: int = 3) -> int:
    """Index of |label_1 label_2, n>, e.g. ``basis_index("eg", 0, n_max)``."""
    if not 0 <= n <= n_max:
        raise ValueError(f"Fock level {n} outside 0..{n_max}")
    return atom_index(label[0], label[1], atom_levels) * (n_max + 1) + n


def basis_state(label: str, n: int, n_max: int, atom_levels: int = 3) -> np.ndarray:
    psi = np.zeros(atom_levels**2 * (n_max + 1), dtype=complex)
    psi[basis_index(label, n, n_max, atom_levels)] = 1.0
    return psi


def qubit_indices(n_max: int) -> np.ndarray:
    """Indices of the 3-level space spanning the qubit manifold, in qubit order."""
    return np.array(
        [basis_index(lab, n, n_max) for lab in QUBIT_LABELS for n in range(n_max + 1)]
    )


def _single(level_out: str, level_in: str) -> np.ndarray:
    op = np.zeros((3, 3), dtype=complex)
    op[LEVELS.index(level_out), LEVELS.index(level_in)] = 1.0
    return op


_I3 = np.eye(3, dtype=complex)


def _on_atom(op: np.ndarray, j: int) -> np.ndarray:
    return np.kron(op, _I3) if j == 0 else np.kron(_I3, op)


class _Ops:
    """Joint-space building blocks for one truncation."""

    def __init__(self, n_max: int):
        self.n_max = n_max
        a = fock.annihilation(n_max)
        self.a = a
        self.adag = a.conj().T
        self.num = self.adag @ a
        self.eye_f = np.eye(n_max + 1, dtype=complex)
        self.eye_at = np.eye(9, dtype=complex)

    def joint(self, atomic: np.ndarray, cavity: np.ndarray | None = None) -> np.ndarray:
        return np.kron(atomic, self.eye_f if cavity is None else cavity)

    def proj(self, level: str, j: int) -> np.ndarray:
        return _on_atom(_single(level, level), j)

    def splus(self, j: int) -> np.ndarray:
        return _on_atom(_single("r", "e"), j)

    def sz(self, j: int) -> np.ndarray:
        return 0.5 * (self.proj("r", j) - self.proj("e", j))

    def dipole(self) -> np.ndarray:
        x = self.splus(0) @ self.splus(1).conj().T
        return x + x.conj().T


def full_hamiltonian(params: SystemParams) -> JointOperator:
    """Rotating-frame Jaynes-Cummings Hamiltonian with classical drive, |r> retained.

    H(t) = sum_j [Delta Sz_j + g (a S+_j + a+ S-_j)
                  + Omega (exp(-i delta t) S+_j + exp(i delta t) S-_j)]
    """
    ops = _Ops(params.n_max)
    g, om, dl = params.g, params.omega, params.delta_large
    static = np.zeros((9 * (params.n_max + 1),) * 2, dtype=complex)
    drive = np.zeros_like(static)
    for j in (0, 1):
        sp = ops.splus(j)
        static += dl * ops.joint(ops.sz(j))
        static += g * (ops.joint(sp, ops.a) + ops.joint(sp.conj().T, ops.adag))
        drive += om * ops.joint(sp)
    return JointOperator(static, ((params.delta_small, drive),), 3, params.n_max, "full")


def _stark_static(params: SystemParams, ops: _Ops) -> np.ndarray:
    g2, om2, dl = params.g**2, params.omega**2, params.delta_large
    out = np.zeros((9 * (params.n_max + 1),) * 2, dtype=complex)
    for j in (0, 1):
        pr, pe = ops.proj("r", j), ops.proj("e", j)
        out += ops.joint(pr - pe, g2 * ops.num + om2 * ops.eye_f) / dl
        out += g2 / dl * ops.joint(pr)
    return out


def effective_hamiltonian(params: SystemParams) -> JointOperator:
    """Dispersive effective Hamiltonian: Stark shifts, drive-assisted sidebands, dipole exchange."""
    ops = _Ops(params.n_max)
    g, om, dl = params.g, params.omega, params.delta_large
    static = _stark_static(params, ops) + g**2 / dl * ops.joint(ops.dipole())
    side = np.zeros_like(static)
    for j in (0, 1):
        side += om * g / dl * ops.joint(ops.proj("r", j) - ops.proj("e", j), ops.adag)
    return JointOperator(static, ((params.delta_small, side),), 3, params.n_max, "effective")


def frame_hamiltonian(params: SystemParams) -> JointOperator:
    """Time-independent, diagonal Stark part H_0 used for the interaction picture."""
    ops = _Ops(params.n_max)
    return JointOperator(_stark_static(params, ops), (), 3, params.n_max, "frame")


def transformed_hamiltonian(params: SystemParams) -> JointOperator:
    """Interaction-picture Hamiltonian with per-atom sideband frequencies delta -+ g^2/Delta.

    (Omega g / Delta) sum_j {[a e^{i(d - g2/D)t} + h.c.] |r_j><r_j|
                             - [a e^{i(d + g2/D)t} + h.c.] |e_j><e_j|}
    + (g^2/Delta)(S+_1 S-_2 + h.c.)

    Each atom's sideband sees only its own Stark shift of the cavity frequency.
    This is the exact frame transform of :func:`effective_hamiltonian` whenever
    at most one atom is outside |g>; with both atoms in |e> the exact cavity
    shift is doubled (see :func:`interaction_picture_hamiltonian`).
    """
    ops = _Ops(params.n_max)
    g, om, dl = params.g, params.omega, params.delta_large
    shift = g**2 / dl
    static = g**2 / dl * ops.joint(ops.dipole())
    side_r = np.zeros_like(static)
    side_e = np.zeros_like(static)
    for j in (0, 1):
        side_r += om * g / dl * ops.joint(ops.proj("r", j), ops.adag)
        side_e -= om * g / dl * ops.joint(ops.proj("e", j), ops.adag)
    terms = ((params.delta_small - shift, side_r), (params.delta_small + shift, side_e))
    return JointOperator(static, terms, 3, params.n_max, "transformed")


def interaction_picture_hamiltonian(params: SystemParams) -> JointOperator:
    """Exact exp(i H_0 t)(H_i - H_0)exp(-i H_0 t) for the effective Hamiltonian.

    The cavity frequency shift is (g^2/Delta) M with M = sum_j (|r_j><r_j| - |e_j><e_j|),
    so each eigenspace of M gets its own sideband frequency delta - (g^2/Delta) M.
    """
    ops = _Ops(params.n_max)
    g, om, dl = params.g, params.omega, params.delta_large
    shift = g**2 / dl
    m_diag = np.real(np.diag(sum(ops.proj("r", j) - ops.proj("e", j) for j in (0, 1))))
    side_at = sum(ops.proj("r", j) - ops.proj("e", j) for j in (0, 1))
    terms = []
    for m in np.unique(m_diag):
        block = np.diag((m_diag == m).astype(complex))
        x = om * g / dl * ops.joint(side_at @ block, ops.adag)
        if np.any(x):
            terms.append((params.delta_small - shift * m, x))
    static = g**2 / dl * ops.joint(ops.dipole())
    return JointOperator(static, tuple(terms), 3, params.n_max, "interaction_picture")


def hamiltonian(params: SystemParams) -> JointOperator:
    """Hamiltonian selected by ``params.model_kind``."""
    if params.model_kind == "full":
        return full_hamiltonian(params)
    if params.model_kind == "transformed":
        return transformed_hamiltonian(params)
    return effective_hamiltonian(params)


def cavity_operator(n_max: int, cavity: np.ndarray, atom_levels: int = 3) -> np.ndarray:
    """Embed a single-mode operator into the joint space."""
    return np.kron(np.eye(atom_levels**2, dtype=complex), cavity)


def r_population_operator(n_max: int) -> np.ndarray:
    """Total |r> population sum_j |r_j><r_j| on the 3-level joint space."""
    ops = _Ops(n_max)
    return np.real(np.diag(ops.joint(ops.proj("r", 0) + ops.proj("r", 1))))


def alpha_trajectory(params: SystemParams, t):
    """Displacement of a single-|e> branch: -R (exp(-i nu t) - 1).

    The |ee> branch follows twice this amplitude; |gg> stays at the origin.
    """
    t = np.asarray(t, dtype=float)
    out = -params.radius * (np.exp(-1j * params.nu * t) - 1.0)
    return complex(out) if out.ndim == 0 else out


def conditional_phase(params: SystemParams, t) -> tuple:
    """Geometric phase of the single-|e> loop and of the |ee> loop (four times larger).

    phi = -((Omega g)^2 / (Delta (Delta delta + g^2))) [t - sin(nu t) / nu]
    """
    t = np.asarray(t, dtype=float)
    rate = (params.omega * params.g) ** 2 / (
        params.delta_large * (params.delta_large * params.delta_small + params.g**2)
    )
    phi = -rate * (t - np.sin(params.nu * t) / params.nu)
    if phi.ndim == 0:
        phi = float(phi)
    return phi, 4 * phi


def secular_phase(params: SystemParams, t) -> float:
    """Closed-loop phase -((Omega g)^2 / (Delta (Delta delta + g^2))) t."""
    rate = (params.omega * params.g) ** 2 / (
        params.delta_large * (params.delta_large * params.delta_small + params.g**2)
    )
    return -rate * t
