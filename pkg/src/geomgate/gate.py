"""Conditional-phase gate runs: basis-state evolution, phase correction, scoring, error budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from geomgate import dynamics, fock, model
from geomgate.model import QUBIT_LABELS, SystemParams

GATE_TOL = 1e-4
AMBIGUITY_THRESHOLD = 0.5
STEPS_PER_LOOP = 1000


class AmbiguousPhase(RuntimeError):
    """Overlap with the initial basis state is too small for its phase to mean anything.

    The partially filled report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _preset_a(**overrides) -> SystemParams:
    base = SystemParams(omega=1.0, delta_large=10.0, delta_small=0.1, gamma_cav=0.0,
                        n_max=24, t_total=10 * math.pi, model_kind="transformed")
    return _with_loop_dt(base, **overrides)


def _preset_b(**overrides) -> SystemParams:
    dl, ds, g = 10.0, 2.0, 1.0
    base = SystemParams(omega=1.0, delta_large=dl, delta_small=ds, gamma_cav=1 / 27,
                        n_max=8, t_total=math.pi * dl * (dl * ds + g**2) / (2 * g**4),
                        model_kind="transformed")
    return _with_loop_dt(base, **overrides)


def _with_loop_dt(base: SystemParams, **overrides) -> SystemParams:
    params = replace(base, **overrides)
    if "dt" not in overrides and params.model_kind != "full":
        params = replace(params, dt=params.loop_time() / STEPS_PER_LOOP)
    return params


PRESETS = {"A": _preset_a, "B": _preset_b}


def preset(name: str, **overrides) -> SystemParams:
    """Named parameter set.

    ``A``: Delta = 10g, delta = g^2/Delta, Omega = g, one loop of duration pi Delta / g^2.
    ``B``: Delta = 10g, delta = 2g, Omega = g, gamma = g/27, t = pi Delta (Delta delta + g^2)/(2 g^4),
    the exact duration for 2 phi = -pi in the small-circle regime (110.25 loops).
    """
    try:
        return PRESETS[name.upper()](**overrides)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


def dispersive_family(delta_large: float, model_kind: str = "effective", **overrides) -> SystemParams:
    """Preset-A-like point at detuning ``delta_large``: delta = g^2/Delta, t = pi Delta, phi = -pi/2."""
    return preset("A", delta_large=delta_large, delta_small=1 / delta_large,
                  t_total=math.pi * delta_large, model_kind=model_kind, **overrides)


# -- single branches ---------------------------------------------------------


def _model_space(params: SystemParams) -> tuple[model.JointOperator, int]:
    h = model.hamiltonian(params)
    if params.model_kind == "full":
        return h, 3
    return h.to_qubits(), 2


def _embed(vec, sector, dim):
    out = np.zeros(vec.shape[:-1] + (dim,), dtype=complex)
    out[..., sector] = vec
    return out


@dataclass
class BranchResult:
    label: str
    amplitude: complex
    phase: float
    residual_alpha: complex
    purity: float
    max_excitation: float
    max_r_population: float
    min_overlap: float
    convergence: float
    norm_drift: float
    final_state: np.ndarray
    times: np.ndarray | None = None
    samples: np.ndarray | None = None


class _Tracker:
    """Overlap phase unwrapping plus photon-number and |r> bookkeeping, chunk by chunk."""

    def __init__(self, index, n_levels, r_levels, demod):
        self.index = index
        self.n_levels = n_levels
        self.r_levels = r_levels
        self.demod = demod
        self.phase = 0.0
        self.prev = None
        self.max_n = 0.0
        self.max_r = 0.0
        self.min_overlap = 1.0

    def __call__(self, times, states):
        z = states[:, self.index] * np.exp(-1j * self.demod * times)
        chain = z if self.prev is None else np.concatenate([[self.prev], z])
        self.phase += float(np.sum(np.angle(chain[1:] * np.conj(chain[:-1]))))
        self.prev = z[-1]
        prob = np.abs(states) ** 2
        self.max_n = max(self.max_n, float(np.max(prob @ self.n_levels)))
        self.max_r = max(self.max_r, float(np.max(prob @ self.r_levels)))
        self.min_overlap = min(self.min_overlap, float(np.min(np.abs(z))))


def evolve_branch(params: SystemParams, label: str, *, tol: float = GATE_TOL,
                  sample_every: int | None = None) -> BranchResult:
    """Evolve |label, 0> under the selected unitary model.

    The run is confined to the invariant subspace reached from the initial
    state, which is exact.  For the full model the conserved offset
    -(Delta/2) sum_j (|r_j><r_j| + |e_j><e_j|) contained in Delta Sz is removed
    from the reported phase, so phases share the reference of the dispersive
    models.
    """
    if label not in QUBIT_LABELS:
        raise ValueError(f"label must be one of {QUBIT_LABELS}")
    h, levels = _model_space(params)
    n_max = params.n_max
    start = model.basis_index(label, 0, n_max, levels)
    sector = h.sector([start])
    hs = h.restrict(sector)
    psi0 = np.zeros(len(sector), dtype=complex)
    local = int(np.searchsorted(sector, start))
    psi0[local] = 1.0
    n_of = (sector % (n_max + 1)).astype(float)
    r_of = (model.r_population_operator(n_max)[sector] if levels == 3
            else np.zeros(len(sector)))
    demod = params.delta_large / 2 * label.count("e") if params.model_kind == "full" else 0.0
    tracker = _Tracker(local, n_of, r_of, demod)
    rep = dynamics.propagate_unitary(hs, psi0, params.t_total, params.step, tol=tol,
                                     observe=tracker, sample_every=sample_every)
    full = _embed(rep.final_state, sector, h.dim)
    amp = rep.final_state[local] * np.exp(-1j * demod * params.t_total)
    result = BranchResult(
        label=label,
        amplitude=complex(amp),
        phase=tracker.phase,
        residual_alpha=dynamics.cavity_amplitude(full, n_max),
        purity=dynamics.purity(dynamics.reduced_cavity(full, n_max)),
        max_excitation=tracker.max_n,
        max_r_population=tracker.max_r,
        min_overlap=tracker.min_overlap,
        convergence=rep.convergence_estimate,
        norm_drift=rep.norm_drift,
        final_state=full,
    )
    if rep.samples is not None:
        result.times = rep.times
        result.samples = _embed(rep.samples, sector, h.dim)
    return result


# -- reports -------------------------------------------------------------------


@dataclass
class GateReport:
    """Outcome of a gate run in basis order gg, ge, eg, ee."""

    phases: np.ndarray
    residual_alpha: np.ndarray
    cavity_purity: np.ndarray
    amplitudes: np.ndarray
    corrected_diagonal: np.ndarray = field(default_factory=lambda: np.ones(4, complex))
    correction: np.ndarray = field(default_factory=lambda: np.zeros(4))
    fidelity: float = float("nan")
    witness_fidelity: float = float("nan")
    max_excitation: float = 0.0
    max_excitation_ee: float = 0.0
    witness_min_purity: float = 1.0
    max_r_population: float = 0.0
    error_estimate: float = 0.0
    convergence: float = 0.0
    norm_drift: float = 0.0
    model_kind: str = "transformed"
    witness_state: np.ndarray | None = None
    n_max: int = 1

    @property
    def lindblad(self) -> bool:
        return self.model_kind == "effective_lindblad"

    def to_dict(self, meta: dict | None = None) -> dict:
        """JSON-ready mapping with fixed key order; floats rounded to 12 significant digits."""

        def r(x):
            return float(f"{float(x):.12g}")

        def pairs(zs):
            return [[r(z.real), r(z.imag)] for z in zs]

        out = {
            "phases": [r(p) for p in self.phases],
            "residual_alpha": pairs(self.residual_alpha),
            "purity": [r(p) for p in self.cavity_purity],
            "corrected": pairs(self.corrected_diagonal),
            "fidelity": r(self.fidelity),
            "max_excitation": r(self.max_excitation),
            "error_estimate": r(self.error_estimate),
            "diagnostics": {
                "model_kind": self.model_kind,
                "witness_fidelity": r(self.witness_fidelity),
                "witness_min_purity": r(self.witness_min_purity),
                "max_excitation_ee": r(self.max_excitation_ee),
                "max_r_population": r(self.max_r_population),
                "convergence": r(self.convergence),
                "norm_drift": r(self.norm_drift),
            },
        }
        if meta is not None:
            out["meta"] = meta
        return out


def ideal_diagonal(params: SystemParams) -> np.ndarray:
    """Target (1, 1, 1, exp(2 i phi)) with phi the closed-loop phase at ``t_total``."""
    phi = model.secular_phase(params, params.t_total)
    return np.array([1, 1, 1, np.exp(2j * phi)], dtype=complex)


def _witness_purity(branches: list[BranchResult], n_max: int) -> float:
    """Min over samples of the reduced-cavity purity for the (|g>+|e>)(|g>+|e>)/2 input.

    Branch sectors have disjoint atomic support, so the reduced cavity state is
    the average of the branch reductions.
    """
    samples = [b.samples for b in branches]
    if any(s is None for s in samples):
        return float("nan")
    count = min(len(s) for s in samples)
    worst = 1.0
    for k in range(count):
        rho = sum(dynamics.reduced_cavity(s[k], n_max) for s in samples) / 4
        worst = min(worst, dynamics.purity(rho))
    return worst


def _sample_stride(params: SystemParams, samples: int) -> int:
    n_steps = max(1, math.ceil(params.t_total / params.step - 1e-9))
    return max(1, n_steps // max(1, samples))


def run_gate(params: SystemParams, *, tol: float = GATE_TOL, samples: int = 400,
             correct: bool = True) -> GateReport:
    """Propagate |gg0>, |ge0>, |eg0>, |ee0> and assemble the gate report.

    Phases are the continuously unwrapped arguments of <uv0|psi_uv(t)>.  With
    ``correct`` the single-qubit correction and fidelity are filled in.
    Raises :class:`AmbiguousPhase` (carrying the report) when a final overlap
    falls below 0.5.
    """
    if params.model_kind == "effective_lindblad":
        report = _run_lindblad(params, tol=tol, samples=samples)
    else:
        stride = _sample_stride(params, samples)
        branches = [evolve_branch(params, lab, tol=tol, sample_every=stride) for lab in QUBIT_LABELS]
        report = GateReport(
            phases=np.array([b.phase for b in branches]),
            residual_alpha=np.array([b.residual_alpha for b in branches]),
            cavity_purity=np.array([b.purity for b in branches]),
            amplitudes=np.array([b.amplitude for b in branches]),
            max_excitation=max(branches[1].max_excitation, branches[2].max_excitation),
            max_excitation_ee=branches[3].max_excitation,
            witness_min_purity=_witness_purity(branches, params.n_max),
            max_r_population=max(b.max_r_population for b in branches),
            convergence=max(b.convergence for b in branches),
            norm_drift=max(b.norm_drift for b in branches),
            model_kind=params.model_kind,
            n_max=params.n_max,
        )
    if params.gamma_cav > 0:
        report.error_estimate = decoherence_error_estimate(params)[2]
    if correct:
        report = apply_correction(report, params)
        target = ideal_diagonal(params)
        report.fidelity = gate_fidelity(report, target)
        report.witness_fidelity = witness_fidelity(report, target)
    weak = [lab for lab, c in zip(QUBIT_LABELS, report.amplitudes) if abs(c) < AMBIGUITY_THRESHOLD]
    if weak:
        raise AmbiguousPhase(
            f"overlap with the initial state below {AMBIGUITY_THRESHOLD} for {', '.join(weak)}; "
            "trajectory did not close or truncation failed",
            report,
        )
    return report


def _witness_vector(n_max: int) -> np.ndarray:
    psi = sum(model.basis_state(lab, 0, n_max, 2) for lab in QUBIT_LABELS)
    return psi / 2


def _block(rho: np.ndarray, k: int, l: int, n_max: int) -> np.ndarray:
    f = n_max + 1
    return rho[k * f:(k + 1) * f, l * f:(l + 1) * f]


def _run_lindblad(params: SystemParams, *, tol: float, samples: int) -> GateReport:
    """Single witness run; atomic populations are conserved, so each diagonal block
    evolves as the corresponding basis-state run (scaled by 1/4)."""
    n_max = params.n_max
    f = n_max + 1
    h = model.effective_hamiltonian(params).to_qubits()
    rho0 = dynamics.as_density(_witness_vector(n_max))
    num = np.arange(f, dtype=float)
    state = {"phase": np.zeros(4), "prev": None, "max_n": np.zeros(4), "min_pur": 1.0}
    stride = _sample_stride(params, samples)

    def observe(times, rhos):
        coh = rhos[:, np.arange(4) * f, 0]
        chain = coh if state["prev"] is None else np.concatenate([state["prev"][None], coh])
        state["phase"] += np.sum(np.angle(chain[1:] * np.conj(chain[:-1])), axis=0)
        state["prev"] = coh[-1]
        diag = np.real(np.diagonal(rhos, axis1=1, axis2=2)).reshape(len(times), 4, f) * 4
        state["max_n"] = np.maximum(state["max_n"], np.max(diag @ num, axis=0))
        for rho in rhos[::stride]:
            cav = np.trace(rho.reshape(4, f, 4, f), axis1=0, axis2=2)
            state["min_pur"] = min(state["min_pur"], dynamics.purity(cav))

    rep = dynamics.propagate_lindblad(h, rho0, params.gamma_cav, params.t_total, params.step,
                                      tol=tol, observe=observe)
    rho = rep.final_state
    a = fock.annihilation(n_max)
    blocks = [4 * _block(rho, k, k, n_max) for k in range(4)]
    cav = np.trace(rho.reshape(4, f, 4, f), axis1=0, axis2=2)
    return GateReport(
        phases=state["phase"],
        residual_alpha=np.array([np.trace(a @ b) for b in blocks]),
        cavity_purity=np.array([dynamics.purity(b) for b in blocks]),
        amplitudes=np.array([np.sqrt(max(b[0, 0].real, 0.0)) for b in blocks], dtype=complex)
        * np.exp(1j * state["phase"]),
        max_excitation=float(max(state["max_n"][1], state["max_n"][2])),
        max_excitation_ee=float(state["max_n"][3]),
        witness_min_purity=min(state["min_pur"], dynamics.purity(cav)),
        convergence=rep.convergence_estimate,
        norm_drift=rep.norm_drift,
        model_kind=params.model_kind,
        witness_state=rho,
        n_max=n_max,
    )


def apply_correction(report: GateReport, params: SystemParams, *,
                     source: str = "measured") -> GateReport:
    """Single-qubit phase correction |e_j> -> exp(-i theta_j)|e_j>.

    ``source="measured"`` takes theta_1 = phi_eg and theta_2 = phi_ge from the
    report; ``"analytic"`` uses phi + Omega^2 t/Delta (phi alone for the
    transformed model, whose frame already excludes the Stark term).  |ge> and
    |eg> receive one factor each and |ee> receives both.
    """
    if source == "measured":
        theta1, theta2 = report.phases[2], report.phases[1]
    elif source == "analytic":
        theta1 = theta2 = model.secular_phase(params, params.t_total)
        if params.model_kind != "transformed":
            theta1 = theta2 = theta1 + params.omega**2 * params.t_total / params.delta_large
    else:
        raise ValueError("source must be 'measured' or 'analytic'")
    correction = np.array([0.0, theta2, theta1, theta1 + theta2])
    out = replace(report, correction=correction,
                  corrected_diagonal=np.exp(1j * (np.asarray(report.phases) - correction)))
    return out


def gate_fidelity(report: GateReport, ideal: np.ndarray) -> float:
    """Overlap of the corrected gate with ``ideal`` diagonal.

    Unitary runs: |1/4 sum_k conj(d_k) c_k|^2 with c_k the corrected amplitude of
    <k,0|psi_k(t)>, so leakage out of the vacuum lowers F as well as phase error.
    Lindblad runs: mean of the basis-state populations <k,0|rho_k|k,0>; phase
    errors are probed by :func:`witness_fidelity`.
    """
    ideal = np.asarray(ideal, dtype=complex)
    if report.lindblad:
        return float(np.mean(np.abs(report.amplitudes) ** 2))
    c = report.amplitudes * np.exp(-1j * report.correction)
    return float(abs(np.sum(np.conj(ideal) * c) / 4) ** 2)


def witness_fidelity(report: GateReport, ideal: np.ndarray) -> float:
    """Fidelity of the corrected output for input (|g>+|e>)(|g>+|e>)|0>/2 with
    target sum_k d_k |k, 0>/2; sensitive to dephasing between branches."""
    ideal = np.asarray(ideal, dtype=complex)
    if report.witness_state is None:
        return gate_fidelity(report, ideal)
    f = report.n_max + 1
    rho = report.witness_state
    phase = np.repeat(np.exp(-1j * report.correction), f)
    rho = phase[:, None] * rho * np.conj(phase)[None, :]
    target = np.zeros(rho.shape[0], dtype=complex)
    target[np.arange(4) * f] = ideal / 2
    return float(np.real(np.vdot(target, rho @ target)))


def decoherence_error_estimate(params: SystemParams, *,
                               round_to_decade: bool = False) -> tuple[float, float, float]:
    """Cavity-decay error budget (p_exc, t_eff, error = t / t_eff).

    p_exc = (Omega g / (Delta delta + g^2))^2 is the cavity excitation probability
    and t_eff = 1 / (gamma p_exc).  ``round_to_decade`` rounds p_exc down to a
    power of ten, the order-of-magnitude estimate (10^-3 for preset B).
    """
    if params.gamma_cav <= 0:
        raise ValueError("decoherence estimate needs gamma_cav > 0")
    p_exc = params.radius**2
    if round_to_decade:
        p_exc = 10.0 ** math.floor(math.log10(p_exc))
    t_eff = 1.0 / (params.gamma_cav * p_exc)
    return p_exc, t_eff, params.t_total / t_eff


def decay_infidelity(params: SystemParams, *, tol: float = GATE_TOL) -> float:
    """1 - <psi|rho|psi> between the decayed and the lossless witness outputs.

    Both runs use the effective Hamiltonian on the qubit manifold; the result
    isolates the error caused by cavity decay from coherent gate errors.
    """
    params = replace(params, model_kind="effective_lindblad")
    h = model.effective_hamiltonian(params).to_qubits()
    psi0 = _witness_vector(params.n_max)
    ref = dynamics.propagate_unitary(h, psi0, params.t_total, params.step, tol=tol).final_state
    rho = dynamics.propagate_lindblad(h, dynamics.as_density(psi0), params.gamma_cav,
                                      params.t_total, params.step, tol=tol).final_state
    return float(1.0 - np.real(np.vdot(ref, rho @ ref)))


def interaction_frame_phases(report: GateReport, params: SystemParams) -> np.ndarray:
    """Report phases referred to the interaction frame of the effective Hamiltonian.

    Transformed-model phases omit the rotation exp(-i H0 t) of the Stark frame;
    it is added back here (Omega^2 t / Delta per excited atom).  Other models
    already live in that frame.
    """
    phases = np.asarray(report.phases, dtype=float)
    if params.model_kind != "transformed":
        return phases.copy()
    h0 = model.frame_hamiltonian(replace(params, n_max=1)).to_qubits()
    diag = np.real(np.diag(h0.static) if np.ndim(h0.static) == 2 else h0.static)
    rows = [model.basis_index(lab, 0, 1, 2) for lab in QUBIT_LABELS]
    return phases - diag[rows] * params.t_total


def wrap_phase(x):
    """Map to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)
