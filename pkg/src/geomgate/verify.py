"""Executable checks: fast invariants for ``geomgate verify`` and the acceptance criteria."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from geomgate import dynamics, fock, gate, geompath, model
from geomgate.model import QUBIT_LABELS


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _timed(name, fn):
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


def _block(m: np.ndarray, n_max: int) -> np.ndarray:
    k = fock.physical_levels(n_max)
    return m[:k, :k]


def _amplitude_grid(limit: float, radii=3, angles=8):
    return [r * np.exp(2j * np.pi * k / angles)
            for r in np.linspace(limit / radii, limit, radii) for k in range(angles)]


def branch_state(h: model.JointOperator, label: str, params, dt: float) -> np.ndarray:
    """Final joint state for |label, 0>, propagated inside its invariant sector."""
    start = model.basis_index(label, 0, params.n_max, h.atom_levels)
    sector = h.sector([start])
    psi0 = np.zeros(len(sector), dtype=complex)
    psi0[int(np.searchsorted(sector, start))] = 1.0
    rep = dynamics.propagate_unitary(h.restrict(sector), psi0, params.t_total, dt, check=False)
    out = np.zeros(h.dim, dtype=complex)
    out[sector] = rep.final_state
    return out


# -- acceptance criteria ---------------------------------------------------------


def criterion_displacement_algebra() -> CheckResult:
    def run():
        n_max, worst = 24, 0.0
        for a in _amplitude_grid(0.3):
            for b in _amplitude_grid(0.3, angles=5):
                lhs = fock.displacement(b, n_max) @ fock.displacement(a, n_max)
                rhs = np.exp(1j * np.imag(b * np.conj(a))) * fock.displacement(a + b, n_max)
                worst = max(worst, float(np.max(np.abs(_block(lhs - rhs, n_max)))))
        loops = [
            geompath.circle_path(0.15, 200, center=0.15),
            geompath.polygon_path([0, 0.3, 0.3 + 0.3j, 0.3j]),
            geompath.polygon_path([0, 0.2 - 0.1j, 0.1 + 0.2j]),
        ]
        for loop in loops:
            prod, theta = geompath.compose_displacements(loop, n_max)
            err = _block(prod - np.exp(1j * theta) * np.eye(n_max + 1), n_max)
            worst = max(worst, float(np.max(np.abs(err))))
        return worst <= 1e-8, f"max deviation {worst:.2e} (tol 1e-8, levels <= {n_max // 2})"

    res = _timed("1 displacement algebra", run)
    res.passed = res.passed and res.seconds < 1.0
    res.detail += f", {res.seconds:.2f}s (limit 1s)"
    return res


def criterion_area_law() -> CheckResult:
    def run():
        paths = [geompath.circle_path(r, n, center=c)
                 for r, n, c in [(0.5, 10_000, 0), (0.2, 37, 0.1 - 0.3j), (1.3, 500, 2j)]]
        paths += [geompath.polygon_path([0, 0.2, 0.2 + 0.2j, 0.2j]),
                  geompath.polygon_path([0.1, 0.5 + 0.2j, -0.3 + 0.7j, -0.2 - 0.1j]),
                  geompath.circle_path(0.4, 64).reversed()]
        identity = max(abs(abs(p.theta) - 2 * abs(p.signed_area)) / max(abs(p.theta), 1e-300)
                       for p in map(geompath.path_phase, paths))
        r = 0.5
        limit = abs(geompath.path_phase(geompath.circle_path(r, 10_000)).theta - 2 * np.pi * r**2)
        ok = identity <= 1e-13 and limit <= 1e-3
        return ok, f"|theta|-2|area| rel {identity:.1e} (tol 1e-13); circle limit err {limit:.2e} (tol 1e-3)"

    return _timed("2 area law", run)


def criterion_preset_a_gate() -> CheckResult:
    def run():
        rep = gate.run_gate(gate.preset("A"))
        expected = np.array([0, -np.pi / 2, -np.pi / 2, -2 * np.pi])
        phase_err = float(np.max(np.abs(rep.phases - expected)))
        resid = float(np.max(np.abs(rep.residual_alpha)))
        diag_err = float(np.max(np.abs(rep.corrected_diagonal - np.array([1, 1, 1, -1]))))
        ok = phase_err <= 1e-3 and resid <= 1e-3 and diag_err <= 1e-3 and rep.fidelity >= 0.999
        return ok, (f"phase err {phase_err:.1e}, residual {resid:.1e}, corrected err {diag_err:.1e}"
                    f" (tol 1e-3); F = {rep.fidelity:.6f} (>= 0.999)")

    return _timed("3 preset A pi-phase gate", run)


def frame_consistency(params, refine: int = 4, transformed=None) -> dict[str, float]:
    """Per basis state: ||psi_Hi(t) - exp(-i H0 t) psi_Hi'(t)|| on the qubit manifold.

    ``transformed`` builds H_i' (default :func:`model.transformed_hamiltonian`).
    """
    transformed = transformed or model.transformed_hamiltonian
    dt = params.step / refine
    hi = model.effective_hamiltonian(params).to_qubits()
    ht = transformed(params).to_qubits()
    h0 = model.frame_hamiltonian(params).to_qubits()
    out = {}
    for lab in QUBIT_LABELS:
        direct = branch_state(hi, lab, params, dt)
        framed = dynamics.frame_transform(branch_state(ht, lab, params, dt), h0, params.t_total)
        out[lab] = float(np.linalg.norm(direct - framed))
    return out


def criterion_frame_consistency() -> CheckResult:
    def run():
        parts, ok, only_ee = [], True, True
        for name in "AB":
            params = gate.preset(name)
            dev = frame_consistency(params)
            ok &= max(dev.values()) <= 1e-6
            only_ee &= max(v for k, v in dev.items() if k != "ee") <= 1e-6
            parts.append(name + ": " + ", ".join(f"{k} {v:.1e}" for k, v in dev.items()))
        detail = "; ".join(parts) + " (tol 1e-6)"
        if not ok and only_ee:
            exact = frame_consistency(gate.preset("A"), refine=8,
                                      transformed=model.interaction_picture_hamiltonian)
            detail += (f"; only |ee> fails: per-atom sideband frequencies miss the doubled cavity "
                       f"shift (exact conjugated H at dt/8 gives ee {exact['ee']:.1e} at A)")
        return ok, detail

    return _timed("4 frame consistency", run)


def dispersive_convergence(deltas=(10.0, 20.0, 40.0), n_max: int = 10):
    """(|phi_eg(full) - phi_eg(effective)|, max |r> population) for each detuning."""
    rows = []
    for dl in deltas:
        full = gate.evolve_branch(gate.dispersive_family(dl, "full", n_max=n_max), "eg")
        eff = gate.evolve_branch(gate.dispersive_family(dl, "effective", n_max=n_max), "eg")
        rows.append((dl, abs(full.phase - eff.phase), full.max_r_population))
    return rows


def criterion_full_model() -> CheckResult:
    def run():
        rows = dispersive_convergence()
        gaps = [g for _, g, _ in rows]
        monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
        pops = [p for _, _, p in rows]
        ok = monotone and pops[0] <= 5e-2 and all(b < a for a, b in zip(pops, pops[1:]))
        detail = ", ".join(f"D={dl:g}: gap {g:.2e}, p_r {p:.3f}" for dl, g, p in rows)
        return ok, detail + " (gap decreasing, p_r <= 5e-2 at D=10)"

    return _timed("5 full vs effective", run)


def criterion_small_circle() -> CheckResult:
    def run():
        rep = gate.run_gate(gate.preset("B"))
        pur = min(rep.witness_min_purity, float(np.min(rep.cavity_purity)))
        ok = 1e-3 <= rep.max_excitation <= 1e-2 and pur >= 0.98
        return ok, (f"max excitation {rep.max_excitation:.3e} (in [1e-3, 1e-2]); "
                    f"min cavity purity {pur:.4f} (>= 0.98)")

    return _timed("6 small-circle regime", run)


def criterion_decoherence_budget() -> CheckResult:
    def run():
        params = gate.preset("B", n_max=4)
        _, _, est = gate.decoherence_error_estimate(params)
        _, _, rounded = gate.decoherence_error_estimate(params, round_to_decade=True)
        sim = gate.decay_infidelity(params)
        order_ok = 1e-2 <= est < 1e-1 and abs(rounded - 1.2e-2) < 1e-3
        ratio = sim / est
        ok = order_ok and 1 / 3 <= ratio <= 3
        return ok, (f"t/T = {est:.3e} (p_exc exact), {rounded:.3e} (p_exc ~ 1e-3); "
                    f"Lindblad witness 1-F = {sim:.3e}, ratio {ratio:.2f} (within 3x)")

    return _timed("7 decoherence budget", run)


def criterion_geometric_consistency() -> CheckResult:
    def run():
        params = gate.preset("A")
        params = replace(params, t_total=params.loop_time())
        branch = gate.evolve_branch(params, "eg")
        area = math.pi * params.radius**2
        secular = model.secular_phase(params, params.t_total)
        err = max(abs(branch.phase + 2 * area), abs(branch.phase - secular))
        return err <= 1e-4, f"phase {branch.phase:.8f} vs -2*area {-2 * area:.8f}: err {err:.1e} (tol 1e-4)"

    return _timed("8 geometric consistency", run)


def criterion_numerical_hygiene() -> CheckResult:
    def run():
        params = gate.preset("B")
        params = replace(params, t_total=params.loop_time(), dt=None)
        h = model.transformed_hamiltonian(params).to_qubits()
        psi0 = gate._witness_vector(params.n_max)
        ratio = dynamics.step_halving_ratio(h, psi0, params.t_total, params.step)
        rep = dynamics.propagate_unitary(h, psi0, params.t_total, params.step, check=False)
        lind = dynamics.propagate_lindblad(
            model.effective_hamiltonian(params).to_qubits(), dynamics.as_density(psi0),
            params.gamma_cav, params.t_total, params.step, check=False)
        drift = max(rep.norm_drift, lind.norm_drift)
        ok = 3.5 <= ratio <= 4.5 and drift <= 1e-8
        return ok, f"halving ratio {ratio:.3f} (in [3.5, 4.5]); norm/trace drift {drift:.1e} (<= 1e-8)"

    return _timed("9 numerical hygiene", run)


ACCEPTANCE = (
    criterion_displacement_algebra,
    criterion_area_law,
    criterion_preset_a_gate,
    criterion_frame_consistency,
    criterion_full_model,
    criterion_small_circle,
    criterion_decoherence_budget,
    criterion_geometric_consistency,
    criterion_numerical_hygiene,
)


# -- quick invariants ------------------------------------------------------------


def _check_unitarity():
    worst = 0.0
    for a in _amplitude_grid(0.5):
        d = fock.displacement(a, 16)
        worst = max(worst, float(np.max(np.abs(d.conj().T @ d - np.eye(17)))),
                    float(np.max(np.abs(d @ fock.displacement(-a, 16) - np.eye(17)))))
    return worst <= 1e-8, f"max |D+D - I|, |D(a)D(-a) - I| = {worst:.1e}"


def _check_hermiticity():
    params = gate.preset("B", n_max=4)
    builders = (model.full_hamiltonian, model.effective_hamiltonian, model.frame_hamiltonian,
                model.transformed_hamiltonian, model.interaction_picture_hamiltonian)
    worst = max(b(params).hermiticity_error(t) for b in builders for t in (0.0, 0.37, 11.3))
    return worst <= 1e-12, f"max relative |H - H+| = {worst:.1e}"


def _check_ground_manifold():
    params = gate.preset("B", n_max=4)
    h = model.effective_hamiltonian(params)
    q = model.qubit_indices(params.n_max)
    rest = np.setdiff1d(np.arange(h.dim), q)
    leak = max(float(np.max(np.abs(h(t)[np.ix_(rest, q)]))) for t in (0.0, 0.7, 3.1))
    return leak == 0.0, f"max coupling out of the qubit manifold {leak:.1e}"


def _check_frame_operator():
    params = gate.preset("B", n_max=4)
    hi, h0 = model.effective_hamiltonian(params), model.frame_hamiltonian(params)
    ht = model.transformed_hamiltonian(params)
    q = model.qubit_indices(params.n_max)
    single = q[: 3 * (params.n_max + 1)]
    worst = 0.0
    for t in np.linspace(0.1, 7.0, 10):
        u = np.exp(1j * np.real(np.diag(h0.static)) * t)
        conj = u[:, None] * (hi(t) - h0.static) * np.conj(u)[None, :]
        worst = max(worst, float(np.max(np.abs((conj - ht(t))[np.ix_(single, single)]))))
    return worst <= 1e-10, f"single-excitation sectors, max deviation {worst:.1e}"


def _check_correction_algebra():
    worst = 0.0
    for x in np.linspace(-3, 3, 13):
        rep = gate.GateReport(phases=np.array([0, x, x, 4 * x]), residual_alpha=np.zeros(4),
                              cavity_purity=np.ones(4), amplitudes=np.exp(1j * np.array([0, x, x, 4 * x])))
        out = gate.apply_correction(rep, gate.preset("A"))
        worst = max(worst, float(np.max(np.abs(out.corrected_diagonal - [1, 1, 1, np.exp(2j * x)]))))
    return worst <= 1e-12, f"(0,x,x,4x) -> (1,1,1,e^2ix) deviation {worst:.1e}"


QUICK = (
    ("displacement unitarity", _check_unitarity),
    ("hamiltonian hermiticity", _check_hermiticity),
    ("ground-manifold invariance", _check_ground_manifold),
    ("frame conjugation (single excitation)", _check_frame_operator),
    ("correction algebra", _check_correction_algebra),
)


def run_quick() -> list[CheckResult]:
    results = [_timed(name, fn) for name, fn in QUICK]
    results += [criterion_displacement_algebra(), criterion_area_law(), criterion_preset_a_gate()]
    return results


def run_acceptance() -> list[CheckResult]:
    return [fn() for fn in ACCEPTANCE]
