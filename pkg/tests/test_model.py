import math

import numpy as np
import pytest
from scipy.integrate import quad

from geomgate import geompath, model
from geomgate.model import SystemParams, basis_index

P = SystemParams(omega=0.7, delta_large=9.0, delta_small=0.4, n_max=5)
T = 1.3


def idx(label, n, levels=3):
    return basis_index(label, n, P.n_max, levels)


def test_param_validation():
    with pytest.raises(ValueError):
        SystemParams(omega=1, delta_large=0, delta_small=1)
    with pytest.raises(ValueError):
        SystemParams(omega=1, delta_large=10, delta_small=1, model_kind="bogus")
    with pytest.raises(ValueError):
        SystemParams(omega=float("nan"), delta_large=10, delta_small=1)
    with pytest.raises(ValueError):
        SystemParams(omega=1, delta_large=10, delta_small=1, dt=-1.0)


def test_derived_quantities():
    p = SystemParams(omega=1, delta_large=10, delta_small=2)
    assert p.nu == pytest.approx(2.1)
    assert p.radius == pytest.approx(1 / 21)
    assert p.loop_time() == pytest.approx(2 * math.pi / 2.1)
    assert p.step == pytest.approx(2 * math.pi / (200 * 2.1))
    full = p.with_(model_kind="full")
    assert full.step == pytest.approx(2 * math.pi / 2000)


def test_validity_notes():
    assert SystemParams(omega=1, delta_large=10, delta_small=0.1).validity_notes() == []
    assert SystemParams(omega=1, delta_large=2, delta_small=0.1).validity_notes()


def test_basis_layout():
    assert basis_index("gg", 0, 4) == 0
    assert basis_index("ge", 1, 4) == 1 * 5 + 1
    assert basis_index("eg", 0, 4, atom_levels=2) == 2 * 5
    with pytest.raises(ValueError):
        basis_index("rg", 0, 4, atom_levels=2)
    with pytest.raises(ValueError):
        basis_index("gg", 5, 4)
    assert np.array_equal(model.qubit_indices(1), [0, 1, 2, 3, 6, 7, 8, 9])


def test_full_hamiltonian_elements():
    h = model.full_hamiltonian(P)(T)
    n = 2
    # cavity coupling g a S+ : |e g, n+1> -> |r g, n>
    assert h[idx("rg", n), idx("eg", n + 1)] == pytest.approx(math.sqrt(n + 1))
    # classical drive Omega exp(-i delta t) S+
    assert h[idx("rg", n), idx("eg", n)] == pytest.approx(P.omega * np.exp(-1j * P.delta_small * T))
    assert h[idx("ee", n), idx("ee", n)] == pytest.approx(-P.delta_large)
    assert h[idx("re", 0), idx("re", 0)] == pytest.approx(0.0)
    assert h[idx("gg", n), idx("gg", n)] == 0


def test_effective_hamiltonian_elements():
    h = model.effective_hamiltonian(P)(T)
    dl, om = P.delta_large, P.omega
    ph = np.exp(-1j * P.delta_small * T)
    for n in range(P.n_max):
        rate = om / dl * math.sqrt(n + 1)
        assert h[idx("rg", n + 1), idx("rg", n)] == pytest.approx(rate * ph)
        assert h[idx("eg", n + 1), idx("eg", n)] == pytest.approx(-rate * ph)
        assert h[idx("ge", n + 1), idx("ge", n)] == pytest.approx(-rate * ph)
        assert h[idx("eg", n), idx("eg", n)] == pytest.approx(-(n + om**2) / dl)
        assert h[idx("rg", n), idx("rg", n)] == pytest.approx((n + om**2 + 1) / dl)
        assert h[idx("ee", n), idx("ee", n)] == pytest.approx(-2 * (n + om**2) / dl)
        # cavity-induced dipole exchange
        assert h[idx("re", n), idx("er", n)] == pytest.approx(1 / dl)


def test_transformed_hamiltonian_elements():
    h = model.transformed_hamiltonian(P)(T)
    dl, om, ds = P.delta_large, P.omega, P.delta_small
    n = 1
    rate = om / dl * math.sqrt(n + 1)
    assert h[idx("eg", n + 1), idx("eg", n)] == pytest.approx(-rate * np.exp(-1j * (ds + 1 / dl) * T))
    assert h[idx("rg", n + 1), idx("rg", n)] == pytest.approx(rate * np.exp(-1j * (ds - 1 / dl) * T))
    assert np.allclose(np.diag(h), 0)


@pytest.mark.parametrize("builder", [model.full_hamiltonian, model.effective_hamiltonian,
                                     model.frame_hamiltonian, model.transformed_hamiltonian,
                                     model.interaction_picture_hamiltonian])
def test_hermitian(builder):
    op = builder(P)
    for t in (0.0, 0.77, 12.0):
        h = op(t)
        assert np.allclose(h, h.conj().T, atol=1e-14)
    stack = op.at_times(np.array([0.0, 0.77]))
    assert np.allclose(stack[1], op(0.77))


def test_full_eigenvalues_at_t0_without_drive():
    # with Omega = 0 each |e g, n+1>, |r g, n> pair is a Jaynes-Cummings doublet
    h = model.full_hamiltonian(P.with_(omega=0.0))(0.0)
    pair = [idx("eg", 3), idx("rg", 2)]
    ev = np.linalg.eigvalsh(h[np.ix_(pair, pair)])
    dl = P.delta_large
    assert np.allclose(ev, [-math.sqrt(dl**2 / 4 + 3), math.sqrt(dl**2 / 4 + 3)])


@pytest.mark.parametrize("builder", [model.effective_hamiltonian, model.transformed_hamiltonian,
                                     model.interaction_picture_hamiltonian])
def test_ground_state_is_dark(builder):
    op = builder(P)
    g0 = idx("gg", 0)
    for t in (0.0, 2.2):
        h = op(t)
        row = h[:, g0].copy()
        assert np.allclose(row, 0)


def test_qubit_manifold_invariant():
    op = model.effective_hamiltonian(P)
    q = model.qubit_indices(P.n_max)
    rest = np.setdiff1d(np.arange(op.dim), q)
    assert not np.any(op(1.0)[np.ix_(rest, q)])
    sector = op.sector([idx("eg", 0)])
    assert set(sector) == {idx("eg", n) for n in range(P.n_max + 1)}


def test_frame_hamiltonian_diagonal_and_time_independent():
    h0 = model.frame_hamiltonian(P)
    assert not h0.time_dependent
    assert np.count_nonzero(h0.static - np.diag(np.diag(h0.static))) == 0


def conjugated(params, t):
    hi, h0 = model.effective_hamiltonian(params), model.frame_hamiltonian(params)
    u = np.exp(1j * np.real(np.diag(h0.static)) * t)
    return u[:, None] * (hi(t) - h0.static) * np.conj(u)[None, :]


def test_frame_conjugation_single_excitation():
    for t in (0.3, 4.0):
        exact = conjugated(P, t)
        ht = model.transformed_hamiltonian(P)(t)
        sel = [idx(lab, n) for lab in ("gg", "ge", "eg") for n in range(P.n_max + 1)]
        assert np.allclose(exact[np.ix_(sel, sel)], ht[np.ix_(sel, sel)], atol=1e-14)


def test_frame_conjugation_double_excitation_differs():
    # both atoms in |e> shift the cavity frequency twice; the per-atom sideband
    # frequencies of the transformed Hamiltonian miss half of that shift
    t = 4.0
    sel = [idx("ee", n) for n in range(P.n_max + 1)]
    exact = conjugated(P, t)[np.ix_(sel, sel)]
    assert not np.allclose(exact, model.transformed_hamiltonian(P)(t)[np.ix_(sel, sel)], atol=1e-3)
    assert np.allclose(exact, model.interaction_picture_hamiltonian(P)(t)[np.ix_(sel, sel)], atol=1e-14)


def test_interaction_picture_exact_everywhere():
    for t in (0.3, 4.0):
        assert np.allclose(conjugated(P, t), model.interaction_picture_hamiltonian(P)(t), atol=1e-14)


def test_alpha_trajectory_matches_integrated_drive():
    p = SystemParams(omega=1, delta_large=10, delta_small=2)
    c = p.omega * p.g / p.delta_large
    t = 1.7
    # i d(alpha)/dt = -c exp(-i nu t) for the single-|e> branch
    re = quad(lambda s: np.real(1j * c * np.exp(-1j * p.nu * s)), 0, t)[0]
    im = quad(lambda s: np.imag(1j * c * np.exp(-1j * p.nu * s)), 0, t)[0]
    assert model.alpha_trajectory(p, t) == pytest.approx(complex(re, im), abs=1e-12)
    assert model.alpha_trajectory(p, 0.0) == 0
    assert abs(model.alpha_trajectory(p, p.loop_time())) < 1e-14
    assert abs(model.alpha_trajectory(p, p.loop_time(0.5))) == pytest.approx(2 * p.radius)


def test_conditional_phase_values():
    a = SystemParams(omega=1, delta_large=10, delta_small=0.1, t_total=10 * math.pi)
    phi, phi_ee = model.conditional_phase(a, a.t_total)
    assert phi == pytest.approx(-math.pi / 2)
    assert phi_ee == pytest.approx(-2 * math.pi)
    b = SystemParams(omega=1, delta_large=10, delta_small=2)
    assert model.secular_phase(b, 105 * math.pi) == pytest.approx(-math.pi / 2)
    # the approximate duration pi Delta^2 delta / (2 g^4) = 100 pi misses the phase condition
    assert model.secular_phase(b, 100 * math.pi) != pytest.approx(-math.pi / 2, abs=1e-2)


@pytest.mark.parametrize("fraction", [0.25, 0.6, 1.0])
def test_conditional_phase_equals_path_phase(fraction):
    p = SystemParams(omega=1, delta_large=10, delta_small=0.1)
    t = p.loop_time(fraction)
    ts = np.linspace(0, t, 10_001)
    theta = geompath.path_phase(geompath.DisplacementPath(model.alpha_trajectory(p, ts))).theta
    assert theta == pytest.approx(model.conditional_phase(p, t)[0], abs=1e-4)
    if fraction == 1.0:
        area = math.pi * p.radius**2
        assert theta == pytest.approx(-2 * area, abs=1e-4)
