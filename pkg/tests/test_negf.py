import numpy as np
import pytest

from apdnegf.constants import H_EVS, Q_E
from apdnegf.device import kmesh
from apdnegf.errors import NumericalError, ValidationError
from apdnegf.leads import EtaSchedule, LeadModel, contact_self_energy, fermi_dirac, surface_green_function
from apdnegf.negf import (
    EnergyGrid,
    check_uniform,
    contact_terms,
    dagger,
    keldysh_correlations,
    landauer_current,
    meir_wingreen_current,
    retarded_green,
    solve_coherent,
    spectral_function,
    spectral_maps,
    terminal_currents,
    transmission,
)

from conftest import TIGHT_ETA, TIGHT_SCHEDULE, chain_device, two_band_device


def test_energy_grid():
    g = EnergyGrid(-1.0, 1.0, 5)
    assert g.de == 0.5 and g.index_of(0.5) == 3
    with pytest.raises(ValidationError):
        EnergyGrid(1.0, 0.0, 5)
    with pytest.raises(ValidationError):
        EnergyGrid(0.0, 1.0, 5, eta=0.0)
    with pytest.raises(ValidationError):
        check_uniform([0.0, 1.0, 3.0])


def test_diagonal_inversion():
    eps = np.array([0.3, -1.0, 2.0])
    G = retarded_green(np.diag(eps), None, 0.5, 1e-3)
    assert np.allclose(G, np.diag(1 / (0.5 + 1e-3j - eps)), atol=1e-14)


def test_dyson_residual(rng):
    n = 6
    a = rng.normal(size=(n, n))
    H = a + a.T
    s = rng.normal(size=(4, n, n)) + 1j * rng.normal(size=(4, n, n))
    sigma = 0.5 * (s + dagger(s)) - 0.5j * (s @ dagger(s))
    e = np.linspace(-1, 1, 4)
    G = retarded_green(H, sigma, e, 1e-6)
    z = (e + 1e-6j)[:, None, None] * np.eye(n)
    assert np.max(np.linalg.norm((z - H - sigma) @ G - np.eye(n), axis=(1, 2))) < 1e-10


def test_singular_dyson_names_energy():
    with pytest.raises(NumericalError, match="E="):
        retarded_green(np.zeros((1, 1)), None, 0.0, 0.0)


def test_single_site_between_two_chains():
    lead = LeadModel(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    g = surface_green_function(lead, 0.0, TIGHT_SCHEDULE)
    sig = contact_self_energy(g, lead.tau)
    G = retarded_green(np.zeros((1, 1)), 2 * sig, 0.0, TIGHT_ETA)
    assert abs(G[0, 0] - (-0.5j)) < 1e-8
    assert abs(spectral_function(G)[0, 0] - 1.0) < 1e-8


def coherent(device, grid, schedule=TIGHT_SCHEDULE):
    return solve_coherent([device], grid, schedule)


def test_keldysh_basic_and_identity():
    grid = EnergyGrid(-4.5, 4.5, 181, TIGHT_ETA)
    dev = two_band_device(8, bias=-0.5)
    greens, _ = coherent(dev, grid)
    A = greens.spectral
    assert np.max(np.abs(A - 1j * (greens.greater - greens.lesser))) < 1e-10
    assert np.max(np.abs(A - dagger(A))) < 1e-12
    G = greens.G[0, 3]
    assert not np.any(keldysh_correlations(G, np.zeros_like(G), np.zeros_like(G))[0])


def test_correlations_psd():
    grid = EnergyGrid(-4.5, 4.5, 91, 1e-6)
    greens, _ = coherent(two_band_device(6, bias=-1.0), grid, EtaSchedule())
    for M in (greens.spectral[0], -1j * greens.lesser[0], 1j * greens.greater[0]):
        assert min(np.linalg.eigvalsh(x).min() for x in M) >= -1e-10


def test_equilibrium_fluctuation_dissipation():
    # 100 points keep the grid off the van Hove singularities at +-2|t|
    grid = EnergyGrid(-2.5, 2.5, 100, TIGHT_ETA)
    dev = chain_device(8, mu=(0.2, 0.2))
    greens, sel = coherent(dev, grid)
    f = fermi_dirac(grid.energies, 0.2, 300.0)[:, None, None]
    A = greens.spectral[0]
    # measured against the largest spectral weight; A grows like 1/sqrt near the band edges
    assert np.max(np.abs(greens.lesser[0] - 1j * f * A)) < 1e-10 * max(1.0, np.abs(A).max())


def test_spectral_sum_rule_per_orbital():
    grid = EnergyGrid(-8.0, 8.0, 4001, 1e-6)
    greens, _ = coherent(two_band_device(6), grid, EtaSchedule())
    diag = np.real(np.diagonal(greens.spectral[0], axis1=-2, axis2=-1))
    weight = np.trapezoid(diag, grid.energies, axis=0) / (2 * np.pi)
    assert np.max(np.abs(weight - 1.0)) < 0.02


def test_chain_perfect_transmission_and_symmetry():
    grid = EnergyGrid(-1.95, 1.95, 79, TIGHT_ETA)
    dev = chain_device(10)
    greens, sel = coherent(dev, grid)
    c = sel.contacts[0]
    G = greens.G[0][:, :1, -1:]
    T = transmission(c.gamma_l, G, c.gamma_r)
    assert np.max(np.abs(T - 1.0)) < 1e-6
    Gb = greens.G[0][:, -1:, :1]
    assert np.max(np.abs(transmission(c.gamma_r, Gb, c.gamma_l) - T)) < 1e-12
    assert not np.any(transmission(c.gamma_l, G, np.zeros_like(c.gamma_r)))


def test_two_band_gap_transmission_suppressed():
    grid = EnergyGrid(-4.0, 4.0, 161, 1e-6)
    greens, sel = coherent(two_band_device(20), grid, EtaSchedule())
    c = sel.contacts[0]
    T = transmission(c.gamma_l, greens.G[0][:, :2, -2:], c.gamma_r)
    e = grid.energies
    assert T[np.abs(e) < 0.3].max() < 1e-6
    assert T[(e > 1.5) & (e < 2.5)].min() > 0.1
    assert T[(e < -1.5) & (e > -2.5)].min() > 0.1


def test_landauer_examples():
    e = np.linspace(-1, 1, 201)
    f = fermi_dirac(e, 0.1, 300)
    assert landauer_current(np.ones_like(e), f, f, e) == 0.0
    fl, fr = fermi_dirac(e, 0.25, 0.0), fermi_dirac(e, -0.25, 0.0)
    i = landauer_current(np.ones_like(e), fl, fr, e)
    g0 = 2 * Q_E / H_EVS  # g_s q^2 / h in A/V
    assert i / 0.5 == pytest.approx(g0, rel=1e-3)
    assert landauer_current(np.ones_like(e), fr, fl, e) == -i


def test_meir_wingreen_equilibrium_zero():
    grid = EnergyGrid(-2.5, 2.5, 100, TIGHT_ETA)
    dev = chain_device(6, mu=(0.1, 0.1))
    greens, sel = coherent(dev, grid)
    cur = terminal_currents(greens, sel, kmesh(1, 1), grid, dev)
    scale = landauer_current(np.ones(grid.n), fermi_dirac(grid.energies, 0.6, 300), fermi_dirac(grid.energies, 0.1, 300), grid.energies)
    assert abs(cur.left) < 1e-10 * scale and abs(cur.right) < 1e-10 * scale


def test_meir_wingreen_equals_landauer_two_band():
    grid = EnergyGrid(-5.0, 5.0, 200, TIGHT_ETA)
    # undoped leads with the bias window inside the conduction band
    dev = two_band_device(10, bias=0.5, doping=None, mu=(1.75, 1.25))
    greens, sel = coherent(dev, grid)
    cur = terminal_currents(greens, sel, kmesh(1, 1), grid, dev)
    assert abs(cur.left - cur.landauer) <= 1e-8 * abs(cur.landauer)
    assert abs(cur.left + cur.right) <= 1e-8 * abs(cur.landauer)


def test_current_conservation_includes_regularizer():
    grid = EnergyGrid(-4.0, 4.0, 101, 1e-3)
    dev = two_band_device(6, bias=0.5)
    greens, sel = coherent(dev, grid, EtaSchedule())
    cur = terminal_currents(greens, sel, kmesh(1, 1), grid, dev)
    assert abs(cur.total) < 1e-12 * abs(cur.left)


def test_spectral_maps_homogeneous_and_bounded():
    grid = EnergyGrid(-2.5, 2.5, 100, TIGHT_ETA)
    dev = chain_device(8, mu=(0.3, -0.3))
    greens, _ = coherent(dev, grid)
    maps = spectral_maps(greens, kmesh(1, 1), grid, dev)
    assert np.max(np.abs(maps.ldos[1:-1] - maps.ldos[3])) < 1e-8
    assert np.all(maps.ldos >= -1e-10)
    assert np.all(maps.occupied <= maps.ldos + 1e-8)
    assert maps.density.shape == (8,)


def test_contact_terms_edge_blocks():
    grid = EnergyGrid(-1.0, 1.0, 5)
    dev = two_band_device(4)
    c = contact_terms(dev, grid.energies)
    assert c.sigma_l.shape == (5, 2, 2)
    full = c.embed(c.sigma_l, dev.size, "left")
    assert np.count_nonzero(full[:, 2:, :]) == 0 and np.count_nonzero(full[:, :, 2:]) == 0
    sl, sg = c.lesser_greater("right")
    assert np.max(np.abs(sg - sl + 1j * c.gamma_r)) < 1e-14
