import numpy as np
import pytest

from apdnegf.device import DopingSpec, assemble_device, kmesh, lead_offsets, potential_profile
from apdnegf.leads import EtaSchedule
from apdnegf.negf import EnergyGrid, contact_terms
from apdnegf.tb.templates import chain_1d, two_band_1d

# tight broadening used where Keldysh identities are checked to ~1e-10
TIGHT_SCHEDULE = EtaSchedule(eta_initial=1e-2, eta_final=1e-10)
TIGHT_ETA = 1e-12


def chain_device(n=10, t=-1.0, bias=0.0, temperature=300.0, mu=None):
    model = chain_1d(t=t).model()
    prof = potential_profile(n, (0.0, 0.0), 0.0)
    return assemble_device(model, n, prof, temperature=temperature,
                           chemical_potentials=mu if mu is not None else (0.5 * bias, -0.5 * bias))


def two_band_device(n=10, bias=0.0, temperature=300.0, doping=DopingSpec(2.5e18, 4.0e18), mu=None):
    """Two-band p-n device; ``doping=None`` gives flat (undoped) leads."""
    model = two_band_1d().model()
    a = float(np.linalg.norm(model.lattice_vectors[0]))
    offsets = lead_offsets(doping) if doping is not None else (0.0, 0.0)
    prof = potential_profile(n, offsets, bias, a)
    return assemble_device(model, n, prof, temperature=temperature, chemical_potentials=mu)


def solve_ready(device, grid, schedule=EtaSchedule()):
    return contact_terms(device, grid.energies, schedule)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
