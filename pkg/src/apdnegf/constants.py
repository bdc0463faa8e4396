"""Physical constants. Energies are in eV throughout, so q*V in eV equals V."""

KB_EV = 8.617333262e-5  # eV / K
HBAR_EVS = 6.582119569e-16  # eV s
Q_E = 1.602176634e-19  # C
H_EVS = 2.0 * 3.141592653589793 * HBAR_EVS

# Current prefactor: (q / hbar) * dE / (2 pi) with dE in eV gives amperes.
CURRENT_PREFACTOR = Q_E / (2.0 * 3.141592653589793 * HBAR_EVS)
