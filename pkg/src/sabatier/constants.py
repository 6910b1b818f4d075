"""Physical constants (SI)."""

R_GAS = 8.314462618  # J/(mol K)
P_ATM = 101325.0  # Pa
K_BOLTZMANN = 1.380649e-23  # J/K
N_AVOGADRO = 6.02214076e23  # 1/mol

# Normal conditions used to quote volumetric flow rates.
P_NORM = 101325.0  # Pa
T_NORM = 273.15  # K
