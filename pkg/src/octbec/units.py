"""Dimensionless units for 87Rb: hbar = 1, mass = m(87Rb), length = 1 micrometre."""

import scipy.constants as const

TIME_UNIT_MS = 1.37
ENERGY_UNIT_NK = 5.58

RB87_MASS_KG = 86.909180527 * const.atomic_mass
BOHR_MAGNETON = const.physical_constants["Bohr magneton"][0]
GAUSS = 1e-4  # tesla


def derived_time_unit_ms(mass_kg: float = RB87_MASS_KG) -> float:
    """``m L^2 / hbar`` in milliseconds for L = 1 micrometre."""
    return mass_kg * 1e-12 / const.hbar * 1e3


def derived_energy_unit_nk(mass_kg: float = RB87_MASS_KG) -> float:
    """``hbar^2 / (m L^2 k_B)`` in nanokelvin for L = 1 micrometre."""
    return const.hbar**2 / (mass_kg * 1e-12) / const.k * 1e9


def ms_to_time(t_ms: float) -> float:
    return t_ms / TIME_UNIT_MS


def time_to_ms(t: float) -> float:
    return t * TIME_UNIT_MS


def gauss_to_energy(b_gauss, moment_bohr: float = 1.0):
    """Zeeman energy ``moment * mu_B * |B|`` of a field in gauss, in energy units.

    ``moment_bohr`` is ``m_F g_F`` (1 for the 87Rb |F=2, m_F=2> state).
    """
    joules = moment_bohr * BOHR_MAGNETON * GAUSS * b_gauss
    return joules / (const.k * ENERGY_UNIT_NK * 1e-9)
