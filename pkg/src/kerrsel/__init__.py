"""Selective control of two coupled Kerr-nonlinear oscillators."""
from .hilbert import (KetLabel, SystemParams, Truncation, build_free_hamiltonian,
                      build_interaction, fig3_params, fig5_params, mhz, to_mhz)
from .spectrum import DegeneracyError, Kind, Transition, bs, tms
from .evolve import EvolutionError, NoiseParams, SimResult
from .protocols import (ProtocolSpec, PulseStep, fock4_protocol, fock_ladder_protocol,
                        noon_protocol, run_protocol)

__all__ = ["KetLabel", "SystemParams", "Truncation", "build_free_hamiltonian", "build_interaction",
           "fig3_params", "fig5_params", "mhz", "to_mhz", "DegeneracyError", "Kind", "Transition",
           "bs", "tms", "EvolutionError", "NoiseParams", "SimResult", "ProtocolSpec", "PulseStep",
           "fock4_protocol", "fock_ladder_protocol", "noon_protocol", "run_protocol"]
__version__ = "0.1.0"
