"""Monte Carlo toolkit for Coulomb and Riesz gases conditioned outside an annulus."""

from coulomblab.geometry import parse_event, parse_region
from coulomblab.model import (
    Configuration,
    FrozenExterior,
    GasParams,
    KernelSpec,
    PotentialSpec,
    conditional_hamiltonian,
    energy_delta_move,
    hamiltonian,
)
from coulomblab.sampler import ChainConfig, ConditionalGas, FreeGas, init_chain, run_chain, run_ensemble

__version__ = "0.1.0"
