"""Numerical laboratory for Ruelle resonances of model hyperbolic flows.

Submodules
----------
dc_weights       Denjoy-Carleman weights, seminorms and Fourier decay checks.
cones            Frequency cones, cone systems and hyperbolicity predicates.
multiplier_bank  Littlewood-Paley bands, anisotropic weights and norms.
models           Circle expanding maps and toral suspensions with exact orbits.
transfer         Fourier truncations of transfer and Koopman operators.
determinant      Dynamical determinants, Hadamard factors, order estimates.
trace_check      Resonance side vs orbit side of the trace formula.
cli              The ``ruelle-lab`` command line runner.
"""

__version__ = "0.1.0"
