"""Trajectory simulator for two-body guidance dynamics with retarded (light-speed) interactions.

Modules, bottom up:

* ``quantum_state``: the stationary two-body wavefunction, phase gradients and quantum potential.
* ``retardation``: trajectory histories and retarded-time solving.
* ``dynamics``: instantaneous, exact-retarded and first-order guidance laws and their integration.
* ``reduced_model``: the equal-mass planar reduction and its closed-form solution.
* ``ensemble``: Monte Carlo ensembles, transport and density comparison.
* ``energy``: energy bookkeeping with instantaneous and retarded potentials.
* ``experiment_runner`` / ``cli``: configured experiments and the command line.
"""

__version__ = "0.1.0"
