"""Simulation toolkit for dissipative Rydberg pairs and chains.

Modules: ``operators`` (bases, operators, eigensolver), ``models``
(Hamiltonian and collapse-operator builders), ``dynamics`` (Lindblad,
non-Hermitian and trajectory engines), ``spectra`` (sweeps and exceptional
points), ``measurement`` (SPAM, shots, fits) and ``cli``.
"""

__version__ = "0.1.0"

from . import dynamics, measurement, models, operators, spectra  # noqa: E402

__all__ = ["operators", "models", "dynamics", "spectra", "measurement", "__version__"]
