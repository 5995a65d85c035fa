"""Entanglement and EPR-steering dynamics in small Bose-Hubbard chains.

Three routes to the same observables: closed-form non-interacting
solutions (:mod:`bhchain.analytic`), positive-P stochastic ensembles
(:mod:`bhchain.sde`) and exact small-N propagation (:mod:`bhchain.oracle`).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0+unknown"
