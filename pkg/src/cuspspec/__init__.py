"""Numerical laboratory for singular-value asymptotics of coalescence-cusp
integral operators."""

__version__ = "0.1.0"
