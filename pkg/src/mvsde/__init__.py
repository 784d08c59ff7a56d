"""Particle simulation and limit-theorem experiments for multivalued McKean-Vlasov SDEs."""

__version__ = "0.1.0"
