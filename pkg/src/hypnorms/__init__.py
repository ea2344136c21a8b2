"""Norms of harmonic 1-forms on cusped hyperbolic 3-manifolds against the Thurston norm."""

__version__ = "0.1.0"
