"""Analytic GAN minimax games, Sobolev proximal objectives and equilibrium checks."""

__version__ = "0.1.0"
