"""Matter-wave scattering and cloak design for layered effective-mass nanoparticles."""

__version__ = "0.1.0"
