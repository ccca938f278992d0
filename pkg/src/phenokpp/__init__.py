"""Space/phenotype nonlocal Fisher-KPP: principal eigenvalues and dynamics."""

__version__ = "0.1.0"
