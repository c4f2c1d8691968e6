"""MAFN: attention fusion network for RUL prognostics under discrete operating conditions."""

__version__ = "0.1.0"
