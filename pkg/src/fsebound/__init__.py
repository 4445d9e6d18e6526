"""Rigorous finite-size error bounds for quantum lattice dynamics."""
from __future__ import annotations

__version__ = "0.1.0"

from .model import (ConfigError, LatticeModel, LocalTerm, ModelError, PauliString,
                    fhm_config, parse_model, tfim_config)
from .series import (BoundCurve, improved_pbc_bound, simple_fse_bound, tfim_closed_form)

__all__ = [
    "BoundCurve", "ConfigError", "LatticeModel", "LocalTerm", "ModelError", "PauliString",
    "fhm_config", "improved_pbc_bound", "parse_model", "simple_fse_bound",
    "tfim_closed_form", "tfim_config", "__version__",
]
