from __future__ import annotations

import numpy as np
import pytest

from fsebound import ed, improved_pbc_bound, parse_model, tfim_config

T_GRID = np.linspace(0.0, 4.0, 400)
L_REF = 17


@pytest.fixture(scope="session")
def tfim_grid():
    return T_GRID


@pytest.fixture(scope="session")
def tfim_reference():
    """ED series and improved bound for the TFIM reference ring (J = h = 1)."""
    model = parse_model(tfim_config(1.0, 1.0, L_REF, "pbc"))
    vals, errs, _ = ed.run_series(model, L_REF, T_GRID)
    bound = improved_pbc_bound(model, L_REF, T_GRID).values
    return {"L": L_REF, "values": vals, "errors": errs, "bound": bound}


@pytest.fixture(scope="session")
def tfim_runs(tfim_reference):
    """ED series and improved bounds for the smaller TFIM rings."""
    out = {}
    for L in (5, 7, 9, 11, 13):
        model = parse_model(tfim_config(1.0, 1.0, L, "pbc"))
        vals, errs, _ = ed.run_series(model, L, T_GRID)
        out[L] = {"values": vals, "errors": errs,
                  "bound": improved_pbc_bound(model, L, T_GRID).values}
    return out
