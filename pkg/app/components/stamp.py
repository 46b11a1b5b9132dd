import platform

import numpy as np
import pandas as pd
import scipy

from app.config import APP_NAME, ENERGY_MATCH_TOL, ORACLE_TOL, VERSION


def environment_stamp(newton_tol):
    """Version and tolerance block written into every result file."""
    return {
        "app": APP_NAME,
        "version": VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "tolerances": {
            "newton_tol": newton_tol,
            "oracle_tol": ORACLE_TOL,
            "energy_match_tol": ENERGY_MATCH_TOL,
        },
    }


def banner():
    return f"{APP_NAME} {VERSION}"
