import os
import subprocess
import sys

SCRIPT = """
import numpy as np
from snoopbias import _accel, kernels, solvers
rng = np.random.default_rng(0)
x = rng.normal(size=(40, 5)); a = (np.arange(40) >= 20).astype(float); y = rng.normal(size=40)
print(_accel.backend(), kernels.lasso_path.__name__)
print(repr(float(solvers.contrast_matrix("ipw", x, a, y)[0, 2])))
"""


def _run(flag):
    env = dict(os.environ, SNOOPBIAS_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split("\n")


def test_flag_selects_fallback_and_results_agree():
    numba_out = _run("1")
    numpy_out = _run("0")
    assert numba_out[0] == "numba lasso_path_nb"
    assert numpy_out[0] == "numpy lasso_path_np"
    assert abs(float(numba_out[1]) - float(numpy_out[1])) < 1e-10
