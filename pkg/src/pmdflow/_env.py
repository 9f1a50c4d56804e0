"""Pin BLAS/OpenMP thread pools before numpy is imported.

Bitwise-reproducible artifacts require single-threaded kernels: threaded
reductions change summation order between runs. Importing this module first
(it is the first import in the package __init__) makes the pin effective for
any process that starts with `import pmdflow`.
"""

import os

for _var in (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
