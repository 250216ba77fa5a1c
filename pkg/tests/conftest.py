import os

# Pin BLAS threading before numpy loads anywhere, so reductions have a fixed
# operation order and results stay bitwise stable across process layouts.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
