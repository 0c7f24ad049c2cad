import os

# numba's OpenMP threading layer aborts any fork() performed after the first
# parallel kernel launch; the acceptance tests fork worker processes after
# kernel tests have run. The workqueue layer is fork-safe and equally fast on
# the small grams used here. Must be set before numba picks its layer.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
