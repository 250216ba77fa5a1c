"""nflab: a numpy laboratory for coordinate-network training behavior.

Submodules
----------
rng          counter-based seeded sampling with splittable streams
linalg       dense float64 kernels: matmul, jacobi SVD, power iteration
activations  sine / sinc / gaussian / gabor / relu / identity families
network      dense nets: initialization schemes, forward, backprop
optim        full-batch gradient descent and adam, PSNR targets
tasks        curve / image / occupancy dataset builders and metrics
image        portable pixmap IO, procedural images, SSIM
diagnostics  spectral-norm laws, sigma_min growth, init-loss bounds
scaling      minimal-width searches and parameter-scaling sweeps
cli          command-line front end (also via the `nflab` script)
"""

__version__ = "0.1.0"

from .rng import RngState  # noqa: F401
