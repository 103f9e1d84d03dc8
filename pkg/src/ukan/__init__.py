"""Spline-network library: matrix-form B-spline evaluation, bounded and
unbounded Kolmogorov-Arnold layers, and a training/benchmark harness."""

from .bspline import (BasisMatrix, SegmentLocation, basis_matrix, basis_row,
                      cox_de_boor_oracle, eval_segment, locate)
from .layers import (KanLayer, LinearLayer, Model, UkanLayer, build_model,
                     cg_coefficients, init_layer, kan_forward,
                     naive_kan_forward, positional_encoding, select_window,
                     ukan_forward)
from .optim import AdamState, LrSchedule, adam_step, lr_at, sgd_step
from .tasks import (Dataset, PinnProblem, bessel_j0, gen_moons,
                    gen_regression, load_mnist_idx, metric, pinn_loss)
from .tensor import (Tensor, backward, concat_last, gather_rows, matmul,
                     reduce_loss, seed_tangent, silu)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
