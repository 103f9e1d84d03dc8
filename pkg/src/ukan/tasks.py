"""Dataset generators, task losses, and metrics."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DomainError, FormatError
from .tensor import Tensor


@dataclass
class Dataset:
    inputs: np.ndarray            # [n, d]
    targets: np.ndarray           # [n, d'] floats or [n] integer labels
    split: str = "train"

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ConfigError("input/target row counts differ")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def bessel_j0(x: float) -> float:
    """J0 via (1/pi) * integral_0^pi cos(x sin t) dt, composite Simpson with
    the panel count scaled to |x| so the oscillatory integrand stays resolved."""
    if not math.isfinite(x):
        raise DomainError(f"non-finite argument {x}")
    panels = 64 + 8 * math.ceil(abs(x))
    theta = np.linspace(0.0, math.pi, 2 * panels + 1)
    f = np.cos(x * np.sin(theta))
    h = math.pi / (2 * panels)
    simpson = f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()
    return float(simpson * h / 3.0 / math.pi)


_REGRESSION_DIMS = {"I": 2, "II": 2, "III": 16}


def regression_target(task: str, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    if task == "I":
        j0 = np.array([bessel_j0(v) for v in 20.0 * x[:, 0]])
        y = np.exp(j0 + x[:, 1] ** 2)
    elif task == "II":
        y = np.exp(np.sin(np.pi * x[:, 0]) + x[:, 1] ** 2)
    elif task == "III":
        i = np.arange(16)
        y = np.exp(np.sin((4.0 * i / 15.0 + 1.0) * np.pi * x).sum(axis=1) / 15.0)
    else:
        raise ConfigError(f"unknown regression task {task!r}")
    return y[:, None]


def gen_regression(task: str, n: int, seed: int, split: str = "train") -> Dataset:
    if task not in _REGRESSION_DIMS:
        raise ConfigError(f"unknown regression task {task!r}")
    if n < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, (n, _REGRESSION_DIMS[task]))
    return Dataset(inputs=x, targets=regression_target(task, x), split=split)


def gen_moons(n: int, noise_sd: float, seed: int, split: str = "train") -> Dataset:
    """Two interleaving half-circles, balanced classes."""
    if n % 2 != 0:
        raise ConfigError(f"sample count must be even, got {n}")
    rng = np.random.default_rng(seed)
    half = n // 2
    phi0 = rng.uniform(0.0, np.pi, half)
    phi1 = rng.uniform(0.0, np.pi, half)
    pts = np.concatenate([
        np.stack([np.cos(phi0), np.sin(phi0)], axis=1),
        np.stack([1.0 - np.cos(phi1), 0.5 - np.sin(phi1)], axis=1),
    ])
    if noise_sd:
        pts = pts + rng.normal(0.0, noise_sd, pts.shape)
    labels = np.concatenate([np.zeros(half, np.int64), np.ones(half, np.int64)])
    perm = rng.permutation(n)
    return Dataset(inputs=pts[perm], targets=labels[perm], split=split)


def _read_idx_header(data: bytes, path: str, expect_magic: int, ndim: int):
    if len(data) < 4 * (1 + ndim):
        raise FormatError(f"{path}: truncated header at byte {len(data)}")
    magic = struct.unpack(">i", data[:4])[0]
    if magic != expect_magic:
        raise FormatError(f"{path}: bad magic {magic} at byte 0, expected {expect_magic}")
    dims = struct.unpack(f">{ndim}i", data[4:4 * (1 + ndim)])
    return dims, 4 * (1 + ndim)


def load_mnist_idx(images_path: str, labels_path: str) -> Dataset:
    """Read big-endian IDX image/label files. Pixels stay on the raw 0-255
    scale (no normalization)."""
    with open(images_path, "rb") as fh:
        img_data = fh.read()
    with open(labels_path, "rb") as fh:
        lab_data = fh.read()
    (n, rows, cols), off = _read_idx_header(img_data, images_path, 2051, 3)
    expected = off + n * rows * cols
    if len(img_data) != expected:
        raise FormatError(f"{images_path}: expected {expected} bytes, got {len(img_data)} (payload at byte {off})")
    (n_lab,), loff = _read_idx_header(lab_data, labels_path, 2049, 1)
    if len(lab_data) != loff + n_lab:
        raise FormatError(f"{labels_path}: expected {loff + n_lab} bytes, got {len(lab_data)} (payload at byte {loff})")
    if n != n_lab:
        raise FormatError(f"image count {n} != label count {n_lab}")
    images = np.frombuffer(img_data, np.uint8, offset=off).astype(np.float64).reshape(n, rows * cols)
    labels = np.frombuffer(lab_data, np.uint8, offset=loff).astype(np.int64)
    return Dataset(inputs=images, targets=labels)


def write_mnist_idx(images_path: str, labels_path: str, images: np.ndarray, labels: np.ndarray):
    """Inverse of load_mnist_idx, for round-trip tests and fixtures."""
    n, d = images.shape
    side = int(round(math.sqrt(d)))
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4i", 2051, n, side, side))
        fh.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2i", 2049, n))
        fh.write(labels.astype(np.uint8).tobytes())


@dataclass(frozen=True)
class PinnProblem:
    """Logistic growth df/dt = R f (1 - f) with f(0) = 0.5."""
    growth_rate: float = 1.0
    t_lo: float = -5.0
    t_hi: float = 5.0
    n_collocation: int = 128

    def __post_init__(self):
        if not (self.t_lo < self.t_hi and self.n_collocation >= 1):
            raise ConfigError("need t_lo < t_hi and at least one collocation point")

    def analytic(self, t: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.growth_rate * t))

    def sample_collocation(self, rng) -> np.ndarray:
        return rng.uniform(self.t_lo, self.t_hi, (self.n_collocation, 1))


def pinn_loss(model, problem: PinnProblem, collocation: np.ndarray) -> Tensor:
    """Squared ODE residual at collocation points plus the boundary penalty.
    df/dt comes from the forward tangent channel, so the loss stays
    differentiable in the model parameters."""
    t = T.seed_tangent(T.as_tensor(collocation), np.ones_like(collocation))
    fv = model(t)
    if fv.values.ndim != 2 or fv.values.shape[1] != 1:
        raise ConfigError(f"model must map scalar t to scalar f, got output {fv.values.shape}")
    df = fv.tangent
    r = problem.growth_rate
    residual = T.sub(df, T.mul(r, T.mul(fv, T.sub(1.0, fv))))
    f0 = model(T.as_tensor([[0.0]]))
    boundary = T.square(T.sub(f0, 0.5))
    return T.add(T.mean_all(T.square(residual)), T.mean_all(boundary))


def metric(kind: str, pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.size == 0:
        raise DomainError("empty prediction batch")
    if kind == "rmse":
        return float(np.sqrt(np.mean((pred - target) ** 2)))
    if kind == "accuracy":
        return float(np.mean(pred.argmax(axis=1) == target))
    if kind == "mse_vs_analytic":
        return float(np.mean((pred - target) ** 2))
    raise ConfigError(f"unknown metric {kind!r}")
