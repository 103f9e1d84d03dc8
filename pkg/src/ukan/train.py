"""Training and evaluation harness shared by the CLI and the test suite."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import RunConfig
from .errors import UkanError
from .layers import Model, build_model
from .optim import AdamState, LrSchedule, adam_step, lr_at, sgd_step
from .tasks import (Dataset, PinnProblem, gen_moons, gen_regression,
                    load_mnist_idx, metric, pinn_loss)

CSV_HEADER = "epoch,lr,train_metric,val_metric,seconds"

_DEFAULT_SIZES = {  # (n_train, n_val)
    "regression_I": (10000, 2000),
    "regression_II": (10000, 2000),
    "regression_III": (50000, 10000),
    "moons": (1000, 1000),
}


class DivergedError(UkanError):
    """Training produced a non-finite loss."""


@dataclass
class TaskSetup:
    train: Dataset | None
    val: Dataset | None
    loss_kind: str          # mse | softmax_cross_entropy | pinn
    metric_kind: str        # rmse | accuracy | mse_vs_analytic
    pinn: PinnProblem | None = None
    input_scale: float = 1.0
    input_shift: float = 0.0

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.input_scale == 1.0 and self.input_shift == 0.0:
            return x
        return x * self.input_scale + self.input_shift


def build_task(cfg: RunConfig) -> TaskSetup:
    if cfg.task == "pinn":
        problem = PinnProblem(cfg.growth_rate, cfg.t_lo, cfg.t_hi, cfg.n_collocation)
        return TaskSetup(None, None, "pinn", "mse_vs_analytic", pinn=problem)
    if cfg.task == "mnist":
        train = load_mnist_idx(os.path.join(cfg.mnist_dir, "train-images-idx3-ubyte"),
                               os.path.join(cfg.mnist_dir, "train-labels-idx1-ubyte"))
        val = load_mnist_idx(os.path.join(cfg.mnist_dir, "t10k-images-idx3-ubyte"),
                             os.path.join(cfg.mnist_dir, "t10k-labels-idx1-ubyte"))
        setup = TaskSetup(train, val, "softmax_cross_entropy", "accuracy")
        if cfg.model == "kan":
            # Bounded grid wants inputs inside [g_min, g_max]; raw 0-255
            # intensities are rescaled onto it. The unbounded model takes
            # them as-is.
            setup.input_scale = (cfg.g_max - cfg.g_min) / 255.0
            setup.input_shift = cfg.g_min
        return setup
    n_train, n_val = _DEFAULT_SIZES[cfg.task]
    if cfg.n_train:
        n_train = cfg.n_train
    if cfg.n_val:
        n_val = cfg.n_val
    if cfg.task == "moons":
        train = gen_moons(n_train, cfg.noise_sd, cfg.seed, "train")
        val = gen_moons(n_val, cfg.noise_sd, cfg.seed + 1, "validation")
        return TaskSetup(train, val, "softmax_cross_entropy", "accuracy")
    task_id = cfg.task.split("_")[1]
    train = gen_regression(task_id, n_train, cfg.seed, "train")
    val = gen_regression(task_id, n_val, cfg.seed + 1, "validation")
    return TaskSetup(train, val, "mse", "rmse")


def build_model_from_config(cfg: RunConfig) -> Model:
    kw = {}
    if cfg.model == "kan":
        kw = {"g_min": cfg.g_min, "g_max": cfg.g_max, "G": cfg.grid_size}
    elif cfg.model == "ukan":
        kw = {"delta_g": cfg.delta_g, "d_pe": cfg.d_pe, "d_femb": cfg.d_femb,
              "d_hidden": cfg.d_hidden or None}
    return build_model(cfg.model, cfg.widths, cfg.degree, seed=cfg.seed, **kw)


def forward_batched(model: Model, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
    outs = [model(T.as_tensor(x[i:i + chunk])).values for i in range(0, len(x), chunk)]
    return np.concatenate(outs)


def eval_metric(model: Model, setup: TaskSetup, dataset: Dataset) -> float:
    pred = forward_batched(model, setup.transform(dataset.inputs))
    return metric(setup.metric_kind, pred, dataset.targets)


def eval_pinn_mse(model: Model, problem: PinnProblem, n_grid: int = 1001) -> float:
    t = np.linspace(problem.t_lo, problem.t_hi, n_grid)[:, None]
    pred = forward_batched(model, t)
    return metric("mse_vs_analytic", pred, problem.analytic(t))


@dataclass
class TrainResult:
    model: Model
    rows: list[str]
    final_train: float
    final_val: float
    epochs_run: int
    optimizer_state: AdamState | None


def train(cfg: RunConfig, model: Model | None = None, log=None,
          early_stop_patience: int = 0) -> TrainResult:
    """Run the configured training loop. With ``early_stop_patience`` > 0,
    stop once the validation metric has not improved for that many
    consecutive evaluations (improvement = higher for accuracy, lower
    otherwise)."""
    setup = build_task(cfg)
    if model is None:
        model = build_model_from_config(cfg)
    params = list(model.parameters().values())
    schedule = LrSchedule(cfg.lr, cfg.decay_rate, cfg.min_lr)
    adam = AdamState() if cfg.optimizer == "adam" else None
    data_rng = np.random.default_rng(cfg.seed + 1000003)

    if setup.train is not None:
        x_all = setup.transform(setup.train.inputs)
        y_all = setup.train.targets

    rows: list[str] = []
    train_m = val_m = float("nan")
    best_val = None
    stale = 0
    epochs_run = 0
    t0 = time.perf_counter()

    def step(loss: T.Tensor, lr: float):
        if not np.isfinite(loss.values):
            raise DivergedError(f"non-finite loss {loss.values}")
        T.backward(loss)
        grads = [p.grad for p in params]
        if cfg.optimizer == "adam":
            adam_step(params, grads, adam, lr, weight_decay=cfg.weight_decay)
        else:
            sgd_step(params, grads, lr)

    for epoch in range(cfg.epochs):
        lr = lr_at(schedule, epoch)
        if setup.loss_kind == "pinn":
            batch = setup.pinn.sample_collocation(data_rng)
            step(pinn_loss(model.forward, setup.pinn, batch), lr)
        elif cfg.batch_size and cfg.batch_size < len(x_all):
            order = data_rng.permutation(len(x_all))
            for s in range(0, len(order), cfg.batch_size):
                sel = order[s:s + cfg.batch_size]
                pred = model(T.as_tensor(x_all[sel]))
                step(T.reduce_loss(setup.loss_kind, pred, y_all[sel]), lr)
        else:
            pred = model(T.as_tensor(x_all))
            step(T.reduce_loss(setup.loss_kind, pred, y_all), lr)

        epochs_run = epoch + 1
        if epochs_run % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            if setup.loss_kind == "pinn":
                train_m = val_m = eval_pinn_mse(model, setup.pinn)
            else:
                train_m = eval_metric(model, setup, setup.train)
                val_m = eval_metric(model, setup, setup.val)
            row = f"{epochs_run},{lr:.10g},{train_m:.10g},{val_m:.10g},{time.perf_counter() - t0:.3f}"
            rows.append(row)
            if log:
                log(row)
            if early_stop_patience:
                improved = (best_val is None or
                            (val_m > best_val if setup.metric_kind == "accuracy"
                             else val_m < best_val))
                if improved:
                    best_val = val_m
                    stale = 0
                else:
                    stale += 1
                    if stale >= early_stop_patience:
                        break

    return TrainResult(model, rows, train_m, val_m, epochs_run, adam)
