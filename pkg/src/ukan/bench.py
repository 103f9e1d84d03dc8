"""Grid-size / spline-order microbenchmark: matrix-form layer vs the naive
full-grid layer on identical data. Emits one CSV row per (impl, k, G) point."""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import init_layer, kan_forward, naive_kan_forward

BENCH_HEADER = "impl,k,G,d_in,d_out,batch,forward_s,backward_s,total_s,peak_mem_bytes"


@dataclass
class BenchRow:
    impl: str
    k: int
    G: int
    d_in: int
    d_out: int
    batch: int
    forward_s: float | None
    backward_s: float | None
    total_s: float | None
    peak_mem_bytes: int | None
    error: str = ""

    def csv(self) -> str:
        def fmt(v):
            return self.error if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v))
        return ",".join(fmt(v) for v in (self.impl, self.k, self.G, self.d_in, self.d_out,
                                         self.batch, self.forward_s, self.backward_s,
                                         self.total_s, self.peak_mem_bytes))


def _median_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _time_impl(impl: str, forward, layer, x, reps: int) -> BenchRow:
    base = BenchRow(impl, layer.k, layer.G, layer.d_in, layer.d_out, x.shape[0],
                    None, None, None, None)
    try:
        def fwd():
            forward(layer, x)

        def fwd_bwd():
            T.backward(T.sum_all(forward(layer, x)))

        fwd()  # warm-up, excluded
        tracemalloc.start()
        fwd_bwd()
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        f = _median_time(fwd, reps)
        total = _median_time(fwd_bwd, reps)
        base.forward_s = f
        base.backward_s = max(0.0, total - f)
        base.total_s = total
        base.peak_mem_bytes = int(peak)
    except MemoryError:
        tracemalloc.stop()
        base.error = "OOM"
    return base


def run_bench(orders, grids, batch: int, reps: int = 5, d_in: int = 32,
              d_out: int = 32, seed: int = 0,
              impls: tuple[str, ...] = ("matrix", "naive")) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    rows: list[BenchRow] = []
    for k in orders:
        for G in grids:
            layer = init_layer("kan", d_in, d_out, int(k), rng=rng,
                               g_min=-1.0, g_max=1.0, G=int(G))
            x = T.Tensor(rng.uniform(-1.0, 1.0, (batch, d_in)))
            # sanity gate: both arms must agree before any timing
            a = kan_forward(layer, x).values
            b = naive_kan_forward(layer, x).values
            err = float(np.max(np.abs(a - b)))
            if err > 1e-10:
                raise AssertionError(f"arm disagreement {err} at k={k}, G={G}")
            if "matrix" in impls:
                rows.append(_time_impl("matrix", kan_forward, layer, x, reps))
            if "naive" in impls:
                rows.append(_time_impl("naive", naive_kan_forward, layer, x, reps))
    return rows
