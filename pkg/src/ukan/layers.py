"""Spline network layers.

Three layer kinds share one evaluation backbone (basis features x gathered
coefficient windows x per-edge scales):

* ``KanLayer``    - bounded grid, coefficients stored as a parameter table.
* ``UkanLayer``   - unbounded grid, coefficients produced on demand by a
  small generator network from (feature embedding, grid-group encoding).
* ``naive_kan_forward`` - full-grid reference whose cost grows with the grid
  size; kept as the slow arm of the benchmark and as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .bspline import basis_matrix
from .errors import ConfigError, DimensionError, DomainError
from .tensor import Tensor

# ---------------------------------------------------------------------------
# fused graph ops


def _basis_values(u: np.ndarray, k: int, d: int) -> np.ndarray:
    """Rows of U^(d) . M for a batch of in-cell positions; shape u.shape + (K,)."""
    if d > k:
        return np.zeros(u.shape + (k + 1,))
    M = basis_matrix(k).floats
    U = np.zeros(u.shape + (k + 1,))
    for j in range(d, k + 1):
        U[..., j] = math.perm(j, d) * u ** (j - d)
    return U @ M


def basis_features(u: Tensor, k: int, d: int = 0) -> Tensor:
    """Per-element spline basis weights (derivative order d) of u in [0,1)."""
    v = _basis_values(u.values, k, d)

    def bwd(g, acc):
        dv = _basis_values(u.values, k, d + 1)
        acc(u, (g * dv).sum(axis=-1))

    out = T.make_node(v, (u,), bwd)
    if T.tangent_active(u):
        def build():
            du = basis_features(u, k, d + 1)
            return T.mul(du, T.reshape(u.tangent, u.shape + (1,)))
        T.attach_tangent(out, build)
    return out


def span_gather(table: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather windows[b,f,j,:] = table[rows[b,f,j], cols[b,f,j], :] from a
    [P, C, d_out] coefficient table. The output-dim-last layout keeps each
    gathered slice contiguous, which is what makes the matrix arm's cost
    independent of the grid size in practice. Backward scatter-adds
    (duplicates accumulate)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    v = table.values[rows, cols]

    def bwd(g, acc):
        gt = np.zeros_like(table.values)
        np.add.at(gt, (rows, cols), g)
        acc(table, gt)

    out = T.make_node(v, (table,), bwd)
    if T.tangent_active(table):
        T.attach_tangent(out, lambda: span_gather(table.tangent, rows, cols))
    return out


def edge_combine(basis: Tensor, windows: Tensor, scale: Tensor) -> Tensor:
    """y[b,o] = sum_f scale[f,o] * sum_j basis[b,f,j] * windows[b,f,j,o]."""
    bv, wv, sv = basis.values, windows.values, scale.values
    tmp = np.einsum("bfj,bfjo->bfo", bv, wv)
    y = np.einsum("bfo,fo->bo", tmp, sv)

    def bwd(g, acc):
        dtmp = g[:, None, :] * sv[None, :, :]
        acc(scale, np.einsum("bo,bfo->fo", g, tmp))
        acc(basis, np.einsum("bfo,bfjo->bfj", dtmp, wv))
        acc(windows, bv[..., None] * dtmp[:, :, None, :])

    out = T.make_node(y, (basis, windows, scale), bwd)
    if T.tangent_active(basis, windows, scale):
        def build():
            parts = []
            if basis.tangent is not None:
                parts.append(edge_combine(basis.tangent, windows, scale))
            if windows.tangent is not None:
                parts.append(edge_combine(basis, windows.tangent, scale))
            if scale.tangent is not None:
                parts.append(edge_combine(basis, windows, scale.tangent))
            total = parts[0]
            for p in parts[1:]:
                total = T.add(total, p)
            return total
        T.attach_tangent(out, build)
    return out


# ---------------------------------------------------------------------------
# grid-group machinery


def positional_encoding(g, d_pe: int) -> np.ndarray:
    """Sinusoidal encoding of (possibly negative) group indices; not trainable."""
    if d_pe % 2 != 0:
        raise ConfigError(f"encoding width must be even, got {d_pe}")
    g = np.asarray(g, dtype=np.float64)
    half = d_pe // 2
    freqs = 10000.0 ** (-2.0 * np.arange(half) / d_pe)
    ang = g[..., None] * freqs
    pe = np.empty(g.shape + (d_pe,))
    pe[..., 0::2] = np.sin(ang)
    pe[..., 1::2] = np.cos(ang)
    return pe


def select_window(prev, nxt, g_id: int, K: int) -> np.ndarray:
    """Pick the K coefficients cell ``g_id`` consumes out of the 2K produced
    by its group pair, starting at offset g_id mod K (Euclidean)."""
    i = g_id % K
    both = np.concatenate([np.asarray(prev), np.asarray(nxt)], axis=-1)
    return both[..., i:i + K]


# ---------------------------------------------------------------------------
# layers


@dataclass
class KanLayer:
    d_in: int
    d_out: int
    k: int
    g_min: float
    g_max: float
    G: int
    # per-edge coefficient windows; stored [d_in, G+k, d_out] for gather locality
    coeffs: Tensor
    scale: Tensor    # [d_in, d_out]
    base_weight: Tensor | None = None  # optional silu residual branch

    def __post_init__(self):
        if not (self.g_min < self.g_max and self.G >= 1):
            raise ConfigError("grid must satisfy g_min < g_max and G >= 1")
        if self.coeffs.shape != (self.d_in, self.G + self.k, self.d_out):
            raise ConfigError(f"coefficient table must be [d_in, G+k, d_out], got {self.coeffs.shape}")

    @property
    def delta_g(self) -> float:
        return (self.g_max - self.g_min) / self.G

    def parameters(self) -> dict[str, Tensor]:
        p = {"coeffs": self.coeffs, "scale": self.scale}
        if self.base_weight is not None:
            p["base_weight"] = self.base_weight
        return p

    def forward(self, x: Tensor) -> Tensor:
        return kan_forward(self, x)

    __call__ = forward


@dataclass
class UkanLayer:
    d_in: int
    d_out: int
    k: int
    delta_g: float
    d_pe: int
    d_femb: int
    feature_embedding: Tensor  # [d_in, d_femb]
    cg_w1: Tensor              # [d_femb + d_pe, d_hidden]
    cg_b1: Tensor              # [d_hidden]
    cg_w2: Tensor              # [d_hidden, d_out*K]
    cg_b2: Tensor              # [d_out*K]
    scale: Tensor              # [d_in, d_out]

    def __post_init__(self):
        if self.d_pe % 2 != 0:
            raise ConfigError(f"encoding width must be even, got {self.d_pe}")
        if self.delta_g <= 0:
            raise ConfigError(f"grid spacing must be positive, got {self.delta_g}")
        if self.cg_w2.shape[1] != self.d_out * (self.k + 1):
            raise ConfigError("generator output width must be d_out*(k+1)")

    @property
    def K(self) -> int:
        return self.k + 1

    def parameters(self) -> dict[str, Tensor]:
        return {
            "feature_embedding": self.feature_embedding,
            "cg_w1": self.cg_w1,
            "cg_b1": self.cg_b1,
            "cg_w2": self.cg_w2,
            "cg_b2": self.cg_b2,
            "scale": self.scale,
        }

    def forward(self, x: Tensor) -> Tensor:
        return ukan_forward(self, x)

    __call__ = forward


@dataclass
class LinearLayer:
    d_in: int
    d_out: int
    weight: Tensor  # [d_in, d_out]
    bias: Tensor    # [d_out]

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)

    __call__ = forward


def _cg_eval(layer: UkanLayer, keys: np.ndarray) -> Tensor:
    """Run the coefficient generator on encoded (feature, group) keys.
    Returns a [n, K, d_out] tensor of group coefficients (slot-major, to
    match the span_gather layout)."""
    f_idx = keys % layer.d_in
    groups = keys // layer.d_in
    emb = T.gather_rows(layer.feature_embedding, f_idx)
    pe = positional_encoding(groups, layer.d_pe)
    inp = T.concat_last(emb, T.as_tensor(pe))
    hidden = T.silu(T.add(T.matmul(inp, layer.cg_w1), layer.cg_b1))
    outc = T.add(T.matmul(hidden, layer.cg_w2), layer.cg_b2)
    return T.reshape(outc, (keys.shape[0], layer.K, layer.d_out))


def cg_coefficients(layer: UkanLayer, f: int, g: int) -> Tensor:
    """Coefficients of one grid group, shape [d_out, K]."""
    if not (0 <= f < layer.d_in):
        raise IndexError(f"feature index {f} out of range [0, {layer.d_in})")
    key = np.array([g * layer.d_in + f], dtype=np.int64)
    return T.swap_last2(T.reshape(_cg_eval(layer, key), (layer.K, layer.d_out)))


def ukan_forward(layer: UkanLayer, x: Tensor, dedup: bool = True) -> Tensor:
    if x.values.ndim != 2 or x.shape[1] != layer.d_in:
        raise DimensionError(f"expected [batch, {layer.d_in}] input, got {x.shape}")
    if not np.isfinite(x.values).all():
        raise DomainError("non-finite input")
    B, f = x.shape
    K = layer.K
    inv_dg = 1.0 / layer.delta_g

    g_id = np.floor(x.values * inv_dg).astype(np.int64)
    u = T.sub(T.mul(x, inv_dg), g_id.astype(np.float64))

    group = g_id // K          # Euclidean: negative cells map symmetrically
    offset = g_id % K
    feat = np.broadcast_to(np.arange(f, dtype=np.int64)[None, :], (B, f))
    key_prev = group * f + feat
    key_next = (group + 1) * f + feat

    n = B * f
    all_keys = np.concatenate([key_prev.ravel(), key_next.ravel()])
    if dedup:
        uniq, inverse = np.unique(all_keys, return_inverse=True)
        coeff_table = _cg_eval(layer, uniq)
        idx_prev = inverse[:n].reshape(B, f)
        idx_next = inverse[n:].reshape(B, f)
    else:
        coeff_table = _cg_eval(layer, all_keys)
        idx_prev = np.arange(n).reshape(B, f)
        idx_next = np.arange(n, 2 * n).reshape(B, f)

    j = np.arange(K, dtype=np.int64)
    col = offset[..., None] + j            # position within the 2K span
    rows = np.where(col < K, idx_prev[..., None], idx_next[..., None])
    cols = col % K

    windows = span_gather(coeff_table, rows, cols)
    basis = basis_features(u, layer.k)
    return edge_combine(basis, windows, layer.scale)


def _kan_locate(layer: KanLayer, x: Tensor):
    """Clamp into the grid and split into (cell indices, in-cell position)."""
    hi = np.nextafter(layer.g_max, layer.g_min)
    xc = T.clamp(x, layer.g_min, hi)
    dg = layer.delta_g
    cell = np.clip(np.floor((xc.values - layer.g_min) / dg), 0, layer.G - 1).astype(np.int64)
    u = T.sub(T.mul(xc, 1.0 / dg), cell.astype(np.float64) + layer.g_min / dg)
    return xc, cell, u


def kan_forward(layer: KanLayer, x: Tensor) -> Tensor:
    if x.values.ndim != 2 or x.shape[1] != layer.d_in:
        raise DimensionError(f"expected [batch, {layer.d_in}] input, got {x.shape}")
    B, f = x.shape
    K = layer.k + 1
    xc, cell, u = _kan_locate(layer, x)

    rows = np.broadcast_to(np.arange(f, dtype=np.int64)[None, :, None], (B, f, K))
    cols = cell[..., None] + np.arange(K, dtype=np.int64)
    windows = span_gather(layer.coeffs, rows, cols)
    basis = basis_features(u, layer.k)
    y = edge_combine(basis, windows, layer.scale)
    if layer.base_weight is not None:
        y = T.add(y, T.matmul(T.silu(x), layer.base_weight))
    return y


_NAIVE_CHUNK = 512  # [B, f, G+k] recursion buffers get large at big G


def _naive_bases(xv: np.ndarray, knots: np.ndarray, k: int) -> np.ndarray:
    """All G+k basis values per input by the vectorized Cox-de Boor
    recursion over the whole knot set: [B, f, G+k], slot s holds basis
    index s-k."""
    xe = xv[..., None]
    bases = ((xe >= knots[:-1]) & (xe < knots[1:])).astype(np.float64)
    for kk in range(1, k + 1):
        left = (xe - knots[: -kk - 1]) / (knots[kk:-1] - knots[: -kk - 1]) * bases[..., :-1]
        right = (knots[kk + 1:] - xe) / (knots[kk + 1:] - knots[1:-kk]) * bases[..., 1:]
        bases = left + right
    return bases


def naive_kan_forward(layer: KanLayer, x: Tensor) -> Tensor:
    """Same contract as kan_forward, computed the slow way: all G+k basis
    functions per input dotted with the full coefficient table. The batch
    is processed in chunks and the basis values are recomputed in backward,
    keeping peak memory bounded. Backward covers the parameters; input
    gradients are not needed on this arm."""
    if x.values.ndim != 2 or x.shape[1] != layer.d_in:
        raise DimensionError(f"expected [batch, {layer.d_in}] input, got {x.shape}")
    k, G, dg = layer.k, layer.G, layer.delta_g
    hi = np.nextafter(layer.g_max, layer.g_min)
    xv = np.clip(x.values, layer.g_min, hi)
    knots = layer.g_min + np.arange(-k, G + k + 1) * dg
    B = xv.shape[0]
    spans = [slice(s, s + _NAIVE_CHUNK) for s in range(0, B, _NAIVE_CHUNK)]

    tmp = np.empty((B, layer.d_in, layer.d_out))
    for sl in spans:
        bases = _naive_bases(xv[sl], knots, k)
        np.einsum("bfs,fso->bfo", bases, layer.coeffs.values, out=tmp[sl])
    y = np.einsum("bfo,fo->bo", tmp, layer.scale.values)

    def bwd(g, acc):
        acc(layer.scale, np.einsum("bo,bfo->fo", g, tmp))
        dcoeffs = np.zeros_like(layer.coeffs.values)
        for sl in spans:
            bases = _naive_bases(xv[sl], knots, k)
            dtmp = g[sl, None, :] * layer.scale.values[None, :, :]
            dcoeffs += np.einsum("bfo,bfs->fso", dtmp, bases)
        acc(layer.coeffs, dcoeffs)

    out = T.make_node(y, (layer.coeffs, layer.scale), bwd)
    if layer.base_weight is not None:
        out = T.add(out, T.matmul(T.silu(x), layer.base_weight))
    return out


# ---------------------------------------------------------------------------
# initialization and model stacking


def init_layer(kind: str, d_in: int, d_out: int, k: int = 3, *, rng=None, seed=None,
               g_min: float = -1.0, g_max: float = 1.0, G: int = 8,
               delta_g: float = 1.0, d_pe: int = 8, d_femb: int = 8,
               d_hidden: int | None = None, base: bool = False):
    if d_in < 1 or d_out < 1 or k < 0:
        raise ConfigError(f"invalid dims d_in={d_in}, d_out={d_out}, k={k}")
    if rng is None:
        rng = np.random.default_rng(seed)
    K = k + 1
    if kind == "kan":
        coeffs = T.parameter(rng.normal(0.0, 0.1 / math.sqrt(d_in), (d_in, G + k, d_out)))
        scale = T.parameter(np.ones((d_in, d_out)))
        base_w = T.parameter(rng.normal(0.0, 0.1 / math.sqrt(d_in), (d_in, d_out))) if base else None
        return KanLayer(d_in, d_out, k, g_min, g_max, G, coeffs, scale, base_w)
    if kind == "ukan":
        if d_hidden is None:
            d_hidden = 2 * (d_pe + d_femb)
        d_cg_in = d_femb + d_pe
        return UkanLayer(
            d_in, d_out, k, delta_g, d_pe, d_femb,
            feature_embedding=T.parameter(rng.normal(0.0, 1.0, (d_in, d_femb))),
            cg_w1=T.parameter(rng.normal(0.0, 0.1 / math.sqrt(d_cg_in), (d_cg_in, d_hidden))),
            cg_b1=T.parameter(np.zeros(d_hidden)),
            cg_w2=T.parameter(rng.normal(0.0, 0.1 / math.sqrt(d_hidden), (d_hidden, d_out * K))),
            cg_b2=T.parameter(np.zeros(d_out * K)),
            scale=T.parameter(np.ones((d_in, d_out))),
        )
    if kind == "linear":
        return LinearLayer(
            d_in, d_out,
            weight=T.parameter(rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_in, d_out))),
            bias=T.parameter(np.zeros(d_out)),
        )
    raise ConfigError(f"unknown layer kind {kind!r}")


@dataclass
class Model:
    """A stack of layers. Spline layers connect directly; for 'mlp' a SiLU is
    inserted between linear layers."""
    kind: str
    layers: list = field(default_factory=list)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if self.kind == "mlp" and i < len(self.layers) - 1:
                h = T.silu(h)
        return h

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                out[f"layer{i}.{name}"] = p
        return out


def build_model(kind: str, widths: list[int], k: int = 3, *, seed=None, **layer_kw) -> Model:
    if len(widths) < 2:
        raise ConfigError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    layer_kind = "linear" if kind == "mlp" else kind
    layers = [
        init_layer(layer_kind, widths[i], widths[i + 1], k, rng=rng, **layer_kw)
        for i in range(len(widths) - 1)
    ]
    return Model(kind=kind, layers=layers)
