"""GNN models on top of the tape autodiff and the sparse kernels.

Every forward accepts either a whole :class:`Graph` (already passed through
the model's ``preprocess``) or a list of sampled :class:`Block` objects
ordered from the output layer back to the input layer. In block mode the
feature matrix holds the rows of ``blocks[-1].src_nodes``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .graph import Block, Graph, add_self_loops, sym_norm


class ModelError(ValueError):
    pass


@dataclass
class ModelSpec:
    name: str
    in_dim: int
    out_dim: int
    hidden: int = 64
    num_layers: int = 2
    dropout: float = 0.5
    heads: int = 8
    out_heads: int = 1
    attn_dropout: float = 0.6
    negative_slope: float = 0.2
    alpha: float = 0.1
    K: int = 10
    activation: str = "relu"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_layers < 1:
            raise ModelError("a model needs at least one layer")
        if self.in_dim < 1 or self.out_dim < 1 or self.hidden < 1:
            raise ModelError("layer widths must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


GraphLike = Union[Graph, Sequence[Block]]


def _layers(graph: GraphLike, depth: int) -> list:
    """The graph operand for each of ``depth`` layers, input layer first."""
    if isinstance(graph, Graph):
        return [graph] * depth
    blocks = list(graph)
    if len(blocks) != depth:
        raise ModelError(f"model has {depth} propagation layers but got {len(blocks)} blocks")
    return blocks[::-1]


def _dst(h: Var, g) -> Var:
    return h if isinstance(g, Graph) else ad.slice_rows(h, g.num_dst)


def _check_rows(x: Var, g):
    if x.shape[0] != g.shape[1]:
        raise ModelError(f"feature rows {x.shape[0]} do not match graph columns {g.shape[1]}")


def normalized_adjacency(g: Graph) -> Graph:
    """``D^-1/2 (A + I) D^-1/2``."""
    return sym_norm(add_self_loops(g))


# functional forwards --------------------------------------------------------

def gcn_forward(g: GraphLike, x: Var, weights: Sequence[Var], biases: Optional[Sequence[Var]] = None,
                dropout: float = 0.0, training: bool = False, rng=None) -> Var:
    """``H' = relu(A_hat H W + b)`` per layer, raw logits from the last one."""
    graphs = _layers(g, len(weights))
    h = ad.constant(x)
    for i, (gi, w) in enumerate(zip(graphs, weights)):
        _check_rows(h, gi)
        if h.shape[1] != w.shape[0]:
            raise ModelError(f"layer {i}: input width {h.shape[1]} != weight rows {w.shape[0]}")
        h = ad.dropout(h, dropout, rng, training)
        h = ad.matmul(ad.spmm_var(gi, h), w)
        if biases is not None:
            h = ad.add(h, biases[i])
        if i < len(weights) - 1:
            h = ad.relu(h)
    return h


def _head_mean(h: Var, heads: int) -> Var:
    width = h.shape[1] // heads
    avg = np.tile(np.eye(width), (heads, 1)) / heads
    return ad.matmul(h, ad.constant(avg))


def gat_layer(g, h: Var, w: Var, a_src: Var, a_dst: Var, heads: int, negative_slope: float = 0.2,
              attn_dropout: float = 0.0, training: bool = False, rng=None) -> Var:
    """One multi-head attention layer; returns ``num_dst x (heads * out)`` (heads side by side)."""
    if w.shape[1] % heads:
        raise ModelError(f"GAT width {w.shape[1]} not divisible by heads={heads}")
    z = ad.matmul(h, w)
    s_row = ad.head_scores(_dst(z, g), a_src, heads)
    s_col = ad.head_scores(z, a_dst, heads)
    logits = ad.leaky_relu(ad.add(ad.gather_edges(g, s_row, "row"), ad.gather_edges(g, s_col, "col")),
                           negative_slope)
    attn = ad.edge_softmax_var(g, logits)
    attn = ad.dropout(attn, attn_dropout, rng, training)
    return ad.multi_head_spmm_var(g, attn, z, heads)


def gat_forward(g: GraphLike, x: Var, layers: Sequence[dict], heads: Sequence[int], dropout: float = 0.0,
                attn_dropout: float = 0.0, negative_slope: float = 0.2, training: bool = False,
                rng=None) -> Var:
    """Hidden layers concatenate heads and apply ELU; the last layer averages heads."""
    graphs = _layers(g, len(layers))
    h = ad.constant(x)
    for i, (gi, p) in enumerate(zip(graphs, layers)):
        _check_rows(h, gi)
        h = ad.dropout(h, dropout, rng, training)
        h = gat_layer(gi, h, p["w"], p["a_src"], p["a_dst"], heads[i], negative_slope,
                      attn_dropout, training, rng)
        last = i == len(layers) - 1
        if last:
            h = _head_mean(h, heads[i])
        if "b" in p:
            h = ad.add(h, p["b"])
        if not last:
            h = ad.elu(h)
    return h


def sage_forward(g: GraphLike, x: Var, layers: Sequence[dict], dropout: float = 0.0,
                 training: bool = False, rng=None) -> Var:
    """``h' = relu(h W_self + mean_{v in N(u)} h_v W_neigh + b)``; no ReLU on the output layer."""
    graphs = _layers(g, len(layers))
    h = ad.constant(x)
    for i, (gi, p) in enumerate(zip(graphs, layers)):
        _check_rows(h, gi)
        h = ad.dropout(h, dropout, rng, training)
        neigh = ad.aggregate_var(gi, h, "mean")
        out = ad.add(ad.matmul(_dst(h, gi), p["w_self"]), ad.matmul(neigh, p["w_neigh"]))
        if "b" in p:
            out = ad.add(out, p["b"])
        h = ad.relu(out) if i < len(layers) - 1 else out
    return h


def appnp_propagate(g: GraphLike, h0: Var, alpha: float, K: int) -> Var:
    """``Z <- (1 - alpha) A_hat Z + alpha H0``, ``K`` times from ``Z = H0``."""
    if K < 1:
        raise ModelError("APPNP needs K >= 1")
    if not 0.0 < alpha <= 1.0:
        raise ModelError(f"alpha must lie in (0, 1], got {alpha}")
    graphs = _layers(g, K)
    z = h0
    for gi in graphs:
        # block destinations are always a prefix of the input rows
        z = ad.add(ad.scale(ad.spmm_var(gi, z), 1.0 - alpha), ad.scale(_dst(h0, gi), alpha))
    return z


def appnp_forward(g: GraphLike, x: Var, weights: Sequence[Var], biases: Sequence[Var], alpha: float,
                  K: int, dropout: float = 0.0, training: bool = False, rng=None) -> Var:
    """Two-layer MLP (ReLU, dropout) then personalised-PageRank propagation."""
    h = ad.constant(x)
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = ad.dropout(h, dropout, rng, training)
        h = ad.add(ad.matmul(h, w), b)
        if i < len(weights) - 1:
            h = ad.relu(h)
    return appnp_propagate(g, h, alpha, K)


def dgi_encode_and_score(g: Graph, x: Var, w: Var, slope: Var, w_b: Var, rng=None,
                         perm: Optional[np.ndarray] = None):
    """Positive and corrupted bilinear scores ``H W_b s`` against the summary ``s``.

    The corruption shuffles feature rows; pass ``perm`` to fix the shuffle.
    """
    x = ad.constant(x)
    if perm is None:
        perm = rng.permutation(x.shape[0])
    h = dgi_encode(g, x, w, slope)
    h_neg = dgi_encode(g, ad.take_rows(x, perm), w, slope)
    summary = ad.sigmoid(ad.row_mean_readout(h))
    proj = ad.matmul(w_b, ad.transpose(summary))  # d x 1
    return ad.matmul(h, proj), ad.matmul(h_neg, proj)


def dgi_encode(g: Graph, x: Var, w: Var, slope: Var) -> Var:
    return ad.prelu(ad.matmul(ad.spmm_var(g, x), w), slope)


# model objects ----------------------------------------------------------------

class Model:
    """Named parameters plus a forward; subclasses fill ``self.params`` in order."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        self.spec = spec
        self.params: dict[str, Var] = {}

    def _add(self, name: str, value) -> Var:
        v = ad.param(value, name=name)
        self.params[name] = v
        return v

    def _glorot(self, name, rng, fan_in, fan_out, shape=None) -> Var:
        return self._add(name, ad.glorot_uniform(rng, fan_in, fan_out, shape))

    def preprocess(self, g: Graph) -> Graph:
        return normalized_adjacency(g)

    @property
    def depth(self) -> int:
        return self.spec.num_layers

    def parameters(self) -> list[Var]:
        return list(self.params.values())

    def num_params(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self.params) - set(state)
        if missing:
            raise ModelError(f"state dict is missing {sorted(missing)}")
        for k, v in self.params.items():
            if state[k].shape != v.shape:
                raise ModelError(f"shape mismatch for {k}: {state[k].shape} vs {v.shape}")
            v.value = np.array(state[k], dtype=np.float64)

    def forward(self, graph: GraphLike, x, training: bool = False, rng=None) -> Var:
        raise NotImplementedError

    def __call__(self, graph: GraphLike, x, training: bool = False, rng=None) -> Var:
        return self.forward(graph, x, training, rng)


def _dims(spec: ModelSpec) -> list[int]:
    return [spec.in_dim] + [spec.hidden] * (spec.num_layers - 1) + [spec.out_dim]


class GCN(Model):
    def __init__(self, spec, rng):
        super().__init__(spec, rng)
        dims = _dims(spec)
        self.weights, self.biases = [], []
        for i in range(spec.num_layers):
            self.weights.append(self._glorot(f"w{i}", rng, dims[i], dims[i + 1]))
            self.biases.append(self._add(f"b{i}", np.zeros((1, dims[i + 1]))))

    def forward(self, graph, x, training=False, rng=None):
        return gcn_forward(graph, x, self.weights, self.biases, self.spec.dropout, training, rng)


class GAT(Model):
    def __init__(self, spec, rng):
        super().__init__(spec, rng)
        self.layers, self.heads = [], []
        in_dim = spec.in_dim
        for i in range(spec.num_layers):
            last = i == spec.num_layers - 1
            heads = spec.out_heads if last else spec.heads
            out = spec.out_dim if last else spec.hidden
            p = {
                "w": self._glorot(f"w{i}", rng, in_dim, heads * out),
                "a_src": self._glorot(f"a_src{i}", rng, out, 1, (heads, out)),
                "a_dst": self._glorot(f"a_dst{i}", rng, out, 1, (heads, out)),
                "b": self._add(f"b{i}", np.zeros((1, out if last else heads * out))),
            }
            self.layers.append(p)
            self.heads.append(heads)
            in_dim = heads * out

    def preprocess(self, g):
        return add_self_loops(g)

    def forward(self, graph, x, training=False, rng=None):
        s = self.spec
        return gat_forward(graph, x, self.layers, self.heads, s.dropout, s.attn_dropout,
                           s.negative_slope, training, rng)


class SAGE(Model):
    def __init__(self, spec, rng):
        super().__init__(spec, rng)
        dims = _dims(spec)
        self.layers = []
        for i in range(spec.num_layers):
            self.layers.append({
                "w_self": self._glorot(f"w_self{i}", rng, dims[i], dims[i + 1]),
                "w_neigh": self._glorot(f"w_neigh{i}", rng, dims[i], dims[i + 1]),
                "b": self._add(f"b{i}", np.zeros((1, dims[i + 1]))),
            })

    def preprocess(self, g):
        return g

    def forward(self, graph, x, training=False, rng=None):
        return sage_forward(graph, x, self.layers, self.spec.dropout, training, rng)


class APPNP(Model):
    def __init__(self, spec, rng):
        super().__init__(spec, rng)
        dims = [spec.in_dim, spec.hidden, spec.out_dim]
        self.weights = [self._glorot(f"w{i}", rng, dims[i], dims[i + 1]) for i in range(2)]
        self.biases = [self._add(f"b{i}", np.zeros((1, dims[i + 1]))) for i in range(2)]

    @property
    def depth(self):
        return self.spec.K

    def forward(self, graph, x, training=False, rng=None):
        s = self.spec
        return appnp_forward(graph, x, self.weights, self.biases, s.alpha, s.K, s.dropout, training, rng)


class DGI(Model):
    """One-layer GCN encoder with PReLU and a bilinear discriminator.

    ``forward`` returns the embeddings; :meth:`scores` gives the
    positive/corrupted discriminator outputs used for training.
    """

    def __init__(self, spec, rng):
        super().__init__(spec, rng)
        self.w = self._glorot("w", rng, spec.in_dim, spec.hidden)
        self.slope = self._add("prelu", np.full((1, spec.hidden), 0.25))
        self.w_b = self._glorot("w_b", rng, spec.hidden, spec.hidden)

    @property
    def depth(self):
        return 1

    def forward(self, graph, x, training=False, rng=None):
        if not isinstance(graph, Graph):
            raise ModelError("DGI trains on the full graph only")
        return dgi_encode(graph, ad.constant(x), self.w, self.slope)

    def scores(self, graph, x, rng, perm=None):
        return dgi_encode_and_score(graph, x, self.w, self.slope, self.w_b, rng, perm)


MODELS = {"gcn": GCN, "gat": GAT, "sage": SAGE, "graphsage": SAGE, "appnp": APPNP, "dgi": DGI}


def build_model(spec: ModelSpec, rng: np.random.Generator) -> Model:
    try:
        cls = MODELS[spec.name]
    except KeyError:
        raise ModelError(f"unknown model {spec.name!r}; registered models: {sorted(MODELS)}") from None
    return cls(spec, rng)


__all__ = [
    "ModelSpec", "ModelError", "Model", "GCN", "GAT", "SAGE", "APPNP", "DGI", "MODELS",
    "build_model", "gcn_forward", "gat_forward", "gat_layer", "sage_forward", "appnp_forward",
    "appnp_propagate", "dgi_encode_and_score", "dgi_encode", "normalized_adjacency",
]
