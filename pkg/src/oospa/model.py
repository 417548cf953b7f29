"""Dual-scale message-passing network predicting orbital-rotation generators.

The network maps a featurized molecule to the packed strictly-upper
entries of a skew-symmetric generator; the rotation matrix is recovered
by a differentiable scaling-and-squaring matrix exponential, so the
gauge losses can back-propagate through it.  Everything runs in float64
on CPU; graphs of different sizes share all parameters because the
readout acts on fixed-width pair representations.

Checkpoints are a single file: a magic string, an 8-byte little-endian
header length, a JSON header (schema version, config, extras, ordered
parameter manifest) and the raw float64 parameter payload in manifest
order.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .chem import Geometry
from .errors import InvalidInput, NumericalFailure
from .features import EDGE_EXTRA_WIDTH, NODE_BASE_WIDTH, FeatureGraph, featurize

CHECKPOINT_MAGIC = b"OOSPACKPT"
CHECKPOINT_SCHEMA_VERSION = 1

_DTYPE = torch.float64
_EXPM_ORDER = 18
_EXPM_SCALE_TARGET = 0.25


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    gnn_layers: int = 3
    proj_dim: int = 32
    readout_layers: int = 2
    readout_hidden: int = 128
    t_walk: int = 8
    l_rbf: int = 20
    r_fine: float = 2.5
    r_coarse: float = 5.0
    rbf_min: float = 0.0
    rbf_max: float = 6.0
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_dim", "gnn_layers", "proj_dim", "readout_layers", "readout_hidden", "t_walk", "l_rbf"):
            if getattr(self, name) < 1:
                raise InvalidInput(f"{name} must be >= 1")
        if self.r_fine > self.r_coarse:
            raise InvalidInput("r_fine must not exceed r_coarse")

    @property
    def node_in(self) -> int:
        return NODE_BASE_WIDTH + self.t_walk

    @property
    def edge_in(self) -> int:
        return self.l_rbf + EDGE_EXTRA_WIDTH

    @property
    def node_width(self) -> int:
        return self.proj_dim + self.node_in


def torch_expm_skew(a: torch.Tensor) -> torch.Tensor:
    """Differentiable matrix exponential (scaling-and-squaring Taylor)."""
    norm = float(torch.linalg.matrix_norm(a.detach(), ord=1))
    squarings = 0
    if norm > _EXPM_SCALE_TARGET:
        squarings = int(np.ceil(np.log2(norm / _EXPM_SCALE_TARGET)))
    b = a / (2.0**squarings)
    n = a.shape[0]
    result = torch.eye(n, dtype=a.dtype)
    term = torch.eye(n, dtype=a.dtype)
    for k in range(1, _EXPM_ORDER + 1):
        term = term @ b / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def unpack_upper_torch(values: torch.Tensor, n: int) -> torch.Tensor:
    """A = U - U^T from packed strictly-upper entries (autograd-friendly)."""
    iu, ju = torch.triu_indices(n, n, offset=1)
    a = values.new_zeros((n, n))
    a = a.index_put((iu, ju), values)
    return a - a.T


class EdgeConditionedConv(nn.Module):
    """h_i = Theta4 x_i + sum_j MLP(e_ij) x_j over the scale's edges.

    The kernel MLP maps each directed edge's features to a full
    (out x in) convolution kernel; node i aggregates over every edge
    (i, j), i.e. over the directed features whose first index is i.
    """

    def __init__(self, in_dim: int, out_dim: int, edge_dim: int, kernel_hidden: int):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.node_mix = nn.Linear(in_dim, out_dim, bias=False)
        self.kernel_mlp = nn.Sequential(
            nn.Linear(edge_dim, kernel_hidden),
            nn.Tanh(),
            nn.Linear(kernel_hidden, out_dim * in_dim),
        )

    def forward(self, x, edges, edge_x):
        out = self.node_mix(x)
        if edges.shape[0] == 0:
            return out
        kernels = self.kernel_mlp(edge_x).view(-1, self.out_dim, self.in_dim)
        messages = torch.bmm(kernels, x[edges[:, 1]].unsqueeze(-1)).squeeze(-1)
        return out.index_add(0, edges[:, 0], messages)


class ScaleStack(nn.Module):
    """Stacked edge-conditioned convolutions with residual connections.

    The first layer changes width, so its residual path is a learned
    linear shortcut; later layers use identity shortcuts.  tanh follows
    each residual sum.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.convs = nn.ModuleList()
        in_dim = cfg.node_width
        for _ in range(cfg.gnn_layers):
            self.convs.append(
                EdgeConditionedConv(in_dim, cfg.hidden_dim, cfg.edge_in, cfg.hidden_dim)
            )
            in_dim = cfg.hidden_dim
        self.shortcut = nn.Linear(cfg.node_width, cfg.hidden_dim, bias=False)

    def forward(self, x, edges, edge_x):
        h = x
        for layer_idx, conv in enumerate(self.convs):
            residual = self.shortcut(h) if layer_idx == 0 else h
            h = torch.tanh(conv(h, edges, edge_x) + residual)
        return h


class OrbitalModel(nn.Module):
    """Geometry + matching -> packed generator entries -> rotation matrix."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Sequential(
            nn.Linear(cfg.node_in, cfg.proj_dim),
            nn.Tanh(),
            nn.Linear(cfg.proj_dim, cfg.proj_dim),
            nn.LayerNorm(cfg.proj_dim),
        )
        self.fine_stack = ScaleStack(cfg)
        self.coarse_stack = ScaleStack(cfg)
        self.fusion = nn.Linear(2 * cfg.hidden_dim, cfg.hidden_dim)
        self.fusion_norm = nn.LayerNorm(cfg.hidden_dim)
        pair_in = 3 * cfg.hidden_dim + cfg.edge_in + 6
        layers = []
        width = pair_in
        for _ in range(cfg.readout_layers - 1):
            layers += [nn.Linear(width, cfg.readout_hidden), nn.Tanh()]
            width = cfg.readout_hidden
        layers.append(nn.Linear(width, 1))
        self.readout = nn.Sequential(*layers)
        self.to(_DTYPE)
        self.reset_parameters(cfg.seed)

    def reset_parameters(self, seed: int):
        """Glorot-style uniform weights, zero biases, unit layer-norm gains."""
        gen = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                fan_out, fan_in = module.weight.shape
                bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
                with torch.no_grad():
                    module.weight.uniform_(-bound, bound, generator=gen)
                    if module.bias is not None:
                        module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                with torch.no_grad():
                    module.weight.fill_(1.0)
                    module.bias.zero_()

    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]

    def node_embeddings(self, node_x, fine_edges, fine_edge_x, coarse_edges, coarse_edge_x):
        x = torch.cat([self.proj(node_x), node_x], dim=1)
        h_fine = self.fine_stack(x, fine_edges, fine_edge_x)
        h_coarse = self.coarse_stack(x, coarse_edges, coarse_edge_x)
        fused = torch.cat([h_fine, h_coarse], dim=1)
        return torch.tanh(self.fusion_norm(self.fusion(fused)))

    def pair_scalars(self, fused, pairs, complete_edge_x, pair_x):
        xi = fused[pairs[:, 0]]
        xj = fused[pairs[:, 1]]
        pair_in = torch.cat([xi + xj, xi - xj, xi * xj, complete_edge_x, pair_x], dim=1)
        return self.readout(pair_in).squeeze(-1)

    def forward(self, fg: "FeatureTensors") -> tuple[torch.Tensor, torch.Tensor]:
        fused = self.node_embeddings(
            fg.node_x, fg.fine_edges, fg.fine_edge_x, fg.coarse_edges, fg.coarse_edge_x
        )
        a_upper = self.pair_scalars(fused, fg.pairs, fg.complete_edge_x, fg.pair_x)
        m_pred = torch_expm_skew(unpack_upper_torch(a_upper, fg.n))
        return a_upper, m_pred


@dataclass
class FeatureTensors:
    """A FeatureGraph converted to torch tensors."""

    n: int
    node_x: torch.Tensor
    fine_edges: torch.Tensor
    fine_edge_x: torch.Tensor
    coarse_edges: torch.Tensor
    coarse_edge_x: torch.Tensor
    pairs: torch.Tensor
    complete_edge_x: torch.Tensor
    pair_x: torch.Tensor

    @classmethod
    def from_feature_graph(cls, fg: FeatureGraph) -> "FeatureTensors":
        def f(x):
            return torch.as_tensor(x, dtype=_DTYPE)

        def idx(x):
            return torch.as_tensor(np.asarray(x, dtype=np.int64))

        return cls(
            n=fg.n,
            node_x=f(fg.node_x),
            fine_edges=idx(fg.fine_edges),
            fine_edge_x=f(fg.fine_edge_x),
            coarse_edges=idx(fg.coarse_edges),
            coarse_edge_x=f(fg.coarse_edge_x),
            pairs=idx(fg.complete_pairs),
            complete_edge_x=f(fg.complete_edge_x),
            pair_x=f(fg.pair_x),
        )


def featurize_for_model(geom: Geometry, matching, cfg: ModelConfig) -> FeatureTensors:
    fg = featurize(
        geom,
        matching,
        r_fine=cfg.r_fine,
        r_coarse=cfg.r_coarse,
        t_walk=cfg.t_walk,
        l_rbf=cfg.l_rbf,
        rbf_min=cfg.rbf_min,
        rbf_max=cfg.rbf_max,
    )
    return FeatureTensors.from_feature_graph(fg)


def forward_geometry(
    model: OrbitalModel, geom: Geometry, matching
) -> tuple[np.ndarray, np.ndarray]:
    """Numpy-facing single-molecule forward pass."""
    ft = featurize_for_model(geom, matching, model.cfg)
    with torch.no_grad():
        a_upper, m_pred = model(ft)
    a = a_upper.numpy()
    m = m_pred.numpy()
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(m))):
        raise NumericalFailure("model produced non-finite output")
    return a, m


class GraphBatch:
    """Disjoint union of several molecules for one training step.

    Node indices are offset per molecule; pair rows remember their
    molecule so per-molecule generators can be rebuilt for the gauge
    losses.
    """

    def __init__(self, tensors: list[FeatureTensors]):
        if not tensors:
            raise InvalidInput("empty batch")
        self.items = tensors
        offsets = np.cumsum([0] + [t.n for t in tensors])
        self.node_x = torch.cat([t.node_x for t in tensors])

        def cat_edges(get):
            parts = [get(t) + off for t, off in zip(tensors, offsets) if get(t).shape[0]]
            if not parts:
                return torch.zeros((0, 2), dtype=torch.int64)
            return torch.cat(parts)

        self.fine_edges = cat_edges(lambda t: t.fine_edges)
        self.coarse_edges = cat_edges(lambda t: t.coarse_edges)
        self.fine_edge_x = torch.cat([t.fine_edge_x for t in tensors])
        self.coarse_edge_x = torch.cat([t.coarse_edge_x for t in tensors])
        self.pairs = torch.cat([t.pairs + off for t, off in zip(tensors, offsets)])
        self.complete_edge_x = torch.cat([t.complete_edge_x for t in tensors])
        self.pair_x = torch.cat([t.pair_x for t in tensors])
        counts = [t.pairs.shape[0] for t in tensors]
        self.pair_slices = np.cumsum([0] + counts)

    def forward(self, model: OrbitalModel):
        """Per-molecule (a_upper, m_pred) lists computed in one pass."""
        fused = model.node_embeddings(
            self.node_x, self.fine_edges, self.fine_edge_x, self.coarse_edges, self.coarse_edge_x
        )
        scalars = model.pair_scalars(fused, self.pairs, self.complete_edge_x, self.pair_x)
        uppers, ms = [], []
        for idx, item in enumerate(self.items):
            sl = scalars[self.pair_slices[idx] : self.pair_slices[idx + 1]]
            uppers.append(sl)
            ms.append(torch_expm_skew(unpack_upper_torch(sl, item.n)))
        return uppers, ms


def save_checkpoint(path, model: OrbitalModel, extra: dict | None = None):
    """Write config + manifest header and the float64 parameter payload."""
    manifest = [[name, list(shape)] for name, shape in model.manifest()]
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": asdict(model.cfg),
        "extra": extra or {},
        "manifest": manifest,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, param in model.named_parameters():
            fh.write(param.detach().numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[OrbitalModel, dict]:
    """Rebuild the model from a checkpoint; returns (model, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise InvalidInput(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise InvalidInput(
                f"{path}: unsupported checkpoint schema {header.get('schema_version')!r}"
            )
        cfg = ModelConfig(**header["config"])
        model = OrbitalModel(cfg)
        expected = [[name, list(shape)] for name, shape in model.manifest()]
        if expected != header["manifest"]:
            raise InvalidInput(f"{path}: manifest does not match the config")
        with torch.no_grad():
            for (name, param) in model.named_parameters():
                count = param.numel()
                raw = fh.read(count * 8)
                if len(raw) != count * 8:
                    raise InvalidInput(f"{path}: truncated payload at {name}")
                values = np.frombuffer(raw, dtype="<f8").reshape(tuple(param.shape))
                param.copy_(torch.from_numpy(values.copy()))
        trailing = fh.read(1)
        if trailing:
            raise InvalidInput(f"{path}: trailing bytes after payload")
    return model, header.get("extra", {})
