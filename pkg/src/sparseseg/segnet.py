"""Segmentation network: shared point MLP, max-pooled global signature,
frame-level LSTM, repeated pool-and-concatenate rounds, and two per-point heads
(6 fine body parts, 3 coarse groups).

Per frame ``k`` with points ``X``:

1. ``feat = MLP(X)`` applied row-wise with shared weights.
2. ``F_k = max_rows(feat @ G + g)``, the global signature.
3. ``h_k = LSTM(F_k, state_{k-1})``.
4. ``z = [feat | F_k | h_k]`` with ``F_k`` and ``h_k`` tiled over the points.
5. Rounds 2..R: ``feat = tanh(z @ W + b)``, pool again, rebuild ``z``.
6. Shared head trunk on ``z`` then separate linear fine / coarse outputs.

Points are centred on their bounding-box midpoint before step 1, which keeps
the network independent of where the subject stands and is exactly invariant
to point order and duplicated points.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .graph_loss import Partition
from .pointcloud import Frame, Sequence
from .sequential import GATES, LstmParams, LstmState, lstm_step

N_FINE = 6
N_COARSE = 3


@dataclass(frozen=True)
class NetConfig:
    point_feat_dims: tuple[int, ...] = (64, 64, 128)
    global_dim: int = 128
    lstm_hidden: int = 64
    head_dims: tuple[int, ...] = (128, 64)
    global_rounds: int = 2
    fine_classes: int = N_FINE
    coarse_classes: int = N_COARSE

    def __post_init__(self):
        object.__setattr__(self, "point_feat_dims", tuple(int(d) for d in self.point_feat_dims))
        object.__setattr__(self, "head_dims", tuple(int(d) for d in self.head_dims))
        widths = self.point_feat_dims + self.head_dims + (self.global_dim, self.lstm_hidden)
        if not self.point_feat_dims or any(d < 1 for d in widths):
            raise ValueError(f"all layer widths must be >= 1: {self}")
        if self.global_rounds < 1:
            raise ValueError("global_rounds must be >= 1")
        if self.fine_classes != N_FINE or self.coarse_classes != N_COARSE:
            raise ValueError("the label taxonomy fixes 6 fine and 3 coarse classes")

    @property
    def point_dim(self) -> int:
        return self.point_feat_dims[-1]

    @property
    def concat_dim(self) -> int:
        return self.point_dim + self.global_dim + self.lstm_hidden

    def to_dict(self) -> dict:
        d = asdict(self)
        d["point_feat_dims"] = list(self.point_feat_dims)
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


@dataclass
class ModelParams:
    config: NetConfig
    tensors: dict[str, ad.Node] = field(default_factory=dict)

    @classmethod
    def init(cls, config: NetConfig = NetConfig(), seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        t: dict[str, ad.Node] = {}

        def linear(name, n_in, n_out):
            t[f"{name}.W"] = ad.parameter(_uniform(rng, n_in, (n_in, n_out)), f"{name}.W")
            t[f"{name}.b"] = ad.parameter(_uniform(rng, n_in, (1, n_out)), f"{name}.b")

        n_in = 3
        for i, width in enumerate(config.point_feat_dims):
            linear(f"point.{i}", n_in, width)
            n_in = width
        linear("pool.0", config.point_dim, config.global_dim)
        for name, node in LstmParams.init(config.lstm_hidden, config.global_dim, rng).named("lstm").items():
            t[name] = ad.parameter(node.value, name)
        for r in range(1, config.global_rounds):
            linear(f"round.{r}", config.concat_dim, config.point_dim)
            linear(f"pool.{r}", config.point_dim, config.global_dim)
        n_in = config.concat_dim
        for i, width in enumerate(config.head_dims):
            linear(f"head.{i}", n_in, width)
            n_in = width
        linear("fine", n_in, config.fine_classes)
        linear("coarse", n_in, config.coarse_classes)
        return cls(config, t)

    def __getitem__(self, name: str) -> ad.Node:
        return self.tensors[name]

    def named(self) -> list[tuple[str, ad.Node]]:
        return list(self.tensors.items())

    @property
    def lstm(self) -> LstmParams:
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = self.tensors[f"lstm.W_{g}"]
            kw[f"b_{g}"] = self.tensors[f"lstm.b_{g}"]
        return LstmParams(**kw)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: ad.parameter(v.value, k) for k, v in self.tensors.items()})

    def values(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self.tensors.items()}

    def num_parameters(self) -> int:
        return sum(v.value.size for v in self.tensors.values())


def _linear(params: ModelParams, name: str, x: ad.Node) -> ad.Node:
    return ad.add(ad.matmul(x, params[f"{name}.W"]), params[f"{name}.b"])


def centered_positions(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.float64)
    mid = 0.5 * (pos.min(axis=0) + pos.max(axis=0))
    return pos - mid


def point_features(params: ModelParams, points: ad.Node) -> ad.Node:
    x = points
    for i in range(len(params.config.point_feat_dims)):
        x = ad.tanh(_linear(params, f"point.{i}", x))
    return x


def frame_global_feature(params: ModelParams, points: ad.Node) -> tuple[ad.Node, ad.Node]:
    """Shared per-point features (n × d_p) and the pooled signature F (1 × K_g)."""
    if points.shape[0] < 1:
        raise ValueError("frame_global_feature: empty frame")
    per_point = point_features(params, points)
    return per_point, ad.max_over_rows(_linear(params, "pool.0", per_point))


def _frame_input(frame) -> ad.Node:
    positions = frame.positions if isinstance(frame, Frame) else frame
    return ad.constant(centered_positions(positions))


def forward_frame(params: ModelParams, frame, state: LstmState):
    """Logits for one frame plus the updated recurrent state."""
    cfg = params.config
    per_point, sig = frame_global_feature(params, _frame_input(frame))
    n = per_point.shape[0]
    state = lstm_step(params.lstm, state, sig)
    z = ad.concat([per_point, ad.repeat_rows(sig, n), ad.repeat_rows(state.h, n)], axis=1)
    for r in range(1, cfg.global_rounds):
        per_point = ad.tanh(_linear(params, f"round.{r}", z))
        sig = ad.max_over_rows(_linear(params, f"pool.{r}", per_point))
        z = ad.concat([per_point, ad.repeat_rows(sig, n), ad.repeat_rows(state.h, n)], axis=1)
    for i in range(len(cfg.head_dims)):
        z = ad.tanh(_linear(params, f"head.{i}", z))
    return _linear(params, "fine", z), _linear(params, "coarse", z), state


def forward(params: ModelParams, seq) -> list[tuple[ad.Node, ad.Node]]:
    """Per-frame ``(fine_logits n×6, coarse_logits n×3)``; frame k sees frames 1..k only."""
    frames = seq.frames if isinstance(seq, Sequence) else list(seq)
    if not frames:
        raise ValueError("forward: empty sequence")
    state = LstmState.zeros(params.config.lstm_hidden)
    out = []
    for frame in frames:
        fine, coarse, state = forward_frame(params, frame, state)
        out.append((fine, coarse))
    return out


def argmax_rows(logits) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest class index."""
    value = logits.value if isinstance(logits, ad.Node) else np.asarray(logits)
    return np.argmax(value, axis=1)


def predict(params: ModelParams, seq) -> list[tuple[Partition, Partition]]:
    return [
        (Partition(argmax_rows(fine), N_FINE), Partition(argmax_rows(coarse), N_COARSE))
        for fine, coarse in forward(params, seq)
    ]
