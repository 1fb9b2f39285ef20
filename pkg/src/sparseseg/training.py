"""Loss composition, optimisers, training loop and segmentation metrics."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graph_loss import GraphLossConfig, soft_graph_loss
from .pointcloud import FINE_NAMES, Sequence, gauss_weights
from .segnet import N_FINE, ModelParams, argmax_rows, forward

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 3e-3
    seed: int = 0
    lambda_coarse: float = 0.3
    lambda_graph: float = 0.1
    graph_a: float = 1.1
    graph_per_point: bool = True
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.lambda_coarse < 0 or self.lambda_graph < 0:
            raise ValueError("loss weights must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        GraphLossConfig(self.graph_a)

    def to_dict(self) -> dict:
        return asdict(self)


def frame_loss(fine_logits: ad.Node, coarse_logits: ad.Node, frame, cfg: TrainConfig) -> ad.Node:
    loss = ad.softmax_cross_entropy(fine_logits, frame.fine_labels)
    if cfg.lambda_coarse:
        coarse = ad.softmax_cross_entropy(coarse_logits, frame.coarse_labels)
        loss = ad.add(loss, ad.scale(coarse, cfg.lambda_coarse))
    if cfg.lambda_graph:
        probs = ad.softmax(fine_logits)
        graph = soft_graph_loss(gauss_weights(frame.positions), probs, frame.fine_labels, GraphLossConfig(cfg.graph_a, cfg.graph_per_point))
        loss = ad.add(loss, ad.scale(graph, cfg.lambda_graph))
    return loss


def total_loss(params: ModelParams, seq: Sequence, cfg: TrainConfig, _outputs: list | None = None) -> ad.Node:
    """Mean over frames of fine CE + lambda_coarse * coarse CE + lambda_graph * soft graph loss."""
    outputs = forward(params, seq)
    if _outputs is not None:
        _outputs.extend(outputs)
    total = None
    for frame, (fine, coarse) in zip(seq.frames, outputs):
        term = frame_loss(fine, coarse, frame, cfg)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(seq.frames))


class SGD:
    def __init__(self, params: ModelParams, lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for _, node in self.params.named():
            node.assign(node.value - self.lr * node.grad)


class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.value) for k, v in params.named()}
        self.v = {k: np.zeros_like(v.value) for k, v in params.named()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, node in self.params.named():
            g = node.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            node.assign(node.value - update)


def make_optimizer(params: ModelParams, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "loss", "train_acc"))
            for i, (loss, acc) in enumerate(zip(self.loss, self.train_acc), start=1):
                w.writerow((i, repr(loss), repr(acc)))


def _check_finite(loss: ad.Node, frame_losses, seq: Sequence, epoch: int) -> None:
    if np.isfinite(loss.item()):
        return
    bad = next((f.frame_index for f, v in zip(seq.frames, frame_losses) if not np.isfinite(v)), None)
    raise NumericalError(
        f"non-finite loss at epoch {epoch}, subject {seq.subject_id!r}, frame {bad}"
    )


def train(params: ModelParams, dataset, cfg: TrainConfig, progress=None) -> tuple[ModelParams, History]:
    """Train a copy of ``params`` with one optimiser step per sequence per epoch.

    ``train_acc`` is the fine-label point accuracy (percent) of the forward
    passes that produced each epoch's gradients.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("train: empty training set")
    params = params.copy()
    opt = make_optimizer(params, cfg)
    history = History()
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        correct = total = 0
        for seq in dataset:
            outputs: list = []
            loss = total_loss(params, seq, cfg, outputs)
            if not np.isfinite(loss.item()):
                per_frame = [frame_loss(f, c, fr, cfg).item() for fr, (f, c) in zip(seq.frames, outputs)]
                _check_finite(loss, per_frame, seq, epoch)
            ad.backward(loss)
            opt.step()
            loss_sum += loss.item()
            for frame, (fine, _) in zip(seq.frames, outputs):
                correct += int(np.sum(argmax_rows(fine) == frame.fine_labels))
                total += frame.n
        history.loss.append(loss_sum / len(dataset))
        history.train_acc.append(100.0 * correct / total)
        if progress is not None:
            progress(epoch, history.loss[-1], history.train_acc[-1])
        log.debug("epoch %d loss %.6f acc %.2f", epoch, history.loss[-1], history.train_acc[-1])
    return params, history


@dataclass
class EvalReport:
    confusion: np.ndarray  # rows: ground truth, columns: prediction
    class_acc: list  # percent, None for classes absent from ground truth
    class_iou: list
    macc: float
    miou: float
    overall_acc: float

    def to_dict(self) -> dict:
        return {
            "classes": list(FINE_NAMES[: len(self.class_acc)]),
            "per_class_accuracy": self.class_acc,
            "per_class_iou": self.class_iou,
            "mAcc": self.macc,
            "mIoU": self.miou,
            "overall_accuracy": self.overall_acc,
            "confusion": self.confusion.astype(int).tolist(),
        }

    def format_table(self) -> str:
        names = FINE_NAMES[: len(self.class_acc)]
        width = max(len(n) for n in names)
        fmt = lambda v: "   n/a" if v is None else f"{v:6.2f}"  # noqa: E731
        lines = [f"{'class':<{width}}    acc    IoU"]
        for name, acc, iou in zip(names, self.class_acc, self.class_iou):
            lines.append(f"{name:<{width}} {fmt(acc)} {fmt(iou)}")
        lines.append(f"{'mean':<{width}} {fmt(self.macc)} {fmt(self.miou)}")
        lines.append(f"overall point accuracy {self.overall_acc:.2f}")
        return "\n".join(lines)


def confusion_matrix(y_true, y_pred, n_classes: int = N_FINE) -> np.ndarray:
    t = np.asarray(y_true, dtype=np.intp).reshape(-1)
    p = np.asarray(y_pred, dtype=np.intp).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"{t.size} targets but {p.size} predictions")
    return np.bincount(n_classes * t + p, minlength=n_classes**2).reshape(n_classes, n_classes)


def report_from_confusion(cm: np.ndarray) -> EvalReport:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.sum() == 0:
        raise ValueError("cannot score an empty dataset")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    acc, iou = [], []
    for c in range(cm.shape[0]):
        if support[c] == 0:
            acc.append(None)
            iou.append(None)
            continue
        acc.append(100.0 * tp[c] / support[c])
        iou.append(100.0 * tp[c] / (support[c] + predicted[c] - tp[c]))
    present = [a for a in acc if a is not None]
    present_iou = [v for v in iou if v is not None]
    return EvalReport(
        confusion=cm,
        class_acc=acc,
        class_iou=iou,
        macc=float(np.mean(present)),
        miou=float(np.mean(present_iou)),
        overall_acc=100.0 * float(tp.sum()) / float(cm.sum()),
    )


def segmentation_report(y_true, y_pred, n_classes: int = N_FINE) -> EvalReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, n_classes))


def evaluate(params: ModelParams, dataset) -> EvalReport:
    dataset = list(dataset)
    if not dataset:
        raise ValueError("evaluate: empty dataset")
    cm = np.zeros((N_FINE, N_FINE), dtype=np.int64)
    for seq in dataset:
        for frame, (fine, _) in zip(seq.frames, forward(params, seq)):
            cm += confusion_matrix(frame.fine_labels, argmax_rows(fine))
    return report_from_confusion(cm)


@dataclass
class LossComparison:
    baseline: History
    graph: History
    epochs: int
    seed: int
    lambda_graph: float

    def first_epoch_reaching(self, threshold: float) -> tuple[int | None, int | None]:
        def first(h):
            return next((i for i, a in enumerate(h.train_acc, start=1) if a >= threshold), None)

        return first(self.baseline), first(self.graph)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "acc_baseline", "acc_graph"))
            for i, (a, b) in enumerate(zip(self.baseline.train_acc, self.graph.train_acc), start=1):
                w.writerow((i, repr(a), repr(b)))

    def write_svg(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        epochs = np.arange(1, self.epochs + 1)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, self.baseline.train_acc, label="cross-entropy only")
        ax.plot(epochs, self.graph.train_acc, label=f"with graph loss (lambda={self.lambda_graph:g})")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train accuracy (%)")
        ax.set_title(f"loss comparison, seed {self.seed}")
        ax.set_ylim(0, 100)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

    def summary(self, threshold: float = 90.0) -> dict:
        base_hit, graph_hit = self.first_epoch_reaching(threshold)
        return {
            "epochs": self.epochs,
            "seed": self.seed,
            "lambda_graph": self.lambda_graph,
            "final_acc_baseline": self.baseline.train_acc[-1],
            "final_acc_graph": self.graph.train_acc[-1],
            "threshold": threshold,
            "first_epoch_at_threshold_baseline": base_hit,
            "first_epoch_at_threshold_graph": graph_hit,
            "graph_converges_faster": None if base_hit is None or graph_hit is None else graph_hit < base_hit,
        }


def compare_loss_curves(params: ModelParams, dataset, cfg: TrainConfig, progress=None) -> LossComparison:
    """Train from the same initial params and seed with and without the graph term."""
    if cfg.lambda_graph <= 0:
        raise ValueError("compare_loss_curves needs a positive lambda_graph")
    _, base = train(params, dataset, replace(cfg, lambda_graph=0.0), progress)
    _, graph = train(params, dataset, cfg, progress)
    return LossComparison(base, graph, cfg.epochs, cfg.seed, cfg.lambda_graph)


def descent_check(params: ModelParams, seq: Sequence, cfg: TrainConfig, step: float = 1e-4) -> tuple[float, float]:
    """Loss before and after a single plain gradient step of size ``step``."""
    before = total_loss(params, seq, cfg)
    ad.backward(before)
    moved = params.copy()
    for (name, node), (_, src) in zip(moved.named(), params.named()):
        node.assign(node.value - step * src.grad)
    return before.item(), total_loss(moved, seq, cfg).item()


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    if a.tensors.keys() != b.tensors.keys():
        return False
    return all(np.array_equal(a[k].value, b[k].value) for k in a.tensors)

