"""Contact segmentation metrics.

All four scores derive from a pixel confusion matrix ``counts[gt, pred]``
with class 0 as background:

* SC-Acc: % of ground-truth contact pixels given the right class.
* C-Acc: % of ground-truth contact pixels predicted as any contact class.
* mIoU: mean IoU over contact classes present in gt or prediction.
* wIoU: IoU averaged with weights equal to each class's gt pixel count.

Scores that are undefined (no contact pixels) are ``None``.
"""
from dataclasses import dataclass, field

import numpy as np

from pihot import kernels


@dataclass
class MetricReport:
    sc_acc: float | None
    c_acc: float | None
    miou: float | None
    wiou: float | None
    per_class_iou: dict = field(default_factory=dict)  # class id -> IoU
    confusion: np.ndarray | None = None

    def as_dict(self):
        return {
            "sc_acc": self.sc_acc,
            "c_acc": self.c_acc,
            "miou": self.miou,
            "wiou": self.wiou,
            "per_class_iou": {str(k): v for k, v in sorted(self.per_class_iou.items())},
        }


def confusion_matrix(gt, pred, num_classes) -> np.ndarray:
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")
    for name, a in (("gt", gt), ("pred", pred)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise ValueError(f"{name} labels must lie in [0, {num_classes})")
    return kernels.confusion(gt, pred, num_classes)


def report_from_confusion(counts) -> MetricReport:
    counts = np.asarray(counts, dtype=np.int64)
    tp = np.diag(counts)
    gt_total = counts.sum(axis=1)
    pred_total = counts.sum(axis=0)

    n_contact = int(gt_total[1:].sum())
    if n_contact:
        sc_acc = 100.0 * tp[1:].sum() / n_contact
        c_acc = 100.0 * counts[1:, 1:].sum() / n_contact
    else:
        sc_acc = c_acc = None

    per_class = {}
    for k in range(1, counts.shape[0]):
        union = gt_total[k] + pred_total[k] - tp[k]
        if union > 0:
            per_class[k] = float(tp[k] / union)
    miou = float(np.mean(list(per_class.values()))) if per_class else None
    if n_contact:
        wiou = float(sum(gt_total[k] * iou for k, iou in per_class.items()) / n_contact)
    else:
        wiou = None
    return MetricReport(
        None if sc_acc is None else float(sc_acc),
        None if c_acc is None else float(c_acc),
        miou, wiou, per_class, counts,
    )


def evaluate(pred, gt, num_classes=None) -> MetricReport:
    """Score one predicted label map against its ground truth."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if num_classes is None:
        num_classes = int(max(pred.max(initial=0), gt.max(initial=0))) + 1
    return report_from_confusion(confusion_matrix(gt, pred, num_classes))


def aggregate(reports, mode="micro") -> MetricReport:
    """Combine per-image reports.

    ``micro`` pools confusion counts; ``macro`` averages each score over
    the images where it is defined.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    if mode == "micro":
        size = max(r.confusion.shape[0] for r in reports)
        total = np.zeros((size, size), dtype=np.int64)
        for r in reports:
            n = r.confusion.shape[0]
            total[:n, :n] += r.confusion
        return report_from_confusion(total)
    if mode == "macro":
        def mean(vals):
            vals = [v for v in vals if v is not None]
            return float(np.mean(vals)) if vals else None

        classes = sorted({k for r in reports for k in r.per_class_iou})
        per_class = {k: mean([r.per_class_iou.get(k) for r in reports]) for k in classes}
        return MetricReport(
            mean([r.sc_acc for r in reports]),
            mean([r.c_acc for r in reports]),
            mean([r.miou for r in reports]),
            mean([r.wiou for r in reports]),
            per_class,
            None,
        )
    raise ValueError(f"unknown aggregation mode {mode!r}")


def format_report(report: MetricReport, class_names=None) -> str:
    def fmt(v, pct=False):
        if v is None:
            return "n/a"
        return f"{v:.2f}" if pct else f"{v:.4f}"

    lines = [
        f"SC-Acc: {fmt(report.sc_acc, True)}",
        f"C-Acc: {fmt(report.c_acc, True)}",
        f"mIoU: {fmt(report.miou)}",
        f"wIoU: {fmt(report.wiou)}",
        "class  name              IoU",
    ]
    for k, iou in sorted(report.per_class_iou.items()):
        name = class_names[k] if class_names and k < len(class_names) else str(k)
        lines.append(f"{k:5d}  {name:<16s}  {fmt(iou)}")
    return "\n".join(lines) + "\n"
