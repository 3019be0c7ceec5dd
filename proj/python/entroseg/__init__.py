"""Text detection in high-entropy images by segmentation and detector ensembles."""

from ._core import (
    InputError,
    InvalidArgument,
    PipelineError,
    default_config,
    detect,
    entropy,
    load_image,
    segment,
)
from . import _core


def _normalise(boxes, model_id="model"):
    out = []
    for b in boxes:
        if isinstance(b, dict):
            d = dict(b)
            d.setdefault("prob", 1.0)
            d.setdefault("model_id", model_id)
        else:
            x1, y1, x2, y2, *rest = b
            d = {"x1": x1, "y1": y1, "x2": x2, "y2": y2, "prob": rest[0] if rest else 1.0, "model_id": model_id}
        out.append(d)
    return out


def iou(a, b):
    """Intersection over union of two boxes given as dicts or [x1, y1, x2, y2]."""
    return _core.iou(_normalise([a])[0], _normalise([b])[0])


def nms(boxes, threshold):
    """Greedy suppression of boxes given as dicts or [x1, y1, x2, y2, prob]."""
    return _core.nms(_normalise(boxes), threshold)


def selective_nms(boxes_by_model, accuracies, p_th=0.9, p_tl=0.8, nms_threshold=0.95):
    """Threshold each model's boxes by its rank in `accuracies`, then fuse with nms."""
    grouped = {m: _normalise(b, m) for m, b in boxes_by_model.items()}
    return _core.selective_nms(grouped, accuracies, p_th, p_tl, nms_threshold)


def evaluate(detections, truths, match_iou=0.5):
    """P, R, F of detections against truth boxes [x1, y1, x2, y2] under greedy one-to-one matching."""
    truths = [[t["x1"], t["y1"], t["x2"], t["y2"]] if isinstance(t, dict) else list(t)[:4] for t in truths]
    return _core.evaluate(_normalise(detections), truths, match_iou)


__all__ = [
    "InputError",
    "InvalidArgument",
    "PipelineError",
    "default_config",
    "detect",
    "entropy",
    "evaluate",
    "iou",
    "load_image",
    "nms",
    "segment",
    "selective_nms",
]
