"""Evaluation metrics and the two scalar training losses (FoV and relative metric)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import DomainError, InsufficientPersons

PCDR_EQUAL_THRESHOLD = 0.2    # meters, predicted-depth equality band
LAYER_EQUAL_THRESHOLD = 0.3   # meters, band used to build annotation layers
FOV_OVERESTIMATE_WEIGHT = 3.0
RELATIVE_METRIC_TAU = 1.0     # meters


class DepthRelation(str, Enum):
    CLOSER = "Closer"
    FARTHER = "Farther"
    EQUAL = "Equal"


@dataclass(frozen=True)
class GroundTruthAnnotation:
    depth_layer: int | None = None
    gt_depth: float | None = None
    gt_height: float | None = None
    gt_fov: float | None = None


def predicted_relation(zi: float, zj: float, equal_threshold: float = PCDR_EQUAL_THRESHOLD) -> DepthRelation:
    if abs(zi - zj) < equal_threshold:
        return DepthRelation.EQUAL
    return DepthRelation.CLOSER if zi < zj else DepthRelation.FARTHER


def layer_relation(li: int, lj: int) -> DepthRelation:
    if li == lj:
        return DepthRelation.EQUAL
    return DepthRelation.CLOSER if li < lj else DepthRelation.FARTHER


def depth_relation_pairs(pred_depths, gt_layers, equal_threshold: float = PCDR_EQUAL_THRESHOLD,
                         members=None) -> tuple[int, int]:
    """(correct, total) over unordered pairs.

    ``members`` restricts counting to pairs with at least one flagged person.
    """
    z = list(pred_depths)
    layers = list(gt_layers)
    if len(z) != len(layers):
        raise DomainError("predictions and layers differ in length")
    correct = total = 0
    for i, j in combinations(range(len(z)), 2):
        if members is not None and not (members[i] or members[j]):
            continue
        total += 1
        if predicted_relation(z[i], z[j], equal_threshold) == layer_relation(layers[i], layers[j]):
            correct += 1
    return correct, total


def pcdr(pred_depths, gt_layers, equal_threshold: float = PCDR_EQUAL_THRESHOLD) -> float:
    """Fraction of person pairs whose predicted depth relation matches the annotated layers."""
    if len(pred_depths) < 2:
        raise InsufficientPersons("PCDR needs at least two annotated persons")
    correct, total = depth_relation_pairs(pred_depths, gt_layers, equal_threshold)
    return correct / total


def assign_layers(depths, threshold: float = LAYER_EQUAL_THRESHOLD) -> list[int]:
    """Ordinal depth layers: walking front to back, a new layer opens once a
    person is at least ``threshold`` behind the first member of the current layer."""
    z = np.asarray(depths, dtype=float)
    order = np.argsort(z, kind="stable")
    layers = [0] * len(z)
    layer, anchor = -1, -math.inf
    for idx in order:
        if z[idx] - anchor >= threshold:
            layer += 1
            anchor = z[idx]
        layers[idx] = layer
    return layers


def fov_loss(pred: float, gt: float) -> float:
    """Squared FoV error, weighted 3x when the prediction overshoots."""
    err = (gt - pred) ** 2
    return FOV_OVERESTIMATE_WEIGHT * err if pred > gt else err


def relative_metric_loss(pairs, tau: float = RELATIVE_METRIC_TAU) -> float:
    """Mean of log(1 + |pred_rd - gt_rd|) over pairs whose gt distance is below tau."""
    terms = [math.log1p(abs(p - g)) for p, g in pairs if g < tau]
    return math.fsum(terms) / len(terms) if terms else 0.0


def relative_metric_loss_grad(pairs, tau: float = RELATIVE_METRIC_TAU) -> np.ndarray:
    """Gradient of :func:`relative_metric_loss` w.r.t. each pair's predicted distance."""
    pairs = list(pairs)
    n = sum(1 for _, g in pairs if g < tau)
    grad = np.zeros(len(pairs))
    if n == 0:
        return grad
    for k, (p, g) in enumerate(pairs):
        if g < tau:
            grad[k] = np.sign(p - g) / (1.0 + abs(p - g)) / n
    return grad


def height_error(pred_heights, gt_heights) -> float:
    """Mean absolute height error in millimeters."""
    pred = np.asarray(pred_heights, dtype=float)
    gt = np.asarray(gt_heights, dtype=float)
    if pred.shape != gt.shape:
        raise DomainError(f"length mismatch: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise DomainError("no heights to compare")
    return float(np.mean(np.abs(pred - gt))) * 1000.0


def match_keypoints(query, visible, target, head_height: float) -> bool:
    """True when more than half of the visible query keypoints land within half a
    head height of their corresponding projected joint."""
    if not head_height > 0.0:
        raise DomainError("head_height must be positive")
    q = np.asarray(query, dtype=float).reshape(-1, 2)
    t = np.asarray(target, dtype=float).reshape(-1, 2)
    vis = np.asarray(visible, dtype=bool).reshape(-1)
    if q.shape != t.shape or len(vis) != len(q):
        raise DomainError("query, target and visibility must share joint indexing")
    n_vis = int(vis.sum())
    if n_vis == 0:
        raise DomainError("no visible keypoints")
    dist = np.linalg.norm(q - t, axis=1)
    matched = int(np.sum(vis & (dist < head_height / 2.0)))
    return matched > n_vis / 2.0


def evaluate(predictions: dict, annotations: dict, equal_threshold: float = PCDR_EQUAL_THRESHOLD,
             aggregation: str = "images") -> tuple[dict, list]:
    """Score predictions against annotations, scene by scene.

    ``predictions`` maps scene -> {person id: (depth, height)}; ``annotations``
    maps scene -> [(person id, age group, GroundTruthAnnotation)]. Group columns
    count pairs with at least one member of the group. Returns the report and
    per-person rows.
    """
    if aggregation not in ("images", "pairs"):
        raise DomainError(f"aggregation must be 'images' or 'pairs', got {aggregation!r}")
    groups = ("Baby", "Kid", "Teen", "Adult")
    tallies = {g: [] for g in ("all",) + groups}   # per-image (correct, total)
    pred_h, gt_h, rows = [], [], []
    n_scenes = 0
    for scene in sorted(annotations):
        if scene not in predictions:
            continue
        n_scenes += 1
        pred = predictions[scene]
        depths, layers, ages = [], [], []
        for pid, age, ann in annotations[scene]:
            if pid not in pred:
                continue
            z, h = pred[pid]
            rows.append({"scene": scene, "id": pid, "age_group": getattr(age, "value", age),
                         "pred_depth": z, "gt_depth": ann.gt_depth, "pred_height": h,
                         "gt_height": ann.gt_height, "depth_layer": ann.depth_layer})
            if ann.gt_height is not None:
                pred_h.append(h)
                gt_h.append(ann.gt_height)
            if ann.depth_layer is not None:
                depths.append(z)
                layers.append(ann.depth_layer)
                ages.append(getattr(age, "value", age))
        if len(depths) < 2:
            continue
        tallies["all"].append(depth_relation_pairs(depths, layers, equal_threshold))
        for g in groups:
            members = [a == g for a in ages]
            if any(members):
                c, t = depth_relation_pairs(depths, layers, equal_threshold, members)
                if t:
                    tallies[g].append((c, t))

    def score(items):
        if not items:
            return None
        if aggregation == "pairs":
            return sum(c for c, _ in items) / sum(t for _, t in items)
        return math.fsum(c / t for c, t in items) / len(items)

    report = {
        "pcdr": score(tallies["all"]),
        "pcdr_by_group": {g: score(tallies[g]) for g in groups},
        "height_error_mm": height_error(pred_h, gt_h) if pred_h else None,
        "n_scenes": n_scenes,
        "n_pairs": sum(t for _, t in tallies["all"]),
    }
    return report, rows
