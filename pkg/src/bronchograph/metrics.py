"""Evaluation measures: voxel overlap, topology detection rates, labeling
consistency, and scalar loss evaluators.

Empty-set conventions keep cohort aggregation NaN-free: DSC of two empty
masks is 1, and sensitivity/precision with an empty denominator are 1
(vacuously perfect). Detection and length rates are computed on the
ground-truth branch graph's centerlines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edt import distance_transform
from .errors import DimsMismatch, GraphMismatch, ProbOutOfRange
from .graph import AirwayGraph
from .skeleton import SkeletonTree
from .taxonomy import LabeledGraph
from .volume import Volume

_EPS = 1e-7


@dataclass
class OverlapReport:
    dsc: float
    sensitivity: float
    precision: float


@dataclass
class DetectionReport:
    tld: float  # percent
    bnd: float  # percent
    t_det: float
    t_ref: float
    b_det: int
    b_ref: int


@dataclass
class LabelMetricsReport:
    tree_consistency: float  # percent
    topo_distance: float  # mean graph hops
    accuracy: float
    macro_precision: float
    macro_sensitivity: float
    n_subtrees: int
    n_consistent: int
    confusion: dict[tuple[str, str], int]


def _check_dims(a, b):
    if a.dims != b.dims:
        raise DimsMismatch(f"volume dims differ: {a.dims} vs {b.dims}")


def overlap_metrics(pred: Volume, gt: Volume) -> OverlapReport:
    _check_dims(pred, gt)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    inter = int(np.count_nonzero(p & g))
    np_, ng = int(p.sum()), int(g.sum())
    dsc = 1.0 if np_ + ng == 0 else 2.0 * inter / (np_ + ng)
    sens = 1.0 if ng == 0 else inter / ng
    prec = 1.0 if np_ == 0 else inter / np_
    return OverlapReport(dsc, sens, prec)


def cl_dice(pred: Volume, gt: Volume, skel_pred: SkeletonTree, skel_gt: SkeletonTree) -> float:
    """Harmonic mean of skeleton-in-mask precision and sensitivity."""
    _check_dims(pred, gt)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    pred_vox = [n.voxel for n in skel_pred.nodes]
    gt_vox = [n.voxel for n in skel_gt.nodes]
    tprec = sum(1 for v in pred_vox if g[v]) / len(pred_vox)
    tsens = sum(1 for v in gt_vox if p[v]) / len(gt_vox)
    if tprec + tsens == 0:
        return 0.0
    return 2.0 * tprec * tsens / (tprec + tsens)


def detection_rates(
    pred: Volume, gt_graph: AirwayGraph, coverage_threshold: float = 0.8
) -> DetectionReport:
    """Tree-length and branch-number detection of the gt centerlines.

    A centerline step counts as detected when both of its voxels lie in
    the prediction; a branch is detected when more than the threshold
    fraction of its centerline voxels lie in the prediction.
    """
    if pred.dims != gt_graph.dims:
        raise DimsMismatch(f"pred dims {pred.dims} != graph dims {gt_graph.dims}")
    p = pred.data.astype(bool)
    sp = np.asarray(gt_graph.spacing)

    t_ref = 0.0
    t_det = 0.0
    b_det = 0
    for b in gt_graph.branches:
        pts = np.asarray(b.centerline)
        inside = p[pts[:, 0], pts[:, 1], pts[:, 2]]
        if len(pts) > 1:
            steps = np.linalg.norm(np.diff(pts, axis=0) * sp, axis=1)
            t_ref += float(steps.sum())
            t_det += float(steps[inside[:-1] & inside[1:]].sum())
        if inside.mean() > coverage_threshold:
            b_det += 1
    b_ref = len(gt_graph.branches)
    tld = 100.0 if t_ref == 0 else 100.0 * (t_det / t_ref)
    bnd = 100.0 * (b_det / b_ref)
    return DetectionReport(tld, bnd, t_det, t_ref, b_det, b_ref)


def _graph_hop_matrix(g: AirwayGraph) -> np.ndarray:
    depth = g.depths()
    lca = g.lca
    return depth[:, None] + depth[None, :] - 2 * depth[lca]


def label_metrics(
    pred: LabeledGraph, gt: LabeledGraph, level: str = "segmental"
) -> LabelMetricsReport:
    """Node-level labeling metrics at one anatomical level."""
    gp, gg = pred.graph, gt.graph
    if (
        len(gp.branches) != len(gg.branches)
        or gp.dims != gg.dims
        or any(
            a.parent != b.parent or a.centerline != b.centerline
            for a, b in zip(gp.branches, gg.branches)
        )
    ):
        raise GraphMismatch("pred and gt must label the same underlying graph")

    y_pred = [lab.at_level(level) for lab in pred.labels]
    y_gt = [lab.at_level(level) for lab in gt.labels]
    n = len(y_gt)

    accuracy = sum(1 for a, b in zip(y_pred, y_gt) if a == b) / n

    confusion: dict[tuple[str, str], int] = {}
    for a, b in zip(y_gt, y_pred):
        confusion[(a, b)] = confusion.get((a, b), 0) + 1

    classes = sorted(set(y_gt))
    precisions = []
    sensitivities = []
    for c in classes:
        tp = confusion.get((c, c), 0)
        pred_c = sum(v for (gt_c, pr_c), v in confusion.items() if pr_c == c)
        gt_c = sum(v for (gt_c2, _), v in confusion.items() if gt_c2 == c)
        precisions.append(tp / pred_c if pred_c else 0.0)
        sensitivities.append(tp / gt_c if gt_c else 0.0)
    macro_precision = float(np.mean(precisions))
    macro_sensitivity = float(np.mean(sensitivities))

    # Subtree consistency: an anatomical subtree is a maximal connected set
    # of one gt class (a class arising from two separate stems contributes
    # two subtrees); it is consistent when it carries a single predicted
    # class.
    hops = _graph_hop_matrix(gg)
    n_subtrees = 0
    n_consistent = 0
    for c in classes:
        members = [i for i, y in enumerate(y_gt) if y == c]
        for component in _connected_components_in_tree(gg, members):
            n_subtrees += 1
            if len({y_pred[i] for i in component}) == 1:
                n_consistent += 1
    tree_cons = 100.0 * (n_consistent / n_subtrees)

    diameter = int(hops.max())
    penalty = diameter + 1
    total = 0.0
    for i in range(n):
        targets = [j for j in range(n) if y_gt[j] == y_pred[i]]
        total += min((int(hops[i, j]) for j in targets), default=penalty)
    topo = total / n

    return LabelMetricsReport(
        tree_cons,
        topo,
        accuracy,
        macro_precision,
        macro_sensitivity,
        n_subtrees,
        n_consistent,
        confusion,
    )


def _connected_components_in_tree(g: AirwayGraph, members: list[int]) -> list[list[int]]:
    member_set = set(members)
    roots = [i for i in members if g.branches[i].parent not in member_set]
    components = []
    for r in roots:
        comp = []
        stack = [r]
        while stack:
            i = stack.pop()
            comp.append(i)
            stack.extend(c for c in g.branches[i].children if c in member_set)
        components.append(sorted(comp))
    return components


def confusion_to_csv(report: LabelMetricsReport) -> str:
    gt_classes = sorted({k[0] for k in report.confusion})
    pred_classes = sorted({k[1] for k in report.confusion} | set(gt_classes))
    lines = ["gt\\pred," + ",".join(pred_classes)]
    for a in gt_classes:
        lines.append(
            a + "," + ",".join(str(report.confusion.get((a, b), 0)) for b in pred_classes)
        )
    return "\n".join(lines) + "\n"


def _as_prob(volume_or_array, name: str) -> np.ndarray:
    data = volume_or_array.data if isinstance(volume_or_array, Volume) else volume_or_array
    arr = np.asarray(data, dtype=float)
    if arr.min() < 0 or arr.max() > 1:
        raise ProbOutOfRange(f"{name} has values outside [0, 1]")
    return arr


def loss_value(
    kind: str,
    pred_prob,
    gt: Volume,
    centerline_map=None,
    voxel_weights=None,
    alpha_map=None,
    alpha_t: float = 0.1,
    beta_t: float = 0.9,
    r_l: float = 0.7,
    alpha: float = 0.2,
    beta: float = 0.7,
    eps: float = _EPS,
) -> float:
    """Scalar evaluation of a segmentation objective (no gradients).

    Kinds: dice_focal, cal, cal_lsd, gu, bs. The voxel weight maps default
    to 1 everywhere; cross-entropy and focal terms clamp probabilities at
    eps before taking logs.
    """
    p = _as_prob(pred_prob, "pred")
    g = np.asarray(gt.data, dtype=float)
    if p.shape != tuple(gt.dims):
        raise DimsMismatch(f"pred shape {p.shape} != gt dims {gt.dims}")

    kind = kind.lower()
    if kind == "dice_focal":
        denom = float((p + g).sum())
        dice = 1.0 if denom == 0 else 2.0 * float((p * g).sum()) / denom
        p_t = np.clip(p * g + (1 - p) * (1 - g), eps, 1.0)
        focal = -float(((1 - p_t) ** 2 * np.log(p_t)).mean())
        return -dice + focal

    if kind in ("cal", "cal_lsd"):
        w = np.ones_like(p) if alpha_map is None else np.asarray(alpha_map, dtype=float)
        denom = alpha_t * float(p.sum()) + beta_t * float(g.sum())
        ratio = 1.0 if denom == 0 else float((p * g).sum()) / denom
        pc = np.clip(p, eps, 1 - eps)
        ce = -(g * np.log(pc) + (1 - g) * np.log(1 - pc))
        value = (1.0 - ratio) + float((w * ce).sum())
        if kind == "cal_lsd":
            spacing = gt.spacing
            d_gt = distance_transform(gt).data
            p_bin = Volume((p >= 0.5).astype(np.uint8), spacing, "binary")
            d_pred = distance_transform(p_bin).data
            value += float(np.linalg.norm((d_gt - d_pred).ravel())) / p.size
        return value

    if kind == "gu":
        w = np.ones_like(p) if voxel_weights is None else np.asarray(voxel_weights, dtype=float)
        a_map = np.ones_like(p) if alpha_map is None else np.asarray(alpha_map, dtype=float)
        num = float((w * np.power(p, r_l) * g).sum())
        denom = float((a_map * (alpha * p + beta * g)).sum())
        ratio = 1.0 if denom == 0 else num / denom
        return 1.0 - ratio

    if kind == "bs":
        if centerline_map is None:
            raise ValueError("bs loss needs a centerline map")
        c = np.asarray(centerline_map, dtype=float)
        return 1.0 - float((p * c).sum()) / (float(c.sum()) + eps)

    raise ValueError(f"unknown loss kind {kind!r}")
