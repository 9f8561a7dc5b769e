"""Six morphological descriptors aggregated over 23 anatomical components.

Per parsed branch: stenosis 1 - r_min/r_mean and ectasia r_max/r_mean over
the centerline radii; tortuosity from the bend angle at the point of
maximal deviation from the branch chord, normalized to [0, 1].

Per component (subtree-level): geodesic length of the class's leaf paths,
divergence as the normalized apex angle of the minimal cone enclosing the
apex-to-leaf directions, and complexity as the box-counting slope of the
class skeleton. Components with no labeled branch carry the -1 sentinel
in all six columns.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateApex
from .taxonomy import LOBAR_CLASSES, SEGMENT_CLASSES, LabeledGraph

COMPONENTS = tuple(LOBAR_CLASSES) + tuple(SEGMENT_CLASSES)
DESCRIPTORS = ("stenosis", "ectasia", "tortuosity", "divergence", "length", "complexity")
MISSING = -1.0


@dataclass
class SignatureMatrix:
    values: np.ndarray  # (23, 6), -1 marks an absent component
    components: tuple[str, ...] = COMPONENTS

    def row(self, component: str) -> dict[str, float]:
        i = self.components.index(component)
        return {d: float(v) for d, v in zip(DESCRIPTORS, self.values[i])}

    def to_csv(self) -> str:
        lines = ["component," + ",".join(DESCRIPTORS)]
        for name, row in zip(self.components, self.values):
            lines.append(name + "," + ",".join(f"{v:.10g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SignatureMatrix":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")[1:]
        if tuple(header) != DESCRIPTORS:
            raise ValueError(f"unexpected signature columns {header}")
        names = []
        rows = []
        for ln in lines[1:]:
            parts = ln.split(",")
            names.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
        return cls(np.asarray(rows), tuple(names))

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": "bronchograph/signature/v1",
                "components": list(self.components),
                "descriptors": list(DESCRIPTORS),
                "values": self.values.tolist(),
            }
        )


def _component_members(lg: LabeledGraph, component: str) -> list[int]:
    if component in LOBAR_CLASSES:
        return [b.id for b, lab in zip(lg.graph.branches, lg.labels) if lab.lobar == component]
    return [b.id for b, lab in zip(lg.graph.branches, lg.labels) if lab.segment == component]


def branch_stenosis(branch) -> float:
    r = branch.radii_mm
    return float(1.0 - r.min() / r.mean())


def branch_ectasia(branch) -> float:
    r = branch.radii_mm
    return float(r.max() / r.mean())


def branch_tortuosity(branch, spacing) -> float:
    """Bend angle at the farthest centerline voxel from the branch chord,
    mapped to [0, 1] via 1 - alpha/pi (straight branch -> 0).

    Measured on the centerline curve: the collinear straight-branch limit
    and the inscribed-angle value of circular arcs only hold for the
    medial curve, not for the solid branch region.
    """
    voxels = np.asarray(branch.centerline, dtype=np.int64)
    if len(voxels) < 3:
        return 0.0
    pts = voxels.astype(float) * np.asarray(spacing)
    centered = pts - pts.mean(axis=0)
    # First principal axis of the branch region.
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    proj = centered @ axis
    s = pts[int(np.argmin(proj))]
    e = pts[int(np.argmax(proj))]
    chord = e - s
    chord_len = np.linalg.norm(chord)
    if chord_len < 1e-12:
        return 0.0
    perp = np.linalg.norm(np.cross(pts - s, chord / chord_len), axis=1)
    p = pts[int(np.argmax(perp))]
    if perp.max() < 1e-12:
        return 0.0
    v1 = s - p
    v2 = e - p
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 < 1e-12 or n2 < 1e-12:
        return 0.0
    alpha = float(np.arccos(np.clip(v1 @ v2 / (n1 * n2), -1.0, 1.0)))
    return float(np.clip(1.0 - alpha / np.pi, 0.0, 1.0))


def stenosis(lg: LabeledGraph) -> dict[str, float]:
    return _per_component_mean(lg, branch_stenosis)


def ectasia(lg: LabeledGraph) -> dict[str, float]:
    return _per_component_mean(lg, branch_ectasia)


def tortuosity(lg: LabeledGraph) -> dict[str, float]:
    spacing = lg.graph.spacing
    return _per_component_mean(lg, lambda b: branch_tortuosity(b, spacing))


def _per_component_mean(lg: LabeledGraph, fn) -> dict[str, float]:
    out = {}
    for component in COMPONENTS:
        members = _component_members(lg, component)
        if not members:
            out[component] = MISSING
        else:
            out[component] = float(
                np.mean([fn(lg.graph.branches[i]) for i in members])
            )
    return out


def _class_leaves(lg: LabeledGraph, members: list[int]) -> list[int]:
    """Tree leaves of the class; falls back to the class's deepest branches
    (no labeled descendant) so a populated class always has leaves."""
    member_set = set(members)
    tree_leaves = [i for i in members if not lg.graph.branches[i].children]
    if tree_leaves:
        return tree_leaves
    desc = lg.graph.descendant_mask
    return [
        i
        for i in members
        if not any(j != i and desc[i][j] for j in member_set)
    ]


def _multi_lca(lg: LabeledGraph, ids: list[int]) -> int:
    cur = ids[0]
    for other in ids[1:]:
        cur = int(lg.graph.lca[cur, other])
    return cur


def geodesic_length(lg: LabeledGraph, component: str) -> float:
    """Mean summed branch length along the paths from the class LCA (or the
    first labeled node below it) to each class leaf; -1 when absent."""
    members = _component_members(lg, component)
    if not members:
        return MISSING
    member_set = set(members)
    leaves = _class_leaves(lg, members)
    lca = _multi_lca(lg, leaves)

    totals = []
    for leaf in leaves:
        path = [leaf]
        cur = leaf
        while cur != lca:
            cur = lg.graph.branches[cur].parent
            path.append(cur)
        path.reverse()  # lca -> leaf
        if lca not in member_set:
            # Re-root at the nearest labeled node going down the path.
            while path and path[0] not in member_set:
                path.pop(0)
        totals.append(sum(lg.graph.branches[i].length_mm for i in path))
    return float(np.mean(totals))


def _cone_candidates(vectors: np.ndarray):
    yield from vectors
    for i, j in combinations(range(len(vectors)), 2):
        s = vectors[i] + vectors[j]
        norm = np.linalg.norm(s)
        if norm > 1e-12:
            yield s / norm
    for i, j, k in combinations(range(len(vectors)), 3):
        m = vectors[[i, j, k]]
        try:
            x = np.linalg.solve(m, np.ones(3))
        except np.linalg.LinAlgError:
            continue
        norm = np.linalg.norm(x)
        if norm > 1e-12:
            yield x / norm
            yield -x / norm


def enclosing_cone_angle(vectors: np.ndarray) -> float:
    """Apex angle (radians) of the minimal cone enclosing the unit vectors.

    Exact support-set enumeration for up to 12 vectors (the optimum is
    determined by at most three support vectors); subgradient ascent
    refinement for larger sets.
    """
    vectors = np.asarray(vectors, dtype=float)
    if len(vectors) == 1:
        return 0.0
    if len(vectors) <= 12:
        best = -1.0
        for u in _cone_candidates(vectors):
            worst = float((vectors @ u).min())
            if worst > best:
                best = worst
        return 2.0 * float(np.arccos(np.clip(best, -1.0, 1.0)))
    u = vectors.mean(axis=0)
    u = u / np.linalg.norm(u)
    step = 0.5
    for _ in range(800):
        dots = vectors @ u
        worst = vectors[int(np.argmin(dots))]
        u = u + step * (worst - float(worst @ u) * u)
        u = u / np.linalg.norm(u)
        step *= 0.995
    return 2.0 * float(np.arccos(np.clip(float((vectors @ u).min()), -1.0, 1.0)))


def divergence(lg: LabeledGraph, component: str) -> float:
    """Normalized apex angle of the cone enclosing apex-to-leaf directions;
    apex = distal end of the class LCA branch."""
    members = _component_members(lg, component)
    if not members:
        return MISSING
    leaves = _class_leaves(lg, members)
    if len(leaves) == 1:
        return 0.0
    lca = _multi_lca(lg, leaves)
    apex = np.asarray(lg.graph.branches[lca].end_mm)
    vectors = []
    for leaf in leaves:
        tip = np.asarray(lg.graph.branches[leaf].end_mm)
        d = tip - apex
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            raise DegenerateApex(f"apex coincides with leaf branch {leaf}")
        vectors.append(d / norm)
    theta = enclosing_cone_angle(np.asarray(vectors))
    return float(min(theta / np.pi, 1.0))


def box_counts(volume: np.ndarray, sizes) -> list[int]:
    """Number of non-empty grid-aligned boxes per size (cube input)."""
    counts = []
    n = volume.shape[0]
    for s in sizes:
        view = volume[: n // s * s, : n // s * s, : n // s * s].reshape(
            n // s, s, n // s, s, n // s, s
        )
        occupied = view.any(axis=(1, 3, 5))
        counts.append(int(occupied.sum()))
    return counts


def complexity(lg: LabeledGraph, component: str, pad_size: int = 64) -> float:
    """Box-counting slope of the class skeleton after cropping to its
    bounding box and zero-padding into a pad_size^3 cube (the pad grows to
    the next power of two when the class does not fit)."""
    members = _component_members(lg, component)
    if not members:
        return MISSING
    voxels = []
    for i in members:
        voxels.extend(lg.graph.branches[i].owned_centerline())
    pts = np.asarray(voxels, dtype=np.int64)
    pts = pts - pts.min(axis=0)
    size = pad_size
    while size < pts.max() + 1:
        size *= 2
    cube = np.zeros((size, size, size), dtype=bool)
    cube[pts[:, 0], pts[:, 1], pts[:, 2]] = True
    sizes = [2 ** k for k in range(1, int(np.log2(size)))]
    counts = box_counts(cube, sizes)
    x = np.log(1.0 / np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def signature_matrix(lg: LabeledGraph, pad_size: int = 64) -> SignatureMatrix:
    """All six descriptors over the 23 components; rows for absent
    components are -1 across the board."""
    spacing = lg.graph.spacing
    values = np.full((len(COMPONENTS), len(DESCRIPTORS)), MISSING)
    for r, component in enumerate(COMPONENTS):
        members = _component_members(lg, component)
        if not members:
            continue
        branches = [lg.graph.branches[i] for i in members]
        values[r, 0] = float(np.mean([branch_stenosis(b) for b in branches]))
        values[r, 1] = float(np.mean([branch_ectasia(b) for b in branches]))
        values[r, 2] = float(np.mean([branch_tortuosity(b, spacing) for b in branches]))
        try:
            values[r, 3] = divergence(lg, component)
        except DegenerateApex:
            warnings.warn(f"degenerate cone apex for {component}; divergence set to 0")
            values[r, 3] = 0.0
        values[r, 4] = geodesic_length(lg, component)
        values[r, 5] = complexity(lg, component, pad_size)
    return SignatureMatrix(values)
