"""Anatomical label hierarchy for bronchial trees.

Three nested levels: 5 lobes, 18 segment classes, 126 named subsegments
(each segment contributes a, b, c, a+b, b+c, a+c and the a+b+c stem).
``Trunk`` is the pass-through class at every level for branches that are
not part of a named anatomy (trachea, main and intermediate bronchi).

Subsegment annotation codes: 0 = root/default subsegment (the a+b+c stem
before the basic division), 1-3 = a, b, c, 4-6 = a+b, b+c, a+c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DimsMismatch, UnknownLabelId

TRUNK = "Trunk"

LOBAR_CLASSES = ("LUB", "LLB", "RUB", "RMB", "RLB")

LOBAR_SEGMENTS = {
    "LUB": ("LB1+2", "LB3", "LB4", "LB5"),
    "LLB": ("LB6", "LB8", "LB9", "LB10"),
    "RUB": ("RB1", "RB2", "RB3"),
    "RMB": ("RB4", "RB5"),
    "RLB": ("RB6", "RB7", "RB8", "RB9", "RB10"),
}

SEGMENT_CLASSES = tuple(s for segs in LOBAR_SEGMENTS.values() for s in segs)

SEGMENT_LOBE = {seg: lobe for lobe, segs in LOBAR_SEGMENTS.items() for seg in segs}

# Segments whose subsegmental anatomy uses all three basic branches a, b, c;
# the rest divide into a and b only.
THREE_SUBSEGMENT_CLASSES = ("LB1+2", "LB3", "LB6", "LB10", "RB6", "RB10")

# Annotation code <-> suffix. Code 0 is the stem carrying all basic
# subsegments, named with the full a+b+c suffix.
CODE_SUFFIX = {0: "a+b+c", 1: "a", 2: "b", 3: "c", 4: "a+b", 5: "b+c", 6: "a+c"}
SUFFIX_CODE = {v: k for k, v in CODE_SUFFIX.items()}

# Co-trunk codes and the pair of basic codes each one bundles.
COTRUNK_MEMBERS = {4: (1, 2), 5: (2, 3), 6: (1, 3)}

SUBSEGMENT_CLASSES = tuple(
    f"{seg}{CODE_SUFFIX[code]}" for seg in SEGMENT_CLASSES for code in (1, 2, 3, 4, 5, 6, 0)
)

# Inter-subsegment analysis blocks: groups of segments whose subsegments
# may share co-trunks across segment boundaries.
BLOCKS_INTER_SUB = {
    "LUB-upper": ("LB1+2", "LB3"),
    "lingula": ("LB4", "LB5"),
    "LLB": ("LB6", "LB8", "LB9", "LB10"),
    "RUB": ("RB1", "RB2", "RB3"),
    "RMB": ("RB4", "RB5"),
    "RLB": ("RB6", "RB7", "RB8", "RB9", "RB10"),
}


def split_subsegment_name(name: str) -> tuple[str, int]:
    """Split e.g. 'LB1+2a+b' into ('LB1+2', 4)."""
    for suffix in sorted(SUFFIX_CODE, key=len, reverse=True):
        if name.endswith(suffix) and name[: -len(suffix)] in SEGMENT_LOBE:
            return name[: -len(suffix)], SUFFIX_CODE[suffix]
    raise UnknownLabelId(f"not a subsegment class name: {name!r}")


def resolve_class(name: str) -> tuple[str, str, int | None]:
    """Map any class name to its (lobar, segment, subsegment code) triple.

    Trunk maps to (Trunk, Trunk, None); a segment name has code None; a
    lobar name has segment Trunk.
    """
    if name == TRUNK:
        return TRUNK, TRUNK, None
    if name in LOBAR_SEGMENTS:
        return name, TRUNK, None
    if name in SEGMENT_LOBE:
        return SEGMENT_LOBE[name], name, None
    seg, code = split_subsegment_name(name)
    return SEGMENT_LOBE[seg], seg, code


def canonical_codebook() -> dict[int, str]:
    """Integer id -> class name: ids 1-126 subsegments, 127 Trunk, 128+ lobar."""
    book = {i + 1: name for i, name in enumerate(SUBSEGMENT_CLASSES)}
    book[127] = TRUNK
    for i, lobe in enumerate(LOBAR_CLASSES):
        book[128 + i] = lobe
    return book


@dataclass
class BranchLabels:
    """Hierarchical labels of one branch; Trunk marks pass-through stems."""

    lobar: str = TRUNK
    segment: str = TRUNK
    subsegment_code: int | None = None

    def subsegment_name(self) -> str | None:
        if self.segment == TRUNK or self.subsegment_code is None:
            return None
        return f"{self.segment}{CODE_SUFFIX[self.subsegment_code]}"

    def at_level(self, level: str) -> str:
        if level == "lobar":
            return self.lobar
        if level == "segmental":
            return self.segment
        if level == "subsegmental":
            return self.subsegment_name() or TRUNK
        raise ValueError(f"unknown level {level!r}")


@dataclass
class LabeledGraph:
    """AirwayGraph plus per-branch anatomical labels, parallel to graph.branches."""

    graph: "AirwayGraph"  # noqa: F821 - annotation only; see from_json
    labels: list[BranchLabels] = field(default_factory=list)

    def branch_ids_with_segment(self, segment: str) -> list[int]:
        return [b.id for b, lab in zip(self.graph.branches, self.labels) if lab.segment == segment]

    def branch_ids_with_lobe(self, lobe: str) -> list[int]:
        return [b.id for b, lab in zip(self.graph.branches, self.labels) if lab.lobar == lobe]

    def to_json(self, include_voxels: bool = True) -> str:
        import json

        doc = json.loads(self.graph.to_json(include_voxels=include_voxels))
        doc["schema"] = "bronchograph/labeled-graph/v1"
        doc["labels"] = [
            {
                "lobar": lab.lobar,
                "segment": lab.segment,
                "subsegment_code": lab.subsegment_code,
            }
            for lab in self.labels
        ]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LabeledGraph":
        import json

        from .graph import AirwayGraph

        doc = json.loads(text)
        graph = AirwayGraph.from_json(text)
        labels = [
            BranchLabels(d["lobar"], d["segment"], d["subsegment_code"])
            for d in doc["labels"]
        ]
        return cls(graph, labels)


def assign_labels(graph, labels_volume, codebook: dict[int, str]) -> LabeledGraph:
    """Label each branch by majority vote of label ids over its centerline.

    The winning class must hold at least half the centerline voxels and be
    unique, otherwise the branch falls back to Trunk. Subsegmental wins
    imply the parent segment and lobe; value 0 in the volume means
    unlabeled and votes for Trunk.
    """
    if labels_volume.dims != graph.dims:
        raise DimsMismatch(
            f"labels dims {labels_volume.dims} != graph dims {graph.dims}"
        )
    known = set(codebook)
    present = set(int(v) for v in set(labels_volume.data.ravel().tolist())) - {0}
    unknown = present - known
    if unknown:
        raise UnknownLabelId(f"label ids {sorted(unknown)} missing from codebook")

    out = []
    data = labels_volume.data
    for branch in graph.branches:
        counts: dict[int, int] = {}
        for x, y, z in branch.centerline:
            lab = int(data[x, y, z])
            counts[lab] = counts.get(lab, 0) + 1
        total = len(branch.centerline)
        top = max(counts.values())
        winners = [lab for lab, c in counts.items() if c == top]
        if len(winners) > 1 or top * 2 < total:
            out.append(BranchLabels())
            continue
        winner = winners[0]
        if winner == 0:
            out.append(BranchLabels())
            continue
        lobar, segment, code = resolve_class(codebook[winner])
        out.append(BranchLabels(lobar, segment, code))
    return LabeledGraph(graph, out)


def check_hierarchy(lg: LabeledGraph) -> list[str]:
    """Return one message per branch violating hierarchy consistency."""
    violations = []
    for branch, lab in zip(lg.graph.branches, lg.labels):
        if lab.subsegment_code is not None and lab.segment == TRUNK:
            violations.append(
                f"branch {branch.id}: subsegment code {lab.subsegment_code} without a segment label"
            )
            continue
        if lab.segment != TRUNK:
            implied = SEGMENT_LOBE[lab.segment]
            if lab.lobar != implied:
                violations.append(
                    f"branch {branch.id}: segment {lab.segment} implies lobe {implied}, got {lab.lobar}"
                )
    return violations
