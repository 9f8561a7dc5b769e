"""Branching-pattern classification at three levels.

Intra-segment: cluster the segments of each lobe by shared co-trunks. Two
segments co-trunk when the LCA of their representatives is a pass-through
(Trunk) branch whose subtree holds only those two segments, and that
shared stem is distinct from the lobar bronchus itself (automatic in
lobes with a third segment, impossible in two-segment lobes, whose
segments therefore always arise independently).

Intra-subsegment: per segment, classify stem count and co-trunk type from
the annotation codes present (0 root stem, 1-3 basic a/b/c, 4-6 co-trunks
a+b/b+c/a+c).

Inter-subsegment: cluster subsegment units inside predefined segment
blocks; same-segment units merge through their co-trunk codes, and a unit
merges into a foreign segment when the subtree under their representatives'
LCA contains nothing but that segment, the unit itself, and pass-through
stems. Lobes/segments/blocks with missing anatomy are skipped rather than
guessed. Clusters are reported in canonical sorted form.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .taxonomy import (
    BLOCKS_INTER_SUB,
    CODE_SUFFIX,
    COTRUNK_MEMBERS,
    LOBAR_SEGMENTS,
    SEGMENT_CLASSES,
    THREE_SUBSEGMENT_CLASSES,
    TRUNK,
    LabeledGraph,
    split_subsegment_name,
)

FURCATION_NAMES = {1: "Mono", 2: "Bi", 3: "Tri", 4: "Quadri", 5: "Quint"}


class _DSU:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def clusters(self):
        groups: dict = {}
        for x in self.parent:
            groups.setdefault(self.find(x), []).append(x)
        return sorted(sorted(g) for g in groups.values())


@dataclass
class PatternReport:
    case_id: str = ""
    intra_segment: dict[str, dict] = field(default_factory=dict)  # lobe -> result
    intra_subsegment: dict[str, dict] = field(default_factory=dict)  # segment -> result
    inter_subsegment: dict[str, dict] = field(default_factory=dict)  # block -> result

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": "bronchograph/patterns/v1",
                "case_id": self.case_id,
                "intra_segment": self.intra_segment,
                "intra_subsegment": self.intra_subsegment,
                "inter_subsegment": self.inter_subsegment,
            },
            indent=2,
        )


def _segment_number(name: str) -> str:
    """'LB1+2' -> '1+2', 'RB10' -> '10'."""
    return re.sub(r"^[LR]B", "", name)


def _cluster_config(clusters: list[list[str]]) -> str:
    """Render segment clusters in compact clinical notation: {LB1+2, LB3} -> 'B1+2+3'."""
    def key(cluster):
        return min(int(p) for m in cluster for p in _segment_number(m).split("+"))

    parts = []
    for cluster in sorted(clusters, key=key):
        numbers = sorted(
            (p for m in cluster for p in _segment_number(m).split("+")), key=int
        )
        parts.append("B" + "+".join(numbers))
    return ",".join(parts)


def _representatives(lg: LabeledGraph, key) -> dict[str, int]:
    """Minimum-generation branch per class; ties break on branch id."""
    reps: dict[str, int] = {}
    best: dict[str, tuple[int, int]] = {}
    for branch, lab in zip(lg.graph.branches, lg.labels):
        k = key(lab)
        if k is None:
            continue
        cand = (branch.generation, branch.id)
        if k not in best or cand < best[k]:
            best[k] = cand
            reps[k] = branch.id
    return reps


def _subtree_ids(lg: LabeledGraph, node: int) -> list[int]:
    mask = lg.graph.descendant_mask[node]
    return [i for i in range(len(lg.graph.branches)) if mask[i]]


def intra_segment_patterns(lg: LabeledGraph) -> dict[str, dict]:
    """Per-lobe segment clustering (skips lobes with missing segments)."""
    reps = _representatives(lg, lambda lab: lab.segment if lab.segment != TRUNK else None)

    def cotrunk_pair(i: str, j: str, lobe_segments) -> bool:
        lca = int(lg.graph.lca[reps[i], reps[j]])
        if lg.labels[lca].segment != TRUNK:
            return False
        for d in _subtree_ids(lg, lca):
            if lg.labels[d].segment not in (i, j, TRUNK):
                return False
        # The shared stem must not be the lobar bronchus itself; with the
        # subtree test above this reduces to the lobe having a third segment.
        return len(lobe_segments) > 2

    out: dict[str, dict] = {}
    for lobe, segments in LOBAR_SEGMENTS.items():
        if any(s not in reps for s in segments):
            continue  # lobe skipped: incomplete anatomy
        dsu = _DSU(segments)
        for a in range(len(segments)):
            for b in range(a + 1, len(segments)):
                if cotrunk_pair(segments[a], segments[b], segments):
                    dsu.union(segments[a], segments[b])
        clusters = dsu.clusters()
        out[lobe] = {
            "clusters": clusters,
            "configuration": _cluster_config(clusters),
            "furcation": FURCATION_NAMES.get(len(clusters), str(len(clusters))),
        }
    return out


def intra_subsegment_patterns(lg: LabeledGraph) -> dict[str, dict]:
    """Per-segment stem count and co-trunk type from annotation codes."""
    codes: dict[str, set[int]] = {}
    for lab in lg.labels:
        if lab.segment != TRUNK and lab.subsegment_code is not None:
            codes.setdefault(lab.segment, set()).add(lab.subsegment_code)

    out: dict[str, dict] = {}
    for segment in SEGMENT_CLASSES:
        present = codes.get(segment, set())
        if not present:
            continue
        three = segment in THREE_SUBSEGMENT_CLASSES
        cotrunks = sorted(present & {4, 5, 6})
        if three:
            if not {1, 2, 3} <= present or len(cotrunks) > 1:
                continue  # incomplete or ambiguous: invalid
            cotrunk_type = CODE_SUFFIX[cotrunks[0]] if cotrunks else "trifurcation"
        else:
            if not {1, 2} <= present:
                continue
            cotrunk_type = "mono"
        stem_number = 1 if 0 in present else 2
        num = _segment_number(segment)
        if not three:
            config = f"B{num}a+b" if stem_number == 1 else f"B{num}a,B{num}b"
            furcation = "Mono" if stem_number == 1 else "Bi"
        elif cotrunk_type == "trifurcation":
            config = f"B{num}a,B{num}b,B{num}c"
            furcation = "Tri"
        else:
            rest = sorted({"a", "b", "c"} - set(cotrunk_type.split("+")))
            config = f"B{num}{cotrunk_type}," + ",".join(f"B{num}{r}" for r in rest)
            furcation = "Bi"
        out[segment] = {
            "valid": True,
            "stem_number": stem_number,
            "cotrunk_type": cotrunk_type,
            "configuration": config,
            "furcation": furcation,
        }
    return out


def inter_subsegment_patterns(lg: LabeledGraph) -> dict[str, dict]:
    """Per-block clustering of subsegment units across segments."""
    intra = intra_subsegment_patterns(lg)

    unit_reps = _representatives(lg, lambda lab: lab.subsegment_name())
    seg_reps = _representatives(lg, lambda lab: lab.segment if lab.segment != TRUNK else None)

    def units_of(segment: str) -> list[str]:
        # Basic + co-trunk units present; the code-0 root is the segment stem.
        out = []
        for name in unit_reps:
            seg, code = split_subsegment_name(name)
            if seg == segment and code != 0:
                out.append(name)
        return sorted(out)

    def same_segment_merges(dsu, segment):
        present = {name[len(segment):]: name for name in units_of(segment)}
        for code, (m1, m2) in COTRUNK_MEMBERS.items():
            ct = CODE_SUFFIX[code]
            if ct in present:
                for member_code in (m1, m2):
                    basic = CODE_SUFFIX[member_code]
                    if basic in present:
                        dsu.union(present[ct], present[basic])

    def trunk_lca_pair(i: str, j: str, block_units) -> bool:
        lca = int(lg.graph.lca[unit_reps[i], unit_reps[j]])
        if lg.labels[lca].segment != TRUNK:
            return False
        for d in _subtree_ids(lg, lca):
            name = lg.labels[d].subsegment_name()
            if lg.labels[d].segment == TRUNK:
                continue
            if name not in (i, j):
                return False
        return len(block_units) > 2

    def foreign_merge(unit: str, unit_segment: str, other_segment: str) -> bool:
        lca = int(lg.graph.lca[unit_reps[unit], seg_reps[other_segment]])
        for d in _subtree_ids(lg, lca):
            lab = lg.labels[d]
            if lab.segment == other_segment or lab.segment == TRUNK:
                continue
            if lab.subsegment_name() == unit:
                continue
            return False
        return True

    out: dict[str, dict] = {}
    for block, segments in BLOCKS_INTER_SUB.items():
        if any(s not in intra or s not in seg_reps for s in segments):
            continue  # block skipped: an incomplete segment
        all_units = [u for s in segments for u in units_of(s)]
        if not all_units:
            continue
        dsu = _DSU(all_units)
        for segment in segments:
            same_segment_merges(dsu, segment)
        for a in range(len(all_units)):
            for b in range(a + 1, len(all_units)):
                ui, uj = all_units[a], all_units[b]
                if dsu.find(ui) != dsu.find(uj) and trunk_lca_pair(ui, uj, all_units):
                    dsu.union(ui, uj)
        for segment in segments:
            for unit in units_of(segment):
                for other in segments:
                    if other == segment:
                        continue
                    if foreign_merge(unit, segment, other):
                        for target in units_of(other):
                            dsu.union(unit, target)
        clusters = dsu.clusters()
        out[block] = {
            "clusters": clusters,
            "configuration": _render_unit_clusters(clusters, segments, units_of),
            "furcation": FURCATION_NAMES.get(len(clusters), str(len(clusters))),
        }
    return out


def _render_unit_clusters(clusters, segments, units_of) -> str:
    """Collapse complete segments inside a cluster: {B4b, B5a, B5b} with all
    of B5 present becomes 'B4b+B5'."""
    rendered = []
    for cluster in clusters:
        cset = set(cluster)
        parts = []
        consumed: set[str] = set()
        for segment in segments:
            units = set(units_of(segment))
            if units and units <= cset:
                parts.append(_short_unit(segment))
                consumed |= units
        for u in sorted(cset - consumed):
            parts.append(_short_unit(u))
        rendered.append("+".join(sorted(parts)))
    return ",".join(sorted(rendered))


def _short_unit(name: str) -> str:
    return re.sub(r"^[LR]B", "B", name)


def analyze_patterns(lg: LabeledGraph, case_id: str = "") -> PatternReport:
    return PatternReport(
        case_id,
        intra_segment_patterns(lg),
        intra_subsegment_patterns(lg),
        inter_subsegment_patterns(lg),
    )


def aggregate_pattern_stats(reports: list[PatternReport]) -> list[dict]:
    """Frequency rows (level, group, configuration, count, percent); the
    denominator counts only cases where the group was valid."""
    rows: list[dict] = []

    def tally(level: str, pick):
        groups: dict[str, dict[str, int]] = {}
        totals: dict[str, int] = {}
        for report in reports:
            for group, result in pick(report).items():
                totals[group] = totals.get(group, 0) + 1
                key = result["configuration"]
                if level == "intra_subsegment":
                    key = f"{result['stem_number']}-stem:{key}"
                groups.setdefault(group, {})
                groups[group][key] = groups[group].get(key, 0) + 1
        for group in sorted(groups):
            for config in sorted(groups[group]):
                count = groups[group][config]
                rows.append(
                    {
                        "level": level,
                        "group": group,
                        "configuration": config,
                        "count": count,
                        "percent": 100.0 * count / totals[group],
                    }
                )

    tally("intra_segment", lambda r: r.intra_segment)
    tally("intra_subsegment", lambda r: r.intra_subsegment)
    tally("inter_subsegment", lambda r: r.inter_subsegment)
    return rows


def pattern_stats_to_csv(rows: list[dict]) -> str:
    lines = ["level,group,configuration,count,percent"]
    for r in rows:
        lines.append(
            f"{r['level']},{r['group']},\"{r['configuration']}\",{r['count']},{r['percent']:.6g}"
        )
    return "\n".join(lines) + "\n"
