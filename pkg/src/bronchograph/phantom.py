"""Deterministic tubular-tree phantoms with analytic ground truth.

A phantom is a tree of polyline branches with radius profiles. Rendering
voxelizes every branch (a voxel is foreground when its center lies within
the local radius of some branch centerline), adds junction balls of the
maximal incident radius so children stay connected to their parents, and
paints per-branch label ids by nearest-centerline assignment.

The rendered ground truth carries exact branch lengths, endpoints,
generations and labels, so analysis results can be checked against the
spec that generated the volume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBounds, SpecOverlap
from .volume import Volume

Point = tuple[float, float, float]


@dataclass
class BranchSpec:
    name: str
    parent: str | None
    points: list[Point]  # polyline in mm, proximal -> distal
    radius: float | list[tuple[float, float]]  # mm, constant or (arc fraction, r)
    label: str | None = None

    def arc_lengths(self) -> np.ndarray:
        pts = np.asarray(self.points, dtype=float)
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.arc_lengths()[-1])

    def radius_at(self, t: float | np.ndarray):
        """Radius at arc fraction t in [0, 1]; piecewise linear profile."""
        if isinstance(self.radius, (int, float)):
            return np.full_like(np.asarray(t, dtype=float), float(self.radius))
        knots = np.asarray(self.radius, dtype=float)
        return np.interp(t, knots[:, 0], knots[:, 1])

    def max_radius(self) -> float:
        if isinstance(self.radius, (int, float)):
            return float(self.radius)
        return float(max(r for _, r in self.radius))


@dataclass
class PhantomSpec:
    name: str
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    branches: list[BranchSpec]

    def branch(self, name: str) -> BranchSpec:
        return next(b for b in self.branches if b.name == name)

    def root(self) -> BranchSpec:
        return next(b for b in self.branches if b.parent is None)


@dataclass
class TruthBranch:
    name: str
    parent: str | None
    generation: int
    start_mm: Point
    end_mm: Point
    length_mm: float
    label: str | None


@dataclass
class RenderedPhantom:
    mask: Volume
    labels: Volume
    truth: list[TruthBranch]
    codebook: dict[int, str] = field(default_factory=dict)

    def truth_branch(self, name: str) -> TruthBranch:
        return next(b for b in self.truth if b.name == name)

    def leaf_count(self) -> int:
        parents = {b.parent for b in self.truth if b.parent is not None}
        return sum(1 for b in self.truth if b.name not in parents)


def _sample_branch(branch: BranchSpec, step: float):
    """Points and radii sampled every `step` mm along the polyline."""
    pts = np.asarray(branch.points, dtype=float)
    arcs = branch.arc_lengths()
    total = arcs[-1]
    if total == 0:
        return pts[:1], branch.radius_at(np.array([0.0])), np.array([0.0])
    s = np.arange(0.0, total + step / 2, step)
    s[-1] = min(s[-1], total)
    xyz = np.stack([np.interp(s, arcs, pts[:, a]) for a in range(3)], axis=1)
    return xyz, branch.radius_at(s / total), s


def _validate_spec(spec: PhantomSpec) -> dict[str, Point]:
    """Bounds and overlap checks; returns each branch's junction point."""
    extent = np.asarray(spec.dims) * np.asarray(spec.spacing)
    vox = max(spec.spacing)
    junction_of = {}
    by_name = {b.name: b for b in spec.branches}
    for b in spec.branches:
        if b.parent is not None:
            parent = by_name[b.parent]
            if not np.allclose(b.points[0], parent.points[-1]):
                raise ValueError(
                    f"branch {b.name} must start at the end of its parent {b.parent}"
                )
            junction_of[b.name] = tuple(np.asarray(b.points[0], dtype=float))

    samples = {}
    for b in spec.branches:
        xyz, radii, _ = _sample_branch(b, step=vox / 2)
        samples[b.name] = (xyz, radii)
        lo = xyz - (radii + vox)[:, None]
        hi = xyz + (radii + vox)[:, None]
        if lo.min() < 0 or np.any(hi > extent[None, :]):
            raise OutOfBounds(f"branch {b.name} does not fit inside the volume")

    names = [b.name for b in spec.branches]
    for i, ni in enumerate(names):
        for nj in names[i + 1 :]:
            bi, bj = by_name[ni], by_name[nj]
            shared = None
            if bi.parent == nj or bj.parent == ni:
                shared = junction_of[ni] if bi.parent == nj else junction_of[nj]
            elif bi.parent is not None and bi.parent == bj.parent:
                shared = junction_of[ni]
            xi, ri = samples[ni]
            xj, rj = samples[nj]
            keep_i = np.ones(len(xi), dtype=bool)
            keep_j = np.ones(len(xj), dtype=bool)
            if shared is not None:
                ball = 3.0 * (bi.max_radius() + bj.max_radius())
                keep_i = np.linalg.norm(xi - shared, axis=1) > ball
                keep_j = np.linalg.norm(xj - shared, axis=1) > ball
            if not keep_i.any() or not keep_j.any():
                continue
            d = np.linalg.norm(
                xi[keep_i][:, None, :] - xj[keep_j][None, :, :], axis=2
            )
            limit = ri[keep_i][:, None] + rj[keep_j][None, :]
            if np.any(d < limit):
                raise SpecOverlap(f"branches {ni} and {nj} overlap away from junctions")
    return junction_of


def _paint_segment(a, b, ra, rb, fg, best_dist, best_branch, branch_idx, spec, pad):
    """Voxelize one centerline segment and update nearest-branch fields."""
    sp = np.asarray(spec.spacing)
    lo = np.maximum(np.floor((np.minimum(a, b) - pad) / sp).astype(int), 0)
    hi = np.minimum(np.ceil((np.maximum(a, b) + pad) / sp).astype(int) + 1, spec.dims)
    if np.any(lo >= hi):
        return
    grids = np.meshgrid(
        *(np.arange(lo[i], hi[i]) * sp[i] for i in range(3)), indexing="ij"
    )
    pts = np.stack(grids, axis=-1)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        u = np.zeros(pts.shape[:-1])
    else:
        u = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    closest = a + u[..., None] * ab
    dist = np.linalg.norm(pts - closest, axis=-1)
    radius = ra + u * (rb - ra)

    sl = tuple(slice(lo[i], hi[i]) for i in range(3))
    fg[sl] |= dist <= radius + 1e-9
    better = dist < best_dist[sl] - 1e-12
    best_dist[sl] = np.where(better, dist, best_dist[sl])
    best_branch[sl] = np.where(better, branch_idx, best_branch[sl])


def render_phantom(spec: PhantomSpec, validate: bool = True) -> RenderedPhantom:
    """Voxelize a phantom spec into mask + labels + exact ground truth."""
    junction_of = _validate_spec(spec) if validate else {
        b.name: tuple(np.asarray(b.points[0], dtype=float))
        for b in spec.branches
        if b.parent is not None
    }

    fg = np.zeros(spec.dims, dtype=bool)
    best_dist = np.full(spec.dims, np.inf)
    best_branch = np.full(spec.dims, -1, dtype=np.int32)
    pad = max(b.max_radius() for b in spec.branches) + 2 * max(spec.spacing)

    for idx, b in enumerate(spec.branches):
        pts = np.asarray(b.points, dtype=float)
        arcs = b.arc_lengths()
        total = arcs[-1] if arcs[-1] > 0 else 1.0
        for k in range(len(pts) - 1):
            ra = float(b.radius_at(arcs[k] / total))
            rb = float(b.radius_at(arcs[k + 1] / total))
            _paint_segment(
                pts[k], pts[k + 1], ra, rb, fg, best_dist, best_branch, idx, spec, pad
            )
        if len(pts) == 1:
            _paint_segment(
                pts[0], pts[0], b.max_radius(), b.max_radius(),
                fg, best_dist, best_branch, idx, spec, pad,
            )

    # Junction balls guarantee connectivity across parent/child joins.
    by_name = {b.name: b for b in spec.branches}
    for child_name, point in junction_of.items():
        child = by_name[child_name]
        parent = by_name[child.parent]
        incident = [parent.radius_at(np.array([1.0]))[0], child.radius_at(np.array([0.0]))[0]]
        for other in spec.branches:
            if other.parent == child.parent and other.name != child_name:
                incident.append(other.radius_at(np.array([0.0]))[0])
        r = float(max(incident))
        a = np.asarray(point, dtype=float)
        sp = np.asarray(spec.spacing)
        lo = np.maximum(np.floor((a - r - sp) / sp).astype(int), 0)
        hi = np.minimum(np.ceil((a + r + sp) / sp).astype(int) + 1, spec.dims)
        grids = np.meshgrid(
            *(np.arange(lo[i], hi[i]) * sp[i] for i in range(3)), indexing="ij"
        )
        pts = np.stack(grids, axis=-1)
        sl = tuple(slice(lo[i], hi[i]) for i in range(3))
        fg[sl] |= np.linalg.norm(pts - a, axis=-1) <= r + 1e-9

    label_names = []
    for b in spec.branches:
        if b.label is not None and b.label not in label_names:
            label_names.append(b.label)
    codebook = {i + 1: name for i, name in enumerate(label_names)}
    id_of = {name: i + 1 for i, name in enumerate(label_names)}
    branch_label_id = np.array(
        [id_of.get(b.label, 0) for b in spec.branches], dtype=np.uint16
    )

    labels = np.zeros(spec.dims, dtype=np.uint16)
    has_branch = fg & (best_branch >= 0)
    labels[has_branch] = branch_label_id[best_branch[has_branch]]

    children_count: dict[str, int] = {}
    for b in spec.branches:
        if b.parent is not None:
            children_count[b.parent] = children_count.get(b.parent, 0) + 1
    truth = []
    gen: dict[str, int] = {}
    for b in spec.branches:  # specs list parents before children
        if b.parent is None:
            gen[b.name] = 1
        else:
            bump = 1 if children_count.get(b.parent, 0) >= 2 else 0
            gen[b.name] = gen[b.parent] + bump
        truth.append(
            TruthBranch(
                b.name,
                b.parent,
                gen[b.name],
                tuple(np.asarray(b.points[0], dtype=float)),
                tuple(np.asarray(b.points[-1], dtype=float)),
                b.length,
                b.label,
            )
        )

    mask = Volume(fg.astype(np.uint8), spec.spacing, "binary")
    label_vol = Volume(labels, spec.spacing, "labels")
    return RenderedPhantom(mask, label_vol, truth, codebook)


def spec_to_json(spec: PhantomSpec) -> str:
    return json.dumps(
        {
            "schema": "bronchograph/phantom-spec/v1",
            "name": spec.name,
            "dims": list(spec.dims),
            "spacing": list(spec.spacing),
            "branches": [
                {
                    "name": b.name,
                    "parent": b.parent,
                    "points": [list(p) for p in b.points],
                    "radius": b.radius if isinstance(b.radius, (int, float)) else [list(k) for k in b.radius],
                    "label": b.label,
                }
                for b in spec.branches
            ],
        },
        indent=2,
    )


def spec_from_json(text: str) -> PhantomSpec:
    doc = json.loads(text)
    branches = [
        BranchSpec(
            d["name"],
            d["parent"],
            [tuple(p) for p in d["points"]],
            d["radius"] if isinstance(d["radius"], (int, float)) else [tuple(k) for k in d["radius"]],
            d.get("label"),
        )
        for d in doc["branches"]
    ]
    return PhantomSpec(doc["name"], tuple(doc["dims"]), tuple(doc["spacing"]), branches)


def _fan_tree(name, dims, spacing, rows):
    """Build a planar tree spec from (name, parent, angle_deg, length, radius,
    label) rows; angles rotate the parent direction within the x-z plane and
    the root grows downward from the top center."""
    nx, ny, nz = dims
    sx, sy, sz = spacing
    top = ((nx - 1) * sx / 2.0, (ny - 1) * sy / 2.0, (nz - 1) * sz - 6.0 * sz)
    branches: list[BranchSpec] = []
    state: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for row in rows:
        bname, parent, angle, length, radius, label = row
        if parent is None:
            start = np.asarray(top)
            direction = np.array([0.0, 0.0, -1.0])
        else:
            start, pdir = state[parent]
            rad = math.radians(angle)
            c, s = math.cos(rad), math.sin(rad)
            direction = np.array(
                [c * pdir[0] + s * pdir[2], pdir[1], -s * pdir[0] + c * pdir[2]]
            )
            direction = direction / np.linalg.norm(direction)
        end = start + direction * length
        branches.append(BranchSpec(bname, parent, [tuple(start), tuple(end)], radius, label))
        state[bname] = (end, direction)
    return PhantomSpec(name, dims, spacing, branches)


def phantom_library() -> dict[str, PhantomSpec]:
    """Named fixture specs used throughout the test suite and CLI demos."""
    lib: dict[str, PhantomSpec] = {}
    sp = (0.5, 0.5, 0.5)

    def tube(name, radius_profile, dims=(44, 44, 150), length=60.0):
        cx = (dims[0] - 1) * sp[0] / 2
        cy = (dims[1] - 1) * sp[1] / 2
        z0 = (dims[2] - 1) * sp[2] - 6.0
        return PhantomSpec(
            name,
            dims,
            sp,
            [BranchSpec("trunk", None, [(cx, cy, z0), (cx, cy, z0 - length)], radius_profile)],
        )

    # Aspect ratio 32:1 keeps the volumetric bend-angle tortuosity of a
    # perfectly straight tube comfortably under 0.05.
    lib["straight_tube"] = tube("straight_tube", 2.5, dims=(40, 40, 190), length=80.0)
    lib["stenotic_tube"] = tube("stenotic_tube", [(0.0, 4.0), (0.5, 2.0), (1.0, 4.0)], dims=(52, 52, 150))
    lib["bulged_tube"] = tube("bulged_tube", [(0.0, 3.0), (0.5, 6.0), (1.0, 3.0)], dims=(64, 64, 150))

    # Right-angle elbow: two 25 mm arms meeting at 90 degrees.
    lib["elbow"] = PhantomSpec(
        "elbow",
        (120, 32, 120),
        sp,
        [BranchSpec("elbow", None, [(8.0, 7.75, 50.0), (33.0, 7.75, 50.0), (33.0, 7.75, 25.0)], 2.5)],
    )

    # Semicircular arc of radius 20 mm (tube radius 2.5 mm).
    arc_pts = [
        (25.0 + 20.0 * math.cos(math.radians(a)), 7.75, 28.0 + 20.0 * math.sin(math.radians(a)))
        for a in range(0, 181, 5)
    ]
    lib["semicircle"] = PhantomSpec("semicircle", (104, 32, 116), sp, [
        BranchSpec("arc", None, arc_pts, 2.5)
    ])

    lib["y_tube"] = _fan_tree(
        "y_tube",
        (96, 40, 120),
        sp,
        [
            ("trunk", None, 0, 18.0, 2.6, None),
            ("left", "trunk", 35, 16.0, 2.0, None),
            ("right", "trunk", -35, 16.0, 2.0, None),
        ],
    )

    lib["trifurcation"] = _fan_tree(
        "trifurcation",
        (112, 40, 120),
        sp,
        [
            ("trunk", None, 0, 18.0, 2.6, None),
            ("a", "trunk", 45, 15.0, 2.0, None),
            ("b", "trunk", 0, 15.0, 2.0, None),
            ("c", "trunk", -45, 15.0, 2.0, None),
        ],
    )

    # Lobe fixtures for common clinical branching configurations.
    lib["rmb_lobe"] = _fan_tree(
        "rmb_lobe",
        (96, 40, 120),
        sp,
        [
            ("trunk", None, 0, 16.0, 2.6, "Trunk"),
            ("rb4", "trunk", 35, 15.0, 2.0, "RB4"),
            ("rb5", "trunk", -35, 15.0, 2.0, "RB5"),
        ],
    )

    lib["llb_lobe"] = _fan_tree(
        "llb_lobe",
        (168, 40, 176),
        sp,
        [
            ("trunk", None, 0, 13.0, 2.6, "Trunk"),
            ("lb6", "trunk", 52, 13.0, 1.8, "LB6"),
            ("stem2", "trunk", -18, 13.0, 2.3, "Trunk"),
            ("lb8", "stem2", 52, 13.0, 1.8, "LB8"),
            ("stem3", "stem2", -18, 13.0, 2.1, "Trunk"),
            ("lb9", "stem3", 45, 12.0, 1.8, "LB9"),
            ("lb10", "stem3", -30, 12.0, 1.8, "LB10"),
        ],
    )

    lib["lub_lobe"] = _fan_tree(
        "lub_lobe",
        (176, 40, 168),
        sp,
        [
            ("trunk", None, 0, 13.0, 2.6, "Trunk"),
            ("superior", "trunk", 40, 13.0, 2.2, "Trunk"),
            ("lb12", "superior", 32, 13.0, 1.8, "LB1+2"),
            ("lb3", "superior", -32, 13.0, 1.8, "LB3"),
            ("lingular", "trunk", -40, 13.0, 2.2, "Trunk"),
            ("lb4", "lingular", 32, 13.0, 1.8, "LB4"),
            ("lb5", "lingular", -32, 13.0, 1.8, "LB5"),
        ],
    )

    # LB1+2 intra-subsegment family (subsegment-level labels).
    def lb12(name, rows):
        return _fan_tree(name, (176, 40, 180), sp, rows)

    lib["lb12_1stem_ab"] = lb12(
        "lb12_1stem_ab",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("stem", "trunk", 20, 12.0, 2.2, "LB1+2a+b+c"),
            ("ab", "stem", 35, 12.0, 1.9, "LB1+2a+b"),
            ("a", "ab", 30, 12.0, 1.6, "LB1+2a"),
            ("b", "ab", -30, 12.0, 1.6, "LB1+2b"),
            ("c", "stem", -35, 12.0, 1.6, "LB1+2c"),
            ("filler", "trunk", -45, 12.0, 1.8, "Trunk"),
        ],
    )
    lib["lb12_1stem_bc"] = lb12(
        "lb12_1stem_bc",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("stem", "trunk", 20, 12.0, 2.2, "LB1+2a+b+c"),
            ("a", "stem", 35, 12.0, 1.6, "LB1+2a"),
            ("bc", "stem", -35, 12.0, 1.9, "LB1+2b+c"),
            ("b", "bc", 30, 12.0, 1.6, "LB1+2b"),
            ("c", "bc", -30, 12.0, 1.6, "LB1+2c"),
            ("filler", "trunk", -45, 12.0, 1.8, "Trunk"),
        ],
    )
    lib["lb12_1stem_ac"] = lb12(
        "lb12_1stem_ac",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("stem", "trunk", 20, 12.0, 2.2, "LB1+2a+b+c"),
            ("ac", "stem", 35, 12.0, 1.9, "LB1+2a+c"),
            ("a", "ac", 30, 12.0, 1.6, "LB1+2a"),
            ("c", "ac", -30, 12.0, 1.6, "LB1+2c"),
            ("b", "stem", -35, 12.0, 1.6, "LB1+2b"),
            ("filler", "trunk", -45, 12.0, 1.8, "Trunk"),
        ],
    )
    lib["lb12_1stem_tri"] = lb12(
        "lb12_1stem_tri",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("stem", "trunk", 20, 12.0, 2.2, "LB1+2a+b+c"),
            ("a", "stem", 45, 12.0, 1.6, "LB1+2a"),
            ("b", "stem", 0, 12.0, 1.6, "LB1+2b"),
            ("c", "stem", -45, 12.0, 1.6, "LB1+2c"),
            ("filler", "trunk", -45, 12.0, 1.8, "Trunk"),
        ],
    )
    lib["lb12_2stem_ab"] = lb12(
        "lb12_2stem_ab",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("ab", "trunk", 35, 12.0, 1.9, "LB1+2a+b"),
            ("a", "ab", 30, 12.0, 1.6, "LB1+2a"),
            ("b", "ab", -30, 12.0, 1.6, "LB1+2b"),
            ("c", "trunk", -35, 12.0, 1.6, "LB1+2c"),
        ],
    )
    lib["lb12_2stem_bc"] = lb12(
        "lb12_2stem_bc",
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("a", "trunk", 35, 12.0, 1.6, "LB1+2a"),
            ("bc", "trunk", -35, 12.0, 1.9, "LB1+2b+c"),
            ("b", "bc", 30, 12.0, 1.6, "LB1+2b"),
            ("c", "bc", -30, 12.0, 1.6, "LB1+2c"),
        ],
    )

    lib["rb4_intra"] = _fan_tree(
        "rb4_intra",
        (120, 40, 168),
        sp,
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("root", "trunk", 25, 12.0, 2.0, "RB4a+b+c"),
            ("a", "root", 32, 12.0, 1.6, "RB4a"),
            ("b", "root", -32, 12.0, 1.6, "RB4b"),
            ("filler", "trunk", -40, 12.0, 1.8, "Trunk"),
        ],
    )

    # Lingular early take-off: the shared stem gives off B4a before
    # bifurcating into B4b and the complete B5 segment.
    lib["lingula_b4a_takeoff"] = _fan_tree(
        "lingula_b4a_takeoff",
        (176, 40, 190),
        sp,
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("b4a", "trunk", 42, 12.0, 1.6, "LB4a"),
            ("u", "trunk", -14, 12.0, 2.2, "Trunk"),
            ("b4b", "u", 42, 12.0, 1.6, "LB4b"),
            ("b5root", "u", -22, 12.0, 1.9, "LB5a+b+c"),
            ("b5a", "b5root", 32, 11.0, 1.6, "LB5a"),
            ("b5b", "b5root", -32, 11.0, 1.6, "LB5b"),
        ],
    )

    # Independent RB1/RB2/RB3 subsegments (no cross-segment co-trunks).
    lib["rub_independent"] = _fan_tree(
        "rub_independent",
        (200, 40, 190),
        sp,
        [
            ("trunk", None, 0, 12.0, 2.6, "Trunk"),
            ("r1", "trunk", 52, 12.0, 2.0, "RB1a+b+c"),
            ("r1a", "r1", 30, 11.0, 1.6, "RB1a"),
            ("r1b", "r1", -30, 11.0, 1.6, "RB1b"),
            ("r2", "trunk", 0, 12.0, 2.0, "RB2a+b+c"),
            ("r2a", "r2", 30, 11.0, 1.6, "RB2a"),
            ("r2b", "r2", -30, 11.0, 1.6, "RB2b"),
            ("r3", "trunk", -52, 12.0, 2.0, "RB3a+b+c"),
            ("r3a", "r3", 30, 11.0, 1.6, "RB3a"),
            ("r3b", "r3", -30, 11.0, 1.6, "RB3b"),
        ],
    )

    return lib


def random_tree_spec(seed: int, n_branches: int | None = None) -> PhantomSpec:
    """Random non-overlapping tree phantom; geometry honours the analysis
    guarantees (radius >= 2 voxels, length >= 4 * radius)."""
    rng = np.random.default_rng(seed)
    if n_branches is None:
        n_branches = int(rng.integers(2, 31))
    spacing = (1.0, 1.0, 1.0)
    dims = (72, 72, 72)
    extent = np.asarray(dims) * np.asarray(spacing)
    center = extent / 2

    branches: list[BranchSpec] = []
    samples: dict[str, tuple[np.ndarray, float]] = {}
    parent_of: dict[str, str | None] = {}

    def sampled(start, end):
        n = max(2, int(np.linalg.norm(end - start)))
        return start + (end - start) * np.linspace(0, 1, n)[:, None]

    def collides(start, end, radius, parent_name):
        pts = sampled(start, end)
        for other_name, (other_pts, other_r) in samples.items():
            keep = np.ones(len(pts), dtype=bool)
            keep_o = np.ones(len(other_pts), dtype=bool)
            adjacent = other_name == parent_name or parent_of.get(other_name) == parent_name
            if adjacent:
                ball = 3.0 * (radius + other_r)
                keep = np.linalg.norm(pts - start, axis=1) > ball
                keep_o = np.linalg.norm(other_pts - start, axis=1) > ball
            if not keep.any() or not keep_o.any():
                continue
            d = np.linalg.norm(pts[keep][:, None] - other_pts[keep_o][None, :], axis=2)
            if d.min() < radius + other_r + 0.5:
                return True
        return False

    def in_bounds(start, end, radius):
        margin = radius + 1.5
        for p in (start, end):
            if np.any(p < margin) or np.any(p > extent - margin):
                return False
        return True

    root_dir = np.array([0.0, 0.0, -1.0])
    root_len = float(rng.uniform(12, 16))
    root_radius = float(rng.uniform(2.6, 3.2))
    root_start = np.array([center[0], center[1], extent[2] - root_radius - 2.5])
    root_end = root_start + root_dir * root_len
    branches.append(BranchSpec("b0", None, [tuple(root_start), tuple(root_end)], root_radius))
    samples["b0"] = (sampled(root_start, root_end), root_radius)
    parent_of["b0"] = None

    frontier = [("b0", root_end, root_dir, root_radius, 1)]
    counter = 1
    while counter < n_branches and frontier:
        frontier.sort(key=lambda f: f[0])
        pick = int(rng.integers(0, len(frontier)))
        pname, pos, pdir, pradius, depth = frontier.pop(pick)
        want = min(2, n_branches - counter)
        if want == 0:
            break
        placed = []
        for _ in range(want):
            radius = max(2.0, pradius * float(rng.uniform(0.72, 0.88)))
            length = max(4.2 * radius, float(rng.uniform(9, 15)))
            done = False
            for _attempt in range(14):
                theta = float(rng.uniform(math.radians(22), math.radians(55)))
                phi = float(rng.uniform(0, 2 * math.pi))
                axis1 = np.cross(pdir, [1.0, 0.0, 0.0])
                if np.linalg.norm(axis1) < 1e-6:
                    axis1 = np.cross(pdir, [0.0, 1.0, 0.0])
                axis1 /= np.linalg.norm(axis1)
                axis2 = np.cross(pdir, axis1)
                direction = (
                    math.cos(theta) * pdir
                    + math.sin(theta) * (math.cos(phi) * axis1 + math.sin(phi) * axis2)
                )
                direction /= np.linalg.norm(direction)
                end = pos + direction * length
                if not in_bounds(pos, end, radius):
                    continue
                if collides(pos, end, radius, pname):
                    continue
                sep_ok = all(
                    float(np.dot(direction, d2)) < 0.92 for d2 in placed
                )
                if not sep_ok:
                    continue
                name = f"b{counter}"
                branches.append(BranchSpec(name, pname, [tuple(pos), tuple(end)], radius))
                samples[name] = (sampled(pos, end), radius)
                parent_of[name] = pname
                frontier.append((name, end, direction, radius, depth + 1))
                placed.append(direction)
                counter += 1
                done = True
                break
            if not done or counter >= n_branches:
                break

    return PhantomSpec(f"random_{seed}", dims, spacing, branches)
