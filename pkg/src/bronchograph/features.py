"""Per-branch graph-node features.

Eleven features per branch: generation, relative position to the trachea
branch (normalized by the foreground bounding-box extent), intersection
angles of the branch vector with the three axes, geodesic endpoint
distance (centerline arc length), and the projected lengths of the
branch vector along each axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroLengthBranch
from .graph import AirwayGraph

FEATURE_COLUMNS = (
    "generation",
    "rp_x",
    "rp_y",
    "rp_z",
    "theta_x",
    "theta_y",
    "theta_z",
    "geodesic_length",
    "pl_x",
    "pl_y",
    "pl_z",
)


@dataclass
class FeatureVector:
    generation: int
    rp: tuple[float, float, float]
    theta: tuple[float, float, float]  # degrees in [0, 180]
    geodesic_length: float
    pl: tuple[float, float, float]

    def as_row(self) -> list[float]:
        return [float(self.generation), *self.rp, *self.theta, self.geodesic_length, *self.pl]


def _centroid_mm(branch, spacing) -> np.ndarray:
    pts = np.asarray(branch.centerline, dtype=float) * np.asarray(spacing)
    return pts.mean(axis=0)


def branch_features(g: AirwayGraph, branch_id: int, strict: bool = False) -> FeatureVector:
    """Compute the 11 node features of one branch.

    Single-voxel branches have no orientation; they get the sentinel
    theta = (90, 90, 90), pl = 0, length = 0 unless strict is set.
    """
    b = g.branch(branch_id)
    trachea = g.branch(g.root)

    extent = np.maximum(np.asarray(g.extent_mm, dtype=float), 1e-12)
    rp = (_centroid_mm(b, g.spacing) - _centroid_mm(trachea, g.spacing)) / extent

    v = np.asarray(b.end_mm) - np.asarray(b.start_mm)
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        if strict:
            raise ZeroLengthBranch(f"branch {branch_id} has coincident endpoints")
        theta = (90.0, 90.0, 90.0)
        pl = (0.0, 0.0, 0.0)
        length = 0.0
    else:
        cosines = np.clip(v / norm, -1.0, 1.0)
        theta = tuple(float(np.degrees(np.arccos(c))) for c in cosines)
        pl = tuple(float(abs(c)) for c in v)
        length = b.length_mm
    return FeatureVector(b.generation, tuple(float(x) for x in rp), theta, length, pl)


def feature_table(g: AirwayGraph) -> np.ndarray:
    """(branch count, 11) feature matrix in FEATURE_COLUMNS order."""
    return np.asarray([branch_features(g, b.id).as_row() for b in g.branches])


def features_to_csv(g: AirwayGraph) -> str:
    lines = ["branch_id," + ",".join(FEATURE_COLUMNS)]
    for b in g.branches:
        row = branch_features(g, b.id).as_row()
        lines.append(str(b.id) + "," + ",".join(f"{x:.10g}" for x in row))
    return "\n".join(lines) + "\n"
