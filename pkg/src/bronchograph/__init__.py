"""Branch-graph analysis of tubular tree masks."""

__version__ = "0.1.0"

from .volume import Volume, load_volume, save_volume
from .edt import DistanceField, distance_transform
from .skeleton import SkeletonTree, SkelParams, extract_skeleton, select_root
from .graph import (
    AirwayGraph,
    BranchNode,
    betti_numbers,
    compute_lca_and_descendants,
    mean_branch_count,
    partition_branches,
)
from .taxonomy import (
    BranchLabels,
    LabeledGraph,
    assign_labels,
    canonical_codebook,
    check_hierarchy,
)
from .features import FeatureVector, branch_features, feature_table
from .metrics import (
    cl_dice,
    detection_rates,
    label_metrics,
    loss_value,
    overlap_metrics,
)
from .patterns import (
    PatternReport,
    aggregate_pattern_stats,
    analyze_patterns,
    inter_subsegment_patterns,
    intra_segment_patterns,
    intra_subsegment_patterns,
)
from .signatures import (
    SignatureMatrix,
    complexity,
    divergence,
    ectasia,
    enclosing_cone_angle,
    geodesic_length,
    signature_matrix,
    stenosis,
    tortuosity,
)
from .stats import build_reference, flag_significant, rank_top_k, welch_t_test
from .phantom import (
    BranchSpec,
    PhantomSpec,
    phantom_library,
    random_tree_spec,
    render_phantom,
)

__all__ = [
    "Volume",
    "load_volume",
    "save_volume",
    "DistanceField",
    "distance_transform",
    "SkeletonTree",
    "SkelParams",
    "extract_skeleton",
    "select_root",
    "AirwayGraph",
    "BranchNode",
    "betti_numbers",
    "compute_lca_and_descendants",
    "mean_branch_count",
    "partition_branches",
    "BranchLabels",
    "LabeledGraph",
    "assign_labels",
    "canonical_codebook",
    "check_hierarchy",
    "FeatureVector",
    "branch_features",
    "feature_table",
    "cl_dice",
    "detection_rates",
    "label_metrics",
    "loss_value",
    "overlap_metrics",
    "PatternReport",
    "aggregate_pattern_stats",
    "analyze_patterns",
    "inter_subsegment_patterns",
    "intra_segment_patterns",
    "intra_subsegment_patterns",
    "SignatureMatrix",
    "complexity",
    "divergence",
    "ectasia",
    "enclosing_cone_angle",
    "geodesic_length",
    "signature_matrix",
    "stenosis",
    "tortuosity",
    "build_reference",
    "flag_significant",
    "rank_top_k",
    "welch_t_test",
    "BranchSpec",
    "PhantomSpec",
    "phantom_library",
    "random_tree_spec",
    "render_phantom",
]
