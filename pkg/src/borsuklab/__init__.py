"""Random Borsuk graphs: geometry, colouring thresholds and the percolation link."""

from .coloring import (
    ChromaticUnknown,
    Coloring,
    CoverCertificate,
    cap_cover_certificate,
    chromatic_number,
    greedy_color,
    k_colorable,
)
from .embedding import BadPatchEmbedding, BumpSum, build_embedding, classify_cubes
from .graph import (
    BorsukGraph,
    GeoMirrorGraph,
    antipodal_connectivity,
    build_geo_mirror,
    build_graph,
    is_bipartite,
)
from .percolation import (
    bond_percolation_box,
    boundary_reach_prob,
    c2_constant,
    estimate_lambda_c,
    sample_ab,
)
from .sphere import (
    StereographicProjection,
    cap_measure,
    connection_constant,
    sample_uniform,
    stereo_inverse,
    stereo_project,
)

__version__ = "0.1.0"

__all__ = [
    "BadPatchEmbedding",
    "BorsukGraph",
    "BumpSum",
    "ChromaticUnknown",
    "Coloring",
    "CoverCertificate",
    "GeoMirrorGraph",
    "StereographicProjection",
    "antipodal_connectivity",
    "bond_percolation_box",
    "boundary_reach_prob",
    "build_embedding",
    "build_geo_mirror",
    "build_graph",
    "c2_constant",
    "cap_cover_certificate",
    "cap_measure",
    "chromatic_number",
    "classify_cubes",
    "connection_constant",
    "estimate_lambda_c",
    "greedy_color",
    "is_bipartite",
    "k_colorable",
    "sample_ab",
    "sample_uniform",
    "stereo_inverse",
    "stereo_project",
]
