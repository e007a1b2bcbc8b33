"""Place recognition by image-to-class retrieval over bag-of-parts scene models.

The pipeline: extract per-image descriptors (one whole-image vector plus
part vectors) into scene models; optionally reduce and binarize them;
quantize database images against an experience vocabulary into place
classes; rank by image-to-class distance.  View-overlap geometry grades
task difficulty, and the benchmark reports retrieval quality per
difficulty band.
"""

from .errors import (
    CorruptionError,
    FormatError,
    InsufficientDataError,
    ValidationError,
)
from .scene import (
    IMAGE_LEVEL,
    PART_LEVEL,
    PackInfo,
    PartDescriptor,
    SceneModel,
    Viewpoint,
    heading_difference,
    load_pack,
    load_poses,
    read_pack_info,
    save_pack,
    save_poses,
    validate_scene_model,
    wrap_angle,
)
from .geometry import (
    LocalizationTask,
    TaskParams,
    ViewingTriangle,
    destructor_eligible,
    load_tasks,
    sample_task,
    save_tasks,
    select_relevant,
    triangles_overlap,
    viewing_triangle,
    with_overlap,
)
from .pca import PCAModel, project, train_pca
from .binhash import (
    BinaryCode,
    ProjectionModel,
    code_from_int,
    complement,
    encode,
    encode_many,
    hamming,
    hamming_many,
    hamming_table,
    train_projection,
)
from .matching import (
    KeypointSet,
    MatchSet,
    detect_keypoints,
    load_keypoint_sets,
    match_candidates,
    save_keypoint_sets,
)
from .consensus import ConsensusParams, consensus_filter
from .difficulty import ldi, overlap, rank_and_stratify, score_task
from .index import (
    ExperienceIndex,
    ExplicitLibrary,
    FeaturePipeline,
    ImplicitLibrary,
    PlaceClass,
    RankedList,
    build_index,
    build_library,
    load_index,
    mine_place_class,
    save_index,
)
from .synth import SynthParams, SyntheticDataset, generate_world
from .bench import (
    BenchConfig,
    BenchReport,
    MethodConfig,
    METHODS,
    format_report,
    recognition_curve,
    run_bench,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
