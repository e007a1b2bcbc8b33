"""Turn image directories into descriptor packs and keypoint files.

The pipeline per image: propose part boxes (objectness-scored, reranked
by area), embed the whole frame and each part crop through a 4096-dim
fc-layer network, and optionally detect keypoints — then write the pack
and keypoint files that ``nbnnplace`` consumes.
"""

from .backends import (
    DESCRIPTOR_DIM,
    DescriptorBackend,
    extract_descriptors,
    load_backend,
)
from .errors import (
    BackendUnavailableError,
    ExtractError,
    ImageDecodeError,
    ParameterError,
)
from .imageio import decode_image, list_images
from .keypoints import extract_keypoints
from .packio import (
    ExtractedKeypoints,
    ExtractedScene,
    write_keypoint_file,
    write_pack,
)
from .proposals import ProposalParams, extract_parts

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
