"""Scale-invariant keypoints for view-overlap measurement."""

import cv2
import numpy as np

from .errors import ParameterError


def extract_keypoints(
    image: np.ndarray, max_keypoints: int = 2000
) -> tuple[np.ndarray, np.ndarray]:
    """Detect keypoints and describe them.

    Returns ``(positions, descriptors)``: an (n, 2) float32 array of
    (u, v) pixel positions and an (n, 128) float32 descriptor matrix.
    Rows with byte-identical descriptors are collapsed to one — detectors
    emit duplicate keypoints for ambiguous orientations, and exact twins
    carry no extra information for matching.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ParameterError(f"expected an (H, W, 3) image, got shape {image.shape}")
    if max_keypoints < 0:
        raise ParameterError(f"max_keypoints must be non-negative, got {max_keypoints}")
    if max_keypoints == 0:
        return np.empty((0, 2), np.float32), np.empty((0, 128), np.float32)

    gray = cv2.cvtColor(image, cv2.COLOR_RGB2GRAY)
    sift = cv2.SIFT_create(nfeatures=max_keypoints)
    found, descriptors = sift.detectAndCompute(gray, None)
    if not found:
        return np.empty((0, 2), np.float32), np.empty((0, 128), np.float32)

    positions = np.array([kp.pt for kp in found], dtype=np.float32)
    descriptors = np.asarray(descriptors, dtype=np.float32)

    # keep the first occurrence of each distinct descriptor, in detector order
    _, first = np.unique(descriptors, axis=0, return_index=True)
    order = np.sort(first)
    positions = positions[order]
    descriptors = descriptors[order]

    height, width = image.shape[:2]
    np.clip(positions[:, 0], 0.0, float(width), out=positions[:, 0])
    np.clip(positions[:, 1], 0.0, float(height), out=positions[:, 1])
    return positions, descriptors
