import cv2
import numpy as np


def label_components(mask):
    """4-connected components of a boolean grid mask; background (False) is label 0."""
    image = np.ascontiguousarray(mask, dtype=np.uint8)
    if image.ndim == 1:
        image = image[None, :]
    count, labels = cv2.connectedComponents(image, connectivity=4)
    return count, labels.reshape(mask.shape)


def edge_labels(labels):
    """Component labels present on the outer frame of the grid."""
    if labels.ndim == 1:
        border = labels[[0, -1]]
    else:
        border = np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    return set(np.unique(border).tolist()) - {0}


def distance_to(mask, spacing):
    """Euclidean distance (physical units) from every node to the nearest node of mask; 0 on the mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    if mask.ndim == 1:
        idx = np.flatnonzero(mask)
        nodes = np.arange(mask.size)
        return np.min(np.abs(nodes[:, None] - idx[None, :]), axis=1) * spacing
    src = np.where(mask, 0, 255).astype(np.uint8)
    dist = cv2.distanceTransform(src, cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    return dist.astype(float) * spacing


if __name__ == "__main__":
    pass
