from .io import load_image, load_pointcloud, save_image, save_pointcloud
from .spatial import NearestNeighborIndex, bounding_box, build_nn_index, euclidean, nearest_distances
from .types import AxisAlignedBox, CameraView, GrayImage, PointCloud, Sim3Transform, is_rotation, project_to_rotation

__all__ = [
    "AxisAlignedBox", "CameraView", "GrayImage", "NearestNeighborIndex", "PointCloud", "Sim3Transform",
    "bounding_box", "build_nn_index", "euclidean", "is_rotation", "load_image", "load_pointcloud",
    "nearest_distances", "project_to_rotation", "save_image", "save_pointcloud",
]
