"""LiDAR-inertial odometry with window-averaged IMU controls and scan-to-map ICP."""

from .config import Config
from .geometry import Pose, se3_boxplus, se3_log_translation, so3_exp, so3_log
from .odometry import Odometry, State

__all__ = ["Config", "Odometry", "Pose", "State", "se3_boxplus", "se3_log_translation",
           "so3_exp", "so3_log"]
__version__ = "0.1.0"
