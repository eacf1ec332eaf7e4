"""Synthetic fiducial-marker rendering and 6-DoF pose-accuracy benchmarking."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .bench import (
    AccuracyReport,
    PoseErrorRecord,
    PoseRanges,
    accuracy,
    common_subset,
    pose_error,
    run_closed_loop,
    sample_pose_cloud,
)
from .camera import (
    CameraRig,
    DistortionCoefficients,
    LensRig,
    SensorSpec,
    canon_rebel_xs,
    circle_of_confusion,
    distort,
    image_distance,
    load_camera,
    logitech_c270,
    project,
    save_camera,
    undistort,
)
from .detect import detect_square_marker
from .marker import MarkerSpec, generate_chessboard, generate_square_marker, load_marker
from .optics import (
    DiffractionKernel,
    airy_psf,
    airy_radius,
    build_kernel,
    convolve,
    gamma_rec709,
    quantize,
)
from .pnp import PnPResult, planar_pnp
from .pose import Pose6D, pose_to_transform
from .rendering import RenderedImage, Scene, render, render_coarse, render_linear
from .viz import overlay_diff
from .sampling import (
    HaltonConfig,
    SobolTable,
    concentric_disk_map,
    halton_point,
    radical_inverse,
    sobol_sample,
)

__version__ = "0.1.0"
