"""Harris-Hessian corner detection and FREAK description on a tiled kernel pipeline."""

from .detector import (
    BASE_SIGMAS,
    STAGES,
    DetectorConfig,
    DetectionResult,
    ScaleSpace,
    characteristic_sigma,
    count_corners,
    cull_keypoints,
    detect,
    harris_response,
    hessian_determinant,
    refinement_sigmas,
)
from .freak import (
    MatchPolicy,
    SamplingPattern,
    build_pattern,
    cascade_match,
    describe,
    describe_many,
    estimate_orientation,
    hamming_distance,
    sample_field,
)
from .pipeline import (
    GaussianKernel,
    StageTimer,
    StageTiming,
    TileConfig,
    gauss_x,
    gauss_y,
    gradient,
    make_gaussian_kernel,
    run_stage,
)
from .raster import (
    DecodeError,
    DescriptorRecord,
    Keypoint,
    Raster,
    UnsupportedFormatError,
    decode_image,
    desaturate,
    load_image,
    parse_descriptor_file,
    write_descriptor_file,
)

__version__ = "0.1.0"
