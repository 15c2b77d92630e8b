"""monomotion: train a hierarchical GAN on a single skeletal motion clip and
compose, inpaint, expand, crowd and re-style motion with single forward
passes."""

from .motion_io import (
    MotionTensor,
    PyramidConfig,
    SkeletonMotion,
    SkeletonTopology,
    build_pyramid_targets,
    detect_foot_contacts,
    forward_kinematics,
    from_feature_tensor,
    motion_from_json,
    motion_to_json,
    resample_temporal,
    to_feature_tensor,
)
from .bvh import parse_bvh, write_bvh
from .network import (
    NetworkConfig,
    PyramidModel,
    build_model,
    compute_noise_amplitudes,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    AnnealingSchedule,
    LossWeights,
    TrainConfig,
    annealed_weights,
    preset,
    train_all,
)
from .evaluation import FeatureEncoder, MetricsConfig, MetricsReport, compute_metrics

__version__ = "0.1.0"
