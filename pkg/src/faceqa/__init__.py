"""Facial expression quality scoring from paired RGB and landmark-heatmap streams."""

from .core import (Param, ShapeError, Tape, Tensor, add, block_mean_pool, concat_lastaxis,
                   constant, conv1d_temporal, grad_check, layer_norm, linear, matmul,
                   mean_axis0, relu, scale, sgd_step, slice_lastaxis, slice_rows,
                   softmax_lastaxis, split_lastaxis, stack_rows, stack_scalars, sum_all,
                   transpose2d, zero_grads)
from .encoders import (EncoderConfig, FeatureSequence, SubclipEncoder, SubclipPartition,
                       load_features, partition, sample_clip, sample_uniform, write_features)
from .fusion import (FusionConfig, FusionModel, add_positional, cross_fusion_block,
                     decode, mhca, predict)
from .heatmap import (GaussianKernel, HeatmapConfig, HeatmapVolume, LandmarkFrame,
                      LandmarkSequence, accumulate, build_kernel, build_volume,
                      select_landmarks, smooth_and_normalize, weight_rgb)
from .losses import Batch, BmcConfig, LossConfig, bmc_loss, bmc_loss_op, mse_loss, mse_loss_op
from .metrics import ConstantInputError, mae, rmse, spearman_rho

__version__ = "0.1.0"
