"""crownflow: training-free crown instance segmentation via flow convergence."""

from .dynamics import SegmentationSettings, advect, cluster_sinks, segment
from .flows import (diffuse_potential, filter_by_flow_error, flow_error,
                    flows_from_labels, instance_center)
from .gate import apply_mask_flows, apply_mask_image, filter_instances_by_canopy
from .metrics import (MatchResult, ScoredPrediction, average_precision_50,
                      iou_matrix, match_at_iou, scores_from_prob, summary)
from .pipeline import segment_scaled, segment_tiled
from .raster import (bilinear_sample, relabel_sequential, rescale_bilinear,
                     rescale_nearest)
from .synth import Scene, SceneSpec, crown_shape, generate_scene

__version__ = "0.1.0"
