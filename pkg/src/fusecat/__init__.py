"""CNN feature extraction, descriptor fusion and linear SVM classification."""

from .descriptor import (Descriptor, DescriptorSet, extract_descriptor, flatten_concat,
                         l2_normalize, load_descriptors, save_descriptors, spatial_max_pool,
                         spatial_sum_pool)
from .errors import FusecatError
from .fusion import FusionPlan, early_fuse, late_fuse, layer_fuse
from .modelio import PreprocessSpec, load_model, open_model, preprocess, save_model
from .network import LayerSpec, NetworkSpec, convolutionalize, forward, infer_shapes
from .presets import from_code, preset
from .svm import SvmModel, decision_scores, evaluate, predict, train
from .weights import WeightStore, random_weights

__version__ = "0.1.0"
