from .assemble import (
    HANDCRAFTED_DIM, LOCATION_DIM, SIFT_DIM, TEXTON_DIM, FeatureLayout,
    FeatureVector, assemble_rows, assemble_zoomout, handcrafted_descriptor,
    location_features, read_feature_store, region_counts, write_feature_store,
)
from .codebook import Codebook, kmeans, read_codebook, write_codebook
from .color import COLOR_DIM, Region, color_histograms, entropy
from .sift import DenseSift, dense_sift, sift_bow_features, train_sift_codebook
from .texton import texton_features, train_texton_codebook
