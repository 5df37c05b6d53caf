from .kmeans import KMeansResult, assign, kmeans_pp, minibatch_kmeans, normalize_rows
from .losses import cross_entropy, dc_loss, l2_normalize, picie_losses
from .models import Extractor, LinearClassifier, load_models, save_models
from .train import (
    PicieConfig,
    PicieResult,
    finetune_patch_detector,
    finetune_prior,
    majority_merge_map,
    merge_clusters,
    read_merge_map,
    segment,
    train_picie,
    two_stream_features,
    write_loss_log,
    write_merge_map,
)
