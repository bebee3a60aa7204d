"""Embedding emerging social networks with help from an aligned mature network.

Modules
-------
netcore
    Attributed heterogeneous networks, anchor alignment, text formats, sampling.
metaprox
    Meta path instance counts and meta proximity matrices.
deepalign
    Per-path autoencoders with a fusion layer, the cross-network fusion loss
    and a plain minibatch SGD trainer.
evalkit
    Link prediction and community detection protocols and metrics.
synthgen
    Synthetic aligned network pairs with planted communities.
cli
    The ``dime`` command-line driver.
"""

__version__ = "0.1.0"

from .netcore import AlignedPair, HeterogeneousNetwork, load_anchors, load_network, sample_network
from .metaprox import META_PATHS, count_path_instances, meta_proximity, proximity_bundle
from .deepalign import ArchitectureSpec, TrainConfig, embed_single, train
from .synthgen import SynthConfig, generate_pair

__all__ = [
    "AlignedPair",
    "HeterogeneousNetwork",
    "load_anchors",
    "load_network",
    "sample_network",
    "META_PATHS",
    "count_path_instances",
    "meta_proximity",
    "proximity_bundle",
    "ArchitectureSpec",
    "TrainConfig",
    "embed_single",
    "train",
    "SynthConfig",
    "generate_pair",
]
