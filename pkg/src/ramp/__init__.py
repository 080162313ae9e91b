"""Retrieval-augmented score prediction.

A parametric decoder (regression + score-bin classification heads) and an exact
kNN datastore over embeddings, combined per instance by a small fusing network
that picks the retrieval scope and the mixing weights from distances and the
decoder's confidences.
"""

from .dataio import LabeledSample, SampleSet, SyntheticConfig, gen_synthetic, parse_samples, split, write_samples
from .datastore import Datastore, NeighborHit, build as build_datastore, load as load_datastore, save as save_datastore
from .decoder import BinScheme, Decoder, DecoderOutput, Stage1Config, bin_of, train_stage1
from .fusion import FusingNets, FusionOutput, Prediction, Stage2Config, predict, predict_batch, predict_np, train_stage2
from .metrics import EvalReport, evaluate, ktau, lcc, mse, srcc
from .nonparam import RetrievalProfile, retrieval_profile

__version__ = "0.1.0"
