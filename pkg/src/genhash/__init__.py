"""Generative learning of binary hash codes, with Hamming and asymmetric
inner-product retrieval.

The model pairs a Gaussian decoder (inputs as sums of codebook columns)
with a factorized Bernoulli encoder whose MAP code is a sign projection.
Training minimizes the description-length objective with minibatch SGD
driven by either the unbiased per-bit flip-difference gradient estimator
or its one-pass approximation. Codes pack into 64-bit words and are
searched by popcount linear scan; baselines, recall evaluation, binary
dataset formats, and a CLI round out the pipeline.
"""

from .baselines import (
    ItqModel,
    PcaModel,
    itq_encode,
    itq_encode_batch,
    itq_fit,
    itq_reconstruct,
    pca_fit,
    pca_reconstruct,
)
from .codes import CODE_DOMAINS, PLUS_MINUS, ZERO_ONE, HashCode, bits_to_values, pack_bits, unpack_bits
from .data_io import (
    Dataset,
    load_checkpoint,
    read_bvecs,
    read_fvecs,
    read_ivecs,
    read_mnist_idx,
    read_packed_codes,
    save_checkpoint,
    synth_mixture,
    write_bvecs,
    write_fvecs,
    write_ivecs,
    write_packed_codes,
)
from .errors import CapabilityError, FormatError, GenHashError, InputError, TrainingError
from .evaluation import (
    EvalReport,
    mean_recon_error,
    recall_curve,
    recall_k_at_n,
    reconstruction_grid,
    write_pgm,
)
from .model import (
    ModelParams,
    decode,
    encode_logits,
    encode_map,
    encode_map_batch,
    encode_probs,
    encode_sample,
    exact_objective,
    enumerate_codes,
    log_marginal,
    loss,
    stochastic_neuron,
)
from .search import (
    BinaryIndex,
    asymmetric_ip_search,
    hamming_distance,
    knn_exact_ip,
    knn_exact_l2,
    knn_hamming,
    knn_hamming_batch,
)
from .training import (
    GradCheckReport,
    GradientSet,
    OptimizerState,
    TrainConfig,
    TrainingLog,
    adam_step,
    exact_grad_check,
    grad_decoder,
    grad_w_approx,
    grad_w_unbiased,
    sgd_step,
    train,
)

__version__ = "0.1.0"
