"""codec-lens: look inside transform image coders.

The package extracts decoder basis functions via channel impulses,
decomposes latents spatially and channel-wise, measures how separable
a coder's latent space is, and compares learned bases against the
classical orthogonal transforms (DCT, Walsh-Hadamard, Haar, KLT).
"""

from .analysis import (
    BasisSet,
    Decoder,
    LinearBlockDecoder,
    SeparabilityReport,
    SimilarityReport,
    SynthesisDecoder,
    aggregate_channel,
    aggregate_spatial,
    amplitudes_from_images,
    basis_similarity,
    channel_components,
    channel_impulse,
    extract_basis,
    load_basis_set,
    offset_free_decode,
    save_basis_set,
    separability,
    spatial_components,
)
from .entropy import ChannelRateReport, estimate_rates, rank_channels
from .errors import (
    BadMagicError,
    CodecLensError,
    DecodeError,
    PayloadLengthError,
    ShapeMismatchError,
    UnsupportedVersionError,
    WeightFormatError,
    WeightShapeError,
)
from .linear import (
    Basis2D,
    OrthogonalTransform,
    basis_2d,
    block_code_image,
    dct_matrix,
    forward,
    haar_matrix,
    inverse,
    klt_from_patches,
    linear_basis,
    separable_2d,
    wht_matrix,
)
from .nn import (
    AnalysisNet,
    LayerSpec,
    SynthesisNet,
    conv2d,
    gdn,
    igdn,
    quantize,
    run_analysis,
    run_synthesis,
    tconv2d,
    toy_analysis_net,
    toy_synthesis_net,
)
from .render import GridLayout, render_basis_grid, render_decomposition_mosaic
from .tensor import (
    ImagePlane,
    Tensor3,
    add,
    channel_max,
    load_image,
    mse,
    save_image,
    scale,
    squared_error,
    sub,
    zeros,
    zeros_like,
)
from .weights import load_weights, read_weights, save_weights, write_weights

__version__ = "0.1.0"
