"""Latent decomposition, impulse basis extraction and separability metrics.

Everything here works against the :class:`Decoder` abstraction, so a
convolutional synthesis transform and an exactly-linear block decoder
run through identical code paths. The linear decoder separates
perfectly, which turns these functions into their own oracle: any
separability error it reports beyond float noise is a defect.
"""

from __future__ import annotations

import json
import math
import os
import warnings
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .entropy import pad_to_multiple
from .errors import DecodeError
from .linear import Basis2D, OrthogonalTransform
from .nn import AnalysisNet, SynthesisNet, run_analysis
from .tensor import ImagePlane, Tensor3, image_to_bytes, load_image, squared_error
from .util import atomic_write, canonical_json_bytes, thread_cap

__all__ = [
    "Decoder",
    "SynthesisDecoder",
    "LinearBlockDecoder",
    "BasisSet",
    "SeparabilityReport",
    "SimilarityReport",
    "spatial_components",
    "channel_components",
    "channel_impulse",
    "amplitudes_from_images",
    "extract_basis",
    "offset_free_decode",
    "aggregate_spatial",
    "aggregate_channel",
    "separability",
    "basis_similarity",
    "save_basis_set",
    "load_basis_set",
]


@runtime_checkable
class Decoder(Protocol):
    """Maps a (C, h, w) latent to a (out_channels, h*s, w*s) output."""

    @property
    def latent_channels(self) -> int: ...

    @property
    def upsampling(self) -> int: ...

    @property
    def out_channels(self) -> int: ...

    def decode(self, z: Tensor3) -> Tensor3: ...


class SynthesisDecoder:
    """Decoder view of a synthesis net; checks the output-shape contract."""

    def __init__(self, net: SynthesisNet) -> None:
        self.net = net

    @property
    def latent_channels(self) -> int:
        return self.net.latent_channels

    @property
    def upsampling(self) -> int:
        return self.net.upsampling

    @property
    def out_channels(self) -> int:
        return self.net.out_channels

    def decode(self, z: Tensor3) -> Tensor3:
        out = self.net(z)
        expected = (self.out_channels, z.height * self.upsampling, z.width * self.upsampling)
        if out.shape != expected:
            raise DecodeError(
                f"synthesis output shape {out.shape} violates the decoder "
                f"contract {expected}; unsupported layer geometry"
            )
        return out


class LinearBlockDecoder:
    """Exact linear decoder: each latent column becomes one s x s block.

    Built from a d-dim orthogonal transform with d a perfect square;
    column z[:, m, n] maps through H^T into the block at (m, n) of a
    single-channel output. Its ``encode`` inverse makes round-trip
    oracle tests possible without any trained weights.
    """

    def __init__(self, transform: OrthogonalTransform) -> None:
        s = math.isqrt(transform.dim)
        if s * s != transform.dim:
            raise ValueError(
                f"linear block decoding needs a square-dim transform, got {transform.dim}"
            )
        self.transform = transform
        self._block = s

    @property
    def latent_channels(self) -> int:
        return self.transform.dim

    @property
    def upsampling(self) -> int:
        return self._block

    @property
    def out_channels(self) -> int:
        return 1

    def decode(self, z: Tensor3) -> Tensor3:
        if z.channels != self.transform.dim:
            raise DecodeError(
                f"latent has {z.channels} channels, transform dim is {self.transform.dim}"
            )
        s = self._block
        h, w = z.height, z.width
        columns = z.data.reshape(z.channels, h * w)
        blocks = (self.transform.matrix.T @ columns).T.reshape(h, w, s, s)
        return Tensor3(blocks.transpose(0, 2, 1, 3).reshape(1, h * s, w * s))

    def encode(self, image: Tensor3) -> Tensor3:
        """Forward block transform of a single-channel image (exact inverse)."""
        if image.channels != 1:
            raise ValueError(f"linear block encoding expects 1 channel, got {image.channels}")
        s = self._block
        if image.height % s or image.width % s:
            raise ValueError(
                f"image {image.height}x{image.width} is not a multiple of block {s}"
            )
        h, w = image.height // s, image.width // s
        blocks = image.data[0].reshape(h, s, w, s).transpose(0, 2, 1, 3).reshape(h * w, s * s)
        return Tensor3((blocks @ self.transform.matrix.T).T.reshape(self.transform.dim, h, w))


# ---------------------------------------------------------------------------
# decomposition


def spatial_components(z: Tensor3) -> Iterator[Tensor3]:
    """Yield one tensor per spatial site, row-major; they sum back to z."""
    for m in range(z.height):
        for n in range(z.width):
            comp = np.zeros(z.shape)
            comp[:, m, n] = z.data[:, m, n]
            yield Tensor3(comp)


def channel_components(z: Tensor3) -> Iterator[Tensor3]:
    """Yield one tensor per channel; they sum back to z."""
    for i in range(z.channels):
        comp = np.zeros(z.shape)
        comp[i] = z.data[i]
        yield Tensor3(comp)


def channel_impulse(channels: int, index: int, amplitude: float, extent: int = 1) -> Tensor3:
    """All-zero latent except amplitude at the spatial center of one channel."""
    if not 0 <= index < channels:
        raise IndexError(f"channel {index} out of range for {channels} channels")
    amplitude = float(amplitude)
    if amplitude == 0.0 or not math.isfinite(amplitude):
        raise ValueError("impulse amplitude must be finite and nonzero")
    if extent < 1 or extent % 2 == 0:
        raise ValueError(f"impulse extent must be odd, got {extent}")
    data = np.zeros((channels, extent, extent))
    data[index, extent // 2, extent // 2] = amplitude
    return Tensor3(data)


def amplitudes_from_images(
    net: AnalysisNet, images: Sequence[Tensor3], absolute: bool = False
) -> np.ndarray:
    """Per-channel impulse amplitudes: the largest latent value seen.

    The maximum is signed by default (the raw largest coefficient);
    ``absolute`` switches to the largest magnitude. Channels that never
    leave zero fall back to amplitude 1 with a warning, since a zero
    impulse carries no information.
    """
    if not images:
        raise ValueError("amplitudes_from_images needs at least one image")
    peaks = None
    for image in images:
        z = run_analysis(net, pad_to_multiple(image, net.downsampling)).data
        per_channel = np.abs(z).max(axis=(1, 2)) if absolute else z.max(axis=(1, 2))
        peaks = per_channel if peaks is None else np.maximum(peaks, per_channel)
    dead = peaks == 0.0
    if dead.any():
        warnings.warn(
            f"channels {np.nonzero(dead)[0].tolist()} have zero maxima; using amplitude 1",
            stacklevel=2,
        )
        peaks = np.where(dead, 1.0, peaks)
    return peaks


# ---------------------------------------------------------------------------
# impulse responses


@dataclass
class BasisSet:
    """Per-channel impulse responses of a decoder.

    ``ranks``, when present, holds the rate-rank position of each channel
    (0 = highest bit rate). ``offset_free`` records whether responses had
    the decoder's zero-input output subtracted.
    """

    amplitudes: np.ndarray
    images: list[Tensor3]
    ranks: list[int] | None = None
    offset_free: bool = False
    decoder_name: str = ""

    def __post_init__(self) -> None:
        if len(self.images) != len(self.amplitudes):
            raise ValueError("one amplitude per basis image required")
        if self.ranks is not None and sorted(self.ranks) != list(range(len(self.images))):
            raise ValueError("ranks must be a permutation of channel positions")

    @property
    def channels(self) -> int:
        return len(self.images)

    @property
    def extent(self) -> int:
        return self.images[0].height

    @property
    def out_channels(self) -> int:
        return self.images[0].channels


def _decoder_name(decoder: Decoder) -> str:
    transform = getattr(decoder, "transform", None)
    if transform is not None:
        return transform.name
    return type(decoder).__name__


def extract_basis(
    decoder: Decoder,
    amplitudes: Sequence[float] | np.ndarray,
    offset_free: bool = False,
    ranks: Sequence[int] | None = None,
) -> BasisSet:
    """Decode a unit-site impulse per channel and collect the responses."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    channels = decoder.latent_channels
    if amplitudes.shape != (channels,):
        raise ValueError(
            f"expected {channels} amplitudes for this decoder, got shape {amplitudes.shape}"
        )
    images = []
    for i in range(channels):
        impulse = channel_impulse(channels, i, amplitudes[i])
        try:
            if offset_free:
                images.append(offset_free_decode(decoder, impulse))
            else:
                images.append(decoder.decode(impulse))
        except Exception as exc:
            raise DecodeError(f"decoding the impulse for channel {i} failed: {exc}") from exc
    return BasisSet(
        amplitudes=amplitudes,
        images=images,
        ranks=list(ranks) if ranks is not None else None,
        offset_free=offset_free,
        decoder_name=_decoder_name(decoder),
    )


# ---------------------------------------------------------------------------
# offset-free decoding and aggregation

_zero_response_caches: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _zero_response(decoder: Decoder, shape: tuple[int, int, int]) -> Tensor3:
    try:
        cache = _zero_response_caches.setdefault(decoder, {})
    except TypeError:  # decoder not weak-referenceable; skip caching
        cache = {}
    if shape not in cache:
        cache[shape] = decoder.decode(Tensor3(np.zeros(shape)))
    return cache[shape]


def offset_free_decode(decoder: Decoder, z: Tensor3) -> Tensor3:
    """decode(z) minus decode(0); the zero response is cached per shape."""
    return Tensor3(decoder.decode(z).data - _zero_response(decoder, z.shape).data)


def _pairwise_tree_sum(arrays: Iterable[np.ndarray]) -> np.ndarray:
    """Sum in a fixed pairwise tree over the input order.

    The grouping depends only on the item count, so results are
    reproducible regardless of how the terms were produced.
    """
    stack: list[tuple[int, np.ndarray]] = []  # (tree level, partial sum)
    for arr in arrays:
        level = 0
        while stack and stack[-1][0] == level:
            arr = stack.pop()[1] + arr
            level += 1
        stack.append((level, arr))
    if not stack:
        raise ValueError("cannot sum zero components")
    total = stack.pop()[1]
    while stack:
        total = stack.pop()[1] + total
    return total


def _map_decode(decoder_fn, components: Iterator[Tensor3]) -> Iterator[np.ndarray]:
    workers = thread_cap()
    if workers == 1:
        for comp in components:
            yield decoder_fn(comp).data
        return
    # bounded batches keep memory flat while letting decodes overlap
    with ThreadPoolExecutor(max_workers=workers) as pool:
        batch: list[Tensor3] = []
        for comp in components:
            batch.append(comp)
            if len(batch) >= 4 * workers:
                yield from (t.data for t in pool.map(decoder_fn, batch))
                batch = []
        if batch:
            yield from (t.data for t in pool.map(decoder_fn, batch))


def aggregate_spatial(decoder: Decoder, z: Tensor3) -> Tensor3:
    """Sum of offset-free decodes of every spatial component of z."""
    ofd = lambda comp: offset_free_decode(decoder, comp)
    _zero_response(decoder, z.shape)  # warm the cache before any threads run
    return Tensor3(_pairwise_tree_sum(_map_decode(ofd, spatial_components(z))))


def aggregate_channel(decoder: Decoder, z: Tensor3) -> Tensor3:
    """Sum of offset-free decodes of every channel component of z."""
    ofd = lambda comp: offset_free_decode(decoder, comp)
    _zero_response(decoder, z.shape)
    return Tensor3(_pairwise_tree_sum(_map_decode(ofd, channel_components(z))))


# ---------------------------------------------------------------------------
# separability


@dataclass
class SeparabilityReport:
    """How far decomposed-then-summed decoding sits from joint decoding.

    The std fields are population standard deviations of the per-pixel
    squared errors, pooled over every pixel that entered the mean.
    """

    mse_channel: float
    std_channel: float
    mse_spatial: float
    std_spatial: float
    per_latent_channel: list[float]
    per_latent_spatial: list[float]
    latents_channel: int
    latents_spatial: int

    def to_dict(self) -> dict:
        return {
            "mse_channel": self.mse_channel,
            "std_channel": self.std_channel,
            "mse_spatial": self.mse_spatial,
            "std_spatial": self.std_spatial,
            "per_latent_channel": self.per_latent_channel,
            "per_latent_spatial": self.per_latent_spatial,
            "latents_channel": self.latents_channel,
            "latents_spatial": self.latents_spatial,
        }


def _pooled_stats(per_pixel: list[np.ndarray]) -> tuple[float, float]:
    pooled = np.concatenate([p.ravel() for p in per_pixel])
    return float(np.mean([p.mean() for p in per_pixel])), float(pooled.std())


def separability(
    decoder: Decoder,
    latents: Sequence[Tensor3],
    spatial_subset: int | None = 1,
) -> SeparabilityReport:
    """Channel and spatial separability errors over a set of latents.

    The channel metric averages over every latent. The spatial metric is
    restricted to the first ``spatial_subset`` latents (default 1; None
    means all) because it costs one decode per latent site.
    """
    if not latents:
        raise ValueError("separability needs at least one latent")
    if spatial_subset is None:
        spatial_subset = len(latents)
    if spatial_subset < 1:
        raise ValueError("spatial_subset must be >= 1 or None")
    channel_sq: list[np.ndarray] = []
    spatial_sq: list[np.ndarray] = []
    for index, z in enumerate(latents):
        joint = offset_free_decode(decoder, z)
        channel_sq.append(squared_error(joint, aggregate_channel(decoder, z)).data)
        if index < spatial_subset:
            spatial_sq.append(squared_error(joint, aggregate_spatial(decoder, z)).data)
    mse_channel, std_channel = _pooled_stats(channel_sq)
    mse_spatial, std_spatial = _pooled_stats(spatial_sq)
    return SeparabilityReport(
        mse_channel=mse_channel,
        std_channel=std_channel,
        mse_spatial=mse_spatial,
        std_spatial=std_spatial,
        per_latent_channel=[float(p.mean()) for p in channel_sq],
        per_latent_spatial=[float(p.mean()) for p in spatial_sq],
        latents_channel=len(channel_sq),
        latents_spatial=len(spatial_sq),
    )


# ---------------------------------------------------------------------------
# similarity against reference bases


@dataclass
class SimilarityReport:
    """Optimal one-to-one matching between two sets of basis images."""

    pairs: list[tuple[int, int, float]]  # (basis index, reference index, score)
    mean_score: float
    matrix: np.ndarray = field(repr=False)
    resampled: bool = False
    luma_projected: bool = False

    def to_dict(self, include_matrix: bool = False) -> dict:
        doc = {
            "mean_score": self.mean_score,
            "resampled": self.resampled,
            "luma_projected": self.luma_projected,
            "pairs": [
                {"basis": b, "reference": r, "score": s} for b, r, s in self.pairs
            ],
        }
        if include_matrix:
            doc["matrix"] = [[float(v) for v in row] for row in self.matrix]
        return doc


def _flat_images(source) -> list[np.ndarray]:
    """Images as 2-D (reference) or (channel, h, w) float arrays."""
    if isinstance(source, Basis2D):
        return [np.asarray(im) for im in source.images]
    if isinstance(source, BasisSet):
        return [im.data for im in source.images]
    raise TypeError(f"cannot take basis images from {type(source).__name__}")


def _nearest_resize_2d(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    rows = (np.arange(height) * arr.shape[-2]) // height
    cols = (np.arange(width) * arr.shape[-1]) // width
    return arr[..., rows[:, None], cols[None, :]]


def _mean_removed_cosine(a: np.ndarray, b: np.ndarray) -> float:
    av = a.ravel() - a.mean()
    bv = b.ravel() - b.mean()
    na, nb = float(np.linalg.norm(av)), float(np.linalg.norm(bv))
    # constant images vanish after mean removal; two constants match exactly
    if na <= 1e-12 and nb <= 1e-12:
        return 1.0
    if na <= 1e-12 or nb <= 1e-12:
        return 0.0
    return abs(float(av @ bv) / (na * nb))


def basis_similarity(basis: BasisSet, reference: BasisSet | Basis2D) -> SimilarityReport:
    """Score |cosine| of mean-removed images under the best 1:1 assignment.

    Spatial-size mismatches are bridged by nearest-neighbor resampling of
    the reference; channel-count mismatches by projecting the 3-channel
    side to its channel mean. Both adjustments are flagged in the report.
    """
    if not basis.images:
        raise ValueError("basis set is empty")
    ours = _flat_images(basis)
    theirs = _flat_images(reference)
    if not theirs:
        raise ValueError("reference basis is empty")

    def channel_count(im: np.ndarray) -> int:
        return im.shape[0] if im.ndim == 3 else 1

    luma = False
    if channel_count(ours[0]) != channel_count(theirs[0]):
        luma = True
        ours = [im.mean(axis=0) if im.ndim == 3 else im for im in ours]
        theirs = [im.mean(axis=0) if im.ndim == 3 else im for im in theirs]

    resampled = False
    target = ours[0].shape[-2:]
    if theirs[0].shape[-2:] != target:
        resampled = True
        theirs = [_nearest_resize_2d(im, *target) for im in theirs]

    matrix = np.array(
        [[_mean_removed_cosine(a, b) for b in theirs] for a in ours]
    )
    rows, cols = linear_sum_assignment(-matrix)
    pairs = [(int(r), int(c), float(matrix[r, c])) for r, c in zip(rows, cols)]
    mean_score = float(np.mean([s for _, _, s in pairs]))
    return SimilarityReport(
        pairs=pairs,
        mean_score=mean_score,
        matrix=matrix,
        resampled=resampled,
        luma_projected=luma,
    )


# ---------------------------------------------------------------------------
# basis set directory serialization: one PNG per channel plus a JSON index

_INDEX_NAME = "index.json"


def save_basis_set(basis: BasisSet, directory: str | os.PathLike) -> None:
    """Write per-channel PNGs (symmetric-zero scaled) and an index.json.

    The per-channel peak magnitude is stored in the index, so loading
    reconstructs the signed values up to 8-bit quantization.
    """
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, image in enumerate(basis.images):
        peak = float(np.abs(image.data).max())
        scaled = image.data / (2.0 * peak) + 0.5 if peak > 0 else np.full_like(image.data, 0.5)
        name = f"channel_{i:03d}.png"
        atomic_write(os.path.join(directory, name), image_to_bytes(ImagePlane(scaled)))
        entries.append(
            {
                "channel": i,
                "file": name,
                "amplitude": float(basis.amplitudes[i]),
                "peak": peak,
                "rank": None if basis.ranks is None else basis.ranks[i],
            }
        )
    index = {
        "decoder": basis.decoder_name,
        "extent": basis.extent,
        "out_channels": basis.out_channels,
        "offset_free": basis.offset_free,
        "entries": entries,
    }
    atomic_write(os.path.join(directory, _INDEX_NAME), canonical_json_bytes(index))


def load_basis_set(directory: str | os.PathLike) -> BasisSet:
    """Load a basis set saved by :func:`save_basis_set`."""
    directory = os.fspath(directory)
    with open(os.path.join(directory, _INDEX_NAME), "r", encoding="utf-8") as fh:
        index = json.load(fh)
    entries = sorted(index["entries"], key=lambda e: e["channel"])
    images = []
    amplitudes = []
    ranks = []
    for entry in entries:
        plane = load_image(os.path.join(directory, entry["file"]))
        peak = float(entry["peak"])
        images.append(Tensor3((plane.data - 0.5) * (2.0 * peak)))
        amplitudes.append(float(entry["amplitude"]))
        ranks.append(entry.get("rank"))
    has_ranks = all(r is not None for r in ranks)
    return BasisSet(
        amplitudes=np.array(amplitudes),
        images=images,
        ranks=[int(r) for r in ranks] if has_ranks else None,
        offset_free=bool(index.get("offset_free", False)),
        decoder_name=str(index.get("decoder", "")),
    )
