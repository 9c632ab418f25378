"""Dense 3-D tensors, image planes and their file I/O.

Every array that moves between modules (latents, reconstructions, basis
images) is a :class:`Tensor3`: float64 values in row-major
(channel, height, width) order. Values are immutable after construction,
so tensors are safe to share across threads.
"""

from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError

__all__ = [
    "Tensor3",
    "ImagePlane",
    "zeros",
    "zeros_like",
    "add",
    "sub",
    "scale",
    "squared_error",
    "mse",
    "channel_max",
    "load_image",
    "save_image",
    "image_to_bytes",
]


class Tensor3:
    """Immutable 3-D float64 array indexed (channel, height, width)."""

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 3:
            raise ValueError(
                f"expected 3 dimensions (channel, height, width), got shape {arr.shape}"
            )
        if arr.size == 0:
            raise ValueError(f"tensor has an empty dimension: shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor contains NaN or Inf")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """The underlying read-only ndarray."""
        return self._data

    @property
    def channels(self) -> int:
        return self._data.shape[0]

    @property
    def height(self) -> int:
        return self._data.shape[1]

    @property
    def width(self) -> int:
        return self._data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._data.shape

    def __repr__(self) -> str:
        c, h, w = self.shape
        return f"{type(self).__name__}(channels={c}, height={h}, width={w})"


class ImagePlane(Tensor3):
    """A Tensor3 restricted to 1 (grayscale) or 3 (RGB) channels.

    Pixel values are in [0, 1] at file boundaries; intermediate math may
    leave that range and is only clamped when writing files.
    """

    def __init__(self, data) -> None:
        super().__init__(data)
        if self.channels not in (1, 3):
            raise ValueError(f"image planes have 1 or 3 channels, got {self.channels}")


def _check_same_shape(a: Tensor3, b: Tensor3, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} differ")


def zeros(channels: int, height: int, width: int) -> Tensor3:
    return Tensor3(np.zeros((channels, height, width)))


def zeros_like(t: Tensor3) -> Tensor3:
    return Tensor3(np.zeros(t.shape))


def add(a: Tensor3, b: Tensor3) -> Tensor3:
    _check_same_shape(a, b, "add")
    return Tensor3(a.data + b.data)


def sub(a: Tensor3, b: Tensor3) -> Tensor3:
    _check_same_shape(a, b, "sub")
    return Tensor3(a.data - b.data)


def scale(t: Tensor3, factor: float) -> Tensor3:
    return Tensor3(t.data * float(factor))


def squared_error(a: Tensor3, b: Tensor3) -> Tensor3:
    """Per-element squared difference; callers pool these for std estimates."""
    _check_same_shape(a, b, "squared_error")
    d = a.data - b.data
    return Tensor3(d * d)


def mse(a: Tensor3, b: Tensor3) -> float:
    """Mean squared error over all elements of two same-shaped tensors."""
    return float(squared_error(a, b).data.mean())


def channel_max(t: Tensor3, index: int) -> float:
    """Signed maximum of channel ``index`` (largest element, not largest |.|)."""
    if not 0 <= index < t.channels:
        raise IndexError(f"channel {index} out of range for {t.channels} channels")
    return float(t.data[index].max())


# ---------------------------------------------------------------------------
# image file I/O: 8-bit PNG plus binary PPM/PGM, pixel p maps to p / 255


def _from_uint8(pixels: np.ndarray) -> ImagePlane:
    if pixels.ndim == 2:
        arr = pixels[None, :, :]
    else:
        arr = pixels.transpose(2, 0, 1)
    return ImagePlane(arr.astype(np.float64) / 255.0)


def _to_uint8(img: ImagePlane) -> np.ndarray:
    clamped = np.clip(img.data, 0.0, 1.0)
    # round half away from zero; values are nonnegative so floor(x + 0.5) works
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def _read_pnm(blob: bytes) -> ImagePlane:
    # binary PGM (P5) / PPM (P6) with maxval 255
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(blob):
            if blob[pos : pos + 1].isspace():
                pos += 1
            elif blob[pos : pos + 1] == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        return blob[start:pos]

    magic = token()
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if maxval != 255:
        raise ValueError(f"only maxval 255 PNM supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    depth = 1 if magic == b"P5" else 3
    need = width * height * depth
    raster = blob[pos : pos + need]
    if len(raster) != need:
        raise ValueError(f"PNM raster truncated: need {need} bytes, have {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, depth)
    return _from_uint8(pixels.squeeze(axis=2) if depth == 1 else pixels)


def _write_pnm(img: ImagePlane) -> bytes:
    pixels = _to_uint8(img)
    if img.channels == 1:
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        return header + pixels[0].tobytes()
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + pixels.transpose(1, 2, 0).tobytes()


def load_image(path: str | os.PathLike) -> ImagePlane:
    """Load an 8-bit PNG, PPM or PGM file as an image plane in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] in (b"P5", b"P6"):
        return _read_pnm(blob)
    with Image.open(io.BytesIO(blob)) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        pixels = np.asarray(im, dtype=np.uint8)
    return _from_uint8(pixels)


def image_to_bytes(img: ImagePlane, fmt: str = "png") -> bytes:
    """Encode an image plane; values are clamped to [0, 1] first."""
    fmt = fmt.lower()
    if fmt in ("ppm", "pgm", "pnm"):
        return _write_pnm(img)
    if fmt != "png":
        raise ValueError(f"unsupported image format {fmt!r}")
    pixels = _to_uint8(img)
    if img.channels == 1:
        im = Image.fromarray(pixels[0], mode="L")
    else:
        im = Image.fromarray(pixels.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: ImagePlane, path: str | os.PathLike) -> None:
    """Write an image plane; format chosen from the file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lstrip(".").lower() or "png"
    blob = image_to_bytes(img, "pnm" if ext in ("ppm", "pgm", "pnm") else ext)
    with open(path, "wb") as fh:
        fh.write(blob)
