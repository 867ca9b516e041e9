"""Text / image / pixel embedders.

The toy encoders are deterministic stand-ins with the same shapes as the
pretrained ones (CLIP text: 1024-d; ResNet-50 bottleneck: stride 32). The
adapter classes delegate to an external encoder instead.
"""
from __future__ import annotations

import hashlib
import re
import subprocess
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from lovmm import io
from lovmm.errors import BadImageShape, EmptyText, MissingLabels

TEXT_DIM = 1024
MAP_DIM = 512

# Function words carry no grounding signal for the hashing encoder.
STOPWORDS = frozenset(
    "a an the of to in on at from into onto and it them all front beside next near behind".split()
)


def tokenize(text: str) -> list[str]:
    tokens = re.findall(r"[a-z0-9]+", text.lower())
    content = [t for t in tokens if t not in STOPWORDS]
    return content or tokens


def _hash(token: str, salt: bytes) -> int:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=salt)
    return int.from_bytes(h.digest(), "little")


class TextEncoder:
    """Signed feature hashing of lowercase tokens, L2-normalized.

    Two independently keyed hashes pick each token's index and sign.
    """

    kind = "toy"

    def __init__(self, dim: int = TEXT_DIM):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def encode(self, text: str) -> np.ndarray:
        if not isinstance(text, str) or not text.strip():
            raise EmptyText("cannot encode empty text")
        cached = self._cache.get(text)
        if cached is not None:
            return cached.copy()
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"no tokens in {text!r}")
        vec = np.zeros(self.dim)
        for tok in tokens:
            idx = _hash(tok, b"index") % self.dim
            sign = 1.0 if _hash(tok, b"sign") & 1 else -1.0
            vec[idx] += sign
        vec /= np.linalg.norm(vec)
        self._cache[text] = vec
        return vec.copy()

    __call__ = encode


_default_text = {TEXT_DIM: TextEncoder(TEXT_DIM)}


def encode_text(text: str, dim: int = TEXT_DIM) -> np.ndarray:
    enc = _default_text.setdefault(dim, TextEncoder(dim))
    return enc.encode(text)


def cosine(a, b) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class ImageFeatureGrid:
    def __init__(self, tensor: np.ndarray, stride: int):
        self.tensor = tensor
        self.stride = stride

    @property
    def shape(self):
        return self.tensor.shape


def _check_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise BadImageShape(f"expected HxWx3 image, got {image.shape}")
    return image


class ToyImageEncoder:
    """Frozen random projection of non-overlapping stride x stride patches."""

    kind = "toy"

    def __init__(self, channels: int = 64, stride: int = 32, seed: int = 0):
        self.channels = channels
        self.stride = stride
        self.seed = seed
        rng = np.random.default_rng(seed)
        fan_in = stride * stride * 3
        self.weight = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, channels))
        self.bias = rng.normal(0.0, 0.1, size=channels)

    def encode(self, image) -> ImageFeatureGrid:
        image = _check_image(image)
        H, W, _ = image.shape
        s = self.stride
        h, w = H // s, W // s
        if h < 1 or w < 1:
            raise BadImageShape(f"image {H}x{W} smaller than stride {s}")
        patches = image[: h * s, : w * s].reshape(h, s, w, s, 3).transpose(0, 2, 1, 3, 4)
        feats = np.tanh(patches.reshape(h, w, -1) @ self.weight + self.bias)
        return ImageFeatureGrid(feats, s)

    __call__ = encode


class AdapterImageEncoder:
    """Delegates to an external encoder and resizes to a declared grid.

    ``backend`` is either a callable ``image -> (h', w', C)`` array or a
    command list; commands are run as ``cmd + [in.arr, out.arr]`` and
    exchange tensors in the repo's array container.
    """

    kind = "adapter"

    def __init__(self, backend: Callable | list[str], grid: tuple[int, int], stride: int = 32):
        self.backend = backend
        self.grid = grid
        self.stride = stride

    def _run(self, image: np.ndarray) -> np.ndarray:
        if callable(self.backend):
            return np.asarray(self.backend(image), dtype=np.float64)
        with tempfile.TemporaryDirectory() as tmp:
            src, dst = Path(tmp) / "in.arr", Path(tmp) / "out.arr"
            io.save_array(src, image.astype(np.float32))
            subprocess.run([*self.backend, str(src), str(dst)], check=True)
            return io.load_array(dst).astype(np.float64)

    def encode(self, image) -> ImageFeatureGrid:
        image = _check_image(image)
        feats = self._run(image)
        if feats.ndim != 3:
            raise BadImageShape(f"adapter returned {feats.shape}")
        h, w = self.grid
        zoom = (h / feats.shape[0], w / feats.shape[1], 1.0)
        if zoom[:2] != (1.0, 1.0):
            feats = ndimage.zoom(feats, zoom, order=1)
        return ImageFeatureGrid(feats, self.stride)

    __call__ = encode


class OraclePixelEmbedder:
    """Per-pixel embedding = text embedding of the pixel's ground-truth label.

    ``labels`` is an int image indexing ``label_names``; negative entries
    are unlabeled and embed to the zero vector.
    """

    kind = "oracle"

    def __init__(self, dim: int = MAP_DIM, text_encoder: TextEncoder | None = None):
        self.text_encoder = text_encoder or TextEncoder(dim)
        self.embedding_dim = self.text_encoder.dim

    def embed_pixels(self, image, depth, labels=None, label_names=None) -> np.ndarray:
        if labels is None or label_names is None:
            raise MissingLabels("oracle pixel embedder needs a label image")
        labels = np.asarray(labels)
        table = np.zeros((len(label_names) + 1, self.embedding_dim))
        for i, name in enumerate(label_names):
            table[i] = self.text_encoder.encode(name)
        idx = np.where(labels < 0, len(label_names), labels)
        return table[idx]


class ImagePixelEmbedder:
    """Bilinear upsampling of an image encoder's grid back to pixel resolution."""

    kind = "toy"

    def __init__(self, image_encoder: ToyImageEncoder | AdapterImageEncoder):
        self.image_encoder = image_encoder
        self.embedding_dim = getattr(image_encoder, "channels", None)

    def embed_pixels(self, image, depth, labels=None, label_names=None) -> np.ndarray:
        image = _check_image(image)
        H, W, _ = image.shape
        grid = self.image_encoder.encode(image).tensor
        up = ndimage.zoom(grid, (H / grid.shape[0], W / grid.shape[1], 1.0), order=1)
        norms = np.linalg.norm(up, axis=-1, keepdims=True)
        return up / np.maximum(norms, 1e-12)
