from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lovmm.encoders import (
    AdapterImageEncoder,
    ImagePixelEmbedder,
    OraclePixelEmbedder,
    TextEncoder,
    ToyImageEncoder,
    cosine,
    encode_text,
    tokenize,
)
from lovmm.errors import BadImageShape, EmptyText, MissingLabels


def test_text_determinism_and_dim():
    a, b = encode_text("red block"), encode_text("red block")
    assert a.shape == (1024,)
    np.testing.assert_array_equal(a, b)


@settings(max_examples=80, deadline=None)
@given(st.text(alphabet="abcdefghij klm", min_size=1, max_size=40).filter(lambda s: s.strip()))
def test_text_unit_norm(s):
    assert abs(np.linalg.norm(encode_text(s)) - 1.0) < 1e-6


def test_shared_tokens_raise_similarity():
    base = encode_text("red block")
    assert cosine(base, encode_text("red block on sofa")) > cosine(base, encode_text("green bowl"))


def test_hashing_matches_independent_count():
    # two distinct content tokens, no collision at this dim -> cosine 1/sqrt(2) with one of them
    enc = TextEncoder(1024)
    v = enc.encode("sofa cabinet")
    assert cosine(v, enc.encode("sofa")) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_stopwords_ignored_but_not_emptied():
    assert tokenize("the red block on the sofa") == ["red", "block", "sofa"]
    assert tokenize("the") == ["the"]
    with pytest.raises(EmptyText):
        encode_text("   ")


def test_image_grid_shape_and_determinism():
    img = np.random.default_rng(0).random((224, 224, 3))
    g = ToyImageEncoder(channels=8, stride=32, seed=3).encode(img)
    assert g.shape == (7, 7, 8) and g.stride == 32
    np.testing.assert_array_equal(g.tensor, ToyImageEncoder(8, 32, 3).encode(img).tensor)
    assert np.all(np.isfinite(ToyImageEncoder(8).encode(np.zeros((64, 64, 3))).tensor))


def test_image_shape_errors():
    with pytest.raises(BadImageShape):
        ToyImageEncoder().encode(np.zeros((64, 64)))
    with pytest.raises(BadImageShape):
        ToyImageEncoder(stride=32).encode(np.zeros((16, 16, 3)))


def test_oracle_embedder():
    emb = OraclePixelEmbedder(64)
    labels = np.array([[0, 1], [1, -1]])
    out = emb.embed_pixels(np.zeros((2, 2, 3)), np.ones((2, 2)), labels, ["desk", "floor"])
    np.testing.assert_allclose(out[0, 0], TextEncoder(64).encode("desk"))
    np.testing.assert_array_equal(out[0, 1], out[1, 0])
    np.testing.assert_array_equal(out[1, 1], np.zeros(64))
    with pytest.raises(MissingLabels):
        emb.embed_pixels(np.zeros((2, 2, 3)), np.ones((2, 2)))


def test_image_pixel_embedder_upsamples():
    emb = ImagePixelEmbedder(ToyImageEncoder(channels=6, stride=8))
    out = emb.embed_pixels(np.random.default_rng(1).random((32, 48, 3)), np.ones((32, 48)))
    assert out.shape == (32, 48, 6)
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-9)


def test_adapter_callable_and_resize():
    enc = AdapterImageEncoder(lambda im: np.ones((3, 5, 4)), grid=(6, 10))
    g = enc.encode(np.zeros((192, 320, 3)))
    assert g.shape == (6, 10, 4)
    np.testing.assert_allclose(g.tensor, 1.0)


def test_adapter_subprocess(tmp_path):
    script = tmp_path / "enc.py"
    script.write_text(
        "import sys\n"
        "from lovmm import io\n"
        "x = io.load_array(sys.argv[1])\n"
        "io.save_array(sys.argv[2], x[::32, ::32] * 2)\n"
    )
    import sys

    enc = AdapterImageEncoder([sys.executable, str(script)], grid=(2, 2))
    img = np.full((64, 64, 3), 0.25)
    np.testing.assert_allclose(enc.encode(img).tensor, 0.5)
