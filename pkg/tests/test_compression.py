import warnings

import numpy as np
import pytest

from irn.compression.codec import (BASE_TABLE, HEADER_BITS, CodecError, LossyCodec, LossyStream, block_dct, block_idct,
                                   lossy_decode, lossy_encode, quality_scale, quant_table, zero_order_entropy)
from irn.compression.crm import (CrmModel, CrmTrainConfig, crm_checkpoint, crm_from_checkpoint, crm_restore, make_pairs,
                                 pairs_loss, train_crm)
from irn.compression.rd import RD_HEADER, Pipeline, RdPoint, rd_eval, run_pipeline, write_rd_csv
from irn import tensor as T
from irn.checkpoint import from_bytes, to_bytes
from irn.images import ImageBuffer, bicubic_resize
from irn.metrics import psnr
from irn.models import ModelConfig, build_model


def dct_matrix(n=8):
    """Orthonormal DCT-II basis written out from its cosine definition."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


def test_block_dct_matches_basis_and_roundtrips():
    rng = np.random.default_rng(0)
    x = rng.uniform(-128, 127, (16, 8, 2))
    c = block_dct(x)
    d = dct_matrix()
    np.testing.assert_allclose(c[8:, :, 1], d @ x[8:, :, 1] @ d.T, atol=1e-9)
    assert np.abs(block_idct(c) - x).max() < 1e-4


def test_quality_scaling_follows_standard():
    assert quality_scale(50) == 100 and quality_scale(10) == 500 and quality_scale(90) == 20
    np.testing.assert_array_equal(quant_table(50), BASE_TABLE)
    np.testing.assert_array_equal(quant_table(100), 1)
    assert quant_table(1).max() == 255
    for q in (0, 101, 2.5, True):
        with pytest.raises(CodecError):
            LossyCodec(q)


def test_constant_image_has_dc_only():
    img = ImageBuffer(np.full((16, 24, 3), 77, np.uint8))
    stream, bpp = lossy_encode(img, 30)
    ac = stream.coeffs.copy()
    ac[::8, ::8] = 0
    assert not ac.any()
    # one DC symbol per 64 in the luma plane; neutral chroma quantizes to all zeros
    p = 1 / 64
    h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    assert not stream.coeffs[:, :, 1:].any()
    assert bpp == pytest.approx((HEADER_BITS + h * 16 * 24) / (16 * 24))
    assert lossy_decode(stream).data.shape == img.data.shape


def test_stream_container_roundtrip_and_padding():
    img = ImageBuffer(np.random.default_rng(0).integers(0, 256, (13, 21, 3), dtype=np.uint8))
    stream, _ = lossy_encode(img, 75)
    assert stream.coeffs.shape == (16, 24, 3)
    data = stream.to_bytes()
    assert data[:4] == b"IRNL"
    assert LossyStream.from_bytes(data) == stream
    assert lossy_decode(stream).data.shape == (13, 21, 3)
    with pytest.raises(CodecError):
        LossyStream.from_bytes(data[:-2])


def test_grayscale_codec():
    g = ImageBuffer(np.random.default_rng(1).integers(0, 256, (8, 8), dtype=np.uint8), "Grayscale")
    out, _ = LossyCodec(90)(g)
    assert out.colorspace == "Grayscale"


def test_quality_monotonicity_on_toy_corpus(small_corpus):
    for img in small_corpus:
        rates = [lossy_encode(img, q)[1] for q in (10, 30, 50, 75, 95, 100)]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert psnr(img, LossyCodec(95)(img)[0], "rgb") > psnr(img, LossyCodec(10)(img)[0], "rgb")
        assert psnr(img, LossyCodec(100)(img)[0], "rgb") >= 40.0


def test_entropy():
    assert zero_order_entropy(np.array([1, 1, 1])) == 0.0
    assert zero_order_entropy(np.array([0, 1, 2, 3])) == pytest.approx(2.0)


def test_crm_starts_as_identity_and_zero_scale_is_identity(small_corpus):
    img = bicubic_resize(small_corpus[0], size=(24, 24))
    assert crm_restore(CrmModel(1, 8, 4), img) == img
    crm = CrmModel(1, 8, 4, seed=3)
    rng = np.random.default_rng(0)
    for p in crm.parameters():
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    assert crm_restore(crm, img) != img
    crm.set_res_scale(0.0)
    assert crm_restore(crm, img) == img
    with T.precision("float64"):
        x = img.to_float()
        np.testing.assert_array_equal(crm.restore_float(x), x)


def test_crm_training_reduces_loss_and_checkpoint_roundtrips(small_corpus):
    lr_imgs = [bicubic_resize(im, size=(24, 24)) for im in small_corpus]
    cfg = CrmTrainConfig(quality=20, blocks=1, features=8, growth=4, iters=30, batch=4, crop=16, milestones=())
    crm, hist = train_crm(lr_imgs, cfg)
    pairs = make_pairs(lr_imgs, 20)
    assert pairs_loss(crm, pairs) < pairs_loss(CrmModel(1, 8, 4), pairs)
    assert hist[0]["iter"] == 1
    back = crm_from_checkpoint(from_bytes(to_bytes(crm_checkpoint(crm))))
    x = lr_imgs[0].to_float()
    np.testing.assert_array_equal(back.restore_float(x), crm.restore_float(x))
    assert back.quality == 20


def test_crm_quality_mismatch_warns(small_corpus):
    crm = CrmModel(1, 8, 4, quality=30)
    with pytest.warns(RuntimeWarning, match="q=30"):
        crm_restore(crm, small_corpus[0], quality=90)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        crm_restore(crm, small_corpus[0], quality=30)


def test_pipeline_parsing():
    p = Pipeline.parse("irn+lossy+crm+irn")
    assert (p.down, p.store, p.crm, p.up, p.tag) == ("irn", "lossy", True, "irn", "irn+lossy+crm+irn")
    for bad in ("irn+png+crm+irn", "x+none+irn", "irn+zip+irn", "irn+irn"):
        with pytest.raises(ValueError):
            Pipeline.parse(bad)


def test_rd_eval_csv_and_rates(tmp_path, small_corpus):
    assert rd_eval("bicubic+lossy+bicubic", small_corpus, [], csv_path=tmp_path / "e.csv") == []
    assert (tmp_path / "e.csv").read_text().strip() == ",".join(RD_HEADER)
    pts = rd_eval("bicubic+lossy+bicubic", small_corpus, [20, 50, 90], csv_path=tmp_path / "r.csv")
    assert [p.quality for p in pts] == [20, 50, 90]
    assert pts[0].bpp < pts[1].bpp < pts[2].bpp
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 4
    raw = rd_eval("bicubic+none+bicubic", small_corpus, [30])
    assert len(raw) == 1 and raw[0].bpp == pytest.approx(24 / 4)
    with pytest.raises(ValueError):
        RdPoint("x", 1, 0.0, 30.0)


def test_irn_png_pipeline_measures_file_bytes(small_corpus):
    model = build_model(ModelConfig("IRN", 2, 1, 4, 4))
    rec, bpp = run_pipeline(Pipeline.parse("irn+png+irn"), small_corpus[0], 2, model=model)
    assert rec.data.shape == small_corpus[0].data.shape
    assert 0 < bpp < 24 / 4 + 1
    with pytest.raises(FileNotFoundError):
        run_pipeline(Pipeline.parse("irn+png+irn"), small_corpus[0], 2)
