import sys

import numpy as np
import pytest

from pihot import pngio
from pihot.mask_ops import dilate_mask
from pihot.plugins import (BackendError, ConstantDepth, DiffusionInpainter, ExternalDepth,
                           ExternalInpainter, OracleDepth, estimate_depth, external_mask,
                           inpaint, make_depth, make_inpainter)
from pihot.synthdata import Layer, SceneSpec, Shape, sample_from_spec


def _image(seed=0, shape=(12, 10)):
    return np.random.default_rng(seed).random(shape + (3,)).astype(np.float32)


def test_empty_mask_is_identity():
    img = _image()
    out = inpaint(DiffusionInpainter(), img, np.zeros(img.shape[:2], np.uint8))
    np.testing.assert_array_equal(out, img)


def test_constant_image_is_fixed_point():
    img = np.full((10, 10, 3), 0.5, np.float32)
    m = np.zeros((10, 10), np.uint8)
    m[2:7, 3:9] = 1
    np.testing.assert_array_equal(inpaint(DiffusionInpainter(), img, m), img)


def test_unmasked_pixels_untouched_and_deterministic():
    img = _image(1)
    m = np.zeros(img.shape[:2], np.uint8)
    m[4:9, 2:6] = 1
    a = inpaint(DiffusionInpainter(), img, m)
    b = inpaint(DiffusionInpainter(), img, m)
    np.testing.assert_array_equal(a[m == 0], img[m == 0])
    assert a.tobytes() == b.tobytes()
    assert a.dtype == img.dtype


def test_all_ones_mask_rejected():
    img = _image()
    with pytest.raises(BackendError):
        inpaint(DiffusionInpainter(), img, np.ones(img.shape[:2], np.uint8))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        inpaint(DiffusionInpainter(), _image(), np.zeros((3, 3), np.uint8))


def _wall_only_scene():
    # human stands in front of bare wall; the object is far from the dilated mask
    human = Layer([Shape("rect", 20, 24, 44, 36), Shape("ellipse", 14, 27, 20, 33)], 1.0,
                  (0.9, 0.7, 0.6))
    obj = Layer([Shape("rect", 40, 2, 60, 14)], 1.0, (0.2, 0.3, 0.8), 1)
    return SceneSpec(64, 64, human, [obj], wall_depth=3.0, wall_color=(0.45, 0.45, 0.45),
                     noise=0.02, noise_seed=5)


def test_inpainting_recovers_human_free_scene():
    s = sample_from_spec(_wall_only_scene())
    m = dilate_mask(s.human_mask, 3)
    out = inpaint(DiffusionInpainter(), s.image, m)
    err = np.abs(out - s.image_no_human)[m.astype(bool)]
    assert err.max() <= 0.05


def test_constant_depth_stub():
    np.testing.assert_array_equal(estimate_depth(ConstantDepth(), _image(shape=(4, 4))), 0.5)


def test_oracle_depth_reads_sidecar():
    spec = SceneSpec(64, 64, Layer([Shape("rect", 20, 20, 40, 30)], 1.0, (0.9, 0.7, 0.6)),
                     [Layer([Shape("rect", 30, 28, 50, 45)], 1.0, (0.2, 0.3, 0.8), 1)],
                     wall_depth=3.0)
    s = sample_from_spec(spec)
    d = estimate_depth(OracleDepth(), s.image, sidecar=s.depth_with_human)
    np.testing.assert_array_equal(d, s.depth_with_human)
    assert set(np.unique(d)) == {1.0, 3.0}
    assert d.min() == min(1.0, 3.0) and d.max() == 3.0
    d_o = estimate_depth(OracleDepth(), s.image_no_human, sidecar=s.depth_no_human)
    assert d_o[25, 22] == 3.0  # wall behind the removed human
    assert d_o[35, 35] == 1.0  # object now unoccluded


def test_oracle_depth_needs_sidecar():
    with pytest.raises(BackendError):
        estimate_depth(OracleDepth(), _image())
    with pytest.raises(BackendError):
        estimate_depth(OracleDepth(), _image(), sidecar=np.zeros((2, 2)))


def test_depth_backend_output_validated():
    class Negative:
        name = "neg"

        def __call__(self, image, sidecar=None):
            return -np.ones(image.shape[:2])

    with pytest.raises(BackendError):
        estimate_depth(Negative(), _image())


def test_factories(small_cfg):
    assert isinstance(make_inpainter(small_cfg), DiffusionInpainter)
    assert isinstance(make_depth(small_cfg), OracleDepth)
    assert isinstance(make_depth({**small_cfg, "plugins.depth": "constant_stub"}), ConstantDepth)
    with pytest.raises(BackendError):
        make_depth({**small_cfg, "plugins.depth": "nope"})
    with pytest.raises(BackendError):
        make_inpainter({**small_cfg, "plugins.inpainter": "external"})


INVERT = (
    "import sys, numpy as np; from PIL import Image; "
    "a = np.array(Image.open(sys.argv[1]).convert('RGB')); "
    "Image.fromarray(255 - a).save(sys.argv[2])"
)
DEPTH = (
    "import sys, numpy as np; from PIL import Image; "
    "a = np.array(Image.open(sys.argv[1]).convert('L')).astype(np.uint16) * 10; "
    "Image.fromarray(a).save(sys.argv[2])"
)
MASK = (
    "import sys, numpy as np; from PIL import Image; "
    "a = np.array(Image.open(sys.argv[1]).convert('L')); "
    "Image.fromarray(np.where(a > 127, 255, 0).astype(np.uint8)).save(sys.argv[2])"
)


def _cmd(script, *placeholders):
    return " ".join([sys.executable, "-c", repr(script)] + list(placeholders))


def test_external_inpainter_roundtrip():
    img = pngio.quantize_image(_image(2))
    m = np.zeros(img.shape[:2], np.uint8)
    m[2:5, 2:5] = 1
    backend = ExternalInpainter(_cmd(INVERT, "{image}", "{output}"))
    out = inpaint(backend, img, m)
    np.testing.assert_allclose(out, 1 - img, atol=1e-6)


def test_external_depth_scaling():
    img = np.zeros((4, 5, 3), np.float32)
    img[0, 0] = 1.0
    d = estimate_depth(ExternalDepth(_cmd(DEPTH, "{image}", "{output}"), scale=1000.0), img)
    assert d.shape == (4, 5)
    assert d[0, 0] == pytest.approx(2.55)
    assert d[1, 1] == 0.0


def test_external_mask_plugin():
    img = np.zeros((4, 4, 3), np.float32)
    img[1:3, 1:3] = 1.0
    m = external_mask(_cmd(MASK, "{image}", "{output}"), img)
    assert m.sum() == 4 and m[1, 1] == 1


def test_external_failure_is_reported():
    backend = ExternalInpainter(_cmd("import sys; sys.exit(3)", "{image}", "{output}"))
    m = np.zeros((4, 4), np.uint8)
    m[0, 0] = 1
    with pytest.raises(BackendError, match="failed"):
        inpaint(backend, np.zeros((4, 4, 3), np.float32), m)
