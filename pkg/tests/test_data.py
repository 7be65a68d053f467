import json

import numpy as np
import pytest
from PIL import Image

from bgfd.data import (Dataset, SynthConfig, apply_shift, generate_dataset, generate_pair, normalize,
                       read_dataset, write_dataset)
from bgfd.errors import IntegrityError, ValidationError


def rasterize_loop(shapes, t, size):
    """Pixel-by-pixel top-most shape index, written without the library's
    vectorised ``covers``."""
    top = [[-1] * size for _ in range(size)]
    for i, s in enumerate(shapes):
        if t not in s.present:
            continue
        for y in range(size):
            for x in range(size):
                dy, dx = (y - s.cy) / s.half_h, (x - s.cx) / s.half_w
                inside = max(abs(dy), abs(dx)) <= 1 if s.kind == "rect" else dy * dy + dx * dx <= 1
                if inside:
                    top[y][x] = i
    return np.array(top)


def test_null_case():
    p = generate_pair(SynthConfig(objects=(0, 0)), np.random.default_rng(0))
    assert np.array_equal(p.img_a, p.img_b)
    assert p.mask.sum() == 0


def test_gain_bias_linearity():
    base = SynthConfig(objects=(2, 2))
    shifted = SynthConfig(objects=(2, 2), gain=(1.15, 1.15), bias=(6.0, 6.0))
    for seed in range(5):
        pre = generate_pair(base, np.random.default_rng(seed)).img_b.astype(float)
        post = generate_pair(shifted, np.random.default_rng(seed)).img_b.astype(float)
        expect = np.clip(1.15 * pre + 6.0, 0, 255).mean()
        assert abs(post.mean() - expect) <= 0.5


def test_deterministic():
    cfg = SynthConfig(count=3, noise_sigma=4.0, gain=(0.8, 1.2), season=(-10, 10))
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    for p, q in zip(a, b):
        assert p.img_a.tobytes() == q.img_a.tobytes()
        assert p.img_b.tobytes() == q.img_b.tobytes()
        assert p.mask.tobytes() == q.mask.tobytes()
        assert p.shift_meta == q.shift_meta


@pytest.mark.parametrize("seed", range(6))
def test_mask_matches_geometry_oracle(seed):
    cfg = SynthConfig(image_size=32, object_size=(4, 14), objects=(1, 5))
    p = generate_pair(cfg, np.random.default_rng(seed))
    expect = rasterize_loop(p.shapes, "A", 32) != rasterize_loop(p.shapes, "B", 32)
    np.testing.assert_array_equal(p.mask, expect.astype(np.uint8))
    assert p.mask.shape == p.img_a.shape[:2] == p.img_b.shape[:2]


def test_first_object_always_changes():
    for seed in range(10):
        p = generate_pair(SynthConfig(change_prob=0.0), np.random.default_rng(seed))
        assert p.shapes[0].present in ("A", "B")
        assert all(s.present == "AB" for s in p.shapes[1:])


def test_shift_never_alters_mask():
    plain = SynthConfig(count=4)
    harsh = SynthConfig(count=4, gain=(0.5, 1.8), bias=(-40, 40), season=(-30, 30), noise_sigma=12.0)
    for p, q in zip(generate_dataset(plain), generate_dataset(harsh)):
        np.testing.assert_array_equal(p.mask, q.mask)
        np.testing.assert_array_equal(p.img_a, q.img_a)


def test_apply_shift_saturates(rng):
    img = np.full((2, 2, 3), 200, np.uint8)
    out = apply_shift(img, 2.0, 0.0, [0, 0, 0], 0.0, rng)
    assert out.dtype == np.uint8 and (out == 255).all()


@pytest.mark.parametrize("kwargs", [dict(image_size=8), dict(gain=(1.2, 1.0)), dict(objects=(3, 1)),
                                    dict(object_size=(4, 100))])
def test_invalid_config(kwargs):
    with pytest.raises(ValidationError):
        SynthConfig(**kwargs)


def test_unknown_synth_key():
    with pytest.raises(ValidationError):
        SynthConfig.from_dict({"colour": 1})


def test_normalisation_constant():
    img = np.zeros((1, 1, 3), np.uint8)
    img[0, 0, 1] = 128
    assert normalize(img)[1, 0, 0] == pytest.approx((128 - 116.28) / 57.12, abs=1e-12)
    assert normalize(img)[1, 0, 0] == pytest.approx(0.2052, abs=1e-4)


def test_round_trip(tmp_path):
    pairs = generate_dataset(SynthConfig(count=3, noise_sigma=3.0, seed=4))
    write_dataset(pairs, tmp_path)
    ds = read_dataset(tmp_path)
    assert ds.ids == ["00000", "00001", "00002"]
    for i, p in enumerate(pairs):
        assert ds.raw_a[i].tobytes() == p.img_a.tobytes()
        assert ds.raw_b[i].tobytes() == p.img_b.tobytes()
        np.testing.assert_array_equal(ds.labels[i], p.mask)
    assert ds.meta[1] == json.loads(json.dumps(pairs[1].shift_meta))
    assert ds.images_a.shape == (3, 3, 64, 64)


def test_label_values(tmp_path):
    pairs = generate_dataset(SynthConfig(count=1))
    write_dataset(pairs, tmp_path)
    on_disk = np.asarray(Image.open(tmp_path / "label" / "00000.png"))
    assert set(np.unique(on_disk)) <= {0, 255}
    np.testing.assert_array_equal(read_dataset(tmp_path).labels[0], (on_disk == 255).astype(np.uint8))


def test_missing_counterpart(tmp_path):
    write_dataset(generate_dataset(SynthConfig(count=2)), tmp_path)
    (tmp_path / "B" / "00001.png").unlink()
    with pytest.raises(IntegrityError, match="00001"):
        read_dataset(tmp_path)


def test_non_binary_label(tmp_path):
    write_dataset(generate_dataset(SynthConfig(count=1)), tmp_path)
    Image.fromarray(np.full((64, 64), 7, np.uint8), "L").save(tmp_path / "label" / "00000.png")
    with pytest.raises(IntegrityError):
        read_dataset(tmp_path)


def test_sorted_order(tmp_path):
    pairs = generate_dataset(SynthConfig(count=3))
    write_dataset(pairs, tmp_path, ids=["zeta", "alpha", "mid"])
    ds = read_dataset(tmp_path)
    assert ds.ids == ["alpha", "mid", "zeta"]
    assert ds.raw_a[0].tobytes() == pairs[1].img_a.tobytes()


def test_subset():
    ds = Dataset.from_pairs(generate_dataset(SynthConfig(count=4)))
    sub = ds.subset([3, 1])
    assert sub.ids == ["00003", "00001"] and len(sub) == 2
