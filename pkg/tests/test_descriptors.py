import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomout.descriptors import (
    COLOR_DIM, HANDCRAFTED_DIM, LOCATION_DIM, SIFT_DIM, TEXTON_DIM, Codebook, FeatureLayout,
    Region, assemble_rows, assemble_zoomout, color_histograms, dense_sift, entropy,
    handcrafted_descriptor, kmeans, location_features, read_codebook, read_feature_store,
    region_counts, sift_bow_features, texton_features, train_sift_codebook,
    train_texton_codebook, write_codebook, write_feature_store,
)
from zoomout.descriptors.assemble import KEY_DTYPE, image_key
from zoomout.descriptors.codebook import train_codebook
from zoomout.descriptors.texton import N_FILTERS, filter_responses, sample_responses, texton_from_counts
from zoomout.errors import FormatError, LayoutError
from zoomout.superpixel import SlicParams, build_adjacency, compute_zoom_regions, slic_oversegment


def const_lab(h, w, value=(50.0, 10.0, -20.0)):
    return np.broadcast_to(np.asarray(value, dtype=np.float64), (h, w, 3)).copy()


def box(y0, x0, y1, x1):
    return Region(box=(y0, x0, y1, x1))


# ------------------------------------------------------------------ regions

def test_region_is_mask_or_box():
    with pytest.raises(ValueError):
        Region()
    with pytest.raises(ValueError):
        Region(mask=np.ones((2, 2), bool), box=(0, 0, 1, 1))


def test_empty_or_outside_region():
    with pytest.raises(ValueError):
        Region(mask=np.zeros((3, 3), bool)).to_mask((3, 3))
    with pytest.raises(ValueError):
        box(0, 0, 4, 1).to_mask((3, 3))
    with pytest.raises(ValueError):
        box(1, 1, 1, 2).to_mask((3, 3))


# ------------------------------------------------------------------ entropy

def test_entropy_examples():
    assert entropy(np.full(32, 1 / 32)) == pytest.approx(5.0)
    assert entropy(np.eye(8)[3]) == 0.0
    assert entropy([0.5, 0.5] + [0] * 30) == pytest.approx(1.0)


def test_entropy_rejects_bad_histograms():
    with pytest.raises(ValueError):
        entropy([1.5, -0.5])
    with pytest.raises(ValueError):
        entropy([0.3, 0.3])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=64).filter(lambda v: sum(v) > 1e-3))
def test_entropy_bounds(values):
    p = np.asarray(values) / np.sum(values)
    p = p / p.sum()
    h = entropy(p)
    assert -1e-12 <= h <= np.log2(len(p)) + 1e-9


# -------------------------------------------------------------------- color

def test_color_dimension():
    assert COLOR_DIM == 3 * (32 + 8) + 3 + 3 * (32 + 8) == 243


def test_constant_region_color():
    v = color_histograms(const_lab(6, 6), box(1, 1, 4, 5))
    assert v.shape == (243,)
    fixed = np.split(v[:120], np.cumsum([32, 8, 32, 8, 32])[:5])
    for h in fixed:
        assert sorted(h.tolist())[-1] == 1.0 and h.sum() == 1.0
    assert v[120:123].tolist() == [0.0, 0.0, 0.0]
    adaptive = np.split(v[123:], np.cumsum([32, 8, 32, 8, 32])[:5])
    for h in adaptive:
        assert h.max() == 1.0 and h.sum() == 1.0


def test_hand_binned_lightness():
    lab = const_lab(2, 2, (0.0, 0.0, 0.0))
    lab[..., 0] = [[0, 25], [50, 100]]
    v = color_histograms(lab, box(0, 0, 2, 2))
    np.testing.assert_allclose(v[32:40], [.25, 0, .25, 0, .25, 0, 0, .25])


def test_adaptive_bins_are_equal_mass(rng):
    lab = rng.uniform([0, -50, -50], [100, 50, 50], (32, 32, 3))
    v = color_histograms(lab, box(0, 0, 32, 32))
    L32 = v[123:155]
    np.testing.assert_allclose(L32, 1 / 32, atol=1e-3)


def test_fixed_histograms_match_numpy(rng):
    lab = rng.uniform([0, -128, -128], [100, 127, 127], (20, 20, 3))
    mask = rng.random((20, 20)) < 0.4
    v = color_histograms(lab, Region(mask=mask))
    ranges = ((0, 100), (-128, 127), (-128, 127))
    parts = []
    for c, (lo, hi) in enumerate(ranges):
        for nb in (32, 8):
            h, _ = np.histogram(lab[..., c][mask], bins=nb, range=(lo, hi))
            parts.append(h / h.sum())
    np.testing.assert_allclose(v[:120], np.concatenate(parts), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 15), st.integers(1, 15))
def test_color_histograms_normalized(seed, h, w):
    r = np.random.default_rng(seed)
    lab = r.uniform([0, -128, -128], [100, 127, 127], (h, w, 3))
    mask = r.random((h, w)) < 0.5
    mask.flat[r.integers(h * w)] = True
    v = color_histograms(lab, Region(mask=mask))
    assert np.isfinite(v).all() and (v >= 0).all()
    hists = np.split(np.concatenate([v[:120], v[123:]]), np.cumsum([32, 8] * 6)[:-1])
    for hist in hists:
        assert hist.sum() == pytest.approx(1.0)


# ------------------------------------------------------------------ textons

def test_filter_bank_shape(labs64):
    assert filter_responses(labs64[0]).shape == (64, 64, N_FILTERS)


def test_texton_k1_is_mean(labs64):
    cb = train_texton_codebook(labs64[:1], k=1, per_image=300)
    resp = sample_responses(labs64[:1], 300, seed=0)
    np.testing.assert_allclose(cb.centroids[0], resp.mean(0), rtol=1e-5, atol=1e-4)


def test_texton_two_textures():
    yy, xx = np.indices((40, 40))
    stripes = const_lab(40, 40, (30, 0, 0))
    stripes[..., 0] += 40 * ((xx // 2) % 2)
    flat = const_lab(40, 40, (80, 20, 20))
    cb = train_texton_codebook([stripes, flat], k=2, per_image=400)
    means = [filter_responses(im)[8:-8, 8:-8].reshape(-1, N_FILTERS).mean(0) for im in (stripes, flat)]
    # brute force: each centroid sits close to one texture's mean response
    d = np.linalg.norm(cb.centroids[:, None, :] - np.asarray(means)[None], axis=2)
    assert sorted(d.argmin(1).tolist()) == [0, 1]
    assert d.min(1).max() < 0.25 * np.linalg.norm(means[0] - means[1])


def test_texton_default_k():
    from zoomout.descriptors.texton import TEXTON_K
    assert TEXTON_K == 64 and TEXTON_DIM == 65


def test_texton_too_few_samples():
    with pytest.raises(ValueError):
        train_texton_codebook([const_lab(5, 5)], k=64, per_image=100)
    with pytest.raises(ValueError):
        train_codebook(np.zeros((10, 3)), 0, "texton")


def test_texton_constant_image(full_codebooks):
    v = texton_features(const_lab(30, 30), box(0, 0, 30, 30), full_codebooks[0])
    assert v.shape == (65,)
    assert v[:64].max() == 1.0 and v[64] == 0.0


def test_texton_uniform_assignment_entropy():
    v = texton_from_counts(np.full((1, 64), 7))[0]
    assert v[64] == pytest.approx(6.0)


def test_texton_requires_texton_codebook(full_codebooks):
    with pytest.raises(ValueError):
        texton_features(const_lab(20, 20), box(0, 0, 5, 5), full_codebooks[1])


# --------------------------------------------------------------------- SIFT

def test_sift_constant_image_is_zero():
    d = dense_sift(const_lab(40, 40))
    assert (d.descriptors == 0).all()


def test_sift_grid():
    d = dense_sift(np.random.default_rng(0).uniform(0, 100, (64, 64, 3)))
    assert d.descriptors.shape == (64, 3, 2, 128)
    ys, xs = np.unique(d.positions[:, 0]), np.unique(d.positions[:, 1])
    assert (np.diff(ys) == 8).all() and (np.diff(xs) == 8).all() and len(ys) == len(xs) == 8


def test_sift_normalization(labs64):
    d = dense_sift(labs64[0]).descriptors.reshape(-1, 128).astype(np.float64)
    norms = np.linalg.norm(d, axis=1)
    nz = norms > 0
    np.testing.assert_allclose(norms[nz], 1.0, atol=1e-5)
    assert (d >= 0).all()


def test_sift_clamp_and_renormalize():
    from zoomout.descriptors.sift import _normalize
    raw = np.zeros((2, 128))
    raw[0, :2] = (3, 4)
    raw[1, :10] = np.arange(1, 11)
    out = _normalize(raw)
    np.testing.assert_allclose(out[0, :2], [2 ** -0.5] * 2)
    unit = raw[1] / np.linalg.norm(raw[1])
    expect = np.minimum(unit, 0.2)
    np.testing.assert_allclose(out[1], expect / np.linalg.norm(expect))
    assert (_normalize(np.zeros((1, 128))) == 0).all()


def test_sift_needs_room_for_patch():
    with pytest.raises(ValueError):
        dense_sift(const_lab(17, 40))


def test_sift_codebook_k1_and_duplicates(rng):
    desc = rng.random((50, 128)).astype(np.float32)
    cb = train_sift_codebook(desc, k=1)
    np.testing.assert_allclose(cb.centroids[0], desc.mean(0), rtol=1e-5)
    same = np.repeat(desc[:1], 80, axis=0)
    cb = train_sift_codebook(same, k=5)
    assert np.allclose(cb.centroids, desc[0])
    from zoomout.descriptors.sift import SIFT_K
    assert SIFT_K == 500 and SIFT_DIM == 1506


def test_bow_one_sample_region(labs64, full_codebooks):
    d = dense_sift(labs64[1])
    y, x = d.positions[10]
    v = sift_bow_features(d, full_codebooks[1], box(y, x, y + 1, x + 1))
    assert v.shape == (1506,)
    for c in range(3):
        ch = v[500 * c:500 * (c + 1)]
        assert ch.sum() == pytest.approx(1.0) and ch.max() >= 0.5
    assert (v[1500:] == 0).all()


def test_bow_empty_region(labs64, full_codebooks):
    d = dense_sift(labs64[1])
    v = sift_bow_features(d, full_codebooks[1], box(0, 0, 2, 2))
    assert v.shape == (1506,) and (v == 0).all()


# ----------------------------------------------------------------- location

def test_location_examples():
    assert location_features((50, 25), (100, 50)).tolist() == [0, 0, 0, 0]
    assert location_features((0, 0), (100, 50)).tolist() == [-1, -1, 1, 1]
    assert LOCATION_DIM == 4


# -------------------------------------------------------------- handcrafted

def test_handcrafted_dimension(labs64, full_codebooks):
    assert HANDCRAFTED_DIM == 243 + 65 + 1506 + 4 == 1818
    d = dense_sift(labs64[0])
    v = handcrafted_descriptor(labs64[0], box(5, 5, 30, 40), *full_codebooks, d)
    assert v.shape == (1818,)


def test_constant_image_regions_differ_only_in_location(full_codebooks):
    lab = const_lab(40, 40)
    d = dense_sift(lab)
    a = handcrafted_descriptor(lab, box(0, 0, 20, 20), *full_codebooks, d)
    b = handcrafted_descriptor(lab, box(20, 20, 40, 40), *full_codebooks, d)
    assert np.array_equal(a[:-4], b[:-4])
    assert not np.array_equal(a[-4:], b[-4:])


def test_handcrafted_is_concatenation(labs64, full_codebooks):
    lab = labs64[2]
    tcb, scb = full_codebooks
    d = dense_sift(lab)
    mask = np.zeros((64, 64), bool)
    mask[10:30, 20:50] = True
    mask[40:44, 5:9] = True
    region = Region(mask=mask)
    ys, xs = np.nonzero(mask)
    expect = np.concatenate([
        color_histograms(lab, region),
        texton_features(lab, region, tcb),
        sift_bow_features(d, scb, region),
        location_features((xs.mean() + 0.5, ys.mean() + 0.5), (64, 64)),
    ])
    np.testing.assert_allclose(handcrafted_descriptor(lab, region, tcb, scb, d), expect,
                               rtol=1e-12, atol=1e-12)


def test_union_statistics_match_direct_extraction(labs64, full_codebooks):
    lab = labs64[3]
    sp = slic_oversegment(lab, SlicParams(30))
    z = compute_zoom_regions(sp, build_adjacency(sp))
    d = dense_sift(lab)
    counts = region_counts(lab, sp.labels, sp.count, *full_codebooks, d)
    local = counts.descriptors((64, 64))
    prox = counts.combine(z.proximal).descriptors((64, 64))
    for s in (0, sp.count // 2, sp.count - 1):
        direct = handcrafted_descriptor(lab, Region(mask=sp.labels == s), *full_codebooks, d)
        np.testing.assert_allclose(local[s], direct, atol=1e-12)
        direct = handcrafted_descriptor(lab, Region(mask=z.proximal_mask(sp.labels, s)),
                                        *full_codebooks, d)
        np.testing.assert_allclose(prox[s], direct, atol=1e-12)


def test_single_pixel_region_is_finite(labs64, full_codebooks):
    d = dense_sift(labs64[0])
    for y, x in [(0, 0), (63, 63), (31, 17)]:
        v = handcrafted_descriptor(labs64[0], box(y, x, y + 1, x + 1), *full_codebooks, d)
        assert np.isfinite(v).all()


def test_extractors_are_deterministic(labs64, full_codebooks):
    lab = labs64[0]
    a = handcrafted_descriptor(lab, box(3, 3, 40, 50), *full_codebooks, dense_sift(lab))
    b = handcrafted_descriptor(lab.copy(), box(3, 3, 40, 50), *full_codebooks, dense_sift(lab))
    assert a.tobytes() == b.tobytes()


# ----------------------------------------------------------------- assembly

def test_assembled_offsets():
    d, dg = 64, 32
    fv = assemble_zoomout(np.zeros(1841), np.zeros(1818), np.zeros(d), np.ones(dg))
    assert fv.values.shape == (3659 + d + dg,)
    assert fv.offsets == (0, 1841, 3659, 3659 + d)
    assert (fv.block("global") == 1).all()


def test_empty_global_block():
    fv = assemble_zoomout(np.zeros(5), np.zeros(3), np.zeros(2), np.zeros(0))
    assert fv.layout.names == ("local", "proximal", "distant")
    assert fv.values.shape == (10,)


def test_declared_layout_enforced():
    layout = FeatureLayout(("local", "proximal"), (4, 3))
    assemble_zoomout(np.zeros(4), np.zeros(3), [], [], layout)
    with pytest.raises(LayoutError):
        assemble_zoomout(np.zeros(5), np.zeros(3), [], [], layout)


def test_rows_share_global_block():
    g = np.tile(np.arange(6.0), (4, 1))
    rows, layout = assemble_rows({"local": np.random.default_rng(0).random((4, 3)), "global": g})
    assert layout.names == ("local", "global")
    assert (rows[:, layout.columns(["global"])] == rows[0, 3:]).all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=4, max_size=4))
def test_layout_offsets_property(dims):
    blocks = {lv: np.zeros((2, d)) for lv, d in zip(("local", "proximal", "distant", "global"), dims)}
    rows, layout = assemble_rows(blocks)
    assert rows.shape == (2, sum(dims))
    offs = layout.offsets
    assert all(a < b for a, b in zip(offs, offs[1:]))
    assert offs[-1] + layout.dims[-1] == sum(dims) if layout.dims else sum(dims) == 0


# -------------------------------------------------------------- codebooks

def test_kmeans_objective_non_increasing(rng):
    X = np.concatenate([rng.normal(c, 1, (200, 4)) for c in (0, 5, 10)])
    _, hist = kmeans(X, 6, seed=1)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_kmeans_deterministic(rng):
    X = rng.random((300, 5))
    a, _ = kmeans(X, 7, seed=4)
    b, _ = kmeans(X, 7, seed=4)
    assert a.tobytes() == b.tobytes()


def test_codebook_file_round_trip(tmp_path, full_codebooks):
    for cb in full_codebooks:
        p = tmp_path / f"{cb.kind}.zocb"
        write_codebook(str(p), cb)
        raw = p.read_bytes()
        assert raw[:4] == b"ZOCB" and len(raw) == 17 + 4 * cb.k * cb.dim
        back = read_codebook(str(p))
        assert back.kind == cb.kind and back.centroids.tobytes() == cb.centroids.tobytes()
        write_codebook(str(tmp_path / "again"), back)
        assert (tmp_path / "again").read_bytes() == raw


def test_codebook_file_errors(tmp_path):
    p = tmp_path / "bad.zocb"
    p.write_bytes(b"ZOCB" + bytes(3))
    with pytest.raises(FormatError):
        read_codebook(str(p))
    cb = Codebook("texton", np.ones((2, 3)))
    write_codebook(str(p), cb)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_codebook(str(p))
    with pytest.raises(ValueError):
        Codebook("words", np.ones((2, 3)))


# ------------------------------------------------------------ feature store

def test_feature_store_round_trip(tmp_path, rng):
    rows = rng.standard_normal((7, 11)).astype(np.float32)
    keys = np.zeros(7, dtype=KEY_DTYPE)
    keys["image"] = image_key("img")
    keys["superpixel"] = np.arange(7)
    keys["row"] = np.arange(7)
    p = tmp_path / "f.zoft"
    write_feature_store(str(p), rows, (0, 4, 9), keys)
    raw = p.read_bytes()
    assert raw[:4] == b"ZOFT"
    back, offsets, back_keys = read_feature_store(str(p))
    assert offsets == (0, 4, 9)
    assert back.tobytes() == rows.tobytes()
    assert back_keys.tobytes() == keys.tobytes()
    write_feature_store(str(tmp_path / "g.zoft"), back, offsets, back_keys)
    assert (tmp_path / "g.zoft").read_bytes() == raw


def test_feature_store_errors(tmp_path):
    p = tmp_path / "f.zoft"
    write_feature_store(str(p), np.zeros((2, 3)), (0, 2))
    data = p.read_bytes()
    p.write_bytes(data[:30])
    with pytest.raises(FormatError):
        read_feature_store(str(p))
    p.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        read_feature_store(str(p))
    write_feature_store(str(p), np.zeros((2, 3)), (0, 5))
    with pytest.raises(FormatError):
        read_feature_store(str(p))


def test_image_key_is_stable():
    assert image_key("2007_000032") == image_key("2007_000032")
    assert image_key("a") != image_key("b")
    assert 0 <= image_key("x") < 2 ** 64
