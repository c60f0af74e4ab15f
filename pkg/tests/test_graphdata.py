import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcc import graphdata as gd
from rcc.graphdata import AdjacencyStructure, AttributedGraph, GridImage

from conftest import random_graph


def check_adjacency(adj):
    n = adj.n
    for i in range(n):
        nb = adj.neighbors(i).tolist()
        assert nb == sorted(set(nb))
        assert i not in nb
        for j in nb:
            assert 0 <= j < n
            assert i in adj.neighbors(j).tolist()
    assert adj.degrees.sum() == 2 * adj.num_edges


edge_lists = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
             .filter(lambda e: e[0] != e[1]), max_size=40)))


@given(edge_lists)
def test_from_edges_invariants(case):
    n, edges = case
    adj = AdjacencyStructure.from_edges(n, edges)
    check_adjacency(adj)
    assert adj.num_edges == len({tuple(sorted(e)) for e in edges})


def test_adjacency_rejects_bad_input():
    with pytest.raises(ValueError):
        AdjacencyStructure.from_edges(3, [(0, 0)])
    with pytest.raises(ValueError):
        AdjacencyStructure.from_edges(3, [(0, 3)])
    with pytest.raises(ValueError, match="symmetric"):
        AdjacencyStructure([0, 1, 1], [1])


# ---------------------------------------------------------------- citation files

def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_three_nodes_no_cites(tmp_path):
    content = write(tmp_path / "a.content", "p1\t0\t1\tA\np2\t1\t1\tB\np3\t0\t0\tA\n")
    cites = write(tmp_path / "a.cites", "")
    g = gd.load_citation_dataset(content, cites)
    assert g.n == 3 and g.adjacency.num_edges == 0
    assert g.adjacency.degrees.tolist() == [0, 0, 0]
    assert g.label_names == ["A", "B"]
    assert g.labels.tolist() == [0, 1, 0]
    assert g.num_classes == 2


def test_load_symmetrizes_and_drops_unknown(tmp_path, caplog):
    content = write(tmp_path / "a.content",
                    "x\t1\tC1\ny\t0\tC2\nz\t1\tC3\n")
    cites = write(tmp_path / "a.cites", "x\ty\ny\tx\nz\tghost\nx\tx\ny\tz\n")
    g = gd.load_citation_dataset(content, cites)
    check_adjacency(g.adjacency)
    assert g.adjacency.edges().tolist() == [[0, 1], [1, 2]]
    assert g.meta["dropped_edges"] == 1
    assert g.meta["self_citations"] == 1
    assert "unknown node ids" in caplog.text


def test_load_reports_line_number(tmp_path):
    content = write(tmp_path / "a.content", "x\t1\tA\ny\tnotanumber\tB\n")
    cites = write(tmp_path / "a.cites", "")
    with pytest.raises(gd.DatasetFormatError, match=":2:"):
        gd.load_citation_dataset(content, cites)
    write(tmp_path / "b.cites", "x y z\n")
    write(tmp_path / "b.content", "x\t1\tA\n")
    with pytest.raises(gd.DatasetFormatError, match=":1:"):
        gd.load_citation_dataset(tmp_path / "b.content", tmp_path / "b.cites")


def test_load_warns_on_nonbinary(tmp_path):
    content = write(tmp_path / "a.content", "x\t0.5\tA\ny\t1\tB\n")
    cites = write(tmp_path / "a.cites", "")
    with pytest.warns(UserWarning, match="outside"):
        g = gd.load_citation_dataset(content, cites)
    assert g.features[0, 0] == 0.5


def test_citation_round_trip(tmp_path):
    g = random_graph(15, 4, 3, seed=2)
    gd.write_citation_dataset(g, tmp_path / "g.content", tmp_path / "g.cites")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        back = gd.load_citation_dataset(tmp_path / "g.content", tmp_path / "g.cites")
    assert back.adjacency == g.adjacency
    np.testing.assert_array_equal(back.features, g.features)
    # label indices follow first appearance, so compare the partition
    assert len(set(zip(back.labels.tolist(), g.labels.tolist()))) == len(set(g.labels.tolist()))


# ---------------------------------------------------------------- synthetic graphs

def test_synthetic_homophily_one():
    g = gd.generate_synthetic_homophily_graph(200, 3, 5, 1.0, 0.5, 4.0, seed=1)
    e = g.adjacency.edges()
    assert np.all(g.labels[e[:, 0]] == g.labels[e[:, 1]])
    assert g.adjacency.num_edges == 400
    check_adjacency(g.adjacency)


def test_synthetic_homophily_zero_crosses():
    g = gd.generate_synthetic_homophily_graph(100, 3, 5, 0.0, 0.5, 4.0, seed=1)
    e = g.adjacency.edges()
    assert np.all(g.labels[e[:, 0]] != g.labels[e[:, 1]])


def test_synthetic_seeded_identical():
    a = gd.generate_synthetic_homophily_graph(200, 3, 6, 0.9, 0.5, 4.0, seed=7)
    b = gd.generate_synthetic_homophily_graph(200, 3, 6, 0.9, 0.5, 4.0, seed=7)
    assert a.adjacency == b.adjacency
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    c = gd.generate_synthetic_homophily_graph(200, 3, 6, 0.9, 0.5, 4.0, seed=8)
    assert c.features.tobytes() != a.features.tobytes()


def histogram_mutual_information(x, y, bins=8):
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    xb = np.searchsorted(edges, x)
    joint = np.zeros((bins, y.max() + 1))
    np.add.at(joint, (xb, y), 1)
    joint /= joint.sum()
    px = joint.sum(1, keepdims=True)
    py = joint.sum(0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))


def test_synthetic_signal_zero_uninformative():
    g = gd.generate_synthetic_homophily_graph(4000, 3, 5, 0.9, 0.0, 2.0, seed=3)
    # plug-in MI bias is about (bins-1)(k-1)/(2n) = 0.0018 nats
    for c in range(g.d):
        assert histogram_mutual_information(g.features[:, c], g.labels) < 0.01
    g1 = gd.generate_synthetic_homophily_graph(4000, 3, 5, 0.9, 1.0, 2.0, seed=3)
    assert histogram_mutual_information(g1.features[:, 0], g1.labels) > 0.3


def test_synthetic_rejects_dense_request():
    with pytest.raises(ValueError, match="avg_degree"):
        gd.generate_synthetic_homophily_graph(10, 2, 3, 0.5, 0.5, 20.0, seed=0)
    with pytest.raises(ValueError):
        gd.generate_synthetic_homophily_graph(2, 3, 3, 0.5, 0.5, 1.0, seed=0)


# ---------------------------------------------------------------- images

def flat_image(h, w, value=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return GridImage(np.full((h, w, 3), value), rng.integers(0, 2, (h, w)))


def brute_force_grid_edges(h, w):
    count = 0
    cells = [(r, c) for r in range(h) for c in range(w)]
    for a in range(len(cells)):
        for b in range(a + 1, len(cells)):
            (r1, c1), (r2, c2) = cells[a], cells[b]
            if abs(r1 - r2) + abs(c1 - c2) == 1:
                count += 1
    return count


def test_grid_graph_small_cases():
    g1 = gd.build_grid_graph(flat_image(1, 1))
    assert g1.n == 1 and g1.adjacency.num_edges == 0
    g2 = gd.build_grid_graph(flat_image(2, 2))
    assert g2.n == 4 and g2.adjacency.num_edges == 4
    assert g2.d == 64 and g2.num_classes == 2


@pytest.mark.parametrize("h", range(1, 6))
@pytest.mark.parametrize("w", range(1, 6))
def test_grid_edge_count_formula(h, w):
    g = gd.build_grid_graph(flat_image(h, w))
    expected = brute_force_grid_edges(h, w)
    assert g.adjacency.num_edges == expected == 2 * h * w - h - w
    check_adjacency(g.adjacency)


def test_grid_graph_features_and_labels():
    img = flat_image(3, 4, seed=5)
    g = gd.build_grid_graph(img)
    np.testing.assert_array_equal(g.labels, img.mask.ravel())
    # pixel (1, 2) -> node 6, base = (0.5, 0.5, 0.5, 1/3, 2/4)
    np.testing.assert_allclose(g.features[6],
                               gd.sinusoidal_expand([0.5, 0.5, 0.5, 1 / 3, 0.5]))


def test_sinusoidal_zero_vector():
    out = gd.sinusoidal_expand(np.zeros(5))
    assert out.shape == (64,)
    np.testing.assert_array_equal(out[0::2], 0.0)
    np.testing.assert_array_equal(out[1::2], 1.0)


def test_sinusoidal_c_zero_entry():
    out = gd.sinusoidal_expand([0.3, -2.0, 5.0, 0.1, 9.0])
    assert out[0] == 0.0 and out[1] == 1.0


def test_sinusoidal_single_bit():
    out = gd.sinusoidal_expand([1.0, 0, 0, 0, 0])
    # c = 10000 is integer 16 -> entries 32 (sin) and 33 (cos)
    assert out[32] == pytest.approx(0.84147, abs=1e-5)
    assert out[33] == pytest.approx(0.54030, abs=1e-5)
    s = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    out = gd.sinusoidal_expand(s)
    assert out[2 * 0b10101] == pytest.approx(math.sin(0.2 + 0.6 + 1.0))
    assert out[2 * 0b01100 + 1] == pytest.approx(math.cos(0.4 + 0.6))


def test_salt_pepper_identity_and_full():
    img = flat_image(10, 12, seed=1)
    assert gd.salt_pepper_noise(img, 0.0, seed=3) == img
    full = gd.salt_pepper_noise(img, 1.0, seed=3)
    px = full.pixels.reshape(-1, 3)
    assert np.all(np.all(px == 0.0, axis=1) | np.all(px == 1.0, axis=1))
    np.testing.assert_array_equal(full.mask, img.mask)


def test_salt_pepper_count_statistics():
    # Pooled over 20 seeds the count is Binomial(2e5, 0.2); each seed alone
    # gets a 4σ band since a 20-way family of 3σ checks fails about 5% of the time.
    img = flat_image(100, 100)
    sigma = math.sqrt(1e4 * 0.2 * 0.8)
    counts = []
    for seed in range(20):
        noisy = gd.salt_pepper_noise(img, 0.2, seed)
        counts.append(int(np.sum(np.any(noisy.pixels != 0.5, axis=2))))
    assert all(abs(c - 2000) <= 4 * sigma for c in counts)
    assert abs(sum(counts) - 40000) <= 3 * sigma * math.sqrt(20)


def test_grid_image_validation():
    with pytest.raises(ValueError):
        GridImage(np.full((2, 2, 3), 1.5), np.zeros((2, 2), int))
    with pytest.raises(ValueError):
        GridImage(np.zeros((2, 2, 3)), np.full((2, 2), 2))


def test_ppm_pbm_round_trip(tmp_path):
    img = gd.generate_synthetic_image(7, 9, seed=4)
    gd.write_ppm(tmp_path / "a.ppm", img.pixels)
    gd.write_pbm(tmp_path / "a.pbm", img.mask)
    back = gd.load_image(tmp_path / "a.ppm", tmp_path / "a.pbm")
    np.testing.assert_array_equal(back.mask, img.mask)
    np.testing.assert_allclose(back.pixels, img.pixels, atol=0.5 / 255)
    (tmp_path / "bad.ppm").write_text("P6\n1 1\n255\n0 0 0\n")
    with pytest.raises(gd.DatasetFormatError):
        gd.read_ppm(tmp_path / "bad.ppm")


def test_load_image_dir(tmp_path):
    for s in range(3):
        img = gd.generate_synthetic_image(5, 5, seed=s)
        gd.write_ppm(tmp_path / f"im{s}.ppm", img.pixels)
        gd.write_pbm(tmp_path / f"im{s}.pbm", img.mask)
    imgs = gd.load_image_dir(tmp_path)
    assert [im.name for im in imgs] == ["im0", "im1", "im2"]


# ---------------------------------------------------------------- splits & noise

def test_snowball_path_graph(path5):
    train, test = gd.snowball_split(path5, 2 / 5, seed=0, start=0)
    assert test.node_ids.tolist() == [0, 1]
    assert train.node_ids.tolist() == [2, 3, 4]
    assert train.adjacency.edges().tolist() == [[0, 1], [1, 2]]
    assert test.adjacency.edges().tolist() == [[0, 1]]
    assert train.labels.tolist() == [1, 1, 1]


def test_snowball_sizes_and_determinism():
    g = gd.generate_synthetic_homophily_graph(100, 3, 3, 0.8, 0.5, 4.0, seed=0)
    train, test = gd.snowball_split(g, 1 / 5, seed=9)
    assert (train.n, test.n) == (80, 20)
    again = gd.snowball_split(g, 1 / 5, seed=9)
    assert again[1].node_ids.tolist() == test.node_ids.tolist()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.floats(0.0, 0.6), st.floats(0.05, 0.95), st.integers(0, 99))
def test_snowball_partition(n, p, frac, seed):
    g = random_graph(n, 2, 2, p=p, seed=seed)
    train, test = gd.snowball_split(g, frac, seed)
    a, b = set(train.node_ids.tolist()), set(test.node_ids.tolist())
    assert a | b == set(range(n)) and not a & b
    assert test.n == math.ceil(n * frac - 1e-9)
    for part in (train, test):
        ids = part.node_ids
        for u, v in part.adjacency.edges():
            assert g.adjacency.has_edge(ids[u], ids[v])
        # induced: every original edge inside the part survives
        inside = set(ids.tolist())
        expected = sum(1 for u, v in g.adjacency.edges() if u in inside and v in inside)
        assert part.adjacency.num_edges == expected


def test_snowball_restarts_on_disconnected():
    adj = AdjacencyStructure.from_edges(6, [(0, 1), (2, 3), (4, 5)])
    g = AttributedGraph(adj, np.zeros((6, 1)), [0, 1, 0, 1, 0, 1], 2)
    train, test = gd.snowball_split(g, 0.99, seed=1)
    assert test.n == 6 and train.n == 0


def test_delete_feature_columns():
    g = random_graph(12, 10, 3, seed=4)
    same = gd.delete_feature_columns(g, 0.0, seed=1)
    np.testing.assert_array_equal(same.features, g.features)
    half = gd.delete_feature_columns(g, 0.5, seed=1)
    assert half.d == 5
    again = gd.delete_feature_columns(g, 0.5, seed=1)
    np.testing.assert_array_equal(half.features, again.features)
    assert half.adjacency == g.adjacency and half.labels.tolist() == g.labels.tolist()
    # retained columns are a subset in original order
    kept = [c for c in range(10) if any(np.array_equal(g.features[:, c], half.features[:, j])
                                        for j in range(5))]
    np.testing.assert_array_equal(g.features[:, kept], half.features)
    with pytest.raises(ValueError):
        gd.delete_feature_columns(random_graph(3, 1, 2), 1.0, seed=0)
