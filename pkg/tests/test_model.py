import itertools
import math

import mpmath
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from sptopo.data import make_rng
from sptopo.errors import ContractError, DataError, DimensionError
from sptopo.model import (
    ModelConfig,
    attention_fusion,
    co_view_forward,
    consistency_loss,
    epe_forward,
    gcn_layer,
    init_params,
    load_params,
    nb_logpmf,
    neighbor_pairs,
    normalized_adjacency,
    sample_negatives,
    save_params,
    scdom_loss,
    total_loss,
    zinb_heads,
    zinb_logpmf,
    zinb_nll,
)
from sptopo.numkit import autodiff as ad
from sptopo.numkit import grad_check
from sptopo.numkit.autodiff import Var


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


# graph convolution

def test_gcn_single_node_and_zero_weight():
    out = gcn_layer(np.array([[1.0, 2.0]]), np.zeros((1, 1)), np.eye(2)).value
    assert out.tolist() == [[1.0, 2.0]]
    assert np.all(gcn_layer(np.ones((3, 2)), np.ones((3, 3)) - np.eye(3), np.zeros((2, 4))).value == 0)


def test_gcn_two_nodes_hand_expansion():
    x = np.array([[1.0, -2.0], [3.0, 0.5]])
    w = np.array([[0.5, -1.0, 2.0], [1.0, 0.25, -0.5]])
    out = gcn_layer(x, np.array([[0, 1], [1, 0]]), w).value
    # A + I is all ones and both degrees are 2, so every normalised entry is 1/2
    for i in range(2):
        for j in range(3):
            s = 0.0
            for m in range(2):
                s += 0.5 * sum(x[m, q] * w[q, j] for q in range(2))
            assert out[i, j] == pytest.approx(max(0.0, s), abs=1e-15)


def test_normalized_adjacency_path():
    a_hat = normalized_adjacency(sp.csr_matrix(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))).toarray()
    deg = np.array([2.0, 3.0, 2.0])
    expected = (np.eye(3) + np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])) / np.sqrt(np.outer(deg, deg))
    assert np.allclose(a_hat, expected, atol=1e-15)


@given(st.integers(0, 2**31))
def test_gcn_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    a = np.triu((rng.random((5, 5)) < 0.5).astype(float), 1)
    a = a + a.T
    x, w = rng.normal(size=(5, 3)), rng.normal(size=(3, 4))
    perm = rng.permutation(5)
    out = gcn_layer(x, a, w).value
    permuted = gcn_layer(x[perm], a[np.ix_(perm, perm)], w).value
    assert np.allclose(permuted, out[perm], atol=1e-12)


def test_gcn_rejects_mismatched_rows():
    with pytest.raises(DimensionError):
        gcn_layer(np.ones((3, 2)), np.zeros((2, 2)), np.eye(2))


def test_co_view():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 4))
    a_s = normalized_adjacency(sp.random(6, 6, 0.4, random_state=2) > 0)
    a_s = normalized_adjacency(((a_s + a_s.T) > 0).astype(float) - sp.identity(6) * 0)
    a_x = normalized_adjacency(sp.csr_matrix(np.ones((6, 6)) - np.eye(6)))
    ws = [rng.normal(size=(4, 5)), rng.normal(size=(5, 3))]
    hs, hx, hco = co_view_forward(x, a_s, a_x, ws)
    assert np.array_equal(hco.value, (hs.value + hx.value) * 0.5)
    same = co_view_forward(x, a_x, a_x, ws)
    assert np.array_equal(same[0].value, same[1].value) and np.array_equal(same[0].value, same[2].value)
    zero = co_view_forward(x, a_s, a_x, [np.zeros((4, 5)), np.zeros((5, 3))])
    assert all(np.all(z.value == 0) for z in zero)


# consistency

def gram_oracle(a, b):
    def unit(m):
        out = []
        for row in m:
            norm = math.sqrt(sum(v * v for v in row))
            out.append([v / norm if norm > 0 else 0.0 for v in row])
        return out

    ua, ub = unit(a), unit(b)
    n = len(ua)
    total = 0.0
    for i in range(n):
        for j in range(n):
            ga = sum(p * q for p, q in zip(ua[i], ua[j]))
            gb = sum(p * q for p, q in zip(ub[i], ub[j]))
            total += (ga - gb) ** 2
    return total


def test_consistency_examples():
    parallel = np.array([[1.0, 0.0], [2.0, 0.0]])
    orthogonal = np.array([[1.0, 0.0], [0.0, 3.0]])
    # off-diagonal Gram entries 1 vs 0, twice
    assert consistency_loss(parallel, orthogonal).value == pytest.approx(2.0, abs=1e-14)
    assert gram_oracle(parallel, orthogonal) == pytest.approx(2.0, abs=1e-14)
    assert consistency_loss(orthogonal, orthogonal).value == pytest.approx(0.0, abs=1e-14)


@given(st.integers(0, 2**31))
def test_consistency_properties(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    a[0] = 0.0
    value = consistency_loss(a, b).value
    assert value == pytest.approx(gram_oracle(a.tolist(), b.tolist()), rel=1e-10, abs=1e-12)
    assert value >= -1e-12
    assert value == pytest.approx(consistency_loss(b, a).value, rel=1e-12, abs=1e-12)
    scale = rng.uniform(0.1, 10.0, size=(6, 1))
    assert consistency_loss(a * scale, b).value == pytest.approx(value, rel=1e-9, abs=1e-12)


# EPE

def test_epe_hand_evaluation():
    cfg = ModelConfig(conv_channels=1, kernel=3, stride=2, pool=2)
    img = np.arange(25, dtype=float).reshape(1, 5, 5) / 10.0
    ker = np.array([[[0.1, -0.2, 0.0], [0.3, 0.1, -0.1], [0.0, 0.2, 0.05]]])
    bias = np.array([-0.5])
    w = np.array([[2.0, -1.0, 0.5]])
    off = np.array([[0.1, 0.2, 0.3]])
    conv = [[max(0.0, float((img[0, i : i + 3, j : j + 3] * ker[0]).sum() - 0.5)) for j in (0, 2)] for i in (0, 2)]
    pooled = max(max(r) for r in conv)
    expected = [pooled * w[0, c] + off[0, c] for c in range(3)]
    assert np.allclose(epe_forward(img, ker, bias, w, off, cfg).value[0], expected, atol=1e-14)


def test_epe_trivial_cases():
    cfg = ModelConfig()
    rng = make_rng(0)
    p = init_params(5, 20, cfg, rng)
    zero = epe_forward(np.zeros((3, 20, 20)), p["conv_s_kernel"], np.zeros(8), p["epe_s_W"], np.zeros((1, 64)), cfg)
    assert np.all(zero.value == 0)
    img = np.random.default_rng(1).random((1, 20, 20))
    same = epe_forward(np.repeat(img, 4, axis=0), p["conv_s_kernel"], p["conv_s_bias"], p["epe_s_W"], p["epe_s_b"], cfg)
    assert np.all(same.value == same.value[0])
    assert cfg.epe_features(20) == 128
    with pytest.raises(DimensionError):
        cfg.epe_features(2)


# attention

def _att_params(rng, d=4, a=3):
    return [rng.normal(size=s) for s in [(d, a), (1, a), (a, 1), (d, d), (1, d), (d, d), (1, d)]]


def test_attention_weights_and_recomputation():
    rng = np.random.default_rng(5)
    embeddings = [rng.normal(size=(6, 4)) for _ in range(5)]
    p = _att_params(rng)
    h, weights = attention_fusion(embeddings, *p)
    assert np.allclose(weights.value.sum(axis=1), 1.0, atol=1e-12)
    for i in range(6):
        scores = [float(np.maximum(e[i] @ p[0] + p[1][0], 0) @ p[2][:, 0]) for e in embeddings]
        m = max(scores)
        z = sum(math.exp(s - m) for s in scores)
        a = [math.exp(s - m) / z for s in scores]
        mixed = sum(a[k] * embeddings[k][i] for k in range(5))
        hidden = np.maximum(mixed @ p[3] + p[4][0], 0)
        assert np.allclose(h.value[i], hidden @ p[5] + p[6][0], atol=1e-12)
        assert np.allclose(weights.value[i], a, atol=1e-12)


def test_attention_trivial_cases():
    rng = np.random.default_rng(6)
    e = rng.normal(size=(3, 4))
    p = _att_params(rng)
    h, weights = attention_fusion([e] * 5, *p)
    assert np.allclose(weights.value, 0.2, atol=1e-15)
    p0 = list(p)
    p0[2] = np.zeros((3, 1))
    _, weights = attention_fusion([rng.normal(size=(3, 4)) for _ in range(5)], *p0)
    assert np.allclose(weights.value, 0.2, atol=1e-15)


def test_attention_is_equivariant_to_modality_order():
    rng = np.random.default_rng(7)
    embeddings = [rng.normal(size=(4, 4)) for _ in range(5)]
    p = _att_params(rng)
    h, weights = attention_fusion(embeddings, *p)
    perm = [3, 0, 4, 1, 2]
    h2, weights2 = attention_fusion([embeddings[k] for k in perm], *p)
    assert np.allclose(weights2.value, weights.value[:, perm], atol=1e-15)
    assert np.allclose(h2.value, h.value, atol=1e-12)


# spatial constraint

def scdom_oracle(h, views, pos, neg, n):
    def cos(a, b):
        na, nb = math.sqrt(sum(x * x for x in a)), math.sqrt(sum(x * x for x in b))
        return 0.0 if na == 0 or nb == 0 else sum(x * y for x, y in zip(a, b)) / (na * nb)

    def clip(s):
        return min(max(s, 1e-7), 1 - 1e-7)

    total = 0.0
    for i, j in zip(*pos):
        total += math.log(clip(sigmoid(cos(h[i], h[j]))))
        total += math.log(sum(math.exp(cos(h[i], v[i])) for v in views))
    for i, k in zip(*neg):
        c = cos(h[i], h[k])
        total += math.log(1 - clip(sigmoid(c)))
        total += math.log(sum(math.exp((1 - c) * cos(h[i], v[k])) for v in views))
    return -total / n


def test_scdom_identical_embeddings_two_cells():
    e = np.array([[1.0, 2.0], [1.0, 2.0]])
    pos = (np.array([0, 1]), np.array([1, 0]))
    neg = (np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    value = scdom_loss(e, [e, e, e], pos, neg).value
    per_neighbor = math.log(sigmoid(1.0)) + math.log(3 * math.e)
    assert math.log(sigmoid(1.0)) == pytest.approx(-0.3133, abs=1e-4)
    assert math.log(3 * math.e) == pytest.approx(2.0986, abs=1e-4)
    assert value == pytest.approx(-(2 * per_neighbor) / 2, abs=1e-14)


def test_scdom_orthogonal_negatives():
    h = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    pos = (np.array([0, 1, 2]), np.array([2, 0, 0]))
    neg = (np.array([0]), np.array([1]))
    v = [h, h, h]
    with_neg = scdom_loss(h, v, pos, neg).value
    without = scdom_loss(h, v, pos, (np.zeros(0, dtype=int), np.zeros(0, dtype=int))).value
    # term3 = log(1/2), term4 = log(3 * e^0)
    assert (with_neg - without) * 3 == pytest.approx(-(math.log(0.5) + math.log(3.0)), abs=1e-12)


@given(st.integers(0, 2**31))
def test_scdom_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 5
    h = rng.normal(size=(n, 3))
    views = [rng.normal(size=(n, 3)) for _ in range(3)]
    views[1][2] = 0.0
    neighbors = [np.array([(i + 1) % n, (i - 1) % n]) for i in range(n)]
    pos = neighbor_pairs(neighbors)
    neg = sample_negatives(neighbors, 2, rng)
    value = scdom_loss(h, views, pos, neg).value
    assert value == pytest.approx(scdom_oracle(h.tolist(), [v.tolist() for v in views], pos, neg, n), rel=1e-11, abs=1e-12)


def test_scdom_duplicated_neighbors_double_neighbor_terms():
    rng = np.random.default_rng(2)
    h = rng.normal(size=(4, 3))
    views = [rng.normal(size=(4, 3)) for _ in range(3)]
    none = (np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    pos = (np.array([0, 1, 2, 3]), np.array([1, 0, 3, 2]))
    doubled = (np.concatenate([pos[0], pos[0]]), np.concatenate([pos[1], pos[1]]))
    assert scdom_loss(h, views, doubled, none).value == pytest.approx(2 * scdom_loss(h, views, pos, none).value, rel=1e-13)


def test_scdom_requires_neighbors():
    with pytest.raises(ContractError):
        neighbor_pairs([np.array([1]), np.array([], dtype=int)])
    h = np.ones((3, 2))
    with pytest.raises(ContractError):
        scdom_loss(h, [h, h, h], (np.array([0, 1]), np.array([1, 0])), (np.zeros(0, dtype=int),) * 2)


def test_negative_samples_avoid_neighbours():
    rng = np.random.default_rng(0)
    neighbors = [np.array([1, 2]), np.array([0]), np.array([0, 3]), np.array([2]), np.array([3])]
    rows, cols = sample_negatives(neighbors, 6, rng)
    assert len(rows) == 30
    for i, k in zip(rows, cols):
        assert k != i and k not in neighbors[i]


# ZINB

def test_zinb_heads_trivial_and_ranges():
    cfg = ModelConfig(latent=4, decoder_hidden=5)
    p = {k: np.zeros(v.shape) for k, v in init_params(3, 20, cfg, make_rng(0)).items()}
    sf = np.array([0.5, 1.0, 2.0])
    pi, mu, theta = zinb_heads(np.ones((3, 4)), p, sf, cfg)
    assert np.all(pi.value == 0.5) and np.all(theta.value == 1.0)
    assert np.array_equal(mu.value, np.repeat(sf[:, None], 3, axis=1))
    rng = np.random.default_rng(1)
    for _ in range(1000 // 50):
        q = {k: rng.normal(scale=3.0, size=v.shape) for k, v in p.items()}
        pi, mu, theta = zinb_heads(rng.normal(scale=5.0, size=(50, 4)), q, np.ones(50), cfg)
        assert np.all((pi.value >= 0) & (pi.value <= 1)) and np.all(mu.value > 0)
        assert np.all((theta.value >= 1e-4) & (theta.value <= 1e4))


def _mp_zinb(x, pi, mu, theta):
    x, pi, mu, theta = (mpmath.mpf(v) for v in (x, pi, mu, theta))
    nb = mpmath.gamma(x + theta) / (mpmath.gamma(x + 1) * mpmath.gamma(theta)) * (theta / (theta + mu)) ** theta * (mu / (theta + mu)) ** x
    return pi + (1 - pi) * nb if x == 0 else (1 - pi) * nb


def test_zinb_against_high_precision_pmf():
    mpmath.mp.dps = 40
    for x in (0, 1, 2):
        ref = -float(mpmath.log(_mp_zinb(x, 0.1, 2.0, 1.0)))
        ours = zinb_nll(np.array([[x]]), np.array([[0.1]]), np.array([[2.0]]), np.array([[1.0]])).value
        assert ours == pytest.approx(ref, rel=1e-13)
    total = np.exp(zinb_logpmf(np.arange(501), 0.1, 2.0, 1.0)).sum()
    assert abs(total - 1.0) < 1e-8


@given(st.floats(0.01, 50.0), st.floats(0.05, 20.0))
def test_nb_pmf_sums_to_one(mu, theta):
    support = np.arange(int(stats.nbinom.ppf(1 - 1e-14, theta, theta / (theta + mu))) + 50)
    assert abs(np.exp(nb_logpmf(support, mu, theta)).sum() - 1.0) < 1e-8
    assert np.allclose(nb_logpmf(support[:20], mu, theta), stats.nbinom.logpmf(support[:20], theta, theta / (theta + mu)), atol=1e-10)


def test_zinb_limits():
    x = np.zeros((1, 1))
    mu, theta = np.array([[3.0]]), np.array([[2.0]])
    assert zinb_nll(x, np.zeros((1, 1)), mu, theta).value == pytest.approx(-2.0 * math.log(2.0 / 5.0), rel=1e-14)
    assert zinb_nll(x, np.ones((1, 1)), mu, theta).value == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(DataError):
        zinb_nll(-np.ones((1, 1)), np.zeros((1, 1)), mu, theta)


def test_zinb_zero_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pi, mu, theta = rng.uniform(0, 1), rng.uniform(0.01, 30), rng.uniform(0.05, 30)
        closed = pi + (1 - pi) * (theta / (theta + mu)) ** theta
        nll = zinb_nll(np.zeros((1, 1)), np.array([[pi]]), np.array([[mu]]), np.array([[theta]])).value
        assert abs(math.exp(-nll) - closed) < 1e-10


# gradients

def test_loss_gradients():
    rng = np.random.default_rng(3)
    counts = rng.poisson(2.0, size=(4, 6)).astype(float)
    counts[0, :2] = 0
    zinb = grad_check(
        lambda p: zinb_nll(counts, ad.sigmoid(p["a"]), ad.exp(p["b"]), ad.exp(p["c"])),
        {"a": rng.normal(size=(4, 6)), "b": rng.normal(size=(4, 6)), "c": rng.normal(size=(4, 6))},
        samples=24,
    )
    con = grad_check(lambda p: consistency_loss(p["a"], p["b"]), {"a": rng.normal(size=(5, 3)), "b": rng.normal(size=(5, 3))})
    neighbors = [np.array([(i + 1) % 6]) for i in range(6)]
    pos, neg = neighbor_pairs(neighbors), sample_negatives(neighbors, 3, rng)
    sco = grad_check(
        lambda p: scdom_loss(p["h"], [p["s"], p["x"], p["c"]], pos, neg),
        {k: rng.normal(size=(6, 3)) for k in "hsxc"},
    )
    assert zinb.max_rel_error < 1e-4 and con.max_rel_error < 1e-4 and sco.max_rel_error < 1e-4


def test_total_loss_examples():
    rec, con, sco = Var(np.array(1.25)), Var(np.array(0.5)), Var(np.array(-3.0))
    assert total_loss(rec, con, sco, 0.0, 0.0).value == 1.25
    assert total_loss(rec, con, sco, 0.2, 0.3).value == pytest.approx(1.25 + 0.1 - 0.9, abs=1e-15)
    assert total_loss(rec, con, sco, 0.4, 0.3).value - total_loss(rec, con, sco, 0.2, 0.3).value == pytest.approx(0.2 * 0.5, abs=1e-15)
    assert total_loss(rec, con, None, 0.2, 5.0).value == pytest.approx(1.35, abs=1e-15)


# checkpoints

def test_checkpoint_round_trip(tmp_path):
    p = init_params(7, 20, ModelConfig(hidden=8, latent=4, attention_dim=2, decoder_hidden=5), make_rng(3))
    save_params(p, tmp_path / "params.bin")
    back = load_params(tmp_path / "params.bin", p)
    assert list(back) == list(p)
    assert all(np.array_equal(back[k].reshape(p[k].shape), p[k]) for k in p)
    assert (tmp_path / "params.bin").read_bytes()[:5] == b"SPHN1"


def test_init_is_seeded():
    cfg = ModelConfig(hidden=8, latent=4)
    a, b = init_params(5, 20, cfg, make_rng(1, 1)), init_params(5, 20, cfg, make_rng(1, 1))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert set(itertools.chain(a)) >= {"W_x_1", "W_co_2", "conv_s_kernel", "att_W2", "W_theta"}
