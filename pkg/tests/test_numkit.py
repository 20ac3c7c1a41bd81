import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sptopo.errors import DimensionError, DomainError, TrainingError
from sptopo.numkit import AdamState, adam_step, conv2d_maxpool, conv2d_maxpool_batch, digamma, grad_check, log_gamma
from sptopo.numkit import autodiff as ad
from sptopo.numkit.autodiff import Var


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


# matmul

def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(np.eye(2), a).value, a)
    assert np.array_equal(ad.matmul(a, np.zeros((2, 2))).value, np.zeros((2, 2)))
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(ad.matmul(a, b).value, triple_loop(a, b))
    assert np.array_equal(ad.matmul(a, b).value, [[19, 22], [43, 50]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
def test_matmul_backward_matches_closed_form(n, k, m, seed):
    rng = np.random.default_rng(seed)
    a, b, g = rng.normal(size=(n, k)), rng.normal(size=(k, m)), rng.normal(size=(n, m))
    va, vb = Var(a), Var(b)
    ad.matmul(va, vb).backward(g)
    assert np.allclose(va.grad, g @ b.T, atol=1e-12)
    assert np.allclose(vb.grad, a.T @ g, atol=1e-12)
    report = grad_check(lambda p: ad.sum(ad.mul(ad.matmul(p["a"], p["b"]), g)), {"a": a, "b": b}, samples=8)
    assert report.max_rel_error < 1e-4


# softmax

def test_softmax_examples():
    out = ad.softmax_rows(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [11.0, 12.0, 13.0]])).value
    assert np.allclose(out[0], 1 / 3, atol=1e-15)
    ref = [mpmath.exp(v) / sum(mpmath.exp(u) for u in (1, 2, 3)) for v in (1, 2, 3)]
    assert np.allclose(out[1], [float(r) for r in ref], atol=1e-15)
    assert np.allclose(out[1], out[2], atol=1e-12)
    assert ad.softmax_rows(np.array([[7.5], [-3.0]])).value.tolist() == [[1.0], [1.0]]


@given(st.integers(1, 6), st.integers(1, 6), st.floats(-50, 50), st.integers(0, 2**31))
def test_softmax_rows_sum_to_one_and_shift_invariant(n, m, shift, seed):
    x = np.random.default_rng(seed).normal(scale=5.0, size=(n, m))
    out = ad.softmax_rows(x).value
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(ad.softmax_rows(x + shift).value, out, atol=1e-12)


def test_softmax_extreme_logits_are_finite():
    out = ad.softmax_rows(np.array([[1e300, -1e300, 0.0]])).value
    assert np.all(np.isfinite(out)) and out[0, 0] == 1.0


# special functions

@pytest.mark.parametrize("x", [1e-4, 1e-3, 0.1, 0.5, 1.0, 2.5, 5.0, 17.3, 1e2, 1e4, 1e6])
def test_log_gamma_against_mpmath(x):
    assert abs(log_gamma(x) - float(mpmath.loggamma(x))) <= 1e-10 * max(1.0, abs(float(mpmath.loggamma(x))))


def test_log_gamma_known_values():
    assert log_gamma(1.0) == 0.0
    assert abs(log_gamma(5.0) - np.log(24.0)) < 1e-12
    assert abs(log_gamma(0.5) - 0.5 * np.log(np.pi)) < 1e-12
    assert abs(log_gamma(5.0) - 3.178053830) < 1e-9
    assert abs(log_gamma(0.5) - 0.572364943) < 1e-9


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_special_domain_errors(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)
    with pytest.raises(DomainError):
        digamma(bad)


@pytest.mark.parametrize("x", [0.01, 0.7, 3.0, 250.0])
def test_digamma_against_mpmath(x):
    assert abs(digamma(x) - float(mpmath.digamma(x))) < 1e-10 * max(1.0, abs(float(mpmath.digamma(x))))


# convolution

def test_conv_examples():
    assert conv2d_maxpool(np.ones((3, 3)), np.ones((3, 3)), 0.0, 1, 1).value.tolist() == [[9.0]]
    img = np.random.default_rng(0).normal(size=(6, 6))
    assert np.all(conv2d_maxpool(img, np.zeros((2, 2)), 0.0, 1, 2).value == 0)
    neg = -np.ones((4, 4))
    neg[0, 0] = 2.0
    out = conv2d_maxpool(neg, np.array([[1.0]]), 0.0, 1, 1).value
    assert out[0, 0] == 2.0 and np.all(out.ravel()[1:] == 0.0)
    with pytest.raises(DimensionError):
        conv2d_maxpool(np.ones((2, 2)), np.ones((3, 3)))


def test_conv_matches_direct_loops():
    rng = np.random.default_rng(3)
    img, ker, bias = rng.normal(size=(9, 9)), rng.normal(size=(3, 3)), 0.2
    stride, pool = 2, 2
    conv = np.array([[max(0.0, (img[i : i + 3, j : j + 3] * ker).sum() + bias) for j in range(0, 7, stride)] for i in range(0, 7, stride)])
    expected = np.array([[conv[2 * a : 2 * a + 2, 2 * b : 2 * b + 2].max() for b in range(2)] for a in range(2)])
    assert np.allclose(conv2d_maxpool(img, ker, bias, stride, pool).value, expected, atol=1e-14)


def test_conv_gradients():
    rng = np.random.default_rng(4)
    imgs = rng.normal(size=(3, 8, 8))
    weight = rng.normal(size=(3, 2, 3, 3))

    def loss(p):
        out = conv2d_maxpool_batch(p["img"], p["k"], p["b"], stride=2, pool=1)
        return ad.sum(ad.mul(out, weight))

    params = {"img": imgs, "k": rng.normal(size=(2, 3, 3)), "b": rng.normal(size=2)}
    assert grad_check(loss, params, samples=30).max_rel_error < 1e-4


# every registered op

def _op_cases():
    rng = np.random.default_rng(11)
    pos = lambda *s: rng.uniform(0.5, 2.0, size=s)  # noqa: E731
    w = rng.normal(size=(4, 3))
    idx = np.array([0, 2, 2, 1])
    return {
        "add": (lambda p: ad.add(p["a"], p["b"]), {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(1, 3))}),
        "sub": (lambda p: ad.sub(p["a"], p["b"]), {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(4, 1))}),
        "mul": (lambda p: ad.mul(p["a"], p["b"]), {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(4, 3))}),
        "div": (lambda p: ad.div(p["a"], p["b"]), {"a": rng.normal(size=(4, 3)), "b": pos(4, 3)}),
        "neg": (lambda p: ad.neg(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "square": (lambda p: ad.square(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "exp": (lambda p: ad.exp(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "log": (lambda p: ad.log(p["a"]), {"a": pos(4, 3)}),
        "relu": (lambda p: ad.relu(p["a"]), {"a": rng.normal(size=(4, 3)) + 0.05}),
        "sigmoid": (lambda p: ad.sigmoid(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "clamp": (lambda p: ad.clamp(p["a"], -0.5, 0.5), {"a": rng.normal(size=(4, 3))}),
        "sum": (lambda p: ad.sum(p["a"], axis=1, keepdims=True), {"a": rng.normal(size=(4, 3))}),
        "mean": (lambda p: ad.mean(p["a"], axis=0), {"a": rng.normal(size=(4, 3))}),
        "transpose": (lambda p: ad.transpose(p["a"]), {"a": rng.normal(size=(3, 4))}),
        "reshape": (lambda p: ad.reshape(p["a"], (4, 3)), {"a": rng.normal(size=(2, 6))}),
        "take_rows": (lambda p: ad.take_rows(p["a"], idx), {"a": rng.normal(size=(3, 3))}),
        "column": (lambda p: ad.column(p["a"], 1), {"a": rng.normal(size=(4, 3))}),
        "concat_cols": (lambda p: ad.concat_cols([p["a"], p["b"]]), {"a": rng.normal(size=(4, 1)), "b": rng.normal(size=(4, 2))}),
        "matmul": (lambda p: ad.matmul(p["a"], p["b"]), {"a": rng.normal(size=(4, 5)), "b": rng.normal(size=(5, 3))}),
        "spmm": (lambda p: ad.spmm(__import__("scipy.sparse").sparse.random(4, 6, 0.5, random_state=1, format="csr"), p["a"]), {"a": rng.normal(size=(6, 3))}),
        "softmax_rows": (lambda p: ad.softmax_rows(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "logsumexp_rows": (lambda p: ad.logsumexp_rows(p["a"]), {"a": rng.normal(size=(4, 3))}),
        "row_normalize": (lambda p: ad.row_normalize(p["a"]), {"a": rng.normal(size=(4, 3))}),
    }, w


@pytest.mark.parametrize("name", sorted(_op_cases()[0]))
def test_registered_op_gradients(name):
    cases, _ = _op_cases()
    fn, params = cases[name]
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(trial)
        shaped = {k: v + 0.1 * rng.normal(size=v.shape) if name not in ("log", "div") else v * rng.uniform(0.8, 1.2, size=v.shape) for k, v in params.items()}
        out_shape = fn({k: Var(v) for k, v in shaped.items()}).value.shape
        weight = rng.normal(size=out_shape)
        report = grad_check(lambda p: ad.sum(ad.mul(fn(p), weight)), shaped, samples=6, seed=trial)
        worst = max(worst, report.max_rel_error)
    assert worst < 1e-4, f"{name}: {worst}"


def test_tape_visits_each_node_once_on_shared_subexpressions():
    x = Var(np.array([[2.0]]))
    y = ad.mul(x, x)
    z = ad.add(y, y)  # dz/dx = 4x
    z.backward()
    assert x.grad.tolist() == [[8.0]]
    order = ad._topological_order(z)
    assert len(order) == len({id(v) for v in order})


def test_relu_subgradient_at_zero_is_zero():
    x = Var(np.zeros((1, 3)))
    ad.sum(ad.relu(x)).backward()
    assert np.all(x.grad == 0)


def test_quadratic_gradcheck_is_exact():
    w = np.random.default_rng(0).normal(size=(3, 4))
    report = grad_check(lambda p: ad.mul(ad.sum(ad.square(p["w"])), 0.5), {"w": w}, samples=12)
    assert report.max_rel_error < 1e-9 and report.passed


# optimizer

def test_adam_zero_gradient_is_identity():
    p = {"w": np.array([[1.0, -2.0]])}
    before = p["w"].copy()
    state = AdamState()
    adam_step(p, {"w": np.zeros((1, 2))}, state)
    assert np.array_equal(p["w"], before) and state.step_count == 1


def test_adam_first_step_moves_by_lr():
    g = np.array([[3.0, -0.2, 1e3]])
    p = {"w": np.zeros((1, 3))}
    adam_step(p, {"w": g}, AdamState(lr=0.01))
    # bias-corrected first step is lr * g / (|g| + eps)
    assert np.allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-15)
    assert np.allclose(np.abs(p["w"]), 0.01, rtol=1e-6)


def test_adam_matches_hand_recursion():
    rng = np.random.default_rng(5)
    p = {"w": rng.normal(size=4)}
    w = p["w"].copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = AdamState()
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(p, {"w": g}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p["w"], w, rtol=0, atol=1e-15)


def test_adam_rejects_non_finite_gradient_by_name():
    with pytest.raises(TrainingError, match="W_mu"):
        adam_step({"W_mu": np.zeros(2)}, {"W_mu": np.array([np.nan, 0.0])}, AdamState())


def test_adam_is_deterministic():
    def trajectory():
        rng = np.random.default_rng(9)
        p = {"w": np.ones(3)}
        s = AdamState()
        for _ in range(10):
            adam_step(p, {"w": rng.normal(size=3)}, s)
        return p["w"]

    assert np.array_equal(trajectory(), trajectory())
