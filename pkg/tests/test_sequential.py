import numpy as np
import pytest

from sparseseg import autodiff as ad
from sparseseg.sequential import GATES, LstmParams, LstmState, lstm_step, run_sequence
from oracles import assert_grads_match, lstm_step_scalar


def random_params(rng, h, d, scale=1.0):
    kw = {f"W_{g}": ad.parameter(rng.uniform(-scale, scale, (h, h + d))) for g in GATES}
    kw.update({f"b_{g}": ad.parameter(rng.uniform(-scale, scale, (1, h))) for g in GATES})
    return LstmParams(**kw)


def as_lists(params):
    W = {g: getattr(params, f"W_{g}").value.tolist() for g in GATES}
    b = {g: getattr(params, f"b_{g}").value[0].tolist() for g in GATES}
    return W, b


def test_zero_params_from_zero_state():
    p = LstmParams.zeros(4, 3)
    out = lstm_step(p, LstmState.zeros(4), ad.constant([[0.3, -2.0, 5.0]]))
    assert out.c.value.tolist() == [[0.0] * 4]
    assert out.h.value.tolist() == [[0.0] * 4]


def test_zero_params_halve_memory():
    p = LstmParams.zeros(3, 2)
    c = np.array([[1.0, -2.0, 0.5]])
    prev = LstmState(ad.constant(np.zeros((1, 3))), ad.constant(c))
    out = lstm_step(p, prev, ad.constant([[1.0, 1.0]]))
    assert np.array_equal(out.c.value, 0.5 * c)


def test_matches_scalar_reference_over_five_steps():
    rng = np.random.default_rng(0)
    p = random_params(rng, 4, 3)
    W, b = as_lists(p)
    xs = [rng.normal(size=(1, 3)) for _ in range(5)]
    states = run_sequence(p, LstmState.zeros(4), [ad.constant(x) for x in xs])
    h, c = [0.0] * 4, [0.0] * 4
    for x, st in zip(xs, states):
        h, c = lstm_step_scalar(W, b, h, c, x[0].tolist())
        np.testing.assert_allclose(st.h.value[0], h, rtol=0, atol=1e-12)
        np.testing.assert_allclose(st.c.value[0], c, rtol=0, atol=1e-12)


def test_single_step_sequence_equals_step():
    rng = np.random.default_rng(1)
    p = random_params(rng, 3, 2)
    x = ad.constant(rng.normal(size=(1, 2)))
    (state,) = run_sequence(p, LstmState.zeros(3), [x])
    direct = lstm_step(p, LstmState.zeros(3), x)
    assert np.array_equal(state.h.value, direct.h.value)
    assert np.array_equal(state.c.value, direct.c.value)


def test_memory_hold_with_saturated_gates():
    rng = np.random.default_rng(2)
    p = random_params(rng, 5, 3, scale=0.1)
    p.b_f.assign(np.full((1, 5), 10.0))
    p.b_i.assign(np.full((1, 5), -10.0))
    c0 = rng.uniform(-1, 1, (1, 5))
    init = LstmState(ad.constant(np.zeros((1, 5))), ad.constant(c0))
    states = run_sequence(p, init, [ad.constant(rng.normal(size=(1, 3))) for _ in range(20)])
    assert np.max(np.abs(states[-1].c.value - c0)) < 1e-3


def test_exact_memory_identity():
    # f = 1 and i = 0 exactly: C_t = C_{t-1}. Reproduce with the gate formula directly.
    c_prev = np.array([[0.4, -0.7]])
    f = np.ones((1, 2))
    i = np.zeros((1, 2))
    c_tilde = np.array([[0.9, 0.1]])
    c = ad.add(ad.mul(ad.constant(f), ad.constant(c_prev)), ad.mul(ad.constant(i), ad.constant(c_tilde)))
    assert np.array_equal(c.value, c_prev)


def test_gate_ranges_and_bounded_output():
    rng = np.random.default_rng(3)
    p = random_params(rng, 6, 4, scale=3.0)
    states = run_sequence(p, LstmState.zeros(6), [ad.constant(rng.normal(scale=5, size=(1, 4))) for _ in range(10)])
    for st in states:
        assert np.all(np.abs(st.h.value) < 1.0)


def test_fold_associativity():
    rng = np.random.default_rng(4)
    p = random_params(rng, 3, 2)
    xs = [ad.constant(rng.normal(size=(1, 2))) for _ in range(6)]
    whole = run_sequence(p, LstmState.zeros(3), xs)
    first = run_sequence(p, LstmState.zeros(3), xs[:2])
    rest = run_sequence(p, first[-1], xs[2:])
    assert np.array_equal(whole[-1].h.value, rest[-1].h.value)
    assert np.array_equal(whole[-1].c.value, rest[-1].c.value)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_through_four_steps(seed):
    rng = np.random.default_rng(10 + seed)
    p = random_params(rng, 3, 2)
    xs = [ad.constant(rng.normal(size=(1, 2))) for _ in range(4)]
    probe = ad.constant(rng.normal(size=(1, 3)))

    def loss():
        states = run_sequence(p, LstmState.zeros(3), xs)
        return ad.sum_all(ad.mul(states[-1].h, probe))

    assert_grads_match(loss, list(p.named().values()))


def test_errors():
    p = LstmParams.zeros(3, 2)
    with pytest.raises(ValueError):
        run_sequence(p, LstmState.zeros(3), [])
    with pytest.raises(ad.ShapeError):
        lstm_step(p, LstmState.zeros(3), ad.constant([[1.0, 2.0, 3.0]]))
    with pytest.raises(ad.ShapeError):
        lstm_step(p, LstmState.zeros(4), ad.constant([[1.0, 2.0]]))


def test_init_is_seeded_fan_in_uniform():
    a = LstmParams.init(8, 4, np.random.default_rng(0))
    b = LstmParams.init(8, 4, np.random.default_rng(0))
    bound = 1 / np.sqrt(12)
    for name, node in a.named().items():
        assert np.array_equal(node.value, b.named()[name].value)
        assert np.all(np.abs(node.value) <= bound)
