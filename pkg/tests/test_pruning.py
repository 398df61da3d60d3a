import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ticketbench.datasets import generate
from ticketbench.net import InitSpec, MaskedMLP, _grads, apply_mask, forward, mlp_new
from ticketbench.pruning import (
    ScoreSet, anneal_schedule, compute_scores, detect_layer_collapse, edge_popup, hessian_gradient_product,
    masks_sparsity, multishot, prune, score_grasp, score_magnitude, score_snip, score_synflow, select_mask,
    singleshot,
)


def small_net(seed=0, widths=(2, 8, 8, 4)):
    return mlp_new(list(widths), InitSpec(seed=seed))


def batch(seed=0, n=16):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (n, 2)), rng.integers(0, 4, n)


KIND = "softmax-cross-entropy"


class TestScores:
    def test_magnitude(self):
        net = small_net()
        s = score_magnitude(net)
        np.testing.assert_array_equal(s.weights[1], np.abs(net.weights[1]))

    def test_snip_is_abs_theta_grad(self):
        net = small_net()
        X, y = batch()
        _, gW, _ = _grads(net.weights, net.biases, X, y, KIND)
        s = score_snip(net, X, y, KIND)
        np.testing.assert_allclose(s.weights[0], np.abs(net.weights[0] * gW[0]))

    def test_hg_matches_finite_difference_of_gradients(self):
        # oracle: directional derivative of the gradient along g, with a much smaller step
        net = small_net(3)
        X, y = batch(3)
        (gW, gb), (HgW, Hgb) = hessian_gradient_product(net, X, y, KIND)
        h = 1e-6
        up = _grads([w + h * g for w, g in zip(net.weights, gW)], [b + h * g for b, g in zip(net.biases, gb)], X, y, KIND)
        dn = _grads([w - h * g for w, g in zip(net.weights, gW)], [b - h * g for b, g in zip(net.biases, gb)], X, y, KIND)
        for l in range(3):
            np.testing.assert_allclose(HgW[l], (up[1][l] - dn[1][l]) / (2 * h), rtol=1e-3, atol=1e-6)

    def test_hg_against_autograd(self):
        torch = pytest.importorskip("torch")
        net = small_net(5)
        X, y = batch(5)
        _, (HgW, _) = hessian_gradient_product(net, X, y, KIND)
        params = []
        for w, b in zip(net.weights, net.biases):
            params += [torch.tensor(w, requires_grad=True), torch.tensor(b, requires_grad=True)]
        h = torch.tensor(X)
        for l in range(3):
            h = h @ params[2 * l] + params[2 * l + 1]
            if l < 2:
                h = torch.relu(h)
        loss = torch.nn.functional.cross_entropy(h, torch.tensor(y))
        g = torch.autograd.grad(loss, params, create_graph=True)
        dot = sum((gi * gi.detach()).sum() for gi in g)
        hg = torch.autograd.grad(dot, params)
        for l in range(3):
            np.testing.assert_allclose(HgW[l], hg[2 * l].numpy(), rtol=1e-3, atol=1e-7)

    def test_grasp_is_theta_times_hg(self):
        net = small_net(1)
        X, y = batch(1)
        _, (HgW, _) = hessian_gradient_product(net, X, y, KIND)
        s = score_grasp(net, X, y, KIND)
        np.testing.assert_allclose(s.weights[2], net.weights[2] * HgW[2])

    def test_synflow_linear_chain(self):
        # for a 1-1-1 chain R = |w1||w2| + |b1||w2| + |b2|, each weight's score is its path contribution
        net = MaskedMLP(mlp_new([1, 1, 1]).arch, [np.array([[2.0]]), np.array([[-3.0]])], [np.array([0.5]), np.array([1.0])])
        s = score_synflow(net)
        np.testing.assert_allclose(s.weights[0], [[6.0]])
        np.testing.assert_allclose(s.weights[1], [[7.5]])
        np.testing.assert_allclose(s.biases[0], [1.5])

    def test_synflow_conservation(self):
        # without biases, summed scores per layer equal R for every layer
        net = small_net(2)
        net = MaskedMLP(net.arch, net.weights, [np.zeros_like(b) for b in net.biases])
        s = score_synflow(net)
        R = forward(MaskedMLP(net.arch, [np.abs(w) for w in net.weights], net.biases), np.ones(2))[1].sum()
        for w in s.weights:
            assert w.sum() == pytest.approx(R)

    def test_data_methods_need_data(self):
        with pytest.raises(ValueError):
            compute_scores(small_net(), "snip")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            compute_scores(small_net(), "obd")

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ScoreSet([np.array([np.nan])], [])


class TestSelectMask:
    def test_global_exact_count(self):
        net = small_net()
        wm, bm = select_mask(score_magnitude(net), 0.3)
        assert int(sum(m.sum() for m in wm)) == round(0.3 * net.arch.n_weights())

    def test_keeps_highest(self):
        s = ScoreSet([np.array([[1.0, 5.0], [3.0, 2.0]])], [np.zeros(2)])
        wm, _ = select_mask(s, 0.5)
        np.testing.assert_array_equal(wm[0], [[0, 1], [1, 0]])

    def test_ties_go_to_earlier_entries(self):
        s = ScoreSet([np.ones((2, 2)), np.ones((2, 1))], [np.zeros(2), np.zeros(1)])
        wm, _ = select_mask(s, 0.5)
        np.testing.assert_array_equal(wm[0], [[1, 1], [1, 0]])
        np.testing.assert_array_equal(wm[1], [[0], [0]])

    def test_bias_follows_incoming_weights(self):
        s = ScoreSet([np.array([[3.0, 0.0], [2.0, 0.0]])], [np.ones(2)])
        wm, bm = select_mask(s, 0.5)
        np.testing.assert_array_equal(bm[0], [1, 0])

    def test_local_per_layer(self):
        net = small_net()
        wm, _ = select_mask(score_magnitude(net), 0.25, "local")
        for m in wm:
            assert abs(m.sum() - 0.25 * m.size) <= 1
        assert int(sum(m.sum() for m in wm)) == round(0.25 * net.arch.n_weights())

    def test_never_revives(self):
        net = small_net()
        wm1, bm1 = select_mask(score_magnitude(net), 0.5)
        rand = ScoreSet([np.random.default_rng(0).random(w.shape) for w in net.weights], [np.zeros_like(b) for b in net.biases])
        wm2, _ = select_mask(rand, 0.25, current=(wm1, bm1))
        for a, b in zip(wm1, wm2):
            assert np.all(b <= a)

    @pytest.mark.parametrize("rho", [0.0, 1.5])
    def test_rho_range(self, rho):
        with pytest.raises(ValueError):
            select_mask(score_magnitude(small_net()), rho)

    @settings(max_examples=40, deadline=None)
    @given(rho=st.floats(1e-3, 1.0), seed=st.integers(0, 1000), scope=st.sampled_from(["global", "local"]))
    def test_achieved_within_one_entry(self, rho, seed, scope):
        net = small_net(seed, (3, 7, 5, 2))
        N = net.arch.n_weights()
        wm, _ = select_mask(score_magnitude(net), rho, scope)
        assert abs(masks_sparsity(wm) - rho) <= 1.0 / N


class TestCollapse:
    def test_empty_layer(self):
        wm = [np.ones((2, 3)), np.zeros((3, 3)), np.ones((3, 1))]
        r = detect_layer_collapse(wm)
        assert r.collapsed_layers == [2] and r.flow_interrupted and r.collapsed

    def test_interrupted_without_empty_layer(self):
        # layer 1 feeds only neuron 0, layer 2 only reads neuron 1
        wm = [np.array([[1.0, 0.0]]), np.array([[0.0], [1.0]])]
        r = detect_layer_collapse(wm)
        assert r.collapsed_layers == [] and r.flow_interrupted

    def test_connected(self):
        r = detect_layer_collapse([np.ones((2, 2)), np.ones((2, 1))])
        assert not r.collapsed


@pytest.fixture(scope="module")
def data():
    return generate("circle", 512, seed=0)


class TestStrategies:
    @pytest.mark.parametrize("method", ["magnitude", "random", "snip", "grasp", "synflow"])
    def test_singleshot_sparsity(self, method, data):
        net = small_net()
        res = singleshot(net, method, 0.2, data)
        assert abs(masks_sparsity(res.weight_masks) - 0.2) <= 1 / net.arch.n_weights()

    def test_iterative_synflow_schedule(self):
        res = singleshot(small_net(), "synflow", 0.01, synflow_iterations=4)
        np.testing.assert_allclose(res.schedule, [0.01 ** (r / 4) for r in range(1, 5)])

    def test_multishot_schedule_and_reset(self, data):
        net = small_net(1)
        seen = []
        res = multishot(net, "magnitude", 0.1, data, rounds=10, epochs=1, on_round=lambda r, n: seen.append(n))
        np.testing.assert_allclose(res.schedule, [0.1 ** (r / 10) for r in range(1, 11)])
        assert len(seen) == 10
        for start in seen:
            # every round restarts from the initial values on the surviving entries
            for w0, w, m in zip(net.weights, start.weights, start.weight_masks):
                np.testing.assert_array_equal(w[m > 0], w0[m > 0])
        assert np.all(np.diff(res.achieved) < 0)

    def test_anneal_schedule(self):
        np.testing.assert_allclose(anneal_schedule(0.1, 12), [0.1 ** (min(i, 10) / 10) for i in range(1, 13)])
        assert anneal_schedule(0.3, 4, anneal=False) == [0.3] * 4

    def test_edge_popup_weights_frozen(self, data):
        net = small_net(2)
        before = [w.copy() for w in net.weights] + [b.copy() for b in net.biases]
        res = edge_popup(net, 0.5, data, epochs=2, seed=0)
        for a, b in zip(before, net.weights + net.biases):
            assert a.tobytes() == b.tobytes()
        assert abs(masks_sparsity(res.weight_masks) - 0.5) <= 1 / net.arch.n_weights()

    def test_edge_popup_improves_over_random_mask(self, data):
        net = small_net(0, (2, 32, 32, 4))
        res = edge_popup(net, 0.5, data, epochs=5, seed=0)
        found = apply_mask(net, res.weight_masks, res.bias_masks)
        rand = apply_mask(net, *select_mask(compute_scores(net, "random", seed=0), 0.5))
        acc = lambda n: np.mean(forward(n, data.X)[1].argmax(axis=1) == data.y)
        assert acc(found) > acc(rand)

    def test_dispatcher(self, data):
        net = small_net()
        with pytest.raises(ValueError):
            prune(net, "magnitude", 0.5, "annealing", data)
        with pytest.raises(ValueError):
            prune(net, "magnitude", 0.5, "multishot", None)
        a = prune(net, "magnitude", 0.5, "singleshot")
        b = singleshot(net, "magnitude", 0.5)
        for x, y in zip(a.weight_masks, b.weight_masks):
            np.testing.assert_array_equal(x, y)

    def test_deterministic(self, data):
        a = prune(small_net(), "grasp", 0.3, "singleshot", data, seed=4)
        b = prune(small_net(), "grasp", 0.3, "singleshot", data, seed=4)
        for x, y in zip(a.weight_masks, b.weight_masks):
            assert x.tobytes() == y.tobytes()
