import numpy as np
import pytest

from radpinn.autodiff import reverse
from radpinn.loss import (
    LossBreakdown,
    LossWeights,
    loss_dirichlet,
    loss_neumann,
    loss_residual,
    network_inputs,
    total_loss,
    total_loss_tape,
)
from radpinn.network import KInput, NetworkParams, NetworkShape, forward, forward_with_derivatives, init
from radpinn.physics import ADVECTION, REACTION
from radpinn.sampling import SampleSet, build_samples
from radpinn.training import TrainConfig


def constant_net(value, input_dim=2):
    s = NetworkShape(input_dim)
    data = np.zeros(s.n_params)
    data[-1] = value
    return NetworkParams(s, data)


PTS = np.array([[0.0, 0.3], [1.0, 0.8], [0.0, 0.55]])
NPTS = np.array([[0.2, 0.0], [0.9, 1.0], [0.45, 1.0]])
RPTS = np.array([[0.3, 0.4], [0.8, 0.1]])


def test_dirichlet_zero_network():
    assert loss_dirichlet(constant_net(0.0), PTS) == 0.0


def test_dirichlet_constant_half():
    assert loss_dirichlet(constant_net(0.5), PTS) == 0.25


def test_dirichlet_random_network_mean_of_squares():
    p = init(NetworkShape(), 3)
    expected = sum(forward(p, pt) ** 2 for pt in PTS) / 3
    assert loss_dirichlet(p, PTS) == pytest.approx(expected, abs=1e-12)


def test_neumann_constant_network():
    assert loss_neumann(constant_net(0.3), NPTS) == 0.0


def test_neumann_x_only_network():
    p = init(NetworkShape(), 3)
    W0, _ = p.layers()[0]
    W0[:, 1] = 0.0
    assert loss_neumann(p, NPTS) == 0.0


def test_neumann_matches_finite_differences():
    p = init(NetworkShape(), 4)
    h = 1e-4
    fd = [(forward(p, [x, y + h]) - forward(p, [x, y - h])) / (2 * h) for x, y in NPTS]
    assert loss_neumann(p, NPTS) == pytest.approx(np.mean(np.square(fd)), abs=1e-6)


def test_residual_exact_constant_solution():
    assert loss_residual(constant_net(1.0), REACTION, RPTS, [0.01]) == 0.0


def test_residual_zero_network():
    assert loss_residual(constant_net(0.0), REACTION, RPTS, [0.01]) == 1.0


def test_residual_hand_expanded_parametric():
    p = init(NetworkShape(3), 8)
    enc = KInput("log", 1e-4, 1.0)
    ks = [0.05, 0.002]
    terms = []
    for k in ks:
        for x, y in RPTS:
            u, ux, uy, uxx, uyy = forward_with_derivatives(p, [x, y, enc.encode(k)]).values()
            terms.append((-k * (uxx + uyy) + 0.0 * ux + 1.0 * u - 1.0) ** 2)
    assert loss_residual(p, REACTION, RPTS, ks, enc) == pytest.approx(sum(terms) / 4, abs=1e-12)


def test_residual_requires_k_and_points():
    p = constant_net(0.0)
    with pytest.raises(ValueError):
        loss_residual(p, REACTION, RPTS, [])
    with pytest.raises(ValueError):
        loss_residual(p, REACTION, np.zeros((0, 2)), [0.1])
    with pytest.raises(ValueError):
        loss_dirichlet(p, np.zeros((0, 2)))


def test_network_inputs_product_order():
    X, ks = network_inputs([[0.1, 0.2], [0.3, 0.4]], [0.01, 0.1], KInput("raw"))
    np.testing.assert_array_equal(ks, [0.01, 0.01, 0.1, 0.1])
    np.testing.assert_array_equal(X[:, 2], [0.01, 0.01, 0.1, 0.1])
    with pytest.raises(ValueError):
        network_inputs([[0.1, 0.2]], [0.01, 0.1])


def test_breakdown_paper_weights_reaction():
    b = LossBreakdown.combine(LossWeights(2, 1, 0.01), 0.1, 0.2, 3.0)
    assert b.total == pytest.approx(0.43, abs=1e-15)
    assert b.total == 2 * 0.1 + 1 * 0.2 + 0.01 * 3.0


def test_breakdown_paper_weights_advection_zero():
    assert LossBreakdown.combine(LossWeights(1, 1.2, 1), 0, 0, 0).total == 0.0


def test_weight_validation():
    assert LossWeights().violations() == []
    assert LossWeights(0, 0, 0).violations()
    assert LossWeights(-1, 0, 1).violations()


def _small_problem(scenario):
    cfg = TrainConfig(scenario=scenario, n_bd=4, n_bn=4, n_r=5, n_k=2, k_range=(1e-3, 1.0), hidden_layers=2, hidden_width=6)
    samples = build_samples(cfg)
    ks = [0.05] if scenario == 1 else list(samples.k_values)
    return cfg, samples, ks


@pytest.mark.parametrize("scenario", [1, 2])
@pytest.mark.parametrize("spec", [REACTION, ADVECTION])
def test_tape_and_batched_losses_agree(scenario, spec):
    cfg, samples, ks = _small_problem(scenario)
    p = init(cfg.shape, 1)
    w = LossWeights(2, 1, 0.5)
    bd, grad = total_loss(p, samples, spec, w, ks, cfg.k_encoding)
    tl = total_loss_tape(p, samples, spec, w, ks, cfg.k_encoding)
    for a, b in zip(bd.as_row(), tl.breakdown.as_row()):
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(grad, reverse(tl.total), rtol=1e-9, atol=1e-13)


def test_total_gradient_matches_finite_differences():
    cfg, samples, ks = _small_problem(2)
    p = init(cfg.shape, 2)
    w = LossWeights(1, 1.2, 1)
    _, grad = total_loss(p, samples, ADVECTION, w, ks, cfg.k_encoding)
    h = 1e-4
    rng = np.random.default_rng(0)
    for i in rng.choice(p.shape.n_params, 25, replace=False):
        up, dn = p.copy(), p.copy()
        up.data[i] += h
        dn.data[i] -= h
        fd = (total_loss(up, samples, ADVECTION, w, ks, cfg.k_encoding)[0].total
              - total_loss(dn, samples, ADVECTION, w, ks, cfg.k_encoding)[0].total) / (2 * h)
        assert abs(grad[i] - fd) / (abs(grad[i]) + abs(fd) + 1e-12) < 1e-5


def test_weight_homogeneity():
    cfg, samples, ks = _small_problem(1)
    p = init(cfg.shape, 5)
    w = LossWeights(2, 1, 0.01)
    b1, g1 = total_loss(p, samples, REACTION, w, ks)
    b2, g2 = total_loss(p, samples, REACTION, w.scaled(4.0), ks)
    assert b2.total == 4.0 * b1.total
    cos = g1 @ g2 / (np.linalg.norm(g1) * np.linalg.norm(g2))
    assert abs(cos - 1.0) < 1e-12
    np.testing.assert_allclose(g2, 4.0 * g1, rtol=1e-12)


def test_permutation_invariance():
    cfg, samples, ks = _small_problem(2)
    p = init(cfg.shape, 6)
    rng = np.random.default_rng(3)
    shuffled = SampleSet(
        rng.permutation(samples.collocation),
        rng.permutation(samples.dirichlet),
        rng.permutation(samples.neumann),
        rng.permutation(samples.k_values),
    )
    a, _ = total_loss(p, samples, REACTION, LossWeights(), ks, cfg.k_encoding)
    b, _ = total_loss(p, shuffled, REACTION, LossWeights(), list(shuffled.k_values), cfg.k_encoding)
    for x, y in zip(a.as_row(), b.as_row()):
        assert x == pytest.approx(y, rel=1e-12)


def test_components_nonnegative_and_total_consistent():
    cfg, samples, ks = _small_problem(2)
    w = LossWeights(2, 1, 0.01)
    for seed in range(5):
        b, _ = total_loss(init(cfg.shape, seed), samples, REACTION, w, ks, cfg.k_encoding)
        assert min(b.phi_bd, b.phi_bn, b.phi_r) >= 0
        assert b.total == w.c1 * b.phi_bd + w.c2 * b.phi_bn + w.c3 * b.phi_r


def test_zero_loss_for_exact_interpolant():
    # u = 1 satisfies the reaction residual; fails Dirichlet only
    cfg, samples, ks = _small_problem(1)
    b, _ = total_loss(constant_net(1.0), samples, REACTION, LossWeights(), ks)
    assert b.phi_r == 0.0 and b.phi_bn == 0.0 and b.phi_bd == 1.0
