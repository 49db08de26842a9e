"""Representation learning: losses, gradients, K-means, and training."""
from __future__ import annotations

import numpy as np
import pytest

from oodkit.datamodel import EmbeddingSet
from oodkit.errors import DataError
from oodkit.replearn import (
    AdamOptimizer,
    EncoderHead,
    EncoderState,
    SgdOptimizer,
    TrainConfig,
    cluster_loss,
    contrastive_loss,
    embed_corpus,
    head_forward,
    init_state,
    joint_loss,
    joint_loss_and_grads,
    kmeans,
    kmeans_assign,
    project,
    sample_dropout_mask,
    soft_assign,
    target_distribution,
    train,
)


def small_state(base_dim=5, k=3, seed=0, **cfg_kwargs) -> tuple[EncoderState, TrainConfig]:
    cfg = TrainConfig(k=k, batch_size=4, seed=seed, **cfg_kwargs)
    rng = np.random.default_rng(seed)
    state = init_state(base_dim, cfg, rng)
    state.centroids[:] = rng.normal(size=state.centroids.shape)
    return state, cfg


# ---------------------------------------------------------------------------
# config and initialization


def test_train_config_validation():
    with pytest.raises(DataError, match="tau"):
        TrainConfig(k=2, tau=0.0)
    with pytest.raises(DataError, match="alpha"):
        TrainConfig(k=2, alpha=-1.0)
    with pytest.raises(DataError, match="gamma"):
        TrainConfig(k=2, gamma=-0.5)
    with pytest.raises(DataError, match="dropout"):
        TrainConfig(k=2, dropout=1.0)
    with pytest.raises(DataError, match="batch_size"):
        TrainConfig(k=2, batch_size=1)
    with pytest.raises(DataError, match="k must be >= 2"):
        TrainConfig(k=1)
    with pytest.raises(DataError, match="optimizer"):
        TrainConfig(k=2, optimizer="rmsprop")
    with pytest.raises(DataError, match="epochs"):
        TrainConfig(k=2, epochs=-1)
    # single-cluster config is fine once the clustering loss is off
    TrainConfig(k=1, cluster_loss_on=False)
    # batch of one is fine once the contrastive loss is off
    TrainConfig(k=2, batch_size=1, cl_loss_on=False)


def test_init_state_default_and_custom_dims():
    cfg = TrainConfig(k=3)
    state = init_state(7, cfg, np.random.default_rng(0))
    assert state.head.w1.shape == (7, 7)
    assert state.head.w2.shape == (7, 7)
    assert state.projection.w3.shape == (7, 7)
    assert state.projection.w4.shape == (7, 7)
    assert state.centroids.shape == (3, 7)

    cfg = TrainConfig(k=2, hidden_dim=11, out_dim=4, proj_hidden_dim=9, proj_dim=3)
    state = init_state(7, cfg, np.random.default_rng(0))
    assert state.head.w1.shape == (7, 11)
    assert state.head.w2.shape == (11, 4)
    assert state.projection.w3.shape == (4, 9)
    assert state.projection.w4.shape == (9, 3)
    assert state.centroids.shape == (2, 4)

    with pytest.raises(DataError, match="out_dim and proj_dim"):
        init_state(7, TrainConfig(k=2, out_dim=1), np.random.default_rng(0))


def test_init_is_seed_deterministic():
    cfg = TrainConfig(k=2)
    a = init_state(6, cfg, np.random.default_rng(9))
    b = init_state(6, cfg, np.random.default_rng(9))
    for name, arr in a.parameters().items():
        assert np.array_equal(arr, b.parameters()[name])


# ---------------------------------------------------------------------------
# forward passes


def test_zero_input_zero_biases_gives_zero_output():
    rng = np.random.default_rng(0)
    head = EncoderHead(
        w1=rng.normal(size=(4, 6)),
        b1=np.zeros(6),
        w2=rng.normal(size=(6, 3)),
        b2=np.zeros(3),
    )
    out = head_forward(head, np.zeros(4))
    assert np.array_equal(out, np.zeros(3))


def test_head_forward_single_matches_batch():
    # single-row and batched matrix products may differ in the last ulp
    state, _ = small_state()
    x = np.random.default_rng(1).normal(size=(3, 5))
    batch = head_forward(state.head, x)
    for i in range(3):
        np.testing.assert_allclose(
            head_forward(state.head, x[i]), batch[i], rtol=1e-12, atol=1e-15
        )


def test_head_forward_validation():
    state, _ = small_state()
    with pytest.raises(DataError, match="input dim"):
        head_forward(state.head, np.zeros(4))
    with pytest.raises(DataError, match="unknown forward mode"):
        head_forward(state.head, np.zeros(5), mode="weird")
    with pytest.raises(DataError, match="random generator"):
        head_forward(state.head, np.zeros(5), mode="stochastic")


def test_stochastic_forward_without_dropout_is_deterministic():
    state, _ = small_state(dropout=0.0)
    state.head.dropout = 0.0
    x = np.random.default_rng(2).normal(size=(4, 5))
    stoch = head_forward(state.head, x, mode="stochastic", rng=np.random.default_rng(0))
    det = head_forward(state.head, x, mode="deterministic")
    assert np.array_equal(stoch, det)


def test_dropout_mask_is_inverted_and_unbiased():
    rng = np.random.default_rng(0)
    mask = sample_dropout_mask(rng, (2000, 50), 0.1)
    values = set(np.unique(mask).tolist())
    assert values == {0.0, 1.0 / 0.9}
    assert abs((mask == 0).mean() - 0.1) < 0.01
    assert np.array_equal(sample_dropout_mask(rng, (3, 3), 0.0), np.ones((3, 3)))


def test_projection_uses_smooth_nonlinearity():
    state, _ = small_state()
    e = np.random.default_rng(3).normal(size=(4, 5))
    z = project(state.projection, e)
    assert z.shape == (4, 5)
    assert np.isfinite(z).all()


# ---------------------------------------------------------------------------
# k-means


def test_kmeans_hand_case():
    points = np.array([[0.0], [1.0], [10.0], [11.0]])
    centroids = kmeans(points, 2, seed=0)
    assert sorted(centroids.ravel().tolist()) == [0.5, 10.5]


def test_kmeans_validation_and_degenerate_data():
    with pytest.raises(DataError, match="at least k"):
        kmeans(np.zeros((2, 3)), 5)
    with pytest.raises(DataError, match="(n, d)"):
        kmeans(np.zeros(4), 2)
    same = np.ones((6, 2))
    centroids = kmeans(same, 2, seed=0)
    assert np.allclose(centroids, 1.0)


def test_kmeans_is_seed_deterministic():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(40, 3))
    a = kmeans(points, 4, seed=7)
    b = kmeans(points, 4, seed=7)
    assert np.array_equal(a, b)


def test_kmeans_multi_start_never_worse_than_single():
    rng = np.random.default_rng(6)
    points = np.concatenate([rng.normal(loc=c, size=(20, 2)) for c in (0, 5, 10)])

    def inertia(centroids):
        d = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        return d.min(axis=1).sum()

    multi = inertia(kmeans(points, 3, seed=1, n_init=10))
    single = inertia(kmeans(points, 3, seed=1, n_init=1))
    assert multi <= single + 1e-9


def test_kmeans_assign_picks_nearest():
    centroids = np.array([[0.0, 0.0], [10.0, 0.0]])
    points = np.array([[1.0, 0.0], [9.0, 0.0], [4.0, 0.0]])
    assert kmeans_assign(points, centroids).tolist() == [0, 1, 0]


# ---------------------------------------------------------------------------
# clustering objective


def test_soft_assign_hand_case():
    q = soft_assign(np.array([0.0, 0.0]), np.array([[0.0, 0.0], [2.0, 0.0]]), alpha=1.0)
    assert np.allclose(q, [5 / 6, 1 / 6], atol=1e-12)


def test_soft_assign_rows_sum_to_one_and_stay_stable():
    rng = np.random.default_rng(0)
    e = rng.normal(scale=100.0, size=(40, 6))  # large distances must not overflow
    mu = rng.normal(size=(5, 6))
    q = soft_assign(e, mu)
    assert np.allclose(q.sum(axis=1), 1.0, atol=1e-12)
    assert (q > 0).all()


def test_soft_assign_validation():
    with pytest.raises(DataError, match="alpha"):
        soft_assign(np.zeros(2), np.zeros((2, 2)), alpha=0.0)
    with pytest.raises(DataError, match="dim"):
        soft_assign(np.zeros(3), np.zeros((2, 2)))


def test_target_distribution_hand_case():
    p = target_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]))
    assert np.allclose(p, [[0.972, 0.028], [0.3, 0.7]], atol=1e-9)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_target_distribution_single_row_is_identity():
    q = np.array([[0.2, 0.5, 0.3]])
    p = target_distribution(q)
    assert np.array_equal(p, q)
    assert p is not q
    with pytest.raises(DataError, match="\\(M, K\\)"):
        target_distribution(np.array([0.5, 0.5]))


def test_cluster_loss_hand_case():
    p = np.array([[0.972, 0.028], [0.3, 0.7]])
    q = np.array([[0.9, 0.1], [0.5, 0.5]])
    assert cluster_loss(p, q) == pytest.approx(0.06072298578330376, abs=1e-12)


def test_cluster_loss_zero_iff_equal():
    p = np.array([[0.25, 0.75], [0.6, 0.4]])
    assert cluster_loss(p, p.copy()) == 0.0
    q = np.array([[0.3, 0.7], [0.6, 0.4]])
    assert cluster_loss(p, q) > 1e-12
    with pytest.raises(DataError, match="same shape"):
        cluster_loss(p, q[:1])


def test_cluster_loss_clamps_zero_assignment():
    p = np.array([[1.0, 0.0]])
    q = np.array([[0.0, 1.0]])
    with pytest.warns(UserWarning, match="clamped"):
        value = cluster_loss(p, q)
    assert np.isfinite(value) and value > 0


# ---------------------------------------------------------------------------
# contrastive objective


def test_contrastive_loss_orthogonal_pairs_hand_case():
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    expected = np.log(1.0 + 2.0 * np.exp(-2.0))
    assert contrastive_loss(z, tau=0.5) == pytest.approx(expected, abs=1e-12)


def test_contrastive_loss_is_scale_invariant():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(8, 4))
    assert contrastive_loss(z, 0.5) == pytest.approx(
        contrastive_loss(3.0 * z, 0.5), abs=1e-12
    )


def test_contrastive_loss_symmetric_under_pair_swap():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 3))
    swapped = z.copy()
    swapped[0::2], swapped[1::2] = z[1::2].copy(), z[0::2].copy()
    assert contrastive_loss(z, 0.7) == pytest.approx(
        contrastive_loss(swapped, 0.7), abs=1e-12
    )


def test_contrastive_loss_validation():
    with pytest.raises(DataError, match="tau"):
        contrastive_loss(np.ones((4, 2)), 0.0)
    with pytest.raises(DataError, match="paired rows"):
        contrastive_loss(np.ones((3, 2)), 0.5)
    with pytest.raises(DataError, match="zero-norm"):
        contrastive_loss(np.array([[1.0, 0.0], [0.0, 0.0]]), 0.5)


# ---------------------------------------------------------------------------
# joint objective


def test_joint_loss_composes_terms():
    rng = np.random.default_rng(2)
    q = soft_assign(rng.normal(size=(4, 3)), rng.normal(size=(2, 3)))
    p = target_distribution(q)
    z = rng.normal(size=(8, 3))
    cfg = TrainConfig(k=2, gamma=0.7, tau=0.5, batch_size=4)
    expected = cluster_loss(p, q) + 0.7 * contrastive_loss(z, 0.5)
    assert joint_loss(p, q, z, cfg) == pytest.approx(expected, abs=1e-12)
    only_cluster = TrainConfig(k=2, gamma=0.7, batch_size=4, cl_loss_on=False)
    assert joint_loss(p, q, z, only_cluster) == pytest.approx(
        cluster_loss(p, q), abs=1e-12
    )
    zero_gamma = TrainConfig(k=2, gamma=0.0, batch_size=4)
    assert joint_loss(p, q, z, zero_gamma) == pytest.approx(
        cluster_loss(p, q), abs=1e-12
    )


def test_joint_loss_and_grads_aux_consistency():
    state, cfg = small_state(gamma=0.5)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5))
    m0 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    m1 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    loss, grads, aux = joint_loss_and_grads(state, x, m0, m1, cfg)
    assert loss == pytest.approx(
        aux["cluster_loss"] + cfg.gamma * aux["contrastive_loss"], abs=1e-12
    )
    assert set(grads) == set(state.parameters())
    assert np.allclose(aux["q"].sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(aux["p"].sum(axis=1), 1.0, atol=1e-12)


def fd_check(state, cfg, x, m0, m1, probes=3, h=1e-4) -> float:
    """Max relative error between analytic and central-difference gradients,
    with the target distribution and dropout masks frozen."""
    _, grads, aux = joint_loss_and_grads(state, x, m0, m1, cfg)
    frozen_p = aux.get("p")
    worst = 0.0
    probe_rng = np.random.default_rng(1234)
    for name, arr in state.parameters().items():
        flat = arr.ravel()
        idx = probe_rng.choice(flat.size, size=min(probes, flat.size), replace=False)
        for i in idx:
            original = flat[i]
            flat[i] = original + h
            up = joint_loss_and_grads(state, x, m0, m1, cfg, target_p=frozen_p)[0]
            flat[i] = original - h
            down = joint_loss_and_grads(state, x, m0, m1, cfg, target_p=frozen_p)[0]
            flat[i] = original
            fd = (up - down) / (2 * h)
            an = grads[name].ravel()[i]
            worst = max(worst, abs(an - fd) / max(1.0, abs(an), abs(fd)))
    return worst


@pytest.mark.parametrize(
    "cfg_kwargs",
    [
        dict(),  # joint objective
        dict(cl_loss_on=False),  # clustering term alone
        dict(cluster_loss_on=False),  # contrastive term alone
        dict(deterministic_q=True),  # assignment from the deterministic pass
        dict(gamma=1.7, tau=0.3),
    ],
)
def test_gradients_match_finite_differences(cfg_kwargs):
    state, cfg = small_state(seed=11, **cfg_kwargs)
    rng = np.random.default_rng(11)
    x = rng.normal(size=(4, 5)) * 2.0
    m0 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    m1 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    assert fd_check(state, cfg, x, m0, m1) <= 1e-5


def test_centroid_gradients_flow_only_through_assignment():
    state, cfg = small_state(cluster_loss_on=False)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 5))
    m0 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    m1 = sample_dropout_mask(rng, (4, state.head.hidden_dim), cfg.dropout)
    _, grads, _ = joint_loss_and_grads(state, x, m0, m1, cfg)
    # with the clustering term ablated the centroids receive no gradient
    assert np.array_equal(grads["mu"], np.zeros_like(state.centroids))


# ---------------------------------------------------------------------------
# optimizers


def test_adam_single_step_matches_formula():
    p = {"w": np.array([1.0])}
    opt = AdamOptimizer(p, lr=0.01)
    g = np.array([0.5])
    opt.step({"w": g.copy()})
    mhat = g  # bias correction cancels the (1 - beta) factors at t = 1
    vhat = g * g
    expected = 1.0 - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
    assert p["w"][0] == pytest.approx(expected[0], abs=1e-15)


def test_sgd_single_step():
    p = {"w": np.array([2.0])}
    SgdOptimizer(p, lr=0.1).step({"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(1.9, abs=1e-15)


# ---------------------------------------------------------------------------
# training loop


def test_zero_epochs_returns_initial_parameters():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 6))
    cfg = TrainConfig(k=3, epochs=0, batch_size=8, seed=5)
    state = train(x, cfg)
    reference = init_state(6, cfg, np.random.default_rng(5))
    for name in ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4"):
        assert np.array_equal(state.parameters()[name], reference.parameters()[name])
    assert state.loss_trace == []
    # centroids are K-means over the deterministic forward of the inputs
    assert state.centroids.shape == (3, 6)


def test_train_is_deterministic_and_decreases_loss():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(loc=c, size=(30, 4)) for c in (-3, 3)])
    cfg = TrainConfig(k=2, epochs=5, batch_size=10, seed=2)
    a = train(x, cfg)
    b = train(x, cfg)
    for name, arr in a.parameters().items():
        assert np.array_equal(arr, b.parameters()[name])
    assert a.loss_trace == b.loss_trace
    assert len(a.loss_trace) == 5 * 6
    head = np.mean(a.loss_trace[:6])
    tail = np.mean(a.loss_trace[-6:])
    assert tail < head


def test_train_accepts_embedding_set_and_embed_corpus_preserves_ids():
    rng = np.random.default_rng(2)
    ids = tuple(f"r{i}" for i in range(24))
    emb = EmbeddingSet(ids, rng.normal(size=(24, 4)))
    cfg = TrainConfig(k=2, epochs=1, batch_size=8, seed=0)
    state = train(emb, cfg)
    adapted = embed_corpus(state, emb)
    assert adapted.ids == ids
    assert np.array_equal(adapted.vectors, state.embed(emb.vectors))
    # deterministic map: same input, same output
    assert np.array_equal(state.embed(emb.vectors), state.embed(emb.vectors))


def test_train_requires_enough_points():
    with pytest.raises(DataError, match="training points"):
        train(np.zeros((3, 4)), TrainConfig(k=2, batch_size=8))


def test_train_with_sgd_runs():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(20, 3))
    state = train(x, TrainConfig(k=2, epochs=1, batch_size=5, optimizer="sgd"))
    assert len(state.loss_trace) == 4


def test_encoder_state_round_trip_is_exact():
    state, _ = small_state(seed=8)
    state.loss_trace.extend([0.5, 0.25])
    back = EncoderState.from_dict(state.to_dict())
    for name, arr in state.parameters().items():
        assert np.array_equal(arr, back.parameters()[name])
    assert back.loss_trace == [0.5, 0.25]
    assert back.config == state.config
    x = np.random.default_rng(0).normal(size=(3, 5))
    assert np.array_equal(state.embed(x), back.embed(x))
