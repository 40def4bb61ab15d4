import numpy as np
import pytest

import dsagcn.diffcore as dc
import dsagcn.losses as dl
from dsagcn.diffcore import DiffArray

from helpers import check_gradients, coral_direct, lmmd_loops, mmd_loops, rbf_gram_loops


def arr(x):
    return DiffArray(np.array(x, dtype=np.float64))


def onehot(labels, n_classes):
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ---------------------------------------------------------------- rbf kernel


def test_rbf_zero_distance_single_kernel():
    cfg = dl.KernelConfig(bandwidths=[1.0])
    x = arr([[0.3, -0.7]])
    np.testing.assert_allclose(dl.rbf_gram(x, x, cfg).data, [[1.0]], atol=1e-12)


def test_rbf_unit_distance_closed_form():
    cfg = dl.KernelConfig(bandwidths=[1.0])
    k = dl.rbf_gram(arr([[0.0]]), arr([[1.0]]), cfg)
    np.testing.assert_allclose(k.data, [[np.exp(-1.0)]], rtol=1e-12)


def test_rbf_five_bandwidth_mixture_at_zero_distance():
    cfg = dl.KernelConfig(bandwidths=dl.MKMMD_BANDWIDTHS)
    x = arr([[1.0, 2.0]])
    np.testing.assert_allclose(dl.rbf_gram(x, x, cfg).data, [[5.0]], atol=1e-12)


def test_rbf_matches_loop_oracle_and_symmetry():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 3))
    bws = (0.5, 2.0, 8.0)
    k = dl.rbf_gram(arr(x), arr(x), dl.KernelConfig(bandwidths=bws)).data
    np.testing.assert_allclose(k, rbf_gram_loops(x, x, bws), atol=1e-10)
    np.testing.assert_allclose(k, k.T, atol=1e-12)


def test_rbf_rejects_empty_and_mismatched():
    cfg = dl.KernelConfig(bandwidths=[1.0])
    with pytest.raises(dl.LossError):
        dl.rbf_gram(arr(np.zeros((0, 2))), arr(np.zeros((3, 2))), cfg)
    with pytest.raises(dl.LossError):
        dl.rbf_gram(arr(np.zeros((2, 2))), arr(np.zeros((3, 4))), cfg)


def test_median_heuristic_bandwidths():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
    bws = dl.KernelConfig().resolve(x, y)
    assert len(bws) == 5
    ratios = np.diff(np.log(bws))
    np.testing.assert_allclose(ratios, np.log(2.0), rtol=1e-12)
    pooled = np.concatenate([x, y])
    d2 = ((pooled[:, None] - pooled[None]) ** 2).sum(-1)
    med = np.median(d2[~np.eye(10, dtype=bool)])
    np.testing.assert_allclose(bws[2], med, rtol=1e-12)


# ---------------------------------------------------------------- mmd


def test_mmd_identical_inputs_zero():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 3))
    val = dl.mmd_biased(arr(x), arr(x), dl.KernelConfig(bandwidths=[1.0, 4.0]))
    assert abs(val.item()) < 1e-12


def test_mmd_single_pair_closed_form():
    val = dl.mmd_biased(arr([[0.0]]), arr([[1.0]]), dl.KernelConfig(bandwidths=[1.0]))
    np.testing.assert_allclose(val.item(), 2.0 - 2.0 * np.exp(-1.0), rtol=1e-12)
    assert abs(val.item() - 1.26424) < 1e-5


def test_mmd_matches_loop_oracle():
    rng = np.random.default_rng(3)
    xs, xt = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    bws = (0.5, 2.0)
    val = dl.mmd_biased(arr(xs), arr(xt), dl.KernelConfig(bandwidths=bws))
    np.testing.assert_allclose(val.item(), mmd_loops(xs, xt, bws), atol=1e-10)


def test_mmd_symmetric_and_nonnegative():
    rng = np.random.default_rng(4)
    cfg = dl.KernelConfig(bandwidths=[1.0])
    for _ in range(20):
        xs, xt = rng.normal(size=(5, 2)), rng.normal(size=(7, 2))
        ab = dl.mmd_biased(arr(xs), arr(xt), cfg).item()
        ba = dl.mmd_biased(arr(xt), arr(xs), cfg).item()
        assert abs(ab - ba) < 1e-12
        assert ab >= -1e-12


def test_mkmmd_values():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 2))
    assert abs(dl.mkmmd(arr(x), arr(x)).item()) < 1e-12
    # single pair at squared distance 1
    val = dl.mkmmd(arr([[0.0]]), arr([[1.0]])).item()
    expected = 2 * 5 - 2 * sum(np.exp(-1.0 / b) for b in dl.MKMMD_BANDWIDTHS)
    np.testing.assert_allclose(val, expected, rtol=1e-12)


def test_mkmmd_is_sum_of_single_bandwidth_mmds():
    rng = np.random.default_rng(6)
    xs, xt = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
    total = dl.mkmmd(arr(xs), arr(xt)).item()
    parts = sum(
        dl.mmd_biased(arr(xs), arr(xt), dl.KernelConfig(bandwidths=[b])).item()
        for b in dl.MKMMD_BANDWIDTHS)
    np.testing.assert_allclose(total, parts, atol=1e-12)


# ---------------------------------------------------------------- class weights


def test_class_weights_direct_formula():
    w, present = dl.class_weights([[1, 0], [1, 0], [0, 1]])
    np.testing.assert_allclose(w[:, 0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(w[:, 1], [0.0, 0.0, 1.0])
    assert present.tolist() == [True, True]


def test_class_weights_single_sample():
    w, present = dl.class_weights(onehot([2], 4))
    np.testing.assert_allclose(w[0], [0, 0, 1, 0])


def test_class_weights_absent_class_flagged():
    w, present = dl.class_weights(onehot([0, 0], 3))
    assert present.tolist() == [True, False, False]
    np.testing.assert_allclose(w[:, 1], 0.0)


def test_class_weights_present_columns_sum_to_one():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 3, size=10)
    w, present = dl.class_weights(onehot(labels, 4))
    np.testing.assert_allclose(w[:, present].sum(axis=0), 1.0, atol=1e-12)


def test_class_weights_rejects_negative():
    with pytest.raises(dl.LossError):
        dl.class_weights([[0.5, 0.5], [-0.1, 1.1]], mode="soft")


# ---------------------------------------------------------------- pseudo labels


def test_pseudo_labels_argmax():
    np.testing.assert_allclose(dl.pseudo_labels(np.array([[0.1, 2.0, -1.0]])),
                               [[0, 1, 0]])


def test_pseudo_labels_tie_break():
    np.testing.assert_allclose(dl.pseudo_labels(np.array([[0.0, 0.0, 0.0]])),
                               [[1, 0, 0]])


def test_pseudo_labels_shift_invariant():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(10, 4))
    np.testing.assert_array_equal(dl.pseudo_labels(logits),
                                  dl.pseudo_labels(logits + 3.7))


# ---------------------------------------------------------------- lmmd


def test_lmmd_single_class_reduces_to_mmd():
    rng = np.random.default_rng(9)
    zs, zt = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
    cfg = dl.KernelConfig(bandwidths=[1.0, 3.0])
    v_lmmd = dl.lmmd(arr(zs), arr(zt), onehot([0] * 5, 1), onehot([0] * 6, 1), cfg)
    v_mmd = dl.mmd_biased(arr(zs), arr(zt), cfg)
    assert abs(v_lmmd.item() - v_mmd.item()) < 1e-12


def test_lmmd_identical_labeled_sets_zero():
    rng = np.random.default_rng(10)
    z = rng.normal(size=(6, 2))
    y = onehot([0, 1, 2, 0, 1, 2], 3)
    val = dl.lmmd(arr(z), arr(z), y, y, dl.KernelConfig(bandwidths=[2.0]))
    assert abs(val.item()) < 1e-12


def test_lmmd_matches_loop_oracle():
    rng = np.random.default_rng(11)
    zs, zt = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    ys = onehot(rng.integers(0, 3, 6), 3)
    yt = onehot(rng.integers(0, 3, 6), 3)
    bws = (0.7, 2.5)
    val = dl.lmmd(arr(zs), arr(zt), ys, yt, dl.KernelConfig(bandwidths=bws))
    np.testing.assert_allclose(val.item(), lmmd_loops(zs, zt, ys, yt, bws), atol=1e-10)


def test_lmmd_invariant_to_within_domain_permutation():
    rng = np.random.default_rng(12)
    zs, zt = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
    ys = onehot(rng.integers(0, 2, 6), 2)
    yt = onehot(rng.integers(0, 2, 5), 2)
    cfg = dl.KernelConfig(bandwidths=[1.5])
    base = dl.lmmd(arr(zs), arr(zt), ys, yt, cfg).item()
    ps, pt = rng.permutation(6), rng.permutation(5)
    permuted = dl.lmmd(arr(zs[ps]), arr(zt[pt]), ys[ps], yt[pt], cfg).item()
    np.testing.assert_allclose(permuted, base, atol=1e-12)


def test_lmmd_no_common_class_returns_zero_with_counter():
    dl.reset_lmmd_skipped()
    zs, zt = np.ones((2, 2)), np.ones((2, 2))
    val = dl.lmmd(arr(zs), arr(zt), onehot([0, 0], 2), onehot([1, 1], 2),
                  dl.KernelConfig(bandwidths=[1.0]))
    assert val.item() == 0.0
    assert dl.lmmd_skipped_count() == 1
    dl.reset_lmmd_skipped()


def test_lmmd_averages_over_common_classes_only():
    rng = np.random.default_rng(13)
    zs, zt = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    # class 2 exists only in source: it must not dilute the average
    ys = onehot([0, 0, 1, 2], 3)
    yt = onehot([0, 1, 1, 0], 3)
    bws = (1.0,)
    val = dl.lmmd(arr(zs), arr(zt), ys, yt, dl.KernelConfig(bandwidths=bws)).item()
    np.testing.assert_allclose(val, lmmd_loops(zs, zt, ys, yt, bws), atol=1e-12)


# ---------------------------------------------------------------- coral


def test_coral_identical_zero():
    rng = np.random.default_rng(14)
    z = rng.normal(size=(6, 3))
    assert dl.coral(arr(z), arr(z)).item() == 0.0


def test_coral_closed_form_1d():
    # variances 1 and 0 -> squared difference 1, scaled by 1/4
    zs = arr([[0.0], [2.0]])          # sample variance 2... use unit variance pair
    zs = arr([[-np.sqrt(0.5)], [np.sqrt(0.5)]])
    zt = arr([[1.0], [1.0]])
    np.testing.assert_allclose(dl.coral(zs, zt).item(), 0.25, rtol=1e-12)


def test_coral_matches_direct_recomputation():
    rng = np.random.default_rng(15)
    zs, zt = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    np.testing.assert_allclose(dl.coral(arr(zs), arr(zt)).item(),
                               coral_direct(zs, zt), atol=1e-10)


def test_coral_rejects_tiny_batches():
    with pytest.raises(dl.LossError):
        dl.coral(arr(np.zeros((1, 2))), arr(np.zeros((4, 2))))


# ---------------------------------------------------------------- gradients


def test_divergence_gradients_match_finite_differences():
    rng = np.random.default_rng(16)
    zs = rng.normal(size=(4, 3))
    zt = rng.normal(size=(5, 3))
    ys = onehot(rng.integers(0, 2, 4), 2)
    yt = onehot(rng.integers(0, 2, 5), 2)
    cfg = dl.KernelConfig(bandwidths=[0.8, 2.0])

    check_gradients(lambda a, b: dl.mmd_biased(a, b, cfg), [zs, zt], tol=1e-4)
    check_gradients(lambda a, b: dl.mkmmd(a, b), [zs, zt], tol=1e-4)
    check_gradients(lambda a, b: dl.lmmd(a, b, ys, yt, cfg), [zs, zt], tol=1e-4)
    check_gradients(lambda a, b: dl.coral(a, b), [zs, zt], tol=1e-4)
