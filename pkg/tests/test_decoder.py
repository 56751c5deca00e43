import numpy as np
import pytest
from hypothesis import given, strategies as st

from clusterps import codes, gf2, metrics
from clusterps.decoder import BpConfig, BpLsdDecoder, DecodingError, bp_decode, decode, lsd_decode
from clusterps.dem import build_fault_graph, sample_batch
from clusterps.oracle import ml_decode_exhaustive

from conftest import tiny_model


def reference_min_sum(h, prior, syndrome, max_iter, scale=1.0, clamp=50.0):
    """Dense, loop-based flooding min-sum used as an independent check."""
    r, n = h.shape
    prior = np.clip(prior, -clamp, clamp)
    hard = (prior < 0).astype(int)
    if np.array_equal(h @ hard % 2, syndrome):
        return prior.copy(), hard, True
    edges = [(i, j) for i in range(r) for j in range(n) if h[i, j]]
    v2c = {(i, j): prior[j] for i, j in edges}
    c2v = {}
    post = prior.copy()
    for _ in range(max_iter):
        for i in range(r):
            js = [j for j in range(n) if h[i, j]]
            for j in js:
                others = [v2c[(i, k)] for k in js if k != j]
                sign = (-1) ** (syndrome[i] + sum(x < 0 for x in others))
                mag = min([abs(x) for x in others] + [clamp])
                c2v[(i, j)] = sign * scale * mag
        for j in range(n):
            total = prior[j] + sum(c2v[(i, j)] for i in range(r) if h[i, j])
            post[j] = np.clip(total, -clamp, clamp)
            for i in range(r):
                if h[i, j]:
                    v2c[(i, j)] = post[j] - c2v[(i, j)]
        hard = (post < 0).astype(int)
        if np.array_equal(h @ hard % 2, syndrome):
            return post, hard, True
    return post, hard, False


def test_zero_syndrome_fixed_point(rep7_t3):
    post, hard, conv = bp_decode(rep7_t3, np.zeros(rep7_t3.num_detectors, np.uint8))
    assert conv and not hard.any()
    assert np.array_equal(post, rep7_t3.llrs)
    out = decode(rep7_t3, np.zeros(rep7_t3.num_detectors, np.uint8))
    assert out.clusters == [] and not out.correction.any() and not out.predicted_flips.any()


def test_single_mechanism_forced():
    m = tiny_model([[0]], [0.1])
    post, hard, conv = bp_decode(m, [1])
    assert conv and hard.tolist() == [1]
    out = decode(m, [1])
    assert out.correction.tolist() == [1]
    assert len(out.clusters) == 1 and out.clusters[0].mechanisms.tolist() == [0]


def test_bp_config_validation():
    with pytest.raises(ValueError):
        BpConfig(max_iter=0)
    with pytest.raises(ValueError):
        BpConfig(scaling=1.5)
    with pytest.raises(ValueError):
        BpConfig(method="product_sum")


@pytest.mark.parametrize("data_qubit", range(5))
def test_rep5_single_data_error_matches_oracle(data_qubit):
    m = codes.phenomenological_dem(codes.repetition_code(5), 1, 0.05, 0.05)
    fault = np.zeros(m.num_mechanisms, np.uint8)
    fault[data_qubit] = 1
    s = m.syndrome_of(fault)
    post, hard, conv = bp_decode(m, s)
    assert conv
    assert np.array_equal(hard, fault)
    assert np.array_equal(ml_decode_exhaustive(m, s).fault, fault)


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 12))
def test_bp_matches_reference_min_sum(seed, max_iter):
    rng = np.random.default_rng(seed)
    r, n = rng.integers(2, 6), rng.integers(2, 8)
    h = (rng.random((r, n)) < 0.45).astype(np.uint8)
    h[rng.integers(0, r), :] |= (h.sum(axis=0) == 0).astype(np.uint8)
    priors = rng.uniform(0.01, 0.5, size=n)
    m = tiny_model([np.flatnonzero(h[:, j]).tolist() for j in range(n)], priors, num_detectors=r)
    syndrome = rng.integers(0, 2, size=r).astype(np.uint8)
    scale = float(rng.choice([1.0, 0.75]))
    post, hard, conv = bp_decode(m, syndrome, BpConfig(max_iter, scale))
    ref_post, ref_hard, ref_conv = reference_min_sum(h.astype(int), m.llrs, syndrome.astype(int), max_iter, scale)
    assert conv == ref_conv
    assert np.allclose(post, ref_post, rtol=1e-12, atol=1e-12)


def test_small_lsd_example_validity():
    m = tiny_model([[0], [0, 1]], [0.1, 0.1])
    s = np.array([1, 1], np.uint8)
    post, _, _ = bp_decode(m, s)
    clusters = lsd_decode(m, s, post)
    union = np.zeros(2, np.uint8)
    for c in clusters:
        union[c.mechanisms] ^= c.local_solution
    assert np.array_equal(m.syndrome_of(union), s)


def test_inconsistent_syndrome_raises():
    m = tiny_model([[0, 1]], [0.1], num_detectors=2)
    with pytest.raises(DecodingError):
        decode(m, [1, 0])
    with pytest.raises(DecodingError):
        BpLsdDecoder(m).decode_batch(np.array([[0, 0], [1, 0]], np.uint8))


def _check_outcome(model, graph, s, out):
    assert np.array_equal(model.syndrome_of(out.correction), s)
    assert np.array_equal(out.predicted_flips, model.observables_flipped(out.correction))
    seen = set()
    for c in out.clusters:
        members = c.mechanisms.tolist()
        assert members == sorted(members) and c.size == len(members) > 0
        assert not seen & set(members)
        seen |= set(members)
        assert graph.is_connected(members)
        assert c.llr_mass == model.llrs[c.mechanisms].sum()
        rows = np.unique(model.check_matrix[:, c.mechanisms].indices)
        sub = model.check_matrix[rows][:, c.mechanisms].toarray().astype(int)
        assert np.array_equal(sub @ c.local_solution % 2, s[rows])
        assert gf2.in_rowspace(s[rows], sub.T)
    if np.any(s):
        assert out.clusters


def test_rep7_validity_and_cluster_properties(rep7_t3):
    graph = build_fault_graph(rep7_t3)
    dec = BpLsdDecoder(rep7_t3)
    _, syn, _ = sample_batch(rep7_t3, 21, 0, 10_000)
    corr, conv, labels = dec.decode_batch(syn)
    assert np.array_equal(rep7_t3.syndrome_of(corr), syn)
    for i in range(0, 10_000, 5):
        out = dec.decode(syn[i])
        assert np.array_equal(out.correction, corr[i]) and out.bp_converged == conv[i]
        _check_outcome(rep7_t3, graph, syn[i], out)
        lab = labels[i]
        assert sorted(np.unique(lab[lab >= 0]).tolist()) == list(range(len(out.clusters)))
        for k, c in enumerate(out.clusters):
            assert np.flatnonzero(lab == k).tolist() == c.mechanisms.tolist()


def test_surface_and_hgp_validity(surface5_t5, hgp_code):
    hgp = codes.phenomenological_dem(hgp_code, 2, 0.02, 0.02)
    for model in (surface5_t5, hgp):
        graph = build_fault_graph(model)
        dec = BpLsdDecoder(model)
        _, syn, _ = sample_batch(model, 8, 0, 300)
        for s in syn:
            _check_outcome(model, graph, s, dec.decode(s))


def test_forced_lsd_runs_when_bp_converges(rep7_t3):
    dec = BpLsdDecoder(rep7_t3)
    _, syn, _ = sample_batch(rep7_t3, 2, 0, 500)
    n_conv = 0
    for s in syn:
        out = dec.decode(s)
        if out.bp_converged and s.any():
            n_conv += 1
            assert out.clusters
            mcc = dec.decode(s, conv_max_conf=True)
            assert mcc.clusters == []
            assert np.array_equal(mcc.correction, out.correction)
            for spec in ("size:2", "llr:inf", "llr:1"):
                assert metrics.evaluate(metrics.MetricSpec.parse(spec), mcc, rep7_t3) == 0.0
    assert n_conv > 50


def test_determinism(rep7_t3):
    _, syn, _ = sample_batch(rep7_t3, 3, 0, 200)
    a = BpLsdDecoder(rep7_t3).decode_batch(syn)
    b = BpLsdDecoder(rep7_t3).decode_batch(syn)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_monotone_growth_hook(rep7_t3):
    dec = BpLsdDecoder(rep7_t3)
    _, syn, _ = sample_batch(rep7_t3, 17, 0, 300)
    for s in syn:
        post, _, _ = dec.bp(s)
        grown = []
        clusters, _ = dec.lsd(s, post, on_grow=grown.append)
        # every step adds a new mechanism and nothing is ever removed
        assert len(grown) == len(set(grown))
        assert sorted(grown) == sorted(j for c in clusters for j in c.mechanisms.tolist())


def test_growth_prefers_low_posterior_llr():
    # one violated detector touched by three mechanisms; the most likely wins
    m = tiny_model([[0], [0], [0]], [0.1, 0.3, 0.2])
    grown = []
    _, corr = BpLsdDecoder(m).lsd([1], m.llrs, on_grow=grown.append)
    assert grown == [1] and corr.tolist() == [0, 1, 0]


def test_ties_broken_by_lowest_index():
    m = tiny_model([[0], [0], [0]], [0.1, 0.1, 0.1])
    grown = []
    clusters, corr = BpLsdDecoder(m).lsd([1], m.llrs, on_grow=grown.append)
    assert grown == [0] and corr.tolist() == [1, 0, 0]


def test_empty_model_decodes():
    m = codes.phenomenological_dem(codes.repetition_code(3), 2, 0.0, 0.0)
    out = decode(m, np.zeros(m.num_detectors, np.uint8))
    assert out.clusters == [] and out.correction.size == 0
