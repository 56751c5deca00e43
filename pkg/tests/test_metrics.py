import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clusterps import codes
from clusterps.decoder import BpLsdDecoder, Cluster, DecodeOutcome
from clusterps.dem import sample_batch
from clusterps.metrics import (
    MetricSpec, cluster_llr_norm_fraction, cluster_size_norm_fraction, correction_weight, detector_density,
    evaluate, evaluate_batch, parse_alpha, parse_metric_list,
)
from clusterps.oracle import metric_reference

from conftest import tiny_model

E10 = np.arange(10)


def test_size_examples():
    assert cluster_size_norm_fraction([], E10, 2) == 0.0
    assert cluster_size_norm_fraction([E10], E10, 3.5) == 1.0
    assert cluster_size_norm_fraction([E10], E10, math.inf) == 1.0
    assert cluster_size_norm_fraction([[0, 1], [2, 3, 4]], E10, 2) == pytest.approx(math.sqrt(13) / 10, abs=1e-15)
    assert cluster_size_norm_fraction([[0, 1], [2, 3, 4]], E10, math.inf) == 0.3


def test_llr_examples():
    llrs = np.array([1.0, 2.0] + [7.0 / 8] * 8)
    assert cluster_llr_norm_fraction([], E10, 2, llrs) == 0.0
    assert cluster_llr_norm_fraction([[0], [1]], E10, 1, llrs) == pytest.approx(0.3, abs=1e-15)


def test_weight_and_density_examples():
    assert correction_weight(np.zeros(3), np.ones(3)) == 0.0
    assert correction_weight([1], [math.log(99)]) == pytest.approx(4.59512, abs=1e-5)
    assert correction_weight([1, 1, 0], [0.0, 0.0, 0.0]) == 0.0
    assert detector_density(np.zeros(12)) == 0.0
    assert detector_density(np.ones(12)) == 1.0
    assert detector_density([1, 1, 1] + [0] * 9) == 0.25
    with pytest.raises(ValueError):
        detector_density([])


def test_errors():
    with pytest.raises(ValueError):
        cluster_size_norm_fraction([[0]], [], 2)
    with pytest.raises(ValueError):
        cluster_llr_norm_fraction([[0]], [0], 2, [0.0])
    with pytest.raises(ValueError):
        cluster_size_norm_fraction([[0]], [0], 0)
    with pytest.raises(ValueError):
        MetricSpec("cluster_size")
    with pytest.raises(ValueError):
        MetricSpec("cluster_llr", -1.0)


def test_sub_unit_alpha_exceeds_one():
    # (sum x_i^a)^(1/a) >= sum x_i for a < 1, so k equal clusters give k^(1/a - 1) * total fraction
    clusters = [[i] for i in range(5)]
    assert cluster_size_norm_fraction(clusters, E10, 0.5) == pytest.approx(25 / 10)
    assert cluster_size_norm_fraction(clusters, E10, 1) == pytest.approx(0.5)


def test_restriction_intersects_and_drops_empty_clusters():
    clusters = [[0, 1, 5], [6, 7]]
    restriction = [0, 1, 2, 3]
    assert cluster_size_norm_fraction(clusters, restriction, 1) == 0.5
    assert cluster_size_norm_fraction([[6, 7]], restriction, 1) == 0.0


@pytest.mark.parametrize("text,family,alpha,label", [
    ("size:2", "cluster_size", 2.0, "size:2"),
    ("llr:inf", "cluster_llr", math.inf, "llr:inf"),
    ("llr:0.5", "cluster_llr", 0.5, "llr:0.5"),
    ("weight", "correction_weight", None, "weight"),
    ("density", "detector_density", None, "density"),
])
def test_spec_parsing(text, family, alpha, label):
    spec = MetricSpec.parse(text)
    assert (spec.family, spec.alpha, spec.label) == (family, alpha, label)


@pytest.mark.parametrize("text", ["size", "llr:0", "llr:-1", "weight:2", "gap", "size:abc"])
def test_spec_parsing_errors(text):
    with pytest.raises(ValueError):
        MetricSpec.parse(text)


def test_parse_list_and_alpha():
    assert [s.label for s in parse_metric_list("size:2,llr:2,llr:inf,weight,density")] == [
        "size:2", "llr:2", "llr:inf", "weight", "density"]
    assert parse_alpha("INF") == math.inf


cluster_sets = st.lists(st.lists(st.integers(0, 29), min_size=1, max_size=8, unique=True), max_size=6)


def _disjoint(clusters):
    seen, out = set(), []
    for c in clusters:
        c = [j for j in c if j not in seen]
        seen |= set(c)
        if c:
            out.append(c)
    return out


@given(cluster_sets, st.floats(0.01, 0.49))
def test_uniform_prior_identity(clusters, p):
    clusters = _disjoint(clusters)
    llrs = np.full(30, math.log((1 - p) / p))
    universe = np.arange(30)
    for alpha in (0.5, 1.0, 2.0, 3.0, math.inf):
        a = cluster_llr_norm_fraction(clusters, universe, alpha, llrs)
        b = cluster_size_norm_fraction(clusters, universe, alpha)
        assert a == pytest.approx(b, rel=1e-12, abs=0)


@given(cluster_sets, st.lists(st.floats(0.0, 12.0), min_size=30, max_size=30))
def test_alpha_monotone_and_range(clusters, llr_list):
    clusters = _disjoint(clusters)
    llrs = np.array(llr_list) + 1e-3
    universe = np.arange(30)
    alphas = [0.5, 1, 1.5, 2, 4, 8, math.inf]
    for fn in (lambda a: cluster_size_norm_fraction(clusters, universe, a),
               lambda a: cluster_llr_norm_fraction(clusters, universe, a, llrs)):
        vals = [fn(a) for a in alphas]
        assert all(0 <= v <= 1 + 1e-12 for v in vals[1:])
        assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))


@given(cluster_sets, st.lists(st.integers(0, 29), min_size=1, max_size=30, unique=True))
def test_metric_depends_only_on_intersection(clusters, restriction):
    clusters = _disjoint(clusters)
    trimmed = [[j for j in c if j in restriction] for c in clusters]
    for alpha in (1, 2, math.inf):
        assert cluster_size_norm_fraction(clusters, restriction, alpha) == cluster_size_norm_fraction(
            trimmed, restriction, alpha)


def _random_outcomes(rng, model, count):
    n = model.num_mechanisms
    for _ in range(count):
        labels = rng.integers(-1, 4, size=n)
        clusters = []
        for k in range(4):
            members = np.flatnonzero(labels == k)
            if members.size:
                clusters.append(Cluster(members, float(model.llrs[members].sum()), np.zeros(members.size, np.uint8)))
        corr = rng.integers(0, 2, size=n).astype(np.uint8)
        syn = rng.integers(0, 2, size=model.num_detectors).astype(np.uint8)
        yield DecodeOutcome(corr, False, model.llrs.copy(), clusters, model.observables_flipped(corr), syn)


def test_evaluate_matches_reference_on_random_outcomes(rng):
    model = codes.phenomenological_dem(codes.repetition_code(5), 3, 0.03, 0.08)
    z = np.arange(0, model.num_mechanisms, 2)
    specs = parse_metric_list("size:2,size:inf,llr:1,llr:2,llr:inf,weight,density")
    specs += [s.restricted_to(z) for s in specs if s.is_cluster]
    for out in _random_outcomes(rng, model, 1000):
        for spec in specs:
            assert evaluate(spec, out, model) == pytest.approx(metric_reference(out, model, spec), rel=1e-12, abs=1e-15)


def test_evaluate_dispatch_examples(rep7_t3):
    zero = np.zeros(rep7_t3.num_detectors, np.uint8)
    out = BpLsdDecoder(rep7_t3).decode(zero)
    assert evaluate(MetricSpec.parse("density"), out, rep7_t3) == 0.0
    assert evaluate(MetricSpec.parse("llr:2"), out, rep7_t3) == 0.0


def test_batch_matches_single_shot(rep7_t3):
    dec = BpLsdDecoder(rep7_t3)
    _, syn, _ = sample_batch(rep7_t3, 6, 0, 400)
    corr, _, labels = dec.decode_batch(syn)
    restriction = np.arange(0, rep7_t3.num_mechanisms, 3)
    specs = parse_metric_list("size:2,size:inf,llr:0.5,llr:inf,weight,density")
    specs += [s.restricted_to(restriction) for s in specs if s.is_cluster]
    batch = evaluate_batch(specs, rep7_t3, labels, corr, syn)
    for i in range(syn.shape[0]):
        out = dec.decode(syn[i])
        for m, spec in enumerate(specs):
            assert batch[i, m] == pytest.approx(evaluate(spec, out, rep7_t3), rel=1e-12, abs=1e-15)
