import numpy as np
import pytest

from clusterps import codes, gf2
from clusterps.dem import sample_batch


def _commutes(code):
    return not np.any((code.hx.astype(int) @ code.hz.T.astype(int)) % 2)


def test_repetition_d3():
    c = codes.repetition_code(3)
    assert c.hz.tolist() == [[1, 1, 0], [0, 1, 1]]
    assert c.logical_z.tolist() == [[1, 1, 1]]
    assert not np.any((c.hz.astype(int) @ c.logical_z[0].astype(int)) % 2)


def test_repetition_d11_rank():
    assert gf2.rank(codes.repetition_code(11).hz) == 10


@pytest.mark.parametrize("d", [0, 1, 2, 4, 10, 3.0])
def test_invalid_distances(d):
    with pytest.raises(ValueError):
        codes.repetition_code(d)
    with pytest.raises(ValueError):
        codes.rotated_surface_code(d)


@pytest.mark.parametrize("d", [3, 5, 7])
def test_surface_parameters(d):
    c = codes.rotated_surface_code(d)
    assert c.n == d * d
    assert c.hx.shape[0] == c.hz.shape[0] == (d * d - 1) // 2
    assert codes.code_parameters(c) == (d * d, 1)
    assert c.k == 1
    assert _commutes(c)


def test_surface_d5_distance_is_five():
    c = codes.rotated_surface_code(5)
    assert not codes.has_logical_of_weight_at_most(c, 4)
    assert codes.has_logical_of_weight_at_most(c, 5)


@pytest.mark.parametrize("inst,n", [(codes.BB_72_12_6, 72), (codes.BB_144_12_12, 144)])
def test_bivariate_bicycle_parameters(inst, n):
    c = codes.bivariate_bicycle_code(*inst)
    assert codes.code_parameters(c) == (n, 12)
    assert c.k == 12
    assert _commutes(c)
    assert set(c.hx.sum(axis=1)) == {6} and set(c.hz.sum(axis=1)) == {6}


def test_bb72_distance_above_four(bb72_code):
    assert not codes.has_logical_of_weight_at_most(bb72_code, 4)


def test_bb_rejects_bad_monomials():
    with pytest.raises(ValueError):
        codes.bivariate_bicycle_code(6, 6, [(1, 2, 3)], [(0, 1)])
    with pytest.raises(ValueError):
        codes.bivariate_bicycle_code(6, 6, [(-1, 0)], [(0, 1)])


def test_hgp_methods_matrix_is_3_4_regular():
    h = codes.HGP_CLASSICAL_CHECK
    assert h.shape == (9, 12)
    assert set(h.sum(axis=0)) == {3}
    assert set(h.sum(axis=1)) == {4}


def test_hgp_methods_parameters(hgp_code):
    assert codes.code_parameters(hgp_code) == (225, 9)
    assert hgp_code.k == 9
    assert _commutes(hgp_code)


def test_hgp_smallest_product():
    c = codes.hgp_code([[1, 1]], [[1, 1]])
    assert c.n == 5 and _commutes(c)
    assert codes.code_parameters(c) == (5, 1)


def test_hgp_rejects_empty():
    with pytest.raises(ValueError):
        codes.hgp_code(np.zeros((0, 3)), [[1, 1]])


def test_css_spec_checks_commutation():
    with pytest.raises(ValueError):
        codes.CssCodeSpec(hx=[[1, 0]], hz=[[1, 1], [1, 0]], logical_z=[[1, 1]])


def test_phenomenological_rep3_t1():
    m = codes.phenomenological_dem(codes.repetition_code(3), 1, 0.1, 0.0)
    assert m.num_detectors == 2
    assert m.num_mechanisms == 3
    assert m.detectors_of(1).tolist() == [0, 1]


def test_phenomenological_rep3_t2_hand_enumeration():
    m = codes.phenomenological_dem(codes.repetition_code(3), 2, 0.1, 0.2)
    # round 0: qubits 0,1,2 then checks 0,1; round 1: qubits 0,1,2
    cols = [m.detectors_of(j).tolist() for j in range(m.num_mechanisms)]
    assert cols == [[0], [0, 1], [1], [0, 2], [1, 3], [2], [2, 3], [3]]
    assert m.priors.tolist() == [0.1, 0.1, 0.1, 0.2, 0.2, 0.1, 0.1, 0.1]
    assert m.observable_matrix.toarray().tolist() == [[1, 1, 1, 0, 0, 1, 1, 1]]
    assert m.detector_times.tolist() == [0, 0, 1, 1]


def test_phenomenological_omits_zero_probability_mechanisms():
    m = codes.phenomenological_dem(codes.repetition_code(3), 3, 0.1, 0.0)
    assert m.num_mechanisms == 9
    assert codes.phenomenological_dem(codes.repetition_code(3), 3, 0.0, 0.0).num_mechanisms == 0


@pytest.mark.parametrize("builder", [
    lambda: codes.repetition_code(5),
    lambda: codes.rotated_surface_code(3),
    lambda: codes.bivariate_bicycle_code(*codes.BB_72_12_6),
])
@pytest.mark.parametrize("rounds", [1, 3])
def test_phenomenological_structure(builder, rounds):
    code = builder()
    m = codes.phenomenological_dem(code, rounds, 0.01, 0.02)
    n_checks = code.hz.shape[0]
    t = m.detector_times
    assert m.num_rounds == rounds and m.num_observables == code.k
    for j in range(m.num_mechanisms):
        dets = m.detectors_of(j)
        rounds_hit = np.unique(t[dets])
        if m.priors[j] == 0.01:
            # a data error flips exactly its qubit's checks in one round
            assert rounds_hit.size == 1
            q_checks = dets - rounds_hit[0] * n_checks
            assert any(np.array_equal(np.flatnonzero(code.hz[:, q]), q_checks) for q in range(code.n))
        else:
            assert dets.size == 2 and rounds_hit.size == 2 and rounds_hit[1] == rounds_hit[0] + 1
    assert m.num_observables == codes.code_parameters(code)[1]


def test_noiseless_sampling_zero_syndrome():
    for code in (codes.repetition_code(3), codes.rotated_surface_code(3)):
        for rounds in (1, 2, 4):
            m = codes.phenomenological_dem(code, rounds, 0.0, 0.0)
            if m.num_mechanisms == 0:
                continue
            _, s, _ = sample_batch(m, 0, 0, 100)
            assert not s.any()


def test_phenomenological_rejects_bad_arguments():
    c = codes.repetition_code(3)
    with pytest.raises(ValueError):
        codes.phenomenological_dem(c, 0, 0.1, 0.1)
    with pytest.raises(ValueError):
        codes.phenomenological_dem(c, 1, 0.6, 0.1)
    with pytest.raises(ValueError):
        codes.phenomenological_dem(c, 1, 0.1, 0.1, basis="X")
