import math

import numpy as np
import pytest

import oracles
from hner.autograd import Tape, Tensor, backward
from hner.crf import (
    CrfParameters,
    LabelScheme,
    build_constraint_mask,
    log_partition,
    nll_loss,
    score_sequence,
    viterbi_decode,
)
from hner.numeric import finite_difference_gradient, relative_error


def random_crf(rng, W, L, requires_grad=False):
    e = Tensor(rng.normal(size=(W, L)), requires_grad=requires_grad)
    crf = CrfParameters(*(Tensor(rng.normal(size=s), requires_grad=requires_grad)
                          for s in ((L, L), (L,), (L,))))
    return e, crf


def test_scheme_layout():
    assert LabelScheme.from_tags(["B-Task", "O", "I-Method"]).entity_types == ["Method", "Task"]
    s = LabelScheme(["Method", "Task"])
    assert s.labels == ["O", "B-Method", "I-Method", "B-Task", "I-Task"]
    assert s.encode(["O", "B-Task", "I-Task"]) == [0, 3, 4]
    assert s.decode([1, 2]) == ["B-Method", "I-Method"]
    with pytest.raises(ValueError):
        s.encode(["B-Other"])


def test_single_type_mask():
    s = LabelScheme(["X"])
    m = build_constraint_mask(s)
    o, i = 0, 2  # B-X is 1
    assert m.disallowed_pairs() == [(o, i)]
    assert list(m.allowed_start) == [True, True, False]
    assert m.allowed_end.all()


def test_two_type_mask():
    s = LabelScheme(["X", "Y"])
    m = build_constraint_mask(s)
    ids = s.label_to_id
    assert not m.allowed_transition[ids["B-X"], ids["I-Y"]]
    assert m.allowed_transition[ids["B-X"], ids["B-Y"]]
    assert m.allowed_transition[ids["I-X"], ids["I-X"]]
    assert m.allowed_transition[ids["O"], ids["O"]]


@pytest.mark.parametrize("T", [1, 2, 3, 4])
def test_disallowed_pair_count(T):
    scheme = LabelScheme([f"t{k}" for k in range(T)])
    labels = scheme.labels
    # I-t may only follow B-t or I-t
    count = sum(
        1 for a in labels for b in labels
        if b.startswith("I-") and a not in ("B-" + b[2:], "I-" + b[2:])
    )
    assert count == T * (2 * T - 1)
    assert len(build_constraint_mask(scheme).disallowed_pairs()) == count


def test_score_zero_parameters():
    e, crf = np.zeros((3, 4)), CrfParameters.zeros(4)
    assert float(score_sequence(e, crf, [1, 3, 0])) == 0.0


def test_score_single_position():
    rng = np.random.default_rng(0)
    e, crf = random_crf(rng, 1, 3)
    expected = crf.start.data[2] + e.data[0, 2] + crf.end.data[2]
    assert float(score_sequence(e, crf, [2])) == pytest.approx(expected, abs=1e-15)


def test_score_matches_term_by_term():
    rng = np.random.default_rng(1)
    e, crf = random_crf(rng, 4, 3)
    path = [0, 2, 2, 1]
    ref = oracles.path_score(e.data, crf.transitions.data, crf.start.data, crf.end.data, path)
    assert float(score_sequence(e, crf, path)) == pytest.approx(ref, abs=1e-13)


def test_score_errors():
    with pytest.raises(ValueError):
        score_sequence(np.zeros((3, 2)), CrfParameters.zeros(2), [0, 1])
    with pytest.raises(ValueError):
        score_sequence(np.zeros((2, 2)), CrfParameters.zeros(2), [0, 2])


@pytest.mark.parametrize("W,L", [(1, 1), (3, 2), (5, 4)])
def test_uniform_partition(W, L):
    assert float(log_partition(np.zeros((W, L)), CrfParameters.zeros(L))) == pytest.approx(W * math.log(L))


def test_partition_single_step():
    rng = np.random.default_rng(2)
    e, crf = random_crf(rng, 1, 4)
    ref = oracles.mp_logsumexp(crf.start.data + e.data[0] + crf.end.data)
    assert float(log_partition(e, crf)) == pytest.approx(ref, abs=1e-13)


def test_partition_against_1024_paths():
    rng = np.random.default_rng(3)
    e, crf = random_crf(rng, 5, 4)
    ref = oracles.brute_log_partition(e.data, crf.transitions.data, crf.start.data, crf.end.data)
    assert float(log_partition(e, crf)) == pytest.approx(ref, abs=1e-10)


def test_masked_partition_sums_valid_paths_only():
    rng = np.random.default_rng(4)
    scheme = LabelScheme(["X", "Y"])
    e, crf = random_crf(rng, 4, 5)
    scores = [
        oracles.path_score(e.data, crf.transitions.data, crf.start.data, crf.end.data, p)
        for p in oracles.all_paths(4, 5)
        if oracles.bio_valid(scheme.decode(p))
    ]
    ref = math.log(math.fsum(math.exp(s) for s in scores))
    got = float(log_partition(e, crf, build_constraint_mask(scheme)))
    assert got == pytest.approx(ref, abs=1e-10)


def test_path_probabilities_sum_to_one():
    rng = np.random.default_rng(5)
    for _ in range(20):
        W, L = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        e, crf = random_crf(rng, W, L)
        z = float(log_partition(e, crf))
        total = math.fsum(math.exp(float(score_sequence(e, crf, list(p))) - z)
                          for p in oracles.all_paths(W, L))
        assert abs(total - 1.0) < 1e-9


def test_nll_single_label_is_zero():
    rng = np.random.default_rng(6)
    e, crf = random_crf(rng, 4, 1)
    assert float(nll_loss(e, crf, [0, 0, 0, 0])) == pytest.approx(0.0, abs=1e-12)


def test_nll_uniform():
    assert float(nll_loss(np.zeros((2, 3)), CrfParameters.zeros(3), [1, 2])) == pytest.approx(2 * math.log(3))


def test_nll_is_composition_of_oracles_and_nonnegative():
    rng = np.random.default_rng(7)
    for _ in range(30):
        W, L = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        e, crf = random_crf(rng, W, L)
        gold = [int(y) for y in rng.integers(0, L, W)]
        args = (e.data, crf.transitions.data, crf.start.data, crf.end.data)
        ref = oracles.brute_log_partition(*args) - oracles.path_score(*args, gold)
        got = float(nll_loss(e, crf, gold))
        assert got == pytest.approx(ref, abs=1e-10)
        assert got >= -1e-9


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("masked", [False, True])
def test_nll_gradients(seed, masked):
    rng = np.random.default_rng(seed)
    scheme = LabelScheme(["X", "Y"])
    W = int(rng.integers(1, 6))
    e, crf = random_crf(rng, W, 5, requires_grad=True)
    gold = scheme.encode(["O"] * W)
    mask = build_constraint_mask(scheme) if masked else None
    leaves = [e, crf.transitions, crf.start, crf.end]
    with Tape() as tape:
        loss = nll_loss(e, crf, gold, mask)
    backward(loss, tape)
    fd = finite_difference_gradient(lambda: float(nll_loss(e, crf, gold, mask)), leaves)
    for t, g in zip(leaves, fd):
        assert relative_error(t.grad, g) < 1e-4


def test_shift_invariance():
    rng = np.random.default_rng(8)
    e, crf = random_crf(rng, 4, 3)
    gold = [0, 1, 2, 0]
    shifted = e.data.copy()
    shifted[2] += 7.5
    assert float(log_partition(shifted, crf)) == pytest.approx(float(log_partition(e, crf)) + 7.5, abs=1e-9)
    assert float(nll_loss(shifted, crf, gold)) == pytest.approx(float(nll_loss(e, crf, gold)), abs=1e-9)
    assert viterbi_decode(shifted, crf)[0] == viterbi_decode(e, crf)[0]


def test_viterbi_single_label():
    path, score = viterbi_decode(np.array([[1.0], [2.0]]), CrfParameters.zeros(1))
    assert path == [0, 0] and score == 3.0


def test_viterbi_start_constraint():
    scheme = LabelScheme(["X"])
    e = np.array([[0.0, 1.0, 9.0], [5.0, 0.0, 0.0]])
    crf = CrfParameters.zeros(3)
    assert viterbi_decode(e, crf)[0][0] == 2
    path, _ = viterbi_decode(e, crf, build_constraint_mask(scheme))
    assert scheme.decode(path) == ["B-X", "O"]


def test_viterbi_tie_breaks_to_lowest_id():
    path, _ = viterbi_decode(np.zeros((3, 3)), CrfParameters.zeros(3))
    assert path == [0, 0, 0]


def test_viterbi_score_equals_path_score():
    rng = np.random.default_rng(9)
    for _ in range(50):
        e, crf = random_crf(rng, int(rng.integers(1, 7)), 3)
        path, score = viterbi_decode(e, crf, build_constraint_mask(LabelScheme(["X"])))
        assert score == pytest.approx(float(score_sequence(e, crf, path)), abs=1e-12)


def test_viterbi_records_nothing_on_tape():
    rng = np.random.default_rng(10)
    e, crf = random_crf(rng, 3, 3, requires_grad=True)
    with Tape() as tape:
        viterbi_decode(e, crf)
    assert len(tape) == 0
