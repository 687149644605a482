import numpy as np
import pytest

import oracles
from hner.autograd import Tape, Tensor, backward
from hner.gradcheck import check_gradients, random_case
from hner.model import (
    EncoderConfig,
    WordLayerConfig,
    count_parameters,
    encode_subwords,
    gather_first_subtokens,
    init_parameters,
    project_to_labels,
    word_interaction,
)
from hner.numeric import finite_difference_gradient, relative_error
from hner.experiment import ablation_values, build_model
from hner import config as cfgmod


def randomized(encoder, word, num_labels=3, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    params = init_parameters(encoder, word, num_labels, rng)
    for name, p in params.items():
        base = 1.0 if name.endswith("gamma") else 0.0
        p.data = base + scale * rng.standard_normal(p.shape)
    return params


def test_zero_layer_encoder_is_embedding_sum():
    enc = EncoderConfig(num_layers=0, hidden_dim=4, num_heads=2, ffn_dim=4, max_positions=8, vocab_size=10)
    p = randomized(enc, WordLayerConfig("none", 4))
    ids = [4, 7, 5]
    out = encode_subwords(ids, p, enc).data
    np.testing.assert_array_equal(out, p["embed.tokens"].data[ids] + p["embed.positions"].data[:3])


def test_encoder_matches_straight_line_reference():
    enc = EncoderConfig(num_layers=1, hidden_dim=8, num_heads=2, ffn_dim=12, max_positions=8, vocab_size=10)
    p = randomized(enc, WordLayerConfig("none", 8), seed=3)
    ids = [2, 5, 9, 6, 3]
    ref = oracles.ref_encoder(ids, p, 1, 2)
    np.testing.assert_allclose(encode_subwords(ids, p, enc).data, ref, rtol=1e-12, atol=1e-12)


def test_encoder_is_permutation_equivariant_without_positions():
    enc = EncoderConfig(num_layers=2, hidden_dim=8, num_heads=2, ffn_dim=8, max_positions=8, vocab_size=10)
    p = randomized(enc, WordLayerConfig("none", 8), seed=1)
    p["embed.positions"].data[:] = 0.0
    a = encode_subwords([4, 5, 6, 7], p, enc).data
    b = encode_subwords([4, 6, 5, 7], p, enc).data
    np.testing.assert_allclose(b, a[[0, 2, 1, 3]], atol=1e-12)


def test_encoder_ignores_padding():
    enc = EncoderConfig(num_layers=2, hidden_dim=8, num_heads=2, ffn_dim=8, max_positions=8, vocab_size=10)
    p = randomized(enc, WordLayerConfig("none", 8), seed=2)
    short = encode_subwords([4, 5, 6], p, enc).data
    padded = encode_subwords([4, 5, 6, 0, 0], p, enc).data
    np.testing.assert_allclose(padded[:3], short, rtol=0, atol=1e-10)


def test_encoder_input_errors():
    enc = EncoderConfig(num_layers=1, hidden_dim=4, num_heads=2, ffn_dim=4, max_positions=3, vocab_size=6)
    p = randomized(enc, WordLayerConfig("none", 4))
    with pytest.raises(ValueError):
        encode_subwords([4, 4, 4, 4], p, enc)
    with pytest.raises(ValueError):
        encode_subwords([6], p, enc)


def test_gather_rows_and_bounds():
    H = Tensor(np.arange(10.0).reshape(5, 2))
    np.testing.assert_array_equal(gather_first_subtokens(H, [0, 2, 3]).data, H.data[[0, 2, 3]])
    np.testing.assert_array_equal(gather_first_subtokens(H, range(5)).data, H.data)
    with pytest.raises(IndexError):
        gather_first_subtokens(H, [0, 5])


def test_gather_gradient_scatters_to_gathered_rows():
    H = Tensor(np.random.default_rng(0).normal(size=(5, 3)), requires_grad=True)
    R = np.random.default_rng(1).normal(size=(3, 3))
    with Tape() as tape:
        loss = (gather_first_subtokens(H, [0, 2, 3]) * R).sum()
    backward(loss, tape)
    (fd,) = finite_difference_gradient(
        lambda: float((gather_first_subtokens(H, [0, 2, 3]).data * R).sum()), [H]
    )
    assert relative_error(H.grad, fd) < 1e-8
    assert not H.grad[[1, 4]].any()


def test_word_layer_none_is_identity():
    Hw = Tensor(np.ones((3, 4)))
    assert word_interaction(Hw, {}, WordLayerConfig("none", 4)) is Hw


def test_word_layer_dim_mismatch():
    with pytest.raises(ValueError):
        word_interaction(Tensor(np.ones((3, 4))), {}, WordLayerConfig("none", 6))


def test_word_transformer_single_word():
    enc = EncoderConfig(num_layers=0, hidden_dim=8, num_heads=2, ffn_dim=8, max_positions=4, vocab_size=6)
    cfg = WordLayerConfig("transformer", 8, num_heads=2, ffn_dim=8)
    p = randomized(enc, cfg, seed=4)
    x = np.random.default_rng(5).normal(size=(1, 8))
    ref = oracles.ref_transformer_layer(x.tolist(), p, "word", 2)
    # with one position the attention context is exactly v
    np.testing.assert_allclose(word_interaction(Tensor(x), p, cfg).data, ref, atol=1e-12)


def test_word_transformer_permutation_equivariant():
    enc = EncoderConfig(num_layers=0, hidden_dim=8, num_heads=2, ffn_dim=8, max_positions=4, vocab_size=6)
    cfg = WordLayerConfig("transformer", 8, num_heads=2, ffn_dim=8)
    p = randomized(enc, cfg, seed=6)
    x = np.random.default_rng(7).normal(size=(4, 8))
    perm = [2, 0, 3, 1]
    a = word_interaction(Tensor(x), p, cfg).data
    b = word_interaction(Tensor(x[perm]), p, cfg).data
    np.testing.assert_allclose(b, a[perm], rtol=0, atol=1e-10)


def test_bilstm_matches_unrolled_recurrence():
    enc = EncoderConfig(num_layers=0, hidden_dim=6, num_heads=2, ffn_dim=6, max_positions=4, vocab_size=6)
    cfg = WordLayerConfig("bilstm", 6)
    p = randomized(enc, cfg, seed=8)
    x = np.random.default_rng(9).normal(size=(3, 6))
    out = word_interaction(Tensor(x), p, cfg).data
    xs = x.tolist()
    fwd = oracles.ref_lstm_direction(xs, p["word.fwd.w_ih"].data, p["word.fwd.w_hh"].data, p["word.fwd.bias"].data)
    bwd = oracles.ref_lstm_direction(xs, p["word.bwd.w_ih"].data, p["word.bwd.w_hh"].data, p["word.bwd.bias"].data,
                                     reverse=True)
    ref = np.hstack([np.array(fwd), np.array(bwd)])
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-13)


def test_projection():
    Hw = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    p = {"proj.weight": Tensor(np.zeros((4, 2))), "proj.bias": Tensor(np.array([1.5, -2.0]))}
    np.testing.assert_array_equal(project_to_labels(Hw, p).data, [[1.5, -2.0]] * 3)
    p = {"proj.weight": Tensor(np.eye(4)), "proj.bias": Tensor(np.zeros(4))}
    np.testing.assert_array_equal(project_to_labels(Hw, p).data, Hw.data)
    rng = np.random.default_rng(1)
    W = rng.normal(size=(4, 3))
    p = {"proj.weight": Tensor(W), "proj.bias": Tensor(np.zeros(3))}
    np.testing.assert_allclose(project_to_labels(Hw, p).data, oracles.mp_matmul(Hw.data, W), rtol=1e-14, atol=1e-15)
    with pytest.raises(ValueError):
        project_to_labels(Tensor(np.ones((3, 5))), p)


def test_count_parameters():
    assert count_parameters({"w": np.zeros((2, 3))}) == 6
    assert count_parameters({"e": Tensor(np.zeros((10, 4))), "b": Tensor(np.zeros(4))}) == 44


def test_word_and_subword_ablation_have_equal_counts():
    values = cfgmod.defaults()
    word = build_model(ablation_values(values, "word"), 50, 5)
    sub = build_model(ablation_values(values, "subword"), 50, 5)
    assert count_parameters(word.params) == count_parameters(sub.params)
    assert "word.attn.q.weight" in word.params and "encoder.2.attn.q.weight" in sub.params


def test_initialization_scheme():
    enc = EncoderConfig(num_layers=1, hidden_dim=64, num_heads=4, ffn_dim=64, max_positions=64, vocab_size=64)
    p = init_parameters(enc, WordLayerConfig("bilstm", 64), 5, np.random.default_rng(0))
    assert abs(p["embed.tokens"].data.std() - 0.02) < 0.002
    assert not p["encoder.0.attn.q.bias"].data.any()
    assert (p["encoder.0.ln1.gamma"].data == 1).all()
    assert p["word.fwd.w_hh"].shape == (32, 128)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(hidden_dim=10, num_heads=4)
    with pytest.raises(ValueError):
        WordLayerConfig(kind="gru")
    with pytest.raises(ValueError):
        WordLayerConfig(kind="bilstm", hidden_dim=7)


@pytest.mark.parametrize("kind", ["transformer", "bilstm"])
def test_gradcheck_with_two_labels(kind):
    errors = check_gradients(seed=1, eps=1e-5, kind=kind, num_labels=2)
    assert max(errors.values()) < 1e-4


def test_dropout_only_with_rng():
    model, sent, labels = random_case(0)
    model.dropout = 0.5
    a = model.emissions(sent).data
    b = model.emissions(sent).data
    c = model.emissions(sent, rng=np.random.default_rng(0)).data
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_tagger_decode_respects_word_count():
    model, sent, labels = random_case(2)
    assert len(model.decode(sent, None)) == len(sent.words)
    assert float(model.loss(sent, labels)) >= -1e-9
