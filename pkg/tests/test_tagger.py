import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnqe import gradcheck
from rnnqe.corpus import BAD, OK, PAD, TaggedSentence, build_vocab
from rnnqe.numeric import Rng
from rnnqe.tagger import (PLAIN_LABELS, SUB_LABELS, ConfigError, TaggerConfig, TrainingError, assemble_input,
                          build_model, forward_sentence, predict, train, zero_model)

from oracles import oracle_lstm

SENT = TaggedSentence(["Effekte", "sind", "standardmäßig", "beibehalten"], None, [BAD, BAD, OK, OK])


def model_for(sentences, **kw):
    cfg = TaggerConfig(**{"window": 3, "embed_dim": 4, "hidden": 5, "epochs": 0, "seed": 1, **kw})
    tgt = build_vocab(s.target_tokens for s in sentences)
    src = build_vocab(s.source_restructured for s in sentences) if cfg.bilingual else None
    return build_model(cfg, tgt, src)[0]


def emb(model, token, side="target"):
    if side == "target":
        return model.emb_target[model.target_vocab.lookup(token)]
    return model.emb_source[model.source_vocab.lookup(token)]


class TestConfig:
    def test_defaults(self):
        c = TaggerConfig()
        assert (c.window, c.embed_dim, c.hidden, c.bptt_depth, c.epochs, c.rho, c.epsilon) == \
            (5, 100, 100, 7, 50, 0.95, 1e-6)

    @pytest.mark.parametrize("bad", [dict(window=4), dict(window=0), dict(cell="rnn"), dict(bptt_depth=0),
                                     dict(hidden2=3), dict(rho=1.0), dict(epsilon=0.0)])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            TaggerConfig(**bad)

    def test_label_sets(self):
        assert TaggerConfig().labels == PLAIN_LABELS
        assert TaggerConfig(sublabels=True).labels == SUB_LABELS


class TestAssembleInput:
    def test_window_of_three(self):
        m = model_for([SENT])
        x = assemble_input(m, SENT, 1)
        expect = np.concatenate([emb(m, "Effekte"), emb(m, "sind"), emb(m, "standardmäßig")])
        np.testing.assert_array_equal(x, expect)

    def test_padding(self):
        s = TaggedSentence(["w0", "w1", "w2"])
        m = model_for([s], window=5)
        x = assemble_input(m, s, 0)
        pad = m.emb_target[PAD]
        np.testing.assert_array_equal(x, np.concatenate([pad, pad, emb(m, "w0"), emb(m, "w1"), emb(m, "w2")]))

    def test_bilingual_order(self):
        s = TaggedSentence(["t1", "t2", "t3"], ["s1", "s2", "s3"])
        m = model_for([s], bilingual=True)
        x = assemble_input(m, s, 1)
        expect = np.concatenate([emb(m, w, "source") for w in ("s1", "s2", "s3")] + [emb(m, w) for w in ("t1", "t2", "t3")])
        assert x.shape == (6 * 4,)
        np.testing.assert_array_equal(x, expect)

    def test_unknown_maps_to_unk(self):
        m = model_for([SENT])
        s = TaggedSentence(["neu", "sind", "x"])
        np.testing.assert_array_equal(assemble_input(m, s, 1)[:4], m.emb_target[1])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            assemble_input(model_for([SENT]), SENT, 4)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 9), st.sampled_from([1, 3, 5, 7]), st.booleans())
    def test_length_invariant(self, n, window, bilingual):
        s = TaggedSentence([f"w{k}" for k in range(n)], [f"s{k}" for k in range(n)] if bilingual else None)
        m = model_for([s], window=window, bilingual=bilingual)
        for t in range(n):
            assert assemble_input(m, s, t).shape == (window * 4 * (2 if bilingual else 1),)


class TestForward:
    def test_one_token(self):
        s = TaggedSentence(["a"])
        dists, caches = forward_sentence(model_for([s]), s)
        assert dists.shape == (1, 2) and len(caches) == 1

    def test_zero_params_uniform(self):
        cfg = TaggerConfig(window=3, embed_dim=4, hidden=5, sublabels=True)
        m = zero_model(cfg, build_vocab([SENT.target_tokens]))
        dists, _ = forward_sentence(m, SENT)
        np.testing.assert_array_equal(dists, 0.25)

    def test_seed13_straight_line_oracle(self):
        s = TaggedSentence(["a", "b", "c"])
        m = gradcheck.toy_model("lstm", window=3, hidden=2, embed_dim=2, seed=13)
        dists, _ = forward_sentence(m, s)

        rows = {tok: m.emb_target[m.target_vocab.lookup(tok)].tolist() for tok in ("a", "b", "c")}
        pad = m.emb_target[PAD].tolist()
        padded = [pad, rows["a"], rows["b"], rows["c"], pad]
        h, c = [0.0, 0.0], [0.0, 0.0]
        for t in range(3):
            x = padded[t] + padded[t + 1] + padded[t + 2]
            h, c = oracle_lstm(m.cell, h, c, x)
            logits = [sum(w * hk for w, hk in zip(row, h)) + b for row, b in zip(m.W_out.tolist(), m.b_out.tolist())]
            top = max(logits)
            e = [math.exp(l - top) for l in logits]
            np.testing.assert_allclose(dists[t], [v / sum(e) for v in e], rtol=0, atol=1e-12)

    def test_bilingual_needs_source(self):
        s = TaggedSentence(["a"], ["x"])
        m = model_for([s], bilingual=True)
        with pytest.raises(ConfigError):
            forward_sentence(m, TaggedSentence(["a"]))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6), st.sampled_from(["lstm", "gru", "deep-lstm"]), st.booleans())
    def test_distributions_sum_to_one(self, seed, cell, sub):
        m = gradcheck.toy_model(cell, sublabels=sub, seed=seed, gain=3.0)
        dists, _ = forward_sentence(m, gradcheck.toy_sentence(8, seed=seed))
        assert dists.shape == (8, 4 if sub else 2)
        assert np.abs(dists.sum(axis=1) - 1).max() < 1e-12


class TestPredict:
    def _fixed(self, probs, sub=False):
        cfg = TaggerConfig(window=1, embed_dim=1, hidden=1, sublabels=sub)
        m = zero_model(cfg, build_vocab([["a"]]))
        m.b_out[...] = np.log(probs)
        return m

    def test_argmax(self):
        assert predict(self._fixed([0.9, 0.1]), TaggedSentence(["a"])) == [OK]

    def test_sublabel_argmax_before_mapping(self):
        assert predict(self._fixed([0.2, 0.2, 0.2, 0.4], sub=True), TaggedSentence(["a"])) == [BAD]

    def test_tie_goes_to_earlier_label(self):
        assert predict(self._fixed([0.5, 0.5]), TaggedSentence(["a", "a"])) == [OK, OK]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(-50, 50), st.booleans())
    def test_logit_shift_invariance(self, seed, c, sub):
        m = gradcheck.toy_model("gru", sublabels=sub, seed=seed)
        s = gradcheck.toy_sentence(6, seed=seed)
        before = predict(m, s)
        m.b_out += c
        assert predict(m, s) == before
        assert set(before) <= {OK, BAD}


class TestGradients:
    @pytest.mark.parametrize("cell", ["lstm", "gru", "deep-lstm"])
    @pytest.mark.parametrize("bilingual", [False, True])
    def test_full_tagger_gradient(self, cell, bilingual):
        m = gradcheck.toy_model(cell, bilingual, seed=101)
        s = gradcheck.toy_sentence(7, seed=202, bilingual=bilingual)
        errors = gradcheck.check_groups(m, s)
        assert {k for k in errors if k.startswith("emb.")} == ({"emb.target", "emb.source"} if bilingual else {"emb.target"})
        assert max(e for _, e in errors.values()) < 1e-5

    def test_seed_sweep_within_fd_noise(self):
        # |fd - analytic| may not beat central-difference round-off on
        # near-zero coordinates, so bound the absolute error instead
        from rnnqe.tagger import loss_and_grads, sentence_loss
        for seed in range(6):
            for cell in ("lstm", "gru", "deep-lstm"):
                m = gradcheck.toy_model(cell, seed % 2 == 1, seed % 3 == 0, seed=1000 + seed)
                s = gradcheck.toy_sentence(7, seed=2000 + seed, bilingual=seed % 2 == 1)
                loss, grads = loss_and_grads(m, s)
                base = m.flat()
                analytic = np.concatenate([g.ravel() for g in grads.values()])
                for k in Rng(seed).permutation(base.size)[:60]:
                    v = base.copy()
                    v[k] += 1e-5
                    m.set_flat(v)
                    up = sentence_loss(m, s)
                    v[k] -= 2e-5
                    m.set_flat(v)
                    down = sentence_loss(m, s)
                    m.set_flat(base)
                    fd = (up - down) / 2e-5
                    assert abs(fd - analytic[k]) <= 1e-8 + 1e-5 * abs(fd), (cell, seed, k)


class TestTrain:
    def test_majority_collapse(self):
        corpus = [TaggedSentence(["a", "b", "c"], None, [OK] * 3), TaggedSentence(["c", "a"], None, [OK] * 2)]
        m = model_for(corpus, cell="gru", epochs=50)
        train(m, corpus)
        assert all(predict(m, s) == [OK] * len(s) for s in corpus)

    @pytest.mark.parametrize("cell", ["lstm", "gru"])
    def test_memorize_single_sentence(self, cell):
        s = TaggedSentence(["x", "y", "z"], None, [BAD, OK, OK])
        cfg = TaggerConfig(cell=cell, window=3, embed_dim=10, hidden=10, epochs=50, seed=3)
        m = build_model(cfg, build_vocab([s.target_tokens]))[0]
        result = train(m, [s])
        losses = [r.train_loss for r in result.log]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
        assert predict(result.final, s) == [BAD, OK, OK]

    def test_sublabel_training(self):
        s = TaggedSentence(["x", "y", "z", "w"], None, [OK, BAD, OK, OK])
        cfg = TaggerConfig(cell="gru", window=3, embed_dim=10, hidden=10, epochs=60, seed=4, sublabels=True)
        m = build_model(cfg, build_vocab([s.target_tokens]))[0]
        train(m, [s])
        dists, _ = forward_sentence(m, s)
        assert dists.shape == (4, 4)
        assert predict(m, s) == [OK, BAD, OK, OK]

    def test_epochs_zero_keeps_initialisation(self):
        m = model_for([SENT])
        before = m.flat()
        result = train(m, [SENT])
        assert result.log == [] and np.array_equal(result.final.flat(), before)

    def test_deterministic(self):
        corpus = [SENT, TaggedSentence(["sind", "x"], None, [OK, BAD])]
        a, b = model_for(corpus, epochs=3), model_for(corpus, epochs=3)
        train(a, corpus)
        train(b, corpus)
        assert np.array_equal(a.flat(), b.flat())

    def test_best_dev_model(self):
        corpus = [SENT]
        m = model_for(corpus, epochs=4)
        result = train(m, corpus, dev=corpus)
        assert len(result.log) == 4 and all(r.dev_f1_bad is not None for r in result.log)
        assert result.best is not None and 0 <= result.best_epoch <= 4
        assert result.best is not result.final

    def test_non_finite_loss_aborts(self):
        m = model_for([SENT], epochs=2)
        m.W_out[...] = np.nan
        with pytest.raises(TrainingError, match="epoch 1, sentence 1"):
            train(m, [SENT])

    def test_shuffle_flag(self):
        corpus = [SENT, TaggedSentence(["sind", "x"], None, [OK, BAD]), TaggedSentence(["y"], None, [BAD])]
        shuffled = model_for(corpus, epochs=2)
        ordered = model_for(corpus, epochs=2, shuffle=False)
        train(shuffled, corpus)
        train(ordered, corpus)
        assert not np.array_equal(shuffled.flat(), ordered.flat())
