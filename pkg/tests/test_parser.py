import math

import numpy as np
import pytest

from hat.core import Example, LogicalForm, Origin, Utterance
from hat.parser import (
    evaluate_accuracy,
    parse,
    parser_loglik,
    perplexity,
    train_parser,
)
from bruteforce import brute_posterior


def ex(uid, tokens, lf_id, origin=Origin.SOURCE):
    return Example(
        utterance=Utterance(uid, "src", " ".join(tokens), tuple(tokens)),
        lf=LogicalForm(f"answer_{lf_id:04d} ( topic_{lf_id:04d} )", lf_id),
        origin=origin,
    )


@pytest.fixture
def balanced_two_lf():
    """Two classes, disjoint vocabularies, symmetric counts."""
    data = []
    for i in range(3):
        data.append(ex(f"a{i}", ("alpha", f"a{i}"), 0))
        data.append(ex(f"b{i}", ("bravo", f"b{i}"), 1))
    return train_parser(data, add_k=0.2, interpolation=0.6)


class TestTrain:
    def test_single_lf_always_predicted(self):
        parser = train_parser([ex("a", ("hello", "world"), 0)])
        utt = Utterance("q", "src", "anything else", ("anything", "else"))
        assert parse(parser, utt).template_id == 0
        assert parser_loglik(parser, utt, LogicalForm("answer_0000 ( topic_0000 )", 0)) == 0.0

    def test_disjoint_vocab_perfect_training_accuracy(self, balanced_two_lf):
        train = [ex(f"a{i}", ("alpha", f"a{i}"), 0) for i in range(3)] + [
            ex(f"b{i}", ("bravo", f"b{i}"), 1) for i in range(3)
        ]
        assert evaluate_accuracy(balanced_two_lf, train) == 1.0

    def test_retraining_deterministic(self):
        data = [ex("a", ("x", "y"), 0), ex("b", ("z",), 1)]
        p1, p2 = train_parser(data), train_parser(data)
        utt = Utterance("q", "src", "x z", ("x", "z"))
        assert parser_loglik(p1, utt, data[0].lf) == parser_loglik(p2, utt, data[0].lf)

    def test_empty_training_rejected(self):
        with pytest.raises(ValueError):
            train_parser([])

    def test_prior_is_empirical_frequency(self):
        data = [ex("a", ("x",), 0), ex("b", ("y",), 1), ex("c", ("z",), 1)]
        parser = train_parser(data)
        assert math.isclose(parser.lf_prior[0], 1 / 3)
        assert math.isclose(parser.lf_prior[1], 2 / 3)


class TestLoglik:
    def test_posterior_normalizes(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha something", ("alpha", "something"))
        total = sum(
            math.exp(parser_loglik(balanced_two_lf, utt, LogicalForm(c, t)))
            for t, c in ((0, "answer_0000 ( topic_0000 )"), (1, "answer_0001 ( topic_0001 )"))
        )
        assert math.isclose(total, 1.0, abs_tol=1e-9)

    def test_right_class_confident_wrong_class_unlikely(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha a0", ("alpha", "a0"))
        ll0 = parser_loglik(balanced_two_lf, utt, LogicalForm("answer_0000 ( topic_0000 )", 0))
        ll1 = parser_loglik(balanced_two_lf, utt, LogicalForm("answer_0001 ( topic_0001 )", 1))
        assert ll0 > math.log(0.9)
        assert ll1 < math.log(0.1)

    def test_matches_bayes_reimplementation(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha b0", ("alpha", "b0"))
        oracle = brute_posterior(balanced_two_lf, utt.tokens)
        for tid, canon in ((0, "answer_0000 ( topic_0000 )"), (1, "answer_0001 ( topic_0001 )")):
            got = math.exp(parser_loglik(balanced_two_lf, utt, LogicalForm(canon, tid)))
            assert math.isclose(got, oracle[tid], rel_tol=1e-9)

    def test_unknown_lf_raises(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha", ("alpha",))
        with pytest.raises(KeyError):
            parser_loglik(balanced_two_lf, utt, LogicalForm("answer_0009 ( topic_0009 )", 9))


class TestParse:
    def test_dominant_class(self, balanced_two_lf):
        utt = Utterance("q", "src", "bravo b1", ("bravo", "b1"))
        assert parse(balanced_two_lf, utt).template_id == 1

    def test_exact_tie_goes_to_lowest_template_id(self, balanced_two_lf):
        # fully OOV tokens under a symmetric parser: identical likelihoods,
        # equal priors -> exact tie -> template 0
        utt = Utterance("q", "src", "zzz qqq", ("zzz", "qqq"))
        tids, joints = balanced_two_lf.joint_logliks(utt.tokens)
        assert joints[0] == joints[1]
        assert parse(balanced_two_lf, utt).template_id == 0

    def test_oov_prior_argmax(self):
        # unbalanced priors, symmetric class LMs over one shared token each
        data = [ex("a1", ("same",), 0), ex("b1", ("same",), 1), ex("b2", ("same",), 1)]
        parser = train_parser(data)
        utt = Utterance("q", "src", "unseen", ("unseen",))
        assert parse(parser, utt).template_id == 1

    def test_parse_consistent_with_loglik(self, balanced_two_lf):
        for tokens in (("alpha", "a2"), ("bravo", "b0"), ("alpha", "bravo")):
            utt = Utterance("q", "src", " ".join(tokens), tokens)
            best = parse(balanced_two_lf, utt)
            lls = {
                tid: parser_loglik(balanced_two_lf, utt, LogicalForm(c, tid))
                for tid, c in (
                    (0, "answer_0000 ( topic_0000 )"),
                    (1, "answer_0001 ( topic_0001 )"),
                )
            }
            assert lls[best.template_id] == max(lls.values())


class TestEvaluate:
    def test_all_correct(self, balanced_two_lf):
        test = [ex("t0", ("alpha", "a0"), 0), ex("t1", ("bravo", "b0"), 1)]
        assert evaluate_accuracy(balanced_two_lf, test) == 1.0

    def test_half_correct(self, balanced_two_lf):
        test = [ex("t0", ("alpha", "a0"), 0), ex("t1", ("alpha", "a1"), 1)]
        assert evaluate_accuracy(balanced_two_lf, test) == 0.5

    def test_empty_test_rejected(self, balanced_two_lf):
        with pytest.raises(ValueError):
            evaluate_accuracy(balanced_two_lf, [])


class TestPerplexity:
    def test_perfect_confidence_is_one(self):
        parser = train_parser([ex("a", ("x", "y"), 0)])
        utt = Utterance("q", "src", "x y", ("x", "y"))
        assert perplexity(parser, utt, LogicalForm("answer_0000 ( topic_0000 )", 0)) == 1.0

    def test_hand_value(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha a0", ("alpha", "a0"))
        ll = parser_loglik(balanced_two_lf, utt, LogicalForm("answer_0001 ( topic_0001 )", 1))
        expected = math.exp(-ll / 3)  # two tokens + EOS event
        got = perplexity(balanced_two_lf, utt, LogicalForm("answer_0001 ( topic_0001 )", 1))
        assert math.isclose(got, expected, rel_tol=1e-12)
        assert got >= 1.0

    def test_monotone_in_nll_for_fixed_length(self, balanced_two_lf):
        utt = Utterance("q", "src", "alpha a0", ("alpha", "a0"))
        lf0 = LogicalForm("answer_0000 ( topic_0000 )", 0)
        lf1 = LogicalForm("answer_0001 ( topic_0001 )", 1)
        assert parser_loglik(balanced_two_lf, utt, lf0) > parser_loglik(
            balanced_two_lf, utt, lf1
        )
        assert perplexity(balanced_two_lf, utt, lf0) < perplexity(
            balanced_two_lf, utt, lf1
        )


class TestRetrainingProperty:
    def test_added_ht_never_decreases_its_own_likelihood(self):
        base = [ex(f"a{i}", ("alpha", f"a{i}"), 0) for i in range(3)] + [
            ex(f"b{i}", ("bravo", f"b{i}"), 1) for i in range(3)
        ]
        new = ex("h0", ("alpha", "fresh"), 0, Origin.HUMAN_TRANSLATED)
        before = train_parser(base)
        after = train_parser(base + [new])
        lf = new.lf
        assert parser_loglik(after, new.utterance, lf) >= parser_loglik(
            before, new.utterance, lf
        )
