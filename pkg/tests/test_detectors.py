import itertools
import math
import random

import pytest
from hypothesis import given, strategies as st

from certprobe.detectors import (
    SemanticCluster,
    baseline_entropy,
    baseline_logp,
    classify_abstention,
    cluster_semantic,
    f_ensemble,
    f_score,
    lexical_similarity,
    load_abstention_patterns,
    rouge_l,
    selfcheck_nli,
    semantic_entropy,
)
from certprobe.errors import (
    InvalidPartition,
    MissingLogprobs,
    TooFewSamples,
    TooFewScores,
)
from certprobe.metrics import normalize_answer, response_entropy
from certprobe.nli_gateway import CallableMockNli, NliGateway, answer_equality_mock_nli
from conftest import make_generation, oracle_entropy, oracle_rouge_l


def fixed_nli(tmp_path, logits):
    return NliGateway(CallableMockNli(lambda a, b: logits), tmp_path)


def equality_nli(tmp_path):
    return NliGateway(answer_equality_mock_nli(normalize_answer), tmp_path)


class TestFScore:
    def test_subtraction_negative(self, tmp_path):
        nli = fixed_nli(tmp_path, (5.0, 1.0, -2.0))
        assert f_score("Q", "r", "p", nli) == pytest.approx(-7.0)

    def test_subtraction_positive(self, tmp_path):
        nli = fixed_nli(tmp_path, (-2.0, 0.0, 6.0))
        assert f_score("Q", "r", "p", nli) == pytest.approx(8.0)

    def test_groom_lake_sign(self, tmp_path):
        # consistent reference/perturbed pair must score negative
        nli = equality_nli(tmp_path)
        score = f_score(
            "What is 25 miles south of Groom Lake?",
            "Rachel, NV",
            "I am not sure but it could be Rachel, NV",
            nli,
        )
        assert score < 0

    def test_identical_pair_strictly_negative(self, tmp_path):
        nli = equality_nli(tmp_path)
        assert f_score("Q", "same", "same", nli) < 0


class TestFEnsemble:
    def test_minimum(self):
        assert f_ensemble([7.64, 3.0]) == 3.0

    def test_negative_minimum(self):
        assert f_ensemble([-6.7, -7.6]) == -7.6

    def test_idempotent_on_equal(self):
        assert f_ensemble([2.5, 2.5]) == 2.5

    def test_too_few(self):
        with pytest.raises(TooFewScores):
            f_ensemble([1.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=6))
    def test_le_each_component(self, scores):
        v = f_ensemble(scores)
        assert all(v <= s for s in scores)


class TestBaselines:
    def test_logp_delegates(self):
        assert baseline_logp(make_generation("x", [-0.2, -0.4, -0.6])) == pytest.approx(-0.4)

    def test_logp_missing(self):
        with pytest.raises(MissingLogprobs):
            baseline_logp(make_generation("x", []))

    def test_entropy_delegates(self):
        samples = [make_generation("a")] * 5 + [make_generation("b")] * 5
        assert baseline_entropy(samples) == pytest.approx(math.log(2), abs=1e-12)


class TestClusterSemantic:
    def test_equal_answers_group(self, tmp_path):
        nli = equality_nli(tmp_path)
        samples = [
            make_generation("Paris", [-0.1]),
            make_generation("Paris", [-0.1]),
            make_generation("Berlin", [-0.1]),
        ]
        clusters = cluster_semantic("Q?", samples, nli)
        assert [c.member_indices for c in clusters] == [(0, 1), (2,)]
        assert clusters[0].mass == pytest.approx(2 / 3)

    def test_paraphrases_grouped(self, tmp_path):
        # scorer that calls any two Paris-mentioning answers equivalent
        def rule(a, b):
            return (5.0, 0.0, -5.0) if "paris" in a.lower() and "paris" in b.lower() else (-5.0, 0.0, 5.0)

        nli = NliGateway(CallableMockNli(rule), tmp_path)
        samples = [
            make_generation("It's Paris paris", [-0.2]),
            make_generation("paris, I think", [-0.3]),
        ]
        clusters = cluster_semantic("Where is the capital of France?", samples, nli)
        assert len(clusters) == 1

    def test_single_sample(self, tmp_path):
        clusters = cluster_semantic("Q", [make_generation("a", [-0.5])], equality_nli(tmp_path))
        assert len(clusters) == 1
        assert clusters[0].mass == pytest.approx(1.0)

    def test_masses_partition(self, tmp_path):
        nli = equality_nli(tmp_path)
        samples = [make_generation(t, [-0.1 * (i + 1)]) for i, t in enumerate("aabbc")]
        clusters = cluster_semantic("Q", samples, nli)
        assert sum(c.mass for c in clusters) == pytest.approx(1.0, abs=1e-9)
        members = sorted(i for c in clusters for i in c.member_indices)
        assert members == list(range(5))

    def test_missing_logprobs(self, tmp_path):
        with pytest.raises(MissingLogprobs):
            cluster_semantic("Q", [make_generation("a", [])], equality_nli(tmp_path))


class TestSemanticEntropy:
    def test_single_cluster(self):
        assert semantic_entropy([SemanticCluster((0, 1), 1.0)]) == 0.0

    def test_even_split(self):
        clusters = [SemanticCluster((0,), 0.5), SemanticCluster((1,), 0.5)]
        assert semantic_entropy(clusters) == pytest.approx(math.log(2), abs=1e-12)

    def test_7_2_1_masses(self):
        clusters = [
            SemanticCluster((0,), 0.7),
            SemanticCluster((1,), 0.2),
            SemanticCluster((2,), 0.1),
        ]
        assert semantic_entropy(clusters) == pytest.approx(0.8018185525433372, abs=1e-5)
        assert semantic_entropy(clusters) == pytest.approx(
            oracle_entropy([0.7, 0.2, 0.1]), abs=1e-12
        )

    def test_permutation_invariant(self):
        rng = random.Random(3)
        for _ in range(200):
            k = rng.randint(1, 6)
            raw = [rng.random() + 1e-3 for _ in range(k)]
            total = sum(raw)
            clusters = [
                SemanticCluster((i,), raw[i] / total) for i in range(k)
            ]
            base = semantic_entropy(clusters)
            shuffled = list(clusters)
            rng.shuffle(shuffled)
            assert semantic_entropy(shuffled) == pytest.approx(base, abs=1e-12)

    def test_invalid_partition_mass(self):
        with pytest.raises(InvalidPartition):
            semantic_entropy([SemanticCluster((0,), 0.6)])

    def test_duplicate_member(self):
        with pytest.raises(InvalidPartition):
            semantic_entropy(
                [SemanticCluster((0,), 0.5), SemanticCluster((0,), 0.5)]
            )

    def test_reduces_to_response_entropy_for_uniform_singletons(self):
        m = 5
        clusters = [SemanticCluster((i,), 1 / m) for i in range(m)]
        samples = [make_generation(f"ans{i}") for i in range(m)]
        assert semantic_entropy(clusters) == pytest.approx(
            response_entropy(samples), abs=1e-12
        )


class TestRougeL:
    def test_identical(self):
        assert rouge_l("a b c", "a b c") == 1.0

    def test_spec_example(self):
        assert rouge_l("a c d", "a b c d") == pytest.approx(6 / 7)

    def test_disjoint(self):
        assert rouge_l("a b", "c d") == 0.0

    def test_empty(self):
        assert rouge_l("", "a") == 0.0

    def test_matches_oracle_random(self):
        rng = random.Random(11)
        vocab = [f"w{i}" for i in range(8)]
        for _ in range(300):
            a = " ".join(rng.choices(vocab, k=rng.randint(0, 15)))
            b = " ".join(rng.choices(vocab, k=rng.randint(0, 15)))
            assert rouge_l(a, b) == pytest.approx(oracle_rouge_l(a, b), abs=1e-12)


class TestLexicalSimilarity:
    def test_identical_samples(self):
        samples = [make_generation("a b c")] * 4
        assert lexical_similarity(samples) == pytest.approx(1.0)

    def test_disjoint_samples(self):
        samples = [make_generation("a b"), make_generation("c d")]
        assert lexical_similarity(samples) == 0.0

    def test_three_sample_mean(self):
        # engineered pairwise rouge: (s0,s1)=1.0, (s0,s2)=0.5ish via known strings
        samples = [
            make_generation("a b"),
            make_generation("a b"),
            make_generation("c d"),
        ]
        # pairs: (0,1)=1, (0,2)=0, (1,2)=0 each counted twice -> 2/6
        assert lexical_similarity(samples) == pytest.approx(2 / 6)

    def test_double_sum_matches_oracle(self):
        rng = random.Random(5)
        vocab = ["x", "y", "z", "w"]
        samples = [
            make_generation(" ".join(rng.choices(vocab, k=rng.randint(1, 6))))
            for _ in range(5)
        ]
        m = len(samples)
        expected = (
            sum(
                oracle_rouge_l(samples[i].text, samples[j].text)
                for i, j in itertools.permutations(range(m), 2)
            )
            / (m * (m - 1))
        )
        assert lexical_similarity(samples) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_under_permutation(self):
        samples = [make_generation(t) for t in ("a b", "b c", "c a")]
        base = lexical_similarity(samples)
        assert lexical_similarity(samples[::-1]) == pytest.approx(base, abs=1e-12)
        assert 0.0 <= base <= 1.0

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            lexical_similarity([make_generation("a")])


class TestSelfcheckNli:
    def test_zero_contradiction(self, tmp_path):
        nli = fixed_nli(tmp_path, (20.0, 0.0, -20.0))
        samples = [make_generation("a"), make_generation("b")]
        assert selfcheck_nli("Q", "r", samples, nli) == pytest.approx(0.0, abs=1e-8)

    def test_uniform_softmax(self, tmp_path):
        nli = fixed_nli(tmp_path, (0.0, 0.0, 0.0))
        samples = [make_generation("a")]
        assert selfcheck_nli("Q", "r", samples, nli) == pytest.approx(1 / 3)

    def test_mean_of_probs(self, tmp_path):
        # contradiction probs 0.9 and 0.5 -> mean 0.7
        import math as m

        def rule(a, b):
            if "s1" in b:
                return (m.log(0.05), m.log(0.05), m.log(0.9))
            return (m.log(0.25), m.log(0.25), m.log(0.5))

        nli = NliGateway(CallableMockNli(rule), tmp_path)
        samples = [make_generation("s1"), make_generation("s2")]
        assert selfcheck_nli("Q", "r", samples, nli) == pytest.approx(0.7, abs=1e-9)

    def test_in_unit_interval(self, tmp_path):
        nli = fixed_nli(tmp_path, (1.0, -2.0, 3.0))
        samples = [make_generation(f"s{i}") for i in range(4)]
        assert 0.0 <= selfcheck_nli("Q", "r", samples, nli) <= 1.0


class TestClassifyAbstention:
    def test_figure_example(self):
        text = "It must be impossible to answer this question without more information"
        assert classify_abstention(text) is True

    def test_plain_answer(self):
        assert classify_abstention("Paris") is False

    def test_empty(self):
        assert classify_abstention("") is False

    def test_canonical_phrases(self):
        assert classify_abstention("I can not answer that.")
        assert classify_abstention("The answer cannot be determined.")
        assert classify_abstention("Please provide more context.")

    def test_custom_pattern_file(self, tmp_path):
        path = tmp_path / "patterns.txt"
        path.write_text("# comment\nno idea\n\n", encoding="utf-8")
        patterns = load_abstention_patterns(path)
        assert patterns == ("no idea",)
        assert classify_abstention("I have no idea", patterns)
        assert not classify_abstention("I can not answer", patterns)
