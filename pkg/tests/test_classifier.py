import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modemfuse.channel import ChannelRealization, FadingModel, noise_power_for_snr, sample_channel, synthesize
from modemfuse.classifier import (
    ALRT,
    EM_HML,
    MOM_HLRT,
    CandidateSet,
    ClassificationResult,
    classify_alrt,
    classify_em_hml,
    classify_mom,
    decide,
)
from modemfuse.constellation import ConstellationSpec, build_constellation, psk
from modemfuse.em import EmOptions
from modemfuse.errors import ConfigurationError

CANDIDATES = [build_constellation(f) for f in ("16qam", "32qam", "64qam")]


def _trial(seed, snr_db, sensors, truth, length=500):
    rng = np.random.default_rng(seed)
    channel = sample_channel(rng, sensors, FadingModel.from_average_power(1.0), noise_power_for_snr(snr_db))
    block, _ = synthesize(rng, CANDIDATES[truth], channel, length)
    return block, channel


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8))
def test_decide_is_first_argmax(llfs):
    index = decide(llfs)
    assert llfs[index] == max(llfs)
    assert all(v < llfs[index] for v in llfs[:index])


def test_candidate_set_validation():
    cs = CandidateSet(CANDIDATES)
    assert len(cs) == 3 and cs.format_ids == ["16qam", "32qam", "64qam"]
    with pytest.raises(ConfigurationError):
        CandidateSet(CANDIDATES[:1])
    with pytest.raises(ConfigurationError):
        CandidateSet([CANDIDATES[0], build_constellation("16QAM")])


def test_high_snr_em_hml_is_reliable():
    correct = 0
    for seed in range(100):
        block, _ = _trial(seed, 20, 2, truth=0)
        correct += classify_em_hml(block, CANDIDATES).decision_index == 0
    assert correct >= 99


def test_em_result_structure():
    block, _ = _trial(1, 5, 2, truth=1)
    result = classify_em_hml(block, CandidateSet(CANDIDATES))
    assert result.method_tag == EM_HML
    assert len(result.per_hypothesis_llf) == len(result.per_hypothesis_em) == 3
    assert result.per_hypothesis_llf == [em.final_llf for em in result.per_hypothesis_em]
    assert result.decision_index == int(np.argmax(result.per_hypothesis_llf))
    assert result.decision_em is result.per_hypothesis_em[result.decision_index]


@pytest.mark.parametrize("method", [classify_em_hml, classify_mom])
def test_identical_specs_tie_to_first(method):
    block, _ = _trial(2, 5, 2, truth=0, length=200)
    result = method(block, [CANDIDATES[0]] * 3)
    assert result.decision_index == 0


def test_alrt_identical_specs_tie_to_first():
    block, channel = _trial(3, 5, 2, truth=0, length=200)
    assert classify_alrt(block, [CANDIDATES[2]] * 3, channel).decision_index == 0


def test_alrt_noiseless_always_correct():
    for truth in range(3):
        channel = ChannelRealization([1.0, 0.7], [0.3, -2.0], 1e-12)
        block, _ = synthesize(np.random.default_rng(truth), CANDIDATES[truth], channel, 300)
        result = classify_alrt(block, CANDIDATES, channel)
        assert result.method_tag == ALRT and result.per_hypothesis_em is None
        assert result.decision_index == truth
        others = [v for i, v in enumerate(result.per_hypothesis_llf) if i != truth]
        assert result.per_hypothesis_llf[truth] - max(others) > 1e6


def test_alrt_rejects_mismatched_channel():
    block, _ = _trial(4, 5, 2, truth=0, length=50)
    with pytest.raises(ConfigurationError):
        classify_alrt(block, CANDIDATES, ChannelRealization([1.0], [0.0], 1.0))


def test_alrt_pure_noise_is_uniform_over_rotated_candidates():
    # Circular noise cannot tell rotated copies of one constellation apart.
    rotated = [ConstellationSpec(f"qpsk_rot{k}", psk(4, np.pi / 4 + k * np.pi / 6), symmetry_order=4)
               for k in range(3)]
    known = ChannelRealization([1.0], [0.0], 1.0)
    rng = np.random.default_rng(5)
    counts = np.zeros(3)
    trials = 3000
    for _ in range(trials):
        noise = (rng.normal(size=(1, 20)) + 1j * rng.normal(size=(1, 20))) / np.sqrt(2)
        counts[classify_alrt(noise, rotated, known).decision_index] += 1
    np.testing.assert_allclose(counts / trials, 1 / 3, atol=0.05)


def test_mom_consistent_at_high_snr_single_sensor():
    correct = 0
    trials = 90
    for seed in range(trials):
        block, _ = _trial(seed, 20, 1, truth=seed % 3, length=2000)
        result = classify_mom(block, CANDIDATES)
        assert result.method_tag == MOM_HLRT
        correct += result.decision_index == seed % 3
    assert correct / trials > 1 / 3 + 0.1


def test_zero_iteration_em_reproduces_mom():
    options = EmOptions(max_iterations=0, grid_refine="off")
    for seed in range(15):
        block, _ = _trial(seed, [0, 5, 10][seed % 3], [1, 2, 4][seed % 3], truth=seed % 3, length=300)
        em = classify_em_hml(block, CANDIDATES, options)
        mom = classify_mom(block, CANDIDATES)
        assert em.decision_index == mom.decision_index
        assert em.per_hypothesis_llf == mom.per_hypothesis_llf


def test_common_quarter_turn_leaves_decisions_unchanged():
    for seed in range(8):
        block, channel = _trial(seed, 5, 2, truth=seed % 3, length=300)
        turned = block.samples * 1j
        em_a = classify_em_hml(block, CANDIDATES)
        em_b = classify_em_hml(turned, CANDIDATES)
        assert em_a.decision_index == em_b.decision_index
        np.testing.assert_allclose(em_a.per_hypothesis_llf, em_b.per_hypothesis_llf, rtol=1e-6)
        al_a = classify_alrt(block, CANDIDATES, channel)
        al_b = classify_alrt(turned, CANDIDATES, channel)
        assert al_a.decision_index == al_b.decision_index
        np.testing.assert_allclose(al_a.per_hypothesis_llf, al_b.per_hypothesis_llf, rtol=1e-9)


def test_classification_result_tie_contract():
    result = ClassificationResult(decide([1.0, 1.0, 0.5]), [1.0, 1.0, 0.5], ALRT)
    assert result.decision_index == 0 and result.decision_em is None
