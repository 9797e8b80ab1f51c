import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabr.agents import (ACTIONS, AGENTS, FEATURES, GLOBAL_STATE_LEN, K, N_FEATURES,
                         ActionError, AgentObservation, AlignmentError, apply_action,
                         assemble_observation, build_global_state, global_sequence,
                         mask_for_foundation, steps_per_decision)
from mabr.codec import EncoderConfig


def _rows(n, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(n, N_FEATURES))


def test_action_space_sizes():
    assert [len(ACTIONS[k]) for k in ("qua", "fr", "res")] == [7, 7, 4]
    assert steps_per_decision("res") == 10 and steps_per_decision("qua") == 1


def test_episode_start_is_all_zero():
    for k in AGENTS:
        obs = assemble_observation(k, [])
        assert obs.values.shape == (K, N_FEATURES) and not obs.values.any()


def test_window_alignment():
    rows = _rows(70)
    q = assemble_observation("qua", rows)
    np.testing.assert_array_equal(q.values, rows[-6:])
    r = assemble_observation("res", rows)
    np.testing.assert_allclose(r.values[-1], rows[60:70].mean(axis=0))
    np.testing.assert_allclose(r.values[0], rows[10:20].mean(axis=0))
    short = assemble_observation("qua", rows[:2])
    assert not short.values[:4].any()
    np.testing.assert_array_equal(short.values[4:], rows[:2])


def test_constant_rf_feature():
    rows = np.zeros((6, N_FEATURES))
    rows[:, FEATURES.index("c")] = 23 / 51
    obs = assemble_observation("qua", rows)
    assert np.all(obs.feature("c") == 23 / 51)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 51), st.sampled_from(ACTIONS["qua"]))
def test_apply_qua_clamps(rf, delta):
    out = apply_action("qua", delta, EncoderConfig(rf, "1080p", 30))
    assert out.rate_factor == min(max(rf + delta, 0), 51)


def test_apply_examples():
    cur = EncoderConfig(23, "1080p", 30)
    assert apply_action("qua", 8, cur).rate_factor == 31
    assert apply_action("qua", 8, EncoderConfig(50, "1080p", 30)).rate_factor == 51
    assert apply_action("fr", 0, cur).frame_rate == 0
    assert apply_action("res", "720p", cur).resolution == "720p"
    with pytest.raises(ActionError):
        apply_action("qua", 3, cur)
    with pytest.raises(ActionError):
        apply_action("res", "4k", cur)


@pytest.mark.parametrize("kind,masked", [("qua", ("y", "f")), ("fr", ("y", "c")), ("res", ("f", "c"))])
def test_foundation_mask(kind, masked):
    obs = assemble_observation(kind, _rows(80, 3))
    m = mask_for_foundation(kind, obs)
    for i, name in enumerate(FEATURES):
        if name in masked:
            assert not m.values[:, i].any() and m.mask[i]
        else:
            np.testing.assert_array_equal(m.values[:, i], obs.values[:, i])
            assert not m.mask[i]
    again = mask_for_foundation(kind, m)
    np.testing.assert_array_equal(again.values, m.values)
    assert again.mask == m.mask


def test_global_state_layout():
    zeros = [AgentObservation(k, np.zeros((K, N_FEATURES))) for k in AGENTS]
    gs = build_global_state(*zeros, [0, 0, 0])
    assert GLOBAL_STATE_LEN == 162 and gs.vector.shape == (162,)
    assert gs.vector.sum() == 3.0
    with pytest.raises(AlignmentError):
        build_global_state(zeros[1], zeros[0], zeros[2], [0, 0, 0])
    late = AgentObservation("fr", np.zeros((K, N_FEATURES)), timestamp=0.1)
    with pytest.raises(AlignmentError):
        build_global_state(zeros[0], zeros[1], late, [0, 0, 0])


def test_global_sequence_reshape():
    obs = [AgentObservation(k, _rows(K, i)) for i, k in enumerate(AGENTS)]
    gs = build_global_state(*obs, [1, 2, 3])
    seq = global_sequence(gs.vector)
    assert seq.shape == (K, 42)
    for t in range(K):
        np.testing.assert_array_equal(seq[t, :8], obs[0].values[t])
        np.testing.assert_array_equal(seq[t, 16:24], obs[2].values[t])
        np.testing.assert_array_equal(seq[t, 24:], gs.vector[144:])
    batch = global_sequence(np.stack([gs.vector, gs.vector]))
    assert batch.shape == (2, K, 42)
