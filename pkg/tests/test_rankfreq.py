import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsdecoder.errors import DomainError, InputFormatError
from qsdecoder.powerlaw import PowerLawSpec
from qsdecoder.rankfreq import (
    FrameDump,
    default_rank_range,
    fit_powerlaw,
    frames_to_csv,
    frames_to_json,
    ingest_frames,
    rank_frequency,
    resolvable_rank_range,
    synthetic_frames,
)


def test_ingest_single_uniform_frame(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("symbol_0,symbol_1,symbol_2,symbol_3\n0.25,0.25,0.25,0.25\n")
    dump = ingest_frames(path)
    assert len(dump) == 1 and dump.warnings == 0
    np.testing.assert_array_equal(dump.frames, [[0.25] * 4])
    assert dump.symbols == ("symbol_0", "symbol_1", "symbol_2", "symbol_3")


def test_ingest_renormalizes_with_warning(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b\n0.502,0.5\n0.5,0.5000001\n0.5,0.5\n")
    dump = ingest_frames(path)
    assert dump.warnings == 1
    np.testing.assert_allclose(dump.frames.sum(axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize(
    "text, line",
    [("a,b\n0.5,0.5\n0.5\n", 3), ("a,b\n0.5,x\n", 2), ("a,b\n0.5,0.5\n-0.5,1.5\n", 3), ("a,b\n0,0\n", 2)],
)
def test_ingest_reports_line_numbers(tmp_path, text, line):
    path = tmp_path / "f.csv"
    path.write_text(text)
    with pytest.raises(InputFormatError) as err:
        ingest_frames(path)
    assert err.value.line == line


def test_ingest_json_and_round_trips(tmp_path):
    dump = synthetic_frames(29, 3.03, 1000, 0)
    assert len(dump) == 1000 and dump.warnings == 0
    for name, text in (("d.json", frames_to_json(dump)), ("d.csv", frames_to_csv(dump))):
        path = tmp_path / name
        path.write_text(text)
        again = ingest_frames(path)
        np.testing.assert_array_equal(again.frames, dump.frames)
        assert again.symbols == dump.symbols and again.warnings == 0


def test_ingest_json_errors(tmp_path):
    path = tmp_path / "d.json"
    path.write_text('{"symbols": ["a"]}')
    with pytest.raises(InputFormatError):
        ingest_frames(path)
    path.write_text('{"symbols": ["a", "b"],\n "frames": [[0.5, 0.5], [1.0]]}')
    with pytest.raises(InputFormatError) as err:
        ingest_frames(path)
    assert err.value.line == 2
    with pytest.raises(InputFormatError):
        ingest_frames(tmp_path / "missing.csv")


def test_profile_of_uniform_frame_is_constant():
    dump = FrameDump(np.full((1, 5), 0.2), tuple("abcde"))
    np.testing.assert_array_equal(rank_frequency(dump), 0.2)


def test_profile_of_identical_power_law_frames_is_pmf():
    p = PowerLawSpec(29, 3.03).probabilities
    dump = FrameDump(np.tile(p, (7, 1)), tuple(str(i) for i in range(29)))
    np.testing.assert_allclose(rank_frequency(dump), p, rtol=1e-15)


def test_profile_of_permuted_frames_recovers_pmf():
    p = PowerLawSpec(29, 3.03).probabilities
    profile = rank_frequency(synthetic_frames(29, 3.03, 1000, 1))
    assert np.max(np.abs(profile - p)) <= 0.005
    hist = rank_frequency(synthetic_frames(29, 3.03, 1000, 1, mode="histogram", draws=1000))
    assert np.max(np.abs(hist - p)) <= 0.005


@given(st.integers(1, 20), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_profile_is_nonincreasing(frames, width, seed):
    rng = np.random.default_rng(seed)
    raw = rng.random((frames, width)) ** 4
    dump = FrameDump(raw / raw.sum(axis=1, keepdims=True), tuple(map(str, range(width))))
    profile = rank_frequency(dump)
    assert np.all(np.diff(profile) <= 0)


def test_exact_inverse_cube_profile():
    r = np.arange(1, 21, dtype=float)
    fit = fit_powerlaw(r**-3.0, (1, 20))
    assert fit.b == pytest.approx(3.0, abs=1e-9)
    assert fit.a == pytest.approx(1.0, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)


def test_constant_profile_has_zero_exponent():
    fit = fit_powerlaw(np.full(10, 0.1))
    assert fit.b == 0.0 and fit.a == pytest.approx(0.1)


@given(st.floats(1e-3, 1e3), st.floats(0.5, 5.0))
def test_fit_is_scale_equivariant(scale, k):
    r = np.arange(1, 30, dtype=float)
    profile = r**-k * (1 + 0.05 * np.sin(r))
    base = fit_powerlaw(profile)
    scaled = fit_powerlaw(scale * profile)
    assert scaled.a == pytest.approx(scale * base.a, rel=1e-9)
    assert scaled.b == pytest.approx(base.b, abs=1e-9)


def test_fit_errors():
    with pytest.raises(DomainError):
        fit_powerlaw(np.array([0.5, 0.3, 0.0, 0.2]))
    with pytest.raises(DomainError):
        fit_powerlaw(np.array([0.5, 0.3, 0.2]), (1, 2))
    with pytest.raises(DomainError):
        fit_powerlaw(np.array([0.5, 0.3, 0.2]), (1, 4))


def test_fit_result_json():
    fit = fit_powerlaw(np.arange(1, 11, dtype=float) ** -2.0)
    data = json.loads(fit.to_json())
    assert set(data) == {"a", "b", "stderr_a", "stderr_b", "r2", "rank_range"}
    assert data["rank_range"] == [1, 10]


def test_fit_on_generator_recovers_exponent():
    dump = synthetic_frames(29, 3.03, 10**4, 2)
    profile = rank_frequency(dump)
    fit = fit_powerlaw(profile, (1, 25))
    assert 2.98 <= fit.b <= 3.08


@pytest.mark.parametrize("k", [1.5, 2.0, 3.03])
def test_recovery_from_exact_frames(k):
    profile = rank_frequency(synthetic_frames(29, k, 10**4, 3))
    fit = fit_powerlaw(profile, default_rank_range(profile))
    assert fit.b == pytest.approx(k, abs=0.05)


@pytest.mark.parametrize("k", [1.5, 2.0, 3.03])
def test_recovery_from_histogram_frames(k):
    profile = rank_frequency(synthetic_frames(29, k, 10**4, 4, mode="histogram", draws=1000))
    fit = fit_powerlaw(profile, resolvable_rank_range(profile, 1000))
    assert fit.b == pytest.approx(k, abs=0.15)


def test_tail_cutoff_drops_underflowing_ranks():
    profile = np.arange(1, 101, dtype=float) ** -12.0
    profile /= profile.sum()
    lo, hi = default_rank_range(profile)
    assert lo == 1 and hi < 100 and profile[hi - 1] >= 10 * np.finfo(float).eps
    assert default_rank_range(profile, tail_cutoff=False) == (1, 100)
