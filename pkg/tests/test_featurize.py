from datetime import datetime, timedelta

import numpy as np
import pytest

from icumort.cohort import CohortStay, MEDICAL
from icumort.errors import ConfigError
from icumort.featurize import (
    FeatureTensor,
    PopulationStats,
    aggregate_gcs,
    assemble_hourly,
    bin_hourly,
    bin_hourly_sum,
    build_tensor,
    compute_population_stats,
    finish_tensor,
    impute,
    read_features,
    standardize_tensor,
    to_fahrenheit,
    write_features,
)
from icumort.items import N_CHANNELS, load_registry
from icumort.tables import RawEvent

T0 = datetime(2101, 1, 1)


def make_stay(stay_id=100, label=False):
    return CohortStay(
        icustay_id=stay_id,
        subject_id=1,
        hadm_id=10,
        intime=T0,
        outtime=T0 + timedelta(hours=72),
        age_years=50.0,
        admission_category=MEDICAL,
        aids=False,
        hematologic_malignancy=False,
        metastatic_cancer=True,
        label_mortality=label,
    )


def flat_stats(mean=0.0, sd=1.0):
    return PopulationStats(
        means=np.full(N_CHANNELS, mean),
        sds=np.full(N_CHANNELS, sd),
        age_mean=50.0,
        age_sd=10.0,
    )


class TestToFahrenheit:
    def test_celsius_conversion(self):
        assert to_fahrenheit(37.0, "temp_c") == pytest.approx(98.6)
        assert to_fahrenheit(0.0, "temp_c") == 32.0

    def test_fahrenheit_passthrough(self):
        assert to_fahrenheit(98.6, "temp_f") == 98.6

    def test_other_subrole_rejected(self):
        with pytest.raises(ConfigError):
            to_fahrenheit(1.0, "plain")


class TestBinHourly:
    def test_single_event_lands_in_its_hour(self):
        slots = bin_hourly([(3 * 60 + 15, 80.0)], seed=1)
        assert slots[3] == 80.0
        assert all(s is None for i, s in enumerate(slots) if i != 3)

    def test_duplicate_hour_pick_is_deterministic(self):
        events = [(5 * 60 + 1, 10.0), (5 * 60 + 40, 20.0)]
        first = bin_hourly(events, seed=7)[5]
        assert first in (10.0, 20.0)
        assert bin_hourly(events, seed=7)[5] == first
        assert bin_hourly(list(reversed(events)), seed=7)[5] == first

    def test_pick_varies_with_seed(self):
        events = [(0, float(v)) for v in range(10)]
        picks = {bin_hourly(events, seed=s)[0] for s in range(30)}
        assert len(picks) > 1

    def test_event_at_window_end_is_ignored(self):
        assert all(v is None for v in bin_hourly([(48 * 60, 1.0)], seed=1))

    def test_sum_binning_adds_volumes(self):
        slots = bin_hourly_sum([(120, 100.0), (130, 50.0), (300, 30.0)])
        assert slots[2] == 150.0
        assert slots[5] == 30.0
        assert slots[0] is None


class TestAggregateGcs:
    def test_full_components_sum(self):
        v = [5.0] + [None] * 47
        m = [6.0] + [None] * 47
        e = [4.0] + [None] * 47
        assert aggregate_gcs(v, m, e)[0] == 15.0

    def test_minimal_score(self):
        one = [1.0] * 48
        assert aggregate_gcs(one, one, one) == [3.0] * 48

    def test_any_missing_component_blanks_the_hour(self):
        v = [None, None, 5.0] + [None] * 45
        m = [6.0, 6.0, 6.0] + [None] * 45
        e = [4.0, 4.0, 4.0] + [None] * 45
        out = aggregate_gcs(v, m, e)
        assert out[0] is None and out[1] is None and out[2] == 15.0


class TestImpute:
    def test_forward_then_backward_trace(self):
        series = [None, 7.0, None, None, 9.0] + [None] * 43
        expected = [7.0, 7.0, 7.0, 7.0] + [9.0] * 44
        assert impute(series, population_mean=0.0) == expected

    def test_all_missing_takes_population_mean(self):
        assert impute([None] * 48, 80.0) == [80.0] * 48

    def test_fully_observed_unchanged(self):
        series = [float(i) for i in range(48)]
        assert impute(series, 0.0) == series

    def test_idempotent_and_preserves_observations(self):
        series = [None, 3.0, None, 8.0] + [None] * 44
        once = impute(series, 5.0)
        assert impute(once, 5.0) == once
        assert once[1] == 3.0 and once[3] == 8.0


class TestPopulationStats:
    def test_two_point_channel(self):
        series = [[[10.0, 20.0] + [None] * 46] + [[1.0] + [None] * 47] * 12]
        stats = compute_population_stats(series, ages=[40.0])
        assert stats.means[0] == 15.0
        assert stats.sds[0] == 5.0

    def test_single_observation_has_zero_sd(self):
        series = [[[7.0] + [None] * 47] * 13]
        stats = compute_population_stats(series, ages=[40.0])
        assert stats.means[3] == 7.0
        assert stats.sds[3] == 0.0

    def test_empty_channel_is_an_error_naming_it(self):
        series = [[[7.0] + [None] * 47] * 12 + [[None] * 48]]
        with pytest.raises(ConfigError, match="Bilirubin"):
            compute_population_stats(series, ages=[40.0])


class TestStandardize:
    def test_mean_maps_to_zero_and_flags_pass_through(self):
        stats = flat_stats(mean=4.0, sd=2.0)
        tensor = FeatureTensor(
            stay_id=1,
            seq=np.full((48, 13), 4.0),
            static=np.array([50.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            label=0,
        )
        out = standardize_tensor(tensor, stats)
        assert np.all(out.seq == 0.0)
        assert out.static[0] == 0.0
        assert list(out.static[1:]) == [0.0, 1.0, 0.0, 0.0, 1.0, 0.0]

    def test_constant_channel_guard(self):
        # sd 0 channels hold a constant, so entries sit at the mean and the
        # guarded denominator never blows up.
        stats = flat_stats(mean=9.0, sd=0.0)
        tensor = FeatureTensor(
            stay_id=1,
            seq=np.full((48, 13), 9.0),
            static=np.array([50.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            label=0,
        )
        out = standardize_tensor(tensor, stats)
        assert np.all(out.seq == 0.0)
        assert np.all(np.isfinite(out.seq))


def _event(item_id, minute, value, stay_id=100, text=None):
    return RawEvent(
        subject_id=1,
        hadm_id=10,
        icustay_id=stay_id,
        item_id=item_id,
        charttime=T0 + timedelta(minutes=minute),
        value_num=value,
        value_text=text,
        unit=None,
    )


@pytest.fixture(scope="module")
def registry():
    return load_registry()


class TestBuildTensor:
    def test_zero_events_gives_population_mean_matrix(self, registry):
        stats = flat_stats(mean=5.0, sd=1.0)
        tensor = build_tensor(make_stay(), [], registry, stats, global_seed=1,
                              standardize=False)
        assert np.all(tensor.seq == 5.0)
        assert tensor.static[0] == 50.0
        assert tensor.static[1:4].sum() == 1.0

    def test_golden_hand_traced_matrix(self, registry):
        # Hand-placed events across five channels; everything else stays at
        # the population mean. Expected columns are written out literally.
        events = [
            _event(211, 3 * 60 + 10, 80.0),              # heart rate, hour 3
            _event(676, 5 * 60, 37.0),                    # 37 C -> 98.6 F
            _event(723, 10, 5.0),                         # coma components
            _event(454, 20, 6.0),
            _event(184, 30, 4.0),
            _event(40055, 2 * 60 + 5, 100.0),             # urine, summed
            _event(40055, 2 * 60 + 50, 50.0),
            _event(51006, 10 * 60, 20.0),                 # BUN step change
            _event(51006, 40 * 60, 30.0),
        ]
        stats = flat_stats(mean=0.0, sd=1.0)
        tensor = build_tensor(make_stay(), events, registry, stats,
                              global_seed=1, standardize=False)
        assert list(tensor.seq[:, 2]) == [80.0] * 48
        assert list(tensor.seq[:, 3]) == [98.6] * 48
        assert list(tensor.seq[:, 0]) == [15.0] * 48
        assert list(tensor.seq[:, 6]) == [150.0] * 48
        assert list(tensor.seq[:, 7]) == [20.0] * 40 + [30.0] * 8
        for idle in (1, 4, 5, 8, 9, 10, 11, 12):
            assert list(tensor.seq[:, idle]) == [0.0] * 48

    def test_label_passthrough(self, registry):
        tensor = build_tensor(make_stay(label=True), [], registry,
                              flat_stats(), global_seed=1)
        assert tensor.label == 1

    def test_irrigant_inflow_subtracted(self, registry):
        events = [
            _event(227489, 60, 200.0),  # irrigant/urine out
            _event(227488, 61, 80.0),   # irrigant in
        ]
        tensor = build_tensor(make_stay(), events, registry, flat_stats(),
                              global_seed=1, standardize=False)
        assert tensor.seq[1, 6] == 120.0

    def test_window_and_stay_filtering(self, registry):
        events = [
            _event(211, 48 * 60, 99.0),           # at window end: ignored
            _event(211, 60, 80.0, stay_id=999),   # other stay: ignored
        ]
        tensor = build_tensor(make_stay(), events, registry,
                              flat_stats(mean=1.0), global_seed=1,
                              standardize=False)
        assert np.all(tensor.seq[:, 2] == 1.0)

    def test_deterministic_across_runs(self, registry):
        events = [
            _event(211, 5 * 60 + 1, 70.0),
            _event(211, 5 * 60 + 2, 90.0),
        ]
        a = build_tensor(make_stay(), events, registry, flat_stats(),
                         global_seed=42)
        b = build_tensor(make_stay(), list(reversed(events)), registry,
                         flat_stats(), global_seed=42)
        assert np.array_equal(a.seq, b.seq)


def test_assemble_hourly_gcs_partial_components():
    stay_events = [[] for _ in range(N_CHANNELS)]
    stay_events[0] = [
        (10, 5.0, "gcs_verbal"),
        (20, 6.0, "gcs_motor"),
        # eyes missing in hour 0
        (70, 4.0, "gcs_verbal"),
        (80, 6.0, "gcs_motor"),
        (90, 4.0, "gcs_eyes"),
    ]
    series = assemble_hourly(1, stay_events, global_seed=3)
    assert series[0][0] is None
    assert series[0][1] == 14.0


def test_feature_csv_round_trip(tmp_path):
    registry = load_registry()
    stats = flat_stats(mean=2.0, sd=1.0)
    tensors = [
        finish_tensor(make_stay(stay_id=sid, label=sid % 2 == 0),
                      [[float(sid)] + [None] * 47] * 13, stats,
                      standardize=False)
        for sid in (101, 102, 103)
    ]
    split = {101: "train", 102: "val", 103: "test"}
    write_features(tmp_path, tensors, split)
    back, split_back = read_features(tmp_path)
    assert split_back == split
    for orig, loaded in zip(tensors, back):
        assert loaded.stay_id == orig.stay_id
        assert loaded.label == orig.label
        assert np.allclose(loaded.seq, orig.seq, atol=1e-7)
        assert np.allclose(loaded.static, orig.static, atol=1e-7)
