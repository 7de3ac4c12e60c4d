import csv
import hashlib
from pathlib import Path

import pytest

from icumort.errors import ConfigError
from icumort.items import load_registry
from icumort.synth import (
    SynthConfig,
    describe,
    generate,
    inject_anomalies,
    read_manifest,
    sample_patients,
)

EVENT_TABLES = ("CHARTEVENTS", "LABEVENTS", "OUTPUTEVENTS")
ALL_TABLES = EVENT_TABLES + (
    "PATIENTS", "ADMISSIONS", "ICUSTAYS", "DIAGNOSES_ICD", "SERVICES",
)


def _clean_config(n=60, seed=7, **kw):
    defaults = dict(celsius_rate=0.0, error_text_rate=0.0,
                    duplicate_rate=0.0, missing_span_rate=0.0)
    defaults.update(kw)
    return SynthConfig(n_patients=n, seed=seed, **defaults)


def _digest_dir(path: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(path.glob("*.csv"))
    }


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generation_is_byte_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate(_clean_config(n=100), a)
    generate(_clean_config(n=100), b)
    assert _digest_dir(a) == _digest_dir(b)


def test_different_seed_changes_output(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate(_clean_config(n=30, seed=1), a)
    generate(_clean_config(n=30, seed=2), b)
    assert _digest_dir(a) != _digest_dir(b)


def test_all_tables_written_with_headers(tmp_path):
    generate(_clean_config(n=20), tmp_path)
    for name in ALL_TABLES:
        rows = (tmp_path / f"{name}.csv").read_text().splitlines()
        assert rows[0].startswith("ROW_ID,")


def test_referential_integrity(tmp_path):
    generate(_clean_config(n=40), tmp_path)
    subjects = {r["SUBJECT_ID"] for r in _read_rows(tmp_path / "PATIENTS.csv")}
    hadms = {r["HADM_ID"] for r in _read_rows(tmp_path / "ADMISSIONS.csv")}
    stays = {r["ICUSTAY_ID"] for r in _read_rows(tmp_path / "ICUSTAYS.csv")}
    for name in EVENT_TABLES:
        for row in _read_rows(tmp_path / f"{name}.csv"):
            assert row["SUBJECT_ID"] in subjects
            assert row["HADM_ID"] in hadms
            if "ICUSTAY_ID" in row:
                assert row["ICUSTAY_ID"] in stays


def test_every_generated_item_id_is_in_the_registry(tmp_path):
    generate(_clean_config(n=40), tmp_path)
    registry = load_registry()
    for name in EVENT_TABLES:
        for row in _read_rows(tmp_path / f"{name}.csv"):
            assert int(row["ITEMID"]) in registry.entries


def test_mortality_rate_realized_at_scale():
    profiles = sample_patients(SynthConfig(n_patients=10000, seed=7))
    rate = sum(p.label for p in profiles) / len(profiles)
    assert abs(rate - 0.115) < 0.01


def test_label_independent_of_features_in_none_mode():
    profiles = sample_patients(_clean_config(n=2000, signal_mode="none"))
    pos_age = [p.age for p in profiles if p.label]
    neg_age = [p.age for p in profiles if not p.label]
    assert abs(sum(pos_age) / len(pos_age) - sum(neg_age) / len(neg_age)) < 5.0


def test_static_only_mode_skews_positives_older():
    profiles = sample_patients(_clean_config(n=3000, signal_mode="static_only"))
    pos_age = [p.age for p in profiles if p.label]
    neg_age = [p.age for p in profiles if not p.label]
    assert sum(pos_age) / len(pos_age) > sum(neg_age) / len(neg_age) + 2.0


def test_long_stay_fraction_controls_cohort_size():
    lo = sample_patients(_clean_config(n=800, long_stay_frac=0.2))
    hi = sample_patients(_clean_config(n=800, long_stay_frac=0.9))

    def long_first(profiles):
        return sum(1 for p in profiles if p.stays[0].los_hours > 48)

    assert long_first(lo) < long_first(hi)


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_patients=3, seed=1).validate()
    with pytest.raises(ConfigError):
        SynthConfig(n_patients=10, seed=1, mortality_rate=1.5).validate()
    with pytest.raises(ConfigError):
        SynthConfig(n_patients=10, seed=1, signal_mode="magic").validate()


class TestInjection:
    def test_celsius_rate_one_converts_every_temp_row(self, tmp_path):
        config = _clean_config(n=30, celsius_rate=1.0)
        generate(config, tmp_path)
        inject_anomalies(tmp_path, config)
        temps = [r for r in _read_rows(tmp_path / "CHARTEVENTS.csv")
                 if int(r["ITEMID"]) in (676, 678, 223761, 223762)]
        assert temps
        for row in temps:
            assert int(row["ITEMID"]) in (676, 223762)
            assert float(row["VALUENUM"]) < 50.0  # Celsius magnitudes

    def test_error_text_rate_roughly_realized(self, tmp_path):
        config = _clean_config(n=60, error_text_rate=0.1)
        generate(config, tmp_path)
        inject_anomalies(tmp_path, config)
        rows = _read_rows(tmp_path / "CHARTEVENTS.csv")
        frac = sum(r["VALUE"] == "ERROR" for r in rows) / len(rows)
        assert 0.06 < frac < 0.14

    def test_duplicate_manifest_points_at_real_duplicates(self, tmp_path):
        config = _clean_config(n=40, duplicate_rate=0.15)
        generate(config, tmp_path)
        injections = inject_anomalies(tmp_path, config)
        assert injections["duplicate"]
        # Each entry names a (stay, channel, hour) cell; the duplicated row
        # must exist in the rewritten file with a jittered value.
        by_table = {name: _read_rows(tmp_path / f"{name}.csv")
                    for name in EVENT_TABLES}
        entry = injections["duplicate"][0]
        rows = by_table[entry["table"]]
        base = [r for r in rows if int(r["ROW_ID"]) == entry["row_id"]]
        assert base
        twins = [r for r in rows
                 if r["CHARTTIME"][:14] == base[0]["CHARTTIME"][:14]
                 and r.get("ICUSTAY_ID") == base[0].get("ICUSTAY_ID")
                 and r["ITEMID"] == base[0]["ITEMID"]]
        assert len(twins) >= 2

    def test_manifest_written_and_merged(self, tmp_path):
        config = _clean_config(n=30, celsius_rate=0.5, missing_span_rate=0.3)
        generate(config, tmp_path)
        inject_anomalies(tmp_path, config)
        manifest = read_manifest(tmp_path)
        assert manifest["config"]["n_patients"] == 30
        assert set(manifest["injections"]) == {
            "celsius", "error_text", "duplicate", "missing_span",
        }

    def test_injection_deterministic(self, tmp_path):
        config = _clean_config(n=30, celsius_rate=0.4, error_text_rate=0.05,
                               duplicate_rate=0.05, missing_span_rate=0.2)
        a = tmp_path / "a"
        b = tmp_path / "b"
        for d in (a, b):
            generate(config, d)
            inject_anomalies(d, config)
        assert _digest_dir(a) == _digest_dir(b)


class TestDescribe:
    def _write(self, path: Path, name: str, header: str, rows: list[str]):
        (path / f"{name}.csv").write_text(
            "\n".join([header] + rows) + "\n"
        )

    def test_hand_computed_three_patient_fixture(self, tmp_path):
        # Patient 1: adult (50y), one 3-day stay, survives.
        # Patient 2: adult (80y), a 2-hour stay then a 5-day stay, dies.
        # Patient 3: child (10y), one 2-day stay.
        self._write(
            tmp_path, "PATIENTS", "ROW_ID,SUBJECT_ID,DOB",
            [
                "1,1,2051-01-01 00:00:00",
                "2,2,2021-01-01 00:00:00",
                "3,3,2091-01-01 00:00:00",
            ],
        )
        self._write(
            tmp_path, "ADMISSIONS",
            "ROW_ID,SUBJECT_ID,HADM_ID,ADMITTIME,ADMISSION_TYPE,DEATHTIME",
            [
                "1,1,10,2101-01-01 00:00:00,EMERGENCY,",
                "2,2,20,2101-01-01 00:00:00,EMERGENCY,2101-01-20 00:00:00",
                "3,3,30,2101-01-01 00:00:00,EMERGENCY,",
            ],
        )
        self._write(
            tmp_path, "ICUSTAYS",
            "ROW_ID,SUBJECT_ID,HADM_ID,ICUSTAY_ID,INTIME,OUTTIME",
            [
                "1,1,10,100,2101-01-01 00:00:00,2101-01-04 00:00:00",
                "2,2,20,200,2101-01-01 00:00:00,2101-01-01 02:00:00",
                "3,2,20,201,2101-01-02 00:00:00,2101-01-07 00:00:00",
                "4,3,30,300,2101-01-01 00:00:00,2101-01-03 00:00:00",
            ],
        )
        s = describe(tmp_path)
        assert s.patients == 3
        assert s.adult_patients == 2
        assert s.median_age_adult == pytest.approx(65.0, abs=0.1)
        assert s.mortality_adult == 0.5
        assert s.admissions == 3
        assert s.icu_stays == 4
        assert s.icu_stays_adult == 3
        assert s.long_icu_stays_adult == 2  # the 2h stay is not long
        assert s.first_long_icu_stays_adult == 2
        assert s.avg_los_long_days == pytest.approx(4.0, abs=1e-9)
        assert s.avg_los_days == pytest.approx((3 + 5 + 2 / 24) / 3, abs=1e-9)
        assert s.avg_los_first_long_days == pytest.approx(4.0, abs=1e-9)

    def test_empty_tables_warn(self, tmp_path):
        self._write(tmp_path, "PATIENTS", "ROW_ID,SUBJECT_ID,DOB", [])
        self._write(tmp_path, "ADMISSIONS",
                    "ROW_ID,SUBJECT_ID,HADM_ID,ADMITTIME,ADMISSION_TYPE", [])
        self._write(tmp_path, "ICUSTAYS",
                    "ROW_ID,SUBJECT_ID,HADM_ID,ICUSTAY_ID,INTIME,OUTTIME", [])
        s = describe(tmp_path)
        assert s.patients == 0
        assert s.warning
        assert "0" in s.to_text()

    def test_describe_runs_on_generated_data(self, tmp_path):
        generate(_clean_config(n=50), tmp_path)
        s = describe(tmp_path)
        assert s.patients == 50
        assert 0 < s.adult_patients <= 50
        assert s.icu_stays >= 50
        text = s.to_text()
        assert "adult_patients" in text
