"""Seeded synthetic EHR generator: schema-faithful CSVs at desk scale.

Produces the eight tables the pipeline reads, with referential integrity,
future-shifted timestamps (mimicking de-identification, including the
shifted birth dates of the very old), controllable cohort composition, and
three label-signal modes:

  * ``none``: labels drawn independently of everything.
  * ``static_only``: positives skew older with more comorbidities.
  * ``temporal_trend``: positive stays drift on heart rate (up) and systolic
    pressure (down) across hours 24-48, while the hour-47 marginals of the
    two classes coincide by construction. A model that reads the whole
    sequence can separate the classes; one that reads only the last hour
    cannot.

``inject_anomalies`` then dirties the files the way real exports are dirty
(Celsius temperature rows, "ERROR" value texts, duplicated same-hour
measurements, missing spans) and records a manifest so tests can verify the
cleaning stage recovered every case.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

import numpy as np

from .cohort import first_stay_per_patient
from .errors import ConfigError
from .items import ItemRegistry, load_registry, resolve_item
from .seeding import SplitMix64, derive_seed
from .tables import (
    ADMISSIONS,
    ICUSTAYS,
    PATIENTS,
    TS_FORMAT,
    load_table,
    table_path,
)

BASE_INTIME = datetime(2101, 1, 1)
DAYS_PER_YEAR = 365.2425
MANIFEST_NAME = "synth_manifest.json"

TABLE_COLUMNS = {
    "PATIENTS": ["ROW_ID", "SUBJECT_ID", "GENDER", "DOB", "DOD", "DOD_HOSP",
                 "DOD_SSN", "EXPIRE_FLAG"],
    "ADMISSIONS": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "ADMITTIME", "DISCHTIME",
                   "DEATHTIME", "ADMISSION_TYPE", "ADMISSION_LOCATION",
                   "DISCHARGE_LOCATION", "INSURANCE", "LANGUAGE", "RELIGION",
                   "MARITAL_STATUS", "ETHNICITY", "EDREGTIME", "EDOUTTIME",
                   "DIAGNOSIS", "HOSPITAL_EXPIRE_FLAG", "HAS_CHARTEVENTS_DATA"],
    "ICUSTAYS": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "ICUSTAY_ID", "DBSOURCE",
                 "FIRST_CAREUNIT", "LAST_CAREUNIT", "FIRST_WARDID",
                 "LAST_WARDID", "INTIME", "OUTTIME", "LOS"],
    "CHARTEVENTS": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "ICUSTAY_ID", "ITEMID",
                    "CHARTTIME", "STORETIME", "CGID", "VALUE", "VALUENUM",
                    "VALUEUOM", "WARNING", "ERROR", "RESULTSTATUS", "STOPPED"],
    "LABEVENTS": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "ITEMID", "CHARTTIME",
                  "VALUE", "VALUENUM", "VALUEUOM", "FLAG"],
    "OUTPUTEVENTS": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "ICUSTAY_ID",
                     "CHARTTIME", "ITEMID", "VALUE", "VALUEUOM", "STORETIME",
                     "CGID", "STOPPED", "NEWBOTTLE", "ISERROR"],
    "DIAGNOSES_ICD": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"],
    "SERVICES": ["ROW_ID", "SUBJECT_ID", "HADM_ID", "TRANSFERTIME",
                 "PREV_SERVICE", "CURR_SERVICE"],
}


def _default_missing() -> dict[str, float]:
    # Probability that a given hour has no measurement, per channel. Vitals
    # are charted most hours; labs are drawn a few times a day.
    return {
        "GCS": 0.35, "SBP": 0.25, "HeartRate": 0.15, "TempF": 0.5,
        "PaO2": 0.88, "FiO2": 0.8, "UrineOutput": 0.3, "BUN": 0.9,
        "WBC": 0.9, "Bicarbonate": 0.9, "Sodium": 0.88, "Potassium": 0.88,
        "Bilirubin": 0.92,
    }


@dataclass
class SynthConfig:
    n_patients: int
    seed: int
    mortality_rate: float = 0.115
    readmission_rate: float = 0.15
    long_stay_frac: float = 0.8
    age_min: float = 14.0
    age_max: float = 97.0
    signal_mode: str = "none"
    effect_size: float = 1.0
    missing_scale: float = 1.0
    missing_rate: dict[str, float] = field(default_factory=_default_missing)
    celsius_rate: float = 0.25
    error_text_rate: float = 0.05
    duplicate_rate: float = 0.05
    missing_span_rate: float = 0.1

    def validate(self) -> None:
        if self.n_patients < 5:
            raise ConfigError("n_patients must be at least 5")
        rates = {
            "mortality_rate": self.mortality_rate,
            "readmission_rate": self.readmission_rate,
            "long_stay_frac": self.long_stay_frac,
            "celsius_rate": self.celsius_rate,
            "error_text_rate": self.error_text_rate,
            "duplicate_rate": self.duplicate_rate,
            "missing_span_rate": self.missing_span_rate,
            **{f"missing_rate[{k}]": v for k, v in self.missing_rate.items()},
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.age_min >= self.age_max or self.age_min < 0:
            raise ConfigError("age range must satisfy 0 <= age_min < age_max")
        if self.signal_mode not in ("none", "static_only", "temporal_trend"):
            raise ConfigError(f"unknown signal_mode {self.signal_mode!r}")
        if self.effect_size < 0 or self.missing_scale < 0:
            raise ConfigError("effect_size and missing_scale must be nonnegative")


# Per-channel value model: (mean, between-stay sd, within-stay sd, decimals).
_VALUE_MODEL = {
    "SBP": (120.0, 14.0, 8.0, 1),
    "HeartRate": (80.0, 12.0, 6.0, 1),
    "TempF": (98.6, 0.7, 0.4, 1),
    "PaO2": (95.0, 15.0, 10.0, 1),
    "FiO2": (50.0, 14.0, 5.0, 1),
    "BUN": (20.0, 8.0, 2.0, 1),
    "WBC": (9.0, 3.0, 0.8, 2),
    "Bicarbonate": (24.0, 4.0, 1.0, 1),
    "Sodium": (139.0, 4.0, 1.2, 1),
    "Potassium": (4.1, 0.5, 0.15, 2),
    "Bilirubin": (1.2, 0.8, 0.15, 2),
}

# Drift injected for positive-label stays in temporal_trend mode, reached
# linearly across hours 24-47: rising heart rate and fever, falling systolic
# pressure. The class means coincide at hour 47.
_TREND_DELTA = {"HeartRate": 24.0, "SBP": -28.0, "TempF": 1.5}

_CHANNEL_ITEMS = {
    "SBP": (51, 442, 455, 6701, 220179, 220050),
    "HeartRate": (211, 220045),
    "TempF": (678, 223761),
    "PaO2": (50821,),
    "FiO2": (223835, 3420, 3422, 50816),
    "UrineOutput": (40055, 226559, 40069, 43175),
    "BUN": (51006,),
    "WBC": (51300, 51301),
    "Bicarbonate": (50882,),
    "Sodium": (50983,),
    "Potassium": (50822, 50971),
    "Bilirubin": (50885,),
}
_GCS_ITEMS = {
    "gcs_verbal": (723, 223900),
    "gcs_motor": (454, 223901),
    "gcs_eyes": (184, 220739),
}

_MEDICAL_SERVICES = ("MED", "CMED", "OMED", "NMED", "GU")
_SURGICAL_SERVICES = ("CSURG", "NSURG", "TSURG", "SURG", "ORTHO", "VSURG")
_BACKGROUND_ICD9 = ("4019", "25000", "41401", "5849", "51881", "2859", "42731")
_AIDS_CODES = ("042", "0429", "0431")
_HEM_CODES = ("20280", "20400", "20500", "20760")
_MET_CODES = ("1983", "1970", "19889", "1962")


def _fmt_ts(ts: datetime) -> str:
    return ts.strftime(TS_FORMAT)


class _TableWriter:
    def __init__(self, directory: Path, name: str):
        self.columns = TABLE_COLUMNS[name]
        self._fh = open(directory / f"{name}.csv", "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)
        self.row_id = 0

    def write(self, **fields) -> int:
        self.row_id += 1
        row = [fields.get(c, "") for c in self.columns]
        row[0] = self.row_id
        self._writer.writerow(row)
        return self.row_id

    def close(self) -> None:
        self._fh.close()


@dataclass
class _StaySpec:
    icustay_id: int
    intime: datetime
    los_hours: float

    @property
    def outtime(self) -> datetime:
        return self.intime + timedelta(hours=self.los_hours)


@dataclass
class PatientProfile:
    """Everything about one synthetic patient except the event stream."""

    subject_id: int
    hadm_id: int
    age: float
    label: bool
    flag_inconsistent: bool
    admission_type: str
    service: str
    icd9_codes: list[str]
    stays: list[_StaySpec]
    dob: datetime


def sample_patients(config: SynthConfig) -> list[PatientProfile]:
    """Draw all patient-level structure; deterministic per (seed, config)."""
    profiles: list[PatientProfile] = []
    next_stay_id = 200001
    for i in range(config.n_patients):
        subject_id = 10001 + i
        rng = np.random.default_rng(derive_seed(config.seed, "synth", subject_id))
        label = bool(rng.random() < config.mortality_rate)
        age = float(rng.uniform(config.age_min, config.age_max))
        age_shift = float(rng.uniform(4.0, 12.0))
        if config.signal_mode == "static_only" and label:
            age = min(config.age_max, age + age_shift * config.effect_size)

        first_intime = BASE_INTIME + timedelta(
            minutes=int(rng.integers(0, 10 * 365 * 24 * 60))
        )
        if rng.random() < config.long_stay_frac:
            first_los = float(rng.uniform(49.0, 240.0))
        else:
            first_los = float(rng.uniform(2.0, 48.0))
        stays = [_StaySpec(next_stay_id, first_intime, first_los)]
        next_stay_id += 1
        while len(stays) < 3 and rng.random() < config.readmission_rate:
            gap = float(rng.uniform(6.0, 96.0))
            los = float(rng.uniform(5.0, 120.0))
            stays.append(
                _StaySpec(next_stay_id, stays[-1].outtime + timedelta(hours=gap), los)
            )
            next_stay_id += 1

        admission_type = str(
            rng.choice(["ELECTIVE", "EMERGENCY", "URGENT"], p=[0.2, 0.65, 0.15])
        )
        if admission_type == "ELECTIVE":
            surgical = rng.random() < 0.7
        else:
            surgical = rng.random() < 0.3
        service = str(
            rng.choice(_SURGICAL_SERVICES if surgical else _MEDICAL_SERVICES)
        )

        boost = (1.0 + 2.5 * config.effect_size
                 if config.signal_mode == "static_only" and label else 1.0)
        codes = list(rng.choice(_BACKGROUND_ICD9, size=2, replace=False))
        if rng.random() < min(1.0, 0.02 * boost):
            codes.append(str(rng.choice(_AIDS_CODES)))
        if rng.random() < min(1.0, 0.05 * boost):
            codes.append(str(rng.choice(_HEM_CODES)))
        if rng.random() < min(1.0, 0.08 * boost):
            codes.append(str(rng.choice(_MET_CODES)))

        if age > 89.0:
            dob = first_intime - timedelta(days=300.2 * DAYS_PER_YEAR)
        else:
            dob = first_intime - timedelta(days=age * DAYS_PER_YEAR)
        flag_inconsistent = bool(rng.random() < 0.01)
        profiles.append(
            PatientProfile(
                subject_id=subject_id,
                hadm_id=500000 + i,
                age=age,
                label=label,
                flag_inconsistent=flag_inconsistent,
                admission_type=admission_type,
                service=service,
                icd9_codes=codes,
                stays=stays,
                dob=dob,
            )
        )
    return profiles


def _stay_channel_values(rng: np.random.Generator, channel: str,
                         horizon: int, label: bool,
                         config: SynthConfig) -> np.ndarray:
    """Hourly true values for one stay and channel (before missingness)."""
    mean, between, within, _ = _VALUE_MODEL[channel]
    base = mean + between * rng.standard_normal()
    values = base + within * rng.standard_normal(horizon)
    if (config.signal_mode == "temporal_trend" and label
            and channel in _TREND_DELTA):
        hours = np.arange(horizon)
        ramp = np.clip((hours - 24.0) / 23.0, 0.0, 1.0)
        values += _TREND_DELTA[channel] * config.effect_size * (ramp - 1.0)
    return values


def _presence_mask(rng: np.random.Generator, missing: float, scale: float,
                   horizon: int) -> np.ndarray:
    p_missing = min(1.0, missing * scale)
    return rng.random(horizon) >= p_missing


def generate(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write the eight tables plus a manifest; byte-deterministic per seed."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = load_registry()
    profiles = sample_patients(config)

    writers = {name: _TableWriter(out_dir, name) for name in TABLE_COLUMNS}
    counts = {"patients": 0, "stays": 0, "events": 0}
    try:
        for profile in profiles:
            counts["patients"] += 1
            rng = np.random.default_rng(
                derive_seed(config.seed, "synth-events", profile.subject_id)
            )
            last_out = profile.stays[-1].outtime
            admit = profile.stays[0].intime - timedelta(
                minutes=int(rng.integers(60, 12 * 60))
            )
            disch = last_out + timedelta(minutes=int(rng.integers(12 * 60, 240 * 60)))
            death = disch if profile.label else None
            flag = int(profile.label)
            if profile.flag_inconsistent:
                flag = 1 - flag
            writers["PATIENTS"].write(
                SUBJECT_ID=profile.subject_id,
                GENDER="F" if rng.random() < 0.5 else "M",
                DOB=_fmt_ts(profile.dob),
                DOD_HOSP=_fmt_ts(death) if death else "",
                EXPIRE_FLAG=int(profile.label),
            )
            writers["ADMISSIONS"].write(
                SUBJECT_ID=profile.subject_id,
                HADM_ID=profile.hadm_id,
                ADMITTIME=_fmt_ts(admit),
                DISCHTIME=_fmt_ts(disch),
                DEATHTIME=_fmt_ts(death) if death else "",
                ADMISSION_TYPE=profile.admission_type,
                INSURANCE="Medicare",
                ETHNICITY="UNKNOWN",
                HOSPITAL_EXPIRE_FLAG=flag,
                HAS_CHARTEVENTS_DATA=1,
            )
            writers["SERVICES"].write(
                SUBJECT_ID=profile.subject_id,
                HADM_ID=profile.hadm_id,
                TRANSFERTIME=_fmt_ts(admit),
                CURR_SERVICE=profile.service,
            )
            for seq_num, code in enumerate(profile.icd9_codes, start=1):
                writers["DIAGNOSES_ICD"].write(
                    SUBJECT_ID=profile.subject_id,
                    HADM_ID=profile.hadm_id,
                    SEQ_NUM=seq_num,
                    ICD9_CODE=code,
                )
            for stay in profile.stays:
                counts["stays"] += 1
                writers["ICUSTAYS"].write(
                    SUBJECT_ID=profile.subject_id,
                    HADM_ID=profile.hadm_id,
                    ICUSTAY_ID=stay.icustay_id,
                    DBSOURCE="synthetic",
                    FIRST_CAREUNIT="MICU",
                    LAST_CAREUNIT="MICU",
                    INTIME=_fmt_ts(stay.intime),
                    OUTTIME=_fmt_ts(stay.outtime),
                    LOS=f"{stay.los_hours / 24.0:.4f}",
                )
                counts["events"] += _write_stay_events(
                    writers, registry, rng, profile, stay, config
                )
    finally:
        for writer in writers.values():
            writer.close()

    manifest = {
        "config": asdict(config),
        "counts": counts,
        "injections": None,
    }
    _write_manifest(out_dir, manifest)
    return counts


def _write_stay_events(writers, registry: ItemRegistry,
                       rng: np.random.Generator, profile: PatientProfile,
                       stay: _StaySpec, config: SynthConfig) -> int:
    """Events for one stay; a couple of hours beyond the 48h window are
    generated on long stays to exercise the half-open window downstream."""
    horizon = min(int(math.ceil(stay.los_hours)), 50)
    written = 0

    def emit(item_id: int, minute: int, value: float, decimals: int) -> None:
        nonlocal written
        table = registry.item_table[item_id]
        charttime = _fmt_ts(stay.intime + timedelta(minutes=minute))
        text = f"{value:.{decimals}f}"
        if table == "chartevents":
            writers["CHARTEVENTS"].write(
                SUBJECT_ID=profile.subject_id, HADM_ID=profile.hadm_id,
                ICUSTAY_ID=stay.icustay_id, ITEMID=item_id,
                CHARTTIME=charttime, VALUE=text, VALUENUM=text,
                VALUEUOM=_UNITS.get(item_id, ""),
            )
        elif table == "labevents":
            writers["LABEVENTS"].write(
                SUBJECT_ID=profile.subject_id, HADM_ID=profile.hadm_id,
                ITEMID=item_id, CHARTTIME=charttime, VALUE=text,
                VALUENUM=text, VALUEUOM=_UNITS.get(item_id, ""),
            )
        else:
            writers["OUTPUTEVENTS"].write(
                SUBJECT_ID=profile.subject_id, HADM_ID=profile.hadm_id,
                ICUSTAY_ID=stay.icustay_id, CHARTTIME=charttime,
                ITEMID=item_id, VALUE=text, VALUEUOM="ml",
            )
        written += 1

    # Numeric channels.
    for channel, items in _CHANNEL_ITEMS.items():
        if channel == "UrineOutput":
            continue
        _, _, _, decimals = _VALUE_MODEL[channel]
        values = _stay_channel_values(rng, channel, horizon, profile.label, config)
        present = _presence_mask(
            rng, config.missing_rate[channel], config.missing_scale, horizon
        )
        minutes = rng.integers(0, 60, size=horizon)
        item_pick = rng.integers(0, len(items), size=horizon)
        for hour in range(horizon):
            if present[hour]:
                emit(items[item_pick[hour]], hour * 60 + int(minutes[hour]),
                     float(values[hour]), decimals)

    # Coma score: three integer components, all charted together most of the
    # time, with occasional single-component dropouts.
    present = _presence_mask(
        rng, config.missing_rate["GCS"], config.missing_scale, horizon
    )
    verbal = rng.integers(3, 6, size=horizon)
    motor = rng.integers(4, 7, size=horizon)
    eyes = rng.integers(2, 5, size=horizon)
    minutes = rng.integers(0, 60, size=horizon)
    drop = rng.random(horizon)
    drop_which = rng.integers(0, 3, size=horizon)
    for hour in range(horizon):
        if not present[hour]:
            continue
        minute = hour * 60 + int(minutes[hour])
        parts = [("gcs_verbal", verbal[hour]), ("gcs_motor", motor[hour]),
                 ("gcs_eyes", eyes[hour])]
        skip = drop_which[hour] if drop[hour] < 0.05 else -1
        for k, (subrole, value) in enumerate(parts):
            if k == skip:
                continue
            items = _GCS_ITEMS[subrole]
            emit(items[int(rng.integers(0, len(items)))], minute,
                 float(value), 0)

    # Urine output volumes, with an occasional irrigant in/out pair.
    present = _presence_mask(
        rng, config.missing_rate["UrineOutput"], config.missing_scale, horizon
    )
    volumes = rng.uniform(20.0, 150.0, size=horizon)
    minutes = rng.integers(0, 60, size=horizon)
    items = _CHANNEL_ITEMS["UrineOutput"]
    item_pick = rng.integers(0, len(items), size=horizon)
    irrigant = rng.random(horizon)
    for hour in range(horizon):
        if not present[hour]:
            continue
        minute = hour * 60 + int(minutes[hour])
        emit(items[item_pick[hour]], minute, float(volumes[hour]), 0)
        if irrigant[hour] < 0.04:
            out_vol = float(rng.uniform(50.0, 200.0))
            in_vol = float(rng.uniform(10.0, 0.8 * out_vol))
            emit(227489, minute, out_vol, 0)
            emit(227488, minute, in_vol, 0)

    # A pre-admission lab to exercise window filtering downstream.
    if rng.random() < 0.3:
        early = -int(rng.integers(60, 600))
        emit(50882, early, float(rng.uniform(20.0, 28.0)), 1)
    return written


_UNITS = {
    678: "?F", 223761: "?F", 676: "?C", 223762: "?C",
    211: "bpm", 220045: "bpm",
    51: "mmHg", 442: "mmHg", 455: "mmHg", 6701: "mmHg", 220179: "mmHg",
    220050: "mmHg", 50821: "mmHg",
}


def _write_manifest(data_dir: Path, manifest: dict) -> None:
    path = Path(data_dir) / MANIFEST_NAME
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_manifest(data_dir: str | Path) -> dict:
    return json.loads((Path(data_dir) / MANIFEST_NAME).read_text())


def _preview_windows(data_dir: Path) -> dict:
    """First stays likely to enter the cohort (adult, stay > 48h).

    Used only to decide which injected anomalies are verifiable downstream;
    injection itself applies to every row.
    """
    stays, _ = load_table(table_path(data_dir, "icustays"), ICUSTAYS)
    patients, _ = load_table(table_path(data_dir, "patients"), PATIENTS)
    dob = {p.subject_id: p.dob for p in patients}
    windows: dict[int, tuple[int, datetime]] = {}
    hadm_windows: dict[int, tuple[int, datetime]] = {}
    for stay in first_stay_per_patient(stays):
        if stay.subject_id not in dob:
            continue
        years = (stay.intime - dob[stay.subject_id]).total_seconds() / (
            86400.0 * DAYS_PER_YEAR
        )
        age = 91.4 if years > 89.0 else years
        if age < 16.0 or stay.outtime - stay.intime <= timedelta(hours=48):
            continue
        windows[stay.icustay_id] = (stay.icustay_id, stay.intime)
        hadm_windows[stay.hadm_id] = (stay.icustay_id, stay.intime)
    return {"icustay": windows, "hadm": hadm_windows}


def inject_anomalies(data_dir: str | Path, config: SynthConfig) -> dict:
    """Dirty the generated event files in place and record a manifest.

    Applies, per event row and keyed by (seed, table, row id): Celsius
    conversion of Fahrenheit temperature rows, "ERROR" value texts, and
    duplicated same-hour measurements; plus removal of whole (stay, channel)
    hour spans. Entries are recorded only when the row lands inside the 48h
    window of a stay expected to enter the cohort, so every manifest entry
    is verifiable against the featurized output.
    """
    config.validate()
    data_dir = Path(data_dir)
    registry = load_registry()
    windows = _preview_windows(data_dir)

    spans: dict[tuple[int, int], tuple[int, int]] = {}
    span_removed: dict[tuple[int, int], int] = {}
    if config.missing_span_rate > 0:
        for stay_id, _ in windows["icustay"].values():
            for channel_idx in range(13):
                rng = SplitMix64(
                    derive_seed(config.seed, "inject", "span", stay_id, channel_idx)
                )
                if rng.uniform() < config.missing_span_rate:
                    start = rng.randbelow(40)
                    length = 4 + rng.randbelow(9)
                    spans[(stay_id, channel_idx)] = (start, length)

    injections = {"celsius": [], "error_text": [], "duplicate": [],
                  "missing_span": []}
    temp_swap = {678: 676, 223761: 223762}

    for table_name in ("CHARTEVENTS", "LABEVENTS", "OUTPUTEVENTS"):
        path = data_dir / f"{table_name}.csv"
        tmp = path.with_suffix(".tmp")
        appended: list[list[str]] = []
        with open(path, newline="") as src, open(tmp, "w", newline="") as dst:
            reader = csv.reader(src)
            writer = csv.writer(dst, lineterminator="\n")
            header = next(reader)
            writer.writerow(header)
            idx = {name: i for i, name in enumerate(header)}
            has_stay = "ICUSTAY_ID" in idx
            has_valuenum = "VALUENUM" in idx
            max_row_id = 0
            for row in reader:
                row_id = int(row[idx["ROW_ID"]])
                max_row_id = max(max_row_id, row_id)
                item_id = int(row[idx["ITEMID"]])
                resolved = resolve_item(registry, item_id)
                stay_hour: Optional[tuple[int, int]] = None
                if resolved is not None:
                    key = None
                    if has_stay and row[idx["ICUSTAY_ID"]]:
                        key = windows["icustay"].get(int(row[idx["ICUSTAY_ID"]]))
                    elif row[idx["HADM_ID"]]:
                        key = windows["hadm"].get(int(row[idx["HADM_ID"]]))
                    if key is not None:
                        stay_id, intime = key
                        minute = int(
                            (datetime.strptime(row[idx["CHARTTIME"]], TS_FORMAT)
                             - intime).total_seconds() // 60
                        )
                        if 0 <= minute < 48 * 60:
                            stay_hour = (stay_id, minute // 60)

                channel_idx = resolved[0].channel_index if resolved else None
                subrole = resolved[1] if resolved else None

                # Whole-span removal first: the row simply disappears.
                if stay_hour is not None and channel_idx is not None:
                    span = spans.get((stay_hour[0], channel_idx))
                    if span and span[0] <= stay_hour[1] < span[0] + span[1]:
                        key = (stay_hour[0], channel_idx)
                        span_removed[key] = span_removed.get(key, 0) + 1
                        continue

                coin = SplitMix64(
                    derive_seed(config.seed, "inject", table_name, row_id)
                )
                value_text = row[idx["VALUE"]]
                is_temp_f = subrole == "temp_f"
                converted = False
                if is_temp_f and coin.uniform() < config.celsius_rate:
                    fahrenheit = float(value_text)
                    celsius = round((fahrenheit - 32.0) * 5.0 / 9.0, 1)
                    row[idx["ITEMID"]] = str(temp_swap[item_id])
                    row[idx["VALUE"]] = f"{celsius:.1f}"
                    if has_valuenum:
                        row[idx["VALUENUM"]] = f"{celsius:.1f}"
                    if "VALUEUOM" in idx:
                        row[idx["VALUEUOM"]] = "?C"
                    converted = True
                    if stay_hour is not None:
                        injections["celsius"].append({
                            "table": table_name, "row_id": row_id,
                            "stay": stay_hour[0], "hour": stay_hour[1],
                            "fahrenheit": fahrenheit, "celsius": celsius,
                        })
                errored = False
                if (not converted and channel_idx is not None
                        and coin.uniform() < config.error_text_rate):
                    row[idx["VALUE"]] = "ERROR"
                    if has_valuenum:
                        row[idx["VALUENUM"]] = ""
                    errored = True
                    if stay_hour is not None:
                        injections["error_text"].append({
                            "table": table_name, "row_id": row_id,
                            "stay": stay_hour[0], "channel": channel_idx,
                            "hour": stay_hour[1],
                        })
                if (not errored and channel_idx is not None
                        and coin.uniform() < config.duplicate_rate):
                    dup = list(row)
                    base_value = float(row[idx["VALUE"]])
                    jitter = 0.97 + 0.06 * coin.uniform()  # stays plausible
                    new_value = round(base_value * jitter, 1)
                    dup[idx["VALUE"]] = f"{new_value:.1f}"
                    if has_valuenum:
                        dup[idx["VALUENUM"]] = f"{new_value:.1f}"
                    charttime = datetime.strptime(row[idx["CHARTTIME"]], TS_FORMAT)
                    # Shift a few minutes without leaving the hour bucket,
                    # which is measured from the stay's admission minute.
                    if stay_hour is not None:
                        offset_in_hour = minute % 60
                        shift = 7 if offset_in_hour < 53 else -7
                    else:
                        shift = 7
                    dup[idx["CHARTTIME"]] = _fmt_ts(
                        charttime + timedelta(minutes=shift)
                    )
                    appended.append(dup)
                    if stay_hour is not None:
                        injections["duplicate"].append({
                            "table": table_name, "row_id": row_id,
                            "stay": stay_hour[0], "channel": channel_idx,
                            "hour": stay_hour[1],
                        })
                writer.writerow(row)
            for extra in appended:
                max_row_id += 1
                extra[idx["ROW_ID"]] = str(max_row_id)
                writer.writerow(extra)
        os.replace(tmp, path)

    for (stay_id, channel_idx), (start, length) in sorted(spans.items()):
        removed = span_removed.get((stay_id, channel_idx), 0)
        if removed:
            injections["missing_span"].append({
                "stay": stay_id, "channel": channel_idx,
                "start_hour": start, "length": length, "removed": removed,
            })

    manifest = read_manifest(data_dir)
    manifest["injections"] = injections
    _write_manifest(data_dir, manifest)
    return injections


@dataclass
class DescribeSummary:
    patients: int = 0
    adult_patients: int = 0
    median_age_adult: float = 0.0
    mortality_adult: float = 0.0
    admissions: int = 0
    icu_stays: int = 0
    icu_stays_adult: int = 0
    long_icu_stays_adult: int = 0
    first_long_icu_stays_adult: int = 0
    avg_los_long_days: float = 0.0
    avg_los_days: float = 0.0
    avg_los_first_long_days: float = 0.0
    warning: str = ""

    def to_text(self) -> str:
        lines = [
            f"patients: {self.patients}",
            f"adult_patients: {self.adult_patients}",
            f"median_age_adult: {self.median_age_adult:.1f}",
            f"in_hospital_mortality_adult: {self.mortality_adult:.3f}",
            f"admissions: {self.admissions}",
            f"icu_stays: {self.icu_stays}",
            f"icu_stays_adult: {self.icu_stays_adult}",
            f"long_icu_stays_adult: {self.long_icu_stays_adult}",
            f"first_long_icu_stays_adult: {self.first_long_icu_stays_adult}",
            f"avg_los_long_stays_days: {self.avg_los_long_days:.2f}",
            f"avg_los_stays_days: {self.avg_los_days:.2f}",
            f"avg_los_first_long_stays_days: {self.avg_los_first_long_days:.2f}",
        ]
        if self.warning:
            lines.append(f"warning: {self.warning}")
        return "\n".join(lines)


def describe(data_dir: str | Path) -> DescribeSummary:
    """Summary statistics of a data directory (synthetic or real).

    Adults are patients at least 16 years old at their first ICU admission
    (first hospital admission when they have no stay); long stays last at
    least 4 hours; the first long stay is each adult's earliest long stay.
    In-hospital mortality is the fraction of adults with a death timestamp
    on any admission.
    """
    data_dir = Path(data_dir)
    patients, _ = load_table(table_path(data_dir, "patients"), PATIENTS)
    admissions, _ = load_table(table_path(data_dir, "admissions"), ADMISSIONS)
    stays, _ = load_table(table_path(data_dir, "icustays"), ICUSTAYS)
    summary = DescribeSummary(
        patients=len(patients), admissions=len(admissions), icu_stays=len(stays)
    )
    if not patients:
        summary.warning = "empty tables"
        return summary

    first_admit: dict[int, datetime] = {}
    died: set[int] = set()
    for a in admissions:
        if a.subject_id not in first_admit or a.admittime < first_admit[a.subject_id]:
            first_admit[a.subject_id] = a.admittime
        if a.deathtime is not None:
            died.add(a.subject_id)
    first_stay_time: dict[int, datetime] = {}
    for s in stays:
        if (s.subject_id not in first_stay_time
                or s.intime < first_stay_time[s.subject_id]):
            first_stay_time[s.subject_id] = s.intime

    adult_ages: dict[int, float] = {}
    for p in patients:
        ref = first_stay_time.get(p.subject_id) or first_admit.get(p.subject_id)
        if ref is None or p.dob > ref:
            continue
        years = (ref - p.dob).total_seconds() / (86400.0 * DAYS_PER_YEAR)
        age = 91.4 if years > 89.0 else years
        if age >= 16.0:
            adult_ages[p.subject_id] = age
    summary.adult_patients = len(adult_ages)
    if adult_ages:
        summary.median_age_adult = float(np.median(list(adult_ages.values())))
        summary.mortality_adult = (
            sum(1 for sid in adult_ages if sid in died) / len(adult_ages)
        )

    adult_stays = [s for s in stays if s.subject_id in adult_ages]
    summary.icu_stays_adult = len(adult_stays)
    los_days = [
        (s.outtime - s.intime).total_seconds() / 86400.0 for s in adult_stays
    ]
    long_stays = [
        s for s in adult_stays
        if s.outtime - s.intime >= timedelta(hours=4)
    ]
    summary.long_icu_stays_adult = len(long_stays)
    first_long = first_stay_per_patient(long_stays)
    summary.first_long_icu_stays_adult = len(first_long)
    if los_days:
        summary.avg_los_days = float(np.mean(los_days))
    if long_stays:
        summary.avg_los_long_days = float(np.mean(
            [(s.outtime - s.intime).total_seconds() / 86400.0 for s in long_stays]
        ))
    if first_long:
        summary.avg_los_first_long_days = float(np.mean(
            [(s.outtime - s.intime).total_seconds() / 86400.0 for s in first_long]
        ))
    return summary
