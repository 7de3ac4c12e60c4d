"""Feature channel definitions and the item id registry.

The 13 sequential channels cover the time-varying part of the severity
feature set. Each channel aggregates one or more raw item ids; the mapping
ships as a package data file (``data/item_registry.csv``) so corrections do
not require a code change. Resolution keys on item id alone; the registry's
source_table column is informational.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError

SUBROLES = (
    "plain",
    "gcs_verbal",
    "gcs_motor",
    "gcs_eyes",
    "temp_f",
    "temp_c",
    "urine_in_irrigant",
    "urine_out_irrigant",
)

SOURCE_TABLES = ("chartevents", "labevents", "outputevents")


@dataclass(frozen=True)
class FeatureChannel:
    channel_index: int
    name: str
    source_table: str


# Column order of the hourly feature matrix. Fixed here, never inferred from
# registry file row order.
CHANNELS: tuple[FeatureChannel, ...] = (
    FeatureChannel(0, "GCS", "chartevents"),
    FeatureChannel(1, "SBP", "chartevents"),
    FeatureChannel(2, "HeartRate", "chartevents"),
    FeatureChannel(3, "TempF", "chartevents"),
    FeatureChannel(4, "PaO2", "labevents"),
    FeatureChannel(5, "FiO2", "chartevents"),
    FeatureChannel(6, "UrineOutput", "outputevents"),
    FeatureChannel(7, "BUN", "labevents"),
    FeatureChannel(8, "WBC", "labevents"),
    FeatureChannel(9, "Bicarbonate", "labevents"),
    FeatureChannel(10, "Sodium", "labevents"),
    FeatureChannel(11, "Potassium", "labevents"),
    FeatureChannel(12, "Bilirubin", "labevents"),
)

CHANNEL_BY_NAME = {c.name: c for c in CHANNELS}
N_CHANNELS = len(CHANNELS)


class ItemRegistry:
    """Mapping from raw item id to (FeatureChannel, subrole)."""

    def __init__(self, entries: dict[int, tuple[FeatureChannel, str]],
                 item_table: dict[int, str]):
        self.entries = entries
        self.item_table = item_table

    def __len__(self) -> int:
        return len(self.entries)

    def items_for_channel(self, channel_name: str) -> list[int]:
        return sorted(i for i, (c, _) in self.entries.items()
                      if c.name == channel_name)


def default_registry_path() -> Path:
    return Path(str(resources.files("icumort").joinpath("data/item_registry.csv")))


def load_registry(path: str | Path | None = None) -> ItemRegistry:
    """Load the item registry from CSV (``item_id,channel,subrole,source_table``).

    Lines starting with ``#`` are comments. Duplicate item ids, unknown
    channels, and unknown subroles are configuration errors.
    """
    path = Path(path) if path is not None else default_registry_path()
    entries: dict[int, tuple[FeatureChannel, str]] = {}
    item_table: dict[int, str] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "item_id", "channel", "subrole", "source_table",
        ]:
            raise ConfigError(f"registry {path}: bad header")
        for row in reader:
            if not row or not any(field.strip() for field in row):
                continue
            item_id = int(row[0])
            channel_name, subrole, table = (f.strip() for f in row[1:4])
            if channel_name not in CHANNEL_BY_NAME:
                raise ConfigError(f"registry {path}: unknown channel {channel_name!r}")
            if subrole not in SUBROLES:
                raise ConfigError(f"registry {path}: unknown subrole {subrole!r}")
            if table not in SOURCE_TABLES:
                raise ConfigError(f"registry {path}: unknown table {table!r}")
            if item_id in entries:
                raise ConfigError(f"registry {path}: duplicate item id {item_id}")
            entries[item_id] = (CHANNEL_BY_NAME[channel_name], subrole)
            item_table[item_id] = table
    if not entries:
        raise ConfigError(f"registry {path}: no entries")
    return ItemRegistry(entries, item_table)


def resolve_item(registry: ItemRegistry, item_id: int
                 ) -> Optional[tuple[FeatureChannel, str]]:
    """Return the (channel, subrole) for an item id, or None if unlisted."""
    return registry.entries.get(item_id)


def parse_numeric(value_num: Optional[float], value_text: Optional[str]
                  ) -> Optional[float]:
    """Best-effort numeric value of an event row.

    Prefers the numeric column; otherwise attempts to parse the text column.
    Non-numeric text (error markers and the like) yields None, which
    downstream treats as a missing observation.
    """
    if value_num is not None:
        return value_num
    if value_text is None:
        return None
    try:
        v = float(value_text)
    except ValueError:
        return None
    return v if v == v else None
