"""Check-in ingestion: raw parsing, filtering, chronological split and canonical files"""

import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set

import numpy as np
import pandas as pd

from .errors import CanonicalFormatError, EmptyDatasetError, IngestError, SplitError
from .logger import get_logger
from ..config.settings import coerce_fields, read_key_value_file

logger = get_logger('ingest')

CANONICAL_VERSION = 1
_HEADER_RE = re.compile(r"^#n2rec-v(\d+) M=(\d+) Q=(\d+)$")
_CHECKSUM_PREFIX = "#checksum sha256="

# Files shorter than this never trip the skipped-lines sanity check
MAPPING_CHECK_MIN_LINES = 10
MAX_SKIPPED_FRACTION = 0.5

_EPOCH = pd.Timestamp("1970-01-01", tz="UTC")


@dataclass(frozen=True)
class RawCheckIn:
    """One line of a raw check-in dump"""
    user_key: str
    poi_key: str
    lat: float
    lon: float
    timestamp: int  # unix seconds


@dataclass(frozen=True)
class CheckIn:
    """Check-in with dense user and POI ids"""
    user: int
    poi: int
    lat: float
    lon: float
    timestamp: int


@dataclass
class Dataset:
    """Per-user chronological check-in sequences with optional train/test split"""
    num_users: int
    num_pois: int
    sequences: List[List[CheckIn]]
    user_keys: List[str]            # dense user id -> original key
    poi_keys: List[str]             # dense POI id -> original key
    split_points: Optional[List[int]] = None

    @property
    def user_key_map(self) -> Dict[str, int]:
        return {key: i for i, key in enumerate(self.user_keys)}

    @property
    def poi_key_map(self) -> Dict[str, int]:
        return {key: i for i, key in enumerate(self.poi_keys)}

    @property
    def is_split(self) -> bool:
        return self.split_points is not None

    @property
    def num_visits(self) -> int:
        return sum(len(seq) for seq in self.sequences)

    def _require_split(self) -> List[int]:
        if self.split_points is None:
            raise SplitError("Dataset has not been split into train and test")
        return self.split_points

    def train_sequence(self, user: int) -> List[CheckIn]:
        return self.sequences[user][:self._require_split()[user]]

    def test_sequence(self, user: int) -> List[CheckIn]:
        return self.sequences[user][self._require_split()[user]:]

    def train_pois(self, user: int) -> Set[int]:
        """POIs the user visited in the train partition"""
        return {c.poi for c in self.train_sequence(user)}

    def to_raw(self) -> List[RawCheckIn]:
        """Flatten back to raw records keyed by original ids, in (user, time) order"""
        return [
            RawCheckIn(self.user_keys[c.user], self.poi_keys[c.poi], c.lat, c.lon, c.timestamp)
            for seq in self.sequences
            for c in seq
        ]

    def validate(self) -> None:
        """
        Check structural invariants

        Raises:
            IngestError: if any invariant is violated
        """
        if len(self.sequences) != self.num_users or len(self.user_keys) != self.num_users:
            raise IngestError("User count does not match sequences/key table")
        if len(self.poi_keys) != self.num_pois:
            raise IngestError("POI count does not match key table")
        seen = np.zeros(self.num_pois, dtype=bool)
        for user, seq in enumerate(self.sequences):
            for prev, cur in zip(seq, seq[1:]):
                if cur.timestamp < prev.timestamp:
                    raise IngestError(f"Sequence of user {user} is not chronological")
            for c in seq:
                if c.user != user or not 0 <= c.poi < self.num_pois:
                    raise IngestError(f"Check-in with out-of-range ids in sequence of user {user}")
                seen[c.poi] = True
        if not seen.all():
            raise IngestError(f"{int((~seen).sum())} POIs appear in no sequence")
        if self.split_points is not None:
            if len(self.split_points) != self.num_users:
                raise IngestError("split_points length does not match user count")
            for user, point in enumerate(self.split_points):
                if not 0 <= point <= len(self.sequences[user]):
                    raise IngestError(f"split point {point} out of range for user {user}")


@dataclass
class ColumnMapping:
    """Column layout of a raw check-in dump"""
    user_col: int
    poi_col: int
    lat_col: int
    lon_col: int
    time_col: int
    time_format: str = "iso8601"  # "iso8601", "unix", or a strptime pattern
    delimiter: str = "\t"
    # Coordinates from a separate venue file joined on the POI key;
    # lat_col/lon_col then index that file's columns
    join_poi_table: bool = False
    poi_table: Optional[str] = None
    poi_key_col: int = 0


# Layouts of the public dumps
MAPPING_PRESETS: Dict[str, ColumnMapping] = {
    # user, check-in time, latitude, longitude, location id
    "gowalla": ColumnMapping(user_col=0, poi_col=4, lat_col=2, lon_col=3, time_col=1),
    # user, venue, category id, category name, latitude, longitude, tz offset, utc time
    "foursquare_nyc": ColumnMapping(
        user_col=0, poi_col=1, lat_col=4, lon_col=5, time_col=7,
        time_format="%a %b %d %H:%M:%S +0000 %Y"
    ),
    # check-ins: user, venue, utc time, tz offset
    # venues (--poi-table): venue, latitude, longitude, category, country
    "foursquare_global": ColumnMapping(
        user_col=0, poi_col=1, lat_col=1, lon_col=2, time_col=2,
        time_format="%a %b %d %H:%M:%S +0000 %Y",
        join_poi_table=True, poi_key_col=0
    ),
}


def load_mapping(spec: str) -> ColumnMapping:
    """
    Resolve a column mapping from a preset name or a key=value file

    Args:
        spec: Preset name (see MAPPING_PRESETS) or path to a mapping file

    Returns:
        ColumnMapping
    """
    if spec in MAPPING_PRESETS:
        return MAPPING_PRESETS[spec]

    raw = read_key_value_file(Path(spec))
    if raw.get("delimiter", "").lower() in ("tab", "\\t"):
        raw["delimiter"] = "\t"
    elif raw.get("delimiter", "").lower() == "comma":
        raw["delimiter"] = ","
    try:
        return ColumnMapping(**coerce_fields(ColumnMapping, raw, spec))
    except TypeError as e:
        raise IngestError(f"Incomplete column mapping in {spec}: {e}") from e


@dataclass
class ParseResult:
    """Records parsed from a raw dump plus the number of malformed lines"""
    records: List[RawCheckIn] = field(default_factory=list)
    skipped: int = 0

    @property
    def total(self) -> int:
        return len(self.records) + self.skipped


def _parse_time(values: pd.Series, time_format: str) -> pd.Series:
    """Unix seconds as float, NaN where unparsable"""
    if time_format == "unix":
        seconds = pd.to_numeric(values, errors="coerce")
        return seconds.where(np.floor(seconds) == seconds)

    if time_format == "iso8601":
        stamps = pd.to_datetime(values, utc=True, errors="coerce", format="ISO8601")
    else:
        stamps = pd.to_datetime(values, utc=True, errors="coerce", format=time_format)
    return np.floor((stamps - _EPOCH).dt.total_seconds())


def _read_lines(path: Path, what: str) -> List[str]:
    """Non-blank lines; undecodable bytes become U+FFFD"""
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            return [line for line in f.read().splitlines() if line.strip()]
    except OSError as e:
        raise IngestError(f"Cannot read {what} {path}: {e}") from e


def _split_columns(lines: List[str], delimiter: str):
    table = pd.Series(lines, dtype=object).str.split(delimiter, expand=True)

    def column(index: int) -> pd.Series:
        if index in table.columns:
            return table[index]
        return pd.Series([None] * len(table), index=table.index, dtype=object)

    return column


def _load_poi_table(mapping: ColumnMapping) -> pd.DataFrame:
    """Venue key -> lat/lon strings; first row wins for repeated keys"""
    if not mapping.poi_table:
        raise IngestError("This column mapping takes coordinates from a POI table; pass one with --poi-table")
    path = Path(mapping.poi_table)
    lines = _read_lines(path, "POI table")
    column = _split_columns(lines, mapping.delimiter)
    venues = pd.DataFrame({
        "poi": column(mapping.poi_key_col).str.strip(),
        "lat": column(mapping.lat_col),
        "lon": column(mapping.lon_col),
    })
    venues = venues[venues["poi"].notna() & ~venues["poi"].str.contains("\ufffd", regex=False, na=False)]
    venues = venues.drop_duplicates(subset="poi", keep="first")
    logger.info(f"Loaded {len(venues)} venues from {path}")
    return venues


def parse_raw(path: Path, mapping: ColumnMapping) -> ParseResult:
    """
    Parse a raw check-in file

    Lines with undecodable bytes count as malformed, so distinct keys are
    never merged through a replacement character. With join_poi_table the
    coordinates come from mapping.poi_table, matched on the POI key; check-ins
    at venues missing from that table are malformed.

    Args:
        path: Raw dump, one check-in per line
        mapping: Column layout

    Returns:
        ParseResult with well-formed records in input order

    Raises:
        IngestError: if a file cannot be read or too many lines are malformed
    """
    lines = _read_lines(path, "raw check-ins")
    if not lines:
        logger.info(f"Parsed {path}: empty file")
        return ParseResult()

    column = _split_columns(lines, mapping.delimiter)
    users = column(mapping.user_col).str.strip()
    pois = column(mapping.poi_col).str.strip()
    if mapping.join_poi_table:
        venues = _load_poi_table(mapping)
        joined = pd.DataFrame({"poi": pois}).merge(venues, on="poi", how="left", validate="many_to_one")
        joined.index = pois.index
        lat_text, lon_text = joined["lat"], joined["lon"]
    else:
        lat_text, lon_text = column(mapping.lat_col), column(mapping.lon_col)
    lat = pd.to_numeric(lat_text, errors="coerce")
    lon = pd.to_numeric(lon_text, errors="coerce")
    seconds = _parse_time(column(mapping.time_col).str.strip(), mapping.time_format)
    garbled = pd.Series(lines, dtype=object).str.contains("\ufffd", regex=False)

    valid = (
        users.notna() & (users != "")
        & pois.notna() & (pois != "")
        & lat.between(-90.0, 90.0)
        & lon.between(-180.0, 180.0)
        & seconds.notna() & (seconds >= 0)
        & ~garbled
    )

    records = [
        RawCheckIn(u, p, float(la), float(lo), int(ts))
        for u, p, la, lo, ts in zip(
            users[valid], pois[valid], lat[valid], lon[valid], seconds[valid]
        )
    ]
    result = ParseResult(records=records, skipped=int((~valid).sum()))

    logger.info(f"Parsed {path}: {len(records)} check-ins, {result.skipped} malformed lines skipped")
    if result.total >= MAPPING_CHECK_MIN_LINES and result.skipped > MAX_SKIPPED_FRACTION * result.total:
        raise IngestError(
            f"{result.skipped} of {result.total} lines in {path} could not be parsed; "
            f"check the column mapping"
        )
    return result


def index_checkins(raw: Sequence[RawCheckIn]) -> Dataset:
    """
    Assign dense ids and build chronological per-user sequences

    Ids follow first appearance in the input. Equal timestamps keep input order.

    Args:
        raw: Check-ins in input order

    Returns:
        Unsplit Dataset
    """
    if not raw:
        raise EmptyDatasetError("No check-ins to index")

    user_ids, user_keys = pd.factorize(pd.Series([r.user_key for r in raw], dtype=object))
    poi_ids, poi_keys = pd.factorize(pd.Series([r.poi_key for r in raw], dtype=object))
    timestamps = np.array([r.timestamp for r in raw], dtype=np.int64)

    order = np.lexsort((np.arange(len(raw)), timestamps, user_ids))
    sequences: List[List[CheckIn]] = [[] for _ in range(len(user_keys))]
    for i in order:
        r = raw[i]
        sequences[user_ids[i]].append(
            CheckIn(int(user_ids[i]), int(poi_ids[i]), r.lat, r.lon, r.timestamp)
        )

    return Dataset(
        num_users=len(user_keys),
        num_pois=len(poi_keys),
        sequences=sequences,
        user_keys=[str(k) for k in user_keys],
        poi_keys=[str(k) for k in poi_keys],
    )


def preprocess(
    raw: Sequence[RawCheckIn],
    min_visits: int = 20,
    max_visits: int = 50,
    min_users_per_poi: int = 10
) -> Dataset:
    """
    Filter users by visit count, then POIs by distinct visitors

    Both steps run once, in that order. Users whose check-ins all fall on
    removed POIs disappear with them.

    Args:
        raw: Parsed check-ins
        min_visits: Lowest accepted per-user check-in count (inclusive)
        max_visits: Highest accepted per-user check-in count (inclusive)
        min_users_per_poi: POIs with fewer distinct surviving visitors are removed

    Returns:
        Unsplit Dataset

    Raises:
        EmptyDatasetError: if no users or POIs survive
    """
    if min_visits < 1 or max_visits < 1 or min_users_per_poi < 1:
        raise ValueError("Preprocessing thresholds must be positive")
    if min_visits > max_visits:
        raise ValueError(f"min_visits ({min_visits}) exceeds max_visits ({max_visits})")
    if not raw:
        raise EmptyDatasetError("No check-ins to preprocess")

    frame = pd.DataFrame({
        "user_key": [r.user_key for r in raw],
        "poi_key": [r.poi_key for r in raw],
    })

    visits = frame.groupby("user_key", sort=False)["user_key"].transform("size")
    frame = frame[(visits >= min_visits) & (visits <= max_visits)]
    logger.info(
        f"User band [{min_visits}, {max_visits}]: {frame['user_key'].nunique()} users, "
        f"{len(frame)} check-ins kept"
    )

    visitors = frame.groupby("poi_key", sort=False)["user_key"].transform("nunique")
    frame = frame[visitors >= min_users_per_poi]
    logger.info(
        f"POIs with >= {min_users_per_poi} users: {frame['poi_key'].nunique()} POIs, "
        f"{frame['user_key'].nunique()} users, {len(frame)} check-ins kept"
    )

    if frame.empty:
        raise EmptyDatasetError("Preprocessing removed every user or POI")

    return index_checkins([raw[i] for i in frame.index])


def split(dataset: Dataset, train_fraction: float = 0.8) -> Dataset:
    """
    Chronological per-user train/test split

    split_point = floor(train_fraction * len), clamped so both parts are nonempty.

    Args:
        dataset: Unsplit (or split) dataset
        train_fraction: Share of each sequence used for training

    Returns:
        Dataset with split_points set

    Raises:
        SplitError: if a sequence has fewer than two check-ins
    """
    points = []
    for user, seq in enumerate(dataset.sequences):
        n = len(seq)
        if n < 2:
            raise SplitError(f"User {dataset.user_keys[user]} has {n} check-in(s); cannot split")
        points.append(min(max(math.floor(train_fraction * n), 1), n - 1))
    return replace(dataset, split_points=points)


@dataclass
class DatasetStats:
    """Summary counts of a dataset"""
    num_users: int
    num_pois: int
    num_visits: int
    train_visits: int
    test_visits: int
    mean_length: float
    sparsity: float  # zero share of the (train) User-POI visit matrix

    def summary(self) -> str:
        return f"users={self.num_users} pois={self.num_pois} visits={self.num_visits}"


def dataset_stats(dataset: Dataset) -> DatasetStats:
    """
    Compute dataset statistics

    Sparsity is measured on the train partition when the dataset is split,
    otherwise on all visits.
    """
    if dataset.is_split:
        train_visits = sum(dataset.split_points)
        pairs = sum(len(dataset.train_pois(u)) for u in range(dataset.num_users))
    else:
        train_visits = dataset.num_visits
        pairs = sum(len({c.poi for c in seq}) for seq in dataset.sequences)

    cells = dataset.num_users * dataset.num_pois
    return DatasetStats(
        num_users=dataset.num_users,
        num_pois=dataset.num_pois,
        num_visits=dataset.num_visits,
        train_visits=train_visits,
        test_visits=dataset.num_visits - train_visits,
        mean_length=dataset.num_visits / dataset.num_users if dataset.num_users else 0.0,
        sparsity=1.0 - pairs / cells if cells else 1.0,
    )


def _format_canonical(dataset: Dataset) -> str:
    lines = [
        f"#n2rec-v{CANONICAL_VERSION} M={dataset.num_users} Q={dataset.num_pois}",
        f"#split={1 if dataset.is_split else 0}",
    ]
    lines.extend(f"#user\t{i}\t{key}" for i, key in enumerate(dataset.user_keys))
    lines.extend(f"#poi\t{i}\t{key}" for i, key in enumerate(dataset.poi_keys))
    for user, seq in enumerate(dataset.sequences):
        point = dataset.split_points[user] if dataset.is_split else len(seq)
        for pos, c in enumerate(seq):
            is_test = 1 if pos >= point else 0
            lines.append(f"{c.user}\t{c.poi}\t{c.lat!r}\t{c.lon!r}\t{c.timestamp}\t{is_test}")
    return "\n".join(lines) + "\n"


def save_canonical(dataset: Dataset, path: Path) -> None:
    """
    Write a dataset in the canonical TSV format

    Args:
        dataset: Valid dataset
        path: Output file
    """
    if not str(path):
        raise IngestError("Empty output path")
    dataset.validate()

    body = _format_canonical(dataset)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    try:
        Path(path).write_text(body + f"{_CHECKSUM_PREFIX}{digest}\n", encoding="utf-8")
    except OSError as e:
        raise IngestError(f"Cannot write dataset {path}: {e}") from e
    logger.info(f"Saved dataset to: {path}")


def load_canonical(path: Path) -> Dataset:
    """
    Read a dataset written by save_canonical

    Raises:
        CanonicalFormatError: on version mismatch, checksum failure or bad rows
        IngestError: if the file cannot be read
    """
    if not str(path):
        raise IngestError("Empty input path")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IngestError(f"Cannot read dataset {path}: {e}") from e

    lines = text.splitlines()
    if not lines:
        raise CanonicalFormatError(f"{path} is empty")

    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise CanonicalFormatError(f"{path}: missing n2rec header")
    if int(header.group(1)) != CANONICAL_VERSION:
        raise CanonicalFormatError(
            f"{path}: format version {header.group(1)}, expected {CANONICAL_VERSION}"
        )

    if not lines[-1].startswith(_CHECKSUM_PREFIX):
        raise CanonicalFormatError(f"{path}: missing checksum")
    body = "\n".join(lines[:-1]) + "\n"
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != lines[-1][len(_CHECKSUM_PREFIX):]:
        raise CanonicalFormatError(f"{path}: checksum mismatch")

    num_users, num_pois = int(header.group(2)), int(header.group(3))
    has_split = False
    user_keys: List[Optional[str]] = [None] * num_users
    poi_keys: List[Optional[str]] = [None] * num_pois
    sequences: List[List[CheckIn]] = [[] for _ in range(num_users)]
    test_counts = [0] * num_users

    try:
        for line in lines[1:-1]:
            if line.startswith("#split="):
                has_split = line == "#split=1"
            elif line.startswith("#user\t"):
                _, idx, key = line.split("\t", 2)
                user_keys[int(idx)] = key
            elif line.startswith("#poi\t"):
                _, idx, key = line.split("\t", 2)
                poi_keys[int(idx)] = key
            else:
                user, poi, lat, lon, ts, is_test = line.split("\t")
                u = int(user)
                if is_test == "1":
                    test_counts[u] += 1
                elif test_counts[u]:
                    raise CanonicalFormatError(f"{path}: train row after test rows for user {u}")
                sequences[u].append(CheckIn(u, int(poi), float(lat), float(lon), int(ts)))
    except (ValueError, IndexError) as e:
        raise CanonicalFormatError(f"{path}: malformed row: {e}") from e

    if any(k is None for k in user_keys) or any(k is None for k in poi_keys):
        raise CanonicalFormatError(f"{path}: incomplete key tables")

    dataset = Dataset(
        num_users=num_users,
        num_pois=num_pois,
        sequences=sequences,
        user_keys=user_keys,
        poi_keys=poi_keys,
        split_points=[len(seq) - t for seq, t in zip(sequences, test_counts)] if has_split else None,
    )
    dataset.validate()
    logger.info(f"Loaded dataset from: {path} ({num_users} users, {num_pois} POIs)")
    return dataset
