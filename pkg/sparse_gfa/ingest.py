"""Loading and preprocessing of paired view tables."""

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import InvalidInputError, ParseError
from .model import MultiViewDataset, ViewMatrix

logger = logging.getLogger(__name__)

SAMPLE_ID_HEADER = "sample_id"


@dataclass
class ProfileTable:
    """A feature table whose rows may repeat a sample id (replicates)."""

    values: np.ndarray
    row_ids: List[str]
    feature_names: List[str]
    name: Optional[str] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.row_ids = [str(r) for r in self.row_ids]
        self.feature_names = [str(f) for f in self.feature_names]
        if self.values.ndim != 2 or self.values.shape != (
            len(self.row_ids),
            len(self.feature_names),
        ):
            raise InvalidInputError(
                f"table {self.name!r}: values of shape {self.values.shape} do not match "
                f"{len(self.row_ids)} rows and {len(self.feature_names)} features"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise InvalidInputError(f"table {self.name!r}: feature names are not unique")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError(f"table {self.name!r}: non-finite values")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.values,
            index=pd.Index(self.row_ids, name=SAMPLE_ID_HEADER),
            columns=self.feature_names,
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, name: Optional[str] = None) -> "ProfileTable":
        return cls(
            values=frame.to_numpy(dtype=float),
            row_ids=[str(i) for i in frame.index],
            feature_names=[str(c) for c in frame.columns],
            name=name,
        )


def merge_replicates(table: ProfileTable) -> ProfileTable:
    """Average rows sharing a row id; rows keep first-appearance order."""
    merged = table.to_frame().groupby(level=0, sort=False).mean()
    return ProfileTable.from_frame(merged, name=table.name)


def threshold_top_genes(row: np.ndarray, n_up: int = 2000, n_down: int = 2000) -> np.ndarray:
    """Keep the ``n_up`` largest positive and ``n_down`` most negative entries.

    Everything else becomes exactly zero. At the cutoff the lower feature
    index wins.
    """
    if n_up < 0 or n_down < 0:
        raise InvalidInputError("n_up and n_down must not be negative")
    row = np.asarray(row, dtype=float)
    out = np.zeros_like(row)

    positive = np.flatnonzero(row > 0)
    keep_up = positive[np.argsort(-row[positive], kind="stable")][:n_up]
    negative = np.flatnonzero(row < 0)
    keep_down = negative[np.argsort(row[negative], kind="stable")][:n_down]

    keep = np.concatenate([keep_up, keep_down])
    out[keep] = row[keep]
    return out


def threshold_table(table: ProfileTable, n_up: int = 2000, n_down: int = 2000) -> ProfileTable:
    """Apply ``threshold_top_genes`` to every row of a table."""
    values = np.vstack([threshold_top_genes(r, n_up, n_down) for r in table.values])
    return ProfileTable(
        values=values,
        row_ids=table.row_ids,
        feature_names=table.feature_names,
        name=table.name,
    )


def _standardize(values: np.ndarray, center: bool, scale: bool) -> np.ndarray:
    out = values.copy()
    constant = np.all(values == values[:1], axis=0)
    if center:
        out = out - out.mean(axis=0)
        out[:, constant] = 0.0
    if scale:
        std = out.std(axis=0)
        nonconstant = ~constant & (std > 0)
        out[:, nonconstant] = out[:, nonconstant] / std[nonconstant]
    return out


def assemble_dataset(
    views: Sequence[ProfileTable], center: bool = True, scale: bool = False
) -> MultiViewDataset:
    """Pair views on their common row ids (sorted) and optionally standardize columns."""
    if len(views) < 2:
        raise InvalidInputError(f"need at least 2 views, got {len(views)}")

    names = [t.name or f"view{m}" for m, t in enumerate(views)]
    for name, table in zip(names, views):
        if len(set(table.row_ids)) != len(table.row_ids):
            raise InvalidInputError(
                f"view {name!r} has repeated row ids; merge replicates first"
            )

    common = set(views[0].row_ids)
    for table in views[1:]:
        common &= set(table.row_ids)
    if not common:
        raise InvalidInputError("the views share no sample ids")
    sample_ids = sorted(common)

    matrices = []
    dropped = {}
    for name, table in zip(names, views):
        frame = table.to_frame().loc[sample_ids]
        dropped[name] = len(table.row_ids) - len(sample_ids)
        if dropped[name]:
            logger.info("view %s: dropped %d unpaired rows", name, dropped[name])
        matrices.append(
            ViewMatrix(
                name=name,
                values=_standardize(frame.to_numpy(dtype=float), center, scale),
                feature_names=table.feature_names,
                sample_ids=sample_ids,
            )
        )

    return MultiViewDataset(views=matrices, sample_ids=sample_ids, dropped_rows=dropped)


def load_view(path: Union[str, Path], name: Optional[str] = None) -> ProfileTable:
    """Read a strict tab-separated view file.

    The header holds the feature names after a sample-id cell; each following
    line holds a sample id and one decimal number per feature. Ragged lines,
    empty files, ``NA`` and non-finite values are rejected with the line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read view file: {e}", str(path))

    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty file", str(path), 1)

    header = lines[0].split("\t")
    if len(header) < 2:
        raise ParseError("header needs a sample id column and at least one feature", str(path), 1)
    features = header[1:]
    if len(set(features)) != len(features):
        raise ParseError("duplicate feature names in header", str(path), 1)
    if len(lines) < 2:
        raise ParseError("no data rows", str(path), 2)

    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.count("\t") + 1
        if fields != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {fields}", str(path), line_no
            )

    frame = pd.read_csv(
        io.StringIO(text),
        sep="\t",
        dtype=str,
        keep_default_na=False,
        quoting=csv.QUOTE_NONE,
        index_col=0,
    )
    for row, sample_id in enumerate(frame.index):
        if not str(sample_id).strip():
            raise ParseError("empty sample id", str(path), row + 2)

    numeric = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(numeric)
    if np.any(bad):
        row, col = np.argwhere(bad)[0]
        raise ParseError(
            f"invalid value {frame.iat[row, col]!r} for feature {features[col]!r}",
            str(path),
            int(row) + 2,
        )

    return ProfileTable(
        values=numeric,
        row_ids=[str(i) for i in frame.index],
        feature_names=features,
        name=name or path.stem,
    )


def save_view(table: ProfileTable, path: Union[str, Path]) -> Path:
    """Write a view file that ``load_view`` reads back unchanged."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_frame().to_csv(
        path, sep="\t", float_format="%.17g", lineterminator="\n", quoting=csv.QUOTE_NONE
    )
    return path
