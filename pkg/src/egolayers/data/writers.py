"""CSV serialisation of the ingest formats and of report tables.

All files are UTF-8, comma separated, with a header row and ``\\n`` line
endings. Missing values are written as empty fields and identifiers stay
integers even in columns that allow blanks.
"""

import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)

WINDOW_GRAPH_COLUMNS = ("ego", "alter", "n1", "n2", "n3", "n4")
SOCIAL_GRAPH_COLUMNS = ("ego", "alter")
EVENT_LOG_COLUMNS = ("source", "target", "kind", "months_before_download", "original_author")
ACCOUNT_COLUMNS = (
    "id",
    "created_months_before_download",
    "tweets",
    "following",
    "followers",
    "reply_ratio",
    "mention_ratio",
)


def write_table(
    rows: Iterable[Sequence],
    columns: Sequence[str],
    path: str | Path,
    *,
    int_columns: Sequence[str] = (),
) -> Path:
    """Write rows under a header; ``int_columns`` are nullable integers."""
    path = Path(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    for column in int_columns:
        frame[column] = pd.array(frame[column].tolist(), dtype="Int64")
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.debug(f"Wrote {len(frame)} row(s) to {path}")
    return path


def write_window_graph(rows: Iterable[Sequence], path: str | Path) -> Path:
    return write_table(rows, WINDOW_GRAPH_COLUMNS, path, int_columns=WINDOW_GRAPH_COLUMNS)


def write_social_graph(rows: Iterable[Sequence], path: str | Path) -> Path:
    return write_table(rows, SOCIAL_GRAPH_COLUMNS, path, int_columns=SOCIAL_GRAPH_COLUMNS)


def write_event_log(rows: Iterable[Sequence], path: str | Path) -> Path:
    """Rows are (source, target, kind, months_before_download, original_author); post targets may be None."""
    return write_table(rows, EVENT_LOG_COLUMNS, path, int_columns=("source", "target", "original_author"))


def write_accounts(rows: Iterable[Sequence], path: str | Path) -> Path:
    return write_table(rows, ACCOUNT_COLUMNS, path, int_columns=("id", "tweets", "following", "followers"))
