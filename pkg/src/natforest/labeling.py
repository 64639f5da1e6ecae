"""Terminal annotation sessions and vote-based adjudication."""
from __future__ import annotations

import csv
import os
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .ingest import distinct_tweets, format_time, parse_time

LABEL_COLUMNS = ["author_id", "annotator", "label", "noted_at"]
ADJUDICATED_COLUMNS = LABEL_COLUMNS + ["votes_for_1", "votes_for_0"]
RECENT_TWEETS = 10


class LabelFileError(Exception):
    pass


@dataclass(frozen=True)
class Annotation:
    author_id: int
    annotator: str
    label: int
    noted_at: datetime


@dataclass(frozen=True)
class AdjudicatedLabel:
    author_id: int
    label: Optional[int]
    votes_for_1: int
    votes_for_0: int

    @property
    def resolved(self) -> bool:
        return self.label is not None


@dataclass
class SessionResult:
    annotated: int
    skipped: int
    pending: list


def read_annotations(path) -> list[Annotation]:
    """Read an annotator file; any malformed row raises LabelFileError."""
    out = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if header[:4] != LABEL_COLUMNS:
            raise LabelFileError(f"{path}: unexpected header {header}")
        for rec in reader:
            if not rec:
                continue
            try:
                a = Annotation(int(rec[0]), rec[1], int(rec[2]), parse_time(rec[3]))
            except (ValueError, IndexError) as exc:
                raise LabelFileError(f"{path}:{reader.line_num}: {exc}") from exc
            if a.label not in (0, 1):
                raise LabelFileError(f"{path}:{reader.line_num}: label must be 0 or 1")
            if (a.author_id, a.annotator) in seen:
                raise LabelFileError(f"{path}:{reader.line_num}: duplicate annotation")
            seen.add((a.author_id, a.annotator))
            out.append(a)
    return out


def _tweets_by_author(tweets) -> dict:
    by = {}
    for t in distinct_tweets(tweets):
        by.setdefault(t.author_id, []).append(t)
    for lst in by.values():
        lst.sort(key=lambda t: (t.created_at, t.tweet_id), reverse=True)
    return by


def render_user(row, recent) -> str:
    lines = [
        f"@{row.username}  (id {row.author_id})",
        f"location:    {row.location}",
        f"description: {row.description}",
        f"profile:     {row.profile_link}",
        f"recent tweets ({len(recent)}):",
    ]
    for t in recent:
        text = " ".join(t.text.split())
        lines.append(f"  [{format_time(t.created_at)}] {text}")
    return "\n".join(lines)


def run_label_session(sample: Sequence, tweets: Iterable, annotator: str, path,
                      read: Callable[[str], str] = input,
                      write: Callable[[str], None] = print,
                      clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc)) -> SessionResult:
    """Annotate every sample row not yet present in ``path`` for ``annotator``.

    Keys: 1 (national), 0 (other or unidentifiable), s (skip), q (quit).
    Each decision is flushed to disk immediately, so a session can be
    interrupted and resumed.
    """
    if not annotator or "," in annotator:
        raise ValueError("annotator id must be non-empty and contain no commas")
    path = Path(path)
    done = set()
    if path.exists() and path.stat().st_size > 0:
        done = {a.author_id for a in read_annotations(path) if a.annotator == annotator}
        new_file = False
    else:
        new_file = True
    by_author = _tweets_by_author(tweets)
    todo = [r for r in sample if r.author_id not in done]
    annotated = skipped = 0
    pending = []
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new_file:
            w.writerow(LABEL_COLUMNS)
            fh.flush()
        for i, row in enumerate(todo):
            recent = by_author.get(row.author_id, [])[:RECENT_TWEETS]
            write(f"\n[{i + 1}/{len(todo)}] " + render_user(row, recent))
            while True:
                key = read("label [1/0/s/q]: ").strip().lower()
                if key in ("1", "0", "s", "q"):
                    break
                write("please answer 1, 0, s or q")
            if key == "q":
                pending.extend(r.author_id for r in todo[i:])
                break
            if key == "s":
                skipped += 1
                pending.append(row.author_id)
                continue
            w.writerow([row.author_id, annotator, key, format_time(clock())])
            fh.flush()
            os.fsync(fh.fileno())
            annotated += 1
    return SessionResult(annotated, skipped, pending)


def adjudicate(groups: Iterable[Sequence[Annotation]], author_ids: Optional[Iterable[int]] = None) -> list[AdjudicatedLabel]:
    """Majority vote per user across annotator files; ties stay unresolved."""
    votes = {}
    for anns in groups:
        for a in anns:
            votes.setdefault(a.author_id, Counter())[a.label] += 1
    ids = sorted(set(votes) | set(author_ids or ()))
    out = []
    for uid in ids:
        c = votes.get(uid, Counter())
        v1, v0 = c[1], c[0]
        label = 1 if v1 > v0 else 0 if v0 > v1 else None
        out.append(AdjudicatedLabel(uid, label, v1, v0))
    return out


def write_adjudicated(labels: Iterable[AdjudicatedLabel], path, when: Optional[datetime] = None) -> None:
    when = when or datetime.now(timezone.utc)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ADJUDICATED_COLUMNS)
        for lab in labels:
            w.writerow([lab.author_id, "vote", "" if lab.label is None else lab.label,
                        format_time(when), lab.votes_for_1, lab.votes_for_0])


def read_labels(path) -> dict[int, int]:
    """author_id -> label from any CSV carrying those two columns.

    Rows with an empty label (unresolved ties) are an error: they must be
    settled before training.
    """
    out = {}
    unresolved = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "author_id" not in cols or "label" not in cols:
            raise LabelFileError(f"{path}: needs author_id and label columns")
        for rec in reader:
            try:
                uid = int(rec["author_id"])
            except ValueError as exc:
                raise LabelFileError(f"{path}:{reader.line_num}: bad author_id") from exc
            raw = (rec["label"] or "").strip()
            if raw == "":
                unresolved.append(uid)
                continue
            if raw not in ("0", "1"):
                raise LabelFileError(f"{path}:{reader.line_num}: label must be 0 or 1")
            if uid in out and out[uid] != int(raw):
                raise LabelFileError(f"{path}: conflicting labels for {uid}")
            out[uid] = int(raw)
    if unresolved:
        raise LabelFileError(f"{path}: {len(unresolved)} unresolved labels, e.g. {unresolved[:5]}")
    return out
