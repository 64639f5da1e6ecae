"""Per-user quantitative columns derived from a corpus."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .ingest import Corpus, distinct_tweets

PROFILE_COLUMNS = ["followers", "following", "tweet_count", "listed_count"]
PUBLIC_COLUMNS = ["cant_tweets_sample", "rt", "vreplies", "likes", "rquotes"]
ACTIONS = ["mentions", "rt", "rp", "rq"]
DIRECTIONS = ["a_In", "a_Out", "de_In"]
ACTION_COLUMNS = {a: [f"{a}_{d}" for d in DIRECTIONS] for a in ACTIONS}
DIRECTIONAL_COLUMNS = [c for a in ACTIONS for c in ACTION_COLUMNS[a]]
FEATURE_COLUMNS = PROFILE_COLUMNS + PUBLIC_COLUMNS + DIRECTIONAL_COLUMNS + ["activity"]

CSV_COLUMNS = (["author_id", "username"] + FEATURE_COLUMNS
               + ["label", "prob0", "prob1", "pred", "location", "description",
                  "profile_link"])

_PREFIX = {"mention": "mentions", "retweet": "rt", "reply": "rp", "quote": "rq"}


class FeatureFileError(Exception):
    """A features CSV is unreadable; ``problems`` lists (line, reason)."""

    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


@dataclass
class UserFeatureRow:
    author_id: int
    username: str = ""
    followers: int = 0
    following: int = 0
    tweet_count: int = 0
    listed_count: int = 0
    cant_tweets_sample: int = 0
    rt: int = 0
    vreplies: int = 0
    likes: int = 0
    rquotes: int = 0
    mentions_a_In: int = 0
    mentions_a_Out: int = 0
    mentions_de_In: int = 0
    rt_a_In: int = 0
    rt_a_Out: int = 0
    rt_de_In: int = 0
    rp_a_In: int = 0
    rp_a_Out: int = 0
    rp_de_In: int = 0
    rq_a_In: int = 0
    rq_a_Out: int = 0
    rq_de_In: int = 0
    activity: int = 0
    label: Optional[int] = None
    prob0: Optional[float] = None
    prob1: Optional[float] = None
    pred: Optional[int] = None
    location: str = ""
    description: str = ""
    profile_link: str = ""

    def values(self, columns: Iterable[str] = FEATURE_COLUMNS) -> list:
        return [getattr(self, c) for c in columns]

    def with_activity(self) -> "UserFeatureRow":
        self.activity = sum(self.values(DIRECTIONAL_COLUMNS))
        return self


def profile_link(username: str) -> str:
    return f"https://twitter.com/{username}" if username else ""


def compute_features(corpus: Corpus, users_in: Optional[set] = None) -> list[UserFeatureRow]:
    """One row per usersIN member, sorted by author_id.

    Self-interactions and unresolved references are left out of the twelve
    directional counts; ``activity`` is their sum.
    """
    if users_in is None:
        users_in = corpus.users_in
    counts = defaultdict(lambda: defaultdict(int))
    for e in corpus.edges:
        if not e.resolved or e.actor == e.target:
            continue
        p = _PREFIX[e.kind]
        if e.actor in users_in:
            side = "a_In" if e.target in users_in else "a_Out"
            counts[e.actor][f"{p}_{side}"] += 1
        if e.target in users_in and e.actor in users_in:
            counts[e.target][f"{p}_de_In"] += 1

    public = defaultdict(lambda: [0, 0, 0, 0, 0])
    for t in distinct_tweets(corpus.tweets):
        acc = public[t.author_id]
        acc[0] += 1
        acc[1] += t.retweet_count
        acc[2] += t.reply_count
        acc[3] += t.like_count
        acc[4] += t.quote_count

    rows = []
    for uid in sorted(users_in):
        prof = corpus.users.get(uid)
        row = UserFeatureRow(author_id=uid)
        if prof is not None:
            row.username = prof.username
            row.followers = prof.followers
            row.following = prof.following
            row.tweet_count = prof.tweet_count
            row.listed_count = prof.listed_count
            row.location = prof.location
            row.description = prof.description
            row.profile_link = profile_link(prof.username)
        for col, v in zip(PUBLIC_COLUMNS, public.get(uid, [0] * 5)):
            setattr(row, col, v)
        for col, v in counts.get(uid, {}).items():
            setattr(row, col, v)
        rows.append(row.with_activity())
    return rows


def feature_matrix(rows: Iterable[UserFeatureRow], columns=FEATURE_COLUMNS) -> np.ndarray:
    return np.array([r.values(columns) for r in rows], dtype=np.float64).reshape(-1, len(columns))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_features(rows: Iterable[UserFeatureRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


_INT_FIELDS = {"author_id", "label", "pred", *FEATURE_COLUMNS}
_FLOAT_FIELDS = {"prob0", "prob1"}


def read_features(path) -> list[UserFeatureRow]:
    """Read a features (or classified) CSV; any bad row raises with diagnostics."""
    path = Path(path)
    if not path.exists():
        raise FeatureFileError(f"{path}: no such file")
    problems = []
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise FeatureFileError(f"{path}: missing columns {missing}")
        known = {f.name for f in fields(UserFeatureRow)}
        for rec in reader:
            line = reader.line_num
            try:
                kw = {}
                for c in known:
                    raw = rec.get(c) or ""
                    if c in _INT_FIELDS:
                        raw = raw.strip()
                        if raw == "":
                            if c in ("label", "pred"):
                                kw[c] = None
                                continue
                            raise ValueError(f"{c} is empty")
                        kw[c] = int(raw)
                        if c in FEATURE_COLUMNS and kw[c] < 0:
                            raise ValueError(f"{c} is negative")
                        if c in ("label", "pred") and kw[c] not in (0, 1):
                            raise ValueError(f"{c} must be 0 or 1")
                    elif c in _FLOAT_FIELDS:
                        kw[c] = float(raw) if raw.strip() else None
                    else:
                        kw[c] = raw
                rows.append(UserFeatureRow(**kw))
            except ValueError as exc:
                problems.append((line, str(exc)))
    if problems:
        detail = "\n".join(f"  line {ln}: {why}" for ln, why in problems[:20])
        raise FeatureFileError(f"{path}: {len(problems)} bad rows\n{detail}", problems)
    ids = [r.author_id for r in rows]
    if len(set(ids)) != len(ids):
        raise FeatureFileError(f"{path}: duplicate author_id values")
    return rows
