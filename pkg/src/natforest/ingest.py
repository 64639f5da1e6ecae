"""Tweet/user archives: parsing, writing and interaction-edge extraction.

The canonical archive is a UTF-8 CSV with a header row. A tweet carrying
several references is stored as several rows that differ only in their
``ref_*`` fields.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

log = logging.getLogger(__name__)

TWEET_COLUMNS = [
    "tweet_id", "author_id", "created_at", "lang", "source", "text",
    "in_reply_to_user_id", "ref_type", "ref_tweet_id", "ref_author_id",
    "mentions", "retweet_count", "reply_count", "like_count", "quote_count",
    "place_country",
]
USER_COLUMNS = [
    "author_id", "username", "created_at", "verified", "followers",
    "following", "tweet_count", "listed_count", "location", "description",
]
EDGE_COLUMNS = ["kind", "actor", "target", "tweet_id"]

REF_TYPES = ("retweeted", "replied_to", "quoted", "none")
EDGE_KINDS = ("mention", "retweet", "reply", "quote")
_REF_KIND = {"retweeted": "retweet", "replied_to": "reply", "quoted": "quote"}


class ArchiveError(Exception):
    """An archive cannot be read at all (missing file, bad header)."""


def parse_time(text: str) -> datetime:
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: int
    author_id: int
    created_at: datetime
    lang: str = ""
    source: str = ""
    text: str = ""
    in_reply_to_user_id: Optional[int] = None
    ref_type: str = "none"
    ref_tweet_id: Optional[int] = None
    ref_author_id: Optional[int] = None
    mentions: tuple = ()
    retweet_count: int = 0
    reply_count: int = 0
    like_count: int = 0
    quote_count: int = 0
    place_country: Optional[str] = None

    def __post_init__(self):
        if self.ref_type not in REF_TYPES:
            raise ValueError(f"unknown ref_type {self.ref_type!r}")
        if (self.ref_type == "none") != (self.ref_tweet_id is None):
            raise ValueError("ref_type and ref_tweet_id must be both set or both empty")
        for name in ("retweet_count", "reply_count", "like_count", "quote_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} is negative")

    @property
    def sort_key(self):
        return (self.tweet_id, self.ref_type, self.ref_tweet_id or 0)


@dataclass(frozen=True)
class UserRecord:
    author_id: int
    username: str
    created_at: Optional[datetime] = None
    verified: bool = False
    followers: int = 0
    following: int = 0
    tweet_count: int = 0
    listed_count: int = 0
    location: str = ""
    description: str = ""


@dataclass(frozen=True)
class InteractionEdge:
    kind: str
    actor: int
    target: Optional[int]
    tweet_id: int

    @property
    def resolved(self) -> bool:
        return self.target is not None


@dataclass
class ParseReport:
    rows: int = 0
    accepted: int = 0
    rejects: list = field(default_factory=list)

    def reject(self, line: int, reason: str):
        self.rejects.append((line, reason))

    def summary(self) -> str:
        lines = [f"rows={self.rows} accepted={self.accepted} rejected={len(self.rejects)}"]
        lines += [f"  line {ln}: {why}" for ln, why in self.rejects]
        return "\n".join(lines)


def _opt_int(s: str) -> Optional[int]:
    s = s.strip()
    return int(s) if s else None


def _count(s: str, name: str) -> int:
    v = int(s) if s.strip() else 0
    if v < 0:
        raise ValueError(f"{name} is negative")
    return v


def _tweet_from_row(row: dict) -> TweetRecord:
    place = row["place_country"].strip() or None
    if place is not None and len(place) != 2:
        raise ValueError(f"place_country {place!r} is not a 2-letter code")
    mentions = tuple(int(m) for m in row["mentions"].split(";") if m.strip())
    return TweetRecord(
        tweet_id=int(row["tweet_id"]),
        author_id=int(row["author_id"]),
        created_at=parse_time(row["created_at"]),
        lang=row["lang"],
        source=row["source"],
        text=row["text"],
        in_reply_to_user_id=_opt_int(row["in_reply_to_user_id"]),
        ref_type=row["ref_type"].strip() or "none",
        ref_tweet_id=_opt_int(row["ref_tweet_id"]),
        ref_author_id=_opt_int(row["ref_author_id"]),
        mentions=mentions,
        retweet_count=_count(row["retweet_count"], "retweet_count"),
        reply_count=_count(row["reply_count"], "reply_count"),
        like_count=_count(row["like_count"], "like_count"),
        quote_count=_count(row["quote_count"], "quote_count"),
        place_country=place,
    )


def _read_rows(path, columns):
    path = Path(path)
    if not path.exists():
        raise ArchiveError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != columns:
            raise ArchiveError(f"{path}: missing or unexpected header {header!r}")
        for row in reader:
            yield reader.line_num, row


def parse_archive(path) -> tuple[list[TweetRecord], ParseReport]:
    """Read a tweets CSV. Bad rows are skipped and listed in the report."""
    report = ParseReport()
    records = []
    for line, row in _read_rows(path, TWEET_COLUMNS):
        report.rows += 1
        if len(row) != len(TWEET_COLUMNS):
            report.reject(line, f"expected {len(TWEET_COLUMNS)} fields, got {len(row)}")
            continue
        try:
            records.append(_tweet_from_row(dict(zip(TWEET_COLUMNS, row))))
        except ValueError as exc:
            report.reject(line, str(exc))
    report.accepted = len(records)
    records.sort(key=lambda r: r.sort_key)
    return records, report


def _s(v) -> str:
    return "" if v is None else str(v)


def tweet_row(t: TweetRecord) -> list:
    return [
        t.tweet_id, t.author_id, format_time(t.created_at), t.lang, t.source,
        t.text, _s(t.in_reply_to_user_id), t.ref_type, _s(t.ref_tweet_id),
        _s(t.ref_author_id), ";".join(str(m) for m in t.mentions),
        t.retweet_count, t.reply_count, t.like_count, t.quote_count,
        _s(t.place_country),
    ]


class ArchiveWriter:
    """Appends tweet rows to a canonical CSV, writing the header once."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists() and self.path.stat().st_size)
        self._fh = open(self.path, "a" if append else "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._w.writerow(TWEET_COLUMNS)
        self.written = 0

    def write(self, tweets: Iterable[TweetRecord]):
        for t in tweets:
            self._w.writerow(tweet_row(t))
            self.written += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_archive(tweets: Iterable[TweetRecord], path) -> None:
    with ArchiveWriter(path) as w:
        w.write(tweets)


def parse_users(path) -> tuple[list[UserRecord], ParseReport]:
    report = ParseReport()
    users = {}
    for line, row in _read_rows(path, USER_COLUMNS):
        report.rows += 1
        if len(row) != len(USER_COLUMNS):
            report.reject(line, f"expected {len(USER_COLUMNS)} fields, got {len(row)}")
            continue
        r = dict(zip(USER_COLUMNS, row))
        try:
            u = UserRecord(
                author_id=int(r["author_id"]),
                username=r["username"],
                created_at=parse_time(r["created_at"]) if r["created_at"].strip() else None,
                verified=r["verified"].strip().lower() in ("true", "1", "yes"),
                followers=_count(r["followers"], "followers"),
                following=_count(r["following"], "following"),
                tweet_count=_count(r["tweet_count"], "tweet_count"),
                listed_count=_count(r["listed_count"], "listed_count"),
                location=r["location"],
                description=r["description"],
            )
        except ValueError as exc:
            report.reject(line, str(exc))
            continue
        if u.author_id in users:
            report.reject(line, f"duplicate author_id {u.author_id}")
            continue
        users[u.author_id] = u
    report.accepted = len(users)
    return sorted(users.values(), key=lambda u: u.author_id), report


def write_users(users: Iterable[UserRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(USER_COLUMNS)
        for u in users:
            w.writerow([
                u.author_id, u.username,
                format_time(u.created_at) if u.created_at else "",
                "True" if u.verified else "False", u.followers, u.following,
                u.tweet_count, u.listed_count, u.location, u.description,
            ])


# -- raw v2 tweet objects ----------------------------------------------------

def tweets_from_v2(obj: dict, includes: Optional[dict] = None) -> list[TweetRecord]:
    """Map one v2 tweet object onto archive rows (one per reference)."""
    includes = includes or {}
    metrics = obj.get("public_metrics", {})
    mentions = []
    for m in obj.get("entities", {}).get("mentions", []):
        if "id" in m:
            mentions.append(int(m["id"]))
        else:
            log.info("tweet %s: mention of %r has no user id; dropped",
                     obj.get("id"), m.get("username"))
    place = None
    geo = obj.get("geo") or {}
    if "country_code" in geo:
        place = geo["country_code"]
    elif "place_id" in geo:
        for p in includes.get("places", []):
            if p.get("id") == geo["place_id"]:
                place = p.get("country_code")
    ref_authors = {int(t["id"]): int(t["author_id"])
                   for t in includes.get("tweets", []) if "author_id" in t}
    base = dict(
        tweet_id=int(obj["id"]),
        author_id=int(obj["author_id"]),
        created_at=parse_time(obj["created_at"]),
        lang=obj.get("lang", ""),
        source=obj.get("source", ""),
        text=obj.get("text", ""),
        in_reply_to_user_id=_opt_int(str(obj.get("in_reply_to_user_id", "") or "")),
        mentions=tuple(mentions),
        retweet_count=int(metrics.get("retweet_count", 0)),
        reply_count=int(metrics.get("reply_count", 0)),
        like_count=int(metrics.get("like_count", 0)),
        quote_count=int(metrics.get("quote_count", 0)),
        place_country=place,
    )
    refs = obj.get("referenced_tweets") or []
    if not refs:
        return [TweetRecord(**base)]
    out = []
    for ref in refs:
        rid = int(ref["id"])
        out.append(TweetRecord(ref_type=ref["type"], ref_tweet_id=rid,
                               ref_author_id=ref_authors.get(rid), **base))
    return out


def read_jsonl(path) -> tuple[list[TweetRecord], ParseReport]:
    """Read raw v2 tweet objects, one JSON document per line."""
    report = ParseReport()
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            report.rows += 1
            try:
                records.extend(tweets_from_v2(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                report.reject(line_no, f"{type(exc).__name__}: {exc}")
    report.accepted = report.rows - len(report.rejects)
    records.sort(key=lambda r: r.sort_key)
    return records, report


# -- users and edges ---------------------------------------------------------

def distinct_tweets(tweets: Iterable[TweetRecord]) -> list[TweetRecord]:
    """First row per tweet_id, so multi-reference rows count once."""
    seen = {}
    for t in tweets:
        seen.setdefault(t.tweet_id, t)
    return [seen[k] for k in sorted(seen)]


def extract_users(tweets: Iterable[TweetRecord]) -> set:
    """Distinct author ids (usersIN)."""
    return {t.author_id for t in tweets}


def build_author_map(tweets: Iterable[TweetRecord],
                     referenced: Iterable[TweetRecord] = ()) -> dict:
    """tweet_id -> author_id from the corpus, hydrated tweets and ref fields."""
    amap = {}
    tweets = list(tweets)
    for t in tweets:
        if t.ref_tweet_id is not None and t.ref_author_id is not None:
            amap.setdefault(t.ref_tweet_id, t.ref_author_id)
    for t in list(referenced) + tweets:
        amap[t.tweet_id] = t.author_id
    return amap


def extract_edges(tweets: Iterable[TweetRecord], author_map: dict) -> list[InteractionEdge]:
    """Mention edges per mention occurrence, one edge per reference row.

    Unresolvable reference targets come back with ``target=None``.
    """
    tweets = list(tweets)
    edges = []
    for t in distinct_tweets(tweets):
        for m in t.mentions:
            edges.append(InteractionEdge("mention", t.author_id, m, t.tweet_id))
    unresolved = 0
    for t in tweets:
        if t.ref_type == "none":
            continue
        target = None
        if t.ref_type == "replied_to" and t.in_reply_to_user_id is not None:
            target = t.in_reply_to_user_id
        elif t.ref_author_id is not None:
            target = t.ref_author_id
        else:
            target = author_map.get(t.ref_tweet_id)
        if target is None:
            unresolved += 1
        edges.append(InteractionEdge(_REF_KIND[t.ref_type], t.author_id, target, t.tweet_id))
    if unresolved:
        log.warning("%d references could not be resolved to an author", unresolved)
    return edges


def users_out(edges: Iterable[InteractionEdge], users_in: set) -> set:
    """Interaction targets that author nothing in the corpus (usersOUT)."""
    return {e.target for e in edges if e.resolved and e.target not in users_in}


def write_edges(edges: Iterable[InteractionEdge], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for e in edges:
            w.writerow([e.kind, e.actor, _s(e.target), e.tweet_id])


def read_edges(path) -> list[InteractionEdge]:
    edges = []
    for line, row in _read_rows(path, EDGE_COLUMNS):
        kind, actor, target, tid = row
        if kind not in EDGE_KINDS:
            raise ArchiveError(f"{path}:{line}: unknown edge kind {kind!r}")
        edges.append(InteractionEdge(kind, int(actor), _opt_int(target), int(tid)))
    return edges


def report_sources(tweets: Iterable[TweetRecord]) -> list[tuple[str, int, float]]:
    """(source, count, percent) per publishing app, most used first."""
    counts = Counter(t.source for t in distinct_tweets(tweets))
    total = sum(counts.values())
    if not total:
        return []
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(src, n, 100.0 * n / total) for src, n in rows]


def format_sources(table, top: Optional[int] = None) -> str:
    """Render ``report_sources`` output, folding the tail into ``Others``."""
    if top is not None and len(table) > top:
        rest = table[top:]
        table = list(table[:top]) + [("Others", sum(r[1] for r in rest),
                                       sum(r[2] for r in rest))]
    lines = ["source\tcount\t%"]
    lines += [f"{src}\t{n}\t{pct:.2f}%" for src, n, pct in table]
    return "\n".join(lines)


# -- corpus directory ----------------------------------------------------------

@dataclass
class Corpus:
    tweets: list
    users: dict
    edges: list

    @property
    def users_in(self) -> set:
        return extract_users(self.tweets)


def ingest(tweets_path, users_path, out_dir, referenced_path=None) -> tuple[Corpus, str]:
    """Parse archives and write a corpus directory.

    Returns the corpus and a text report (also written to ``report.txt``).
    """
    tweets, trep = parse_archive(tweets_path)
    users, urep = parse_users(users_path)
    referenced = parse_archive(referenced_path)[0] if referenced_path else []
    amap = build_author_map(tweets, referenced)
    edges = extract_edges(tweets, amap)
    uin = extract_users(tweets)
    uout = users_out(edges, uin)
    missing = sorted(uin - {u.author_id for u in users})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_archive(tweets, out / "tweets.csv")
    write_users([u for u in users if u.author_id in uin], out / "users.csv")
    write_edges(edges, out / "edges.csv")
    unresolved = sum(not e.resolved for e in edges)
    report = "\n".join([
        "tweets: " + trep.summary(),
        "users: " + urep.summary(),
        f"usersIN={len(uin)} usersOUT={len(uout)} edges={len(edges)} unresolved={unresolved}",
        f"authors without profile: {len(missing)}",
    ])
    (out / "report.txt").write_text(report + "\n", encoding="utf-8")
    corpus = Corpus(tweets, {u.author_id: u for u in users if u.author_id in uin}, edges)
    return corpus, report


def load_corpus(corpus_dir) -> Corpus:
    d = Path(corpus_dir)
    tweets, rep = parse_archive(d / "tweets.csv")
    if rep.rejects:
        raise ArchiveError(f"{d / 'tweets.csv'}: {len(rep.rejects)} bad rows\n{rep.summary()}")
    users, urep = parse_users(d / "users.csv")
    if urep.rejects:
        raise ArchiveError(f"{d / 'users.csv'}: {len(urep.rejects)} bad rows\n{urep.summary()}")
    edges_path = d / "edges.csv"
    edges = (read_edges(edges_path) if edges_path.exists()
             else extract_edges(tweets, build_author_map(tweets)))
    return Corpus(tweets, {u.author_id: u for u in users}, edges)
