"""A local stand-in for the v2 full-archive search endpoint.

Serves tweets held in memory, paginates with ``next_token`` and enforces a
fixed request window that opens with the first request, answering 429 once
it is spent. The clock is injectable so tests can run hours of simulated
time in milliseconds.
"""
from __future__ import annotations

import json
import re
import threading
from collections import defaultdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable, Optional
from urllib.parse import parse_qs, urlparse

from .acquire import MAX_PAGE, SEARCH_PATH
from .ingest import TweetRecord, UserRecord, format_time, parse_time

_V2_REF = {"retweeted", "replied_to", "quoted"}


class FakeClock:
    """Monotonic seconds that only move when someone sleeps."""

    def __init__(self, start: float = 0.0):
        self.t = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self.t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.t += max(0.0, seconds)


def tweet_objects(tweets: Iterable[TweetRecord]) -> list[tuple[dict, list]]:
    """Group archive rows back into v2 tweet objects.

    Returns ``(object, referenced stubs)`` pairs; the stubs carry the
    referenced tweet's author when the archive knows it.
    """
    grouped = defaultdict(list)
    for t in tweets:
        grouped[t.tweet_id].append(t)
    out = []
    for tid in grouped:
        rows = grouped[tid]
        t = rows[0]
        obj = {
            "id": str(t.tweet_id), "author_id": str(t.author_id),
            "created_at": format_time(t.created_at), "lang": t.lang, "source": t.source,
            "text": t.text,
            "public_metrics": {"retweet_count": t.retweet_count, "reply_count": t.reply_count,
                               "like_count": t.like_count, "quote_count": t.quote_count},
        }
        if t.mentions:
            obj["entities"] = {"mentions": [{"id": str(m), "username": f"user{m}"} for m in t.mentions]}
        if t.in_reply_to_user_id is not None:
            obj["in_reply_to_user_id"] = str(t.in_reply_to_user_id)
        if t.place_country:
            obj["geo"] = {"country_code": t.place_country}
        stubs = []
        refs = [r for r in rows if r.ref_type in _V2_REF]
        if refs:
            obj["referenced_tweets"] = [{"type": r.ref_type, "id": str(r.ref_tweet_id)} for r in refs]
            stubs = [{"id": str(r.ref_tweet_id), "author_id": str(r.ref_author_id)}
                     for r in refs if r.ref_author_id is not None]
        out.append((obj, stubs))
    return out


def user_object(u: UserRecord) -> dict:
    obj = {"id": str(u.author_id), "username": u.username, "verified": u.verified,
           "location": u.location, "description": u.description,
           "public_metrics": {"followers_count": u.followers, "following_count": u.following,
                              "tweet_count": u.tweet_count, "listed_count": u.listed_count}}
    if u.created_at is not None:
        obj["created_at"] = format_time(u.created_at)
    return obj


_TOKEN = re.compile(r"(place_country|lang|from):(\S+)")


def _matcher(query: str):
    pieces = _TOKEN.findall(query.replace("(", " ").replace(")", " "))
    if not pieces:
        raise ValueError("query has no recognised operators")
    country = {v for k, v in pieces if k == "place_country"}
    langs = {v for k, v in pieces if k == "lang"}
    users = {v.lower() for k, v in pieces if k == "from"}
    return country, langs, users


class MockArchive:
    """In-memory search endpoint served over HTTP on localhost."""

    def __init__(self, tweets: Iterable[TweetRecord] = (), users: Iterable[UserRecord] = (),
                 max_requests: int = 300, window: float = 900.0,
                 clock: Callable[[], float] = None):
        self.clock = clock or FakeClock()
        self.max_requests = max_requests
        self.window = window
        self.users = {u.author_id: u for u in users}
        self.by_name = {u.username.lower(): u.author_id for u in self.users.values()}
        tweets = list(tweets)
        self.created = {t.tweet_id: t.created_at for t in tweets}
        self.meta = {t.tweet_id: t for t in tweets}
        self.objects = sorted(tweet_objects(tweets),
                              key=lambda p: (self.created[int(p[0]["id"])], int(p[0]["id"])),
                              reverse=True)
        self.request_times: list[float] = []
        self.status_log: list[int] = []
        self._window_start: Optional[float] = None
        self._count = 0
        self._failures = []
        self._hits = {}
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    # fault injection
    def fail_next(self, n: int, status: int = 503) -> None:
        self._failures.extend([status] * n)

    def garble_next(self, n: int) -> None:
        self._failures.extend(["garble"] * n)

    def _author_name(self, author_id: int) -> str:
        u = self.users.get(author_id)
        return u.username.lower() if u else f"user{author_id}"

    def _filter(self, country, langs, names, start, end) -> list:
        hits = []
        for obj, stubs in self.objects:
            t = self.meta[int(obj["id"])]
            if country and t.place_country not in country:
                continue
            if langs and t.lang not in langs:
                continue
            if names and self._author_name(t.author_id) not in names:
                continue
            if start and t.created_at < start:
                continue
            if end and t.created_at >= end:
                continue
            hits.append((obj, stubs))
        return hits

    def search(self, params: dict) -> tuple[int, dict, dict]:
        """Handle one request; returns (status, headers, body)."""
        with self._lock:
            now = self.clock()
            self.request_times.append(now)
            if self._window_start is None or now - self._window_start >= self.window:
                self._window_start = now
                self._count = 0
            self._count += 1
            if self._count > self.max_requests:
                reset = self._window_start + self.window
                return 429, {"x-rate-limit-reset": repr(reset)}, {"title": "Too Many Requests"}
            if self._failures:
                kind = self._failures.pop(0)
                if kind == "garble":
                    return 200, {}, None
                return kind, {}, {"title": "Service Unavailable"}
        try:
            size = int(params.get("max_results", "10"))
            if not 10 <= size <= MAX_PAGE:
                raise ValueError("max_results out of range")
            country, langs, names = _matcher(params["query"])
            start = parse_time(params["start_time"]) if "start_time" in params else None
            end = parse_time(params["end_time"]) if "end_time" in params else None
            offset = int(params.get("next_token", "0"))
        except (KeyError, ValueError) as exc:
            return 400, {}, {"title": "Invalid Request", "detail": str(exc)}
        key = (params["query"], start, end)
        hits = self._hits.get(key)
        if hits is None:
            hits = self._hits[key] = self._filter(country, langs, names, start, end)
        page = hits[offset:offset + size]
        body = {"meta": {"result_count": len(page)}}
        if page:
            body["data"] = [o for o, _ in page]
            stubs = [s for _, ss in page for s in ss]
            authors = sorted({int(o["author_id"]) for o, _ in page})
            inc = {}
            if stubs:
                inc["tweets"] = stubs
            users = [user_object(self.users[a]) for a in authors if a in self.users]
            if users:
                inc["users"] = users
            if inc:
                body["includes"] = inc
        if offset + size < len(hits):
            body["meta"]["next_token"] = str(offset + size)
        return 200, {}, body

    # HTTP plumbing
    def start(self) -> str:
        archive = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                url = urlparse(self.path)
                if url.path != SEARCH_PATH:
                    self.send_error(404)
                    return
                params = {k: v[-1] for k, v in parse_qs(url.query).items()}
                status, headers, body = archive.search(params)
                with archive._lock:
                    archive.status_log.append(status)
                payload = b"{not json" if body is None else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("content-type", "application/json")
                self.send_header("content-length", str(len(payload)))
                for k, v in headers.items():
                    self.send_header(k, v)
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self.url

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
