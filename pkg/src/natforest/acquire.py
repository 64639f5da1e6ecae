"""Paged downloads from a v2-style recent/full-archive search endpoint."""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Optional, Sequence

import httpx

from .ingest import UserRecord, format_time, parse_time, tweets_from_v2

log = logging.getLogger(__name__)

SEARCH_PATH = "/2/tweets/search/all"
MAX_PAGE = 500
MAX_USERS_PER_QUERY = 40
TWEET_FIELDS = ("author_id,created_at,lang,source,entities,public_metrics,"
                "referenced_tweets,in_reply_to_user_id,geo")
EXPANSIONS = "author_id,referenced_tweets.id,referenced_tweets.id.author_id,geo.place_id"
USER_FIELDS = "created_at,verified,public_metrics,location,description"


class InvalidQuery(ValueError):
    pass


class AcquisitionError(RuntimeError):
    """Fetching stopped early; ``count`` tweets were written before it did."""

    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


def build_geo_query(country: str, lang: Optional[str] = None) -> str:
    if not country or len(country) != 2 or not country.isalpha():
        raise InvalidQuery(f"country must be a 2-letter code, got {country!r}")
    q = f"place_country:{country.upper()}"
    return f"{q} lang:{lang}" if lang else q


def build_user_query(usernames: Sequence[str]) -> str:
    if not usernames:
        raise InvalidQuery("at least one username is required")
    if len(usernames) > MAX_USERS_PER_QUERY:
        raise InvalidQuery(f"at most {MAX_USERS_PER_QUERY} users per query, got {len(usernames)}")
    bad = [u for u in usernames if not u or " " in u]
    if bad:
        raise InvalidQuery(f"bad usernames: {bad}")
    return " OR ".join(f"from:{u}" for u in usernames)


def batches(items: Sequence, size: int = MAX_USERS_PER_QUERY) -> list[list]:
    if size < 1:
        raise ValueError("batch size must be positive")
    return [list(items[i:i + size]) for i in range(0, len(items), size)]


@dataclass(frozen=True)
class SearchQuery:
    start_time: datetime
    end_time: datetime
    country_code: Optional[str] = None
    lang: Optional[str] = None
    from_users: tuple = ()
    max_results: int = MAX_PAGE

    def __post_init__(self):
        if bool(self.from_users) == bool(self.country_code):
            raise InvalidQuery("give either a country code or a list of users, not both")
        if not 10 <= self.max_results <= MAX_PAGE:
            raise InvalidQuery(f"max_results must be in [10, {MAX_PAGE}]")
        if not self.start_time < self.end_time:
            raise InvalidQuery("start_time must precede end_time")
        self.text()  # validates the pieces

    def text(self) -> str:
        if self.country_code:
            return build_geo_query(self.country_code, self.lang)
        q = build_user_query(list(self.from_users))
        return f"({q}) lang:{self.lang}" if self.lang else q

    def params(self) -> dict:
        return {"query": self.text(), "start_time": format_time(self.start_time),
                "end_time": format_time(self.end_time), "max_results": self.max_results,
                "tweet.fields": TWEET_FIELDS, "expansions": EXPANSIONS, "user.fields": USER_FIELDS}


class RateBudget:
    """Client-side request budget.

    Keeps a log of send times and blocks until a new request would leave at
    most ``max_requests`` inside every window of length ``window`` seconds.
    """

    def __init__(self, max_requests: int = 300, window: float = 900.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if max_requests < 1 or window <= 0:
            raise ValueError("max_requests >= 1 and window > 0 required")
        self.max_requests = max_requests
        self.window = window
        self.clock = clock
        self.sleep = sleep
        self._log = deque()
        self.sent = 0
        self.waited = 0.0

    def _expire(self, now):
        while self._log and now - self._log[0] >= self.window:
            self._log.popleft()

    @property
    def used(self) -> int:
        self._expire(self.clock())
        return len(self._log)

    @property
    def window_start(self) -> Optional[float]:
        self._expire(self.clock())
        return self._log[0] if self._log else None

    def take(self) -> None:
        """Wait as needed, then count one request (before it is sent)."""
        while True:
            now = self.clock()
            self._expire(now)
            if len(self._log) < self.max_requests:
                break
            self.pause(self._log[0] + self.window - now)
        self._log.append(self.clock())
        self.sent += 1

    def pause(self, seconds: float) -> None:
        if seconds > 0:
            log.info("rate budget spent; pausing %.1f s", seconds)
            self.waited += seconds
            self.sleep(seconds)


@dataclass
class AcquireStats:
    requests: int = 0
    pages: int = 0
    written: int = 0
    duplicates: int = 0
    bad_records: int = 0
    waits_429: int = 0
    users: dict = field(default_factory=dict)


def user_from_v2(obj: dict) -> UserRecord:
    pm = obj.get("public_metrics") or {}
    return UserRecord(
        author_id=int(obj["id"]), username=obj.get("username", ""),
        created_at=parse_time(obj["created_at"]) if obj.get("created_at") else None,
        verified=bool(obj.get("verified", False)),
        followers=int(pm.get("followers_count", 0)), following=int(pm.get("following_count", 0)),
        tweet_count=int(pm.get("tweet_count", 0)), listed_count=int(pm.get("listed_count", 0)),
        location=obj.get("location", "") or "", description=obj.get("description", "") or "")


def acquire(query: SearchQuery, endpoint: str, budget: RateBudget, sink,
            client: Optional[httpx.Client] = None, max_retries: int = 3,
            backoff: float = 1.0, seen: Optional[set] = None,
            stats: Optional[AcquireStats] = None, headers: Optional[dict] = None) -> int:
    """Page through every result of ``query`` and write it to ``sink``.

    ``sink`` needs a ``write(iterable of TweetRecord)`` method. Returns the
    number of tweet rows written. Tweet ids already in ``seen`` are skipped,
    so one set can be shared across several queries of the same run.
    """
    own = client is None
    if own:
        client = httpx.Client(base_url=endpoint, timeout=60.0, headers=headers)
    seen = set() if seen is None else seen
    stats = stats if stats is not None else AcquireStats()
    token = None
    written = 0
    try:
        while True:
            params = query.params()
            if token:
                params["next_token"] = token
            page = _fetch(client, endpoint, params, budget, max_retries, backoff, stats, written)
            stats.pages += 1
            includes = page.get("includes") or {}
            rows = []
            for obj in page.get("data") or []:
                try:
                    tid = int(obj["id"])
                    if tid in seen:
                        stats.duplicates += 1
                        continue
                    recs = tweets_from_v2(obj, includes)
                except (KeyError, ValueError, TypeError) as exc:
                    stats.bad_records += 1
                    log.warning("skipping malformed tweet object: %s", exc)
                    continue
                seen.add(tid)
                rows.extend(recs)
            for u in includes.get("users") or []:
                try:
                    rec = user_from_v2(u)
                except (KeyError, ValueError, TypeError) as exc:
                    log.warning("skipping malformed user object: %s", exc)
                    continue
                stats.users[rec.author_id] = rec
            sink.write(rows)
            written += len(rows)
            stats.written += len(rows)
            token = (page.get("meta") or {}).get("next_token")
            if not token:
                return written
    finally:
        if own:
            client.close()


def _reset_wait(header: Optional[str], budget: RateBudget) -> float:
    """Seconds to idle after a 429. Real servers send an epoch timestamp;
    the mock sends a reading of the shared budget clock."""
    if header is None:
        return budget.window
    try:
        reset = float(header)
    except ValueError:
        return budget.window
    now = time.time() if reset > 1e9 else budget.clock()
    return min(max(reset - now, 0.0), budget.window)


def _fetch(client, endpoint, params, budget, max_retries, backoff, stats, written) -> dict:
    url = endpoint.rstrip("/") + SEARCH_PATH
    failures = 0
    while True:
        budget.take()
        stats.requests += 1
        try:
            resp = client.get(url, params=params)
        except httpx.HTTPError as exc:
            failures += 1
            if failures > max_retries:
                raise AcquisitionError(f"giving up after {max_retries} retries: {exc}", written) from exc
            budget.pause(backoff * 2 ** (failures - 1))
            continue
        if resp.status_code == 429:
            stats.waits_429 += 1
            wait = _reset_wait(resp.headers.get("x-rate-limit-reset"), budget)
            budget.pause(max(wait, 0.0))
            continue
        if resp.status_code >= 500 or resp.status_code == 408:
            failures += 1
            if failures > max_retries:
                raise AcquisitionError(f"server error {resp.status_code} after {max_retries} retries", written)
            budget.pause(backoff * 2 ** (failures - 1))
            continue
        if resp.status_code != 200:
            raise AcquisitionError(f"request rejected with status {resp.status_code}: {resp.text[:200]}", written)
        try:
            page = resp.json()
            if not isinstance(page, dict):
                raise ValueError("page is not a JSON object")
            return page
        except ValueError as exc:
            failures += 1
            if failures > max_retries:
                raise AcquisitionError(f"unreadable page after {max_retries} retries", written) from exc
            budget.pause(backoff * 2 ** (failures - 1))


def acquire_users(usernames: Sequence[str], start_time: datetime, end_time: datetime,
                  endpoint: str, budget: RateBudget, sink, lang: Optional[str] = None,
                  **kw) -> AcquireStats:
    """Timelines for many users, 40 per query, sharing one budget."""
    stats = kw.pop("stats", None) or AcquireStats()
    seen = kw.pop("seen", None) or set()
    for group in batches(list(usernames)):
        q = SearchQuery(start_time, end_time, lang=lang, from_users=tuple(group))
        acquire(q, endpoint, budget, sink, seen=seen, stats=stats, **kw)
    return stats
