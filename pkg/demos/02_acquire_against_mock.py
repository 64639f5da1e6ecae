"""Download a country's geotagged tweets from a local fake endpoint.

The fake server keeps the same request allowance as the real archive search
(300 requests per 15 minutes) and pages at most 500 tweets per response. Its
clock is simulated, so an hour of waiting takes no real time.

    python3 demos/02_acquire_against_mock.py
"""
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from natforest.acquire import AcquireStats, RateBudget, SearchQuery, acquire, acquire_users
from natforest.ingest import ArchiveWriter, parse_archive
from natforest.mockserver import FakeClock, MockArchive
from natforest.synth import SynthConfig, generate_corpus

synth = generate_corpus(SynthConfig(n_users=400, tweets_mean=20))
tweets = [replace(t, place_country="PA") for t in synth.tweets]
print(f"server holds {len({t.tweet_id for t in tweets})} tweets from {len(synth.users)} users")

clock = FakeClock()
out = Path(tempfile.mkdtemp(prefix="natforest-acq-")) / "geo.csv"
start, end = datetime(2021, 1, 1, tzinfo=timezone.utc), datetime(2021, 12, 31, tzinfo=timezone.utc)

with MockArchive(tweets, synth.users, clock=clock) as server:
    budget = RateBudget(clock=clock, sleep=clock.sleep)
    stats = AcquireStats()
    with ArchiveWriter(out) as sink:
        acquire(SearchQuery(start, end, country_code="PA", lang="es"), server.url, budget, sink, stats=stats)
    print(f"geo query: {stats.requests} requests, {stats.written} rows")

    # second pass: full timelines of the authors seen, 40 names per query
    names = sorted(u.username for u in stats.users.values())
    with ArchiveWriter(out.with_name("timelines.csv")) as sink:
        more = acquire_users(names, start, end, server.url, budget, sink)
    print(f"timelines: {len(names)} users in {more.requests} requests, {more.written} rows")
    print(f"simulated time spent: {clock() / 60:.1f} min, waited {budget.waited / 60:.1f} min")

rows, report = parse_archive(out)
print(report.summary())
