"""Synthetic corpora with known nationality and tunable homophily.

Each user is national or not. For every interaction kind a user draws two
overdispersed counts (gamma-mixed Poisson, i.e. negative binomial): one
aimed at other users of the same group inside the corpus, one aimed at
accounts outside it. Homophily is the gap between those rates across the
two groups. Everything the generator emits is recorded in ``ledger`` so the
computed features can be checked against it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .features import ACTIONS, DIRECTIONAL_COLUMNS
from .ingest import TweetRecord, UserRecord, write_archive, write_users

_KIND = {"rt": "retweeted", "rp": "replied_to", "rq": "quoted"}
_CITIES = ["Panamá", "Ciudad de Panamá", "San Miguelito", "Colón", "David, Chiriquí", "La Chorrera"]
_ELSEWHERE = ["Caracas", "Bogotá, Colombia", "Madrid", "Miami, FL", "San José, Costa Rica", "Lima"]


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 1000
    national_fraction: float = 0.77
    tweets_mean: float = 6.0
    tweets_dispersion: float = 1.5
    activity_dispersion: float = 2.0
    # mean interactions per user: <group>_<in|out>_<action>
    nat_in_mentions: float = 3.0
    nat_out_mentions: float = 3.0
    nat_in_rt: float = 3.0
    nat_out_rt: float = 3.0
    nat_in_rp: float = 1.0
    nat_out_rp: float = 1.0
    nat_in_rq: float = 1.0
    nat_out_rq: float = 1.0
    oth_in_mentions: float = 3.0
    oth_out_mentions: float = 3.0
    oth_in_rt: float = 3.0
    oth_out_rt: float = 3.0
    oth_in_rp: float = 1.0
    oth_out_rp: float = 1.0
    oth_in_rq: float = 1.0
    oth_out_rq: float = 1.0
    followers_alpha: float = 1.2
    followers_scale: float = 150.0
    external_accounts: int = 2000
    location_rate: float = 0.35
    seed: int = 123

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if not 0.0 <= self.national_fraction <= 1.0:
            raise ValueError("national_fraction must be in [0, 1]")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and v < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.tweets_dispersion <= 0 or self.activity_dispersion <= 0:
            raise ValueError("dispersions must be positive")
        if self.external_accounts < 1:
            raise ValueError("external_accounts must be >= 1")

    def rate(self, national: bool, side: str, action: str) -> float:
        return getattr(self, f"{'nat' if national else 'oth'}_{side}_{action}")


def strong_homophily(n_users=5000, national_fraction=0.77, seed=123, **kw) -> SynthConfig:
    """Nationals talk mostly among themselves, others mostly outward."""
    rates = {}
    for a, hi, lo in (("mentions", 4.0, 0.4), ("rt", 5.0, 0.4), ("rp", 2.0, 0.2), ("rq", 2.0, 0.2)):
        rates.update({f"nat_in_{a}": hi, f"nat_out_{a}": lo, f"oth_in_{a}": lo, f"oth_out_{a}": hi})
    rates.update(kw)
    return SynthConfig(n_users=n_users, national_fraction=national_fraction, seed=seed, **rates)


def no_homophily(n_users=5000, national_fraction=0.77, seed=123, **kw) -> SynthConfig:
    """Both groups share the same rates, so interactions carry no signal."""
    return SynthConfig(n_users=n_users, national_fraction=national_fraction, seed=seed, **kw)


def read_config(path) -> SynthConfig:
    """key=value lines; '#' starts a comment."""
    types = {f.name: f.type for f in fields(SynthConfig)}
    kw = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in types:
            raise ValueError(f"{path}:{ln}: unknown key {k!r}")
        kw[k] = int(v) if types[k] in ("int", int) else float(v)
    return SynthConfig(**kw)


@dataclass
class SynthCorpus:
    tweets: list
    users: list
    referenced: list
    truth: dict
    ledger: dict = field(default_factory=dict)


def _nb(rng, mean, k, size=None):
    """Negative binomial with the given mean and shape ``k``."""
    if mean <= 0:
        return np.zeros(size, dtype=np.int64) if size is not None else 0
    return rng.poisson(rng.gamma(k, mean / k, size=size))


def generate_corpus(config: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(config.seed)
    n = config.n_users
    ids = np.sort(rng.choice(np.arange(10_000_000, 10_000_000 + 50 * n), size=n, replace=False))
    ids = [int(i) for i in ids]
    national = rng.random(n) < config.national_fraction
    truth = {uid: int(nat) for uid, nat in zip(ids, national)}
    pos = {uid: i for i, uid in enumerate(ids)}
    externals = [900_000_000 + k for k in range(config.external_accounts)]
    groups = {True: [i for i in range(n) if national[i]], False: [i for i in range(n) if not national[i]]}
    t0 = datetime(2021, 3, 1, tzinfo=timezone.utc)
    span = 60 * 24 * 30

    next_id = [1_000_000_000_000]

    def new_id():
        next_id[0] += 1
        return next_id[0]

    def stamp():
        return t0 + timedelta(minutes=int(rng.integers(0, span)), milliseconds=int(rng.integers(0, 1000)))

    first_tweet = [new_id() for _ in range(n)]
    ledger = {uid: dict.fromkeys(DIRECTIONAL_COLUMNS, 0) for uid in ids}
    plans = []  # (actor index, action, target id, target is corpus member)
    lone = n == 1  # a single user has no network to interact with
    for i in range(n):
        if lone:
            break
        nat = bool(national[i])
        g = rng.gamma(config.activity_dispersion, 1.0 / config.activity_dispersion)
        peers = groups[nat]
        for a in ACTIONS:
            n_in = rng.poisson(config.rate(nat, "in", a) * g) if len(peers) > 1 else 0
            n_out = rng.poisson(config.rate(nat, "out", a) * g)
            for _ in range(n_in):
                j = i
                while j == i:
                    j = peers[int(rng.integers(0, len(peers)))]
                plans.append((i, a, ids[j], True))
            for _ in range(n_out):
                plans.append((i, a, externals[int(rng.integers(0, len(externals)))], False))

    tweets_of = {i: [(first_tweet[i], None)] for i in range(n)}
    for i in range(n):
        for _ in range(int(_nb(rng, config.tweets_mean, config.tweets_dispersion))):
            tweets_of[i].append((new_id(), None))
    referenced = {}
    mentions_for = {}
    for i, a, target, inside in plans:
        uid = ids[i]
        side = "a_In" if inside else "a_Out"
        ledger[uid][f"{a}_{side}"] += 1
        if inside:
            ledger[target][f"{a}_de_In"] += 1
        if a == "mentions":
            continue
        tid = new_id()
        if inside:
            ref = first_tweet[pos[target]]
            ref_author = None
        else:
            ref = 5_000_000_000_000 + target * 16 + int(rng.integers(0, 16))
            ref_author = target if a != "rq" else None
            if a == "rq":
                referenced.setdefault(ref, target)
        tweets_of[i].append((tid, (a, ref, ref_author, target)))
    for i, a, target, inside in plans:
        if a != "mentions":
            continue
        own = tweets_of[i]
        tid = own[int(rng.integers(0, len(own)))][0]
        mentions_for.setdefault(tid, []).append(target)

    tweets = []
    for i in range(n):
        uid = ids[i]
        for tid, ref in tweets_of[i]:
            base = dict(tweet_id=tid, author_id=uid, created_at=stamp(), lang="es",
                        source=str(rng.choice(["Twitter for Android", "Twitter for iPhone", "Twitter Web App"],
                                              p=[0.55, 0.3, 0.15])),
                        text=f"synthetic tweet {tid}", mentions=tuple(mentions_for.get(tid, ())),
                        retweet_count=int(_nb(rng, 2.0, 0.5)), reply_count=int(_nb(rng, 0.5, 0.5)),
                        like_count=int(_nb(rng, 6.0, 0.5)), quote_count=int(_nb(rng, 0.2, 0.5)))
            if ref is None:
                tweets.append(TweetRecord(**base))
                continue
            a, ref_id, ref_author, target = ref
            tweets.append(TweetRecord(ref_type=_KIND[a], ref_tweet_id=ref_id, ref_author_id=ref_author,
                                      in_reply_to_user_id=target if a == "rp" else None, **base))
    tweets.sort(key=lambda t: t.sort_key)

    users = []
    for i, uid in enumerate(ids):
        nat = bool(national[i])
        shows = rng.random() < config.location_rate
        loc = str(rng.choice(_CITIES if nat else _ELSEWHERE)) if shows else ""
        users.append(UserRecord(
            author_id=uid, username=f"synth_{uid}", created_at=t0 - timedelta(days=int(rng.integers(30, 4000))),
            verified=False,
            followers=int(config.followers_scale * (rng.pareto(config.followers_alpha) + 0.05)),
            following=int(_nb(rng, 400, 1.0)), tweet_count=int(_nb(rng, 3000, 0.7)),
            listed_count=int(_nb(rng, 3, 0.5)), location=loc,
            description=("🇵🇦 " if nat and rng.random() < 0.2 else "") + "synthetic profile"))

    ref_rows = [TweetRecord(tweet_id=rid, author_id=aid, created_at=t0, text="external")
                for rid, aid in sorted(referenced.items())]
    return SynthCorpus(tweets, users, ref_rows, truth, ledger)


def write_corpus(corpus: SynthCorpus, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"tweets": out / "tweets.csv", "users": out / "users.csv",
             "referenced": out / "referenced.csv", "truth": out / "truth.csv"}
    write_archive(corpus.tweets, paths["tweets"])
    write_users(corpus.users, paths["users"])
    write_archive(corpus.referenced, paths["referenced"])
    write_truth(corpus.truth, paths["truth"])
    return paths


def write_truth(truth: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["author_id", "label"])
        for uid in sorted(truth):
            w.writerow([uid, truth[uid]])


def read_truth(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(r["author_id"]): int(r["label"]) for r in csv.DictReader(fh)}
