"""Fetching validator counts and throughput from public explorers.

Extraction is declarative: each :class:`SourceDescriptor` carries either a
JSON-pointer path or a regular expression with one capture group. Tests and
the default CLI path replay recorded bodies from a fixture store; live HTTP
is opt-in.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlsplit

from . import __version__
from .catalog import Dataset, ExtractionRule, SourceDescriptor, check_dataset
from .errors import (
    ExtractionError,
    ExtractionValueError,
    ManualSourceError,
    TransportError,
    UnknownNetworkError,
)
from .model import tx_per_day_to_tps

__all__ = [
    "FetchResult",
    "FixtureStore",
    "HttpTransport",
    "ReplayTransport",
    "SourceDescriptor",
    "extract",
    "fetch",
    "fetch_all",
    "snapshot",
]

log = logging.getLogger(__name__)

USER_AGENT = f"posenergy/{__version__} (+energy footprint research tool)"
FIXTURE_DIR_ENV = "POSENERGY_FIXTURE_DIR"
DEFAULT_MAX_WORKERS = 4

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class Transport(Protocol):
    def get(self, url: str) -> bytes: ...


@dataclass(frozen=True)
class FetchResult:
    source_id: str
    observed_at: datetime
    value: float
    raw_hash: str


# --------------------------------------------------------------------------
# transports


class HttpTransport:
    """urllib-based GET with a timeout, one retry and per-host politeness.

    Requests to the same host are serialised and spaced at least
    ``min_interval`` seconds apart; distinct hosts may run concurrently.
    """

    def __init__(self, timeout: float = 20.0, min_interval: float = 1.0, retries: int = 1,
                 sleep: Callable[[float], None] = time.sleep, opener=None):
        self.timeout = timeout
        self.min_interval = min_interval
        self.retries = retries
        self._sleep = sleep
        self._open = opener or urllib.request.urlopen
        self._locks: dict[str, threading.Lock] = {}
        self._last: dict[str, float] = {}
        self._guard = threading.Lock()

    def _host_lock(self, host: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(host, threading.Lock())

    def get(self, url: str) -> bytes:
        host = urlsplit(url).netloc
        with self._host_lock(host):
            last_exc: Exception | None = None
            for attempt in range(self.retries + 1):
                wait = self._last.get(host, -math.inf) + self.min_interval - time.monotonic()
                if wait > 0:
                    self._sleep(wait)
                req = urllib.request.Request(url, headers={"User-Agent": USER_AGENT})
                try:
                    with self._open(req, timeout=self.timeout) as resp:
                        return resp.read()
                except (urllib.error.URLError, OSError) as exc:
                    last_exc = exc
                    log.warning("GET %s failed (attempt %d): %s", url, attempt + 1, exc)
                finally:
                    self._last[host] = time.monotonic()
            raise TransportError(f"GET {url} failed: {last_exc}") from last_exc


class FixtureStore:
    """Directory of ``<source_id>.body`` files with ``<source_id>.sha256`` digests."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    @classmethod
    def default(cls) -> "FixtureStore":
        override = os.environ.get(FIXTURE_DIR_ENV)
        if override:
            return cls(override)
        return cls(Path(str(resources.files("posenergy") / "data" / "fixtures")))

    def __contains__(self, source_id: str) -> bool:
        return (self.directory / f"{source_id}.body").is_file()

    def read(self, source_id: str) -> bytes:
        body_path = self.directory / f"{source_id}.body"
        try:
            body = body_path.read_bytes()
        except OSError as exc:
            raise TransportError(f"no fixture for source {source_id!r} in {self.directory}") from exc
        digest_path = self.directory / f"{source_id}.sha256"
        if digest_path.is_file():
            expected = digest_path.read_text(encoding="ascii").strip()
            actual = hashlib.sha256(body).hexdigest()
            if expected != actual:
                raise TransportError(f"fixture {body_path} digest mismatch: {actual} != {expected}")
        return body

    def record(self, source_id: str, body: bytes) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        body_path = self.directory / f"{source_id}.body"
        body_path.write_bytes(body)
        (self.directory / f"{source_id}.sha256").write_text(hashlib.sha256(body).hexdigest() + "\n", encoding="ascii")
        return body_path


class ReplayTransport:
    """Serves recorded bodies by URL; never touches the network."""

    def __init__(self, store: FixtureStore, descriptors: Iterable[SourceDescriptor]):
        self.store = store
        self._by_url = {d.url: d.id for d in descriptors}

    def get(self, url: str) -> bytes:
        source_id = self._by_url.get(url)
        if source_id is None or source_id not in self.store:
            raise TransportError(f"offline: no recorded response for {url}")
        return self.store.read(source_id)


# --------------------------------------------------------------------------
# extraction


def _json_pointer(doc, pointer: str):
    if pointer == "":
        return doc
    if not pointer.startswith("/"):
        raise ExtractionError(f"JSON pointer must start with '/': {pointer!r}")
    for token in pointer[1:].split("/"):
        token = token.replace("~1", "/").replace("~0", "~")
        if isinstance(doc, list):
            if not token.isdigit() or int(token) >= len(doc):
                raise ExtractionError(f"JSON pointer {pointer!r}: no index {token!r}")
            doc = doc[int(token)]
        elif isinstance(doc, dict):
            if token not in doc:
                raise ExtractionError(f"JSON pointer {pointer!r}: no key {token!r}")
            doc = doc[token]
        else:
            raise ExtractionError(f"JSON pointer {pointer!r}: cannot descend into {type(doc).__name__}")
    return doc


def _to_number(raw) -> float:
    if isinstance(raw, bool):
        raise ExtractionValueError(f"expected a number, got boolean {raw!r}")
    if isinstance(raw, (int, float)):
        value = float(raw)
    elif isinstance(raw, str):
        cleaned = raw.strip().replace(",", "").replace("_", "").replace(" ", "").replace(" ", "")
        try:
            value = float(cleaned)
        except ValueError:
            raise ExtractionValueError(f"captured text {raw!r} is not numeric") from None
    else:
        raise ExtractionValueError(f"expected a number, got {type(raw).__name__}")
    if not math.isfinite(value) or value < 0:
        raise ExtractionValueError(f"extracted value {value!r} must be finite and >= 0")
    return value


def extract(rule: ExtractionRule, body: bytes) -> float:
    """Apply an extraction rule to a raw response body."""
    text = body.decode("utf-8", errors="replace")
    if rule.kind == "json_pointer":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ExtractionError(f"body is not JSON: {exc}") from exc
        return _to_number(_json_pointer(doc, rule.expr))
    if rule.kind == "regex":
        pattern = re.compile(rule.expr, re.MULTILINE)
        if pattern.groups != 1:
            raise ExtractionError(f"regex needs exactly one capture group, has {pattern.groups}: {rule.expr!r}")
        m = pattern.search(text)
        if m is None:
            raise ExtractionError(f"pattern {rule.expr!r} matched nothing")
        return _to_number(m.group(1))
    raise ExtractionError(f"unknown extraction kind {rule.kind!r}")


def fetch(desc: SourceDescriptor, transport: Transport, clock: Clock = utc_now) -> FetchResult:
    """Retrieve one source, extract its value and apply ``post_scale``."""
    if desc.manual:
        raise ManualSourceError(f"source {desc.id!r} is manual; values must be curated by hand")
    body = transport.get(desc.url)
    value = extract(desc.extraction, body)
    if desc.post_scale is not None:
        value = float(value * desc.post_scale)
    return FetchResult(desc.id, clock(), value, hashlib.sha256(body).hexdigest())


@dataclass(frozen=True)
class FetchOutcome:
    source: SourceDescriptor
    result: FetchResult | None = None
    error: Exception | None = None

    @property
    def status(self) -> str:
        if self.result is not None:
            return "ok"
        if isinstance(self.error, ManualSourceError):
            return "skipped"
        return "failed"


def fetch_all(
    descriptors: Sequence[SourceDescriptor],
    transport: Transport,
    clock: Clock = utc_now,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> list[FetchOutcome]:
    """Fetch many sources with bounded parallelism; outcomes keep input order.

    Per-host serialisation is the transport's job (see :class:`HttpTransport`).
    """

    def one(desc: SourceDescriptor) -> FetchOutcome:
        try:
            return FetchOutcome(desc, result=fetch(desc, transport, clock))
        except (ManualSourceError, TransportError, ExtractionError) as exc:
            return FetchOutcome(desc, error=exc)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        return list(pool.map(one, descriptors))


# --------------------------------------------------------------------------
# snapshot assembly


def snapshot(results: Iterable[FetchResult], dataset: Dataset, snapshot_date: date | None = None) -> Dataset:
    """New dataset with fetched values applied; ``dataset`` itself is untouched."""
    updates: dict[str, dict] = {}
    for res in results:
        desc = dataset.sources.get(res.source_id)
        if desc is None:
            raise UnknownNetworkError(f"result from unknown source {res.source_id!r}")
        if desc.network_id not in dataset.networks:
            raise UnknownNetworkError(f"source {desc.id!r} maps to unknown network {desc.network_id!r}")
        fields = updates.setdefault(desc.network_id, {})
        if desc.metric == "validator_count":
            fields["n_val"] = int(round(res.value))
        elif desc.metric == "tx_per_day":
            fields["tps_contemporary"] = tx_per_day_to_tps(res.value).tps
        else:
            # tps, or tx_per_epoch already divided by the epoch length via post_scale
            fields["tps_contemporary"] = res.value

    networks = {
        key: replace(net, **updates[key]) if key in updates else net for key, net in dataset.networks.items()
    }
    new = dataset.with_updates(
        networks=networks,
        snapshot_date=snapshot_date if snapshot_date is not None else utc_now().date(),
    )
    return check_dataset(new)
