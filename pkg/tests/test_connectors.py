import hashlib
import io
import json
import threading
import time
import urllib.error
from datetime import date, datetime, timezone
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from posenergy.catalog import ExtractionRule, SourceDescriptor
from posenergy.connectors import (
    USER_AGENT,
    FetchResult,
    FixtureStore,
    HttpTransport,
    ReplayTransport,
    extract,
    fetch,
    fetch_all,
    snapshot,
)
from posenergy.errors import (
    ExtractionError,
    ExtractionValueError,
    InvariantError,
    ManualSourceError,
    TransportError,
    UnknownNetworkError,
)

T0 = datetime(2021, 8, 13, 12, 0, tzinfo=timezone.utc)


def clock():
    return T0


class DictTransport:
    def __init__(self, bodies):
        self.bodies = bodies
        self.calls = []

    def get(self, url):
        self.calls.append(url)
        if url not in self.bodies:
            raise TransportError(f"no route to {url}")
        return self.bodies[url]


def source(expr, kind="json_pointer", metric="validator_count", **kw):
    return SourceDescriptor("s", "tezos", "https://example.test/x", metric, ExtractionRule(kind, expr), **kw)


# --- extraction ------------------------------------------------------------


def test_json_pointer_extraction():
    body = b'{"a": {"b/c": [1, {"n": 42}]}, "t~": 7}'
    assert extract(ExtractionRule("json_pointer", "/a/b~1c/1/n"), body) == 42.0
    assert extract(ExtractionRule("json_pointer", "/t~0"), body) == 7.0
    with pytest.raises(ExtractionError):
        extract(ExtractionRule("json_pointer", "/a/missing"), body)
    with pytest.raises(ExtractionError):
        extract(ExtractionRule("json_pointer", "/a"), b"not json")


def test_regex_extraction_strips_grouping():
    rule = ExtractionRule("regex", r"count:\s*([\d,]+)")
    assert extract(rule, b"<p>count: 1,234,567</p>") == 1234567.0
    with pytest.raises(ExtractionError, match="matched nothing"):
        extract(rule, b"<p>nothing here</p>")
    with pytest.raises(ExtractionError, match="exactly one capture group"):
        extract(ExtractionRule("regex", r"(a)(b)"), b"ab")


def test_non_numeric_capture_is_a_value_error():
    with pytest.raises(ExtractionValueError):
        extract(ExtractionRule("regex", r"v=(\w+)"), b"v=abc")
    with pytest.raises(ValueError):
        extract(ExtractionRule("json_pointer", "/v"), b'{"v": true}')
    with pytest.raises(ExtractionValueError):
        extract(ExtractionRule("json_pointer", "/v"), b'{"v": -3}')


@given(st.integers(0, 10**12))
def test_regex_and_pointer_agree(n):
    grouped = f"{n:,}".encode()
    assert extract(ExtractionRule("regex", r"<b>([\d,]+)</b>"), b"<b>" + grouped + b"</b>") == float(n)
    assert extract(ExtractionRule("json_pointer", "/n"), json.dumps({"n": n}).encode()) == float(n)


# --- fetch -----------------------------------------------------------------


def test_fetch_applies_post_scale_exactly():
    desc = source(r"tx=([\d,]+)", kind="regex", metric="tx_per_epoch", post_scale=Fraction(1, 432000))
    body = b"tx=226,000"
    res = fetch(desc, DictTransport({desc.url: body}), clock)
    assert res.value == 226000 / 432000
    assert res.observed_at == T0
    assert res.raw_hash == hashlib.sha256(body).hexdigest()


def test_fetch_refuses_manual_sources():
    desc = SourceDescriptor("m", "tezos", "https://example.test/m", "tps", None)
    transport = DictTransport({})
    with pytest.raises(ManualSourceError):
        fetch(desc, transport, clock)
    assert transport.calls == []


def test_fetch_propagates_transport_errors():
    with pytest.raises(TransportError):
        fetch(source("/n"), DictTransport({}), clock)


def test_fetch_all_keeps_order_and_classifies(bundled):
    store = FixtureStore.default()
    descs = list(bundled.sources.values())
    outcomes = fetch_all(descs, ReplayTransport(store, descs), clock)
    assert [o.source.id for o in outcomes] == [d.id for d in descs]
    status = {o.source.id: o.status for o in outcomes}
    assert status["algorand_nodes"] == "skipped"
    assert status["eth2_validators"] == "ok"
    values = {o.source.id: o.result.value for o in outcomes if o.result}
    assert values == {
        "eth2_validators": 189226.0,
        "cardano_pools": 2590.0,
        "cardano_tx_epoch": 0.5231481481481481,
        "polkadot_validators": 297.0,
        "tezos_bakers": 399.0,
    }


def test_fetch_all_reports_failures_without_raising():
    good = source("/n")
    bad = SourceDescriptor("b", "tezos", "https://example.test/missing", "tps", ExtractionRule("json_pointer", "/n"))
    outcomes = fetch_all([good, bad], DictTransport({good.url: b'{"n": 5}'}), clock)
    assert [o.status for o in outcomes] == ["ok", "failed"]
    assert isinstance(outcomes[1].error, TransportError)


# --- fixtures --------------------------------------------------------------


def test_fixture_store_round_trip(tmp_path):
    store = FixtureStore(tmp_path)
    store.record("x", b"payload")
    assert "x" in store and "y" not in store
    assert store.read("x") == b"payload"
    (tmp_path / "x.body").write_bytes(b"tampered")
    with pytest.raises(TransportError, match="digest mismatch"):
        store.read("x")
    with pytest.raises(TransportError):
        store.read("y")


def test_bundled_fixtures_have_valid_digests(bundled):
    store = FixtureStore.default()
    for desc in bundled.sources.values():
        if not desc.manual:
            assert desc.id in store
            store.read(desc.id)


def test_fixture_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("POSENERGY_FIXTURE_DIR", str(tmp_path))
    assert FixtureStore.default().directory == tmp_path


def test_replay_is_deterministic_and_offline(bundled):
    descs = list(bundled.sources.values())
    a = fetch_all(descs, ReplayTransport(FixtureStore.default(), descs), clock)
    b = fetch_all(descs, ReplayTransport(FixtureStore.default(), descs), clock)
    assert [o.result for o in a] == [o.result for o in b]
    with pytest.raises(TransportError, match="offline"):
        ReplayTransport(FixtureStore.default(), descs).get("https://example.test/unknown")


# --- HTTP transport --------------------------------------------------------


class FakeResponse(io.BytesIO):
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


class FakeOpener:
    def __init__(self, failures=0, body=b"ok"):
        self.failures = failures
        self.body = body
        self.requests = []

    def __call__(self, req, timeout):
        self.requests.append((req, timeout, time.monotonic()))
        if self.failures:
            self.failures -= 1
            raise urllib.error.URLError("boom")
        return FakeResponse(self.body)


def test_http_sends_user_agent_and_timeout():
    opener = FakeOpener()
    t = HttpTransport(timeout=7.5, min_interval=0, opener=opener)
    assert t.get("https://a.test/x") == b"ok"
    req, timeout, _ = opener.requests[0]
    assert req.get_header("User-agent") == USER_AGENT
    assert timeout == 7.5


def test_http_retries_once_then_gives_up():
    opener = FakeOpener(failures=1)
    assert HttpTransport(min_interval=0, opener=opener).get("https://a.test/") == b"ok"
    assert len(opener.requests) == 2

    opener = FakeOpener(failures=5)
    with pytest.raises(TransportError):
        HttpTransport(min_interval=0, opener=opener).get("https://a.test/")
    assert len(opener.requests) == 2


def test_http_spaces_requests_per_host():
    sleeps = []
    opener = FakeOpener()
    t = HttpTransport(min_interval=1.0, opener=opener, sleep=sleeps.append)
    t.get("https://a.test/1")
    t.get("https://a.test/2")
    t.get("https://b.test/1")
    # only the second call to the same host waited
    assert len(sleeps) == 1 and 0.9 < sleeps[0] <= 1.0


def test_http_same_host_requests_are_serialised():
    active = []
    peak = []
    lock = threading.Lock()

    def opener(req, timeout):
        with lock:
            active.append(1)
            peak.append(len(active))
        time.sleep(0.01)
        with lock:
            active.pop()
        return FakeResponse(b"x")

    t = HttpTransport(min_interval=0, opener=opener)
    threads = [threading.Thread(target=t.get, args=(f"https://a.test/{i}",)) for i in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert max(peak) == 1


# --- snapshot --------------------------------------------------------------


def result(source_id, value):
    return FetchResult(source_id, T0, value, "0" * 64)


def test_snapshot_without_results_only_moves_the_date(bundled):
    new = snapshot([], bundled, date(2022, 1, 1))
    assert new.networks == bundled.networks
    assert new.snapshot_date == date(2022, 1, 1)


def test_snapshot_replaces_values_and_leaves_input_alone(bundled):
    before = bundled.networks["tezos"]
    new = snapshot([result("tezos_bakers", 412.4)], bundled, date(2022, 1, 1))
    assert new.networks["tezos"].n_val == 412
    assert bundled.networks["tezos"] is before and before.n_val == 399
    assert new.networks["algorand"] == bundled.networks["algorand"]


def test_snapshot_merges_two_results_for_one_network(bundled):
    new = snapshot([result("cardano_pools", 3000), result("cardano_tx_epoch", 2.5)], bundled, date(2022, 1, 1))
    assert new.networks["cardano"].n_val == 3000
    assert new.networks["cardano"].tps_contemporary == 2.5


def test_snapshot_converts_daily_counts():
    from posenergy.catalog import load_dataset

    d = load_dataset()
    daily = SourceDescriptor("tez_daily", "tezos", "https://x.test", "tx_per_day", ExtractionRule("json_pointer", "/n"))
    d = d.with_updates(sources={**d.sources, daily.id: daily})
    new = snapshot([result("tez_daily", 86400.0)], d, date(2022, 1, 1))
    assert new.networks["tezos"].tps_contemporary == 1.0


def test_snapshot_rejects_unknown_sources(bundled):
    with pytest.raises(UnknownNetworkError):
        snapshot([result("nope", 1.0)], bundled)
    with pytest.raises(KeyError):
        snapshot([result("nope", 1.0)], bundled)


def test_snapshot_revalidates(bundled):
    # tezos tps_max is 40
    with pytest.raises(InvariantError):
        snapshot([result("t", 41.0)], _with_tps_source(bundled), date(2022, 1, 1))


def _with_tps_source(d):
    extra = SourceDescriptor("t", "tezos", "https://t.test", "tps", ExtractionRule("json_pointer", "/n"))
    return d.with_updates(sources={**d.sources, extra.id: extra})
