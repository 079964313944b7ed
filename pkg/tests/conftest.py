from __future__ import annotations

import copy
import sys
import shutil
from pathlib import Path

import pytest
import yaml

from posenergy.catalog import bundled_dataset_path, load_dataset


@pytest.fixture(scope="session")
def bundled():
    return load_dataset()


@pytest.fixture(scope="session")
def bundled_raw() -> dict:
    return yaml.safe_load(bundled_dataset_path().read_text(encoding="utf-8"))


@pytest.fixture
def make_dataset(tmp_path, bundled_raw):
    """Write a (possibly corrupted) copy of the bundled dataset and return its path."""

    def _make(mutate=None, name: str = "dataset.yaml") -> Path:
        raw = copy.deepcopy(bundled_raw)
        if mutate is not None:
            mutate(raw)
        series_src = bundled_dataset_path().parent / "series"
        if not (tmp_path / "series").exists():
            shutil.copytree(series_src, tmp_path / "series")
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
        return path

    return _make


def by_id(section: list[dict], key: str) -> dict:
    return next(item for item in section if item["id"] == key)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
