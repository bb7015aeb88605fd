"""Golden-fixture conformance checking for scoring servers.

Replays a fixture set of request/response pairs against a live server and
verifies the protocol invariants: health shape, score shapes and ranges,
exact score values, and determinism across repeated identical batches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import requests


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, passed, detail))

    def summary(self) -> str:
        lines = [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}"
            + (f": {c.detail}" if c.detail else "")
            for c in self.checks
        ]
        verdict = "all checks passed" if self.passed else "CONFORMANCE FAILURES"
        return "\n".join(lines + [verdict])


def default_fixtures() -> dict:
    data = resources.files("mcrise_server").joinpath("fixtures/golden_fixtures.json")
    return json.loads(data.read_text())


def fixture_backend(fixtures: dict | None = None):
    """Composite synthetic backend serving every fixture case by label."""
    from .backends import MultiSpecBackend

    if fixtures is None:
        fixtures = default_fixtures()
    spec_by_label = {}
    for case in fixtures["cases"]:
        for label in case["labels"]:
            spec_by_label[label] = case["spec"]
    return MultiSpecBackend(spec_by_label)


def conformance_check(url: str, fixtures: dict | None = None, repeats: int = 2,
                      timeout: float = 30.0) -> ConformanceReport:
    """Replay the fixture set against `url`; every case must reproduce its
    expected scores exactly and identically on every repeat."""
    if fixtures is None:
        fixtures = default_fixtures()
    report = ConformanceReport()
    session = requests.Session()

    try:
        health = session.get(f"{url}/v1/health", timeout=timeout).json()
        ok = health.get("status") == "ok" and isinstance(health.get("labels"), list)
        report.add("health", ok, json.dumps(health)[:120])
    except requests.RequestException as exc:
        report.add("health", False, str(exc))
        return report

    for case in fixtures["cases"]:
        name = case["name"]
        body = {
            "id": f"conformance-{name}",
            "height": case["height"],
            "width": case["width"],
            "images": case["images"],
            "labels": case["labels"],
        }
        expected = case["scores"]
        observed = []
        try:
            for _ in range(repeats):
                reply = session.post(f"{url}/v1/score", json=body, timeout=timeout)
                if reply.status_code != 200:
                    report.add(name, False, f"HTTP {reply.status_code}: {reply.text[:120]}")
                    break
                payload = reply.json()
                if payload.get("id") != body["id"]:
                    report.add(name, False, f"id mismatch: {payload.get('id')!r}")
                    break
                observed.append(payload.get("scores"))
            else:
                report.add(*_judge(name, expected, observed))
        except requests.RequestException as exc:
            report.add(name, False, str(exc))
    return report


def _judge(name: str, expected, observed):
    first = observed[0]
    if any(later != first for later in observed[1:]):
        return name, False, "non-deterministic scores across repeats"
    if not isinstance(first, list) or len(first) != len(expected):
        return name, False, f"score shape {_shape(first)} != {_shape(expected)}"
    for row in first:
        if not isinstance(row, list) or len(row) != len(expected[0]):
            return name, False, f"score shape {_shape(first)} != {_shape(expected)}"
        if any(not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0 for v in row):
            return name, False, f"scores outside [0, 1]: {row}"
    if first != expected:
        return name, False, f"scores {first} != expected {expected}"
    return name, True, f"{len(first)}x{len(first[0])} scores exact over {len(observed)} calls"


def _shape(rows):
    try:
        return f"{len(rows)}x{len(rows[0])}"
    except (TypeError, IndexError):
        return "malformed"
