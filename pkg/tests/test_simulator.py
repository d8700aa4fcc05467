import json
import threading
from importlib import resources

import pytest

from telemon.simulator import (
    CohortSpec,
    InvalidSpec,
    SimPatient,
    SimulationReport,
    generate_cohort,
    report_out,
    run,
    run_in_process,
)

import reference

with (resources.files("telemon") / "config" / "ruleset-default-v1.json").open() as fh:
    RULESET_JSON = json.load(fh)


def spec(**overrides):
    base = dict(n_patients=30, days=3, seed=7)
    base.update(overrides)
    return CohortSpec(**base)


class TestSpec:
    def test_probabilities_must_fit(self):
        with pytest.raises(InvalidSpec):
            spec(p_stable=0.8, p_deteriorating=0.5).validate()

    def test_delay_inside_overdue_window(self):
        with pytest.raises(InvalidSpec):
            spec(response_delay_max=8 * 60).validate()

    def test_defaults_valid(self):
        spec().validate()


class TestCohort:
    def test_seed_determinism(self):
        a = generate_cohort(spec(seed=11))
        b = generate_cohort(spec(seed=11))
        assert [(p.archetype, p.rng_seed, p.jump_report) for p in a] == [
            (p.archetype, p.rng_seed, p.jump_report) for p in b
        ]

    def test_seed_sensitivity(self):
        a = generate_cohort(spec(n_patients=200, seed=1))
        b = generate_cohort(spec(n_patients=200, seed=2))
        assert [p.rng_seed for p in a] != [p.rng_seed for p in b]

    def test_pure_mix(self):
        cohort = generate_cohort(
            spec(p_stable=0.0, p_deteriorating=1.0,
                 p_quarantine_issue=0.0, p_nonresponder=0.0)
        )
        assert {p.archetype for p in cohort} == {"deteriorating"}

    def test_archetype_shares_roughly_respected(self):
        cohort = generate_cohort(spec(n_patients=5000, seed=3))
        share = sum(p.archetype == "stable" for p in cohort) / len(cohort)
        assert 0.25 < share < 0.35


class TestScriptedAnswersAgainstOracle:
    """The per-archetype scripts must produce the intended category arcs
    under the reference interpreter, independent of the service."""

    def _categories(self, patient, n_reports):
        previous = None
        out = []
        for k in range(n_reports):
            answers = patient.answers_for(k)
            out.append(reference.ref_classify(RULESET_JSON, answers, previous))
            previous = answers
        return out

    def _patient(self, archetype, jump_report=3, big_jump=False):
        return SimPatient(index=0, archetype=archetype, rng_seed=1,
                          jump_report=jump_report, big_jump=big_jump)

    def test_asymptomatic_stays_green(self):
        assert set(self._categories(self._patient("asymptomatic"), 10)) == {"Green"}

    def test_stable_stays_yellow(self):
        assert set(self._categories(self._patient("stable"), 10)) == {"Yellow"}

    def test_deteriorating_reaches_red(self):
        arcs = self._categories(self._patient("deteriorating", big_jump=True), 12)
        assert "Red" in arcs

    def test_small_jump_reaches_at_least_orange(self):
        arcs = self._categories(self._patient("deteriorating", big_jump=False), 12)
        assert "Orange" in arcs or "Red" in arcs

    def test_quarantine_issue_flags_orange_then_red(self):
        arcs = self._categories(self._patient("quarantine_issue", jump_report=2), 6)
        # distress sits at 3, so the patient is Yellow until the flip
        assert arcs[:2] == ["Yellow", "Yellow"]
        assert arcs[2] == "Orange"  # newly reported problem
        assert arcs[3] == "Red"  # persists unresolved


class TestRuns:
    def test_deterministic_report(self):
        a = run_in_process(spec())
        b = run_in_process(spec())
        assert a.canonical_json() == b.canonical_json()

    def test_all_deteriorating_yields_red_reports(self):
        report = run_in_process(
            spec(n_patients=10, days=4,
                 p_stable=0.0, p_deteriorating=1.0,
                 p_quarantine_issue=0.0, p_nonresponder=0.0)
        )
        assert report.histogram["Red"] > 0
        assert report.actions_by_trigger.get("RedFlag", 0) > 0

    def test_all_asymptomatic_yields_only_green(self):
        report = run_in_process(
            spec(n_patients=10, days=3,
                 p_stable=0.0, p_deteriorating=0.0,
                 p_quarantine_issue=0.0, p_nonresponder=0.0)
        )
        assert report.histogram["Yellow"] == 0
        assert report.histogram["Orange"] == 0
        assert report.histogram["Red"] == 0
        assert report.histogram["Green"] == report.total_reports > 0
        assert report.total_actions == 0
        assert report.automation_ratio == 1.0

    def test_nonresponders_trigger_overdue(self):
        report = run_in_process(
            spec(n_patients=20, days=3, seed=5,
                 p_stable=0.0, p_deteriorating=0.0,
                 p_quarantine_issue=0.0, p_nonresponder=1.0)
        )
        assert report.overdue_detections > 0
        assert report.actions_by_trigger.get("NonResponder", 0) == report.overdue_detections

    def test_default_mix_covers_every_category(self):
        report = run_in_process(spec(n_patients=120, days=4, seed=13))
        assert all(report.histogram[c] > 0 for c in ("Green", "Yellow", "Orange", "Red"))

    def test_conservation_identities(self):
        report = run_in_process(spec(n_patients=60, days=3, seed=21))
        h = report.histogram
        assert report.automatic_messages == h["Green"] + h["Yellow"]
        assert report.total_actions == (
            h["Orange"] + h["Red"] + report.overdue_detections
        )
        assert report.gp_summaries == report.total_reports
        assert report.enrolled == 60


class TestReportSerialization:
    def test_json_round_trip(self):
        report = run_in_process(spec(n_patients=5, days=2))
        text = report_out(report, "json")
        again = SimulationReport.from_dict(json.loads(text))
        assert again.canonical_json() == report.canonical_json()

    def test_csv_totals(self):
        report = run_in_process(spec(n_patients=5, days=2))
        lines = report_out(report, "csv").strip().splitlines()
        assert lines[0] == "category,reports"
        total = int(lines[-1].split(",")[1])
        assert total == sum(report.histogram.values()) == report.total_reports

    def test_text_table(self):
        report = run_in_process(spec(n_patients=5, days=2))
        text = report_out(report, "text")
        assert "automation ratio" in text

    def test_unknown_format(self):
        report = run_in_process(spec(n_patients=2, days=1))
        with pytest.raises(ValueError):
            report_out(report, "yaml")


class TestHttpDriver:
    def test_matches_in_process_run(self, tmp_path):
        import uvicorn

        from telemon.api import create_app
        from telemon.config import load_config
        from telemon.eventstore import MemoryEventLog
        from telemon.notifier import FileGateway
        from telemon.service import CommandCentre
        from telemon.simulator import HttpDriver

        gateway_file = tmp_path / "gateway.jsonl"
        gateway_file.touch()
        centre = CommandCentre(
            load_config(), log=MemoryEventLog(), gateway=FileGateway(gateway_file)
        )
        server = uvicorn.Server(
            uvicorn.Config(create_app(centre), host="127.0.0.1", port=8765,
                           log_level="warning")
        )
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        import time

        deadline = time.monotonic() + 10
        while not server.started:
            if time.monotonic() > deadline:
                pytest.fail("server did not start")
            time.sleep(0.05)
        try:
            http_spec = spec(n_patients=8, days=2, seed=17)
            driver = HttpDriver("http://127.0.0.1:8765", gateway_file)
            try:
                over_http = run(http_spec, driver)
            finally:
                driver.close()
            local = run_in_process(http_spec)
            assert over_http.canonical_json() == local.canonical_json()
        finally:
            server.should_exit = True
            thread.join(timeout=10)
