import pytest

from adversaries import ActionKind, AnswerRequest, WorldView, adversary_step, sybil_identity
from errors import InvalidConfig
from scenario import AdversaryConfig, AdversaryKind, ScenarioConfig, load_scenario, parse_scenario
from sim import (
    SCALAR_METRICS,
    EventKind,
    EventLog,
    Simulation,
    read_event_log,
    replicate,
    report_from_log,
    run,
    write_event_log,
    write_summary_csv,
)
from streams import agent_stream
from trustmodel import Calendar, Mode

BUNDLED = ["all_honest", "briber", "sybil_1", "sybil_100", "open_sybil", "freeloader_lazy"]


def open_scenario(audit_probability, constant=1000.0):
    data = {
        "name": "open_test",
        "duration_days": 240,
        "seed": 5,
        "mode": "open",
        "audit_probability_per_month": audit_probability,
        "sources": [{"id": "pythia"}, {"id": "dodona"}, {"id": "siwa"}, {"id": "echo"}, {"id": "idler"}],
        "petitioners": [{"id": "corinth", "query_mix": {"Discernible": 1}, "queries_per_month": 6}],
        "adversaries": [
            {"id": "copycat", "kind": "Freeloader", "target": "echo"},
            {"id": "sloth", "kind": "Lazy", "target": "idler", "constant": constant},
        ],
    }
    return parse_scenario(data)


def without_sybil_registrations(events):
    return [
        (e.at, e.kind, e.payload)
        for e in events
        if not (e.kind is EventKind.REGISTER and e.payload["sybil"])
    ]


class TestEventLog:
    def test_append_assigns_seq(self):
        log = EventLog()
        first = log.append(0, EventKind.SUBMIT, query_id="q1")
        second = log.append(0, EventKind.ROUTE, query_id="q1")
        assert (first.seq, second.seq) == (0, 1)

    def test_time_never_decreases(self):
        log = EventLog()
        log.append(5, EventKind.SUBMIT)
        with pytest.raises(AssertionError):
            log.append(4, EventKind.ROUTE)


class TestRun:
    def test_all_honest_has_no_manipulation(self, bundled_scenario):
        report, events = run(bundled_scenario("all_honest"))
        assert report.accepted_answers > 0
        assert report.manipulation_success_rate == 0.0
        assert report.corrupted_sources == 0
        assert report.detection_rate == 0.0
        assert report.mean_detection_latency_days is None
        assert report.expulsions == 0
        assert report.disputes == 0
        assert report.urn_consultations > 0
        assert report.urn_accepted == report.urn_consultations

    def test_same_seed_same_run(self, bundled_scenario):
        config = bundled_scenario("briber")
        first_report, first_events = run(config)
        second_report, second_events = run(config)
        assert first_report.to_dict() == second_report.to_dict()
        assert [e.to_dict() for e in first_events] == [e.to_dict() for e in second_events]

    def test_seed_changes_run(self, bundled_scenario):
        _, first = run(bundled_scenario("all_honest", seed=1))
        _, second = run(bundled_scenario("all_honest", seed=2))
        assert [e.to_dict() for e in first] != [e.to_dict() for e in second]

    def test_report_recomputed_from_saved_log(self, bundled_scenario, tmp_path):
        config = bundled_scenario("freeloader_lazy")
        report, events = run(config)
        path = tmp_path / "events.jsonl"
        write_event_log(events, path)
        assert report_from_log(read_event_log(path), config.seed) == report

    def test_summary_csv(self, bundled_scenario, tmp_path):
        report, _ = run(bundled_scenario("briber"))
        path = tmp_path / "summary.csv"
        write_summary_csv(report, path)
        header, row = path.read_text(encoding="utf-8").splitlines()
        assert header.split(",") == ["run_seed"] + SCALAR_METRICS
        assert row.split(",")[0] == str(report.run_seed)

    def test_invalid_config_rejected(self):
        with pytest.raises(InvalidConfig):
            Simulation(ScenarioConfig(duration_days=0))


@pytest.mark.parametrize("name", BUNDLED)
class TestLogInvariants:
    def test_log_is_ordered(self, name, bundled_scenario):
        _, events = run(bundled_scenario(name))
        assert [e.seq for e in events] == list(range(len(events)))
        assert all(a.at <= b.at for a, b in zip(events, events[1:]))

    def test_nothing_finalizes_inside_its_window(self, name, bundled_scenario):
        config = bundled_scenario(name)
        _, events = run(config)
        for event in events:
            if event.kind is EventKind.FINALIZE and event.payload["source_id"] != "contract":
                assert event.at >= event.payload["proposed_at"] + config.dispute_window_days

    def test_expelled_sources_never_act_again(self, name, bundled_scenario):
        _, events = run(bundled_scenario(name))
        expelled = set()
        for event in events:
            p = event.payload
            if event.kind is EventKind.EXPEL:
                expelled.add(p["source_id"])
            elif event.kind in (EventKind.REPORT, EventKind.PROPOSE, EventKind.ABSTAIN):
                assert p["source_id"] not in expelled
                assert not expelled.intersection(p.get("contributors", []))
            elif event.kind is EventKind.REGISTER and p["accepted"]:
                assert p["source_id"] not in expelled

    def test_fees_are_conserved(self, name, bundled_scenario):
        report, events = run(bundled_scenario(name))
        paid = {e.payload["query_id"]: e.payload["amount"] for e in events if e.kind is EventKind.FEE_PAID}
        refunded = 0.0
        for event in events:
            if event.kind is EventKind.REFUND:
                assert event.payload["amount"] == paid[event.payload["query_id"]]
                refunded += event.payload["amount"]
        assert report.fee_revenue == pytest.approx(sum(paid.values()) - refunded)

    def test_each_query_settles_at_most_once(self, name, bundled_scenario):
        report, events = run(bundled_scenario(name))
        refunded = {e.payload["query_id"] for e in events if e.kind is EventKind.REFUND}
        settled = [e.payload["query_id"] for e in events if e.kind in (EventKind.FINALIZE, EventKind.RESOLVE)]
        assert len(settled) == len(set(settled)) == report.accepted_answers
        assert not refunded.intersection(settled)


class TestRouting:
    def test_non_events_never_reach_a_source(self, bundled_scenario):
        _, events = run(bundled_scenario("all_honest"))
        non_events = {
            e.payload["query_id"] for e in events
            if e.kind is EventKind.SUBMIT and e.payload["category"] == "NonEvent"
        }
        assert non_events
        for event in events:
            query_id = event.payload.get("query_id")
            if query_id not in non_events:
                continue
            assert event.kind in (EventKind.SUBMIT, EventKind.ROUTE, EventKind.FEE_PAID, EventKind.REFUND)
            if event.kind is EventKind.REFUND:
                assert event.payload["reason"] == "Reject"

    def test_computational_queries_settle_by_contract(self, bundled_scenario):
        _, events = run(bundled_scenario("all_honest"))
        computed = {
            e.payload["query_id"] for e in events
            if e.kind is EventKind.SUBMIT and e.payload["category"] == "Computational"
        }
        for event in events:
            if event.payload.get("query_id") in computed:
                assert event.kind not in (EventKind.REPORT, EventKind.PROPOSE)
                if event.kind is EventKind.FINALIZE:
                    assert event.payload["source_id"] == "contract"


class TestSybil:
    def test_attributable_mode_is_unaffected_by_identity_count(self, bundled_scenario):
        few_report, few = run(bundled_scenario("sybil_1"))
        many_report, many = run(bundled_scenario("sybil_100"))

        assert few_report.sybil_registrations_accepted == many_report.sybil_registrations_accepted == 0
        assert few_report.sybil_registrations_rejected == 8
        assert many_report.sybil_registrations_rejected == 800
        assert few_report.manipulation_success_rate > 0.0

        few_metrics, many_metrics = few_report.to_dict(), many_report.to_dict()
        for metrics in (few_metrics, many_metrics):
            metrics.pop("sybil_registrations_rejected")
        assert few_metrics == many_metrics
        assert without_sybil_registrations(few) == without_sybil_registrations(many)

    def test_rejections_name_the_whitelist(self, bundled_scenario):
        _, events = run(bundled_scenario("sybil_1"))
        reasons = {e.payload["reason"] for e in events if e.kind is EventKind.REGISTER and e.payload["sybil"]}
        assert reasons == {"NotWhitelisted"}

    def test_open_mode_admits_sybils(self, bundled_scenario):
        report, _ = run(bundled_scenario("open_sybil"))
        assert report.sybil_registrations_accepted == 24
        assert report.sybil_registrations_rejected == 0


class TestFreeloaderAndLazy:
    def test_rates_without_audits(self):
        report, events = run(open_scenario(audit_probability=0.0))
        assert report.accepted_answers > 0
        assert report.freeloader_copy_rate == pytest.approx(0.2)
        assert report.lazy_constant_rate == pytest.approx(0.2)
        assert report.corrupted_sources == 2
        assert report.detection_rate == 0.0
        pools = [e for e in events if e.kind is EventKind.PROPOSE]
        assert pools and all(e.payload["source_id"] == "pool" for e in pools)

    def test_audits_catch_both(self):
        report, events = run(open_scenario(audit_probability=1.0))
        assert report.detection_rate == 1.0
        assert report.mean_detection_latency_days == 14.0
        expelled = {e.payload["source_id"] for e in events if e.kind is EventKind.EXPEL}
        assert expelled == {"echo", "idler"}

    def test_bundled_scenario_reports_copies(self, bundled_scenario):
        report, _ = run(bundled_scenario("freeloader_lazy"))
        assert report.corrupted_sources == 2
        assert 0.0 <= report.freeloader_copy_rate <= 1.0


class TestAdversaryStep:
    rng = agent_stream(0, "adversary:test")

    def view(self, day, request=None):
        return WorldView(day=day, calendar=Calendar(), mode=Mode.ATTRIBUTABLE, request=request)

    def test_briber(self):
        briber = AdversaryConfig("cleomenes", AdversaryKind.BRIBER, target="pythia", bias=0.5,
                                 corrupt_from=10, corrupt_to=20)
        [start] = adversary_step(briber, self.view(10), self.rng)
        assert (start.kind, start.source_id, start.value) == (ActionKind.SET_BIAS, "pythia", 0.5)
        assert adversary_step(briber, self.view(11), self.rng) == []
        [stop] = adversary_step(briber, self.view(20), self.rng)
        assert stop.value == 0.0

    def test_sybil_registers_at_month_start(self):
        sybil = AdversaryConfig("hydra", AdversaryKind.SYBIL, registrations_per_month=3, bias=0.5)
        actions = adversary_step(sybil, self.view(30), self.rng)
        assert [a.source_id for a in actions] == [sybil_identity("hydra", 1, n) for n in range(3)]
        assert all(a.kind is ActionKind.REGISTER for a in actions)
        assert adversary_step(sybil, self.view(31), self.rng) == []

    def test_freeloader(self):
        freeloader = AdversaryConfig("copycat", AdversaryKind.FREELOADER, target="echo")
        assert adversary_step(freeloader, self.view(0), self.rng)[0].kind is ActionKind.TAKEOVER
        assert adversary_step(freeloader, self.view(1), self.rng) == []
        [copy] = adversary_step(freeloader, self.view(3, AnswerRequest("q1", (1.0, 2.0))), self.rng)
        assert (copy.kind, copy.value) == (ActionKind.COPY, 2.0)
        [silent] = adversary_step(freeloader, self.view(3, AnswerRequest("probe")), self.rng)
        assert silent.kind is ActionKind.ABSTAIN

    def test_lazy(self):
        lazy = AdversaryConfig("sloth", AdversaryKind.LAZY, target="idler", constant=42.0)
        [answer] = adversary_step(lazy, self.view(3, AnswerRequest("q1", (1.0,))), self.rng)
        assert (answer.kind, answer.value) == (ActionKind.ANSWER, 42.0)


class TestScenarioValidation:
    def paths(self, data):
        with pytest.raises(InvalidConfig) as info:
            parse_scenario(data)
        return {path for path, _ in info.value.diagnostics}

    def test_field_paths(self):
        paths = self.paths({
            "colour": "purple",
            "tolerance": -1,
            "sources": [{"id": "pythia"}, {"id": "dodona", "bias": "high"}],
            "petitioners": [{"id": "athens", "tier": "Royal", "query_mix": {"Prophecy": 1}}],
            "adversaries": [{"id": "cleomenes", "kind": "Briber", "target": "delos"}],
        })
        assert paths == {
            "duration_days",
            "colour",
            "tolerance",
            "sources[1].bias",
            "petitioners[0].tier",
            "petitioners[0].query_mix",
            "petitioners[0].query_mix.Prophecy",
            "adversaries[0].target",
        }

    def test_file_that_is_not_utf8(self, tmp_path):
        path = tmp_path / "latin.json"
        path.write_bytes(b'{"name": "\xff", "duration_days": 30}')
        with pytest.raises(InvalidConfig) as info:
            load_scenario(path)
        [(field_path, message)] = info.value.diagnostics
        assert field_path == "scenario"
        assert "UTF-8" in message

    def test_duplicate_and_reserved_ids(self):
        paths = self.paths({
            "duration_days": 10,
            "sources": [{"id": "pythia"}, {"id": "reference-1"}],
            "petitioners": [{"id": "pythia"}],
            "adversaries": [{"id": "pool", "kind": "Sybil"}],
        })
        assert paths == {"sources[1].id", "petitioners[0].id", "adversaries[0].id"}

    def test_source_controlled_twice(self):
        paths = self.paths({
            "duration_days": 10,
            "mode": "open",
            "sources": [{"id": "echo"}],
            "adversaries": [
                {"id": "a", "kind": "Freeloader", "target": "echo"},
                {"id": "b", "kind": "Lazy", "target": "echo"},
            ],
        })
        assert paths == {"adversaries[1].target"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidConfig) as info:
            load_scenario(tmp_path / "missing.json")
        assert info.value.diagnostics[0][0] == "scenario"

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(InvalidConfig):
            load_scenario(path)

    def test_seed_override(self, bundled_scenario):
        assert bundled_scenario("briber", seed=99).seed == 99
        with pytest.raises(InvalidConfig):
            bundled_scenario("briber", seed=-1)

    def test_bundled_scenarios_load(self, bundled_scenario):
        for name in BUNDLED:
            assert bundled_scenario(name).name == name


class TestReplicate:
    def test_single_run_matches_run(self, bundled_scenario):
        config = bundled_scenario("briber")
        report, _ = run(config)
        summary = replicate(config, 1)
        assert (summary["runs"], summary["seed"]) == (1, config.seed)
        for name in SCALAR_METRICS:
            value = getattr(report, name)
            stats = summary["metrics"][name]
            if value is None:
                assert stats == {"mean": None, "std": None, "n": 0}
            else:
                assert stats == {"mean": pytest.approx(float(value)), "std": 0.0, "n": 1}

    def test_honest_runs_have_zero_spread(self, bundled_scenario):
        summary = replicate(bundled_scenario("all_honest"), 3)
        manipulation = summary["metrics"]["manipulation_success_rate"]
        assert manipulation == {"mean": 0.0, "std": 0.0, "n": 3}
        assert summary["metrics"]["mean_detection_latency_days"]["n"] == 0

    def test_worker_pool_matches_sequential(self, bundled_scenario):
        config = bundled_scenario("briber")
        assert replicate(config, 6, workers=3) == replicate(config, 6, workers=1)

    def test_rejects_bad_arguments(self, bundled_scenario):
        config = bundled_scenario("briber")
        with pytest.raises(InvalidConfig):
            replicate(config, 0)
        with pytest.raises(InvalidConfig):
            replicate(config, 1, workers=0)

    @pytest.mark.slow
    def test_briber_detection_rate(self, bundled_scenario):
        # five audit days in 150 days, each audited with probability 0.2
        summary = replicate(bundled_scenario("briber"), 5000)
        assert summary["metrics"]["detection_rate"]["mean"] == pytest.approx(1 - 0.8 ** 5, abs=0.03)
