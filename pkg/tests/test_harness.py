import pytest

from spatial_rag.backends import BackendError, ChatBackend, LlmResponse, MockChatBackend
from spatial_rag.broker import ContextBroker
from spatial_rag.datasets import synthetic_entities
from spatial_rag.grading import VerdictValue
from spatial_rag.harness import (
    RunConfig,
    run_correctness_suite,
    run_latency_suite,
)
from spatial_rag.reporting import FORMATS, RunResults, emit_report


class FlakyBackend(ChatBackend):
    """Fails every third call, otherwise answers like a fixed mock."""

    def __init__(self):
        self.calls = 0

    def call(self, prompt):
        self.calls += 1
        if self.calls % 3 == 0:
            raise BackendError("synthetic outage", status=503)
        return LlmResponse(answer_text="nothing to report", llm_latency_ms=10.0)


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.limits == (10, 100, 650)
        assert config.repetitions == 10
        assert config.seed == 7
        assert config.timing == "measured"

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(limits=())
        with pytest.raises(ValueError):
            RunConfig(limits=(10, 0))
        with pytest.raises(ValueError):
            RunConfig(repetitions=0)
        with pytest.raises(ValueError):
            RunConfig(timing="guessed")

    def test_snapshot_is_plain_data(self):
        snapshot = RunConfig().snapshot()
        assert snapshot["limits"] == [10, 100, 650]
        assert snapshot["timing"] == "measured"
        assert len(snapshot["region"]) == 4


@pytest.fixture(scope="module")
def synthetic_broker():
    broker = ContextBroker()
    for entity in synthetic_entities(120, seed=7):
        broker.upsert(entity)
    return broker


class TestLatencySuite:
    def test_shape_and_counts(self, synthetic_broker):
        config = RunConfig(limits=(5, 20), repetitions=3, timing="reported")
        backend = MockChatBackend(mode="fixed", delay_ms=(50.0, 80.0), seed=config.seed)
        report = run_latency_suite(config, synthetic_broker, backend)
        assert len(report.samples) == 7 * 2 * 3
        assert len(report.cells) == 7 * 2
        assert all(cell.errors == 0 for cell in report.cells)
        assert all(s.broker_ms == 0.0 for s in report.samples)
        assert all(50.0 <= s.llm_ms <= 80.0 for s in report.samples)

    def test_measured_mode_reflects_sleep(self, synthetic_broker):
        config = RunConfig(limits=(10,), repetitions=2, timing="measured")
        backend = MockChatBackend(mode="fixed", delay_ms=25.0, sleep=True)
        report = run_latency_suite(config, synthetic_broker, backend)
        for cell in report.cells:
            assert cell.llm.median >= 25.0
            assert cell.llm.median > cell.broker.median

    def test_errors_kept_out_of_stats(self, synthetic_broker):
        config = RunConfig(limits=(5,), repetitions=3, timing="reported")
        report = run_latency_suite(config, synthetic_broker, FlakyBackend())
        assert sum(cell.errors for cell in report.cells) == 7
        for cell in report.cells:
            assert cell.llm.count + cell.errors == 3
            assert cell.llm.median == 10.0


class TestCorrectnessSuite:
    def test_oracle_all_correct_on_fixture(self, fixture_broker):
        config = RunConfig(limits=(10,), timing="reported")
        backend = MockChatBackend(mode="oracle")
        report = run_correctness_suite(config, fixture_broker, backend)
        assert len(report.rows) == 12
        verdicts = {row.case_id: row.verdict.value for row in report.rows}
        assert set(verdicts.values()) == {VerdictValue.CORRECT}

    def test_rows_carry_grading_evidence(self, fixture_broker):
        config = RunConfig(limits=(10,), timing="reported")
        report = run_correctness_suite(config, fixture_broker, MockChatBackend(mode="oracle"))
        by_id = {row.case_id: row for row in report.rows}
        qe4 = by_id["QE4"]
        assert qe4.entity_count == 10
        assert len(qe4.truth_ids) == 8
        assert set(qe4.mention_ids) == set(qe4.truth_ids)
        qe6 = by_id["QE6"]
        assert qe6.truth_ids == () and qe6.cant_find

    def test_fixed_backend_fails_the_suite(self, fixture_broker):
        config = RunConfig(limits=(10,), timing="reported")
        backend = MockChatBackend(mode="fixed", fixed_text="I love Madrid!")
        report = run_correctness_suite(config, fixture_broker, backend)
        values = {row.verdict.value for row in report.rows}
        assert values == {VerdictValue.INCORRECT}


class TestDeterministicReports:
    def run_once(self, tmp_path, name):
        broker = ContextBroker()
        for entity in synthetic_entities(80, seed=11):
            broker.upsert(entity)
        config = RunConfig(limits=(5, 25), repetitions=4, timing="reported")
        backend = MockChatBackend(mode="oracle", delay_ms=(100.0, 300.0), seed=config.seed)
        latency = run_latency_suite(config, broker, backend)
        correctness = run_correctness_suite(config, broker, backend)
        results = RunResults(config=config.snapshot(), latency=latency,
                             correctness=correctness)
        out_dir = tmp_path / name
        return emit_report(results, out_dir, FORMATS)

    def test_two_runs_are_byte_identical(self, tmp_path):
        first = self.run_once(tmp_path, "a")
        second = self.run_once(tmp_path, "b")
        names = [p.name for p in first]
        assert names == [
            "report.txt", "latency_samples.csv", "verdicts.csv",
            "answers.ndjson", "plot_data.csv",
        ]
        for path_a, path_b in zip(first, second):
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(RunResults(config={}), tmp_path, formats=("pdf",))
