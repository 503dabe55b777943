import numpy as np
import pytest

from survival.data_model import (
    DatasetSchema,
    diagnostics,
    dump_dataset,
    load_dataset,
    make_sample,
)
from survival.errors import DataError, DomainError


class TestLoadDataset:

    def test_two_rows(self):
        sample = load_dataset(b"time,status,z1\n5,1,0\n2,0,1")
        assert sample.n == 2
        assert sample.p == 1
        np.testing.assert_array_equal(sample.order, [0, 1])
        np.testing.assert_array_equal(sample.sorted_times, [5.0, 2.0])

    def test_negative_time_is_domain_error(self):
        with pytest.raises(DomainError) as info:
            load_dataset(b"time,status,z1\n5,1,0\n-1,0,1")
        assert info.value.line == 3

    def test_status_outside_zero_one(self):
        with pytest.raises(DomainError):
            load_dataset(b"time,status\n5,2\n")

    def test_event_ranked_before_censoring_on_tie(self):
        sample = load_dataset(b"time,status\n3,0\n3,1\n")
        np.testing.assert_array_equal(sample.order, [1, 0])
        np.testing.assert_array_equal(sample.sorted_status, [1, 0])

    def test_comment_and_blank_lines_keep_line_numbers(self):
        text = b"# generated\ntime,status,z1\n\n4,1,0.5\n# note\nabc,1,0\n"
        with pytest.raises(DataError) as info:
            load_dataset(text)
        assert info.value.line == 6

    def test_ragged_row_reports_line(self):
        with pytest.raises(DataError) as info:
            load_dataset(b"time,status\n1,1\n2,1,5\n")
        assert info.value.line == 3

    def test_missing_covariate_cell_rejected(self):
        with pytest.raises(DataError):
            load_dataset(b"time,status,z1\n1,1,\n2,0,1\n")

    def test_schema_selects_columns(self):
        schema = DatasetSchema(time_col="t", status_col="d", covariate_cols=["age"])
        sample = load_dataset(b"t,d,age,ignored\n2,1,40,x\n1,0,50,y\n", schema)
        assert sample.covariate_names == ("age",)
        np.testing.assert_array_equal(sample.covariates[:, 0], [40.0, 50.0])

    def test_missing_column(self):
        with pytest.raises(DataError):
            load_dataset(b"t,status\n1,1\n")

    def test_non_utf8_bytes_are_data_error(self):
        with pytest.raises(DataError, match="UTF-8"):
            load_dataset(b"time,status\n1.5,1\n\xff\xfe2,0\n")

    def test_reads_from_path(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status\n1.5,1\n", encoding="utf-8")
        assert load_dataset(path).n == 1


class TestSampleInvariants:

    def test_order_is_descending_permutation(self):
        rng = np.random.default_rng(3)
        times = np.round(rng.exponential(size=300), 1) + 0.1
        status = rng.integers(0, 2, size=300)
        sample = make_sample(times, status)
        assert sorted(sample.order.tolist()) == list(range(300))
        assert np.all(np.diff(sample.sorted_times) <= 0)

    def test_arrays_are_read_only_copies(self):
        times = np.array([1.0, 2.0])
        sample = make_sample(times, [1, 1])
        times[0] = 99.0
        assert sample.times[0] == 1.0
        with pytest.raises(ValueError):
            sample.times[0] = 5.0

    def test_covariate_row_count_must_match(self):
        with pytest.raises(DataError):
            make_sample([1.0, 2.0], [1, 0], np.zeros((3, 1)))

    def test_time_at_is_one_based(self, hand_sample):
        assert hand_sample.time_at(1) == 89.0
        assert hand_sample.time_at(10) == 1.5
        with pytest.raises(DomainError):
            hand_sample.time_at(0)

    def test_dump_then_load_is_identity(self, cauchy_sample):
        reloaded = load_dataset(dump_dataset(cauchy_sample).encode("utf-8"))
        np.testing.assert_array_equal(reloaded.times, cauchy_sample.times)
        np.testing.assert_array_equal(reloaded.status, cauchy_sample.status)
        np.testing.assert_array_equal(reloaded.covariates, cauchy_sample.covariates)


class TestDiagnostics:

    def test_all_events(self):
        report = diagnostics(make_sample([1, 2, 3, 4], [1, 1, 1, 1]))
        assert report.censoring_rate == 0.0
        assert report.event_count == 4

    def test_half_censored(self):
        report = diagnostics(make_sample([1, 2], [1, 0]))
        assert report.censoring_rate == 0.5
        assert report.max_time == 2.0
        assert report.max_time_censored

    def test_empty_sample(self):
        with pytest.raises(DataError):
            diagnostics(make_sample([], []))
