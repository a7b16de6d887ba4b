import pytest

from soft_annihilation.report import (REPORT_HEADER, SCHEMA_LINE, ReportRow,
                                      format_value, process_csv_data,
                                      read_manifest, write_csv, write_manifest)


def test_format_value():
    assert format_value(None) == ''
    assert format_value(True) == 'True'
    assert format_value(3) == '3'
    assert format_value(0.1) == '0.1'
    assert format_value(1 / 3) == repr(1 / 3)
    assert format_value('F1') == 'F1'


def test_report_row_fields():
    row = ReportRow('F1', 0.8, N=100, t=0.25, bin_x=0.05, stderr=0.01)
    assert row._fields == REPORT_HEADER
    assert row.value == 0.8 and row.bin_y is None


def test_write_and_read(tmp_path):
    path = tmp_path / 'report.csv'
    rows = [ReportRow('mass', 0.5, N=10, t=1.0),
            ReportRow('F2', 0.25, N=10, t=1.0, bin_x=0.25, bin_y=0.75)]
    write_csv(path, REPORT_HEADER, rows)
    assert path.read_text().splitlines()[0] == SCHEMA_LINE
    header, read = process_csv_data(path)
    assert header == REPORT_HEADER
    assert read[0] == ['mass', '10', '1.0', '', '', '0.5', '', '', '']
    assert read[1][3:6] == ['0.25', '0.75', '0.25']


def test_row_length_is_checked(tmp_path):
    with pytest.raises(AssertionError):
        write_csv(tmp_path / 'bad.csv', ('a', 'b'), [(1, 2, 3)])


def test_empty_file(tmp_path):
    path = tmp_path / 'empty.csv'
    path.write_text(SCHEMA_LINE + '\n')
    assert process_csv_data(path) == ((), [])


def test_manifest(tmp_path):
    path = tmp_path / 'manifest.txt'
    write_manifest(path, {'study': 'lln', 'replicas': 4, 'z_threshold': 4.0,
                          'verdict': 'pass'})
    assert read_manifest(path) == {'study': 'lln', 'replicas': '4',
                                   'z_threshold': '4.0', 'verdict': 'pass'}
