import pytest

from src.core.errors import FormatError
from src.utils.jsonl import read_jsonl, write_jsonl


class TestJsonl:
    '''Line-delimited JSON files.'''

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / 'log.jsonl'
        path.write_text('{"a": 1}\n\n   \n{"a": 2}\n', encoding='utf-8')
        assert list(read_jsonl(path)) == [{'a': 1}, {'a': 2}]

    def test_bad_line_reports_its_number(self, tmp_path):
        path = tmp_path / 'log.jsonl'
        path.write_text('{"a": 1}\n{"a": \n', encoding='utf-8')
        records = read_jsonl(path)
        assert next(records) == {'a': 1}
        with pytest.raises(FormatError, match=':2:'):
            next(records)

    def test_write_then_read(self, tmp_path):
        records = [{'step': 1, 'text': 'a man walks'}, {'step': 2, 'text': 'café'}]
        assert write_jsonl(tmp_path / 'out.jsonl', records) == 2
        assert list(read_jsonl(tmp_path / 'out.jsonl')) == records
