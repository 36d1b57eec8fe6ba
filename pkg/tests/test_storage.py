import json
import struct

import numpy as np
import pytest

from src.core.errors import FormatError, MissingEmbedding
from src.storage.checkpoint import MAGIC as CKPT_MAGIC
from src.storage.checkpoint import decode_counter, encode_counter, load_checkpoint, save_checkpoint
from src.storage.embeddings import EmbeddingMatrix, ids_path, load_embeddings, save_embeddings
from src.storage.files import atomic_write


class TestCheckpointFormat:
    '''FGCKPT1 layout and error handling.'''

    def test_byte_layout(self, tmp_path):
        path = save_checkpoint(tmp_path / 'a.fgckpt', {'w': np.array([[1.0, 2.0]])})
        expected = (
            CKPT_MAGIC
            + struct.pack('<I', 1)
            + struct.pack('<H', 1)
            + b'w'
            + struct.pack('<B', 2)
            + struct.pack('<II', 1, 2)
            + struct.pack('<ff', 1.0, 2.0)
        )
        assert path.read_bytes() == expected

    def test_load_preserves_order_and_values(self, tmp_path):
        tensors = {'b.scalar': np.array(3.5), 'a.matrix': np.arange(6, dtype=np.float64).reshape(2, 3)}
        loaded = load_checkpoint(save_checkpoint(tmp_path / 'c.fgckpt', tensors))
        assert list(loaded) == ['b.scalar', 'a.matrix']
        assert loaded['b.scalar'].shape == ()
        np.testing.assert_array_equal(loaded['a.matrix'], tensors['a.matrix'].astype(np.float32))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'bad.fgckpt'
        path.write_bytes(b'NOTCKPT' + b'\x00' * 8)
        with pytest.raises(FormatError, match='magic'):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / 't.fgckpt', {'w': np.ones((4, 4))})
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match='truncated'):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = save_checkpoint(tmp_path / 't.fgckpt', {'w': np.ones(2)})
        path.write_bytes(path.read_bytes() + b'\x00')
        with pytest.raises(FormatError, match='trailing'):
            load_checkpoint(path)

    def test_duplicate_names(self, tmp_path):
        entry = struct.pack('<H', 1) + b'w' + struct.pack('<B', 1) + struct.pack('<I', 1) + struct.pack('<f', 1.0)
        path = tmp_path / 'dup.fgckpt'
        path.write_bytes(CKPT_MAGIC + struct.pack('<I', 2) + entry + entry)
        with pytest.raises(FormatError, match='duplicate'):
            load_checkpoint(path)


class TestCounters:
    '''Step and epoch counters survive the f32 format exactly.'''

    @pytest.mark.parametrize('value', [0, 4, 2**16 - 1, 2**24 + 1, 2**40 + 12345, 2**64 - 1])
    def test_exact_through_a_checkpoint(self, tmp_path, value):
        path = save_checkpoint(tmp_path / 'c.fgckpt', {'optim.step': encode_counter(value)})
        assert decode_counter(load_checkpoint(path)['optim.step']) == value

    def test_small_counts_read_from_the_first_element(self):
        assert encode_counter(7)[0] == 7
        assert decode_counter(np.array([7.0], dtype=np.float32)) == 7

    def test_plain_f32_loses_the_count(self):
        assert int(np.float32(2**24 + 1)) != 2**24 + 1

    @pytest.mark.parametrize('value', [-1, 2**64])
    def test_out_of_range(self, value):
        with pytest.raises(FormatError):
            encode_counter(value)

    @pytest.mark.parametrize('digits', [[1.5], [-1.0], [1.0, 70000.0], []])
    def test_bad_digits(self, digits):
        with pytest.raises(FormatError):
            decode_counter(np.array(digits, dtype=np.float32))


class TestEmbeddingFormat:
    '''FGEMB1 matrix plus id sidecar.'''

    def test_round_trip(self, tmp_path):
        matrix = EmbeddingMatrix(np.arange(6, dtype=np.float32).reshape(3, 2), ['x', 'y', 'z'])
        path = save_embeddings(tmp_path / 'e.fgemb', matrix)
        assert path.read_bytes()[:14] == b'FGEMB1' + struct.pack('<II', 3, 2)
        lines = ids_path(path).read_text().splitlines()
        assert json.loads(lines[1]) == {'row': 1, 'id': 'y'}
        loaded = load_embeddings(path)
        assert loaded.ids == ['x', 'y', 'z']
        np.testing.assert_array_equal(loaded.vector('z'), [4.0, 5.0])

    def test_size_mismatch(self, tmp_path):
        path = save_embeddings(tmp_path / 'e.fgemb', EmbeddingMatrix(np.ones((2, 2)), ['a', 'b']))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_missing_sidecar(self, tmp_path):
        path = save_embeddings(tmp_path / 'e.fgemb', EmbeddingMatrix(np.ones((1, 2)), ['a']))
        ids_path(path).unlink()
        with pytest.raises(FormatError, match='sidecar'):
            load_embeddings(path)

    def test_rows_out_of_order(self, tmp_path):
        path = save_embeddings(tmp_path / 'e.fgemb', EmbeddingMatrix(np.ones((2, 2)), ['a', 'b']))
        ids_path(path).write_text('{"row": 1, "id": "b"}\n{"row": 0, "id": "a"}\n')
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_matrix_invariants(self):
        with pytest.raises(FormatError):
            EmbeddingMatrix(np.ones((2, 2)), ['a', 'a'])
        with pytest.raises(FormatError):
            EmbeddingMatrix(np.ones((2, 2)), ['a'])
        with pytest.raises(MissingEmbedding):
            EmbeddingMatrix(np.ones((1, 2)), ['a']).vector('b')


class TestAtomicWrite:
    '''Files appear only once fully written.'''

    def test_failure_leaves_nothing(self, tmp_path):
        target = tmp_path / 'out.bin'
        with pytest.raises(RuntimeError):
            with atomic_write(target) as handle:
                handle.write(b'partial')
                raise RuntimeError('boom')
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []
