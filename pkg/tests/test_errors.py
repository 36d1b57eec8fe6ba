import inspect

import pytest

from src.core import errors


ERROR_CLASSES = [
    obj for _, obj in inspect.getmembers(errors, inspect.isclass)
    if issubclass(obj, errors.FigClipError) and obj.__module__ == errors.__name__
]


class TestErrorHierarchy:
    '''Every domain error is documented and maps to an exit code.'''

    @pytest.mark.parametrize('cls', ERROR_CLASSES, ids=lambda cls: cls.__name__)
    def test_documented(self, cls):
        assert cls.__doc__ and cls.__doc__.strip()

    def test_exit_codes(self):
        assert errors.ValidationError.exit_code == 1
        assert errors.IdenticalNegative.exit_code == 1
        assert errors.FormatError.exit_code == 2
        assert errors.MissingEmbedding.exit_code == 2

    def test_shape_error_is_a_value_error(self):
        error = errors.ShapeError('matmul', (2, 3), (4, 5))
        assert isinstance(error, ValueError)
        assert str(error) == 'matmul: incompatible shapes (2, 3) vs (4, 5)'

    def test_identical_negative_is_a_validation_error(self):
        assert issubclass(errors.IdenticalNegative, errors.ValidationError)
