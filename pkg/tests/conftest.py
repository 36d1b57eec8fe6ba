import numpy as np
import pytest

from src.core.annotations import Dataset, EventAnnotation, RolePair, VideoAnnotation
from src.core.config import TrainConfig
from src.core.tensor import precision

# -------------------------------------------------------------------------------------------------
# Numerics helpers
# -------------------------------------------------------------------------------------------------


def numeric_grad(fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    '''Central finite differences of the scalar ``fn()`` with respect to ``array`` (mutated in place).'''
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=['multi_index'], op_flags=['readwrite'])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + h
        plus = fn()
        array[idx] = original - h
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture
def float64():
    '''Run a test with float64 tensors and parameters.'''
    with precision('float64'):
        yield


@pytest.fixture
def gradcheck():
    '''Assert autodiff gradients of ``loss_fn`` match finite differences for every tensor in ``tensors``.'''

    def check(loss_fn, tensors, tol: float = 1e-4):
        for t in tensors:
            t.grad = None
        loss_fn().backward()
        for t in tensors:
            numeric = numeric_grad(lambda: loss_fn().item(), t.data)
            assert t.grad is not None, f'no gradient reached {t!r}'
            assert relative_error(t.grad, numeric) < tol, f'gradient mismatch for {t!r}'

    return check


# -------------------------------------------------------------------------------------------------
# Annotations
# -------------------------------------------------------------------------------------------------


def make_event(event_id, verb, roles, start=0.0, end=1.0, refs=None, natural=None):
    return EventAnnotation(
        event_id=event_id,
        verb=verb,
        roles=tuple(RolePair(r, n) for r, n in roles),
        start_s=start,
        end_s=end,
        frame_refs=tuple(refs or [f'{event_id}_f{i}.npy' for i in range(4)]),
        natural_prompt=natural,
    )


@pytest.fixture
def walk_event():
    return make_event(
        'walk0',
        'walk',
        [
            ('walker', 'man with short hair wearing collared shirt'),
            ('direction', 'forward'),
            ('manner', 'slowly'),
            ('scene', 'apartment'),
        ],
    )


@pytest.fixture
def speak_event():
    return make_event(
        'speak0',
        'speak',
        [
            ('talker', 'man standing in yellow sweatshirt'),
            ('hearer', 'woman with scarf'),
            ('manner', 'standing in the middle of a full airplane'),
            ('scene', 'an airplane'),
        ],
    )


@pytest.fixture
def open_event():
    return make_event(
        'open0',
        'open',
        [
            ('opener', 'man in brown jacket and man in gray suit'),
            ('the thing opening', 'trunk of taxi'),
            ('manner', 'annoyed'),
            ('scene', 'near a taxi'),
        ],
    )


@pytest.fixture
def bow_event():
    return make_event(
        'bow0',
        'bow',
        [
            ('bower', 'woman in glasses'),
            ('bowed to', 'man wearing black'),
            ('manner', 'on her knees'),
            ('scene', 'in a well lit room'),
        ],
    )


def make_dataset(videos: int = 4, events: int = 2, verbs=('walk', 'run', 'jump'), movies: int = 2) -> Dataset:
    '''Small uniform dataset whose frame refs point into an ``emb:<row>`` matrix, row-major by event.'''
    built, row = [], 0
    for v in range(videos):
        evts = []
        for p in range(events):
            verb = verbs[(v + p) % len(verbs)]
            refs = [f'emb:{row + j}' for j in range(3)]
            row += 3
            evts.append(
                make_event(
                    f'v{v}_e{p}',
                    verb,
                    [(f'{verb}er', f'person {v}'), ('thing', f'object {p}'), ('scene', f'place {v % 3}')],
                    start=float(p),
                    end=float(p + 1),
                    refs=refs,
                )
            )
        built.append(VideoAnnotation(video_id=f'v{v}', movie_id=f'm{v % movies}', events=tuple(evts)))
    return Dataset(tuple(built))


@pytest.fixture
def tiny_dataset():
    return make_dataset()


@pytest.fixture
def tiny_config():
    '''A model small enough for per-step tests.'''
    return TrainConfig(
        batch_videos=2,
        epochs=1,
        lr=1e-3,
        nvr=1,
        lora_rank=2,
        frames_per_event=2,
        dim=8,
        tokens=2,
        feature_dim=4,
        backbone_depth=1,
        heads=2,
        mlp_ratio=2,
        vc_depth=1,
        max_events=4,
        max_frames=4,
        threads=1,
    )
