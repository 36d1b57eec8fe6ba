import json

import numpy as np
import pandas as pd
import pytest

from src.core.errors import FormatError, MissingEmbedding, ShapeError
from src.core.evaluation import (
    caption_choice,
    compose_accuracy,
    load_compose_cases,
    pool_frame_embeddings,
    ranks_of,
    retrieval_metrics,
    video_retrieval,
    zero_shot_classify,
)
from src.storage.embeddings import EmbeddingMatrix


def sort_oracle(sim):
    '''Rank by a full stable sort of each row; ties keep gallery order.'''
    ranks = []
    for i, row in enumerate(sim):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        ranks.append(order.index(i) + 1)
    return np.array(ranks)


class TestRetrievalMetrics:
    '''Recall@k, mean and median rank.'''

    def test_worked_example(self):
        sim = np.array([[0.9, 0.1, 0.2], [0.8, 0.5, 0.1], [0.1, 0.2, 0.7]])
        assert list(ranks_of(sim)) == [1, 2, 1]
        metrics = retrieval_metrics(sim)
        assert metrics['R@1'] == pytest.approx(66.67, abs=0.01)
        assert metrics['R@5'] == 100.0
        assert metrics['mean_rank'] == pytest.approx(1.333, abs=1e-3)
        assert metrics['median_rank'] == 1.0

    def test_all_ties_rank_by_index(self):
        assert list(ranks_of(np.zeros((3, 3)))) == [1, 2, 3]

    def test_lower_median(self):
        sim = np.array([[0, 1, 1, 1], [1, 0, 1, 1], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
        # ranks 4, 4, 1, 1
        assert retrieval_metrics(sim)['median_rank'] == 1.0

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            # coarse rounding plants ties
            sim = np.round(rng.standard_normal((50, 50)), 1 if trial % 2 else 3)
            np.testing.assert_array_equal(ranks_of(sim), sort_oracle(sim))

    def test_explicit_ground_truth(self):
        sim = np.array([[0.1, 0.9], [0.2, 0.3], [0.8, 0.5]])
        assert list(ranks_of(sim, [1, 0, 0])) == [1, 2, 1]

    @pytest.mark.parametrize('transform', [lambda s: 2 * s + 1, lambda s: np.exp(3 * s), lambda s: s ** 3])
    def test_invariant_under_monotone_transforms(self, transform):
        sim = np.round(np.random.default_rng(5).standard_normal((40, 40)), 1)
        assert retrieval_metrics(transform(sim)) == retrieval_metrics(sim)

    def test_invariant_under_gallery_permutation(self):
        rng = np.random.default_rng(6)
        sim = rng.standard_normal((30, 30))
        perm = rng.permutation(30)
        # column perm[j] of the permuted gallery holds original item j
        permuted = np.empty_like(sim)
        permuted[:, perm] = sim
        assert retrieval_metrics(permuted, ground_truth=perm) == retrieval_metrics(sim)

    def test_ties_follow_gallery_index_under_permutation(self):
        sim = np.zeros((1, 3))
        assert list(ranks_of(sim, [2])) == [3]
        # moving the true item to the front of the gallery puts it ahead of its ties
        assert list(ranks_of(sim[:, [2, 0, 1]], [0])) == [1]

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            ranks_of(np.zeros((2, 3)))
        with pytest.raises(ShapeError):
            ranks_of(np.zeros((0, 0)))
        with pytest.raises(ShapeError):
            ranks_of(np.zeros((2, 2)), [0, 5])


class TestVideoRetrieval:
    '''Retrieval between embedding matrices matched by id.'''

    def test_matches_by_id(self):
        videos = EmbeddingMatrix(np.eye(3), ['a', 'b', 'c'])
        queries = EmbeddingMatrix(np.eye(3)[[2, 0, 1]], ['c', 'a', 'b'])
        for direction in ('t2v', 'v2t'):
            assert video_retrieval(videos, queries, direction)['R@1'] == 100.0

    def test_missing_id(self):
        videos = EmbeddingMatrix(np.eye(2), ['a', 'b'])
        with pytest.raises(MissingEmbedding):
            video_retrieval(videos, EmbeddingMatrix(np.eye(2), ['a', 'z']))

    def test_unknown_direction(self):
        matrix = EmbeddingMatrix(np.eye(2), ['a', 'b'])
        with pytest.raises(ValueError):
            video_retrieval(matrix, matrix, 'sideways')

    def test_pool_frames(self):
        frames = EmbeddingMatrix(np.array([[1, 0], [3, 0], [0, 2]], dtype=float), ['v1:0', 'v1:1', 'v2:0'])
        pooled = pool_frame_embeddings(frames)
        assert pooled.ids == ['v1', 'v2']
        np.testing.assert_allclose(pooled.data, [[1, 0], [0, 1]])


class TestClassification:
    '''Zero-shot top-k against a brute-force oracle.'''

    def test_against_oracle(self):
        rng = np.random.default_rng(3)
        classes = EmbeddingMatrix(rng.standard_normal((6, 5)), [f'c{i}' for i in range(6)])
        embeddings = rng.standard_normal((40, 5))
        labels = [f'c{i}' for i in rng.integers(6, size=40)]
        normed = classes.data / np.linalg.norm(classes.data, axis=1, keepdims=True)
        scores = embeddings @ normed.T
        expected_top1 = np.mean([f'c{np.argmax(s)}' == lab for s, lab in zip(scores, labels)]) * 100
        expected_top5 = np.mean(
            [lab in {f'c{j}' for j in np.argsort(-s)[:5]} for s, lab in zip(scores, labels)]
        ) * 100
        result = zero_shot_classify(embeddings, labels, classes)
        assert result['top1'] == pytest.approx(expected_top1)
        assert result['top5'] == pytest.approx(expected_top5)

    def test_unknown_label(self):
        classes = EmbeddingMatrix(np.eye(2), ['walk', 'run'])
        with pytest.raises(MissingEmbedding):
            zero_shot_classify(np.eye(2), ['walk', 'swim'], classes)

    def test_label_count(self):
        classes = EmbeddingMatrix(np.eye(2), ['walk', 'run'])
        with pytest.raises(ShapeError):
            zero_shot_classify(np.eye(2), ['walk'], classes)


class TestComposition:
    '''Two-caption choice and case files.'''

    def test_caption_choice(self):
        visual = np.array([1.0, 0.0])
        assert caption_choice(visual, np.array([1.0, 0.1]), np.array([[0.0, 1.0]]))
        assert not caption_choice(visual, np.array([0.0, 1.0]), np.array([[1.0, 0.0]]))

    def test_tie_counts_as_wrong(self):
        visual = np.array([1.0, 0.0])
        assert not caption_choice(visual, np.array([1.0, 1.0]), np.array([[2.0, 2.0]]))

    def test_needs_a_negative(self):
        with pytest.raises(FormatError):
            caption_choice(np.ones(2), np.ones(2), np.zeros((0, 2)))

    def test_accuracy_over_cases(self, tmp_path):
        path = tmp_path / 'cases.jsonl'
        rows = [
            {'case_id': 'a', 'visual_id': 'x', 'positive': 'east', 'negatives': ['north']},
            {'case_id': 'b', 'visual_id': 'y', 'positive': 'east', 'negatives': ['north', 'west']},
        ]
        path.write_text('\n'.join(json.dumps(r) for r in rows) + '\n')
        vectors = {'east': [1.0, 0.0], 'north': [0.0, 1.0], 'west': [-1.0, 0.0]}
        visuals = EmbeddingMatrix(np.array([[1.0, 0.1], [0.0, 1.0]]), ['x', 'y'])
        result = compose_accuracy(load_compose_cases(path), visuals, lambda texts: np.array([vectors[t] for t in texts]))
        assert result == {'accuracy': 50.0, 'cases': 2, 'correct': 1}

    def test_empty_case_file(self, tmp_path):
        path = tmp_path / 'empty.jsonl'
        path.write_text('')
        cases = load_compose_cases(path)
        assert len(cases) == 0
        assert compose_accuracy(cases, EmbeddingMatrix(np.eye(1), ['x']), lambda t: t)['accuracy'] == 0.0

    def test_missing_columns(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text(json.dumps({'case_id': 'a', 'positive': 'p'}) + '\n')
        with pytest.raises(FormatError):
            load_compose_cases(path)

    def test_empty_negatives(self):
        cases = pd.DataFrame([{'case_id': 'a', 'visual_id': 'x', 'positive': 'p', 'negatives': []}])
        with pytest.raises(FormatError):
            compose_accuracy(cases, EmbeddingMatrix(np.eye(1), ['x']), lambda t: np.ones((len(t), 1)))
