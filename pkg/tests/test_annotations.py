import copy
import json

import pytest

from src.core.annotations import Dataset, RolePair, VideoAnnotation, build_verb_lexicon
from src.core.errors import FormatError, SchemaError, ValidationError
from src.services.annotation_service import AnnotationService
from tests.conftest import make_dataset, make_event

VALID = {
    'figannot_version': 1,
    'split': 'train',
    'videos': [
        {
            'video_id': 'vid1',
            'movie_id': 'movieA',
            'events': [
                {
                    'event_id': 'vid1_e0',
                    'start_s': 0.0,
                    'end_s': 2.0,
                    'verb': 'walk',
                    'roles': [{'role': 'Walker', 'noun': ' man '}, {'role': 'scene', 'noun': 'apartment'}],
                    'frames': ['a.npy', 'b.npy'],
                },
                {
                    'event_id': 'vid1_e1',
                    'start_s': 2.0005,
                    'end_s': 4,
                    'verb': 'sit',
                    'roles': [{'role': 'sitter', 'noun': 'man'}],
                    'frames': ['c.npy'],
                    'natural_prompt': 'a man sits down',
                },
            ],
        }
    ],
}


def with_event(**changes):
    payload = copy.deepcopy(VALID)
    payload['videos'][0]['events'][0].update(changes)
    return payload


class TestParseDataset:
    '''Schema validation of annotation JSON.'''

    def test_valid_payload(self):
        dataset = AnnotationService.parse_dataset(VALID)
        event = dataset.videos[0].events[0]
        assert event.role_names == ('walker', 'scene')
        assert event.nouns == ('man', 'apartment')
        assert dataset.videos[0].events[1].natural_prompt == 'a man sits down'
        assert dataset.events_per_video == 2

    def test_missing_field_reports_pointer(self):
        payload = copy.deepcopy(VALID)
        del payload['videos'][0]['events'][1]['verb']
        with pytest.raises(SchemaError) as excinfo:
            AnnotationService.parse_dataset(payload)
        assert excinfo.value.pointer == '/videos/0/events/1'

    def test_wrong_type_reports_field_pointer(self):
        with pytest.raises(SchemaError) as excinfo:
            AnnotationService.parse_dataset(with_event(start_s='zero'))
        assert excinfo.value.pointer == '/videos/0/events/0/start_s'

    def test_boolean_is_not_a_number(self):
        with pytest.raises(SchemaError):
            AnnotationService.parse_dataset(with_event(end_s=True))

    def test_unsupported_version(self):
        with pytest.raises(SchemaError):
            AnnotationService.parse_dataset({**VALID, 'figannot_version': 2})

    def test_empty_noun(self):
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(roles=[{'role': 'walker', 'noun': '  '}]))

    def test_duplicate_roles(self):
        roles = [{'role': 'walker', 'noun': 'a'}, {'role': 'WALKER', 'noun': 'b'}]
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(roles=roles))

    def test_start_not_before_end(self):
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(start_s=2.0, end_s=2.0))

    def test_gap_between_events(self):
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(end_s=1.5))

    def test_overlap_between_events(self):
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(end_s=2.5))

    def test_no_frames(self):
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(with_event(frames=[]))

    def test_mixed_event_counts(self):
        payload = copy.deepcopy(VALID)
        second = copy.deepcopy(payload['videos'][0])
        second['video_id'] = 'vid2'
        second['events'] = second['events'][:1]
        second['events'][0]['event_id'] = 'vid2_e0'
        payload['videos'].append(second)
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(payload)

    def test_duplicate_event_ids_across_videos(self):
        payload = copy.deepcopy(VALID)
        second = copy.deepcopy(payload['videos'][0])
        second['video_id'] = 'vid2'
        payload['videos'].append(second)
        with pytest.raises(ValidationError):
            AnnotationService.parse_dataset(payload)


class TestAnnotationFiles:
    '''Loading and saving through the filesystem.'''

    def test_round_trip(self, tmp_path):
        dataset = AnnotationService.parse_dataset(VALID)
        path = AnnotationService.save_dataset(tmp_path / 'd.json', dataset)
        assert AnnotationService.load_dataset(path) == dataset

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"figannot_version": 1,', encoding='utf-8')
        with pytest.raises(FormatError):
            AnnotationService.load_dataset(path)

    def test_empty_videos_list_loads(self, tmp_path):
        path = tmp_path / 'empty.json'
        path.write_text(json.dumps({'figannot_version': 1, 'split': 'test', 'videos': []}), encoding='utf-8')
        dataset = AnnotationService.load_dataset(path)
        assert dataset.videos == ()
        assert dataset.split == 'test'
        assert dataset.events_per_video == 0
        assert list(dataset.events()) == []
        assert build_verb_lexicon(dataset) == {}
        assert dict(dataset.verb_lexicon) == {}

    def test_serialized_shape(self):
        payload = AnnotationService.serialize(AnnotationService.parse_dataset(VALID))
        assert json.loads(json.dumps(payload))['videos'][0]['events'][0]['roles'][0] == {'role': 'walker', 'noun': 'man'}


class TestVerbLexicon:
    '''Role names per verb, most frequent first.'''

    def test_frequency_then_name(self):
        events = [
            make_event('a', 'hit', [('hitter', 'x'), ('victim', 'y')]),
            make_event('b', 'hit', [('hitter', 'x'), ('instrument', 'z')], start=1.0, end=2.0),
            make_event('c', 'hit', [('hitter', 'x'), ('victim', 'w')], start=2.0, end=3.0),
        ]
        dataset = Dataset((VideoAnnotation('v', 'm', tuple(events)),))
        assert build_verb_lexicon(dataset) == {'hit': ['hitter', 'victim', 'instrument']}
        assert dataset.verb_lexicon['hit'] == frozenset({'hitter', 'victim', 'instrument'})

    def test_role_names_normalised(self):
        assert RolePair('  Scene ', 'park').role == 'scene'

    def test_fixture_dataset_is_valid(self):
        dataset = make_dataset(videos=3, events=2)
        assert len(list(dataset.events())) == 6
