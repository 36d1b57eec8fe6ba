import pytest

from src.core.annotations import RolePair
from src.core.errors import TemplateError, ValidationError
from src.core.negatives import swap_nouns, swap_verb
from src.core.prompting import (
    Perturbation,
    PromptKind,
    PromptRecord,
    parse_prompt,
    render_action_prompt,
    render_class_prompt,
    render_event_prompt,
    render_template,
)
from tests.conftest import make_event

LOOK_ROLES = ['looker', 'thing looked at', 'direction', 'manner', 'scene']
RESPOND_ROLES = ['replier', 'scene']
SMASH_ROLES = ['smasher', 'smashed', 'direction', 'scene']


class TestGoldenPrompts:
    '''Byte-exact prompts rendered from structured annotations.'''

    def test_walk(self, walk_event):
        assert render_event_prompt(walk_event).text == (
            'In this photo, the action is walk where, the walker is man with short hair wearing collared shirt, '
            'direction is forward, manner is slowly, and scene of the event is apartment.'
        )

    def test_speak_positive(self, speak_event):
        assert render_event_prompt(speak_event).text == (
            'In this photo, the action is speak where, the talker is man standing in yellow sweatshirt, '
            'hearer is woman with scarf, manner is standing in the middle of a full airplane, '
            'and scene of the event is an airplane.'
        )

    def test_speak_to_look(self, speak_event):
        record = swap_verb(speak_event, 'look', LOOK_ROLES)
        assert record.text == (
            'In this photo, the action is look where, the looker is man standing in yellow sweatshirt, '
            'thing looked at is woman with scarf, manner is standing in the middle of a full airplane, '
            'and scene of the event is an airplane.'
        )
        assert record.kind is PromptKind.HN_VERB_ROLE
        assert record.perturbation_log[0] == Perturbation('verb', 'speak', 'look')

    def test_speak_role_nouns(self, speak_event):
        record = swap_nouns(
            speak_event, {'talker': 'woman in glasses', 'manner': 'shocked', 'scene': 'in a hotel room'}
        )
        assert record.text == (
            'In this photo, the action is speak where, the talker is woman in glasses, '
            'hearer is woman with scarf, manner is shocked, and scene of the event is in a hotel room.'
        )
        assert record.kind is PromptKind.HN_ROLE_NOUN

    def test_open_to_respond_drops_surplus_role(self, open_event):
        record = swap_verb(open_event, 'respond', RESPOND_ROLES)
        assert record.text == (
            'In this photo, the action is respond where, the replier is man in brown jacket and man in gray suit, '
            'manner is annoyed, and scene of the event is near a taxi.'
        )
        assert Perturbation('role[1]', 'the thing opening', '') in record.perturbation_log

    def test_open_role_nouns(self, open_event):
        record = swap_nouns(
            open_event,
            {'opener': 'the boy and girl', 'the thing opening': 'speedboat', 'manner': 'abruptly'},
        )
        assert record.text == (
            'In this photo, the action is open where, the opener is the boy and girl, '
            'the thing opening is speedboat, manner is abruptly, and scene of the event is near a taxi.'
        )

    def test_bow_to_smash(self, bow_event):
        assert swap_verb(bow_event, 'smash', SMASH_ROLES).text == (
            'In this photo, the action is smash where, the smasher is woman in glasses, '
            'smashed is man wearing black, manner is on her knees, and scene of the event is in a well lit room.'
        )

    def test_bow_role_nouns(self, bow_event):
        record = swap_nouns(
            bow_event,
            {'bower': 'bald man in black shorts', 'bowed to': 'woman in white coat', 'scene': 'living room'},
        )
        assert record.text == (
            'In this photo, the action is bow where, the bower is bald man in black shorts, '
            'bowed to is woman in white coat, manner is on her knees, and scene of the event is living room.'
        )


class TestTemplate:
    '''Grammar edge cases.'''

    def test_single_role(self):
        assert render_template('sit', [RolePair('sitter', 'man')]) == (
            'In this photo, the action is sit where, the sitter is man.'
        )

    def test_two_roles(self):
        text = render_template('sit', [RolePair('sitter', 'man'), RolePair('scene', 'park')])
        assert text == 'In this photo, the action is sit where, the sitter is man, and scene of the event is park.'

    def test_no_roles(self):
        with pytest.raises(TemplateError):
            render_template('sit', [])

    def test_action_and_class_prompts(self, walk_event):
        record = render_action_prompt(walk_event)
        assert record.text == 'In this photo, the action is walk.'
        assert record.kind is PromptKind.ACTION_ONLY
        assert render_class_prompt('walk') == record.text

    def test_natural_style(self, walk_event):
        assert render_event_prompt(walk_event, 'natural') == render_event_prompt(walk_event)
        event = make_event('n', 'sit', [('sitter', 'man')])
        natural = make_event('n', 'sit', [('sitter', 'man')], natural='a man sits')
        assert render_event_prompt(natural, 'natural').text == 'a man sits'
        assert render_event_prompt(event, 'natural').text.startswith('In this photo')

    def test_unknown_style(self, walk_event):
        with pytest.raises(ValidationError):
            render_event_prompt(walk_event, 'poetic')

    def test_parse_inverts_render(self, walk_event, speak_event):
        for event in (walk_event, speak_event):
            verb, pairs = parse_prompt(render_event_prompt(event).text, event.role_names)
            assert verb == event.verb
            assert pairs == [(r.role, r.noun) for r in event.roles]

    def test_parse_rejects_foreign_text(self):
        with pytest.raises(TemplateError):
            parse_prompt('a man walks.', ['walker'])


class TestPromptRecord:
    '''Record invariants.'''

    def test_positive_has_no_log(self):
        with pytest.raises(ValidationError):
            PromptRecord('text', PromptKind.POSITIVE, 'e', (Perturbation('verb', 'a', 'b'),))

    def test_negative_needs_log(self):
        with pytest.raises(ValidationError):
            PromptRecord('text', PromptKind.HN_VERB_ROLE, 'e')

    def test_empty_text(self):
        with pytest.raises(ValidationError):
            PromptRecord('', PromptKind.POSITIVE, 'e')

    def test_to_dict(self, speak_event):
        payload = swap_verb(speak_event, 'look', LOOK_ROLES).to_dict()
        assert payload['kind'] == 'hn_verb_role'
        assert payload['source_event_id'] == 'speak0'
        assert payload['perturbation_log'][0] == ['verb', 'speak', 'look']
