"""Rule-based chatbot: canonical-phrase intent matching plus keyword
entity extraction.

An utterance is first canonicalized (lowercased, punctuation stripped,
known surface phrases collapsed into `$keyword` slots, e.g. "A/C" into
"$thermostat"), then matched token-for-token against a trained phrase
table. Matching is deterministic; anything untrained comes back as the
`unknown` action rather than an error. The table ships as a data file and
can be replaced without touching code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

FALLBACK_RESPONSE = "Sorry, I did not understand that."

_NUMBER_RE = re.compile(r"^-?\d+(\.\d+)?$")
_PLACEHOLDER_RE = re.compile(r"\$\w+")

# Surface phrases understood out of the box; service config appends its
# room and device synonyms on top of these.
BUILTIN_ENTITIES: list[tuple[str, str, str]] = [
    ("thermostat", "$thermostat", "device"),
    ("a/c", "$thermostat", "device"),
    ("air conditioner", "$thermostat", "device"),
    ("air conditioning", "$thermostat", "device"),
    ("light", "$light", "device"),
    ("lights", "$light", "device"),
    ("lamp", "$light", "device"),
    ("lounge", "$Room1", "room"),
    ("living room", "$Room1", "room"),
    ("sitting room", "$Room1", "room"),
]


class ChatAction(str, Enum):
    GET_TEMPERATURE = "get_temperature"
    GET_HUMIDITY = "get_humidity"
    GET_LIGHT_STATE = "get_light_state"
    SET_LIGHT = "set_light"
    SET_THERMOSTAT = "set_thermostat"
    LIST_ROOMS = "list_rooms"
    UNKNOWN = "unknown"
    CLARIFY_ROOM = "clarify_room"


class AccessClass(str, Enum):
    READ = "read"
    WRITE = "write"
    NONE = "none"


ACTION_ACCESS = {
    ChatAction.GET_TEMPERATURE: AccessClass.READ,
    ChatAction.GET_HUMIDITY: AccessClass.READ,
    ChatAction.GET_LIGHT_STATE: AccessClass.READ,
    ChatAction.SET_LIGHT: AccessClass.WRITE,
    ChatAction.SET_THERMOSTAT: AccessClass.WRITE,
    ChatAction.LIST_ROOMS: AccessClass.NONE,
    ChatAction.UNKNOWN: AccessClass.NONE,
    ChatAction.CLARIFY_ROOM: AccessClass.NONE,
}


@dataclass(frozen=True)
class ChatIntent:
    action: ChatAction
    entities: dict = field(default_factory=dict)
    access_class: AccessClass = AccessClass.NONE
    response_template: Optional[str] = None


def _normalize_token(token: str) -> str:
    if token.startswith("$"):
        # keyword slots keep their case so canonical text is a fixed point
        return "$" + "".join(ch for ch in token[1:] if ch.isalnum())
    token = token.lower()
    token = "".join(ch for ch in token if ch.isalnum() or ch in "$.")
    return token.strip(".")


def _normalize_phrase(phrase: str) -> tuple[str, ...]:
    return tuple(t for t in (_normalize_token(p) for p in phrase.split()) if t)


class EntityLexicon:
    """Case-insensitive map from surface phrases to `$keyword` slots, with
    a category per keyword (room, device, ...) used by pattern slots."""

    def __init__(self, entries: Iterable[tuple[str, str, str]]) -> None:
        self._phrases: dict[tuple[str, ...], str] = {}
        self._keyword_category: dict[str, str] = {}
        self.max_phrase_len = 1
        for phrase, keyword, category in entries:
            if not keyword.startswith("$"):
                raise ValueError(f"keyword slot must start with '$': {keyword!r}")
            tokens = _normalize_phrase(phrase)
            if not tokens:
                raise ValueError(f"unusable surface phrase: {phrase!r}")
            self._phrases[tokens] = keyword
            self._keyword_category[keyword] = category
            self.max_phrase_len = max(self.max_phrase_len, len(tokens))
        self.categories = set(self._keyword_category.values())

    @classmethod
    def default(cls) -> "EntityLexicon":
        return cls(BUILTIN_ENTITIES)

    @classmethod
    def with_rooms(cls, rooms: dict[str, list[str]],
                   extra_devices: Optional[dict[str, list[str]]] = None
                   ) -> "EntityLexicon":
        """Built-ins plus configured room (and device) synonym groups."""
        entries = list(BUILTIN_ENTITIES)
        for keyword, phrases in rooms.items():
            entries.extend((p, keyword, "room") for p in phrases)
        for keyword, phrases in (extra_devices or {}).items():
            entries.extend((p, keyword, "device") for p in phrases)
        return cls(entries)

    def lookup(self, tokens: tuple[str, ...]) -> Optional[str]:
        return self._phrases.get(tokens)

    def category_of(self, keyword: str) -> Optional[str]:
        return self._keyword_category.get(keyword)

    def keywords(self, category: str) -> list[str]:
        return sorted(k for k, c in self._keyword_category.items()
                      if c == category)


def canonicalize(utterance: str, lexicon: Optional[EntityLexicon] = None) -> str:
    """Normalize an utterance to its canonical phrase.

    Lowercases, strips punctuation and replaces every known surface phrase
    (longest match first) with its keyword slot. Idempotent: canonical
    text canonicalizes to itself.
    """
    lexicon = lexicon or EntityLexicon.default()
    tokens = [t for t in (_normalize_token(tok) for tok in utterance.split()) if t]
    out: list[str] = []
    i = 0
    while i < len(tokens):
        replaced = False
        for n in range(min(lexicon.max_phrase_len, len(tokens) - i), 0, -1):
            keyword = lexicon.lookup(tuple(tokens[i:i + n]))
            if keyword is not None:
                out.append(keyword)
                i += n
                replaced = True
                break
        if not replaced:
            out.append(tokens[i])
            i += 1
    return " ".join(out)


@dataclass(frozen=True)
class TableRow:
    pattern: tuple[str, ...]
    action: ChatAction
    template: str


class TrainedTable:
    """Phrase patterns with their actions and response templates.

    File format: UTF-8, one record per line, `pattern TAB action TAB
    response-template`. `$slot` tokens in a pattern bind entities; blank
    lines and lines starting with '#' are skipped.
    """

    def __init__(self, rows: Iterable[TableRow]) -> None:
        self.rows = list(rows)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TrainedTable":
        rows = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"line {lineno}: expected 'pattern<TAB>action<TAB>response'")
            pattern, action, template = parts
            rows.append(TableRow(pattern=tuple(pattern.split()),
                                 action=ChatAction(action.strip()),
                                 template=template))
        return cls(rows)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrainedTable":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_lines(f)

    @classmethod
    def default(cls) -> "TrainedTable":
        text = resources.files("hearth").joinpath("data/chat_table.tsv").read_text("utf-8")
        return cls.from_lines(text.splitlines())


def _match_pattern(pattern: tuple[str, ...], tokens: list[str],
                   lexicon: EntityLexicon) -> Optional[dict]:
    if len(pattern) != len(tokens):
        return None
    bindings: dict[str, str] = {}
    for p, t in zip(pattern, tokens):
        if p.startswith("$"):
            slot = p[1:]
            if slot in lexicon.categories:
                if lexicon.category_of(t) == slot:
                    bindings[p] = t
                    continue
                return None
            if p == "$state":
                if t in ("on", "off"):
                    bindings[p] = t
                    continue
                return None
            if p == "$number":
                if _NUMBER_RE.match(t):
                    bindings[p] = t
                    continue
                return None
            # not a slot class: a literal keyword such as $thermostat
            if p == t:
                continue
            return None
        if p != t:
            return None
    return bindings


def format_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


class Chatbot:
    """Immutable lexicon + table pair; safe for concurrent use."""

    def __init__(self, lexicon: Optional[EntityLexicon] = None,
                 table: Optional[TrainedTable] = None) -> None:
        self.lexicon = lexicon or EntityLexicon.default()
        self.table = table or TrainedTable.default()

    def canonicalize(self, utterance: str) -> str:
        return canonicalize(utterance, self.lexicon)

    def interpret(self, utterance: str) -> ChatIntent:
        """Map an utterance to its intent; untrained phrases are `unknown`."""
        tokens = self.canonicalize(utterance).split()
        for row in self.table.rows:
            bindings = _match_pattern(row.pattern, tokens, self.lexicon)
            if bindings is not None:
                return ChatIntent(action=row.action, entities=bindings,
                                  access_class=ACTION_ACCESS[row.action],
                                  response_template=row.template)
        return ChatIntent(action=ChatAction.UNKNOWN,
                          access_class=AccessClass.NONE)

    def respond(self, intent: ChatIntent, data=None) -> str:
        """Fill the trained response template for this intent.

        `data` carries the device answer for get/set intents (a reading
        value or acknowledgment value) or the room list for list_rooms.
        """
        if intent.action is ChatAction.UNKNOWN:
            return FALLBACK_RESPONSE
        template = intent.response_template or self._template_for(intent.action)
        values = dict(intent.entities)
        if intent.action is ChatAction.GET_TEMPERATURE:
            values["$temperature"] = format_value(data)
        elif intent.action is ChatAction.GET_HUMIDITY:
            values["$humidity"] = format_value(data)
        elif intent.action is ChatAction.GET_LIGHT_STATE:
            values["$state"] = format_value(data)
        elif intent.action is ChatAction.SET_THERMOSTAT and data is not None:
            values["$number"] = format_value(data)
        elif intent.action is ChatAction.SET_LIGHT and data is not None:
            values["$state"] = format_value(data)
        elif intent.action is ChatAction.LIST_ROOMS:
            rooms = data if data is not None else self.lexicon.keywords("room")
            values["$rooms"] = ", ".join(rooms)
        return _PLACEHOLDER_RE.sub(
            lambda m: values.get(m.group(0), m.group(0)), template)

    def _template_for(self, action: ChatAction) -> str:
        for row in self.table.rows:
            if row.action is action:
                return row.template
        return FALLBACK_RESPONSE
