"""Bundled word lists standing in for external NLP resources.

These tables drive the stub annotator (lemma/POS/NER) and the synthetic
corpus generator, so both agree on the same closed vocabulary.
"""

# noun lemma -> (singular, plural)
NOUNS = {
    "boy": ("boy", "boys"),
    "girl": ("girl", "girls"),
    "man": ("man", "men"),
    "woman": ("woman", "women"),
    "child": ("child", "children"),
    "dog": ("dog", "dogs"),
    "cat": ("cat", "cats"),
    "bird": ("bird", "birds"),
    "horse": ("horse", "horses"),
    "doctor": ("doctor", "doctors"),
    "student": ("student", "students"),
    "king": ("king", "kings"),
    "farmer": ("farmer", "farmers"),
    "soldier": ("soldier", "soldiers"),
    "car": ("car", "cars"),
    "book": ("book", "books"),
    "house": ("house", "houses"),
    "ball": ("ball", "balls"),
    "tree": ("tree", "trees"),
    "river": ("river", "rivers"),
    "apple": ("apple", "apples"),
    "letter": ("letter", "letters"),
    "song": ("song", "songs"),
    "garden": ("garden", "gardens"),
    "school": ("school", "schools"),
    "door": ("door", "doors"),
    "window": ("window", "windows"),
    "ship": ("ship", "ships"),
}

ADJECTIVES = ["big", "small", "old", "young", "red", "blue", "happy", "tall", "long", "short", "green", "strong"]

# adverb -> concept label
ADVERBS = {"quickly": "quick", "slowly": "slow", "loudly": "loud", "quietly": "quiet"}

# frame -> (third person singular, past, argument role of the subject, takes object)
VERBS = {
    "see-01": ("sees", "saw", "ARG0", True),
    "like-01": ("likes", "liked", "ARG0", True),
    "chase-01": ("chases", "chased", "ARG0", True),
    "find-01": ("finds", "found", "ARG0", True),
    "help-01": ("helps", "helped", "ARG0", True),
    "visit-01": ("visits", "visited", "ARG0", True),
    "read-01": ("reads", "read", "ARG0", True),
    "open-01": ("opens", "opened", "ARG0", True),
    "carry-01": ("carries", "carried", "ARG0", True),
    "love-01": ("loves", "loved", "ARG0", True),
    "watch-01": ("watches", "watched", "ARG0", True),
    "follow-02": ("follows", "followed", "ARG0", True),
    "go-02": ("goes", "went", "ARG0", False),
    "sleep-01": ("sleeps", "slept", "ARG0", False),
    "run-02": ("runs", "ran", "ARG0", False),
    "sing-01": ("sings", "sang", "ARG0", False),
    "dance-01": ("dances", "danced", "ARG0", False),
    "arrive-01": ("arrives", "arrived", "ARG1", False),
    "laugh-01": ("laughs", "laughed", "ARG0", False),
    "fall-01": ("falls", "fell", "ARG1", False),
}

# bare infinitive for each frame (used after "to", "must", "can", "not")
INFINITIVES = {frame: frame.rsplit("-", 1)[0] for frame in VERBS}

# control verb frame -> (third person singular, past)
CONTROL_VERBS = {"want-01": ("wants", "wanted"), "try-01": ("tries", "tried"), "hope-01": ("hopes", "hoped")}

# modal word -> (frame, role of the embedded event)
MODALS = {"must": ("obligate-01", "ARG2"), "can": ("possible-01", "ARG1")}

PERSON_NAMES = ["John", "Mary", "Anna", "Peter", "Tom", "Lucy", "Paul", "Emma"]
CITY_NAMES = {
    ("New", "York"): "New_York_City",
    ("Paris",): "Paris",
    ("London",): "London",
    ("San", "Francisco"): "San_Francisco",
    ("Los", "Angeles"): "Los_Angeles",
    ("Berlin",): "Berlin",
}

# frame label -> noun used when the frame is folded into thing(...) / person(...)
NOMINALIZATIONS = {
    "opine": "opinion",
    "think": "thought",
    "believe": "belief",
    "decide": "decision",
    "teach": "teacher",
    "lead": "leader",
    "work": "worker",
    "own": "owner",
}

FUNCTION_WORDS = {
    "the": "DT",
    "a": "DT",
    "an": "DT",
    "to": "TO",
    "of": "IN",
    "by": "IN",
    "is": "VBZ",
    "was": "VBD",
    "does": "VBZ",
    "did": "VBD",
    "do": "VBP",
    "not": "RB",
    "and": "CC",
    "must": "MD",
    "can": "MD",
    ".": ".",
}

IRREGULAR_LEMMAS = {
    "men": "man",
    "women": "woman",
    "children": "child",
    "went": "go",
    "goes": "go",
    "saw": "see",
    "found": "find",
    "slept": "sleep",
    "ran": "run",
    "sang": "sing",
    "fell": "fall",
    "is": "be",
    "was": "be",
    "does": "do",
    "did": "do",
    "read": "read",
}


def _build_pos() -> dict[str, str]:
    pos = dict(FUNCTION_WORDS)
    for sg, pl in NOUNS.values():
        pos[sg] = "NN"
        pos[pl] = "NNS"
    for adj in ADJECTIVES:
        pos[adj] = "JJ"
    for adv in ADVERBS:
        pos[adv] = "RB"
    pos["opinion"] = "NN"
    pos["opinions"] = "NNS"
    for frame, (s3, past, *_rest) in VERBS.items():
        pos[INFINITIVES[frame]] = "VB"
        pos[s3] = "VBZ"
        pos.setdefault(past, "VBD")
    for frame, (s3, past) in CONTROL_VERBS.items():
        pos[frame.rsplit("-", 1)[0]] = "VB"
        pos[s3] = "VBZ"
        pos[past] = "VBD"
    return pos


POS_LEXICON = _build_pos()

GAZETTEER = {name: "PERSON" for name in PERSON_NAMES}
for _parts in CITY_NAMES:
    for _tok in _parts:
        GAZETTEER[_tok] = "LOCATION"

KNOWN_LEMMAS = (
    set(NOUNS)
    | set(ADJECTIVES)
    | set(INFINITIVES.values())
    | {f.rsplit("-", 1)[0] for f in CONTROL_VERBS}
    | {"opinion", "be", "do"}
)
