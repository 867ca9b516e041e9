"""Instruction parsing: free-form text -> ordered (workspace, manipulation) steps.

Two backends share one output type. The grammar backend is a fixed,
deterministic rule set; the LLM backend sends a prompt to a pluggable
client and validates the JSON it returns.
"""
from __future__ import annotations

import json
import os
import re
import threading
import unicodedata
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from lovmm.errors import BackendUnavailable, InvalidInstruction, UnparseableInstruction


class Role(str, Enum):
    PICK_SITE = "pick_site"
    PLACE_SITE = "place_site"
    COMBINED = "combined"


@dataclass(frozen=True)
class Instruction:
    text: str
    task_id: str | None = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise InvalidInstruction("instruction text is empty")
        if any(unicodedata.category(ch) == "Cc" for ch in self.text):
            raise InvalidInstruction("instruction contains control characters")


@dataclass(frozen=True)
class ParsedStep:
    workspace_query: str
    manipulation_query: str
    role: Role

    def __post_init__(self):
        if not self.workspace_query or not self.manipulation_query:
            raise ValueError("parsed step queries must be non-empty")
        object.__setattr__(self, "role", Role(self.role))

    def to_dict(self) -> dict:
        return {
            "workspace": self.workspace_query,
            "manipulation": self.manipulation_query,
            "role": self.role.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedStep":
        return cls(d["workspace"], d["manipulation"], Role(d["role"]))


def steps_to_json(steps: list[ParsedStep]) -> str:
    return json.dumps({"steps": [s.to_dict() for s in steps]})


def steps_from_json(text: str) -> list[ParsedStep]:
    return [ParsedStep.from_dict(d) for d in json.loads(text)["steps"]]


def normalize(text: str) -> str:
    """Whitespace/case normalization; nothing else is corrected."""
    text = " ".join(text.split()).lower()
    text = text.strip("\"'“”‘’ ")
    return text.rstrip(".!?;, ")


# ---------------------------------------------------------------------------
# Grammar backend

VERBS = ("pack", "put", "pick", "toss", "take", "stack")

_LOC = r"(?:on|in|from|at)"
_REL = r"(?:in front of|beside|next to|near|behind)"
# No further locative after this point.
_NO_LOC = r"(?!.*\b(?:on|in|at) the\b)(?!.*\b" + _REL + r" the\b)"


@dataclass(frozen=True)
class Rule:
    """One grammar rule: a structure specialised to one lead verb."""

    name: str
    structure: str
    verb: str
    pattern: re.Pattern
    tasks: tuple[str, ...]

    def match(self, text: str):
        return self.pattern.fullmatch(text)


# structure -> (regex body after "<verb> ", Table-5 tasks whose template has this shape)
_STRUCTURES: dict[str, tuple[str, tuple[str, ...]]] = {
    # "<verb> the X on the W"
    "combined": (
        r"(?!.* to the )(?!.* and put )(?P<obj>(?:all )?the .+?) (?P<p1>" + _LOC + r") the (?P<ws1>.+)",
        (),
    ),
    # "<verb> all the X on the W to the D"   (D sits at W)
    "combined_dest": (
        r"(?P<obj>(?:all )?the .+?) (?P<p1>on|in|at) the (?P<ws1>.+?) to the "
        r"(?P<dest>" + _NO_LOC + r".+)",
        ("A", "B"),
    ),
    # "<verb> the X on the W1 to the D on the W2"
    "cross_loc": (
        r"(?P<obj>(?:all )?the .+?) (?P<p1>" + _LOC + r") the (?P<ws1>.+?) to the "
        r"(?P<dest>.+?) (?P<p2>on|in|at) the (?P<ws2>(?!.* to the ).+)",
        ("C", "D", "E", "F", "G", "H", "I", "K"),
    ),
    # "<verb> the X in the W1 to the D in front of the W2"
    "cross_rel": (
        r"(?P<obj>(?:all )?the .+?) (?P<p1>" + _LOC + r") the (?P<ws1>.+?) to the "
        r"(?P<dest>(?!.* (?:on|in|at) the ).+?) (?P<rel>" + _REL + r") the (?P<ws2>.+)",
        ("J", "M", "O"),
    ),
    # "<verb> the X from the W1 to the W2"   (destination is itself a workspace)
    "cross_ws": (
        r"(?P<obj>(?:all )?the .+?) from the (?P<ws1>.+?) to the (?P<ws2>" + _NO_LOC + r".+)",
        ("L",),
    ),
    # "<verb> the X from the W1 and put it on the D on the W2"
    "cross_and_put": (
        r"(?P<obj>(?:all )?the .+?) (?P<p1>" + _LOC + r") the (?P<ws1>.+?) and put (?:it|them) on the "
        r"(?P<dest>.+?) (?P<p2>on|in|at) the (?P<ws2>.+)",
        ("N", "P"),
    ),
}


def _build_rules() -> list[Rule]:
    rules = []
    for structure, (body, tasks) in _STRUCTURES.items():
        for verb in VERBS:
            pat = re.compile(rf"(?P<verb>{verb})(?: up)? " + body)
            rules.append(Rule(f"{structure}/{verb}", structure, verb, pat, tasks))
    return rules


_RULES = _build_rules()


def grammar_rules() -> list[Rule]:
    return list(_RULES)


def matching_rules(text: str) -> list[Rule]:
    text = normalize(text)
    return [r for r in _RULES if r.match(text)]


def _steps_from_match(rule: Rule, m: re.Match) -> list[ParsedStep]:
    g = m.groupdict()
    verb, obj = g["verb"], g["obj"]
    ws1 = "the " + g["ws1"]
    s = rule.structure
    if s == "combined":
        return [ParsedStep(ws1, f"{verb} {obj}", Role.COMBINED)]
    if s == "combined_dest":
        return [ParsedStep(ws1, f"{verb} {obj} to the {g['dest']}", Role.COMBINED)]
    if s == "cross_ws":
        manip = f"{verb} {obj}"
        ws2 = "the " + g["ws2"]
    elif s == "cross_and_put":
        manip = f"{verb} {obj} and put it on the {g['dest']}"
        ws2 = "the " + g["ws2"]
    elif s == "cross_rel":
        manip = f"{verb} {obj} to the {g['dest']}"
        ws2 = f"{g['rel']} the {g['ws2']}"
    else:
        manip = f"{verb} {obj} to the {g['dest']}"
        ws2 = "the " + g["ws2"]
    return [
        ParsedStep(ws1, manip, Role.PICK_SITE),
        ParsedStep(ws2, manip, Role.PLACE_SITE),
    ]


def parse_grammar(text: str) -> list[ParsedStep]:
    norm = normalize(text)
    if not norm:
        raise UnparseableInstruction("empty instruction")
    for rule in _RULES:
        m = rule.match(norm)
        if m is not None:
            return _steps_from_match(rule, m)
    raise UnparseableInstruction(f"no grammar rule matches: {text!r}")


# ---------------------------------------------------------------------------
# LLM backend

PROMPT_TEMPLATE = """You are the instruction parser of a mobile manipulation robot.
Split the instruction into navigation + manipulation steps.

Return ONLY a JSON object of the form
{{"steps": [{{"workspace": "<where to go>", "manipulation": "<what to do there>", "role": "<role>"}}]}}
where "role" is exactly one of "pick_site", "place_site", "combined".
Use one "combined" step when picking and placing happen at the same workspace;
otherwise emit a "pick_site" step followed by a "place_site" step.
Copy object, color and shape words verbatim from the instruction.

Instruction: {instruction}
"""


def llm_prompt(instruction: Instruction | str, template: str = PROMPT_TEMPLATE) -> str:
    text = instruction.text if isinstance(instruction, Instruction) else Instruction(instruction).text
    return template.format(instruction=text.strip())


class LLMClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class HTTPLLMClient:
    """POSTs ``{"prompt": ...}`` to an endpoint; stateless, so safe to share across threads.

    Accepts either ``{"text": ...}`` or an OpenAI-style ``choices`` reply.
    """

    def __init__(self, endpoint: str, key: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.key = key
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> "HTTPLLMClient":
        endpoint = os.environ.get("LOVMM_LLM_ENDPOINT")
        if not endpoint:
            raise BackendUnavailable("LOVMM_LLM_ENDPOINT is not set")
        return cls(endpoint, os.environ.get("LOVMM_LLM_KEY"))

    def complete(self, prompt: str) -> str:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if self.key:
            req.add_header("Authorization", f"Bearer {self.key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise BackendUnavailable(f"LLM endpoint failed: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UnparseableInstruction(f"LLM endpoint returned non-JSON body: {exc}") from exc
        if "text" in payload:
            return payload["text"]
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise UnparseableInstruction("unrecognised LLM response envelope") from exc


class RecordedLLMClient:
    """Replays canned replies keyed by instruction text (falls back to the full prompt)."""

    def __init__(self, replies: dict[str, str]):
        self.replies = dict(replies)
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls.append(prompt)
        if prompt in self.replies:
            return self.replies[prompt]
        m = re.search(r"^Instruction: (.*)$", prompt, flags=re.M)
        if m and m.group(1) in self.replies:
            return self.replies[m.group(1)]
        raise BackendUnavailable("no recorded reply for prompt")


def parse_llm_reply(reply: str) -> list[ParsedStep]:
    start, end = reply.find("{"), reply.rfind("}")
    if start < 0 or end <= start:
        raise UnparseableInstruction("LLM reply contains no JSON object")
    try:
        data = json.loads(reply[start:end + 1])
        steps = [ParsedStep.from_dict(s) for s in data["steps"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UnparseableInstruction(f"malformed LLM reply: {exc}") from exc
    if not steps:
        raise UnparseableInstruction("LLM reply has no steps")
    roles = [s.role for s in steps]
    if roles not in ([Role.COMBINED], [Role.PICK_SITE, Role.PLACE_SITE]):
        raise UnparseableInstruction(f"unsupported role sequence {[r.value for r in roles]}")
    return steps


# ---------------------------------------------------------------------------


@dataclass
class ParserBackend:
    kind: str = "grammar"  # "grammar" | "llm_client"
    prompt_template: str = PROMPT_TEMPLATE
    endpoint: dict = field(default_factory=dict)
    client: LLMClient | None = None

    def get_client(self) -> LLMClient:
        if self.client is not None:
            return self.client
        if self.endpoint.get("url"):
            return HTTPLLMClient(self.endpoint["url"], self.endpoint.get("key"))
        return HTTPLLMClient.from_env()


GRAMMAR = ParserBackend("grammar")


def parse(instruction: Instruction | str, backend: ParserBackend | None = None) -> list[ParsedStep]:
    """Parse an instruction into one combined step or a pick_site/place_site pair.

    Raises:
        UnparseableInstruction: no rule matched or the LLM reply was malformed.
        BackendUnavailable: the LLM endpoint could not be reached; callers may
            retry with the grammar backend.
    """
    if not isinstance(instruction, Instruction):
        instruction = Instruction(instruction)
    backend = backend or GRAMMAR
    if backend.kind == "grammar":
        return parse_grammar(instruction.text)
    if backend.kind == "llm_client":
        prompt = llm_prompt(instruction, backend.prompt_template)
        return parse_llm_reply(backend.get_client().complete(prompt))
    raise ValueError(f"unknown parser backend {backend.kind!r}")


def parse_with_fallback(instruction, backend: ParserBackend | None = None) -> list[ParsedStep]:
    try:
        return parse(instruction, backend)
    except BackendUnavailable:
        return parse(instruction, GRAMMAR)
