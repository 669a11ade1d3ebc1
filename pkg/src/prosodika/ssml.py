"""SSML subset: document model, deterministic emitter, parser, validator.

The subset covers what the annotation pipeline emits and what scoring needs
to read back: prosody elements with signed percent attributes, self-closing
breaks with millisecond times, the mstts:silence directives that suppress
engine-inserted pauses, and text. Unknown elements are preserved as opaque
nodes so third-party SSML can still be scored. speak/voice envelopes are
unwrapped transparently; their language and voice attributes are kept on the
document.

Serialization is single-line and deterministic: percent attributes are signed
with two decimals, break times are integer milliseconds, text whitespace is
normalized. parse(emit(doc)) is structurally identical for documents whose
percent values are two-decimal quantized, and emit(parse(s)) is byte-identical
for canonical (emitter-produced) inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from .prosody import PipelineConfig, ProsodyDelta

DEFAULT_LANG = "fr-FR"
DEFAULT_VOICE = "fr-FR-HenriNeural"

SPEAK_XMLNS = "http://www.w3.org/2001/10/synthesis"
MSTTS_XMLNS = "https://www.w3.org/2001/mstts"

LEADING_EXACT = "leading-exact"
TRAILING_EXACT = "trailing-exact"

# formatting quantization allowance on range checks: two-decimal rendering
# may round a value by up to half a unit in the last place
_QUANT_EPS = 0.005 + 1e-9


class SsmlParseError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


class SsmlValidationError(Exception):
    def __init__(self, violations: list["Violation"]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class TextNode:
    content: str

    def __post_init__(self):
        if not self.content.strip():
            raise ValueError("text nodes must be non-empty after trimming")


@dataclass(frozen=True)
class BreakElement:
    time_ms: int

    def __post_init__(self):
        if self.time_ms < 0:
            raise ValueError(f"negative break time {self.time_ms}")


@dataclass(frozen=True)
class SilenceDirective:
    position: str
    value_ms: int

    def __post_init__(self):
        if self.position not in (LEADING_EXACT, TRAILING_EXACT):
            raise ValueError(f"unknown silence position {self.position!r}")
        if self.value_ms < 0:
            raise ValueError(f"negative silence value {self.value_ms}")


@dataclass(frozen=True)
class ProsodyElement:
    pitch_pct: float | None = None
    rate_pct: float | None = None
    volume_pct: float | None = None
    children: tuple = ()
    extra_attrs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class OpaqueElement:
    """Element outside the subset, kept verbatim for re-emission."""

    tag: str
    attrs: tuple[tuple[str, str], ...] = ()
    children: tuple = ()


Node = TextNode | BreakElement | SilenceDirective | ProsodyElement | OpaqueElement


@dataclass(frozen=True)
class SsmlDocument:
    segments: tuple[tuple[Node, ...], ...]
    lang: str | None = None
    voice: str | None = None


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.message}"


@dataclass(frozen=True)
class EmitOptions:
    azure_silence_wrap: bool = False
    full_document: bool = False
    suppress_neutral: bool = False
    lang: str = DEFAULT_LANG
    voice: str = DEFAULT_VOICE
    config: PipelineConfig = field(default_factory=PipelineConfig)


def _quantize(value: float) -> float:
    q = round(value, 2)
    return 0.0 if q == 0.0 else q  # normalize -0.0


def _fmt_pct(value: float) -> str:
    return f"{value:+.2f}%"


def _norm_text(text: str) -> str:
    return " ".join(text.split())


def build_segment_nodes(
    syntagms: list[tuple[str, ProsodyDelta]], options: EmitOptions
) -> tuple[Node, ...]:
    """Node sequence for one segment: one prosody element per syntagm plus
    its trailing break, optionally bracketed by silence directives."""
    nodes: list[Node] = []
    for text, delta in syntagms:
        content = _norm_text(text)
        if not content:
            raise ValueError("syntagm text must be non-empty")
        pitch = _quantize(delta.pitch_pct)
        rate = _quantize(delta.rate_pct)
        volume = _quantize(delta.volume_pct)
        neutral = pitch == 0.0 and rate == 0.0 and volume == 0.0
        if options.suppress_neutral and neutral:
            nodes.append(TextNode(content))
        else:
            if options.azure_silence_wrap:
                nodes.append(SilenceDirective(LEADING_EXACT, 0))
            nodes.append(
                ProsodyElement(pitch, rate, volume, children=(TextNode(content),))
            )
            if options.azure_silence_wrap:
                nodes.append(SilenceDirective(TRAILING_EXACT, 0))
        break_ms = int(delta.break_ms)
        if not (options.suppress_neutral and break_ms == 0):
            nodes.append(BreakElement(break_ms))
    return tuple(nodes)


def emit(syntagms: list[tuple[str, ProsodyDelta]], options: EmitOptions = EmitOptions()) -> str:
    """Serialize annotated syntagms to SSML markup.

    Deltas outside the configured clip ranges make this refuse to emit with
    SsmlValidationError.
    """
    nodes = build_segment_nodes(syntagms, options)
    doc = SsmlDocument(
        segments=(nodes,),
        lang=options.lang if options.full_document else None,
        voice=options.voice if options.full_document else None,
    )
    violations = validate(doc, options.config)
    if violations:
        raise SsmlValidationError(violations)
    return _render_segment(nodes, options)


def emit_document(doc: SsmlDocument, options: EmitOptions = EmitOptions()) -> str:
    """Render a parsed document, one segment per line."""
    opts = options
    if doc.lang or doc.voice:
        opts = EmitOptions(
            azure_silence_wrap=options.azure_silence_wrap,
            full_document=True,
            suppress_neutral=options.suppress_neutral,
            lang=doc.lang or options.lang,
            voice=doc.voice or options.voice,
            config=options.config,
        )
    return "\n".join(_render_segment(seg, opts) for seg in doc.segments)


def _render_segment(nodes: tuple[Node, ...], options: EmitOptions) -> str:
    body = "".join(_render_node(n) for n in nodes)
    if not options.full_document:
        return body
    return (
        f'<speak version="1.0" xmlns="{SPEAK_XMLNS}" xmlns:mstts="{MSTTS_XMLNS}" '
        f'xml:lang="{options.lang}">'
        f'<voice name="{escape(options.voice, {chr(34): "&quot;"})}">{body}</voice></speak>'
    )


def _render_node(node: Node) -> str:
    if isinstance(node, TextNode):
        return escape(node.content, {'"': "&quot;"})
    if isinstance(node, BreakElement):
        return f'<break time="{node.time_ms}ms"/>'
    if isinstance(node, SilenceDirective):
        return f'<mstts:silence type="{node.position}" value="{node.value_ms}"/>'
    if isinstance(node, ProsodyElement):
        attrs = []
        for name, value in (
            ("pitch", node.pitch_pct),
            ("rate", node.rate_pct),
            ("volume", node.volume_pct),
        ):
            if value is not None:
                attrs.append(f'{name}="{_fmt_pct(value)}"')
        attrs.extend(f"{k}={quoteattr(v)}" for k, v in node.extra_attrs)
        inner = "".join(_render_node(c) for c in node.children)
        head = "<prosody " + " ".join(attrs) if attrs else "<prosody"
        return f"{head}>{inner}</prosody>"
    if isinstance(node, OpaqueElement):
        attrs = "".join(f" {k}={quoteattr(v)}" for k, v in node.attrs)
        if not node.children:
            return f"<{node.tag}{attrs}/>"
        inner = "".join(_render_node(c) for c in node.children)
        return f"<{node.tag}{attrs}>{inner}</{node.tag}>"
    raise TypeError(f"not an SSML node: {node!r}")


_PCT_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?)%$")
_TIME_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?)(ms|s)$")
_BARE_MS_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?)(ms|s)?$")


def _parse_pct(name: str, raw: str, offset: int) -> float:
    m = _PCT_RE.match(raw.strip())
    if not m:
        if re.match(r"^[+-]?\d+(\.\d+)?$", raw.strip()):
            raise SsmlParseError(f"{name} value {raw!r} is missing the % suffix", offset)
        raise SsmlParseError(f"non-numeric {name} value {raw!r}", offset)
    return float(m.group(1))


def _parse_time_ms(raw: str, offset: int) -> int:
    m = _TIME_RE.match(raw.strip())
    if not m:
        if re.match(r"^[+-]?\d+(\.\d+)?$", raw.strip()):
            raise SsmlParseError(f"break time {raw!r} is missing its ms/s unit", offset)
        raise SsmlParseError(f"non-numeric break time {raw!r}", offset)
    value = float(m.group(1))
    ms = value * 1000.0 if m.group(2) == "s" else value
    if ms < 0:
        raise SsmlParseError(f"negative break time {raw!r}", offset)
    return int(round(ms))


def _parse_silence_ms(raw: str, offset: int) -> int:
    m = _BARE_MS_RE.match(raw.strip())
    if not m:
        raise SsmlParseError(f"non-numeric silence value {raw!r}", offset)
    value = float(m.group(1))
    ms = value * 1000.0 if m.group(2) == "s" else value
    if ms < 0:
        raise SsmlParseError(f"negative silence value {raw!r}", offset)
    return int(round(ms))


class _Frame:
    __slots__ = ("tag", "attrs", "children", "offset")

    def __init__(self, tag: str, attrs: list[str], offset: int):
        self.tag = tag
        self.attrs = attrs  # expat ordered list [k1, v1, k2, v2, ...]
        self.children: list[Node] = []
        self.offset = offset


_XML_DECL_RE = re.compile(r"^\s*<\?xml[^>]*\?>\s*")


class _Parser:
    def __init__(self, text: str):
        decl = _XML_DECL_RE.match(text)
        self.base = decl.end() if decl else 0
        self.body = text[self.base :]
        self.wrapper = "<__root__>"
        self.raw = f"{self.wrapper}{self.body}</__root__>"
        self.raw_bytes = self.raw.encode("utf-8")
        self.stack = [_Frame("__root__", [], 0)]
        self.text_buf: list[str] = []
        self.lang: str | None = None
        self.voice: str | None = None
        self.parser = expat.ParserCreate()
        self.parser.ordered_attributes = True
        self.parser.StartElementHandler = self._start
        self.parser.EndElementHandler = self._end
        self.parser.CharacterDataHandler = self._cdata

    def _offset(self) -> int:
        byte_idx = max(0, self.parser.CurrentByteIndex)
        prefix = self.raw_bytes[:byte_idx].decode("utf-8", errors="ignore")
        return max(0, len(prefix) - len(self.wrapper)) + self.base

    def _flush_text(self):
        if not self.text_buf:
            return
        joined = "".join(self.text_buf)
        self.text_buf = []
        norm = _norm_text(joined)
        if norm:
            self.stack[-1].children.append(TextNode(norm))

    def _start(self, tag: str, attrs: list[str]):
        self._flush_text()
        self.stack.append(_Frame(tag, attrs, self._offset()))

    def _cdata(self, data: str):
        self.text_buf.append(data)

    def _end(self, tag: str):
        self._flush_text()
        frame = self.stack.pop()
        pairs = [(frame.attrs[i], frame.attrs[i + 1]) for i in range(0, len(frame.attrs), 2)]
        attrs = dict(pairs)
        node: Node | None = None
        if tag == "__root__":
            self.stack[-1].children.extend(frame.children)
        elif tag == "speak":
            self.lang = attrs.get("xml:lang", self.lang)
            self.stack[-1].children.extend(frame.children)
        elif tag == "voice":
            self.voice = attrs.get("name", self.voice)
            self.stack[-1].children.extend(frame.children)
        elif tag == "prosody":
            known = {}
            extras = []
            for key, value in pairs:
                if key in ("pitch", "rate", "volume"):
                    known[key] = _parse_pct(key, value, frame.offset)
                else:
                    extras.append((key, value))
            node = ProsodyElement(
                pitch_pct=known.get("pitch"),
                rate_pct=known.get("rate"),
                volume_pct=known.get("volume"),
                children=tuple(frame.children),
                extra_attrs=tuple(extras),
            )
        elif tag == "break":
            if "time" not in attrs:
                raise SsmlParseError("break element is missing its time attribute", frame.offset)
            node = BreakElement(_parse_time_ms(attrs["time"], frame.offset))
        elif tag == "mstts:silence" and attrs.get("type") in (LEADING_EXACT, TRAILING_EXACT):
            node = SilenceDirective(
                attrs["type"], _parse_silence_ms(attrs.get("value", "0"), frame.offset)
            )
        else:
            node = OpaqueElement(tag, tuple(pairs), tuple(frame.children))
        if node is not None:
            self.stack[-1].children.append(node)

    def run(self) -> tuple[tuple[Node, ...], str | None, str | None]:
        try:
            self.parser.Parse(self.raw_bytes, True)
        except expat.ExpatError as exc:
            byte_idx = getattr(self.parser, "ErrorByteIndex", 0) or 0
            prefix = self.raw_bytes[:byte_idx].decode("utf-8", errors="ignore")
            offset = max(0, len(prefix) - len(self.wrapper)) + self.base
            raise SsmlParseError(f"malformed XML: {expat.errors.messages[exc.code]}",
                                 offset) from None
        self._flush_text()
        return tuple(self.stack[0].children), self.lang, self.voice


def parse(text: str) -> SsmlDocument:
    """Parse one SSML fragment or document into a single-segment document."""
    nodes, lang, voice = _Parser(text).run()
    return SsmlDocument(segments=(nodes,), lang=lang, voice=voice)


def parse_corpus(text: str) -> SsmlDocument:
    """Parse a corpus file: one SSML fragment or document per non-blank line,
    each line becoming one segment."""
    segments: list[tuple[Node, ...]] = []
    lang = voice = None
    for line in text.splitlines():
        if not line.strip():
            continue
        nodes, seg_lang, seg_voice = _Parser(line).run()
        segments.append(nodes)
        lang = lang or seg_lang
        voice = voice or seg_voice
    return SsmlDocument(segments=tuple(segments), lang=lang, voice=voice)


def validate(doc: SsmlDocument, cfg: PipelineConfig = PipelineConfig()) -> list[Violation]:
    """Structural and range checks; empty list means the document is clean.

    Range checks allow half a formatting quantum (0.005) past the configured
    clip bounds so two-decimal serialized values never flag falsely.
    """
    violations: list[Violation] = []
    pitch_lo, pitch_hi = cfg.pitch_bounds_pct()

    def check_prosody(node: ProsodyElement, path: str):
        bounds = {
            "pitch": (node.pitch_pct, pitch_lo, pitch_hi),
            "rate": (node.rate_pct, -cfg.rate_clip_pct, 0.5 * cfg.rate_clip_pct),
            "volume": (node.volume_pct, -cfg.volume_clip_pct, cfg.volume_clip_pct),
        }
        for name, (value, lo, hi) in bounds.items():
            if value is None:
                continue
            if not (lo - _QUANT_EPS <= value <= hi + _QUANT_EPS):
                violations.append(
                    Violation(
                        path,
                        f"{name}-out-of-range",
                        f"{name}={value:+.2f}% outside [{lo:.2f}, {hi:.2f}]",
                    )
                )

    def walk(nodes: tuple[Node, ...], path: str, inside_prosody: bool):
        for i, node in enumerate(nodes):
            if isinstance(node, TextNode):
                if not node.content.strip():
                    violations.append(Violation(f"{path}/text[{i}]", "empty-text",
                                                "blank text node"))
            elif isinstance(node, BreakElement):
                if node.time_ms < 0:
                    violations.append(Violation(f"{path}/break[{i}]", "negative-break",
                                                f"time {node.time_ms} ms"))
            elif isinstance(node, SilenceDirective):
                if node.position not in (LEADING_EXACT, TRAILING_EXACT) or node.value_ms < 0:
                    violations.append(Violation(f"{path}/silence[{i}]", "bad-silence-directive",
                                                f"{node.position} value {node.value_ms}"))
            elif isinstance(node, ProsodyElement):
                sub = f"{path}/prosody[{i}]"
                if inside_prosody:
                    violations.append(Violation(sub, "nested-prosody",
                                                "prosody element inside prosody"))
                check_prosody(node, sub)
                walk(node.children, sub, True)
            elif isinstance(node, OpaqueElement):
                walk(node.children, f"{path}/{node.tag}[{i}]", inside_prosody)

    for si, seg in enumerate(doc.segments):
        walk(seg, f"segments[{si}]", False)
    return violations
