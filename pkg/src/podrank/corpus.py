"""Episode ingestion and fixed-window transcript segmentation.

Episodes arrive as line-delimited JSON records. Each transcript is split
into fixed-duration windows (two minutes by default) starting every
``stride_s`` seconds; a word belongs to every window whose time span
contains its start time. Words without timestamps get synthetic ones from a
constant words-per-minute rate, so plain-text corpora segment the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import CorpusError, DuplicateIdError

# Nominal length of a word whose end time does not exceed its start time,
# so that episode duration strictly exceeds every word start.
_ZERO_LENGTH_WORD_S = 1e-9


@dataclass(frozen=True)
class TranscriptWord:
    text: str
    start_s: float | None = None
    end_s: float | None = None


@dataclass
class Episode:
    episode_id: str
    show_name: str
    title: str
    description: str
    transcript: list[TranscriptWord] = field(default_factory=list)


@dataclass(frozen=True)
class Segment:
    segment_id: str
    episode_id: str
    start_s: float
    text: str


@dataclass(frozen=True)
class Query:
    qid: str
    query: str
    description: str


@dataclass(frozen=True)
class SegmentationConfig:
    window_s: float = 120.0
    stride_s: float = 60.0
    words_per_minute: float = 150.0

    def __post_init__(self):
        if not 0 < self.stride_s <= self.window_s:
            raise ValueError(
                f"require 0 < stride_s <= window_s, got stride={self.stride_s} window={self.window_s}"
            )
        if self.words_per_minute <= 0:
            raise ValueError("words_per_minute must be positive")


def _require(record: dict, key: str, kind: type, line_no: int):
    if key not in record:
        raise CorpusError(f"line {line_no}: missing field '{key}'", line_no)
    value = record[key]
    if not isinstance(value, kind):
        raise CorpusError(
            f"line {line_no}: field '{key}' must be {kind.__name__}, got {type(value).__name__}",
            line_no,
        )
    return value


def _parse_word(raw: dict, line_no: int, position: int) -> TranscriptWord:
    if not isinstance(raw, dict):
        raise CorpusError(f"line {line_no}: transcript entry {position} is not an object", line_no)
    text = raw.get("text")
    if not isinstance(text, str):
        raise CorpusError(f"line {line_no}: transcript entry {position} needs a string 'text'", line_no)
    start = raw.get("start_s")
    end = raw.get("end_s")
    if (start is None) != (end is None):
        raise CorpusError(
            f"line {line_no}: transcript entry {position} has only one of start_s/end_s", line_no
        )
    if start is not None:
        if not isinstance(start, (int, float)) or not isinstance(end, (int, float)):
            raise CorpusError(
                f"line {line_no}: transcript entry {position} timestamps must be numbers", line_no
            )
        if start < 0:
            raise CorpusError(
                f"line {line_no}: transcript entry {position} has negative start_s", line_no
            )
        if end < start:
            raise CorpusError(
                f"line {line_no}: transcript entry {position} has end_s < start_s", line_no
            )
        return TranscriptWord(text=text, start_s=float(start), end_s=float(end))
    return TranscriptWord(text=text)


def parse_episode_record(line: str, line_no: int) -> Episode:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})", line_no) from exc
    if not isinstance(record, dict):
        raise CorpusError(f"line {line_no}: record is not an object", line_no)

    episode_id = _require(record, "episode_id", str, line_no)
    if not episode_id:
        raise CorpusError(f"line {line_no}: empty episode_id", line_no)
    show_name = _require(record, "show_name", str, line_no)
    title = _require(record, "title", str, line_no)
    description = _require(record, "description", str, line_no)
    transcript_raw = _require(record, "transcript", list, line_no)

    words = [_parse_word(w, line_no, i) for i, w in enumerate(transcript_raw)]
    timestamped = [w for w in words if w.start_s is not None]
    if timestamped and len(timestamped) != len(words):
        raise CorpusError(
            f"line {line_no}: transcript mixes timestamped and untimestamped words", line_no
        )
    starts = [w.start_s for w in timestamped]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise CorpusError(f"line {line_no}: transcript start times decrease", line_no)

    return Episode(
        episode_id=episode_id,
        show_name=show_name,
        title=title,
        description=description,
        transcript=words,
    )


def parse_corpus(record_stream: Iterable[str]) -> list[Episode]:
    """Parse line-delimited episode records, rejecting duplicate ids."""
    episodes: list[Episode] = []
    seen: set[str] = set()
    for line_no, line in enumerate(record_stream, start=1):
        if not line.strip():
            continue
        episode = parse_episode_record(line, line_no)
        if episode.episode_id in seen:
            raise DuplicateIdError(
                f"line {line_no}: duplicate episode_id '{episode.episode_id}'"
            )
        seen.add(episode.episode_id)
        episodes.append(episode)
    return episodes


def parse_queries(record_stream: Iterable[str]) -> list[Query]:
    """Parse line-delimited query records with qid, query, description."""
    queries: list[Query] = []
    seen: set[str] = set()
    for line_no, line in enumerate(record_stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})", line_no) from exc
        if not isinstance(record, dict):
            raise CorpusError(f"line {line_no}: record is not an object", line_no)
        qid = _require(record, "qid", str, line_no)
        if not qid:
            raise CorpusError(f"line {line_no}: empty qid", line_no)
        if qid in seen:
            raise DuplicateIdError(f"line {line_no}: duplicate qid '{qid}'")
        seen.add(qid)
        queries.append(
            Query(
                qid=qid,
                query=_require(record, "query", str, line_no),
                description=_require(record, "description", str, line_no),
            )
        )
    return queries


def _format_seconds(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def segment_id_for(episode_id: str, start_s: float) -> str:
    return f"{episode_id}_{_format_seconds(start_s)}"


def episode_of_segment(segment_id: str) -> str:
    """Invert segment_id_for; the start suffix never contains '_'."""
    episode_id, _, _ = segment_id.rpartition("_")
    return episode_id


def _word_times(episode: Episode, cfg: SegmentationConfig) -> list[tuple[float, float]]:
    """(start, effective end) per word; synthetic times when untimestamped."""
    gap = 60.0 / cfg.words_per_minute
    times: list[tuple[float, float]] = []
    for i, word in enumerate(episode.transcript):
        if word.start_s is None:
            times.append((i * gap, (i + 1) * gap))
        else:
            end = word.end_s if word.end_s > word.start_s else word.start_s + _ZERO_LENGTH_WORD_S
            times.append((word.start_s, end))
    return times


def segment_episode(episode: Episode, cfg: SegmentationConfig | None = None) -> list[Segment]:
    """Split a transcript into windows of window_s starting every stride_s.

    Segment starts run 0, stride_s, 2*stride_s, ... for every start below the
    episode duration (the largest effective word end time). A segment's text
    is the space-joined words whose start time falls in
    [start, start + window_s). An empty transcript yields no segments.
    """
    cfg = cfg or SegmentationConfig()
    if not episode.transcript:
        return []
    times = _word_times(episode, cfg)
    duration = max(end for _, end in times)

    segments: list[Segment] = []
    k = 0
    while k * cfg.stride_s < duration:
        start = k * cfg.stride_s
        stop = start + cfg.window_s
        words = [
            word.text
            for word, (word_start, _) in zip(episode.transcript, times)
            if start <= word_start < stop
        ]
        segments.append(
            Segment(
                segment_id=segment_id_for(episode.episode_id, start),
                episode_id=episode.episode_id,
                start_s=start,
                text=" ".join(words),
            )
        )
        k += 1
    return segments


def episode_document(episode: Episode) -> str:
    """Episode-level retrieval text: title, description, then transcript."""
    parts = [episode.title, episode.description]
    parts.extend(word.text for word in episode.transcript)
    return " ".join(p for p in parts if p)


def episode_to_record(episode: Episode) -> dict:
    words = []
    for w in episode.transcript:
        entry: dict = {"text": w.text}
        if w.start_s is not None:
            entry["start_s"] = w.start_s
            entry["end_s"] = w.end_s
        words.append(entry)
    return {
        "episode_id": episode.episode_id,
        "show_name": episode.show_name,
        "title": episode.title,
        "description": episode.description,
        "transcript": words,
    }


def write_corpus(path, episodes: Iterable[Episode]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for episode in episodes:
            handle.write(json.dumps(episode_to_record(episode), sort_keys=True))
            handle.write("\n")


def read_corpus(path) -> list[Episode]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_corpus(handle)


def read_queries(path) -> list[Query]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_queries(handle)


def write_queries(path, queries: Iterable[Query]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for q in queries:
            handle.write(
                json.dumps(
                    {"qid": q.qid, "query": q.query, "description": q.description},
                    sort_keys=True,
                )
            )
            handle.write("\n")


def write_segments(path, segments: Iterable[Segment]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for seg in segments:
            handle.write(
                json.dumps(
                    {
                        "segment_id": seg.segment_id,
                        "episode_id": seg.episode_id,
                        "start_s": seg.start_s,
                        "text": seg.text,
                    },
                    sort_keys=True,
                )
            )
            handle.write("\n")


def read_segments(path) -> list[Segment]:
    segments: list[Segment] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})", line_no) from exc
            segments.append(
                Segment(
                    segment_id=_require(record, "segment_id", str, line_no),
                    episode_id=_require(record, "episode_id", str, line_no),
                    start_s=float(_require(record, "start_s", (int, float), line_no)),
                    text=_require(record, "text", str, line_no),
                )
            )
    return segments


def iter_sorted_segments(segments: Iterable[Segment]) -> Iterator[Segment]:
    """Canonical segment order regardless of how they were produced."""
    return iter(sorted(segments, key=lambda s: (s.episode_id, s.start_s)))
