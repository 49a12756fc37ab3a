"""Blend neural segment scores with first-stage lexical evidence.

The lexical score is squashed through a sigmoid and re-centred at zero, so
an episode with lexical score 0 contributes nothing and the neural score
passes through scaled by 1/(1+alpha). With alpha = 0 the fusion is the
identity on the neural score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .corpus import episode_of_segment
from .errors import FusionError
from .index import RankedList
from .rerank import sigmoid


@dataclass(frozen=True)
class FusionParams:
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def fuse(neural: float, lexical: float, params: FusionParams) -> float:
    shifted = 2.0 * params.alpha * (sigmoid(lexical) - 0.5)
    return (neural + shifted) / (1.0 + params.alpha)


def fuse_ranked(
    neural_list: RankedList,
    episode_list: RankedList,
    params: FusionParams,
    parent_of: Callable[[str], str] = episode_of_segment,
) -> RankedList:
    """Fuse each segment's neural score with its parent episode's lexical score."""
    lexical = {doc_id: score for doc_id, score in episode_list}
    fused: dict[str, float] = {}
    for segment_id, neural in neural_list:
        episode_id = parent_of(segment_id)
        if episode_id not in lexical:
            raise FusionError(
                f"segment '{segment_id}' has no first-stage score for episode '{episode_id}'"
            )
        fused[segment_id] = fuse(neural, lexical[episode_id], params)
    return RankedList.from_scores(fused)
