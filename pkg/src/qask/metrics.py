"""Interaction and navigation metrics.

Question-asking: SR (fraction of correct decisions per episode, averaged
over episodes), FR (fraction of episodes with all decisions correct),
NQ (questions per presented observation), Time (mean seconds per episode).
Navigation: SR, SPL, NQ.

The SR denominator is the episode's full length, so early termination is
penalized; this keeps FR <= SR on every result set.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import EpisodeResult, dumps_canonical


@dataclass(frozen=True)
class MetricsReport:
    description_level: str
    oracle_id: str
    questioner_id: str
    sr: float
    fr: float
    nq: float
    time: float
    n_episodes: int

    @property
    def group_key(self) -> tuple[str, str, str]:
        return (self.description_level, self.oracle_id, self.questioner_id)

    def to_dict(self) -> dict:
        return {
            "sr": self.sr,
            "fr": self.fr,
            "nq": self.nq,
            "time": self.time,
            "n_episodes": self.n_episodes,
        }


def episode_sr(result: EpisodeResult, n: int) -> float:
    """Correct decisions over the episode's full length; decisions never
    made count against the denominator."""
    if n <= 0:
        raise ValueError("episode length must be positive")
    return sum(1 for s in result.steps if s.correct) / n


def finish_rate(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise ValueError("finish_rate of an empty result list")
    return sum(1 for r in results if r.finished) / len(results)


def nq(results: Sequence[EpisodeResult]) -> float:
    """Questions per observation actually presented to the agent."""
    presented = sum(len(r.steps) for r in results)
    if presented == 0:
        raise ValueError("no observations were presented")
    asked = sum(len(s.questions) for r in results for s in r.steps)
    return asked / presented


def mean_time(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise ValueError("mean_time of an empty result list")
    # fsum keeps the mean invariant under result ordering
    return math.fsum(r.wall_time for r in results) / len(results)


def compute_report(results: Sequence[EpisodeResult], episode_lengths: dict[str, int]) -> MetricsReport:
    """Metrics for one (level, oracle, questioner) group."""
    if not results:
        raise ValueError("empty result group")
    levels = {r.description_level for r in results}
    oracles = {r.oracle_id for r in results}
    questioners = {r.questioner_id for r in results}
    if len(levels) != 1 or len(oracles) != 1 or len(questioners) != 1:
        raise ValueError("compute_report expects a homogeneous group")
    sr = math.fsum(episode_sr(r, episode_lengths[r.episode_id]) for r in results) / len(results)
    return MetricsReport(
        description_level=levels.pop(),
        oracle_id=oracles.pop(),
        questioner_id=questioners.pop(),
        sr=sr,
        fr=finish_rate(results),
        nq=nq(results),
        time=mean_time(results),
        n_episodes=len(results),
    )


def aggregate_across_oracles(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Unweighted mean of each metric across oracles, one report per oracle."""
    if not reports:
        raise ValueError("nothing to aggregate")
    if len({r.questioner_id for r in reports}) != 1:
        raise ValueError("mixed questioners in oracle aggregation")
    if len({r.description_level for r in reports}) != 1:
        raise ValueError("mixed description levels in oracle aggregation")
    k = len(reports)
    return MetricsReport(
        description_level=reports[0].description_level,
        oracle_id="mean",
        questioner_id=reports[0].questioner_id,
        sr=sum(r.sr for r in reports) / k,
        fr=sum(r.fr for r in reports) / k,
        nq=sum(r.nq for r in reports) / k,
        time=sum(r.time for r in reports) / k,
        n_episodes=sum(r.n_episodes for r in reports),
    )


def spl(episodes: Iterable[tuple[bool, float, float]]) -> float:
    """Success weighted by path length: mean of success * shortest / max(taken, shortest)."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("spl of an empty episode list")
    total = 0.0
    for success, shortest, taken in episodes:
        if shortest <= 0:
            raise ValueError("shortest path length must be positive")
        if taken < 0:
            raise ValueError("taken path length must be non-negative")
        if success:
            total += shortest / max(taken, shortest)
    return total / len(episodes)


def run_reports(
    results: Sequence[EpisodeResult], episode_lengths: dict[str, int]
) -> tuple[list[MetricsReport], list[MetricsReport]]:
    """Group results by (level, oracle, questioner); returns per-group reports
    plus the cross-oracle mean for each (level, questioner)."""
    groups: dict[tuple[str, str, str], list[EpisodeResult]] = {}
    for r in results:
        groups.setdefault((r.description_level, r.oracle_id, r.questioner_id), []).append(r)
    reports = [compute_report(g, episode_lengths) for _, g in sorted(groups.items())]
    by_lq: dict[tuple[str, str], list[MetricsReport]] = {}
    for rep in reports:
        by_lq.setdefault((rep.description_level, rep.questioner_id), []).append(rep)
    means = [aggregate_across_oracles(reps) for _, reps in sorted(by_lq.items())]
    return reports, means


def write_metrics(run_dir, reports: Sequence[MetricsReport], means: Sequence[MetricsReport],
                  replayed: bool = False) -> None:
    """Write metrics.json (nested level -> oracle -> metrics) and a flat CSV."""
    run_dir = Path(run_dir)
    nested: dict = {"levels": {}, "replayed": replayed,
                    "sr_denominator": "full_episode_length"}
    for rep in reports:
        level = nested["levels"].setdefault(rep.description_level, {"oracles": {}})
        level["oracles"][rep.oracle_id] = rep.to_dict()
    for rep in means:
        nested["levels"][rep.description_level]["mean"] = rep.to_dict()
    with open(run_dir / "metrics.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(nested))
    with open(run_dir / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "oracle", "questioner", "sr", "fr", "nq", "time", "n_episodes"])
        for rep in list(reports) + list(means):
            writer.writerow([rep.description_level, rep.oracle_id, rep.questioner_id,
                             repr(rep.sr), repr(rep.fr), repr(rep.nq), repr(rep.time),
                             rep.n_episodes])


def load_metrics(run_dir) -> dict:
    with open(Path(run_dir) / "metrics.json", encoding="utf-8") as fh:
        return json.load(fh)
