"""INI-style run configuration (sections ``[search]``, ``[train]``, ``[budget]``, ``[corpus]``).

Unknown sections or keys are rejected so typos do not silently fall back to
defaults. Example::

    [search]
    generations = 5
    children = 4
    runs = 1

    [train]
    max_epochs = 50
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from tinytc.arch.costs import HardwareBudget
from tinytc.errors import ConfigError
from tinytc.ingest.synthetic import CorpusSpec
from tinytc.nn.training import TrainConfig
from tinytc.search.engine import SearchConfig

_SEARCH_KEYS = {"generations": int, "children": int, "runs": int, "holdout": float, "seed": int,
                "max_attempts": int, "elitist": bool, "aggregate": str, "depth_limit": int, "workers": int}
_CORPUS_KEYS = {"n_classes": int, "sessions_per_class": int, "families": list, "class_names": list}


@dataclass
class RunConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    corpus: CorpusSpec = field(default_factory=CorpusSpec)

    @property
    def train(self) -> TrainConfig:
        return self.search.train


def _convert(section: configparser.SectionProxy, key: str, kind):
    try:
        if kind is bool:
            return section.getboolean(key)
        if kind is list:
            return [v.strip() for v in section[key].split(",") if v.strip()]
        return kind(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def _read_section(parser, name: str, spec: dict) -> dict:
    if not parser.has_section(name):
        return {}
    sec = parser[name]
    unknown = set(sec) - set(spec)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    return {k: _convert(sec, k, spec[k]) for k in sec}


def _field_types(cls) -> dict:
    types = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: types[f.type] for f in fields(cls) if f.type in types}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    extra = set(parser.sections()) - {"search", "train", "budget", "corpus"}
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    try:
        train = TrainConfig(**_read_section(parser, "train", _field_types(TrainConfig)))
        budget = HardwareBudget(**_read_section(parser, "budget", _field_types(HardwareBudget)))
        search = SearchConfig(budget=budget, train=train, **_read_section(parser, "search", _SEARCH_KEYS))
        corpus_kw = _read_section(parser, "corpus", _CORPUS_KEYS)
        corpus = CorpusSpec(**corpus_kw)
        corpus.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(search, corpus)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig(SearchConfig(), CorpusSpec())
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
