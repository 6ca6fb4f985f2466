"""Mediator configuration: one YAML file plus ``XQFED_`` environment overrides.

Schema (all keys optional except ``backends``)::

    backends:
      - id: rdf
        kind: sparql-http | sparql-mock
        endpoint_url: http://localhost:3030/ds/sparql   # HTTP kinds only
        fixture: data/triples.jsonl                     # mock kinds only
        simulated_latency: [fixed_ms, per_row_ms]       # mock kinds only
        request_timeout_ms: 30000
        retry_count: 0
        auth_header: "Authorization: Bearer ..."
        active: true
        stats: {mean_latency_ms, per_result_ms, per_doc_ms, total_documents}
      - id: docs
        kind: xmldb-http | xml-mock
        collection_name: safety_info
        profile: body | form          # HTTP only
        form_field: _query
        document_root: /db/safety_info/
    prefixes: {ex: "http://example.org/"}
    optimizer:
      mode: history | oracle | fixed
      join_alpha: 0.001
      chunk_limit: 500
      union_branch_ms: 0
      fixed: [cS, cX, cJoinP, cJoinS, rhoS, rhoX]
      defaults: {sparql_rows, sparql_docs, xquery_docs, total_documents, estimate: [...]}
    catalog_path: catalog.jsonl
    output_format: json | csv | table
    row_cap: 1000000
    doc_id_as_iri: false

Overrides: ``XQFED_OPTIMIZER__MODE=oracle`` sets ``optimizer.mode``; a
numeric segment indexes a list (``XQFED_BACKENDS__0__ENDPOINT_URL``).
Values are parsed as YAML scalars.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .backends import BackendConfig, BackendKind
from .errors import ConfigError, InvalidEstimate
from .optimizer import (
    BackendStats, CatalogStats, CostEstimate, EstimateMode, OptimizerDefaults, OptimizerSettings,
)
from .parser import DEFAULT_PREFIXES

ENV_PREFIX = "XQFED_"
OUTPUT_FORMATS = ("json", "csv", "table")


@dataclass
class MediatorConfig:
    backends: list[BackendConfig]
    prefixes: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_PREFIXES))
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    catalog_path: Optional[str] = None
    output_format: str = "json"
    row_cap: int = 1_000_000
    doc_id_as_iri: bool = False
    backend_stats: dict[str, BackendStats] = field(default_factory=dict)

    def __post_init__(self):
        self.sparql_backend
        self.xml_backend
        if self.optimizer.chunk_limit < 1:
            raise ConfigError("optimizer.chunk_limit must be >= 1")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output_format must be one of {', '.join(OUTPUT_FORMATS)}")
        if self.row_cap < 1:
            raise ConfigError("row_cap must be >= 1")

    def _only(self, sparql: bool) -> BackendConfig:
        found = [b for b in self.backends if b.kind.is_sparql == sparql]
        what = "SPARQL" if sparql else "XML"
        if len(found) != 1:
            raise ConfigError(f"exactly one active {what} backend is required, found {len(found)}")
        return found[0]

    @property
    def sparql_backend(self) -> BackendConfig:
        return self._only(True)

    @property
    def xml_backend(self) -> BackendConfig:
        return self._only(False)


def build_catalog(cfg: MediatorConfig) -> CatalogStats:
    """Catalog with configured per-backend parameters and the persisted history."""
    stats = {k: BackendStats(**vars(v)) for k, v in cfg.backend_stats.items()}
    if cfg.catalog_path:
        return CatalogStats.load(cfg.catalog_path, stats)
    return CatalogStats(stats)


def apply_env_overrides(raw: dict, env: Mapping[str, str]) -> dict:
    for key in sorted(env):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        try:
            value = yaml.safe_load(env[key])
        except yaml.YAMLError:
            value = env[key]
        node = raw
        for i, part in enumerate(path):
            last = i == len(path) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigError(f"{key}: no list element {part!r}") from None
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[part] = value
                else:
                    node = node.setdefault(part, {})
            else:
                raise ConfigError(f"{key}: cannot descend into a scalar")
    return raw


def _estimate(value, where: str) -> CostEstimate:
    try:
        if isinstance(value, str):
            return CostEstimate.from_csv(value)
        return CostEstimate.from_csv(",".join(str(v) for v in value))
    except (InvalidEstimate, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _backend(raw: dict, base: Path) -> tuple[BackendConfig, Optional[BackendStats], bool]:
    raw = dict(raw)
    active = bool(raw.pop("active", True))
    stats_raw = raw.pop("stats", None)
    try:
        kind = BackendKind(raw.pop("kind"))
    except KeyError:
        raise ConfigError(f"backend {raw.get('id')!r} needs a kind") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "id" not in raw:
        raise ConfigError("every backend needs an id")
    fixture = raw.get("fixture")
    if fixture and not Path(fixture).is_absolute():
        raw["fixture"] = str(base / fixture)
    lat = raw.get("simulated_latency")
    if lat is not None:
        if not isinstance(lat, (list, tuple)) or len(lat) != 2:
            raise ConfigError("simulated_latency must be [fixed_ms, per_unit_ms]")
        raw["simulated_latency"] = (float(lat[0]), float(lat[1]))
    known = set(BackendConfig.__dataclass_fields__) - {"kind", "extra"}
    extra = {k: raw.pop(k) for k in list(raw) if k not in known}
    try:
        cfg = BackendConfig(kind=kind, extra=extra, **raw)
    except TypeError as exc:
        raise ConfigError(f"backend {raw['id']!r}: {exc}") from None
    stats = None
    if stats_raw is not None:
        try:
            stats = BackendStats(**stats_raw)
        except TypeError as exc:
            raise ConfigError(f"backend {raw['id']!r} stats: {exc}") from None
    return cfg, stats, active


def _optimizer(raw: dict) -> OptimizerSettings:
    raw = dict(raw or {})
    try:
        mode = EstimateMode(str(raw.pop("mode", "history")).lower())
    except ValueError:
        raise ConfigError("optimizer.mode must be history, oracle or fixed") from None
    fixed = raw.pop("fixed", None)
    defaults_raw = raw.pop("defaults", {})
    settings = OptimizerSettings(mode=mode)
    if fixed is not None:
        settings.fixed = _estimate(fixed, "optimizer.fixed")
    if mode is EstimateMode.FIXED and settings.fixed is None:
        raise ConfigError("optimizer.mode fixed needs optimizer.fixed")
    if defaults_raw is None:
        settings.defaults = None
    else:
        defaults_raw = dict(defaults_raw)
        est = defaults_raw.pop("estimate", None)
        try:
            settings.defaults = OptimizerDefaults(**defaults_raw)
        except TypeError as exc:
            raise ConfigError(f"optimizer.defaults: {exc}") from None
        if est is not None:
            settings.defaults.estimate = _estimate(est, "optimizer.defaults.estimate")
    for key in ("join_alpha", "union_branch_ms"):
        if key in raw:
            setattr(settings, key, float(raw.pop(key)))
    if "chunk_limit" in raw:
        settings.chunk_limit = int(raw.pop("chunk_limit"))
    if raw:
        raise ConfigError(f"unknown optimizer keys: {', '.join(sorted(raw))}")
    if settings.join_alpha < 0 or settings.union_branch_ms < 0:
        raise ConfigError("optimizer costs must be >= 0")
    return settings


def config_from_dict(raw: dict, base: Path | str = ".") -> MediatorConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    base = Path(base)
    backends = []
    stats = {}
    for b in raw.get("backends") or []:
        if not isinstance(b, dict):
            raise ConfigError("backends must be a list of mappings")
        cfg, st, active = _backend(b, base)
        if active:
            backends.append(cfg)
        if st is not None:
            stats[cfg.id] = st
    prefixes = dict(DEFAULT_PREFIXES)
    prefixes.update(raw.get("prefixes") or {})
    catalog = raw.get("catalog_path")
    if catalog and not Path(catalog).is_absolute():
        catalog = str(base / catalog)
    known = {"backends", "prefixes", "optimizer", "catalog_path", "output_format", "row_cap",
             "doc_id_as_iri"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return MediatorConfig(
        backends=backends, prefixes=prefixes, optimizer=_optimizer(raw.get("optimizer")),
        catalog_path=catalog, output_format=str(raw.get("output_format", "json")),
        row_cap=int(raw.get("row_cap", 1_000_000)),
        doc_id_as_iri=bool(raw.get("doc_id_as_iri", False)), backend_stats=stats)


def load_config(path: str | Path, env: Optional[Mapping[str, str]] = None) -> MediatorConfig:
    env = os.environ if env is None else env
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return config_from_dict(apply_env_overrides(raw, env), p.parent)
