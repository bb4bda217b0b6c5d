"""Global configuration: a flat TOML-like key=value file.

Sections (``[backend.generator]``) prefix the keys that follow; values are
quoted strings, integers, floats or true/false.  API keys are never stored
here — only the *name* of the environment variable that holds them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backends import (
    Backend,
    BackendConfig,
    BackendRole,
    HttpBackend,
    ScriptedBackend,
    check_distinct_models,
    keyed_script,
)
from .validate import ValidationConfig


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_kv_file(path: str | Path) -> dict[str, object]:
    """Parse the flat config format into a {dotted.key: value} map."""
    flat: dict[str, object] = {}
    prefix = ""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            prefix = stripped[1:-1].strip()
            if not prefix:
                raise ConfigError(f"{path}:{line_no}: empty section header")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{line_no}: empty key")
        full = f"{prefix}.{key}" if prefix else key
        flat[full] = _parse_value(raw)
    return flat


@dataclass(frozen=True)
class BackendBinding:
    kind: str = "http"  # http | scripted
    config: BackendConfig = BackendConfig()
    script_file: str | None = None

    def build(self, role: BackendRole) -> Backend:
        if self.kind == "http":
            return HttpBackend(self.config, role)
        if self.kind == "scripted":
            if not self.script_file:
                raise ConfigError(
                    f"scripted backend for {role.value} needs script_file"
                )
            data = json.loads(Path(self.script_file).read_text(encoding="utf-8"))
            return ScriptedBackend(
                script=keyed_script(
                    data.get("by_key") or {}, default=data.get("default")
                )
            )
        raise ConfigError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class PipelineSettings:
    max_attempts: int = 5
    worker_pool_size: int = 4
    human_enabled: bool = False
    auto_approve: bool = False
    strict_distinct_models: bool = True


@dataclass(frozen=True)
class PathSettings:
    data_dir: str = "."
    runs_dir: str = "./runs"
    queue_log: str = "./runs/queue.jsonl"


@dataclass
class GlobalConfig:
    backends: dict[str, BackendBinding] = field(default_factory=dict)
    validation: ValidationConfig = ValidationConfig()
    pipeline: PipelineSettings = PipelineSettings()
    paths: PathSettings = PathSettings()

    def binding(self, role: BackendRole) -> BackendBinding:
        binding = self.backends.get(role.value)
        if binding is None:
            raise ConfigError(f"no backend configured for role {role.value!r}")
        return binding

    def build_backend(self, role: BackendRole) -> Backend:
        return self.binding(role).build(role)

    def check_circularity(self) -> None:
        """Strict mode refuses generator == verifier model names."""
        if not self.pipeline.strict_distinct_models:
            return
        gen = self.backends.get(BackendRole.GENERATOR.value)
        ver = self.backends.get(BackendRole.VERIFIER.value)
        if gen and ver:
            check_distinct_models(gen.config, ver.config, strict=True)


def _get(flat: dict, key: str, default):
    value = flat.get(key, default)
    if default is not None and value is not None and not isinstance(value, type(default)):
        if isinstance(default, float) and isinstance(value, int):
            return float(value)
        raise ConfigError(f"config key {key!r}: expected {type(default).__name__}")
    return value


def load_config(path: str | Path) -> GlobalConfig:
    """Load and resolve a config file; relative paths resolve against the
    config file's directory."""
    flat = parse_kv_file(path)
    base = Path(path).resolve().parent

    def resolve(p: str) -> str:
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    backends: dict[str, BackendBinding] = {}
    for role in BackendRole:
        prefix = f"backend.{role.value}"
        keys = {k for k in flat if k.startswith(prefix + ".")}
        if not keys:
            continue
        kind = str(flat.get(f"{prefix}.kind", "http"))
        temperature = flat.get(f"{prefix}.temperature")
        cfg = BackendConfig(
            endpoint_url=str(flat.get(f"{prefix}.endpoint_url", "")),
            api_key_env_name=str(flat.get(f"{prefix}.api_key_env", "")),
            model_name=str(flat.get(f"{prefix}.model_name", "")),
            timeout_ms=int(_get(flat, f"{prefix}.timeout_ms", 60_000)),
            max_retries=int(_get(flat, f"{prefix}.max_retries", 3)),
            backoff_base_ms=int(_get(flat, f"{prefix}.backoff_base_ms", 500)),
            max_inflight=int(_get(flat, f"{prefix}.max_inflight", 4)),
            temperature=float(temperature) if temperature is not None else None,
        )
        script_file = flat.get(f"{prefix}.script_file")
        backends[role.value] = BackendBinding(
            kind=kind,
            config=cfg,
            script_file=resolve(str(script_file)) if script_file else None,
        )

    validation = ValidationConfig(
        max_events=int(_get(flat, "validation.max_events", 10)),
        min_events=int(_get(flat, "validation.min_events", 2)),
        max_event_chars=int(_get(flat, "validation.max_event_chars", 300)),
        require_terminal_relevance=bool(
            _get(flat, "validation.require_terminal_relevance", False)
        ),
    )
    pipeline = PipelineSettings(
        max_attempts=int(_get(flat, "pipeline.max_attempts", 5)),
        worker_pool_size=int(_get(flat, "pipeline.worker_pool_size", 4)),
        human_enabled=bool(_get(flat, "pipeline.human_stage_enabled", False)),
        auto_approve=bool(_get(flat, "pipeline.human_auto_approve", False)),
        strict_distinct_models=bool(
            _get(flat, "pipeline.strict_distinct_models", True)
        ),
    )
    paths = PathSettings(
        data_dir=resolve(str(flat.get("paths.data_dir", "."))),
        runs_dir=resolve(str(flat.get("paths.runs_dir", "./runs"))),
        queue_log=resolve(str(flat.get("paths.queue_log", "./runs/queue.jsonl"))),
    )
    return GlobalConfig(
        backends=backends, validation=validation, pipeline=pipeline, paths=paths
    )
