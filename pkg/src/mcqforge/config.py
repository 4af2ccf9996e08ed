"""TOML pipeline configuration, backend construction, and provenance.

A config file declares backends under [backends.<id>] (kind = "http"
or "mock"; mock rules may live inline or in a JSON script file) plus
per-stage parameter tables. Every file-producing CLI stage drops a
<output>.provenance.json sidecar recording the config digest, seeds,
backend ids, and elapsed time.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Dict, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ForgeError, IoError
from .llmclient import HttpBackend, MockBackend, MockFailure, MockRule, RateLimiter


class ConfigError(ForgeError):
    """Configuration file missing, unreadable, or inconsistent."""


def load_config(path) -> dict:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return tomllib.loads(blob.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc


def config_digest(path) -> Optional[str]:
    if path is None:
        return None
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _parse_outcome(value):
    """str | {"fail": kind[, "message"]} | list of those."""
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        if "fail" not in value:
            raise ConfigError(f"mock outcome object needs a 'fail' key: {value!r}")
        return MockFailure(value["fail"], value.get("message", "scripted failure"))
    if isinstance(value, list):
        return [_parse_outcome(v) for v in value]
    raise ConfigError(f"bad mock outcome {value!r}")


def _parse_rules(raw_rules) -> list:
    rules = []
    for raw in raw_rules:
        if "match" in raw:
            matcher = raw["match"]
        elif "pattern" in raw:
            try:
                matcher = re.compile(raw["pattern"])
            except re.error as exc:
                raise ConfigError(f"bad rule pattern {raw['pattern']!r}: {exc}") from exc
        else:
            raise ConfigError(f"mock rule needs 'match' or 'pattern': {raw!r}")
        if "response" in raw:
            outcome = _parse_outcome(raw["response"])
        elif "responses" in raw:
            outcome = _parse_outcome(list(raw["responses"]))
        else:
            raise ConfigError(f"mock rule needs 'response' or 'responses': {raw!r}")
        rules.append(MockRule(matcher, outcome, float(raw.get("latency", 0.0))))
    return rules


def read_mock_script(path) -> Tuple[list, Optional[object]]:
    """Load a JSON mock script: {"rules": [...], "default": ...} or a bare list."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read mock script {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in mock script {path}: {exc}") from exc
    if isinstance(data, list):
        return _parse_rules(data), None
    default = data.get("default")
    if default is not None:
        default = _parse_outcome(default)
    return _parse_rules(data.get("rules", [])), default


def build_backend(backend_id: str, conf: dict, config_dir: Path):
    kind = conf.get("kind", "http")
    if kind == "mock":
        rules, default = [], None
        if "script" in conf:
            script_path = Path(conf["script"])
            if not script_path.is_absolute():
                script_path = config_dir / script_path
            rules, default = read_mock_script(script_path)
        if "rules" in conf:
            rules.extend(_parse_rules(conf["rules"]))
        if conf.get("default") is not None:
            default = _parse_outcome(conf["default"])
        backend = MockBackend(
            rules=rules,
            default=default,
            id=backend_id,
            model=conf.get("model", "mock-model"),
            retry_limit=int(conf.get("retry_limit", 3)),
            seed=int(conf.get("seed", 0)),
        )
        if conf.get("rate_limit_per_s"):
            backend.rate_limiter = RateLimiter(
                float(conf["rate_limit_per_s"]), clock=backend.clock
            )
        return backend
    if kind == "http":
        for required in ("base_url", "model"):
            if required not in conf:
                raise ConfigError(
                    f"backend {backend_id!r} needs '{required}'"
                )
        return HttpBackend(
            id=backend_id,
            base_url=conf["base_url"],
            model=conf["model"],
            api_key_env=conf.get("api_key_env", ""),
            rate_limit_per_s=conf.get("rate_limit_per_s"),
            retry_limit=int(conf.get("retry_limit", 3)),
            timeout_s=float(conf.get("timeout_s", 120.0)),
        )
    raise ConfigError(f"backend {backend_id!r} has unknown kind {kind!r}")


def get_backend(cfg: dict, backend_id: str, config_path) -> object:
    backends = cfg.get("backends", {})
    if backend_id not in backends:
        known = ", ".join(sorted(backends)) or "none"
        raise ConfigError(f"backend {backend_id!r} not in config (known: {known})")
    config_dir = Path(config_path).parent if config_path else Path.cwd()
    return build_backend(backend_id, backends[backend_id], config_dir)


def write_provenance(output_path, stage: str, *, config_digest_hex=None,
                     seeds: Optional[Dict[str, int]] = None,
                     backend_ids=(), elapsed_s: float = 0.0,
                     outputs=(), extra: Optional[dict] = None) -> Path:
    """Sidecar <output>.provenance.json (or provenance.json in a directory)."""
    output_path = Path(output_path)
    if output_path.is_dir():
        sidecar = output_path / "provenance.json"
    else:
        sidecar = output_path.with_name(output_path.name + ".provenance.json")
    record = {
        "stage": stage,
        "config_digest": config_digest_hex,
        "seeds": dict(seeds or {}),
        "backend_ids": list(backend_ids),
        "elapsed_s": elapsed_s,
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        record.update(extra)
    try:
        sidecar.write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {sidecar}: {exc}") from exc
    return sidecar
