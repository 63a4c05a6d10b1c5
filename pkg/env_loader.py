# env_loader.py
from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from dotenv import dotenv_values

ENV_PREFIX = "P2F_"
ENV_FILE_VAR = ENV_PREFIX + "ENV_FILE"


def load_project_env(env_file=None, environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """
    P2F_* settings from the project .env merged under the real environment.

    file lookup:
      1) explicit env_file argument
      2) P2F_ENV_FILE environment variable
      3) ./.env in the working directory

    A missing ./.env is fine (empty result); a named file that does not exist raises
    FileNotFoundError. os.environ is never modified.
    """
    env = os.environ if environ is None else environ
    named = env_file or env.get(ENV_FILE_VAR)
    path = Path(named) if named else Path.cwd() / ".env"

    merged: Dict[str, str] = {}
    if path.is_file():
        for k, v in dotenv_values(dotenv_path=path).items():
            if k.startswith(ENV_PREFIX) and v is not None:
                merged[k] = v
    elif named:
        raise FileNotFoundError(f"env file not found: {path}")

    merged.update({k: v for k, v in env.items() if k.startswith(ENV_PREFIX)})
    return merged


def normalize_key(key: str) -> str:
    return (key or "").strip().lower().replace("-", "_")


def _filter_known(raw: Mapping[str, Optional[str]], known: Optional[Iterable[str]], source: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    allowed = set(known) if known is not None else None
    for k, v in raw.items():
        key = normalize_key(k)
        if allowed is not None and key not in allowed:
            raise ValueError(f"unknown config key {k!r} in {source}; allowed: {', '.join(sorted(allowed))}")
        if v is None:
            continue
        out[key] = str(v).strip()
    return out


def load_flat_config(path, known: Optional[Iterable[str]] = None) -> Dict[str, str]:
    """key=value file (same grammar as .env); keys normalised to lower snake case."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return _filter_known(dotenv_values(dotenv_path=p), known, str(p))


def env_overrides(
    known: Iterable[str],
    prefix: str = ENV_PREFIX,
    environ: Optional[Mapping[str, str]] = None,
) -> Dict[str, str]:
    """Values of <prefix><KEY> environment variables for each known key; unset keys are skipped."""
    env = os.environ if environ is None else environ
    out: Dict[str, str] = {}
    for key in known:
        v = env.get(prefix + key.upper())
        if v is not None and v.strip() != "":
            out[key] = v.strip()
    return out
