"""
Run identity: stable hashes of configurations for output stamping
"""

import json
import hashlib
from typing import Any, Dict

from pydantic import BaseModel


def _plain(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    return obj


def hash_key(*objects: Any) -> str:
    """
    Generate a stable hash key from multiple objects.
    Pydantic models are hashed through their JSON dump.

    Args:
        *objects: JSON-serializable objects or pydantic models

    Returns:
        MD5 hash string (32 chars)
    """
    plain = [_plain(o) for o in objects]
    try:
        serialized = json.dumps(plain, sort_keys=True, default=str)
    except (TypeError, ValueError):
        serialized = str(plain)
    return hashlib.md5(serialized.encode()).hexdigest()


def version_token(prefix: str, *dependencies: Any) -> str:
    """
    Short token naming one run.

    Returns:
        String like 'verify_abc123de'
    """
    return f"{prefix}_{hash_key(*dependencies)[:8]}"


def run_metadata(command: str, experiment, seed: int) -> Dict[str, str]:
    """Header fields every output file carries"""
    return {
        'command': command,
        'config_hash': hash_key(experiment),
        'seed': str(seed),
        'run': version_token(command, experiment, seed),
    }
