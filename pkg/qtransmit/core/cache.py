"""Per-dimension cache for operator tables (Weyl sets, Bell bases, projectors)."""

from cachetools import LRUCache
from functools import wraps
import hashlib
import json
from typing import Any, Callable, TypeVar

import numpy as np

from qtransmit.core.config import get_settings

# Operator tables only depend on their arguments, so nothing ever goes stale
_operator_cache: LRUCache = LRUCache(maxsize=get_settings().cache_size)
_stats = {"hits": 0, "misses": 0}

F = TypeVar('F', bound=Callable[..., Any])


def cache_key(*args, **kwargs) -> str:
    """Generate cache key from function arguments."""
    key_data = {
        'args': args,
        'kwargs': sorted(kwargs.items()) if kwargs else {}
    }
    key_str = json.dumps(key_data, sort_keys=True, default=str)
    return hashlib.md5(key_str.encode()).hexdigest()


def _freeze(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        value.setflags(write=False)
    elif isinstance(value, (list, tuple)):
        for item in value:
            _freeze(item)
    return value


def cached(func: F) -> F:
    """Cache results by argument value; returned arrays are made read-only."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        key = f"{func.__module__}.{func.__name__}:{cache_key(*args, **kwargs)}"

        if key in _operator_cache:
            _stats["hits"] += 1
            return _operator_cache[key]

        _stats["misses"] += 1
        result = _freeze(func(*args, **kwargs))
        _operator_cache[key] = result
        return result

    return wrapper


def clear_cache():
    """Clear all cached operator tables."""
    _operator_cache.clear()
    _stats["hits"] = 0
    _stats["misses"] = 0


def cache_stats() -> dict:
    """Get cache statistics."""
    return {
        'size': len(_operator_cache),
        'maxsize': _operator_cache.maxsize,
        'hits': _stats["hits"],
        'misses': _stats["misses"],
    }
