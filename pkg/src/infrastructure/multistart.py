from functools import wraps
from typing import Any, Callable, Optional, Tuple, Type

import numpy as np

from src.domain.errors import ConfigError, MultistartExhausted


def multistart(
    starts: int = 20,
    seed: Optional[int] = None,
    fatal: Tuple[Type[BaseException], ...] = (ConfigError,),
):
    """
    Decorator running a randomized search several times and keeping the best result.

    Each start gets its own numpy Generator (as the `rng` keyword), spawned from one
    SeedSequence so a start's draws do not depend on how many values earlier starts
    consumed. The wrapped function must return an object with a `score` attribute
    (lower is better). Ties keep the earliest start. `starts` and `seed` can be overridden per call.

    Args:
        starts: Number of independent starts
        seed: Root seed of the per-start streams
        fatal: Exceptions that abort immediately instead of moving to the next start
    """
    def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
        @wraps(func)
        def wrapper(*args, starts: int = starts, seed: Optional[int] = seed, **kwargs) -> Any:
            streams = np.random.SeedSequence(seed).spawn(starts)
            best = None
            last_exception = None

            for attempt, stream in enumerate(streams):
                try:
                    result = func(*args, rng=np.random.default_rng(stream), **kwargs)
                except fatal:
                    raise
                except Exception as e:
                    last_exception = e
                    print(f"⚠️  Start {attempt + 1}/{starts} failed: {e}")
                    continue
                if best is None or result.score < best.score:
                    best = result

            if best is None:
                print(f"❌ All {starts} starts failed")
                raise MultistartExhausted(
                    f"Failed after {starts} starts. Last error: {last_exception}"
                )
            return best

        return wrapper
    return decorator
