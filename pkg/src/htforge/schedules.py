"""Per-benchmark training budgets.

Budgets start from the smallest benchmark circuit and grow by 10% per
size rank, on the theory that the search space grows with the net count.
Insertion scales both the step budget and the episode length; detection
episodes are a fixed ten flips, so only the step budget scales.
"""

from .benchmarks import BENCHMARKS

GROWTH = 1.1

INSERTION_BASE_TIMESTEPS = 120_000
INSERTION_BASE_EPISODE_LENGTH = 450

DETECTION_BASE_TIMESTEPS = 450_000
DETECTION_EPISODE_LENGTH = 10

# the nine full-size benchmarks, ascending net count (c17 is a toy)
SCHEDULED = tuple(n for n in BENCHMARKS if n != "c17")


def insertion_schedule() -> dict:
    out = {}
    for rank, name in enumerate(SCHEDULED):
        scale = GROWTH ** rank
        out[name] = {
            "timesteps": int(round(INSERTION_BASE_TIMESTEPS * scale)),
            "episode_length": int(round(INSERTION_BASE_EPISODE_LENGTH * scale)),
        }
    return out


def detection_schedule() -> dict:
    out = {}
    for rank, name in enumerate(SCHEDULED):
        scale = GROWTH ** rank
        out[name] = {
            "timesteps": int(round(DETECTION_BASE_TIMESTEPS * scale)),
            "episode_length": DETECTION_EPISODE_LENGTH,
        }
    return out
