"""Runnable demonstration scenarios."""

from .base import Scenario
from .district import DistrictTraffic
from .village import VillageIndicators

_REGISTRY = {
    DistrictTraffic.name: DistrictTraffic,
    VillageIndicators.name: VillageIndicators,
}


def registry() -> dict[str, type[Scenario]]:
    return dict(_REGISTRY)


def get_scenario(name: str) -> Scenario:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r} (available: {sorted(_REGISTRY)})") from None


__all__ = ["Scenario", "DistrictTraffic", "VillageIndicators", "registry", "get_scenario"]
