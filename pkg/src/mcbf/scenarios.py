"""Named scenarios and a generator of random feasible variations."""
from __future__ import annotations

import numpy as np

from .sim import ConfigError, Controller, ScenarioConfig

SCENARIOS: dict[str, ScenarioConfig] = {
    "paper_sec4": ScenarioConfig(),
}


def get_scenario(name: str) -> ScenarioConfig:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError("scenario", f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


def random_scenario(rng: np.random.Generator, mode: str, base: ScenarioConfig | None = None,
                    t_f: float = 12.0, max_tries: int = 100) -> tuple[ScenarioConfig, Controller]:
    """Draw obstacle position, radius and initial heading until the start is admissible.

    Returns the config together with its (already built) controller, so the
    caller does not pay the construction cost twice.
    """
    base = base or SCENARIOS["paper_sec4"]
    for _ in range(max_tries):
        x0 = list(base.x0)
        x0[3] = float(rng.uniform(-0.6, 0.6))
        x0[2] = float(rng.uniform(0.0, base.v_max))
        cfg = base.with_overrides(
            mode=mode,
            obstacle_x=float(rng.uniform(18.0, 45.0)),
            obstacle_y=float(rng.uniform(7.0, 23.0)),
            r=float(rng.uniform(2.0, 7.0)),
            x0=tuple(x0),
            t_f=t_f,
        )
        try:
            cfg.validate()
            ctl = Controller(cfg)
            ctl.validate_start(np.array(cfg.x0), ctl.initial_aux())
        except ConfigError:
            continue
        return cfg, ctl
    raise RuntimeError("could not draw an admissible scenario")
