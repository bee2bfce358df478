"""Strict INI scenario files.

Example::

    [scenario]
    base = paper_sec4
    mode = transform

    [obstacle]
    x = 35
    y = 14
    r = 5

Every key maps to one :class:`~mcbf.sim.ScenarioConfig` field. Unknown
sections or keys, duplicates, keys outside a section and unparsable values
are rejected with the offending line number.
"""
from __future__ import annotations

import configparser
import re
from pathlib import Path

from .sim import ConfigError, ScenarioConfig

# (section, key) -> (field, parser)
_FLOAT, _INT, _STR = "float", "int", "str"

SCHEMA: dict[tuple[str, str], tuple[str, str]] = {
    ("scenario", "base"): ("", _STR),
    ("scenario", "name"): ("name", _STR),
    ("scenario", "mode"): ("mode", _STR),
    ("model", "M"): ("M", _FLOAT),
    ("model", "d"): ("d", _FLOAT),
    ("model", "r_b"): ("r_b", _FLOAT),
    ("obstacle", "x"): ("obstacle_x", _FLOAT),
    ("obstacle", "y"): ("obstacle_y", _FLOAT),
    ("obstacle", "r"): ("r", _FLOAT),
    ("target", "x"): ("target_x", _FLOAT),
    ("target", "y"): ("target_y", _FLOAT),
    ("target", "p"): ("p", _FLOAT),
    ("target", "v_ref"): ("v_ref", _FLOAT),
    ("target", "goal_tol"): ("goal_tol", _FLOAT),
    ("bounds", "v_min"): ("v_min", _FLOAT),
    ("bounds", "v_max"): ("v_max", _FLOAT),
    ("bounds", "phi_min"): ("phi_min", _FLOAT),
    ("bounds", "phi_max"): ("phi_max", _FLOAT),
    ("bounds", "u1_min"): ("u1_min", _FLOAT),
    ("bounds", "u1_max"): ("u1_max", _FLOAT),
    ("bounds", "u2_min"): ("u2_min", _FLOAT),
    ("bounds", "u2_max"): ("u2_max", _FLOAT),
    ("initial", "x"): ("x0.0", _FLOAT),
    ("initial", "y"): ("x0.1", _FLOAT),
    ("initial", "v"): ("x0.2", _FLOAT),
    ("initial", "theta"): ("x0.3", _FLOAT),
    ("initial", "phi"): ("x0.4", _FLOAT),
    ("sim", "dt"): ("dt", _FLOAT),
    ("sim", "t_f"): ("t_f", _FLOAT),
    ("sim", "integrator"): ("integrator", _STR),
    ("sim", "seed"): ("seed", _INT),
    ("controller", "k_alpha"): ("k_alpha", "floats"),
    ("controller", "k_bound"): ("k_bound", _FLOAT),
    ("controller", "k_limits"): ("k_limits", _FLOAT),
    ("controller", "clf_rate"): ("clf_rate", _FLOAT),
    ("controller", "p_slack"): ("p_slack", _FLOAT),
    ("controller", "k_theta"): ("k_theta", _FLOAT),
    ("controller", "k_v"): ("k_v", _FLOAT),
    ("controller", "rho_slow"): ("rho_slow", _FLOAT),
    ("controller", "nu_box_factor"): ("nu_box_factor", _FLOAT),
    ("controller", "probes"): ("probes", _INT),
}
SECTIONS = tuple(dict.fromkeys(s for s, _ in SCHEMA))

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^([^\s=:#;][^=:]*?)\s*[=:]")


class ConfigFileError(ConfigError):
    def __init__(self, source: str, line: int | None, field_name: str, message: str):
        where = f"{source}:{line}" if line else source
        ValueError.__init__(self, f"{where}: {field_name}: {message}")
        self.field = field_name
        self.line = line
        self.source = source


def _key_lines(text: str) -> dict:
    """Line number of every ``(section, key)`` assignment."""
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


def _parse_value(kind: str, raw: str):
    if kind == _STR:
        return raw.strip()
    if kind == _INT:
        return int(raw)
    if kind == "floats":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return float(raw)


def parse_config(text: str, base: ScenarioConfig | None = None, source: str = "<config>",
                 registry: dict | None = None) -> tuple[ScenarioConfig, dict]:
    """Parse INI text on top of ``base``.

    Returns:
        The validated config and a map ``field -> line`` of the keys set.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False,
                                       default_section="\x00")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigFileError(source, exc.lineno, "<section>", "key outside of a [section]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigFileError(source, exc.lineno, exc.section, "duplicate section") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigFileError(source, exc.lineno, f"{exc.section}.{exc.option}", "duplicate key") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigFileError(source, lineno, "<syntax>", "cannot parse line") from None

    lines = _key_lines(text)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigFileError(source, lines.get((section, None)), section,
                                  f"unknown section; expected one of {', '.join(SECTIONS)}")
        for key in parser[section]:
            if (section, key) not in SCHEMA:
                known = sorted(k for s, k in SCHEMA if s == section)
                raise ConfigFileError(source, lines.get((section, key)), f"{section}.{key}",
                                      f"unknown key; known keys: {', '.join(known)}")

    cfg = base or ScenarioConfig()
    if parser.has_option("scenario", "base"):
        from .scenarios import SCENARIOS
        name = parser["scenario"]["base"].strip()
        reg = registry or SCENARIOS
        if name not in reg:
            raise ConfigFileError(source, lines.get(("scenario", "base")), "scenario.base",
                                  f"unknown scenario {name!r}")
        cfg = reg[name]

    overrides, where = {}, {}
    x0 = list(cfg.x0)
    for section in parser.sections():
        for key, raw in parser[section].items():
            fname, kind = SCHEMA[(section, key)]
            if not fname:
                continue
            line = lines.get((section, key))
            try:
                value = _parse_value(kind, raw)
            except ValueError:
                raise ConfigFileError(source, line, f"{section}.{key}",
                                      f"expected {kind}, got {raw!r}") from None
            if fname.startswith("x0."):
                x0[int(fname[3:])] = value
                where.setdefault("x0", line)
            else:
                overrides[fname] = value
                where[fname] = line
    if "x0" in where:
        overrides["x0"] = tuple(x0)
    cfg = cfg.with_overrides(**overrides)
    try:
        cfg.validate()
    except ConfigFileError:
        raise
    except ConfigError as exc:
        line = where.get(exc.field)
        key = _field_key(exc.field)
        raise ConfigFileError(source, line, key, str(exc).split(": ", 1)[1]) from None
    return cfg, where


def _field_key(field_name: str) -> str:
    for (section, key), (fname, _) in SCHEMA.items():
        if fname == field_name:
            return f"{section}.{key}"
    if field_name == "x0":
        return "initial"
    return field_name


def load_config(path, base: ScenarioConfig | None = None) -> tuple[ScenarioConfig, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(str(path), None, "config", f"cannot read file ({exc.strerror})") from None
    return parse_config(text, base, source=str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    """INI text that parses back to ``cfg``."""
    by_section: dict[str, list[str]] = {}
    d = cfg.to_dict()
    for (section, key), (fname, kind) in SCHEMA.items():
        if not fname:
            continue
        if fname.startswith("x0."):
            value = d["x0"][int(fname[3:])]
        else:
            value = d[fname]
        if value is None:
            continue
        if kind == "floats":
            if not value:
                continue
            text = ", ".join(repr(float(v)) for v in value)
        elif kind == _FLOAT:
            text = repr(float(value))
        else:
            text = str(value)
        by_section.setdefault(section, []).append(f"{key} = {text}")
    return "\n\n".join(f"[{s}]\n" + "\n".join(rows) for s, rows in by_section.items()) + "\n"
