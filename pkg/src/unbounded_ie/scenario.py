"""Scenario files: one INI file describes one run.

Sections and keys (all optional unless the subcommand needs them)::

    [scenario]      name, seed
    [domain]        kind (half_line | real_line | box_rn), dimension, exhaustion (comma list)
    [kernel]        name (registry key), any kernel parameters, file (tabulated)
    [operator]      kind (fredholm | hammerstein | urysohn | volterra)
    [nonlinearity]  name (registry key) and parameters
    [grid]          output (lo, hi, count), truncation (auto | T), panels, panel_width, eps_tail
    [input]         profile (constant | unit_ball | exp_decay), value
    [solver]        lambda, tol, max_iter, alpha, search_max, M_grid
    [check]         eps, conditions, M, directions
    [certify]       eps, family_size, holdout_size
    [volterra]      m (comma list), family_size

Errors carry ``file:line``.
"""
from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .core import Domain


class ScenarioError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path, self.lineno = path, lineno


def _locate(text: str, section: str, key: str | None = None) -> int:
    """1-based line of ``key`` in ``section`` (or of the section header)."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            if re.match(rf"{re.escape(key)}\s*[=:]", s, flags=re.IGNORECASE):
                return i
    return 1


@dataclass
class Scenario:
    path: str
    text: str
    sections: dict
    name: str = "scenario"
    seed: int | None = None
    domain: Domain = field(default_factory=Domain)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def section(self, name) -> dict:
        return dict(self.sections.get(name, {}))

    def has(self, name) -> bool:
        return name in self.sections

    def error(self, section, key, msg):
        return ScenarioError(self.path, _locate(self.text, section, key), msg)

    def get(self, section, key, conv=str, default=None, required=False):
        key = key.lower()  # configparser folds key case
        sec = self.sections.get(section, {})
        if key not in sec:
            if required:
                raise self.error(section, None, f"[{section}] needs '{key}'")
            return default
        try:
            return conv(sec[key])
        except (ValueError, TypeError) as exc:
            raise self.error(section, key, f"bad value for {key}: {exc}") from None

    def floats(self, section, key, default=None, required=False):
        return self.get(section, key, parse_floats, default, required)


def parse_floats(s: str) -> list:
    return [float(t) for t in s.replace(";", ",").split(",") if t.strip()]


def parse_linspace(s: str):
    vals = parse_floats(s)
    if len(vals) != 3 or vals[2] < 1 or vals[2] != int(vals[2]):
        raise ValueError("expected 'lo, hi, count'")
    return np.linspace(vals[0], vals[1], int(vals[2]))


def load(path) -> Scenario:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(path, 1, f"cannot read scenario: {exc.strerror}") from None
    if not text.strip():
        raise ScenarioError(path, 1, "empty scenario file")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError(path, exc.lineno, "expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 1
        raise ScenarioError(path, lineno, "unparsable line") from None
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError(path, exc.lineno or 1, f"duplicate key {exc.option!r}") from None
    except configparser.DuplicateSectionError as exc:
        raise ScenarioError(path, exc.lineno or 1, f"duplicate section {exc.section!r}") from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    sc = Scenario(path, text, sections)
    sc.name = sc.get("scenario", "name", default=os.path.splitext(os.path.basename(path))[0])
    sc.seed = sc.get("scenario", "seed", int)
    kind = sc.get("domain", "kind", default="real_line")
    dim = sc.get("domain", "dimension", int, default=1)
    radii = sc.floats("domain", "exhaustion")
    try:
        sc.domain = Domain(kind, dim, tuple(radii)) if radii else Domain(kind, dim)
    except ValueError as exc:
        raise sc.error("domain", "kind", str(exc)) from None
    return sc
