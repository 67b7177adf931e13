"""Reading and writing degeneration spec files.

A spec file is a JSON document::

    {
      "rank": 1,
      "rays": [[1], [-1]],
      "weights": ["0", "1"],
      "eta": 10,
      "tau_grid": [1000.0, 10000.0],
      "rho": "one",
      "analyses": ["check"],
      "atlas": {
        "charts": {"p": {"rays": [[1], [-1]], "weights": ["0", "1/2"]}},
        "incidences": [{"from": "p", "to": "q", "map": [[[1], [1]]]}]
      }
    }

Weights are strings ``"p/q"`` so that exact rationals survive the round
trip. Only ``rays`` and ``weights`` are required (``rays`` may be omitted
when an atlas is given).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .degeneration import DEFAULT_TAU_GRID, DegenerationSpec, SpecError, ToroidalAtlas

FORMAT_VERSION = 1
_RATIONAL = re.compile(r"^\s*[+-]?\d+(\s*/\s*\d+)?\s*$")


class SpecFileError(ValueError):
    """Malformed spec file; ``line`` points into the source text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _rational(x, where, text):
    if isinstance(x, bool):
        raise SpecFileError(f"{where}: expected a rational, got {x!r}", _line_of(text, where))
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str) and _RATIONAL.match(x):
        try:
            return Fraction(x.replace(" ", ""))
        except ZeroDivisionError:
            pass
    raise SpecFileError(f"{where}: expected a rational 'p/q' string, got {x!r}", _line_of(text, where))


def _rays(x, where, text):
    if not isinstance(x, list) or not x:
        raise SpecFileError(f"{where}: expected a non-empty list of integer vectors", _line_of(text, where))
    out = []
    for r in x:
        if not isinstance(r, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in r):
            raise SpecFileError(f"{where}: ray {r!r} is not an integer vector", _line_of(text, where))
        out.append(tuple(r))
    return out


def format_rational(q: Fraction) -> str:
    return str(Fraction(q))


@dataclass
class ChartEntry:
    rays: list
    weights: list


@dataclass
class SpecFile:
    """Parsed spec file, kept close to the text for faithful round trips."""

    rank: int
    rays: list
    weights: list
    eta: float = 10.0
    tau_grid: list = field(default_factory=lambda: list(DEFAULT_TAU_GRID))
    rho: str = "one"
    analyses: list = field(default_factory=list)
    charts: dict = field(default_factory=dict)
    incidences: list = field(default_factory=list)  # (from, to, [(ray, image)])
    name: str | None = None

    def to_spec(self) -> DegenerationSpec:
        if not self.rays:
            raise SpecError("spec has no rays")
        return DegenerationSpec(self.rays, self.weights, self.eta, self.tau_grid, self.rho, name=self.name)

    def to_atlas(self) -> ToroidalAtlas:
        charts = {k: DegenerationSpec(c.rays, c.weights, self.eta, self.tau_grid, self.rho, name=k)
                  for k, c in self.charts.items()}
        inc = {}
        for p, q, pairs in self.incidences:
            inc[(p, q)] = {tuple(a): tuple(b) for a, b in pairs}
        return ToroidalAtlas(charts, inc)

    def to_json(self) -> dict:
        doc = {"format": FORMAT_VERSION, "rank": self.rank,
               "rays": [list(r) for r in self.rays],
               "weights": [format_rational(w) for w in self.weights],
               "eta": self.eta, "tau_grid": list(self.tau_grid), "rho": self.rho}
        if self.name is not None:
            doc["name"] = self.name
        if self.analyses:
            doc["analyses"] = list(self.analyses)
        if self.charts:
            doc["atlas"] = {
                "charts": {k: {"rays": [list(r) for r in c.rays],
                               "weights": [format_rational(w) for w in c.weights]}
                           for k, c in sorted(self.charts.items())},
                "incidences": [{"from": p, "to": q, "map": [[list(a), list(b)] for a, b in pairs]}
                               for p, q, pairs in self.incidences],
            }
        return doc


def dumps(sf: SpecFile) -> str:
    return json.dumps(sf.to_json(), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> SpecFile:
    """Parse spec text.

    Raises
    ------
    SpecFileError
        With the offending line number for syntax and field errors.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(exc.msg, exc.lineno) from exc
    if not isinstance(doc, dict):
        raise SpecFileError("top level must be an object", 1)
    version = doc.get("format", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SpecFileError(f"unsupported format version {version!r}", _line_of(text, "format"))
    atlas = doc.get("atlas")
    if "rays" in doc or atlas is None:
        rays = _rays(doc.get("rays"), "rays", text)
        if "weights" not in doc or not isinstance(doc["weights"], list):
            raise SpecFileError("weights: expected a list", _line_of(text, "weights") or 1)
        weights = [_rational(w, "weights", text) for w in doc["weights"]]
        if len(weights) != len(rays):
            raise SpecFileError("weights: length differs from rays", _line_of(text, "weights"))
    else:
        rays, weights = [], []
    rank = doc.get("rank", len(rays[0]) if rays else None)
    if not isinstance(rank, int) or isinstance(rank, bool) or rank < 1:
        raise SpecFileError(f"rank: expected a positive integer, got {rank!r}", _line_of(text, "rank") or 1)
    if any(len(r) != rank for r in rays):
        raise SpecFileError("rays: dimension differs from rank", _line_of(text, "rays"))
    eta = doc.get("eta", 10.0)
    if not isinstance(eta, (int, float)) or isinstance(eta, bool) or eta <= 0:
        raise SpecFileError("eta: expected a positive number", _line_of(text, "eta"))
    grid = doc.get("tau_grid", list(DEFAULT_TAU_GRID))
    if (not isinstance(grid, list) or not grid
            or not all(isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in grid)):
        raise SpecFileError("tau_grid: expected a list of positive numbers", _line_of(text, "tau_grid"))
    rho = doc.get("rho", "one")
    from .model_metrics import RHO_PROFILES

    if rho not in RHO_PROFILES:
        raise SpecFileError(f"rho: unknown profile {rho!r}", _line_of(text, "rho"))
    analyses = doc.get("analyses", [])
    if not isinstance(analyses, list) or not all(isinstance(a, str) for a in analyses):
        raise SpecFileError("analyses: expected a list of names", _line_of(text, "analyses"))
    charts, incidences = {}, []
    if atlas is not None:
        if not isinstance(atlas, dict) or not isinstance(atlas.get("charts"), dict):
            raise SpecFileError("atlas: expected an object with 'charts'", _line_of(text, "atlas"))
        for k, c in atlas["charts"].items():
            if not isinstance(c, dict):
                raise SpecFileError(f"chart {k!r}: expected an object", _line_of(text, k))
            cr = _rays(c.get("rays"), k, text)
            cw = [_rational(w, k, text) for w in c.get("weights", [])]
            if len(cw) != len(cr):
                raise SpecFileError(f"chart {k!r}: weights/rays length mismatch", _line_of(text, k))
            charts[k] = ChartEntry(cr, cw)
        for inc in atlas.get("incidences", []):
            try:
                p, q = inc["from"], inc["to"]
                pairs = [(tuple(a), tuple(b)) for a, b in inc["map"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecFileError(f"incidences: malformed entry {inc!r}",
                                    _line_of(text, "incidences")) from exc
            incidences.append((p, q, pairs))
    name = doc.get("name")
    return SpecFile(rank, rays, weights, float(eta), [float(t) for t in grid], rho,
                    analyses, charts, incidences, name)


def load(path) -> SpecFile:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def from_spec(spec: DegenerationSpec) -> SpecFile:
    """Spec file for an existing spec (its stored, possibly reduced, data)."""
    return SpecFile(spec.rank, [tuple(r) for r in spec.rays], list(spec.weights), spec.eta,
                    list(spec.tau_grid), spec.rho, name=spec.name)
