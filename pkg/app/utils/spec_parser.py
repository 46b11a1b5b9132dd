import dataclasses
import os
import re

from app.config import FLOAT_FORMAT
from app.utils.algebra import GaudinKind, LevelSet
from app.utils.errors import GaudinError, SpecParseError, SpecValidationError
from app.utils.rg_core import DickeSpec, ModelSpec

LINE_RE = re.compile(r"^(\s*)([A-Za-z_][A-Za-z0-9_]*)(\s*=\s*)(.*?)\s*$")

RG_KEYS = {"model", "kind", "etas", "spins", "degeneracies", "g", "N", "units"}
DICKE_KEYS = {"model", "epsilons", "spins", "G", "hbar_omega", "N", "units"}
LIST_KEYS = {"etas", "spins", "degeneracies", "epsilons"}
WORD_KEYS = {"model", "kind", "units"}
# --set keys consumed by the run configuration rather than the model.
RUN_KEYS = {"newton_tol", "cutoff", "initial_step", "min_step", "max_step", "omega0", "seed"}
MODEL_OVERRIDE_KEYS = {"g", "G", "hbar_omega", "N"}

RG_UNITS = "dimensionless (eta and g are Gaudin parameters)"
DICKE_UNITS = "energy (epsilons, G and hbar_omega share one unit)"


def _number(token, line_no, column):
    try:
        return float(token)
    except ValueError:
        raise SpecParseError(f"Not a number: {token!r}", line_no, column) from None


def _parse_value(key, raw, line_no, column):
    if key in WORD_KEYS:
        if not raw:
            raise SpecParseError(f"Empty value for {key}", line_no, column)
        return raw
    if key in LIST_KEYS:
        if not (raw.startswith("[") and raw.endswith("]")):
            raise SpecParseError(f"{key} must be a bracketed list", line_no, column)
        inner = raw[1:-1]
        if not inner.strip():
            return []
        values, offset = [], column + 1
        for token in inner.split(","):
            stripped = token.strip()
            values.append(_number(stripped, line_no, offset + len(token) - len(token.lstrip())))
            offset += len(token) + 1
        return values
    return _number(raw, line_no, column)


def parse_spec_text(text, source="<string>"):
    """Parse key = value lines ('#' starts a comment) into a validated spec."""
    entries = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0]
        if not content.strip():
            continue
        match = LINE_RE.match(content)
        if not match:
            column = len(content) - len(content.lstrip()) + 1
            raise SpecParseError(f"{source}: expected 'key = value'", line_no, column)
        indent, key, eq, raw = match.groups()
        if key in entries:
            raise SpecParseError(f"{source}: duplicate key {key!r}", line_no, len(indent) + 1)
        column = len(indent) + len(key) + len(eq) + 1
        entries[key] = (_parse_value(key, raw, line_no, column), line_no)
    return _build(entries, source)


def parse_spec(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Spec file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_spec_text(f.read(), source=str(path))


def _require(entries, key, model):
    if key not in entries:
        raise SpecValidationError(f"{model} spec is missing {key!r}")
    return entries[key][0]


def _count(value, name):
    if value != int(value) or value < 1:
        raise SpecValidationError(f"{name} = {value:g} must be an integer >= 1")
    return int(value)


def _build(entries, source):
    if "model" not in entries:
        raise SpecValidationError(f"{source}: spec is missing 'model'")
    model, line_no = entries["model"]
    allowed = {"rg": RG_KEYS, "dicke": DICKE_KEYS}.get(model)
    if allowed is None:
        raise SpecParseError(f"Unknown model {model!r} (expected rg or dicke)", line_no, 1)
    for key, (_, key_line) in entries.items():
        if key not in allowed:
            raise SpecParseError(f"Key {key!r} is not valid for model {model}", key_line, 1)
    try:
        if model == "rg":
            return _build_rg(entries)
        return _build_dicke(entries)
    except SpecValidationError:
        raise
    except GaudinError as e:
        raise SpecValidationError(str(e)) from e


def _build_rg(entries):
    kind = entries.get("kind", ("trigonometric", 0))[0]
    try:
        kind = GaudinKind(kind)
    except ValueError:
        raise SpecValidationError(f"kind must be rational or trigonometric, got {kind!r}") from None
    etas = _require(entries, "etas", "rg")
    if "spins" in entries and "degeneracies" in entries:
        raise SpecValidationError("Give spins or degeneracies, not both")
    if "spins" in entries:
        levels = LevelSet.from_spins(etas, entries["spins"][0])
    elif "degeneracies" in entries:
        degeneracies = entries["degeneracies"][0]
        if any(d != int(d) for d in degeneracies):
            raise SpecValidationError("degeneracies must be integers")
        levels = LevelSet.from_degeneracies(etas, [int(d) for d in degeneracies])
    else:
        raise SpecValidationError("rg spec needs spins or degeneracies")
    n = _count(_require(entries, "N", "rg"), "N")
    return ModelSpec(levels, kind, n, _require(entries, "g", "rg"))


def _build_dicke(entries):
    n = _count(_require(entries, "N", "dicke"), "N")
    hbar_omega = _require(entries, "hbar_omega", "dicke")
    if not hbar_omega > 0:
        raise SpecValidationError(f"hbar_omega = {hbar_omega:g} must be positive")
    return DickeSpec(
        _require(entries, "epsilons", "dicke"),
        _require(entries, "spins", "dicke"),
        _require(entries, "G", "dicke"),
        hbar_omega,
        n,
    )


def _fmt(value):
    return FLOAT_FORMAT % value


def _fmt_list(values):
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def emit_spec(spec):
    """Spec file text that parses back to an equal spec."""
    if isinstance(spec, DickeSpec):
        lines = [
            f"# units: {DICKE_UNITS}",
            "model = dicke",
            f"epsilons = {_fmt_list(spec.epsilons)}",
            f"spins = {_fmt_list(spec.spins)}",
            f"G = {_fmt(spec.coupling_G)}",
            f"hbar_omega = {_fmt(spec.hbar_omega)}",
            f"N = {spec.n_excitations}",
        ]
    else:
        lines = [
            f"# units: {RG_UNITS}",
            "model = rg",
            f"kind = {spec.kind.value}",
            f"etas = {_fmt_list(spec.levels.etas)}",
            f"spins = {_fmt_list(spec.levels.spins)}",
            f"g = {_fmt(spec.coupling_g)}",
            f"N = {spec.n_excitations}",
        ]
    return "\n".join(lines) + "\n"


def with_overrides(spec, overrides):
    """Apply g / G / hbar_omega / N overrides from the command line.

    Run-level keys (RUN_KEYS) pass through untouched; any other key the
    model does not have is rejected.
    """
    if not overrides:
        return spec
    names = {"N": "n_excitations"}
    if isinstance(spec, DickeSpec):
        names.update({"G": "coupling_G", "hbar_omega": "hbar_omega"})
    else:
        names.update({"g": "coupling_g"})
    changes = {}
    for key, value in overrides.items():
        if key in RUN_KEYS:
            continue
        if key not in names:
            known = ", ".join(sorted(set(names) | RUN_KEYS))
            raise SpecValidationError(f"Unknown override {key!r}; expected one of {known}")
        try:
            number = float(value)
        except ValueError:
            raise SpecValidationError(f"Override {key}={value!r} is not a number") from None
        changes[names[key]] = _count(number, key) if key == "N" else number
    try:
        return dataclasses.replace(spec, **changes)
    except GaudinError as e:
        raise SpecValidationError(str(e)) from e
