"""Reading and writing model and class-parameter files.

Both formats are JSON documents; see ``schemas/`` in the repository for
the full field-by-field description. Writing then reading a model yields
an equal model (floats survive the round trip exactly).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .classes import PatientClass, UnknownClassError
from .game import (
    ALPHABET,
    Action,
    ClassParams,
    GameShape,
    Pdfa,
    build_match_items,
    DEFAULT_CLASS_PARAMS,
    DEFAULT_SHAPE,
)


class ModelFormatError(ValueError):
    """Malformed model or class-parameter document."""


_ACTION_NAMES = {a.name.lower(): a for a in ALPHABET}


def model_to_dict(model: Pdfa) -> dict[str, Any]:
    transitions = [
        {
            "from": src,
            "action": action.name.lower(),
            "to": model.transition[(src, action)],
            "prob": model.prob.get((src, action, model.transition[(src, action)]), 0.0),
        }
        for (src, action) in sorted(
            model.transition, key=lambda k: (model.state_index[k[0]], k[1].value)
        )
    ]
    return {
        "states": list(model.states),
        "alphabet": [a.name.lower() for a in model.alphabet],
        "initial": model.initial,
        "finals": sorted(model.finals),
        "transitions": transitions,
        "labels": {s: sorted(atoms) for s, atoms in model.labels.items() if atoms},
    }


def model_from_dict(data: Mapping[str, Any]) -> Pdfa:
    if not isinstance(data, Mapping):
        raise ModelFormatError("model document must be an object")
    for key in ("states", "alphabet", "initial", "finals", "transitions", "labels"):
        if key not in data:
            raise ModelFormatError(f"model document missing field {key!r}")

    states = tuple(str(s) for s in data["states"])
    known = set(states)
    if len(known) != len(states):
        raise ModelFormatError("duplicate state identifiers")

    alphabet = []
    for name in data["alphabet"]:
        action = _ACTION_NAMES.get(str(name))
        if action is None:
            raise ModelFormatError(f"unknown action name {name!r}")
        alphabet.append(action)

    transition: dict[tuple[str, Action], str] = {}
    prob: dict[tuple[str, Action, str], float] = {}
    for i, entry in enumerate(data["transitions"]):
        try:
            src, name, dst, p = entry["from"], entry["action"], entry["to"], entry["prob"]
        except (TypeError, KeyError) as exc:
            raise ModelFormatError(f"transition #{i} missing field {exc}") from None
        action = _ACTION_NAMES.get(str(name))
        if action is None:
            raise ModelFormatError(f"transition #{i}: unknown action name {name!r}")
        if src not in known or dst not in known:
            raise ModelFormatError(f"transition #{i}: unknown state in {src!r}->{dst!r}")
        key = (src, action)
        if key in transition and transition[key] != dst:
            raise ModelFormatError(
                f"transition #{i}: nondeterministic on ({src!r}, {name}): "
                f"{transition[key]!r} vs {dst!r}"
            )
        transition[key] = dst
        prob[(src, action, dst)] = float(p)

    labels = {}
    for state, atoms in dict(data["labels"]).items():
        if state not in known:
            raise ModelFormatError(f"label on unknown state {state!r}")
        labels[state] = frozenset(str(a) for a in atoms)

    return Pdfa(
        states=states,
        alphabet=tuple(alphabet),
        transition=transition,
        prob=prob,
        initial=str(data["initial"]),
        finals=frozenset(str(f) for f in data["finals"]),
        labels=labels,
    )


def save_model(model: Pdfa, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path: str | Path) -> Pdfa:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from None
    return model_from_dict(data)


def models_equal(a: Pdfa, b: Pdfa) -> bool:
    """Structural equality (Pdfa itself uses identity semantics)."""
    return model_to_dict(a) == model_to_dict(b)


def class_params_to_dict(params: Mapping[PatientClass, ClassParams]) -> dict[str, Any]:
    return {
        cls.code: {
            "alpha": p.p_alpha,
            "beta": p.p_beta,
            "gamma": p.p_gamma,
            "theta": p.p_theta,
        }
        for cls, p in params.items()
    }


def class_params_from_dict(data: Mapping[str, Any]) -> dict[PatientClass, ClassParams]:
    if not isinstance(data, Mapping):
        raise ModelFormatError("class-parameter document must be an object")
    out = {}
    for code, row in data.items():
        try:
            cls = PatientClass.from_code(str(code))
        except UnknownClassError as exc:
            raise ModelFormatError(str(exc)) from None
        try:
            out[cls] = ClassParams(
                float(row["alpha"]), float(row["beta"]),
                float(row["gamma"]), float(row["theta"]),
            )
        except (TypeError, KeyError) as exc:
            raise ModelFormatError(f"class {code!r}: missing action field {exc}") from None
    return out


def save_class_params(params: Mapping[PatientClass, ClassParams], path: str | Path) -> None:
    Path(path).write_text(json.dumps(class_params_to_dict(params), indent=2) + "\n")


def load_class_params(path: str | Path) -> dict[PatientClass, ClassParams]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from None
    return class_params_from_dict(data)


BUILTIN_PREFIX = "builtin:"


def resolve_model(spec: str, shape: GameShape = DEFAULT_SHAPE) -> Pdfa:
    """Resolve a CLI model argument: a file path or ``builtin:h|m|M``."""
    if spec.startswith(BUILTIN_PREFIX):
        code = spec[len(BUILTIN_PREFIX):]
        cls = PatientClass.from_code(code)
        return build_match_items(DEFAULT_CLASS_PARAMS[cls], shape)
    return load_model(spec)
