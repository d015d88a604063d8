"""JSON loading, schema validation and canonical serialization."""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .capacity_zeno import CapacitySchedule, ConvolutionBridge, ScheduleTerm
from .errors import ParseError, SchemaError
from .kernel_core import DEFAULT_TOL, Dist, Kernel, ToleranceConfig, stationary, validate_kernel
from .lens_packaging import Lens, PrototypeSet
from .protocol_models import ProtocolFamily

__all__ = [
    "load_json",
    "input_schema",
    "report_schema",
    "validate_input",
    "validate_report",
    "canonical_dumps",
    "digest",
    "kernel_from_json",
    "dist_from_json",
    "lens_from_json",
    "prototypes_from_json",
    "protocol_from_json",
    "bridge_from_json",
    "schedule_from_json",
    "to_jsonable",
]

SCHEMA_VERSION = "v1"


@lru_cache(maxsize=None)
def _schema_doc(name: str) -> dict:
    text = resources.files("emcalc").joinpath("schemas", f"{name}.{SCHEMA_VERSION}.json").read_text()
    return json.loads(text)


def _command_schema(doc: dict, command: str) -> dict:
    try:
        body = doc["commands"][command]
    except KeyError:
        raise SchemaError(f"no schema for command {command!r}") from None
    return {"$schema": doc["$schema"], "$id": f"{doc['$id']}/{command}",
            "$defs": doc["$defs"], **body}


def input_schema(command: str) -> dict:
    return _command_schema(_schema_doc("inputs"), command)


def report_schema(command: str) -> dict:
    return _command_schema(_schema_doc("reports"), command)


def _validate(instance, schema, what: str):
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(instance))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{what} invalid at {where}: {err.message}")


def validate_input(command: str, data) -> None:
    _validate(data, input_schema(command), f"{command} input")


def validate_report(command: str, report) -> None:
    _validate(report, report_schema(command), f"{command} report")


def load_json(path) -> object:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def to_jsonable(obj):
    """Plain JSON types; numpy scalars and arrays are unwrapped."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def canonical_dumps(obj, indent: int | None = 2) -> str:
    """Sorted keys, shortest round-trip floats, no NaN or infinity."""
    seps = (",", ": ") if indent else (",", ":")
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=indent,
                      separators=seps, allow_nan=False, ensure_ascii=True)


def digest(obj) -> str:
    return "sha256:" + hashlib.sha256(canonical_dumps(obj, indent=None).encode()).hexdigest()


def kernel_from_json(data: dict, cfg: ToleranceConfig = DEFAULT_TOL) -> Kernel:
    return validate_kernel(data["rows"], cfg, data.get("states"))


def dist_from_json(data, P: Kernel | None = None, cfg: ToleranceConfig = DEFAULT_TOL) -> Dist:
    """``{"weights": [...]}`` or the shorthands ``"uniform"`` and ``"stationary"``."""
    if data == "uniform":
        if P is None:
            raise SchemaError("'uniform' needs a kernel for its size")
        return Dist.uniform(P.dim)
    if data == "stationary":
        if P is None:
            raise SchemaError("'stationary' needs a kernel")
        return stationary(P, cfg)
    w = np.asarray(data["weights"], dtype=float)
    if np.any(w < 0) or not abs(w.sum() - 1.0) <= 1e-12:
        raise SchemaError("weights must be nonnegative and sum to 1 within 1e-12")
    return Dist(w)


def lens_from_json(data: dict) -> Lens:
    return Lens(tuple(data["assignment"]), tuple(data.get("labels", ())))


def prototypes_from_json(data, lens: Lens) -> PrototypeSet:
    if data is None or data == "uniform":
        return PrototypeSet.uniform(lens)
    missing = set(lens.labels) - set(data)
    extra = set(data) - set(lens.labels)
    if missing or extra:
        raise SchemaError(f"prototype labels mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    return PrototypeSet(lens, np.array([data[label] for label in lens.labels], dtype=float))


def protocol_from_json(data: dict, cfg: ToleranceConfig = DEFAULT_TOL) -> ProtocolFamily:
    return ProtocolFamily(kernel_from_json(data["phase_kernel"], cfg),
                          tuple(kernel_from_json(k, cfg) for k in data["state_kernels"]),
                          float(data.get("alpha", 0.5)))


def bridge_from_json(data: dict) -> ConvolutionBridge:
    Z = ConvolutionBridge(np.array(data["kernels"], dtype=float))
    if "port_dim" in data and data["port_dim"] != Z.port_dim:
        raise SchemaError(f"port_dim {data['port_dim']} but kernels are {Z.port_dim}x{Z.port_dim}")
    return Z


def _term(data) -> ScheduleTerm:
    if isinstance(data, (int, float)):
        return ScheduleTerm.const(float(data))
    exps = [data[k] for k in ("alpha", "beta", "exponent") if k in data]
    if len(exps) > 1:
        raise SchemaError("give at most one of alpha, beta, exponent")
    return ScheduleTerm(data["form"], float(data.get("c", 1.0)),
                        float(exps[0]) if exps else 0.0, float(data.get("ratio", 1.0)),
                        tuple(data.get("values", ())))


def schedule_from_json(data: dict) -> CapacitySchedule:
    return CapacitySchedule(_term(data.get("theta", 1.0)), _term(data["lambda"]),
                            _term(data["bbar"]), int(data.get("j_max", 1000)))
