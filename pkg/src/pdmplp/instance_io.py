"""Instance files: two JSON flavors.

``"tabulated"`` carries every field of a finite instance inline, with kernel
rows as sparse state->probability maps; ``"capacity_expansion"`` carries the
parameters of the capacity model, from which the instance is rebuilt exactly
via the closed forms (and a behavioral model is then available for
time-resolved simulation).  Floats survive a round trip bit-for-bit (repr
serialization, 17 significant digits).
"""

import hashlib
import json

import numpy as np

from .capacity import CapacityParams, build_capacity_instance
from .model import FeasibleActionSets, FiniteInstance


class InstanceFormatError(ValueError):
    """Malformed instance file (carries a human-readable location)."""


def instance_to_dict(inst):
    rows = []
    for row in range(inst.n_rows):
        j, kappa, iota = (int(v) for v in inst.rows[row])
        entry = {
            "state": j,
            "interior_action": kappa,
            "boundary_action": iota,
            "G": {str(y): float(inst.G[row, y])
                  for y in np.flatnonzero(inst.G[row])},
            "Lf": [float(v) for v in inst.Lf[:, row]],
            "Hr": [float(v) for v in inst.Hr[:, row]],
            "calL": float(inst.calL[row]),
            "calH": float(inst.calH[row]),
        }
        rows.append(entry)
    return {
        "kind": "tabulated",
        "schema": 1,
        "alpha": float(inst.alpha),
        "s": int(inst.s),
        "r": int(inst.r),
        "feasible": {
            "interior": [list(map(int, ids))
                         for ids in inst.feasible.interior],
            "boundary": [list(map(int, ids))
                         for ids in inst.feasible.boundary],
        },
        "nu0": [float(v) for v in inst.nu0],
        "d": [float(v) for v in inst.d],
        "rows": rows,
        "meta": _plain(inst.meta),
    }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def instance_from_dict(data):
    try:
        feasible = FeasibleActionSets(
            interior=[list(map(int, ids))
                      for ids in data["feasible"]["interior"]],
            boundary=[list(map(int, ids))
                      for ids in data["feasible"]["boundary"]])
        s = int(data["s"])
        r = int(data["r"])
        n_costs = len(data["rows"][0]["Lf"]) if data["rows"] else 1
        inst = FiniteInstance(
            s=s, r=r, feasible=feasible, alpha=float(data["alpha"]),
            G=np.zeros((len(data["rows"]), s)),
            Lf=np.zeros((n_costs, len(data["rows"]))),
            Hr=np.zeros((n_costs, len(data["rows"]))),
            calL=np.zeros(len(data["rows"])),
            calH=np.zeros(len(data["rows"])),
            nu0=np.array(data["nu0"], dtype=float),
            d=np.array(data.get("d", []), dtype=float),
            meta=data.get("meta", {}))
        for entry in data["rows"]:
            key = (int(entry["state"]), int(entry["interior_action"]),
                   int(entry["boundary_action"]))
            if key not in inst.row_index:
                raise InstanceFormatError(
                    f"row {key} is not a feasible triple")
            row = inst.row_index[key]
            for y, p in entry["G"].items():
                inst.G[row, int(y)] = float(p)
            inst.Lf[:, row] = entry["Lf"]
            inst.Hr[:, row] = entry["Hr"]
            inst.calL[row] = float(entry["calL"])
            inst.calH[row] = float(entry["calH"])
        return inst
    except (KeyError, IndexError, TypeError) as exc:
        raise InstanceFormatError(
            f"tabulated instance is missing or mistypes field {exc!r}"
        ) from exc


def params_from_dict(data):
    try:
        costs = data.get("costs", {})
        return CapacityParams(
            lam=float(data["lam"]), tau=float(data["tau"]),
            gamma=tuple(float(g) for g in data["gamma"]),
            M=int(data["M"]), alpha=float(data["alpha"]),
            f_demand=tuple(costs.get("f_demand", (1.0,))),
            f_mode=(tuple(tuple(row) for row in costs["f_mode"])
                    if "f_mode" in costs else None),
            r_mode=(tuple(tuple(row) for row in costs["r_mode"])
                    if "r_mode" in costs else None),
            d=tuple(data.get("d", ())),
            sa_points=int(data.get("sa_points", 5)),
            depth=int(data.get("depth", 2)),
            max_snap=data.get("max_snap"))
    except (KeyError, TypeError, IndexError) as exc:
        raise InstanceFormatError(
            f"capacity_expansion instance is missing or mistypes field "
            f"{exc!r}") from exc


def params_to_dict(params):
    return {
        "kind": "capacity_expansion",
        "schema": 1,
        "lam": params.lam,
        "tau": params.tau,
        "gamma": list(params.gamma),
        "M": params.M,
        "alpha": params.alpha,
        "costs": {
            "f_demand": list(params.f_demand),
            "f_mode": [list(row) for row in params.f_mode],
            "r_mode": [list(row) for row in params.r_mode],
        },
        "d": list(params.d),
        "sa_points": params.sa_points,
        "depth": params.depth,
        "max_snap": params.max_snap,
    }


def load_instance(path):
    """Read either flavor.  Returns (instance, model-or-None, params-or-None).

    Raises InstanceFormatError with line/column diagnostics on bad JSON and
    with the offending field on schema violations.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(
                f"{path}: invalid JSON at line {exc.lineno}, column "
                f"{exc.colno}: {exc.msg}") from exc
    kind = data.get("kind")
    if kind == "tabulated":
        return instance_from_dict(data), None, None
    if kind == "capacity_expansion":
        params = params_from_dict(data)
        model, inst = build_capacity_instance(params)
        return inst, model, params
    raise InstanceFormatError(
        f"{path}: unknown instance kind {kind!r} (expected 'tabulated' or "
        f"'capacity_expansion')")


def save_instance(path, inst):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1, sort_keys=True)
        fh.write("\n")


def save_capacity(path, params):
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=1, sort_keys=True)
        fh.write("\n")


def instance_digest(inst):
    """Canonical content hash of an instance (meta excluded)."""
    data = instance_to_dict(inst)
    data.pop("meta", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
