"""Solver process behind the TypeScript bindings.

Reads one solve request from stdin as a JSON line, then serves the solve:
every objective or constraint evaluation becomes one request/reply
round-trip with the host process, and the final line carries the result or
a failure report. Non-finite numbers cross the boundary as
``{"$num": "inf" | "-inf" | "nan"}`` since JSON cannot express them;
everything else relies on shortest round-trip decimal on both sides, which
keeps finite doubles bit-identical through the pipe.
"""

import json
import sys

import numpy as np

from dfosqp import Options, build_problem, minimize

# The protocol owns the real stdout; solver chatter (the disp option) goes
# to stderr so it cannot corrupt the message stream.
_PROTOCOL = sys.stdout
sys.stdout = sys.stderr

_WORDS = {"inf": float("inf"), "-inf": float("-inf"), "nan": float("nan")}


class CallbackAbort(Exception):
    """The host-side callback failed; carries the host's error message."""


def encode(value):
    if isinstance(value, float):
        if value != value:
            return {"$num": "nan"}
        if value == _WORDS["inf"]:
            return {"$num": "inf"}
        if value == _WORDS["-inf"]:
            return {"$num": "-inf"}
        return value
    if isinstance(value, (list, tuple)):
        return [encode(v) for v in value]
    return value


def decode(value):
    if isinstance(value, dict):
        return _WORDS[value["$num"]]
    if isinstance(value, list):
        return [decode(v) for v in value]
    return value


def send(message) -> None:
    _PROTOCOL.write(json.dumps(message, allow_nan=False) + "\n")
    _PROTOCOL.flush()


def ask(kind: str, x) -> object:
    """One evaluation round-trip: request a value for ``x`` from the host."""
    send({"op": "eval", "kind": kind, "x": encode([float(v) for v in x])})
    line = sys.stdin.readline()
    if not line:
        raise CallbackAbort("host closed the connection")
    reply = json.loads(line)
    if reply["op"] == "abort":
        raise CallbackAbort(reply["message"])
    return decode(reply["value"])


def main() -> int:
    request = json.loads(sys.stdin.readline())
    x0 = decode(request["x0"])
    kwargs = {}
    for key in ("xl", "xu", "aub", "bub", "aeq", "beq"):
        if request.get(key) is not None:
            kwargs[key] = decode(request[key])
    if request.get("has_cub"):
        kwargs["cub"] = lambda x: np.asarray(ask("cub", x), dtype=float)
    if request.get("has_ceq"):
        kwargs["ceq"] = lambda x: np.asarray(ask("ceq", x), dtype=float)
    options = Options(**{k: decode(v)
                         for k, v in (request.get("options") or {}).items()})
    try:
        problem = build_problem(lambda x: float(ask("fun", x)),
                                n=len(x0), **kwargs)
        result = minimize(problem, x0, options)
    except CallbackAbort as exc:
        send({"op": "failed", "kind": "callback", "message": str(exc)})
        return 0
    except Exception as exc:
        send({"op": "failed", "kind": "core", "type": type(exc).__name__,
              "message": str(exc)})
        return 0
    send({"op": "result", "result": {
        "x": encode([float(v) for v in result.x]),
        "status": result.status,
        "message": result.message,
        "fun": encode(float(result.fun)),
        "jac": encode([float(v) for v in result.jac]),
        "nfev": int(result.nfev),
        "nit": int(result.nit),
        "maxcv": encode(float(result.maxcv)),
    }})
    return 0


if __name__ == "__main__":
    sys.exit(main())
