# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Line protocol shared by the reference adapters.

One JSON request per stdin line, one JSON response per stdout line:
  request:  {"id": n, "kind": "...", "payload": ..., "config": {...}}
  response: {"id": n, "ok": true, "result": ...}
         or {"id": n, "ok": false, "error": "..."}
"""

import json
import sys


def handle_line(line, handlers):
    try:
        request = json.loads(line)
    except json.JSONDecodeError as e:
        return {"id": None, "ok": False, "error": f"malformed request: {e}"}
    rid = request.get("id")
    handler = handlers.get(request.get("kind"))
    if handler is None:
        return {"id": rid, "ok": False, "error": f"unsupported kind {request.get('kind')!r}"}
    try:
        result = handler(request.get("payload"), request.get("config") or {})
    except Exception as e:  # per-request failure, the process keeps serving
        return {"id": rid, "ok": False, "error": f"{type(e).__name__}: {e}"}
    return {"id": rid, "ok": True, "result": result}


def serve(handlers, stdin=sys.stdin, stdout=sys.stdout):
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(handle_line(line, handlers)) + "\n")
        stdout.flush()
