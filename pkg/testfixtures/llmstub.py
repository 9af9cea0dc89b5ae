#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT
#
# Minimal stand-in for an LLM adapter endpoint. Every request is appended to
# requests.jsonl in the working directory; the reply depends on --mode

import argparse
import json
import time
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

MODES = ("echo", "malformed", "error", "out-of-range", "not-json", "slow")


def reply_for(mode, body):
    context = body["context_data"]
    own = context["standing_proposal"][context["slice_id"]]
    if mode == "echo":
        return 200, {"proposal_mhz": own, "reason": "stub keeps its demand"}
    if mode == "malformed":
        return 200, {"proposal": own}
    if mode == "out-of-range":
        return 200, {"proposal_mhz": 1e6, "reason": "stub asks for everything"}
    if mode == "error":
        return 500, {"error": "stub failure"}
    return 200, None


def make_handler(mode, log):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            with log.open("a") as f:
                f.write(
                    json.dumps(
                        {"authorization": self.headers.get("Authorization"), "body": body},
                        sort_keys=True,
                    )
                )
                f.write("\n")

            if mode == "slow":
                # Longer than any test timeout
                time.sleep(5)

            status, data = reply_for(mode, body)
            payload = b"this is not json" if data is None else json.dumps(data).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, format, *args):
            pass

    return Handler


def main():
    parser = argparse.ArgumentParser(description="Stub LLM endpoint")
    parser.add_argument("--bind", default="127.0.0.1")
    parser.add_argument("--mode", choices=MODES, default="echo")
    parser.add_argument("port", type=int)
    args = parser.parse_args()

    server = HTTPServer((args.bind, args.port), make_handler(args.mode, Path("requests.jsonl")))
    server.serve_forever()


if __name__ == "__main__":
    main()
