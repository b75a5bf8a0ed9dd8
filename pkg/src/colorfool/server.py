"""Loopback server for the oracle wire protocol.

Serves any local :class:`~colorfool.oracle.Oracle` over TCP or stdio so that
:class:`~colorfool.oracle.RemoteOracle` can be exercised end to end::

    python -m colorfool.server --weights weights.txt --stdio
    python -m colorfool.server --weights weights.txt --port 9100
"""

import argparse
import socketserver
import sys
import threading

from colorfool.oracle import decode_request, encode_response, reference_classifier


def serve_stream(reader, writer, predict):
    """Answer requests line by line until ``reader`` hits EOF."""
    for line in reader:
        if not line.strip():
            continue
        request_id = None
        try:
            request_id, img = decode_request(line)
            reply = encode_response(request_id, predict(img))
        except Exception as exc:  # noqa: BLE001 - reported to the client
            reply = encode_response(request_id, error=f"{type(exc).__name__}: {exc}")
        writer.write(reply)
        writer.flush()


class OracleServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server; one handler thread per connection.

    ``predict`` maps an RGB array to a probability list. Tests may swap it
    for a misbehaving callable, or set ``respond`` to craft raw replies.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, predict, host="127.0.0.1", port=0, respond=None):
        self.predict = predict
        self.respond = respond
        super().__init__((host, port), _Handler)

    @property
    def address(self):
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        if self.server.respond is None:
            serve_stream(self.rfile, self.wfile, lambda img: self.server.predict(img))
            return
        for line in self.rfile:
            self.wfile.write(self.server.respond(line))
            self.wfile.flush()


def main(argv=None):
    parser = argparse.ArgumentParser(description="Serve a reference classifier over the oracle protocol.")
    parser.add_argument("--weights", required=True, help="reference classifier weights file")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true", help="serve on stdin/stdout")
    group.add_argument("--port", type=int, help="serve on 127.0.0.1:PORT")
    args = parser.parse_args(argv)

    model = reference_classifier(args.weights)
    if args.stdio:
        serve_stream(sys.stdin.buffer, sys.stdout.buffer, model.predict)
        return 0
    with OracleServer(model.predict, port=args.port) as server:
        print(f"serving on {server.address}", file=sys.stderr, flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
