"""The human-annotation surface, scripted end to end.

Starts the annotation service on a scratch run directory, drives one session
through the same HTTP calls the browser console makes (create, translate,
attempt early completion, complete), and shows the human-translations file
the selection loop would ingest.
"""

import socket
import tempfile
import threading
import time

import uvicorn

from hat.client import AnnotationClient
from hat.service import create_app

TOKEN = "demo-token"

with socket.socket() as s:
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]

run_dir = tempfile.mkdtemp(prefix="annotation-demo-")
server = uvicorn.Server(
    uvicorn.Config(
        create_app(run_dir, token=TOKEN, target_language="tgt"),
        host="127.0.0.1",
        port=port,
        log_level="error",
    )
)
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.02)
print(f"service listening on http://127.0.0.1:{port} (run dir {run_dir})")

client = AnnotationClient(f"http://127.0.0.1:{port}", TOKEN)
items = [
    {"item_id": "s00001", "source_text": "which rivers cross the state",
     "lf_display": "answer_0001 ( topic_0001 )"},
    {"item_id": "s00002", "source_text": "largest city in the region",
     "lf_display": "answer_0002 ( topic_0002 )"},
]
session = client.create_session(1, items)
print(f"created session {session['session_id']} with {len(session['items'])} items")

client.submit(session["session_id"], "s00001", "welche fluesse queren den staat", "demo-user")
print("submitted 1/2 translations; trying to complete early:")
try:
    client.complete(session["session_id"])
except RuntimeError as err:
    print(f"  rejected as expected -> {err}")

client.submit(session["session_id"], "s00002", "groesste stadt der region", "demo-user")
done = client.complete(session["session_id"])
print(f"completed; translations written to {done['ht_file']}")
print("file contents:")
for line in open(done["ht_file"], encoding="utf-8"):
    print("  " + line.rstrip())

server.should_exit = True
thread.join(timeout=5)
print()
print("Point the browser console (frontend/index.html) at a live service with")
print(f"  ?service=http://127.0.0.1:{port}&token={TOKEN}")
print("to do the same interactively while a run in human-service mode waits.")
