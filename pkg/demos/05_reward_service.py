"""Serve rewards over HTTP and verify the numbers match the library exactly.

Starts the service on a local port in a background thread, scores a batch
through the wire, and compares against in-process computation bit for bit.
"""

import socket
import threading
import time

import httpx
import uvicorn

from geoscout.rewards import gt_from_dict, total_reward
from geoscout.service import create_app

with socket.socket() as sock:
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]

server = uvicorn.Server(
    uvicorn.Config(create_app(), host="127.0.0.1", port=port, log_level="error")
)
threading.Thread(target=server.run, daemon=True).start()
base = f"http://127.0.0.1:{port}"
while True:
    try:
        if httpx.get(base + "/v1/health", timeout=1.0).status_code == 200:
            break
    except httpx.HTTPError:
        time.sleep(0.05)

print("health:", httpx.get(base + "/v1/health").json())

items = [
    {"task": "topo", "mode": "direct", "output": "order=[2,0,3,1]",
     "ground_truth": {"order": [2, 0, 3, 1]}},
    {"task": "anom", "mode": "reasoning",
     "output": "<think>seam near the middle</think><answer>index=6</answer>",
     "ground_truth": {"index": 5, "grid": [4, 4]}},
    {"task": "scale", "mode": "direct",
     "output": "patch 1: level=1 box=[0.250,0.250,0.697,0.697]",
     "ground_truth": {"levels": [1], "boxes": [[0.25, 0.25, 0.697, 0.697]]}},
]
response = httpx.post(base + "/v1/reward", json={"items": items}).json()
for item, wire in zip(items, response["rewards"]):
    local = total_reward(
        item["output"], gt_from_dict(item["task"], item["ground_truth"]), item["mode"]
    ).as_dict()
    match = "bit-identical" if wire == local else "MISMATCH"
    print(f"{item['task']:5} r_total={wire['r_total']!r:22} vs library -> {match}")

print("oversize batch:", httpx.post(base + "/v1/reward",
                                     json={"items": items * 400}).status_code, "(expected 413)")
server.should_exit = True
