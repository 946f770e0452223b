/** Spawns the Python reward service for integration tests. */

import { spawn, type ChildProcess } from "node:child_process";
import net from "node:net";

export interface LiveServer {
  url: string;
  stop: () => Promise<void>;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      srv.close(() => resolve(addr.port));
    });
    srv.on("error", reject);
  });
}

export async function startServer(): Promise<LiveServer> {
  const port = await freePort();
  const proc: ChildProcess = spawn(
    "python3",
    ["-m", "geoscout.cli", "serve", "--port", String(port)],
    { stdio: "ignore" },
  );
  const url = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(url + "/v1/health", {
        signal: AbortSignal.timeout(1000),
      });
      if (res.ok) {
        return {
          url,
          stop: () =>
            new Promise<void>((resolve) => {
              proc.once("exit", () => resolve());
              proc.kill("SIGTERM");
              setTimeout(() => {
                proc.kill("SIGKILL");
                resolve();
              }, 5000).unref();
            }),
        };
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  proc.kill("SIGKILL");
  throw new Error("reward service did not come up in 30s");
}
