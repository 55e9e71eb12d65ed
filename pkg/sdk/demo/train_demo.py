#!/usr/bin/env python3
"""Instrumented toy training loop.

Writes a trace directory consumable by the analyzer CLI:

    python demo/train_demo.py out/demo_trace
    xstrace analyze out/demo_trace
"""

import math
import sys
import time

from annotrace import GpuRecord, ProfilerSession


class ToySimulator:
    def reset(self):
        return 0.0

    def step(self, action):
        time.sleep(0.0002)
        return math.tanh(action), action * 0.1


class ToyBackend:
    def forward(self, state):
        time.sleep(0.0005)
        return state * 0.5

    def backward(self, loss):
        time.sleep(0.0008)
        return loss * 0.9


def main(out_dir: str) -> None:
    with ProfilerSession(out_dir, process_name="toy_train") as session:
        sim = session.wrap_library(ToySimulator(), "simulator")
        net = session.wrap_library(ToyBackend(), "backend")

        state = sim.reset()
        for step in range(20):
            with session.operation("inference"):
                action = net.forward(state)
            with session.operation("simulation"):
                state, reward = sim.step(action)
            if step % 4 == 3:
                with session.operation("backprop"):
                    net.backward(reward)

        # Accelerator activity from an external capture, already aligned to
        # this session's clock: one API call plus the kernel it launched.
        now = session.now_ns()
        session.ingest_gpu_events(
            [
                GpuRecord("accel_api", "launch", now - 2_000_000, 50_000, correlation=1),
                GpuRecord("gpu", "kernel", now - 1_900_000, 400_000, correlation=1),
            ]
        )

    counters = session.counters.snapshot()
    print(f"trace written to {out_dir}")
    print(f"operations: {counters['operations']}, wrapped calls: {counters['calls']}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo_trace")
