"""The scripted mock backend: rules, failures, retries, synthetic time.

A transient failure is retried with exponential backoff on a synthetic
clock, so the run is instant in wall time yet the recorded latency
includes every scripted delay and backoff sleep.
"""

from mcqforge.llmclient import ChatRequest, MockFailure, complete, script_mock


def build_backend():
    return script_mock(
        rules=[
            ("potassium",
             [MockFailure("transient", "HTTP 429"),
              "Answer: (A) Serum potassium"],
             1.5),
        ],
        default="I would page the provider.",
    )


backend = build_backend()
request = ChatRequest(messages=(("user", "Which lab: potassium or amylase?"),))
exchange = complete(backend, request)
print(f"reply: {exchange.response_text!r}")
print(f"attempts: {exchange.attempt_count} (429 on the first, retried)")
print(f"synthetic latency: {exchange.latency:.3f}s "
      "(two scripted 1.5s delays + one jittered ~1s backoff)")
print(f"backend saw {backend.call_count} calls; wall time was ~0s")

re_exchange = complete(build_backend(), request)
print(f"\nfresh backend, same script: latency identical = "
      f"{re_exchange.latency == exchange.latency}")

fallback = complete(backend, ChatRequest(messages=(("user", "No match here."),)))
print(f"unmatched prompt falls to the default: {fallback.response_text!r}")
