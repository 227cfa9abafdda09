#pragma once

#include <stdexcept>
#include <string>

namespace labloop {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// HTTP transport failed after the configured retries.
struct TransportError : Error {
  using Error::Error;
};

// A response body did not have the expected structure. Carries the
// offending fragment so the operator can see what came back.
struct PayloadError : Error {
  using Error::Error;
};

// Replay-mode lookup found no scripted entry for (tag, digest).
struct ReplayMissError : Error {
  using Error::Error;
};

// The model reply could not be parsed into the required structure
// after the allowed re-asks.
struct ModelReplyError : Error {
  using Error::Error;
};

// Embedding dimension disagrees with earlier vectors in the run.
struct DimensionError : Error {
  using Error::Error;
};

// Stderr held no recognizable interpreter traceback.
struct NoTracebackError : Error {
  using Error::Error;
};

// Edit application failed (no applicable blocks after the re-ask).
struct EditError : Error {
  using Error::Error;
};

// State file is unreadable, corrupt, or from a newer schema version.
struct StateError : Error {
  using Error::Error;
};

}  // namespace labloop
