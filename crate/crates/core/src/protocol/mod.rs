//! Teacher server and student client over newline-delimited JSON on TCP.
//!
//! Every frame is one JSON object on one line:
//!
//! | field         | present on                 | meaning                                        |
//! |---------------|----------------------------|------------------------------------------------|
//! | `v`           | all                        | protocol version, currently 1                  |
//! | `seq`         | all                        | per-connection, per-direction, strictly rising |
//! | `type`        | all                        | `request_sample`, `sample`, `feedback`, `ack`, `shutdown`, `error` |
//! | `reply_to`    | server replies             | `seq` of the request being answered            |
//! | `question_id` | `sample`, `feedback`, `ack`| question identifier                            |
//! | `payload`     | `sample`                   | full question record                           |
//! | `rewards`     | `feedback`                 | `G` verification rewards, each 0 or 1          |
//! | `stats`       | `sample`                   | candidate-pool `mu`/`sigma`, `model_version`, `explored`, optional `update` report |
//! | `counters`    | `ack`                      | `samples_served`, `feedback_received`          |
//! | `error`       | `error`                    | `code` and human-readable `reason`             |
//!
//! The server acknowledges feedback before running any refinement pass it
//! triggers; the pass's report rides on the next `sample` reply.

mod client;
mod server;
mod service;
mod wire;

pub use client::{client_step, Client, DEFAULT_TIMEOUT};
pub use server::{serve, ServerConfig, ServerHandle, ServerSummary};
pub use service::{Counters, SampleReply, Session, TeacherService, TeacherStats};
pub use wire::{ErrorBody, Frame, MessageType, PROTOCOL_VERSION};
