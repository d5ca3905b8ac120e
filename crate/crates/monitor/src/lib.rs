//! Edge monitoring service for a trained detector bundle.
//!
//! Tails the sensor CSV every `interval`, scores each new row, raises an
//! alarm after `alarm_n` consecutive anomalous rows, and exposes live
//! state over REST and a message stream. Retraining runs in the
//! background and swaps the bundle in atomically.

pub mod alarms;
pub mod error;
pub mod http;
pub mod messages;
pub mod retrain;
pub mod service;
pub mod state;
pub mod tail;

pub use error::{Error, Result};
pub use messages::{AlarmEvent, Reading, StreamMessage};
pub use retrain::{JobState, RetrainJob, RetrainRequest, MIN_RETRAIN_ROWS};
pub use service::{run_loop, serve, serve_on, MonitorConfig, Shared};
pub use state::{count_alarm_runs, Debouncer, MonitorState, Snapshot, Step};
pub use tail::{tail_csv, CsvTail, TailBatch};
