//! Thermalization diagnostics over recorded traces.

mod rhat;
mod score;
mod stationarity;
mod trace;

pub use rhat::{percentile, rhat, rhat_blocked, rhat_cumulative, CoordinateRhat, RhatReport, TimedRhat};
pub use score::{classical_score, score_from_gradient, score_statistic, ScoreTarget};
pub use stationarity::{stationarity_onset, teacher_student_merge, MergeVerdict, WindowRule};
pub use trace::{TraceRecord, TraceSeries, TraceTable};
