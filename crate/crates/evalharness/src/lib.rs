//! Evaluation of trained runs: greedy rollouts scored by success and
//! infraction rates, seen/unseen layout transfer tables, report CSVs and
//! reward-rate charts. The `curio` binary wraps these and the training
//! phases behind subcommands.

pub mod error;
pub mod eval;
pub mod plot;
pub mod report;

pub use error::{EvalError, Result};
pub use eval::{finetune_and_eval, run_eval, run_eval_with, transfer_matrix, AgentDriver, Driver, RandomDriver};
pub use plot::{plot_reward_rate, read_rows, reward_rate_svg, series_from_rows, windowed, RateRow, Series, WINDOW};
pub use report::{rates, report_csv, EpisodeRecord, EvalReport, REPORT_HEADER};
