//! Match records, cleaning, splitting, labels, few-shot tasks, synthetic
//! data and purchase statistics.

mod clean;
mod labels;
mod records;
mod split;
mod stats;
mod synth;
mod tasks;

#[cfg(test)]
pub(crate) mod testutil;

pub use clean::{clean_matches, RejectReason, Rejection};
pub use labels::label_sequence;
pub use records::{
    ingest_matches, match_files, write_matches, CapturePoint, MatchRecord, PlayerRoundSnapshot, RoundRecord, Side,
    MAX_ROUNDS, PLAYERS, SIDE_SWAP_ROUND, TEAM_SIZE,
};
pub use split::{split_dataset, split_sizes};
pub use stats::{purchase_count_stats, PurchaseCountStats};
pub use synth::{synth_matches, synth_matches_with, PreferenceProfile, SynthConfig};
pub use tasks::{build_all_tasks, build_tasks, is_eligible, EpisodeTask, RoundExample, TaskSkip, EXCLUDED_ROUNDS};
