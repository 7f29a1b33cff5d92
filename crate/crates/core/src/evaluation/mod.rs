//! Verification and identification protocols and the experiment harnesses.

mod identify;
mod images;
mod protocol;
mod synthetic;
mod timing;

pub use identify::{holistic_features, nearest_neighbour, run_identification, IdentificationReport, Identifier};
pub use images::{
    cohort_images, robustness_csv, run_robustness_grid, verify_images, ImageCorpus, LsedVerifier, PcaSrVerifier,
    PcaVerifier, RobustnessCell, VerificationPipeline,
};
pub use protocol::{
    accuracy, eer_threshold, generate_trials, run_verification, verify_scored, DecisionThreshold,
    DevScores, ErrorRates, EvalScores, FoldResult, Trial, TrialList, VerificationReport,
};
pub use synthetic::{
    run_synthetic_class_experiment, SyntheticClassConfig, SyntheticClasses, SyntheticLevel,
    SyntheticReport,
};
pub use timing::{
    count_set_matching, median_secs, run_timing_bench, EncoderTiming, QueryTiming, SetMatchingCount,
    TimingConfig, TimingReport, MIN_TIMING_REPETITIONS,
};
