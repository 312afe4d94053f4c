//! The experiments behind the command line tool.

mod correlate;
mod data;
mod evaluate;
mod spectrogram;
mod train;

pub use correlate::{correlate, report as correlation_report, score_pair, CorrelationPoint, CorrelationReport};
pub use data::{load_examples, load_utterance, load_utterances, select, Selection, Utterance};
pub use evaluate::{
    evaluate, score, Aggregate, EvalReport, MetricSet, System, UtteranceRecord, IRM, NOISY,
    UNAVAILABLE_METRICS,
};
pub use spectrogram::{export_spectrogram, log_spectrogram, to_pgm, to_text, FLOOR_DB};
pub use train::{check_compatible, run_training, RunConfig, TrainRun, CHECKPOINT_FILE, HISTORY_FILE};
