//! Persistence: activation files, rankings and masks, JSON-lines sets,
//! run manifests, and SVG reports.

mod activation;
mod jsonl;
mod manifest;
mod ranking;
mod report;

pub use activation::{
    activation_from_bytes, activation_to_bytes, read_activation_file, write_activation_file,
    ACTIVATION_MAGIC, ACTIVATION_VERSION,
};
pub use jsonl::{
    from_jsonl, labeled_lines, labeled_manifest, read_jsonl, read_labeled_set, read_predictions,
    read_prompts, to_jsonl, write_jsonl, write_labeled_set, write_predictions, write_prompts,
    LabeledLine, LabeledSetManifest,
};
pub use manifest::{
    config_hash, file_digest, now_ms, sha256_hex, RunManifest, StageRecord, StageTimes,
    MANIFEST_FILE,
};
pub use ranking::{
    mask_from_csv, mask_to_csv, ranking_from_csv, ranking_to_csv, read_mask, read_ranking,
    write_mask, write_ranking,
};
pub use report::{
    diverging_color, drop_matrix_svg, histogram_svg, overlap_svg, render_report, sequential_color,
    sweep_svg, HistogramFigure, OverlapFigure, ReportInput,
};
