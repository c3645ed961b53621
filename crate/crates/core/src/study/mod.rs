//! Evaluation harness: metrics, quality sweeps, reports, throughput and
//! Grad-CAM.

mod gradcam;
mod metrics;
mod report;
mod sweep;
mod throughput;

pub use gradcam::{default_cam_layer, gradcam, Heatmap};
pub use metrics::{argmax_rows, class_map, miou, top1_accuracy, Metric};
pub use report::{emit_report, parse_csv, write_csv, write_plotdata, ReportFormat, ReportMeta, SweepReport, SweepRow, CSV_HEADER};
pub use sweep::{evaluate, evaluate_sweep, predict, DEFAULT_QUALITIES};
pub use throughput::{throughput, Throughput, DEFAULT_WARMUP};
