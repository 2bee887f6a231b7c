//! CSV flattenings of training logs and metric reports.

use super::cv::MetricsReport;
use super::trainer::EpochLog;
use crate::error::{Error, Result};

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

fn report_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

pub fn training_log_csv(log: &[EpochLog]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_accuracy"]).map_err(report_err)?;
    for l in log {
        w.write_record([l.epoch.to_string(), l.train_loss.to_string(), l.val_accuracy.to_string()])
            .map_err(report_err)?;
    }
    finish(w)
}

/// One row per fold plus `mean` and `std` rows per report.
pub fn metrics_csv(reports: &[MetricsReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "variant", "subject", "precision", "accuracy", "f1"])
        .map_err(report_err)?;
    for r in reports {
        let (mode, variant) = (r.mode.to_string(), r.variant.to_string());
        let rows = r
            .folds
            .iter()
            .map(|f| (f.subject.as_str(), f.precision, f.accuracy, f.f1))
            .chain([
                ("mean", r.mean.precision, r.mean.accuracy, r.mean.f1),
                ("std", r.std.precision, r.std.accuracy, r.std.f1),
            ]);
        for (subject, p, a, f) in rows {
            w.write_record([&mode, &variant, subject, &p.to_string(), &a.to_string(), &f.to_string()])
                .map_err(report_err)?;
        }
    }
    finish(w)
}
