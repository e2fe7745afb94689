use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{AggregateCurves, RepeatedRuns, RunLog};
use crate::analysis::{write_pdf_csv, BatchSizeStudy};
use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "iter,cum_evals,alpha,train_loss,val_loss,test_loss,direction_norm";
const ENVELOPE_HEADER: &str = "iter,train_mean,train_min,train_max,val_mean,val_min,val_max,\
test_mean,test_min,test_max,log10_alpha_mean,log10_alpha_min,log10_alpha_max";
const SUMMARY_HEADER: &str =
    "label,optimizer,step,runs,iterations,initial_train,final_train,final_val,final_test,best_train,mean_k";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Curve of a single run; iterations are numbered from 1.
pub fn write_curve_csv<W: Write>(mut out: W, log: &RunLog) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for (r, cum) in log.records.iter().zip(&log.cumulative_k) {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n + 1,
            cum,
            r.alpha,
            r.train_loss,
            r.val_loss,
            r.test_loss,
            r.direction_norm
        )?;
    }
    Ok(())
}

fn write_mean_curve<W: Write>(mut out: W, c: &AggregateCurves) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for i in 0..c.train.mean.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            c.cumulative_k[i],
            c.alpha[i],
            c.train.mean[i],
            c.validation.mean[i],
            c.test.mean[i],
            c.direction_norm[i]
        )?;
    }
    Ok(())
}

pub fn write_envelope_csv<W: Write>(mut out: W, c: &AggregateCurves) -> std::io::Result<()> {
    writeln!(out, "{ENVELOPE_HEADER}")?;
    for i in 0..c.train.mean.len() {
        write!(out, "{}", i + 1)?;
        for band in [&c.train, &c.validation, &c.test, &c.log10_alpha] {
            write!(out, ",{},{},{}", band.mean[i], band.min[i], band.max[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn unique_labels(results: &[RepeatedRuns]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::with_capacity(results.len());
    for r in results {
        let base = r.config.label();
        let mut label = base.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{base}_{n}");
            n += 1;
        }
        labels.push(label);
    }
    labels
}

/// Writes, per configuration, the seed-averaged curve `<label>.csv` and its
/// envelope `<label>_envelope.csv`, then one `summary.csv` comparing all
/// configurations. Returns the written paths.
pub fn emit_outputs(results: &[RepeatedRuns], destination: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(destination).map_err(|e| Error::io(destination, e))?;
    let labels = unique_labels(results);
    let mut written = Vec::new();
    for (r, label) in results.iter().zip(&labels) {
        let curve = destination.join(format!("{label}.csv"));
        write_with(&curve, |out| write_mean_curve(out, &r.curves))?;
        let envelope = destination.join(format!("{label}_envelope.csv"));
        write_with(&envelope, |out| write_envelope_csv(out, &r.curves))?;
        written.push(curve);
        written.push(envelope);
    }
    let summary = destination.join("summary.csv");
    write_with(&summary, |out| {
        writeln!(out, "{SUMMARY_HEADER}")?;
        for (r, label) in results.iter().zip(&labels) {
            let c = &r.curves;
            let last = c.train.mean.len() - 1;
            let best = c.train.mean.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            writeln!(
                out,
                "{label},{},{},{},{},{},{},{},{},{},{}",
                r.config.optimizer,
                r.config.step,
                r.logs.len(),
                last + 1,
                c.initial_train,
                c.train.mean[last],
                c.validation.mean[last],
                c.test.mean[last],
                best,
                r.mean_k()
            )?;
        }
        Ok(())
    })?;
    written.push(summary);
    Ok(written)
}

/// One `pdf_b<batch size>.csv` per study.
pub fn write_scan_outputs(studies: &[BatchSizeStudy], destination: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(destination).map_err(|e| Error::io(destination, e))?;
    studies
        .iter()
        .map(|s| {
            let path = destination.join(format!("pdf_b{}.csv", s.batch_size));
            write_with(&path, |out| write_pdf_csv(out, s))?;
            Ok(path)
        })
        .collect()
}
