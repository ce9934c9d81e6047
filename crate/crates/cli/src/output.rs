//! Report emission. JSON documents carry the resolved config next to the
//! report; CSV files carry it in `#` comment lines above the header.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use algstab::lifter::StabilizationReport;
use algstab::mat::io::serde_mat;
use algstab::nilpotent::NilChain;
use algstab::mat::opnorm;
use algstab::{Mat, Regime, Result};

use crate::Common;

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub struct Output {
    path: Option<PathBuf>,
    deterministic: bool,
    config: Value,
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Output {
    pub fn new(common: &Common, config: Value) -> Self {
        Output {
            path: common.out.clone(),
            deterministic: common.deterministic,
            config,
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    pub fn json<T: Serialize>(&self, report: &T) -> Result<()> {
        let mut doc = serde_json::json!({
            "config": self.config,
            "report": report,
        });
        if !self.deterministic {
            doc["generated_at_unix"] = timestamp().into();
        }
        let mut w = self.sink()?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&self, rows: &[T], summary: Option<Value>) -> Result<()> {
        let mut w = self.sink()?;
        writeln!(w, "# config: {}", self.config)?;
        if let Some(s) = summary {
            writeln!(w, "# summary: {s}")?;
        }
        if !self.deterministic {
            writeln!(w, "# generated_at_unix: {}", timestamp())?;
        }
        let mut csv = csv::Writer::from_writer(w);
        for row in rows {
            csv.serialize(row).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => algstab::Error::Io(io),
                other => algstab::Error::Format(format!("{other:?}")),
            })?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Scalar columns of a stabilization report.
#[derive(Serialize)]
pub struct ReportRow {
    regime: Regime,
    residual_before: f64,
    residual_after: f64,
    distance: f64,
    norm_before: f64,
    norm_after: f64,
    cond_s: f64,
    cap_factor: f64,
    similarity_blend: f64,
    lift_shrink: f64,
    bound: f64,
    forced: bool,
}

impl From<&StabilizationReport> for ReportRow {
    fn from(r: &StabilizationReport) -> Self {
        ReportRow {
            regime: r.regime,
            residual_before: r.residual_before,
            residual_after: r.residual_after,
            distance: r.distance,
            norm_before: r.norm_before,
            norm_after: r.norm_after,
            cond_s: r.cond_s,
            cap_factor: r.cap_factor,
            similarity_blend: r.similarity_blend,
            lift_shrink: r.lift_shrink,
            bound: r.bound,
            forced: r.forced,
        }
    }
}

#[derive(Serialize)]
pub struct ChainDump {
    chain: NilChain,
    #[serde(with = "serde_mat")]
    truncated: Mat,
    distance: f64,
}

impl ChainDump {
    pub fn new(chain: NilChain, truncated: Mat, x: &Mat) -> Self {
        ChainDump {
            distance: opnorm(&(x - &truncated)),
            chain,
            truncated,
        }
    }
}
