//! CSV, JSONL and SVG writers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;
use stsem_tt::driver::{Format, RankRow, SolveReport};
use stsem_tt::solve::{ProgressRecord, Stage};

pub const RESULT_HEADER: [&str; 10] = [
    "experiment",
    "N",
    "format",
    "tt_tol",
    "solver_tol",
    "error",
    "order",
    "max_rank",
    "compression",
    "seconds",
];

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn write_results(path: &Path, reports: &[SolveReport], order: Option<f64>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RESULT_HEADER).map_err(csv_err)?;
    let order = order.map(|o| format!("{o:.4}")).unwrap_or_default();
    for r in reports {
        let tensor = r.format != Format::Full && r.succeeded();
        w.write_record([
            r.problem.clone(),
            r.n.to_string(),
            r.format.to_string(),
            format!("{:e}", r.tt_tol),
            format!("{:e}", r.solver_tol),
            r.l2_error.map(|e| format!("{e:.6e}")).unwrap_or_default(),
            order.clone(),
            if tensor {
                r.max_rank().to_string()
            } else {
                String::new()
            },
            if tensor {
                format!("{:.6e}", r.solution_compression)
            } else {
                String::new()
            },
            format!("{:.3}", r.seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

fn ranks(r: &[usize]) -> String {
    let inner: Vec<String> = r.iter().map(usize::to_string).collect();
    format!("[{}]", inner.join(","))
}

/// One row per coefficient: its label, tolerance, coefficient ranks on the first grid,
/// then the rounded operator ranks on each grid.
pub fn write_rank_table(path: &Path, rows: &[RankRow], grids: &[usize]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["kappa".to_string(), "tol".into(), "kappa_ranks".into()];
    header.extend(grids.iter().map(|n| format!("N_q={n}")));
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![
            row.label.clone(),
            format!("{:e}", row.tol),
            row.kappa_ranks
                .first()
                .map(|r| ranks(r))
                .unwrap_or_default(),
        ];
        rec.extend(row.operator_ranks.iter().map(|r| ranks(r)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
}

/// Line-per-event progress log.
pub struct ProgressLog {
    out: BufWriter<File>,
    error: Option<io::Error>,
}

impl ProgressLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(ProgressLog {
            out: BufWriter::new(File::create(path)?),
            error: None,
        })
    }

    fn line(&mut self, value: serde_json::Value) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{value}") {
                self.error = Some(e);
            }
        }
    }

    pub fn start(&mut self, experiment: &str, n: usize, format: Format) {
        self.line(
            json!({"event": "start", "experiment": experiment, "N": n, "format": format.as_str()}),
        );
    }

    pub fn progress(&mut self, experiment: &str, n: usize, rec: &ProgressRecord) {
        let stage = match rec.stage {
            Stage::Sweep => "sweep",
            Stage::Newton => "newton",
        };
        self.line(json!({
            "event": stage,
            "experiment": experiment,
            "N": n,
            "iteration": rec.iteration,
            "residual": rec.residual,
            "max_rank": rec.max_rank,
        }));
    }

    pub fn finish(&mut self, r: &SolveReport) {
        self.line(json!({
            "event": "done",
            "experiment": r.problem,
            "N": r.n,
            "format": r.format.as_str(),
            "error": r.l2_error,
            "converged": r.stats.converged,
            "final_residual": r.stats.final_residual,
            "failure": r.failure.as_ref().map(|f| format!("{}: {}", f.stage, f.message)),
            "warnings": r.warnings,
            "seconds": r.seconds,
        }));
    }

    pub fn message(&mut self, event: &str, text: &str) {
        self.line(json!({"event": event, "message": text}));
    }

    pub fn close(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

/// Log-log plot of error against mesh width `1/N`.
pub fn write_error_plot(path: &Path, title: &str, reports: &[SolveReport]) -> io::Result<()> {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|r| {
            r.l2_error
                .filter(|e| *e > 0.0)
                .map(|e| ((1.0 / r.n as f64).log10(), e.log10()))
        })
        .collect();
    let (w, h, m) = (480.0, 360.0, 50.0);
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min).floor();
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max).ceil();
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (-2.0, 0.0)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    s += &format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += &format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    s += &format!(
        "<path d=\"M{m} {m} V{} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        h - m,
        w - m
    );
    for k in x0 as i32..=x1 as i32 {
        let x = sx(k as f64);
        s += &format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{k}</text>\n",
            h - m + 16.0
        );
    }
    for k in y0 as i32..=y1 as i32 {
        let y = sy(k as f64);
        s += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{k}</text>\n",
            m - 4.0,
            y + 4.0
        );
    }
    s += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">h</text>\n",
        w / 2.0,
        h - 10.0
    );
    s += &format!("<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">L2 error</text>\n", h / 2.0, h / 2.0);
    if !pts.is_empty() {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s += &format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
            path.join(" ")
        );
        for &(x, y) in &pts {
            s += &format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>\n",
                sx(x),
                sy(y)
            );
        }
    }
    s += "</svg>\n";
    std::fs::write(path, s)
}
