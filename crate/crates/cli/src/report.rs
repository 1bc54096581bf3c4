//! CSV reports, the summary bar chart, and atomic file output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use pareto_choice::evaluation::EvalReport;
use pareto_choice::training::EpochRecord;
use pareto_choice::tuning::Trial;
use serde::Serialize;

pub const TRAIN_LOG_HEADER: [&str; 7] = [
    "epoch",
    "loss_total",
    "loss_po",
    "loss_dom",
    "loss_mds",
    "loss_l2",
    "val_a_mean",
];
pub const EVAL_HEADER: [&str; 10] = [
    "problem",
    "split",
    "repetition",
    "n_tasks",
    "mean_a_mean",
    "std_a_mean",
    "tp",
    "fp",
    "tn",
    "fn",
];
pub const SUMMARY_HEADER: [&str; 6] = [
    "problem",
    "arm",
    "repetitions",
    "n_tasks",
    "mean_a_mean",
    "std_a_mean",
];
pub const TRIALS_HEADER: [&str; 10] = [
    "trial",
    "seed",
    "val_a_mean",
    "w_po",
    "w_dom",
    "w_mds",
    "w_l2",
    "max_lr",
    "hidden_layers",
    "hidden_units",
];

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn to_csv<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn train_log_csv(epochs: &[EpochRecord]) -> Vec<u8> {
    to_csv(
        &TRAIN_LOG_HEADER,
        epochs.iter().map(|e| {
            (
                e.epoch,
                e.loss.total,
                e.loss.po,
                e.loss.dom,
                e.loss.mds,
                e.loss.l2,
                e.val_a_mean,
            )
        }),
    )
}

pub fn eval_csv<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Vec<u8> {
    to_csv(
        &EVAL_HEADER,
        reports.into_iter().map(|r| {
            (
                &r.problem,
                &r.split,
                r.repetition,
                r.n_tasks(),
                r.mean,
                r.std,
                r.confusion.tp,
                r.confusion.fp,
                r.confusion.tn,
                r.confusion.fn_,
            )
        }),
    )
}

/// One line of the experiment summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub problem: String,
    pub arm: String,
    pub repetitions: usize,
    pub n_tasks: usize,
    pub mean_a_mean: f64,
    pub std_a_mean: f64,
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    to_csv(&SUMMARY_HEADER, rows)
}

pub fn trials_csv(trials: &[Trial]) -> Vec<u8> {
    to_csv(
        &TRIALS_HEADER,
        trials.iter().map(|t| {
            let w = t.config.weights;
            (
                t.index,
                t.seed,
                t.score,
                w.po,
                w.dom,
                w.mds,
                w.l2,
                t.config.max_lr,
                t.config.hidden_layers,
                t.config.hidden_units,
            )
        }),
    )
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 72.0;
const ARM_COLORS: [&str; 2] = ["#4c72b0", "#dd8452"];

/// Bar chart of mean test A-mean per problem with ±1 σ sticks, grouped by
/// arm, on a fixed [0, 1] axis with a dashed line at 0.5.
pub fn summary_svg(rows: &[SummaryRow]) -> String {
    let mut problems: Vec<&str> = Vec::new();
    let mut arms: Vec<&str> = Vec::new();
    for r in rows {
        if !problems.contains(&r.problem.as_str()) {
            problems.push(&r.problem);
        }
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let slot = plot_w / problems.len().max(1) as f64;
    let bar_w = slot * 0.8 / arms.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    // axis and ticks
    let _ = writeln!(
        s,
        r#"<g class="axis" data-min="0" data-max="1"><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        y(0.0)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {}) rotate(-90)" text-anchor="middle">A-mean</text></g>"#,
        TOP + plot_h / 2.0
    );

    for (pi, problem) in problems.iter().enumerate() {
        let x0 = LEFT + slot * pi as f64 + slot * 0.1;
        for (ai, arm) in arms.iter().enumerate() {
            let Some(r) = rows.iter().find(|r| r.problem == *problem && r.arm == *arm) else {
                continue;
            };
            let x = x0 + bar_w * ai as f64;
            let cx = x + bar_w / 2.0;
            let _ = writeln!(
                s,
                r#"<g class="bar" data-problem="{problem}" data-arm="{arm}" data-mean="{}" data-std="{}"><rect x="{x}" y="{}" width="{bar_w}" height="{}" fill="{}"/><line class="error" x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/></g>"#,
                r.mean_a_mean,
                r.std_a_mean,
                y(r.mean_a_mean),
                y(0.0) - y(r.mean_a_mean),
                ARM_COLORS[ai % ARM_COLORS.len()],
                y(r.mean_a_mean + r.std_a_mean),
                y(r.mean_a_mean - r.std_a_mean),
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" transform="rotate(-45 {} {})">{problem}</text>"#,
            x0 + slot * 0.4,
            y(0.0) + 14.0,
            x0 + slot * 0.4,
            y(0.0) + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line class="reference" data-value="0.5" x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="gray" stroke-dasharray="4 3"/>"#,
        WIDTH - RIGHT,
        y = y(0.5)
    );
    if arms.len() > 1 {
        for (ai, arm) in arms.iter().enumerate() {
            let lx = WIDTH - RIGHT - 90.0;
            let ly = TOP + 14.0 * ai as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{arm}</text>"#,
                ly - 9.0,
                ARM_COLORS[ai % ARM_COLORS.len()],
                lx + 14.0,
                ly
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
