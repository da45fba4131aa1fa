//! Aggregation of result files into learning curves and target tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{iterations_to_target, read_series, samples_and_cost_to_target, RunSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    pub inputs: Vec<PathBuf>,
    pub targets: Vec<f64>,
    pub window: usize,
    pub format: ReportFormat,
}

impl ReportSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::InvalidConfig(
                "report needs at least one result file".into(),
            ));
        }
        if let Some(t) = self.targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::InvalidConfig(format!("target {t} outside (0, 1]")));
        }
        if self.window == 0 {
            return Err(Error::InvalidConfig(
                "smoothing window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Series sharing strategy, cost model, budget and batch size.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub strategy: String,
    pub cost: String,
    pub budget: String,
    pub batch_size: usize,
}

impl GroupKey {
    fn of(s: &RunSeries) -> Self {
        let st = &s.config.strategy;
        Self {
            strategy: st.kind.to_string(),
            cost: s.config.cost.variant.to_string(),
            budget: st.budget.to_string(),
            batch_size: st.n_max,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/b{}",
            self.strategy, self.cost, self.budget, self.batch_size
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub group: String,
    pub iteration: usize,
    pub n_seeds: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetCell {
    pub group: String,
    pub target: f64,
    /// `None` aggregates over seeds.
    pub seed: Option<u64>,
    pub iterations: Option<f64>,
    pub samples: Option<f64>,
    pub cost: Option<f64>,
    pub reached: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub curves: Vec<CurvePoint>,
    pub targets: Vec<TargetCell>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trailing moving average over the last `window` evaluated points.
pub fn smooth(acc: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let mut recent: Vec<f64> = Vec::new();
    acc.iter()
        .map(|a| {
            a.map(|v| {
                recent.push(v);
                let tail = &recent[recent.len().saturating_sub(window)..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
        })
        .collect()
}

fn data_identity(s: &RunSeries) -> String {
    serde_json::to_string(&s.config.data).unwrap_or_default()
}

pub fn aggregate(series: &[RunSeries], targets: &[f64], window: usize) -> Result<Report> {
    let Some(first) = series.first() else {
        return Ok(Report::default());
    };
    let identity = data_identity(first);
    if let Some(other) = series.iter().find(|s| data_identity(s) != identity) {
        return Err(Error::Report(format!(
            "result files come from different datasets: {identity} vs {}",
            data_identity(other)
        )));
    }

    let mut groups: BTreeMap<GroupKey, Vec<&RunSeries>> = BTreeMap::new();
    for s in series {
        groups.entry(GroupKey::of(s)).or_default().push(s);
    }
    let mut report = Report::default();
    for (key, mut members) in groups {
        members.sort_by_key(|s| s.seed);
        if members.windows(2).any(|w| w[0].seed == w[1].seed) {
            return Err(Error::Report(format!(
                "duplicate seed in group {}",
                key.label()
            )));
        }
        let label = key.label();
        let smoothed: Vec<Vec<Option<f64>>> = members
            .iter()
            .map(|s| smooth(&s.accuracies(), window))
            .collect();
        let len = smoothed.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..len {
            let values: Vec<f64> = smoothed
                .iter()
                .filter_map(|c| c.get(i).copied().flatten())
                .collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&values);
            report.curves.push(CurvePoint {
                group: label.clone(),
                iteration: members
                    .iter()
                    .find_map(|s| s.records.get(i))
                    .map_or(i + 1, |r| r.iteration),
                n_seeds: values.len(),
                mean_accuracy: mean,
                std_accuracy: std,
            });
        }
        for &target in targets {
            let mut hits = Vec::new();
            for s in &members {
                let it = iterations_to_target(s, target);
                let sc = samples_and_cost_to_target(s, target);
                report.targets.push(TargetCell {
                    group: label.clone(),
                    target,
                    seed: Some(s.seed),
                    iterations: it.map(|v| v as f64),
                    samples: sc.map(|v| v.0 as f64),
                    cost: sc.map(|v| v.1),
                    reached: usize::from(it.is_some()),
                    total: 1,
                });
                if let (Some(it), Some((n, c))) = (it, sc) {
                    hits.push((it as f64, n as f64, c));
                }
            }
            let avg = |f: fn(&(f64, f64, f64)) -> f64| {
                (!hits.is_empty()).then(|| hits.iter().map(f).sum::<f64>() / hits.len() as f64)
            };
            report.targets.push(TargetCell {
                group: label.clone(),
                target,
                seed: None,
                iterations: avg(|h| h.0),
                samples: avg(|h| h.1),
                cost: avg(|h| h.2),
                reached: hits.len(),
                total: members.len(),
            });
        }
    }
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "not reached".to_owned(), |x| format!("{x}"))
}

pub fn curves_csv(report: &Report) -> String {
    let mut out = String::from("group,iteration,n_seeds,mean_accuracy,std_accuracy\n");
    for p in &report.curves {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.group, p.iteration, p.n_seeds, p.mean_accuracy, p.std_accuracy
        );
    }
    out
}

pub fn targets_csv(report: &Report) -> String {
    let mut out = String::from("group,target,seed,iterations,samples,cost,reached\n");
    for c in &report.targets {
        let seed = c.seed.map_or_else(|| "mean".to_owned(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}/{}",
            c.group,
            c.target,
            seed,
            fmt_opt(c.iterations),
            fmt_opt(c.samples),
            fmt_opt(c.cost),
            c.reached,
            c.total
        );
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Static line chart of mean accuracy against iteration, with a ±1 std band.
pub fn render_svg(report: &Report) -> String {
    let (w, h, pad) = (800.0, 500.0, 50.0);
    let max_it = report
        .curves
        .iter()
        .map(|p| p.iteration)
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |it: usize| pad + (w - 2.0 * pad) * (it as f64 - 1.0) / (max_it - 1.0).max(1.0);
    let y = |a: f64| h - pad - (h - 2.0 * pad) * a.clamp(0.0, 1.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" font-size=\"12\">iteration</text>\n\
         <text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">test accuracy</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        ty = h - 12.0,
        cy = h / 2.0
    );
    for tick in 0..=5 {
        let a = tick as f64 / 5.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{a:.1}</text>",
            pad - 4.0,
            y(a) + 3.0
        );
    }
    let mut groups: Vec<&str> = report.curves.iter().map(|p| p.group.as_str()).collect();
    groups.dedup();
    for (g, name) in groups.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        let pts: Vec<&CurvePoint> = report.curves.iter().filter(|p| p.group == *name).collect();
        let upper: Vec<String> = pts
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    x(p.iteration),
                    y(p.mean_accuracy + p.std_accuracy)
                )
            })
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    x(p.iteration),
                    y(p.mean_accuracy - p.std_accuracy)
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.iteration), y(p.mean_accuracy)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            line.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            w - pad - 200.0,
            pad + 14.0 * g as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads the inputs, aggregates and writes `curves.csv`, `targets.csv` and,
/// for svg output, `curves.svg` into `out_dir`.
pub fn run_report(spec: &ReportSpec, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    let series: Vec<RunSeries> = spec.inputs.iter().map(read_series).collect::<Result<_>>()?;
    let report = aggregate(&series, &spec.targets, spec.window)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    put("curves.csv", curves_csv(&report))?;
    put("targets.csv", targets_csv(&report))?;
    if spec.format == ReportFormat::Svg {
        put("curves.svg", render_svg(&report))?;
    }
    Ok(written)
}
