//! `report`: merges metric outputs into one row per method.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::args::ReportArgs;
use super::commands::mean_std;
use super::{write_file, CliError, Context, Outcome};

pub const DEFAULT_BASELINE: &str = "unnormalized";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub std: f64,
}

/// The "sustained performance" check: the interval `mean ± std` of a method
/// overlaps with or lies above the baseline's.
pub fn sustained(method: &Interval, baseline: &Interval) -> bool {
    method.mean + method.std >= baseline.mean - baseline.std
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub domain_accuracy: Option<Interval>,
    pub tumor_accuracy: Option<Interval>,
    pub ssim: Option<Interval>,
    pub fid: Option<f64>,
}

#[derive(Deserialize)]
struct SsimSummaryDoc {
    label: String,
    mean: Option<f64>,
    std: Option<f64>,
}

#[derive(Deserialize)]
struct FidDoc {
    label: String,
    fid: Option<f64>,
}

#[derive(Deserialize)]
struct ClassifierDoc {
    label: String,
    domain_accuracy: Option<Interval>,
    tumor_accuracy: Option<Interval>,
}

#[derive(Default)]
struct Rows(Vec<ReportRow>);

impl Rows {
    fn row(&mut self, label: &str) -> &mut ReportRow {
        match self.0.iter().position(|r| r.label == label) {
            Some(i) => &mut self.0[i],
            None => {
                self.0.push(ReportRow { label: label.to_string(), ..Default::default() });
                self.0.last_mut().expect("just pushed")
            }
        }
    }

    /// Later inputs override earlier ones for the same label and metric.
    fn absorb_json(&mut self, v: &Value, path: &Path) -> Result<(), CliError> {
        let bad = |e: serde_json::Error| CliError::new("MalformedInput", format!("{}: {e}", path.display()));
        match v.get("kind").and_then(Value::as_str) {
            Some("ssim_summary") => {
                let d: SsimSummaryDoc = serde_json::from_value(v.clone()).map_err(bad)?;
                self.row(&d.label).ssim = d.mean.zip(d.std).map(|(mean, std)| Interval { mean, std });
            }
            Some("fid") => {
                let d: FidDoc = serde_json::from_value(v.clone()).map_err(bad)?;
                self.row(&d.label).fid = d.fid;
            }
            Some("classifier") => {
                let d: ClassifierDoc = serde_json::from_value(v.clone()).map_err(bad)?;
                let row = self.row(&d.label);
                if d.domain_accuracy.is_some() {
                    row.domain_accuracy = d.domain_accuracy;
                }
                if d.tumor_accuracy.is_some() {
                    row.tumor_accuracy = d.tumor_accuracy;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-pair SSIM tables contribute; any other well-formed CSV is skipped.
    fn absorb_csv(&mut self, bytes: &[u8], path: &Path) -> Result<(), CliError> {
        let bad = |m: String| CliError::new("MalformedInput", format!("{}: {m}", path.display()));
        let mut r = csv::Reader::from_reader(bytes);
        let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let li = headers.iter().position(|h| h == "label");
        let si = headers.iter().position(|h| h == "ssim");
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if let (Some(li), Some(si)) = (li, si) {
                let v: f64 = rec[si].parse().map_err(|_| bad(format!("ssim value {:?}", &rec[si])))?;
                match groups.iter_mut().find(|(l, _)| l == &rec[li]) {
                    Some((_, vs)) => vs.push(v),
                    None => groups.push((rec[li].to_string(), vec![v])),
                }
            }
        }
        for (label, values) in groups {
            let (mean, std) = mean_std(&values);
            self.row(&label).ssim = Some(Interval { mean, std });
        }
        Ok(())
    }

    fn absorb(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
        let bad = |e: serde_json::Error| CliError::new("MalformedInput", format!("{}: {e}", path.display()));
        match ext.as_str() {
            "csv" => self.absorb_csv(&bytes, path),
            "jsonl" => {
                let text = std::str::from_utf8(&bytes).map_err(|e| CliError::new("MalformedInput", e.to_string()))?;
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    self.absorb_json(&serde_json::from_str(line).map_err(bad)?, path)?;
                }
                Ok(())
            }
            _ => match serde_json::from_slice::<Value>(&bytes).map_err(bad)? {
                Value::Array(items) => items.iter().try_for_each(|v| self.absorb_json(v, path)),
                v => self.absorb_json(&v, path),
            },
        }
    }
}

/// Reads every input and returns one row per label in order of first
/// appearance.
pub fn collect_rows(paths: &[impl AsRef<Path>]) -> Result<Vec<ReportRow>, CliError> {
    let mut rows = Rows::default();
    for p in paths {
        rows.absorb(p.as_ref())?;
    }
    Ok(rows.0)
}

const NA: &str = "n/a";

fn num(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn pm(v: Option<Interval>) -> String {
    match v {
        Some(i) if i.mean.is_finite() && i.std.is_finite() => format!("{:.3} ± {:.3}", i.mean, i.std),
        _ => NA.to_string(),
    }
}

fn sustained_cell(row: &ReportRow, baseline: Option<&ReportRow>) -> &'static str {
    match (row.tumor_accuracy, baseline.and_then(|b| b.tumor_accuracy)) {
        (Some(a), Some(b)) => {
            if sustained(&a, &b) {
                "yes"
            } else {
                "no"
            }
        }
        _ => NA,
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// The results table as CSV and Markdown.
pub fn render_table(rows: &[ReportRow], baseline: &str) -> (Vec<u8>, String) {
    let base = rows.iter().find(|r| r.label == baseline);
    let header = [
        "method",
        "domain_accuracy_mean",
        "domain_accuracy_std",
        "tumor_accuracy_mean",
        "tumor_accuracy_std",
        "sustained",
        "ssim_mean",
        "ssim_std",
        "fid",
    ];
    let csv = csv_bytes(
        &header,
        rows.iter().map(|r| {
            vec![
                r.label.clone(),
                num(r.domain_accuracy.map(|i| i.mean)),
                num(r.domain_accuracy.map(|i| i.std)),
                num(r.tumor_accuracy.map(|i| i.mean)),
                num(r.tumor_accuracy.map(|i| i.std)),
                sustained_cell(r, base).to_string(),
                num(r.ssim.map(|i| i.mean)),
                num(r.ssim.map(|i| i.std)),
                num(r.fid),
            ]
        }),
    );
    let mut md = String::from(
        "| Method | Domain classifier accuracy | Tumor classifier accuracy | Sustained performance | SSIM | FID |\n\
         |---|---|---|---|---|---|\n",
    );
    for r in rows {
        let fid = r.fid.filter(|f| f.is_finite()).map_or_else(|| NA.to_string(), |f| format!("{f:.3}"));
        md += &format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.label,
            pm(r.domain_accuracy),
            pm(r.tumor_accuracy),
            sustained_cell(r, base),
            pm(r.ssim),
            fid
        );
    }
    (csv, md)
}

/// Scatter data of tumor classifier accuracy against SSIM, against FID, and of
/// domain against tumor classifier accuracy. Rows lacking either coordinate
/// are left out.
pub fn render_scatter(rows: &[ReportRow]) -> [(&'static str, Vec<u8>); 3] {
    let acc = |r: &ReportRow| r.tumor_accuracy.map(|t| [t.mean.to_string(), t.std.to_string()]);
    let ssim = csv_bytes(
        &["method", "tumor_accuracy_mean", "tumor_accuracy_std", "ssim_mean", "ssim_std"],
        rows.iter().filter_map(|r| {
            let [m, s] = acc(r)?;
            let x = r.ssim?;
            Some(vec![r.label.clone(), m, s, x.mean.to_string(), x.std.to_string()])
        }),
    );
    let fid = csv_bytes(
        &["method", "tumor_accuracy_mean", "tumor_accuracy_std", "fid"],
        rows.iter().filter_map(|r| {
            let [m, s] = acc(r)?;
            let f = r.fid.filter(|f| f.is_finite())?;
            Some(vec![r.label.clone(), m, s, f.to_string()])
        }),
    );
    let domain = csv_bytes(
        &["method", "tumor_accuracy_mean", "tumor_accuracy_std", "domain_accuracy_mean", "domain_accuracy_std"],
        rows.iter().filter_map(|r| {
            let [m, s] = acc(r)?;
            let d = r.domain_accuracy?;
            Some(vec![r.label.clone(), m, s, d.mean.to_string(), d.std.to_string()])
        }),
    );
    [("scatter_ssim.csv", ssim), ("scatter_fid.csv", fid), ("scatter_domain.csv", domain)]
}

pub(crate) fn run(ctx: &Context, a: &ReportArgs) -> Result<Outcome, CliError> {
    let baseline = a.baseline.clone().or_else(|| ctx.config.baseline.clone()).unwrap_or_else(|| DEFAULT_BASELINE.into());
    let resolved = super::RunConfig { baseline: Some(baseline.clone()), ..ctx.resolved() };
    ctx.write_resolved(&a.out.join("resolved_config.json"), "report", a, &resolved)?;
    let rows = collect_rows(&a.inputs)?;
    let (csv, md) = render_table(&rows, &baseline);
    write_file(&a.out.join("table.csv"), &csv)?;
    write_file(&a.out.join("table.md"), md.as_bytes())?;
    for (name, bytes) in render_scatter(&rows) {
        write_file(&a.out.join(name), &bytes)?;
    }
    ctx.say(md.trim_end());
    Ok(Outcome::Success)
}
