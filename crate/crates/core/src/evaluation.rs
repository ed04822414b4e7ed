//! Top-k accuracy, calibration-bias sweeps and CSV exports.
//!
//! Rankings are always restricted to a label space of composition indices.
//! Equal scores are ordered by composition index, lowest first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Classifier scores of a labelled evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    values: Vec<f64>,
    /// Composition index of each column.
    classes: Vec<usize>,
    /// Composition index of each row's true label.
    labels: Vec<usize>,
}

impl Scores {
    pub fn new(values: Vec<f64>, classes: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        if values.len() != classes.len() * labels.len() {
            return Err(Error::shape(
                "scores",
                format!("{} values for {} rows x {} classes", values.len(), labels.len(), classes.len()),
            ));
        }
        if classes.iter().collect::<BTreeSet<_>>().len() != classes.len() {
            return Err(Error::invalid("duplicate class in score columns"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        Ok(Scores {
            values,
            classes,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.classes.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn rows_with_labels(&self, labels: &[usize]) -> Vec<usize> {
        let keep: BTreeSet<usize> = labels.iter().copied().collect();
        (0..self.len()).filter(|&i| keep.contains(&self.labels[i])).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Scores {
        let mut values = Vec::with_capacity(rows.len() * self.classes.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Scores {
            values,
            classes: self.classes.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// `(composition, column)` pairs of `space` sorted by composition.
    fn columns(&self, space: &[usize]) -> Result<Vec<(usize, usize)>> {
        let pos: BTreeMap<usize, usize> = self.classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let space: BTreeSet<usize> = space.iter().copied().collect();
        space
            .into_iter()
            .map(|c| {
                pos.get(&c)
                    .map(|&col| (c, col))
                    .ok_or_else(|| Error::invalid(format!("composition {c} is not scored by the classifier")))
            })
            .collect()
    }
}

/// Whether composition `a` with score `sa` ranks ahead of `b` with `sb`.
fn ahead(sa: f64, a: usize, sb: f64, b: usize) -> bool {
    sa > sb || (sa == sb && a < b)
}

/// Fraction of rows whose label is among the `k` best scores within `label_space`.
pub fn topk_accuracy(scores: &Scores, label_space: &[usize], k: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let cols = scores.columns(label_space)?;
    let mut hits = 0usize;
    for i in 0..scores.len() {
        let y = scores.labels[i];
        let row = scores.row(i);
        let &(_, ycol) = cols
            .iter()
            .find(|(c, _)| *c == y)
            .ok_or_else(|| Error::invalid(format!("label {y} outside the label space")))?;
        let sy = row[ycol];
        let rank = cols.iter().filter(|&&(c, col)| ahead(row[col], c, sy, y)).count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / scores.len() as f64)
}

/// Top-1 prediction of every row within `label_space`.
pub fn predictions(scores: &Scores, label_space: &[usize]) -> Result<Vec<usize>> {
    let cols = scores.columns(label_space)?;
    if cols.is_empty() {
        return Err(Error::invalid("empty label space"));
    }
    Ok((0..scores.len())
        .map(|i| {
            let row = scores.row(i);
            let mut best = cols[0];
            for &(c, col) in &cols[1..] {
                if ahead(row[col], c, row[best.1], best.0) {
                    best = (c, col);
                }
            }
            best.0
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub enum BiasGrid {
    /// Every plateau of the piecewise-constant accuracies plus both infinite limits.
    Exact,
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub bias: f64,
    pub seen: f64,
    pub unseen: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    pub k: usize,
    /// Ordered by strictly increasing bias.
    pub points: Vec<CurvePoint>,
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.seen) || !(0.0..=1.0).contains(&p.unseen) || p.bias.is_nan() {
                return Err(Error::invalid("curve point outside [0, 1]"));
            }
        }
        for w in self.points.windows(2) {
            if !(w[0].bias < w[1].bias) {
                return Err(Error::invalid("curve biases must be strictly increasing"));
            }
            if w[1].seen > w[0].seen || w[1].unseen < w[0].unseen {
                return Err(Error::invalid("curve accuracies are not monotone in the bias"));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bias,seen,unseen\n");
        for p in &self.points {
            s.push_str(&format!("{:?},{:?},{:?}\n", p.bias, p.seen, p.unseen));
        }
        s
    }
}

/// When a sample is top-k correct as a function of the unseen bias `b`.
#[derive(Clone, Copy, Debug)]
enum Window {
    Always,
    Never,
    /// Correct for `b < τ`.
    Below(f64),
    /// Correct for `b > τ`.
    Above(f64),
}

impl Window {
    fn hit(self, b: f64) -> bool {
        match self {
            Window::Always => true,
            Window::Never => false,
            Window::Below(t) => b < t,
            Window::Above(t) => b > t,
        }
    }

    fn threshold(self) -> Option<f64> {
        match self {
            Window::Below(t) | Window::Above(t) => Some(t),
            _ => None,
        }
    }
}

struct SweepSetup {
    seen_cols: Vec<(usize, usize)>,
    unseen_cols: Vec<(usize, usize)>,
    seen_rows: Vec<usize>,
    unseen_rows: Vec<usize>,
}

fn setup(scores: &Scores, seen: &[usize], unseen: &[usize], k: usize) -> Result<SweepSetup> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let overlap = seen.iter().any(|c| unseen.contains(c));
    if overlap {
        return Err(Error::invalid("seen and unseen compositions overlap"));
    }
    let seen_rows = scores.rows_with_labels(seen);
    let unseen_rows = scores.rows_with_labels(unseen);
    if seen_rows.is_empty() || unseen_rows.is_empty() {
        return Err(Error::invalid("calibration needs both seen and unseen samples"));
    }
    if seen_rows.len() + unseen_rows.len() != scores.len() {
        return Err(Error::invalid("evaluation rows outside seen and unseen compositions"));
    }
    Ok(SweepSetup {
        seen_cols: scores.columns(seen)?,
        unseen_cols: scores.columns(unseen)?,
        seen_rows,
        unseen_rows,
    })
}

fn window(scores: &Scores, s: &SweepSetup, row: usize, k: usize, is_seen: bool) -> Window {
    let y = scores.labels[row];
    let r = scores.row(row);
    let (own, other) = if is_seen {
        (&s.seen_cols, &s.unseen_cols)
    } else {
        (&s.unseen_cols, &s.seen_cols)
    };
    let sy = own.iter().find(|(c, _)| *c == y).map(|&(_, col)| r[col]).expect("label in its group");
    let base = own.iter().filter(|&&(c, col)| ahead(r[col], c, sy, y)).count();
    if base >= k {
        return Window::Never;
    }
    let m = k - base;
    if other.len() < m {
        return Window::Always;
    }
    let mut gaps: Vec<f64> = other.iter().map(|&(_, col)| if is_seen { sy - r[col] } else { r[col] - sy }).collect();
    gaps.sort_by(f64::total_cmp);
    if is_seen {
        // Unseen competitor l overtakes once b > s_y − u_l.
        Window::Below(gaps[m - 1])
    } else {
        // Seen competitor j stays ahead while b < s_j − u_y.
        Window::Above(gaps[gaps.len() - m])
    }
}

/// Brute-force top-k correctness with `bias` added to unseen scores.
fn hit_at(scores: &Scores, s: &SweepSetup, row: usize, k: usize, bias: f64) -> bool {
    let y = scores.labels[row];
    let r = scores.row(row);
    // Infinite biases order the groups first and compare raw scores within them.
    let key = |col: usize, unseen: bool| -> (f64, f64) {
        match (unseen, bias.is_finite()) {
            (false, _) => (0.0, r[col]),
            (true, true) => (0.0, r[col] + bias),
            (true, false) => (bias.signum(), r[col]),
        }
    };
    let y_unseen = s.unseen_cols.iter().any(|(c, _)| *c == y);
    let ycol = if y_unseen { &s.unseen_cols } else { &s.seen_cols }
        .iter()
        .find(|(c, _)| *c == y)
        .expect("label in its group")
        .1;
    let ky = key(ycol, y_unseen);
    let mut rank = 0;
    for (cols, unseen) in [(&s.seen_cols, false), (&s.unseen_cols, true)] {
        for &(c, col) in cols {
            let kc = key(col, unseen);
            if kc.0 > ky.0 || (kc.0 == ky.0 && ahead(kc.1, c, ky.1, y)) {
                rank += 1;
            }
        }
    }
    rank < k
}

/// Seen and unseen top-k accuracy over a grid of unseen-score biases.
///
/// Rows must be labelled with `seen` or `unseen` compositions; the label
/// space is their union.
pub fn calibrated_sweep(
    scores: &Scores,
    seen: &[usize],
    unseen: &[usize],
    k: usize,
    grid: &BiasGrid,
) -> Result<CalibrationCurve> {
    let s = setup(scores, seen, unseen, k)?;
    let points = match grid {
        BiasGrid::Exact => {
            let seen_w: Vec<Window> = s.seen_rows.iter().map(|&r| window(scores, &s, r, k, true)).collect();
            let unseen_w: Vec<Window> = s.unseen_rows.iter().map(|&r| window(scores, &s, r, k, false)).collect();
            let mut taus: Vec<f64> = seen_w.iter().chain(&unseen_w).filter_map(|w| w.threshold()).collect();
            taus.sort_by(f64::total_cmp);
            taus.dedup();
            let mut biases = vec![f64::NEG_INFINITY];
            for w in taus.windows(2) {
                let mid = w[0] + (w[1] - w[0]) / 2.0;
                if mid > *biases.last().expect("non-empty") {
                    biases.push(mid);
                }
            }
            biases.push(f64::INFINITY);
            let frac = |ws: &[Window], b: f64| ws.iter().filter(|w| w.hit(b)).count() as f64 / ws.len() as f64;
            biases
                .into_iter()
                .map(|b| CurvePoint {
                    bias: b,
                    seen: frac(&seen_w, b),
                    unseen: frac(&unseen_w, b),
                })
                .collect()
        }
        BiasGrid::Values(values) => {
            if values.is_empty() {
                return Err(Error::invalid("empty bias grid"));
            }
            if values.iter().any(|v| v.is_nan()) || values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid("bias grid must be strictly increasing"));
            }
            let frac = |rows: &[usize], b: f64| {
                rows.iter().filter(|&&r| hit_at(scores, &s, r, k, b)).count() as f64 / rows.len() as f64
            };
            values
                .iter()
                .map(|&b| CurvePoint {
                    bias: b,
                    seen: frac(&s.seen_rows, b),
                    unseen: frac(&s.unseen_rows, b),
                })
                .collect()
        }
    };
    Ok(CalibrationCurve { k, points })
}

/// Trapezoidal area under unseen accuracy (y) against seen accuracy (x).
pub fn auc_from_curve(curve: &CalibrationCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::invalid("a curve needs at least 2 points"));
    }
    curve.validate()?;
    // Decreasing bias gives increasing seen accuracy.
    let pts: Vec<&CurvePoint> = curve.points.iter().rev().collect();
    let area = pts
        .windows(2)
        .map(|w| (w[1].seen - w[0].seen) * (w[0].unseen + w[1].unseen) / 2.0)
        .sum::<f64>();
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Closed,
    Open,
    Generalized,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Closed => "closed",
            Protocol::Open => "open",
            Protocol::Generalized => "generalized",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "closed" => Ok(Protocol::Closed),
            "open" => Ok(Protocol::Open),
            "generalized" => Ok(Protocol::Generalized),
            _ => Err(Error::Config(format!("unknown protocol {s:?}; expected closed, open or generalized"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub split: String,
    pub topk: [f64; 3],
    pub auc: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    pub truth: usize,
    pub predicted: usize,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub confusion: Vec<Confusion>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "protocol,split,top1,top2,top3,auc_top1,auc_top2,auc_top3";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let auc = match r.auc {
                Some(a) => format!("{:?},{:?},{:?}", a[0], a[1], a[2]),
                None => ",,".into(),
            };
            s.push_str(&format!(
                "{},{},{:?},{:?},{:?},{}\n",
                r.protocol, r.split, r.topk[0], r.topk[1], r.topk[2], auc
            ));
        }
        s
    }

    /// `truth_attr,truth_obj,pred_attr,pred_obj,count` with names from `name`.
    pub fn confusion_csv(&self, name: impl Fn(usize) -> (String, String)) -> String {
        let mut s = String::from("truth_attr,truth_obj,pred_attr,pred_obj,count\n");
        for c in &self.confusion {
            let (ta, to) = name(c.truth);
            let (pa, po) = name(c.predicted);
            s.push_str(&format!("{ta},{to},{pa},{po},{}\n", c.count));
        }
        s
    }

    fn add_confusion(&mut self, scores: &Scores, space: &[usize]) -> Result<()> {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (&t, p) in scores.labels.iter().zip(predictions(scores, space)?) {
            *counts.entry((t, p)).or_default() += 1;
        }
        self.confusion.extend(counts.into_iter().map(|((truth, predicted), count)| Confusion {
            truth,
            predicted,
            count,
        }));
        Ok(())
    }
}

fn topk3(scores: &Scores, space: &[usize]) -> Result<[f64; 3]> {
    Ok([
        topk_accuracy(scores, space, 1)?,
        topk_accuracy(scores, space, 2)?,
        topk_accuracy(scores, space, 3)?,
    ])
}

/// Closed-world (label space `unseen`) or open-world (every scored class)
/// accuracy on the rows labelled with `unseen` compositions.
pub fn evaluate_zscl(scores: &Scores, unseen: &[usize], protocol: Protocol, split: &str) -> Result<EvalReport> {
    let rows = scores.select_rows(&scores.rows_with_labels(unseen));
    let space: Vec<usize> = match protocol {
        Protocol::Closed => unseen.to_vec(),
        Protocol::Open => scores.classes.clone(),
        Protocol::Generalized => return Err(Error::invalid("use evaluate_generalized for the generalized protocol")),
    };
    let mut report = EvalReport {
        rows: vec![ReportRow {
            protocol,
            split: split.to_string(),
            topk: topk3(&rows, &space)?,
            auc: None,
        }],
        confusion: Vec::new(),
    };
    report.add_confusion(&rows, &space)?;
    Ok(report)
}

/// Uncalibrated top-k over `seen ∪ unseen` plus the exact-sweep AUC for k = 1, 2, 3.
pub fn evaluate_generalized(scores: &Scores, seen: &[usize], unseen: &[usize], split: &str) -> Result<EvalReport> {
    let mut space = seen.to_vec();
    space.extend_from_slice(unseen);
    let mut auc = [0.0; 3];
    for (k, a) in auc.iter_mut().enumerate() {
        *a = auc_from_curve(&calibrated_sweep(scores, seen, unseen, k + 1, &BiasGrid::Exact)?)?;
    }
    let mut report = EvalReport {
        rows: vec![ReportRow {
            protocol: Protocol::Generalized,
            split: split.to_string(),
            topk: topk3(scores, &space)?,
            auc: Some(auc),
        }],
        confusion: Vec::new(),
    };
    report.add_confusion(scores, &space)?;
    Ok(report)
}

/// CSV with `attr,obj` label columns then `d0..d{width-1}`.
pub fn embeddings_csv(width: usize, values: &[f64], labels: &[(String, String)]) -> Result<String> {
    if values.len() != width * labels.len() {
        return Err(Error::shape(
            "embeddings_csv",
            format!("{} values for {} rows of width {width}", values.len(), labels.len()),
        ));
    }
    let mut s = String::from("attr,obj");
    for d in 0..width {
        s.push_str(&format!(",d{d}"));
    }
    s.push('\n');
    for (i, (a, o)) in labels.iter().enumerate() {
        s.push_str(a);
        s.push(',');
        s.push_str(o);
        for v in &values[i * width..(i + 1) * width] {
            s.push_str(&format!(",{v:.16e}"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn export_embeddings_csv(
    path: impl AsRef<Path>,
    width: usize,
    values: &[f64],
    labels: &[(String, String)],
) -> Result<()> {
    let path = path.as_ref();
    let text = embeddings_csv(width, values, labels)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parsed embedding CSV: `(width, values, labels)`.
pub fn parse_embeddings_csv(text: &str) -> Result<(usize, Vec<f64>, Vec<(String, String)>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("missing CSV header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "attr" || cols[1] != "obj" {
        return Err(Error::Format("embedding CSV must start with attr,obj".into()));
    }
    let width = cols.len() - 2;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Format(format!("row {} has {} fields, expected {}", n + 1, f.len(), cols.len())));
        }
        labels.push((f[0].to_string(), f[1].to_string()));
        for v in &f[2..] {
            values.push(v.parse::<f64>().map_err(|_| Error::Format(format!("bad number {v:?} in row {}", n + 1)))?);
        }
    }
    Ok((width, values, labels))
}
