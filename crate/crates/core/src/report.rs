//! Correlating index columns with external indicators and emitting scatter
//! data as CSV or SVG.
//!
//! Indicator CSV layout: `name,indicator,value`, one value per pair.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::indexes::IndexRow;

/// Indicator holding crude birth rates (per 1000); `ppb` is derived from it.
pub const BIRTH_RATE: &str = "birth_rate";
pub const PPB: &str = "ppb";

/// Population per birth: inhabitants per newborn, `1000 / birth_rate`.
pub fn ppb(birth_rate_per_1000: f64) -> Result<f64> {
    if !(birth_rate_per_1000.is_finite() && birth_rate_per_1000 > 0.0) {
        return Err(Error::Domain(birth_rate_per_1000));
    }
    Ok(1000.0 / birth_rate_per_1000)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorTable {
    records: Vec<(String, String, f64)>,
    index: HashMap<(String, String), usize>,
}

impl IndicatorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, indicator: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Domain(value));
        }
        let key = (name.to_string(), indicator.to_string());
        if self.index.contains_key(&key) {
            return Err(Error::Schema(format!(
                "duplicate indicator row {name:?} / {indicator:?}"
            )));
        }
        self.index.insert(key, self.records.len());
        self.records
            .push((name.to_string(), indicator.to_string(), value));
        Ok(())
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header != ["name", "indicator", "value"] {
            return Err(Error::Schema(
                "indicator header must be name,indicator,value".into(),
            ));
        }
        let mut table = Self::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or_default();
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let value: f64 = field(2).parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid value {:?}", field(2)),
            })?;
            table
                .insert(field(0), field(1), value)
                .map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
        }
        Ok(table)
    }

    pub fn get(&self, name: &str, indicator: &str) -> Option<f64> {
        self.index
            .get(&(name.to_string(), indicator.to_string()))
            .map(|&i| self.records[i].2)
    }

    pub fn has_indicator(&self, indicator: &str) -> bool {
        self.records.iter().any(|(_, i, _)| i == indicator)
    }

    /// Names carrying `indicator`, in file order.
    pub fn names_with(&self, indicator: &str) -> Vec<&str> {
        self.records
            .iter()
            .filter(|(_, i, _)| i == indicator)
            .map(|(n, _, _)| n.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads `name,tag` rows used to annotate scatter points.
pub fn read_tags<R: Read>(input: R) -> Result<HashMap<String, String>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut tags = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let name = rec.get(0).unwrap_or("").trim().to_string();
        let tag = rec.get(1).unwrap_or("").trim().to_string();
        tags.insert(name, tag);
    }
    Ok(tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    Log10,
}

impl Transform {
    fn apply(self, v: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(v),
            Transform::Log10 if v > 0.0 => Some(v.log10()),
            Transform::Log10 => None,
        }
    }
}

/// A scatter axis: an index column, an indicator, or `ppb`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub field: String,
    pub transform: Transform,
}

impl Axis {
    pub fn new(field: &str) -> Self {
        Axis {
            field: field.to_string(),
            transform: Transform::Identity,
        }
    }

    pub fn log10(field: &str) -> Self {
        Axis {
            field: field.to_string(),
            transform: Transform::Log10,
        }
    }

    pub fn label(&self) -> String {
        match self.transform {
            Transform::Identity => self.field.clone(),
            Transform::Log10 => format!("log10({})", self.field),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `field` or `log:field`.
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("log:") {
            Some(f) if !f.is_empty() => Ok(Axis::log10(f)),
            Some(_) => Err(Error::InvalidConfig("empty field after log:".into())),
            None if !s.is_empty() => Ok(Axis::new(s)),
            None => Err(Error::InvalidConfig("empty field".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub label: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<Point>,
    pub fit: Option<Fit>,
}

impl ScatterSeries {
    pub fn new(x_label: &str, y_label: &str, points: Vec<Point>) -> Self {
        let mut s = ScatterSeries {
            label: format!("{y_label} vs {x_label}"),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            points,
            fit: None,
        };
        s.refit();
        s
    }

    /// Recomputes the OLS fit; `None` when the points do not support one.
    pub fn refit(&mut self) {
        let xy = self.xy();
        self.fit = match (linear_fit(&xy), pearson(&xy)) {
            (Ok((slope, intercept)), Ok(pearson_r)) => Some(Fit {
                slope,
                intercept,
                pearson_r,
            }),
            _ => None,
        };
    }

    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }

    pub fn apply_tags(&mut self, tags: &HashMap<String, String>) {
        for p in &mut self.points {
            p.tag = tags.get(&p.name).cloned();
        }
    }

    fn has_tags(&self) -> bool {
        self.points.iter().any(|p| p.tag.is_some())
    }
}

/// Outcome of a join: the matched points plus every name that could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinReport {
    pub series: ScatterSeries,
    /// Index rows lacking one of the values, with the reason.
    pub unmatched_index: Vec<String>,
    /// Indicator names that have no index row.
    pub unmatched_indicator: Vec<String>,
}

enum Source {
    Index,
    Indicator,
    PpbFromBirthRate,
}

fn resolve(field: &str, indicators: &IndicatorTable) -> Result<Source> {
    if IndexRow::is_index_field(field) {
        Ok(Source::Index)
    } else if indicators.has_indicator(field) {
        Ok(Source::Indicator)
    } else if field == PPB && indicators.has_indicator(BIRTH_RATE) {
        Ok(Source::PpbFromBirthRate)
    } else {
        Err(Error::NotFound(format!(
            "field {field:?} is neither an index column nor an indicator"
        )))
    }
}

fn value_of(
    row: &IndexRow,
    axis: &Axis,
    source: &Source,
    indicators: &IndicatorTable,
) -> std::result::Result<f64, String> {
    let raw = match source {
        Source::Index => row
            .field(&axis.field)
            .ok_or_else(|| format!("{} undefined", axis.field))?,
        Source::Indicator => indicators
            .get(&row.name, &axis.field)
            .ok_or_else(|| format!("no {}", axis.field))?,
        Source::PpbFromBirthRate => {
            let br = indicators
                .get(&row.name, BIRTH_RATE)
                .ok_or_else(|| format!("no {BIRTH_RATE}"))?;
            ppb(br).map_err(|e| e.to_string())?
        }
    };
    axis.transform
        .apply(raw)
        .ok_or_else(|| format!("{} = {raw} has no logarithm", axis.field))
}

/// Inner join of index rows and indicators on the country name.
pub fn join(
    rows: &[IndexRow],
    indicators: &IndicatorTable,
    x: &Axis,
    y: &Axis,
) -> Result<JoinReport> {
    let sx = resolve(&x.field, indicators)?;
    let sy = resolve(&y.field, indicators)?;
    let mut points = Vec::new();
    let mut unmatched_index = Vec::new();
    for row in rows {
        match (
            value_of(row, x, &sx, indicators),
            value_of(row, y, &sy, indicators),
        ) {
            (Ok(xv), Ok(yv)) => points.push(Point {
                name: row.name.clone(),
                x: xv,
                y: yv,
                tag: None,
            }),
            (Err(e), _) | (_, Err(e)) => unmatched_index.push(format!("{} ({e})", row.name)),
        }
    }

    let index_names: HashSet<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    let mut used = Vec::new();
    for (axis, source) in [(x, &sx), (y, &sy)] {
        match source {
            Source::Index => {}
            Source::Indicator => used.push(axis.field.as_str()),
            Source::PpbFromBirthRate => used.push(BIRTH_RATE),
        }
    }
    used.dedup();
    let mut seen = HashSet::new();
    let mut unmatched_indicator = Vec::new();
    for ind in used {
        for name in indicators.names_with(ind) {
            if !index_names.contains(name) && seen.insert(name) {
                unmatched_indicator.push(name.to_string());
            }
        }
    }

    Ok(JoinReport {
        series: ScatterSeries::new(&x.label(), &y.label(), points),
        unmatched_index,
        unmatched_indicator,
    })
}

struct Moments {
    n: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
    mx: f64,
    my: f64,
}

fn moments(points: &[(f64, f64)]) -> Moments {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Moments {
        n,
        sxx,
        syy,
        sxy,
        mx,
        my,
    }
}

fn check_finite(points: &[(f64, f64)]) -> Result<()> {
    match points
        .iter()
        .find(|(x, y)| !(x.is_finite() && y.is_finite()))
    {
        Some(&(x, y)) => Err(Error::Domain(if x.is_finite() { y } else { x })),
        None => Ok(()),
    }
}

/// Pearson correlation coefficient.
pub fn pearson(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "pearson needs at least 3 points, got {}",
            points.len()
        )));
    }
    check_finite(points)?;
    let m = moments(points);
    if m.sxx == 0.0 || m.syy == 0.0 {
        return Err(Error::Undefined("zero variance".into()));
    }
    Ok((m.sxy / (m.sxx.sqrt() * m.syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "a fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    check_finite(points)?;
    let m = moments(points);
    if m.sxx == 0.0 {
        return Err(Error::Undefined("all x values are equal".into()));
    }
    debug_assert!(m.n > 0.0);
    let slope = m.sxy / m.sxx;
    Ok((slope, m.my - slope * m.mx))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the mean of their 1-based ranks
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(points: &[(f64, f64)]) -> Result<f64> {
    check_finite(points)?;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ranked: Vec<(f64, f64)> = ranks(&xs).into_iter().zip(ranks(&ys)).collect();
    pearson(&ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

pub fn emit<W: Write>(series: &ScatterSeries, format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => emit_csv(series, out),
        Format::Svg => emit_svg(series, out),
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// `#` comment lines with the labels and fit, then `name,x,y` rows
/// (plus `tag` when any point is tagged).
pub fn emit_csv<W: Write>(series: &ScatterSeries, mut out: W) -> Result<()> {
    writeln!(out, "# series: {}", one_line(&series.label))?;
    writeln!(out, "# x: {}", one_line(&series.x_label))?;
    writeln!(out, "# y: {}", one_line(&series.y_label))?;
    match series.fit {
        Some(f) => writeln!(
            out,
            "# fit: slope={} intercept={} r={} n={}",
            f.slope,
            f.intercept,
            f.pearson_r,
            series.points.len()
        )?,
        None => writeln!(out, "# fit: none n={}", series.points.len())?,
    }
    let tagged = series.has_tags();
    let mut w = csv::Writer::from_writer(out);
    if tagged {
        w.write_record(["name", "x", "y", "tag"])?;
    } else {
        w.write_record(["name", "x", "y"])?;
    }
    for p in &series.points {
        let (x, y) = (p.x.to_string(), p.y.to_string());
        if tagged {
            w.write_record([p.name.as_str(), &x, &y, p.tag.as_deref().unwrap_or("")])?;
        } else {
            w.write_record([p.name.as_str(), &x, &y])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        (hi - lo) * 0.05
    } else {
        lo.abs().max(1.0) * 0.5
    };
    (lo - pad, hi + pad)
}

/// Static scatter plot with the fitted line. Output depends only on the series.
pub fn emit_svg<W: Write>(series: &ScatterSeries, mut out: W) -> Result<()> {
    let (x0, x1) = padded_range(series.points.iter().map(|p| p.x));
    let (y0, y1) = padded_range(series.points.iter().map(|p| p.y));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let sy = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        SVG_W / 2.0,
        xml_escape(&series.label)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{m:.2},{top:.2} L{m:.2},{b:.2} L{r:.2},{b:.2}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        top = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            sx(xv),
            SVG_H - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        SVG_W / 2.0,
        SVG_H - 16.0,
        xml_escape(&series.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.2})">{}</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0,
        xml_escape(&series.y_label)
    );

    let mut tags: Vec<&str> = Vec::new();
    for p in &series.points {
        if let Some(t) = p.tag.as_deref() {
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
    }
    for p in &series.points {
        let color = match p.tag.as_deref() {
            Some(t) => {
                PALETTE[1 + tags.iter().position(|x| *x == t).unwrap() % (PALETTE.len() - 1)]
            }
            None => PALETTE[0],
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{}</title></circle>"#,
            sx(p.x),
            sy(p.y),
            xml_escape(&p.name)
        );
    }
    if let Some(f) = series.fit {
        let (ya, yb) = (f.slope * x0 + f.intercept, f.slope * x1 + f.intercept);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#444" stroke-dasharray="6 3"/>"##,
            sx(x0),
            sy(ya),
            sx(x1),
            sy(yb)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">y = {:.4}x + {:.4}, r = {:.4}</text>"#,
            SVG_W - MARGIN,
            MARGIN - 8.0,
            f.slope,
            f.intercept,
            f.pearson_r
        );
    }
    s.push_str("</svg>\n");
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
