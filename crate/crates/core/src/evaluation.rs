//! Tracking metrics, dataset reports and label heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::framing::{PupilLabel, Sample, ROI_HEIGHT, ROI_WIDTH};
use crate::network::{
    cell_to_center, label_to_cell, predict, GridSpec, Head, InputEncoder, NetworkSpec, Params,
    DEFAULT_INPUT_EXPONENT,
};
use crate::quantization::{int_forward, IntegerModel};

/// Mean of the per-row degree/pixel ratios of the published regression table.
pub const DEFAULT_DEG_PER_PX: f64 = 0.76;

fn both_visible(pred: &PupilLabel, label: &PupilLabel) -> Result<(f64, f64)> {
    if !pred.visible || !label.visible {
        return Err(Error::InvalidParam("distance needs two visible points".into()));
    }
    Ok((pred.x - label.x, pred.y - label.y))
}

/// Euclidean distance in ROI pixels.
pub fn pixel_distance(pred: &PupilLabel, label: &PupilLabel) -> Result<f64> {
    let (dx, dy) = both_visible(pred, label)?;
    Ok(dx.hypot(dy))
}

/// Mean of the per-axis absolute errors.
pub fn mae(pred: &PupilLabel, label: &PupilLabel) -> Result<f64> {
    let (dx, dy) = both_visible(pred, label)?;
    Ok((dx.abs() + dy.abs()) / 2.0)
}

/// Distance between two cell centers in ROI pixels.
pub fn block_distance(pred_class: usize, true_class: usize, grid: &GridSpec) -> Result<f64> {
    let a = cell_to_center(pred_class, grid)?;
    let b = cell_to_center(true_class, grid)?;
    match (a, b) {
        (Some(a), Some(b)) => Ok((a.0 - b.0).hypot(a.1 - b.1)),
        _ => Err(Error::InvalidParam("block distance with the not-visible class".into())),
    }
}

pub fn angle_error(pixel_distance: f64, deg_per_px: f64) -> Result<f64> {
    if !(deg_per_px > 0.0) {
        return Err(Error::InvalidParam(format!("degrees per pixel must be positive, got {deg_per_px}")));
    }
    Ok(pixel_distance * deg_per_px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Float,
    FloatFakeQuant,
    Integer,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Float => "float",
            EvalMode::FloatFakeQuant => "float-fakequant",
            EvalMode::Integer => "integer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(EvalMode::Float),
            "float-fakequant" => Ok(EvalMode::FloatFakeQuant),
            "integer" => Ok(EvalMode::Integer),
            other => Err(Error::UnknownName {
                kind: "mode",
                name: other.to_string(),
                nearest: ["float", "float-fakequant", "integer"]
                    .iter()
                    .map(|n| (strsim::levenshtein(other, n), n.to_string()))
                    .min()
                    .map(|(_, n)| n),
            }),
        }
    }
}

/// A model to evaluate: float weights or a lowered integer model.
#[derive(Debug, Clone, Copy)]
pub enum EvalModel<'a> {
    Float { spec: &'a NetworkSpec, params: &'a Params<f32> },
    Quantized(&'a IntegerModel),
}

impl EvalModel<'_> {
    fn spec(&self) -> &NetworkSpec {
        match self {
            EvalModel::Float { spec, .. } => spec,
            EvalModel::Quantized(m) => &m.spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub index: usize,
    pub user: u32,
    pub label: PupilLabel,
    pub pred: PupilLabel,
    pub pred_class: Option<usize>,
    pub true_class: Option<usize>,
    pub pixel_distance: Option<f64>,
    pub mae: Option<f64>,
    pub block_distance: Option<f64>,
    pub angle_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub head: Head,
    pub records: Vec<EvalRecord>,
    pub mean_absolute_error: f64,
    pub mean_pixel_distance: f64,
    pub mean_block_distance: Option<f64>,
    pub mean_angle_error: f64,
    pub weight_bytes: usize,
    /// `[label visible][prediction visible]` counts.
    pub visibility: [[u64; 2]; 2],
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_class(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_CSV_HEADER: &str = "index,user,label_x,label_y,label_visible,pred_x,pred_y,pred_visible,pred_class,true_class,pixel_distance,mae,block_distance,angle_error";

impl EvalReport {
    fn aggregate(mode: EvalMode, head: Head, records: Vec<EvalRecord>, weight_bytes: usize) -> Self {
        let mut visibility = [[0u64; 2]; 2];
        for r in &records {
            visibility[r.label.visible as usize][r.pred.visible as usize] += 1;
        }
        EvalReport {
            mode,
            head,
            mean_absolute_error: mean(records.iter().map(|r| r.mae)),
            mean_pixel_distance: mean(records.iter().map(|r| r.pixel_distance)),
            mean_block_distance: (head == Head::Classification)
                .then(|| mean(records.iter().map(|r| r.block_distance))),
            mean_angle_error: mean(records.iter().map(|r| r.angle_error)),
            weight_bytes,
            visibility,
            records,
        }
    }

    /// Per-sample table. Floats use the shortest exact representation, so
    /// aggregates recomputed from the file match the report exactly.
    pub fn render_csv(&self) -> String {
        let mut o = String::from(REPORT_CSV_HEADER);
        o.push('\n');
        for r in &self.records {
            let _ = writeln!(
                o,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.user,
                r.label.x,
                r.label.y,
                r.label.visible as u8,
                r.pred.x,
                r.pred.y,
                r.pred.visible as u8,
                fmt_class(r.pred_class),
                fmt_class(r.true_class),
                fmt_opt(r.pixel_distance),
                fmt_opt(r.mae),
                fmt_opt(r.block_distance),
                fmt_opt(r.angle_error)
            );
        }
        o
    }

    /// Aggregate block in `key = value` form.
    pub fn render_summary(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "mode = \"{}\"", self.mode.name());
        let _ = writeln!(o, "head = \"{}\"", self.head.name());
        let _ = writeln!(o, "samples = {}", self.records.len());
        let _ = writeln!(o, "mean_absolute_error_px = {}", self.mean_absolute_error);
        let _ = writeln!(o, "mean_pixel_distance_px = {}", self.mean_pixel_distance);
        if let Some(b) = self.mean_block_distance {
            let _ = writeln!(o, "mean_block_distance_px = {b}");
        }
        let _ = writeln!(o, "mean_angle_error_deg = {}", self.mean_angle_error);
        let _ = writeln!(o, "weight_bytes = {}", self.weight_bytes);
        let v = self.visibility;
        let _ = writeln!(
            o,
            "visibility = {{ visible_as_visible = {}, visible_as_hidden = {}, hidden_as_visible = {}, hidden_as_hidden = {} }}",
            v[1][1], v[1][0], v[0][1], v[0][0]
        );
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub deg_per_px: f64,
    pub input_exponent: i32,
    pub grid: GridSpec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            deg_per_px: DEFAULT_DEG_PER_PX,
            input_exponent: DEFAULT_INPUT_EXPONENT,
            grid: GridSpec::default(),
        }
    }
}

fn decode_output(head: Head, out: &[f64], grid: &GridSpec) -> Result<(PupilLabel, Option<usize>)> {
    match head {
        Head::Regression => Ok((PupilLabel::visible(out[0] * grid.roi_width, out[1] * grid.roi_height), None)),
        Head::Classification => {
            let mut best = 0;
            for (i, v) in out.iter().enumerate() {
                if *v > out[best] {
                    best = i;
                }
            }
            let pred = match cell_to_center(best, grid)? {
                Some((x, y)) => PupilLabel::visible(x, y),
                None => PupilLabel::hidden(),
            };
            Ok((pred, Some(best)))
        }
    }
}

/// Runs the chosen inference path over every sample.
pub fn evaluate(model: EvalModel<'_>, samples: &[Sample], mode: EvalMode, opts: &EvalOptions) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    angle_error(0.0, opts.deg_per_px)?;
    let spec = model.spec().clone();
    let encoder = InputEncoder::new(&spec, opts.input_exponent);
    let grid = opts.grid;
    let (fq_params, act_quant) = match (model, mode) {
        (EvalModel::Quantized(m), EvalMode::Float) => (Some(m.dequantize()), None),
        (EvalModel::Quantized(m), EvalMode::FloatFakeQuant) => (Some(m.dequantize()), Some(m.act_quant())),
        (EvalModel::Quantized(m), EvalMode::Integer) if m.input_exponent != opts.input_exponent => {
            return Err(Error::Config(format!(
                "model input exponent {} differs from evaluation setting {}",
                m.input_exponent, opts.input_exponent
            )))
        }
        (EvalModel::Float { .. }, EvalMode::FloatFakeQuant | EvalMode::Integer) => {
            return Err(Error::Config(format!("{} evaluation needs a quantized model", mode.name())))
        }
        _ => (None, None),
    };
    let weight_bytes = match model {
        EvalModel::Float { spec, .. } => 4 * spec.param_count(),
        EvalModel::Quantized(m) => spec
            .param_layers()
            .iter()
            .zip(&m.layers)
            .map(|(l, q)| (l.param_count() * q.quant.weight_bits as usize).div_ceil(8))
            .sum(),
    };
    let records: Vec<EvalRecord> = samples
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            let out: Vec<f64> = match (model, mode) {
                (EvalModel::Float { spec, params }, _) => {
                    let x = encoder.encode::<f32>(&s.frame)?;
                    predict(spec, params, &x, None)?.into_iter().map(f64::from).collect()
                }
                (EvalModel::Quantized(m), EvalMode::Integer) => {
                    let x = encoder.encode_i8(&s.frame)?;
                    let scale = m.output_scale();
                    int_forward(m, &x)?.into_iter().map(|a| a as f64 * scale).collect()
                }
                (EvalModel::Quantized(m), _) => {
                    let x = encoder.encode::<f64>(&s.frame)?;
                    predict(&m.spec, fq_params.as_ref().unwrap(), &x, act_quant.as_deref())?
                }
            };
            let (pred, pred_class) = decode_output(spec.head, &out, &grid)?;
            let true_class = match spec.head {
                Head::Classification => Some(label_to_cell(s.label.x, s.label.y, s.label.visible, &grid)?),
                Head::Regression => None,
            };
            let scored = pred.visible && s.label.visible;
            let px = scored.then(|| pixel_distance(&pred, &s.label)).transpose()?;
            let block = match (pred_class, true_class) {
                (Some(p), Some(t)) if p != grid.not_visible() && t != grid.not_visible() => {
                    Some(block_distance(p, t, &grid)?)
                }
                _ => None,
            };
            Ok(EvalRecord {
                index,
                user: s.user,
                label: s.label,
                pred,
                pred_class,
                true_class,
                pixel_distance: px,
                mae: scored.then(|| mae(&pred, &s.label)).transpose()?,
                block_distance: block,
                angle_error: px.map(|d| angle_error(d, opts.deg_per_px)).transpose()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::aggregate(mode, spec.head, records, weight_bytes))
}

/// Label counts per ROI pixel, row-major `ROI_HEIGHT x ROI_WIDTH`.
pub fn heatmap(samples: &[Sample]) -> Vec<u32> {
    let (w, h) = (ROI_WIDTH as usize, ROI_HEIGHT as usize);
    let mut grid = vec![0u32; w * h];
    for s in samples.iter().filter(|s| s.label.visible) {
        let x = (s.label.x.floor().max(0.0) as usize).min(w - 1);
        let y = (s.label.y.floor().max(0.0) as usize).min(h - 1);
        grid[y * w + x] += 1;
    }
    grid
}

pub fn render_heatmap(counts: &[u32]) -> String {
    let mut o = String::new();
    for row in counts.chunks(ROI_WIDTH as usize) {
        let cells: Vec<String> = row.iter().map(u32::to_string).collect();
        o.push_str(&cells.join(","));
        o.push('\n');
    }
    o
}

pub fn emit_heatmap(samples: &[Sample], path: &Path) -> Result<()> {
    std::fs::write(path, render_heatmap(&heatmap(samples))).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let a = PupilLabel::visible(10.0, 20.0);
        let b = PupilLabel::visible(13.0, 24.0);
        assert_eq!(pixel_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(pixel_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(mae(&a, &b).unwrap(), 3.5);
        assert!(pixel_distance(&a, &PupilLabel::hidden()).is_err());
        assert!((angle_error(4.05, 0.763).unwrap() - 3.09).abs() < 0.005);
        assert_eq!(angle_error(0.0, DEFAULT_DEG_PER_PX).unwrap(), 0.0);
        assert!(angle_error(1.0, 0.0).is_err());
    }

    #[test]
    fn block_distance_examples() {
        let g = GridSpec::default();
        assert_eq!(block_distance(30, 30, &g).unwrap(), 0.0);
        assert!((block_distance(30, 31, &g).unwrap() - 157.0 / 24.0).abs() < 1e-12);
        assert!(block_distance(576, 3, &g).is_err());
    }

    #[test]
    fn heatmap_counts_visible_labels() {
        use crate::framing::EventFrame;
        let mk = |l| Sample { user: 1, frame: EventFrame::zeros(157, 90), label: l };
        let samples = vec![mk(PupilLabel::visible(10.0, 20.0)), mk(PupilLabel::hidden())];
        let h = heatmap(&samples);
        assert_eq!(h[20 * 157 + 10], 1);
        assert_eq!(h.iter().sum::<u32>(), 1);
        let text = render_heatmap(&h);
        assert_eq!(text.lines().count(), 90);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 157);
    }
}
