//! Estimation pipeline, per-method segmentation and the benchmark harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use fracseg_core::multiscale::{dwt2, leaders_with, GammaPlacement, LeaderStack, Wavelet};
use fracseg_core::regression::{estimate_h, gaussian_smooth, ols_weights};
use fracseg_core::scoring::{histogram, misclassification};
use fracseg_core::segmenters::{potts_segment, threshold_histogram, tv_denoise, tvw_joint, SolverConfig};
use fracseg_core::{Field2D, LabelMask};

use crate::error::{Error, Result};
use crate::gridio;
use crate::synthesis::{decimate_mask, synth_piecewise, Geometry, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    PerCoefficient,
    OuterScale,
}

/// Wavelet-leader estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub wavelet: String,
    pub j1: usize,
    pub j2: usize,
    pub gamma: f64,
    pub placement: Placement,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            wavelet: "db2".into(),
            j1: 1,
            j2: 4,
            gamma: 1.0,
            placement: Placement::PerCoefficient,
        }
    }
}

impl EstimatorConfig {
    pub fn stack(&self, field: &Field2D) -> Result<LeaderStack> {
        let wavelet = Wavelet::from_name(&self.wavelet)?;
        let pyramid = dwt2(field, self.j2, wavelet)?;
        let placement = match self.placement {
            Placement::PerCoefficient => GammaPlacement::PerCoefficient,
            Placement::OuterScale => GammaPlacement::OuterScale,
        };
        Ok(leaders_with(&pyramid, self.j1, self.j2, self.gamma, placement)?)
    }

    /// Leader stack and least-squares regularity estimate of `field`.
    pub fn analyze(&self, field: &Field2D) -> Result<(LeaderStack, Field2D)> {
        let stack = self.stack(field)?;
        let hhat = estimate_h(&stack, &ols_weights(self.j1, self.j2)?)?;
        Ok((stack, hhat))
    }
}

/// Serializable mirror of [`SolverConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub eta1: f64,
    pub eta2: f64,
    pub sigma: f64,
    pub tv_max_iter: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub outer_max: usize,
    pub outer_tol: f64,
    pub variances: Option<Vec<f64>>,
    pub hist_bins: usize,
    pub hist_smooth: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            eta1: c.eta1,
            eta2: c.eta2,
            sigma: c.sigma,
            tv_max_iter: c.tv_max_iter,
            max_iter: c.max_iter,
            tol: c.tol,
            outer_max: c.outer_max,
            outer_tol: c.outer_tol,
            variances: c.variances,
            hist_bins: c.hist_bins,
            hist_smooth: c.hist_smooth,
        }
    }
}

impl SolverSettings {
    pub fn to_core(&self) -> SolverConfig {
        SolverConfig {
            eta1: self.eta1,
            eta2: self.eta2,
            sigma: self.sigma,
            tv_max_iter: self.tv_max_iter,
            max_iter: self.max_iter,
            tol: self.tol,
            outer_max: self.outer_max,
            outer_tol: self.outer_tol,
            variances: self.variances.clone(),
            hist_bins: self.hist_bins,
            hist_smooth: self.hist_smooth,
            monitor_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Gaussian smoothing of the estimate, parameter = standard deviation in pixels.
    Smooth,
    /// TV denoising of the estimate.
    Tv,
    /// Joint estimation of regularity and regression weights.
    Tvw,
    /// Relaxed Potts labeling of the estimate.
    Rms,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Smooth, Method::Tv, Method::Tvw, Method::Rms];

    pub fn name(self) -> &'static str {
        match self {
            Method::Smooth => "smooth",
            Method::Tv => "tv",
            Method::Tvw => "tvw",
            Method::Rms => "rms",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown method {name:?} (smooth, tv, tvw, rms)")))
    }
}

/// Solver diagnostics of one segmentation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_change: f64,
    pub thresholds: Vec<f64>,
    pub means: Vec<f64>,
    pub outer_rounds: usize,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub mask: LabelMask,
    /// The map the labels were read from (class means for the Potts labeling).
    pub map: Field2D,
    pub summary: RunSummary,
}

fn thresholded(map: Field2D, q: u32, cfg: &SolverConfig, mut summary: RunSummary) -> Result<Segmentation> {
    let t = threshold_histogram(&map, q, cfg)?;
    summary.thresholds = t.thresholds;
    Ok(Segmentation {
        mask: t.mask,
        map,
        summary,
    })
}

/// Segments into `q` classes with `method` at parameter `param`
/// (lambda, or the smoothing standard deviation).
pub fn segment(
    method: Method,
    param: f64,
    stack: &LeaderStack,
    hhat: &Field2D,
    q: u32,
    cfg: &SolverConfig,
) -> Result<Segmentation> {
    match method {
        Method::Smooth => {
            let map = gaussian_smooth(hhat, param)?;
            let summary = RunSummary {
                converged: true,
                ..RunSummary::default()
            };
            thresholded(map, q, cfg, summary)
        }
        Method::Tv => {
            let out = tv_denoise(hhat, param, cfg)?;
            let summary = RunSummary {
                iterations: out.info.iterations,
                converged: out.info.converged,
                final_change: out.info.final_change,
                ..RunSummary::default()
            };
            thresholded(out.h, q, cfg, summary)
        }
        Method::Tvw => {
            let out = tvw_joint(stack, param, cfg)?;
            let summary = RunSummary {
                iterations: out.info.iterations,
                converged: out.info.converged,
                final_change: out.info.final_change,
                tau: Some(out.tau),
                ..RunSummary::default()
            };
            thresholded(out.h, q, cfg, summary)
        }
        Method::Rms => {
            let out = potts_segment(hhat, q, param, cfg)?;
            let map = Field2D::new(
                hhat.rows(),
                hhat.cols(),
                out.labels.labels().iter().map(|&l| out.means[l as usize]).collect(),
            )?;
            Ok(Segmentation {
                mask: out.labels,
                map,
                summary: RunSummary {
                    iterations: out.info.iterations,
                    converged: out.info.converged && out.outer_converged,
                    final_change: out.info.final_change,
                    thresholds: Vec::new(),
                    means: out.means,
                    outer_rounds: out.outer_rounds,
                    tau: None,
                },
            })
        }
    }
}

/// One method with its parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodGrid {
    pub method: Method,
    pub params: Vec<f64>,
}

/// What to write per run besides the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitConfig {
    pub masks: bool,
    pub histograms: bool,
    pub maps: bool,
    pub histogram_bins: usize,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self {
            masks: true,
            histograms: true,
            maps: false,
            histogram_bins: 128,
        }
    }
}

impl EmitConfig {
    pub fn nothing() -> Self {
        Self {
            masks: false,
            histograms: false,
            maps: false,
            histogram_bins: 128,
        }
    }
}

/// Synthetic texture family of an experiment; realization `r` uses seed `seed_base + r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSetup {
    pub size: usize,
    pub h_values: Vec<f64>,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthSetup,
    pub methods: Vec<MethodGrid>,
    pub realizations: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub emit: EmitConfig,
    /// Output directory; `None` keeps everything in memory.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods".into()));
        }
        for g in &self.methods {
            if g.params.is_empty() {
                return Err(Error::Config(format!("empty parameter grid for {}", g.method.name())));
            }
        }
        if self.synth.h_values.is_empty() {
            return Err(Error::Config("no regularity values".into()));
        }
        self.solver.to_core().validate()?;
        Ok(())
    }

    pub fn q(&self) -> u32 {
        self.synth.h_values.len() as u32
    }
}

/// One (method, parameter, realization) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub param: f64,
    pub realization: usize,
    pub rate: Option<f64>,
    pub seconds: f64,
    pub converged: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Rate statistics over realizations for one (method, parameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub param: f64,
    pub median: Option<f64>,
    pub lower_quartile: Option<f64>,
    pub upper_quartile: Option<f64>,
    pub failures: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestParam {
    pub method: Method,
    pub param: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<CellSummary>,
    pub best: Vec<BestParam>,
}

impl ExperimentReport {
    pub fn best_for(&self, method: Method) -> Option<&BestParam> {
        self.best.iter().find(|b| b.method == method)
    }

    pub fn summary(&self, method: Method, param: f64) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.method == method && s.param == param)
    }

    /// `method,param,realization,rate,seconds,converged` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,param,realization,rate,seconds,converged\n");
        for c in &self.cells {
            let rate = c.rate.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.method.name(),
                c.param,
                c.realization,
                rate,
                c.seconds,
                c.converged
            ));
        }
        out
    }
}

/// Linearly interpolated quantile of an ascending sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(cfg: &ExperimentConfig, cells: &[CellResult]) -> (Vec<CellSummary>, Vec<BestParam>) {
    let mut summaries = Vec::new();
    let mut best = Vec::new();
    for grid in &cfg.methods {
        let mut best_here: Option<BestParam> = None;
        for &param in &grid.params {
            let mine: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.method == grid.method && c.param == param)
                .collect();
            let mut rates: Vec<f64> = mine.iter().filter_map(|c| c.rate).collect();
            rates.sort_by(f64::total_cmp);
            let stat = |p| (!rates.is_empty()).then(|| quantile(&rates, p));
            let s = CellSummary {
                method: grid.method,
                param,
                median: stat(0.5),
                lower_quartile: stat(0.25),
                upper_quartile: stat(0.75),
                failures: mine.iter().filter(|c| c.rate.is_none()).count(),
                unconverged: mine.iter().filter(|c| !c.converged).count(),
            };
            if let Some(m) = s.median {
                if best_here.as_ref().is_none_or(|b| m < b.median) {
                    best_here = Some(BestParam {
                        method: grid.method,
                        param,
                        median: m,
                    });
                }
            }
            summaries.push(s);
        }
        best.extend(best_here);
    }
    (summaries, best)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn histogram_csv(map: &Field2D, bins: usize) -> String {
    let mut out = String::from("center,count\n");
    for (center, count) in histogram(map, bins) {
        out.push_str(&format!("{center},{count}\n"));
    }
    out
}

/// Runs every method over its grid on `realizations` synthetic textures.
///
/// Failing runs are recorded with `rate = None` and the error message; the
/// experiment carries on. With an output directory, writes `report.json`,
/// `results.csv` and the per-run artifacts selected in `emit`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let q = cfg.q();
    let solver = cfg.solver.to_core();
    if let Some(dir) = &cfg.output {
        create_dir(dir)?;
        if cfg.emit.masks {
            create_dir(&dir.join("masks"))?;
        }
        if cfg.emit.histograms {
            create_dir(&dir.join("histograms"))?;
        }
        if cfg.emit.maps {
            create_dir(&dir.join("maps"))?;
        }
    }

    let mut cells = Vec::new();
    for r in 0..cfg.realizations {
        let synth = SynthConfig {
            size: cfg.synth.size,
            h_values: cfg.synth.h_values.clone(),
            seed: cfg.seed_base.wrapping_add(r as u64),
            geometry: cfg.synth.geometry.clone(),
        };
        let (field, truth_full) = synth_piecewise(&synth)?;
        let (stack, hhat) = cfg.estimator.analyze(&field)?;
        let truth = decimate_mask(&truth_full, field.rows() / hhat.rows())?;
        if let (Some(dir), true) = (&cfg.output, cfg.emit.histograms) {
            write_text(
                &dir.join("histograms").join(format!("hhat_r{r}.csv")),
                &histogram_csv(&hhat, cfg.emit.histogram_bins),
            )?;
        }
        for grid in &cfg.methods {
            for (pi, &param) in grid.params.iter().enumerate() {
                let start = Instant::now();
                let outcome = segment(grid.method, param, &stack, &hhat, q, &solver)
                    .and_then(|s| Ok((misclassification(&s.mask, &truth, &hhat)?, s)));
                let seconds = start.elapsed().as_secs_f64();
                let cell = match outcome {
                    Ok((rate, seg)) => {
                        log::info!(
                            "{} param={param} r={r}: rate={rate:.4} iters={} {:.2}s",
                            grid.method.name(),
                            seg.summary.iterations,
                            seconds
                        );
                        if let Some(dir) = &cfg.output {
                            let stem = format!("{}_p{pi}_r{r}", grid.method.name());
                            if cfg.emit.masks {
                                gridio::write_mask(&seg.mask, dir.join("masks").join(format!("{stem}.pgm")))?;
                            }
                            if cfg.emit.histograms {
                                write_text(
                                    &dir.join("histograms").join(format!("{stem}.csv")),
                                    &histogram_csv(&seg.map, cfg.emit.histogram_bins),
                                )?;
                            }
                            if cfg.emit.maps {
                                gridio::write_field(&seg.map, dir.join("maps").join(format!("{stem}.f2d")))?;
                            }
                        }
                        CellResult {
                            method: grid.method,
                            param,
                            realization: r,
                            rate: Some(rate),
                            seconds,
                            converged: seg.summary.converged,
                            iterations: seg.summary.iterations,
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::warn!("{} param={param} r={r} failed: {e}", grid.method.name());
                        CellResult {
                            method: grid.method,
                            param,
                            realization: r,
                            rate: None,
                            seconds,
                            converged: false,
                            iterations: 0,
                            error: Some(e.to_string()),
                        }
                    }
                };
                cells.push(cell);
            }
        }
    }

    let (summaries, best) = summarize(cfg, &cells);
    let report = ExperimentReport {
        config: cfg.clone(),
        cells,
        summaries,
        best,
    };
    if let Some(dir) = &cfg.output {
        write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
        write_text(&dir.join("results.csv"), &report.to_csv())?;
    }
    Ok(report)
}

/// `n` points spaced evenly in log scale from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 1.0, 3);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()).unwrap(), m);
        }
        assert!(Method::from_name("kmeans").is_err());
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{"synth": {"size": 64, "h_values": [0.5, 0.7], "geometry": {"shapes": [
                {"kind": "ellipse", "cr": 32, "cc": 32, "a": 20, "b": 16}]}},
                "methods": [{"method": "tv", "params": [0.1]}], "realizations": 1}"#,
        )
        .unwrap();
        assert_eq!(cfg.estimator, EstimatorConfig::default());
        assert_eq!(cfg.solver, SolverSettings::default());
        assert_eq!(cfg.q(), 2);
        assert!(ExperimentConfig::from_json(r#"{"synth": 1}"#).is_err());
    }
}
