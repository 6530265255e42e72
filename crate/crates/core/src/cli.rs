//! `kldf` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baseline::{self, ProbeSpec, SweepSettings};
use crate::detect::{self, SegmentPolicy};
use crate::grid::{self, AxialBoundary, GridFormat, ScanGrid};
use crate::kld::{self, FilterConfig, KldMap, LogBase, Smoothing};
use crate::render::{self, ColorMapSpec, Palette, Scale};
use crate::synth::{self, Feature, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kldf", version, about = "Windowed KL-divergence anomaly filter for proximity-sensor scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic pipe scan.
    Synth(SynthArgs),
    /// Map every sample to the divergence of its window from the baseline.
    Filter(FilterArgs),
    /// Map every sample to the Shannon entropy of its window.
    Entropy(EntropyArgs),
    /// Segment a map into anomalies and weld bands.
    Detect(DetectArgs),
    /// Baseline sensitivity against the share of anomaly samples.
    Sensitivity(SensitivityArgs),
    /// Filter and detect over a grid of window sizes.
    Sweep(SweepArgs),
    /// Write a map or scan as a PGM/PPM image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Layout file (TOML); the reference layout when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output scan (.csv, or .bin/.kldg for binary).
    #[arg(long)]
    out: PathBuf,
    /// Override the layout's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the ground-truth footprint as PGM (0 background,
    /// 1 + k for hole k, 255 weld).
    #[arg(long)]
    truth_mask: Option<PathBuf>,
    /// Also write the effective layout as TOML, e.g. for `detect --truth`.
    #[arg(long)]
    save_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SmoothingArg {
    /// Ignore window bins the baseline does not cover.
    Skip,
    /// Add 1/(10N) to every baseline bin (see --epsilon).
    Epsilon,
    /// Jensen-Shannon divergence instead of KL.
    Js,
    /// Infinite divergence for uncovered bins.
    Strict,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    /// Slide end windows inward so every window keeps 2l+1 rows.
    Shift,
    /// Truncate windows at the scan ends.
    Clip,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogBaseArg {
    E,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Axial window half-size.
    #[arg(long, default_value_t = 60)]
    l: usize,
    /// Circumferential window half-size.
    #[arg(long, default_value_t = 1)]
    w: usize,
    /// Bins of each window histogram.
    #[arg(long, default_value_t = 60)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Shift)]
    boundary: BoundaryArg,
    #[arg(long, value_enum, default_value_t = LogBaseArg::E)]
    log_base: LogBaseArg,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Input scan.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output map (.csv, or .bin/.kldg).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    /// Bins of the baseline histogram.
    #[arg(long, default_value_t = 67)]
    k: usize,
    #[arg(long, value_enum, default_value_t = SmoothingArg::Skip)]
    smoothing: SmoothingArg,
    /// Additive constant for --smoothing epsilon (default 1/(10N)).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Build the baseline from this noise-only scan instead of the input.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Otsu's method on the map histogram.
    Otsu,
    /// Mean plus --sigma standard deviations.
    MeanSigma,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input map.
    #[arg(long = "in")]
    input: PathBuf,
    /// Report file: CSV when it ends in .csv, key=value text otherwise.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyArg::Otsu)]
    policy: PolicyArg,
    /// Multiplier for --policy mean-sigma.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Axial half-size of the window that produced the map; sets the
    /// smallest component kept.
    #[arg(long, default_value_t = 60)]
    l: usize,
    /// Smallest component kept, in cells (overrides the --l rule).
    #[arg(long)]
    min_area: Option<usize>,
    /// Score the report against this layout and print the result.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    /// Layout whose hole pattern is replicated; the reference layout
    /// without its weld when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target anomaly fractions, increasing.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.005,0.01,0.02,0.05,0.1,0.15,0.2")]
    fractions: Vec<f64>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Bins of both baselines.
    #[arg(long, default_value_t = 67)]
    k: usize,
    /// Bins of the probe window histogram.
    #[arg(long, default_value_t = 60)]
    bins: usize,
    /// Rows of the noise-only calibration scan.
    #[arg(long, default_value_t = 10)]
    noise_rows: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Input scan.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,60,200")]
    l_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,3")]
    w_list: Vec<usize>,
    /// Directory for maps, reports and summary.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 67)]
    k: usize,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    /// Layout the scan came from; adds detection scores to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PaletteArg {
    Grayscale,
    Heat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Linear,
    Rank,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output image (P5 for grayscale, P6 for heat).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PaletteArg::Heat)]
    palette: PaletteArg,
    #[arg(long, value_enum, default_value_t = ScaleArg::Linear)]
    scale: ScaleArg,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
}

/// A failure with its exit code and one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::data(e.to_string())
}

/// Runs one invocation; standard output receives informational lines.
pub fn run<I, T>(argv: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(lines) => {
            let _ = stdout.write_all(lines.as_bytes());
            EXIT_OK
        }
        Err(f) => {
            eprintln!("kldf: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<String, Failure> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn read_layout(path: Option<&Path>) -> Result<SynthConfig, Failure> {
    match path {
        None => Ok(synth::paper_layout()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::data(format!("cannot read {}: {e}", p.display())))?;
            SynthConfig::from_toml(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))
        }
    }
}

fn read_grid(path: &Path) -> Result<ScanGrid, Failure> {
    grid::load_grid(path, GridFormat::from_path(path)).map_err(data)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn write_map(map: &KldMap, path: &Path) -> Result<(), Failure> {
    let infinite = map.infinite_cells();
    if infinite > 0 {
        return Err(Failure::data(format!(
            "map has {infinite} infinite cells; choose a smoothing other than strict"
        )));
    }
    let g = map.to_grid().map_err(data)?;
    grid::save_grid(&g, path, GridFormat::from_path(path)).map_err(data)
}

fn filter_config(window: &WindowArgs, k: usize, smoothing: Smoothing) -> FilterConfig {
    FilterConfig {
        l: window.l,
        w: window.w,
        k,
        bins_local: window.bins,
        log_base: match window.log_base {
            LogBaseArg::E => LogBase::Natural,
            LogBaseArg::Two => LogBase::Base2,
        },
        smoothing,
        boundary: match window.boundary {
            BoundaryArg::Shift => AxialBoundary::Shift,
            BoundaryArg::Clip => AxialBoundary::Clip,
        },
    }
}

fn cmd_synth(a: SynthArgs) -> Result<String, Failure> {
    let mut cfg = read_layout(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let g = synth::generate_scan(&cfg).map_err(data)?;
    grid::save_grid(&g, &a.out, GridFormat::from_path(&a.out)).map_err(data)?;
    if let Some(mask_path) = &a.truth_mask {
        let levels: Vec<u8> = cfg
            .feature_mask()
            .iter()
            .map(|f| match f {
                Feature::Background => 0,
                Feature::Hole(k) => (1 + k).min(254) as u8,
                Feature::Weld => 255,
            })
            .collect();
        write_file(mask_path, &render::pgm_bytes(&levels, cfg.rows(), cfg.cols()))?;
    }
    if let Some(p) = &a.save_config {
        write_file(p, cfg.to_toml().map_err(data)?.as_bytes())?;
    }
    Ok(format!(
        "wrote {}x{} scan, anomaly fraction {:.6}\n",
        cfg.rows(),
        cfg.cols(),
        cfg.anomaly_fraction()
    ))
}

fn cmd_filter(a: FilterArgs) -> Result<String, Failure> {
    let g = read_grid(&a.input)?;
    let base_grid = match &a.baseline {
        Some(p) => read_grid(p)?,
        None => g.clone(),
    };
    let q = baseline::baseline_from_all(&base_grid, a.k).map_err(data)?;
    let smoothing = match a.smoothing {
        SmoothingArg::Skip => Smoothing::SkipZeroTerms,
        SmoothingArg::Js => Smoothing::JensenShannon,
        SmoothingArg::Strict => Smoothing::Strict,
        SmoothingArg::Epsilon => Smoothing::AdditiveEpsilon(
            a.epsilon
                .unwrap_or_else(|| Smoothing::default_epsilon(base_grid.values().len() as u64)),
        ),
    };
    if a.epsilon.is_some() && !matches!(a.smoothing, SmoothingArg::Epsilon) {
        return Err(Failure::usage("--epsilon only applies to --smoothing epsilon"));
    }
    let config = filter_config(&a.window, a.k, smoothing);
    let map = kld::local_kld_map(&g, &q, &config).map_err(data)?;
    write_map(&map, &a.out)?;
    Ok(summary_line(&map))
}

fn cmd_entropy(a: EntropyArgs) -> Result<String, Failure> {
    let g = read_grid(&a.input)?;
    let config = filter_config(&a.window, FilterConfig::default().k, Smoothing::SkipZeroTerms);
    let map = kld::local_entropy_map(&g, &config).map_err(data)?;
    write_map(&map, &a.out)?;
    Ok(summary_line(&map))
}

fn summary_line(map: &KldMap) -> String {
    let (lo, hi) = map
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    format!("map {}x{} min {lo:.6} max {hi:.6}\n", map.rows(), map.cols())
}

fn cmd_detect(a: DetectArgs) -> Result<String, Failure> {
    let g = read_grid(&a.input)?;
    let config = FilterConfig {
        l: a.l,
        ..FilterConfig::default()
    };
    let map = KldMap::from_grid(g, config);
    let policy = match a.policy {
        PolicyArg::Otsu => SegmentPolicy::Otsu,
        PolicyArg::MeanSigma => SegmentPolicy::MeanPlusSigma(a.sigma),
    };
    let min_area = a.min_area.unwrap_or_else(|| detect::min_component_area(&config));
    let report = detect::segment_with(&map, policy, min_area).map_err(data)?;
    let body = if a.report.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        detect::report_to_csv(&report)
    } else {
        detect::report_to_text(&report)
    };
    write_file(&a.report, body.as_bytes())?;
    let mut out = format!(
        "anomalies {} welds {} threshold {:.6}\n",
        report.anomalies.len(),
        report.welds.len(),
        report.threshold_used
    );
    if let Some(t) = &a.truth {
        let truth = read_layout(Some(t))?;
        let s = detect::score_against_truth(&report, &truth).map_err(data)?;
        out += &score_line(&s);
    }
    Ok(out)
}

fn score_line(s: &detect::DetectionScore) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.4}"));
    format!(
        "tp {} fp {} fn {} welds {} rank_corr {} depth_corr {}\n",
        s.true_positives,
        s.false_positives,
        s.false_negatives,
        s.welds_reported,
        fmt(s.rank_correlation),
        fmt(s.depth_correlation)
    )
}

fn cmd_sensitivity(a: SensitivityArgs) -> Result<String, Failure> {
    let cfg = match &a.config {
        Some(p) => read_layout(Some(p))?,
        None => {
            let mut c = synth::paper_layout();
            c.weld = None;
            c
        }
    };
    let probe = ProbeSpec::half_noise(&cfg, a.bins).map_err(data)?;
    let settings = SweepSettings {
        k: a.k,
        noise_reference_rows: a.noise_rows,
    };
    let reports = baseline::sensitivity_sweep(&cfg, &a.fractions, &probe, &settings).map_err(data)?;
    write_file(&a.out, baseline::sweep_to_csv(&reports).as_bytes())?;
    let description = reports.first().map(|r| r.probe_description.clone()).unwrap_or_default();
    Ok(format!("probe: {description}\n"))
}

fn cmd_sweep(a: SweepArgs) -> Result<String, Failure> {
    let g = read_grid(&a.input)?;
    let truth = match &a.truth {
        Some(p) => Some(read_layout(Some(p))?),
        None => None,
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let q = baseline::baseline_from_all(&g, a.k).map_err(data)?;
    let mut summary = String::from("l,w,anomalies,welds,threshold,tp,fp,fn,rank_corr,depth_corr\n");
    for &l in &a.l_list {
        for &w in &a.w_list {
            let config = FilterConfig {
                l,
                w,
                k: a.k,
                bins_local: a.bins,
                ..FilterConfig::default()
            };
            let map = kld::local_kld_map(&g, &q, &config).map_err(data)?;
            write_map(&map, &a.out_dir.join(format!("map_l{l}_w{w}.csv")))?;
            let report = detect::segment(&map, SegmentPolicy::Otsu).map_err(data)?;
            write_file(
                &a.out_dir.join(format!("report_l{l}_w{w}.txt")),
                detect::report_to_text(&report).as_bytes(),
            )?;
            let _ = write!(
                summary,
                "{l},{w},{},{},{:.6}",
                report.anomalies.len(),
                report.welds.len(),
                report.threshold_used
            );
            match &truth {
                Some(t) => {
                    let s = detect::score_against_truth(&report, t).map_err(data)?;
                    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
                    let _ = writeln!(
                        summary,
                        ",{},{},{},{},{}",
                        s.true_positives,
                        s.false_positives,
                        s.false_negatives,
                        fmt(s.rank_correlation),
                        fmt(s.depth_correlation)
                    );
                }
                None => summary.push_str(",,,,,\n"),
            }
        }
    }
    write_file(&a.out_dir.join("summary.csv"), summary.as_bytes())?;
    Ok(summary)
}

fn cmd_render(a: RenderArgs) -> Result<String, Failure> {
    let g = read_grid(&a.input)?;
    let spec = ColorMapSpec {
        palette: match a.palette {
            PaletteArg::Grayscale => Palette::Grayscale,
            PaletteArg::Heat => Palette::Heat,
        },
        scale: match a.scale {
            ScaleArg::Linear => Scale::Linear,
            ScaleArg::Rank => Scale::Rank,
        },
        lo: a.lo,
        hi: a.hi,
    };
    if let (Some(lo), Some(hi)) = (a.lo, a.hi) {
        if !(lo < hi) {
            return Err(Failure::usage(format!("--lo must be below --hi ({lo} >= {hi})")));
        }
    }
    let clamped = render::render_map(g.values(), g.rows(), g.cols(), &spec, &a.out).map_err(data)?;
    let mut out = format!("wrote {}x{} image\n", g.cols(), g.rows());
    if clamped > 0 {
        out += &format!("clamped {clamped} infinite cells\n");
    }
    Ok(out)
}
